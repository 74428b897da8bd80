#!/usr/bin/env python3
"""End-to-end synthetic run: bundled profiler samples -> schedule -> execution.

Ingests the sample profiles shipped with the package, generates a one-member
schedule, runs it as local stub processes at desk scale, and prints the log.
"""

import argparse
import sys
import tempfile
from pathlib import Path

from epsim.cli import main as cli_main
from epsim.datafiles import profiles_dir


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--desk-scale", type=float, default=1000.0)
    parser.add_argument("--parallelism", type=int, default=4)
    parser.add_argument("--io-scale", type=float, default=1.0)
    args = parser.parse_args()

    with tempfile.TemporaryDirectory(prefix="epsim-demo-") as tmp:
        tmp = Path(tmp)
        raw = sorted(str(p) for p in profiles_dir().iterdir())
        rc = cli_main(["ingest", *raw, "-o", str(tmp / "kjp")])
        if rc:
            return rc
        rc = cli_main(
            [
                "schedule",
                "--profiles", str(tmp / "kjp"),
                "--io-scale", str(args.io_scale),
                "-o", str(tmp / "member.kjs"),
            ]
        )
        if rc:
            return rc
        return cli_main(
            [
                "execute",
                "--schedule", str(tmp / "member.kjs"),
                "--parallelism", str(args.parallelism),
                "--desk-scale", str(args.desk_scale),
                "--workdir", str(tmp / "scratch"),
            ]
        )


if __name__ == "__main__":
    sys.exit(main())
