import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from epsim.datafiles import edges_path, measurements_path, profiles_dir, suite_model_path
from epsim.model import load_suite_model

GOLDEN_DIR = Path(__file__).parent / "golden"
HELP_COMMANDS = ["main", "ingest", "model", "report", "simulate", "whatif", "schedule", "execute"]


def run_cli(*argv, check=False):
    env = dict(os.environ, COLUMNS="80")
    proc = subprocess.run(
        [sys.executable, "-m", "epsim.cli", *argv],
        capture_output=True,
        text=True,
        env=env,
    )
    if check:
        assert proc.returncode == 0, proc.stderr
    return proc


@pytest.mark.parametrize("command", HELP_COMMANDS)
def test_help_matches_golden(command):
    argv = ["--help"] if command == "main" else [command, "--help"]
    proc = run_cli(*argv)
    assert proc.returncode == 0
    golden = (GOLDEN_DIR / f"help_{command}.txt").read_text()
    assert proc.stdout == golden


class TestReport:
    def test_totals_in_table(self):
        proc = run_cli("report", check=True)
        assert "146534.7" in proc.stdout
        assert "146000" in proc.stdout
        assert "230.9*n + 6639.6*N + 1.7" in proc.stdout

    def test_json_format(self):
        proc = run_cli("report", "--format", "json", check=True)
        doc = json.loads(proc.stdout)
        assert doc["total_kj"] == pytest.approx(146534.7)
        assert doc["fractions"]["Forecast"] == pytest.approx(0.971, abs=0.001)

    def test_csv_format_lists_jobs(self):
        proc = run_cli("report", "--format", "csv", check=True)
        lines = proc.stdout.splitlines()
        assert lines[0] == "job,category,energy_kj,contaminated,low_confidence"
        assert len(lines) == 17

    def test_member_override(self):
        proc = run_cli("report", "-N", "42", check=True)
        assert "279326.7" in proc.stdout

    def test_scatter_export(self, tmp_path):
        target = tmp_path / "scatter.csv"
        run_cli("report", "--scatter", str(target), check=True)
        lines = target.read_text().splitlines()
        assert lines[0] == "job,role,wallclock_s,energy_kj,power_kw"
        forecast = [l for l in lines if l.startswith("Forecast,control")]
        assert len(forecast) == 1

    def test_byte_identical_reruns(self):
        first = run_cli("report", "--format", "json", check=True)
        second = run_cli("report", "--format", "json", check=True)
        assert first.stdout == second.stdout


class TestSimulate:
    def test_unlimited_nodes_makespan(self):
        proc = run_cli("simulate", "--nodes", "unlimited", check=True)
        assert "makespan: 3536.2 s" in proc.stdout

    def test_event_log_export_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("simulate", "--events", str(a), check=True)
        run_cli("simulate", "--events", str(b), check=True)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == "instance_id,kind,time_s"

    def test_summary_json(self, tmp_path):
        target = tmp_path / "summary.json"
        run_cli("simulate", "--summary", str(target), check=True)
        doc = json.loads(target.read_text())
        assert doc["makespan_s"] == pytest.approx(3536.2)
        assert doc["critical_path_s"] == pytest.approx(3536.2)

    def test_bad_nodes_value(self):
        proc = run_cli("simulate", "--nodes", "many")
        assert proc.returncode == 1


class TestWhatif:
    def test_zero_category_control_path(self):
        proc = run_cli("whatif", "--zero-category", "Forecast", "--path", "control", check=True)
        assert "1.57" in proc.stdout

    def test_zero_category_both_paths(self):
        proc = run_cli("whatif", "--zero-category", "Forecast", check=True)
        assert "1.57" in proc.stdout
        assert "2.04" in proc.stdout

    def test_member_rescaling(self):
        proc = run_cli("whatif", "--n-prime", "2", "--N-prime", "42", check=True)
        assert "279326.7" in proc.stdout

    def test_scenario_file(self, tmp_path):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps({"speedup": {"Forecast": 2.0}}))
        proc = run_cli("whatif", "--scenario", str(scenario), check=True)
        assert "3536.2 s -> 2891.2 s" in proc.stdout

    def test_unknown_category_fails(self):
        proc = run_cli("whatif", "--zero-category", "Nonsense")
        assert proc.returncode == 1


class TestModelCommand:
    def test_rebuild_matches_bundled(self, tmp_path):
        out = tmp_path / "m.json"
        proc = run_cli(
            "model", "--measurements", str(measurements_path()),
            "--edges", str(edges_path()), "-o", str(out), check=True,
        )
        assert load_suite_model(out) == load_suite_model(suite_model_path())

    def test_cluster_override(self, tmp_path):
        cluster = tmp_path / "cluster.json"
        cluster.write_text(json.dumps({
            "node_count": 40,
            "cores_per_node": 36,
            "queues": {"np": {"exclusive_nodes": True, "max_concurrent_jobs": None},
                       "ns": {"exclusive_nodes": False, "max_concurrent_jobs": None}},
            "idle_power_kw": 0.25,
        }))
        out = tmp_path / "m.json"
        run_cli("model", "--cluster", str(cluster), "-o", str(out), check=True)
        model = load_suite_model(out)
        assert model.cluster.node_count == 40
        assert model.cluster.idle_power_kw == 0.25

    def test_validation_failure_exits_1(self, tmp_path):
        bad_edges = tmp_path / "edges.json"
        bad_edges.write_text(json.dumps({"edges": [
            {"from_job": "Forecast", "to_job": "NoSuchJob", "scope": "SameMember"}
        ]}))
        out = tmp_path / "m.json"
        proc = run_cli("model", "--edges", str(bad_edges), "-o", str(out))
        assert proc.returncode == 1
        assert "UnknownJobInEdge" in proc.stderr


class TestExitCodes:
    def test_usage_error_is_2(self):
        assert run_cli("frobnicate").returncode == 2

    def test_missing_required_flag_is_2(self):
        assert run_cli("execute").returncode == 2

    def test_broken_model_is_1(self, tmp_path):
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        assert run_cli("report", "--model", str(broken)).returncode == 1


class TestPipeline:
    def test_ingest_schedule_execute(self, tmp_path):
        kjp_dir = tmp_path / "kjp"
        raw = sorted(str(p) for p in profiles_dir().iterdir())
        run_cli("ingest", *raw, "-o", str(kjp_dir), check=True)
        assert len(list(kjp_dir.glob("*.kjp"))) == 16

        kjs = tmp_path / "suite.kjs"
        run_cli("schedule", "--profiles", str(kjp_dir), "-o", str(kjs), check=True)
        doc = json.loads(kjs.read_text())
        assert len(doc["jobs"]) == 16

        logfile = tmp_path / "run.json"
        proc = run_cli(
            "execute", "--schedule", str(kjs), "--inline", "--desk-scale", "1000000",
            "--parallelism", "4", "--workdir", str(tmp_path / "scratch"),
            "--log", str(logfile), check=True,
        )
        assert "16 ok, 0 failed, 0 skipped" in proc.stdout
        logged = json.loads(logfile.read_text())
        assert len(logged["jobs"]) == 16

    def test_execute_failure_exit_code(self, tmp_path):
        kjs = tmp_path / "f.kjs"
        kjs.write_text(json.dumps({
            "created_from": [], "scale": {"io_scale": 1.0, "compute_scale": 1.0},
            "jobs": [
                {"job_id": 0, "name": "boom", "depends_on": [],
                 "phases": [{"kind": "compute", "duration_s": 0.0}],
                 "metadata": {"fail": True}},
                {"job_id": 1, "name": "after", "depends_on": [0],
                 "phases": [{"kind": "compute", "duration_s": 0.0}]},
            ],
        }))
        proc = run_cli("execute", "--schedule", str(kjs), "--inline",
                       "--workdir", str(tmp_path / "scratch"))
        assert proc.returncode == 1
        assert "1 ok" not in proc.stdout
        assert "skipped" in proc.stdout
