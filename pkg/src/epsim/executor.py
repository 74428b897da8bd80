"""Schedule documents (.kjs) and the synthetic-workload executor.

A schedule document lists concrete stub jobs with integer ids, dependency
lists and synthetic phases. The executor runs them as local processes (one
stub per job) honoring dependencies, with a concurrency limit; the batch
system of a real cluster is deliberately out of scope, but the backend
boundary is explicit so another submission path can be added.
"""

from __future__ import annotations

import heapq
import json
import logging
import os
import subprocess
import sys
import tempfile
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import stub
from .errors import (
    CycleDetected,
    InvalidScale,
    JobFailed,
    MissingProfile,
    SchemaError,
    WorkdirUnwritable,
)
from .model import (
    ClusterSpec,
    DependencyEdge,
    EnergyTerm,
    EnsembleConfig,
    JobCategory,
    JobProfile,
    MemberRole,
    RepetitionSpec,
    SuiteModel,
    expand_instances,
    find_job_cycle,
)
from .profiles import Phase, PhaseKind, UnifiedJobProfile, phase_from_dict, phase_to_dict
from .whatif import Scenario

log = logging.getLogger(__name__)

SCRATCH_ENV_VAR = "EPSIM_SCRATCH"


@dataclass(frozen=True)
class ScheduledJob:
    job_id: int
    name: str
    depends_on: tuple[int, ...]
    phases: tuple[Phase, ...]
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScheduleDocument:
    jobs: tuple[ScheduledJob, ...]
    created_from: tuple[str, ...] = ()
    io_scale: float = 1.0
    compute_scale: float = 1.0

    def job(self, job_id: int) -> ScheduledJob:
        return self.jobs[job_id]


def _scaled_phase(phase: Phase, io_scale: float, compute_scale: float) -> Phase:
    if phase.kind is PhaseKind.COMPUTE:
        return replace(phase, duration_s=phase.duration_s * compute_scale)
    if phase.kind in (PhaseKind.IO_READ, PhaseKind.IO_WRITE):
        return replace(phase, bytes=int(round(phase.bytes * io_scale)))
    return phase  # exchange is logged, never performed, and never scaled


def generate_schedule(
    profiles: list[UnifiedJobProfile],
    edges: list[DependencyEdge],
    cfg: EnsembleConfig,
    scenario: Scenario | None = None,
    catalog: dict[str, JobProfile] | None = None,
) -> ScheduleDocument:
    """Expand profiled jobs over ensemble members into a schedule document.

    Every edge endpoint must have a profile. Without a catalog each profiled
    job runs once for every member; a catalog (job name -> JobProfile)
    supplies member roles and repetition instead.
    """
    scenario = scenario or Scenario()
    scenario.check()
    by_name = {p.job: p for p in profiles}
    for e in edges:
        for endpoint in (e.from_job, e.to_job):
            if endpoint not in by_name:
                raise MissingProfile(endpoint)
    cycle = find_job_cycle(sorted(by_name), tuple(edges))
    if cycle:
        raise CycleDetected(cycle)

    pseudo_jobs = []
    for name in sorted(by_name):
        base = catalog.get(name) if catalog else None
        pseudo_jobs.append(
            JobProfile(
                name=name,
                category=base.category if base else JobCategory.OTHER,
                role=base.role if base else MemberRole.ALL,
                queue="synthetic",
                cores_per_member=1,
                wallclock_ctrl_s=0.0,
                wallclock_pert_s=0.0,
                energy=EnergyTerm(),
                repetition=base.repetition if base else RepetitionSpec.single(),
            )
        )

    model = SuiteModel(
        ensemble=cfg,
        cluster=ClusterSpec(),
        jobs=tuple(pseudo_jobs),
        edges=tuple(edges),
    )
    graph = expand_instances(model)

    ids = {iid: k for k, iid in enumerate(graph.ids())}
    jobs = []
    for iid, inst in graph.instances.items():
        phases = tuple(
            _scaled_phase(p, scenario.io_scale, scenario.compute_scale)
            for p in by_name[inst.job].phases
        )
        jobs.append(
            ScheduledJob(
                job_id=ids[iid],
                name=inst.job,
                depends_on=tuple(sorted(ids[p] for p in graph.preds[iid])),
                phases=phases,
                metadata={"instance": iid, "member": inst.member, "slot": inst.slot},
            )
        )
    created_from = sorted({src for p in profiles for src in p.provenance} or {p.job for p in profiles})
    return ScheduleDocument(
        jobs=tuple(jobs),
        created_from=tuple(created_from),
        io_scale=scenario.io_scale,
        compute_scale=scenario.compute_scale,
    )


def topo_order(doc: ScheduleDocument) -> list[int]:
    """Deterministic topological order (Kahn, smallest id first)."""
    n = len(doc.jobs)
    ids = [j.job_id for j in doc.jobs]
    if sorted(ids) != list(range(n)):
        raise SchemaError(f"job ids must be dense 0..{n - 1}")
    succs: dict[int, list[int]] = {i: [] for i in ids}
    indeg = {i: 0 for i in ids}
    for j in doc.jobs:
        for dep in j.depends_on:
            if dep not in indeg:
                raise SchemaError(f"job {j.job_id} depends on unknown id {dep}")
            succs[dep].append(j.job_id)
            indeg[j.job_id] += 1
    heap = [i for i in ids if indeg[i] == 0]
    heapq.heapify(heap)
    order: list[int] = []
    while heap:
        i = heapq.heappop(heap)
        order.append(i)
        for s in succs[i]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, s)
    if len(order) != n:
        raise CycleDetected([str(i) for i in ids if indeg[i] > 0][:8])
    return order


def scale_schedule(doc: ScheduleDocument, io_factor: float, compute_factor: float) -> ScheduleDocument:
    """Multiply phase magnitudes; document scale metadata composes multiplicatively."""
    if io_factor < 0 or compute_factor < 0:
        raise InvalidScale(f"scale factors must be >= 0, got ({io_factor}, {compute_factor})")
    jobs = tuple(
        replace(j, phases=tuple(_scaled_phase(p, io_factor, compute_factor) for p in j.phases))
        for j in doc.jobs
    )
    return replace(
        doc,
        jobs=jobs,
        io_scale=doc.io_scale * io_factor,
        compute_scale=doc.compute_scale * compute_factor,
    )


# ---------------------------------------------------------------------------
# Execution


@dataclass
class RunLogEntry:
    job_id: int
    name: str
    status: str  # "ok" | "failed" | "skipped"
    exit_status: int | None
    start_wallclock: float | None
    end_wallclock: float | None
    bytes_read: int = 0
    bytes_written: int = 0


@dataclass
class RunLog:
    entries: list[RunLogEntry] = field(default_factory=list)
    workdir: str = ""
    parallelism: int = 1

    @property
    def ok(self) -> bool:
        return all(e.status == "ok" for e in self.entries)

    def by_id(self) -> dict[int, RunLogEntry]:
        return {e.job_id: e for e in self.entries}

    def to_dict(self) -> dict:
        return {
            "workdir": self.workdir,
            "parallelism": self.parallelism,
            "jobs": [
                {
                    "job_id": e.job_id,
                    "name": e.name,
                    "status": e.status,
                    "exit_status": e.exit_status,
                    "start_wallclock": e.start_wallclock,
                    "end_wallclock": e.end_wallclock,
                    "bytes_read": e.bytes_read,
                    "bytes_written": e.bytes_written,
                }
                for e in sorted(self.entries, key=lambda e: e.job_id)
            ],
        }


@dataclass(frozen=True)
class BackendResult:
    exit_code: int
    bytes_read: int = 0
    bytes_written: int = 0


class LocalProcessBackend:
    """Runs each stub job as a separate local Python process."""

    def __init__(self, desk_scale: float = 100.0, compute_ceiling_s: float = 30.0):
        if desk_scale <= 0:
            raise InvalidScale("desk_scale must be > 0")
        self.desk_scale = desk_scale
        self.compute_ceiling_s = compute_ceiling_s

    def _spec(self, job: ScheduledJob, workdir: Path) -> dict:
        phases = []
        for p in job.phases:
            entry = {"kind": p.kind.value, "bytes": p.bytes, "ranks": p.ranks}
            if p.kind is PhaseKind.COMPUTE:
                entry["duration_s"] = min(p.duration_s / self.desk_scale, self.compute_ceiling_s)
            phases.append(entry)
        return {
            "job_id": job.job_id,
            "name": job.name,
            "workdir": str(workdir),
            "phases": phases,
            "metadata": job.metadata,
        }

    def run(self, job: ScheduledJob, workdir: Path) -> BackendResult:
        specfile = workdir / f"j{job.job_id:05d}.spec.json"
        specfile.write_text(json.dumps(self._spec(job, workdir)), encoding="utf-8")
        proc = subprocess.run(
            [sys.executable, "-m", "epsim.stub", str(specfile)],
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            log.warning("stub job %d (%s) failed: %s", job.job_id, job.name, proc.stderr.strip())
            return BackendResult(exit_code=proc.returncode)
        result = json.loads(proc.stdout.strip().splitlines()[-1])
        return BackendResult(0, int(result["bytes_read"]), int(result["bytes_written"]))


class InlineBackend:
    """Runs stub phases in-process; same semantics, no process spawn.

    Useful for fast property tests and dry runs; the dispatch logic above it
    is identical to the process-backed path.
    """

    def __init__(self, desk_scale: float = 100.0, compute_ceiling_s: float = 30.0):
        self._delegate = LocalProcessBackend(desk_scale, compute_ceiling_s)

    def run(self, job: ScheduledJob, workdir: Path) -> BackendResult:
        spec = self._delegate._spec(job, workdir)
        try:
            bytes_read, bytes_written = stub.run_phases(spec)
        except stub.StubFailure as exc:
            log.warning("inline job %d (%s) failed: %s", job.job_id, job.name, exc)
            return BackendResult(exit_code=1)
        return BackendResult(0, bytes_read, bytes_written)


def _prepare_workdir(workdir: str | Path | None) -> tuple[Path, bool]:
    created_tmp = False
    if workdir is None:
        workdir = os.environ.get(SCRATCH_ENV_VAR)
    if workdir is None:
        workdir = tempfile.mkdtemp(prefix="epsim-scratch-")
        created_tmp = True
    path = Path(workdir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("ok")
        probe.unlink()
    except OSError as exc:
        raise WorkdirUnwritable(str(path), str(exc)) from None
    return path, created_tmp


def execute(
    doc: ScheduleDocument,
    backend=None,
    parallelism: int = 1,
    workdir: str | Path | None = None,
    keep_scratch: bool = False,
    raise_on_failure: bool = False,
) -> RunLog:
    """Run the schedule's stub jobs, honoring dependencies.

    A job starts only after all dependencies exited successfully; dependents
    of failed jobs are marked skipped. Up to `parallelism` jobs run at once.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    topo_order(doc)  # id and acyclicity guard
    path, created_tmp = _prepare_workdir(workdir)
    backend = backend or LocalProcessBackend()

    jobs = {j.job_id: j for j in doc.jobs}
    succs: dict[int, list[int]] = {i: [] for i in jobs}
    pending = {}
    for j in doc.jobs:
        pending[j.job_id] = set(j.depends_on)
        for dep in j.depends_on:
            succs[dep].append(j.job_id)

    logrec = RunLog(workdir=str(path), parallelism=parallelism)
    ready = [i for i, deps in pending.items() if not deps]
    heapq.heapify(ready)
    for i in ready:
        del pending[i]
    starts: dict[int, float] = {}
    running: dict = {}

    def mark_skipped(root: int) -> None:
        stack = list(succs[root])
        while stack:
            jid = stack.pop()
            if jid not in pending:
                continue
            del pending[jid]
            logrec.entries.append(
                RunLogEntry(jid, jobs[jid].name, "skipped", None, None, None)
            )
            stack.extend(succs[jid])

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        while ready or running:
            while ready and len(running) < parallelism:
                jid = heapq.heappop(ready)
                starts[jid] = time.perf_counter()
                running[pool.submit(backend.run, jobs[jid], path)] = jid
            if not running:
                break
            done, _ = wait(list(running), return_when=FIRST_COMPLETED)
            for fut in sorted(done, key=lambda f: running[f]):
                jid = running.pop(fut)
                end = time.perf_counter()
                try:
                    result = fut.result()
                except Exception as exc:  # backend bug or spawn failure
                    log.error("backend crashed on job %d: %s", jid, exc)
                    result = BackendResult(exit_code=-1)
                status = "ok" if result.exit_code == 0 else "failed"
                logrec.entries.append(
                    RunLogEntry(
                        jid,
                        jobs[jid].name,
                        status,
                        result.exit_code,
                        starts[jid],
                        end,
                        result.bytes_read,
                        result.bytes_written,
                    )
                )
                if status == "ok":
                    for s in succs[jid]:
                        if s in pending:
                            pending[s].discard(jid)
                            if not pending[s]:
                                del pending[s]
                                heapq.heappush(ready, s)
                else:
                    mark_skipped(jid)

    for jid in sorted(pending):  # unreachable unless the graph logic breaks
        logrec.entries.append(RunLogEntry(jid, jobs[jid].name, "skipped", None, None, None))

    if logrec.ok and not keep_scratch:
        _cleanup_scratch(path, doc, created_tmp)
    if raise_on_failure and not logrec.ok:
        raise JobFailed([e.job_id for e in logrec.entries if e.status != "ok"])
    return logrec


def _cleanup_scratch(path: Path, doc: ScheduleDocument, created_tmp: bool) -> None:
    for j in doc.jobs:
        for suffix in (".spec.json", ".in", ".out"):
            f = path / f"j{j.job_id:05d}{suffix}"
            if f.exists():
                f.unlink()
    if created_tmp:
        try:
            path.rmdir()
        except OSError:
            pass


# ---------------------------------------------------------------------------
# Schedule document files (.kjs)


def schedule_to_dict(doc: ScheduleDocument) -> dict:
    return {
        "created_from": list(doc.created_from),
        "scale": {"io_scale": doc.io_scale, "compute_scale": doc.compute_scale},
        "jobs": [
            {
                "job_id": j.job_id,
                "name": j.name,
                "depends_on": list(j.depends_on),
                "phases": [phase_to_dict(p) for p in j.phases],
                "metadata": j.metadata,
            }
            for j in doc.jobs
        ],
    }


def schedule_from_dict(raw: dict) -> ScheduleDocument:
    if not isinstance(raw, dict) or "jobs" not in raw:
        raise SchemaError("schedule document needs a 'jobs' list")
    scale = raw.get("scale", {})
    jobs = []
    for j in raw["jobs"]:
        if "job_id" not in j or "name" not in j:
            raise SchemaError("scheduled job needs 'job_id' and 'name'")
        jobs.append(
            ScheduledJob(
                job_id=int(j["job_id"]),
                name=str(j["name"]),
                depends_on=tuple(int(d) for d in j.get("depends_on", [])),
                phases=tuple(phase_from_dict(p) for p in j.get("phases", [])),
                metadata=dict(j.get("metadata", {})),
            )
        )
    jobs.sort(key=lambda j: j.job_id)
    return ScheduleDocument(
        jobs=tuple(jobs),
        created_from=tuple(str(s) for s in raw.get("created_from", [])),
        io_scale=float(scale.get("io_scale", 1.0)),
        compute_scale=float(scale.get("compute_scale", 1.0)),
    )


def save_schedule(doc: ScheduleDocument, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schedule_to_dict(doc), indent=2) + "\n", encoding="utf-8")


def load_schedule(path: str | Path) -> ScheduleDocument:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    return schedule_from_dict(raw)
