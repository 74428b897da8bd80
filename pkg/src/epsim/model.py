"""Domain model for an ensemble forecasting suite.

Types for jobs, categories, member roles, dependencies and the cluster, plus
validation of a suite model and its expansion into a concrete per-member
instance graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .errors import CycleDetected, ModelInvalid, SchemaError, UnknownJob


class JobCategory(str, Enum):
    LBCS = "LBCs"
    DATA_ASSIMILATION = "DataAssimilation"
    FORECAST = "Forecast"
    POST_PROCESSING = "PostProcessing"
    OTHER = "Other"


class MemberRole(str, Enum):
    """Which ensemble members a job runs for."""

    ALL = "All"
    CONTROL_ONLY = "ControlOnly"
    PERTURBED_ONLY = "PerturbedOnly"


class EdgeScope(str, Enum):
    SAME_MEMBER = "SameMember"
    CONTROL_TO_ALL = "ControlToAll"
    CONTROL_TO_PERTURBED = "ControlToPerturbed"


class MemberPath(str, Enum):
    """Selector for the serial per-member path (control vs perturbed)."""

    CONTROL = "control"
    PERTURBED = "perturbed"


@dataclass(frozen=True)
class EnergyTerm:
    """Affine energy contribution a·n + b·(N−n) + c·N + d, in kJ."""

    per_control_kj: float = 0.0
    per_perturbed_kj: float = 0.0
    per_any_kj: float = 0.0
    fixed_kj: float = 0.0

    def scaled(self, factor: float) -> "EnergyTerm":
        return EnergyTerm(
            self.per_control_kj * factor,
            self.per_perturbed_kj * factor,
            self.per_any_kj * factor,
            self.fixed_kj * factor,
        )


@dataclass(frozen=True)
class RepetitionSpec:
    """How often a job runs per member: `instances` runs in `waves` sequential waves."""

    instances: int = 1
    waves: int = 1
    wave_widths: tuple[int, ...] = (1,)

    @staticmethod
    def single() -> "RepetitionSpec":
        return RepetitionSpec(1, 1, (1,))

    @staticmethod
    def from_counts(instances: int, waves: int) -> "RepetitionSpec":
        """Reconstruct widths from counts alone.

        Prefers the initial-run-then-uniform-batches pattern ([1, q, q, ...])
        when (instances-1) divides evenly over (waves-1); otherwise splits as
        evenly as possible, widest waves first.
        """
        if waves <= 1:
            return RepetitionSpec(instances, 1, (instances,))
        if instances > waves and (instances - 1) % (waves - 1) == 0:
            q = (instances - 1) // (waves - 1)
            return RepetitionSpec(instances, waves, (1,) + (q,) * (waves - 1))
        base, rem = divmod(instances, waves)
        widths = tuple(base + 1 if w < rem else base for w in range(waves))
        return RepetitionSpec(instances, waves, widths)


@dataclass(frozen=True)
class JobProfile:
    """One suite job as measured: timings, energy term and repetition."""

    name: str
    category: JobCategory
    role: MemberRole
    queue: str
    cores_per_member: int
    wallclock_ctrl_s: float
    wallclock_pert_s: float
    energy: EnergyTerm
    repetition: RepetitionSpec = field(default_factory=RepetitionSpec.single)
    contaminated: bool = False
    low_confidence: bool = False

    def wallclock_for(self, path: MemberPath) -> float:
        return self.wallclock_ctrl_s if path is MemberPath.CONTROL else self.wallclock_pert_s

    def runs_on(self, path: MemberPath) -> bool:
        if self.role is MemberRole.ALL:
            return True
        if path is MemberPath.CONTROL:
            return self.role is MemberRole.CONTROL_ONLY
        return self.role is MemberRole.PERTURBED_ONLY


@dataclass(frozen=True)
class DependencyEdge:
    from_job: str
    to_job: str
    scope: EdgeScope = EdgeScope.SAME_MEMBER


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble sizes: n_control control members out of n_total."""

    n_control: int
    n_total: int

    def is_valid(self) -> bool:
        return 1 <= self.n_control <= self.n_total

    def multiplier(self, role: MemberRole) -> int:
        if role is MemberRole.CONTROL_ONLY:
            return self.n_control
        if role is MemberRole.PERTURBED_ONLY:
            return self.n_total - self.n_control
        return self.n_total

    def members_for(self, role: MemberRole) -> range:
        """Member indices a role expands to; 0..n_control-1 are control."""
        if role is MemberRole.CONTROL_ONLY:
            return range(self.n_control)
        if role is MemberRole.PERTURBED_ONLY:
            return range(self.n_control, self.n_total)
        return range(self.n_total)


@dataclass(frozen=True)
class QueueSpec:
    exclusive_nodes: bool = True
    max_concurrent_jobs: int | None = None


@dataclass(frozen=True)
class ClusterSpec:
    """Modeled cluster; node_count None means unlimited nodes."""

    node_count: int | None = None
    cores_per_node: int = 36
    queues: dict[str, QueueSpec] = field(default_factory=dict)
    idle_power_kw: float = 0.3


@dataclass(frozen=True)
class SuiteModel:
    ensemble: EnsembleConfig
    cluster: ClusterSpec
    jobs: tuple[JobProfile, ...]
    edges: tuple[DependencyEdge, ...]

    def job(self, name: str) -> JobProfile:
        for j in self.jobs:
            if j.name == name:
                return j
        raise UnknownJob(name)

    def job_names(self) -> list[str]:
        return [j.name for j in self.jobs]

    def with_ensemble(self, cfg: EnsembleConfig) -> "SuiteModel":
        return replace(self, ensemble=cfg)


def category_of(job_name: str, model: SuiteModel) -> JobCategory:
    """Category of a cataloged job; raises UnknownJob, never defaults."""
    return model.job(job_name).category


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str


@dataclass
class ValidationReport:
    errors: list[ValidationIssue] = field(default_factory=list)
    warnings: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, code: str, message: str) -> None:
        self.errors.append(ValidationIssue(code, message))

    def warn(self, code: str, message: str) -> None:
        self.warnings.append(ValidationIssue(code, message))


def find_job_cycle(names: list[str], edges: tuple[DependencyEdge, ...]) -> list[str] | None:
    """First job-name cycle in the edge set, or None; ignores unknown endpoints."""
    succs: dict[str, list[str]] = {n: [] for n in names}
    for e in edges:
        if e.from_job in succs and e.to_job in succs:
            succs[e.from_job].append(e.to_job)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in names}
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        color[node] = GRAY
        stack.append(node)
        for nxt in succs[node]:
            if color[nxt] == GRAY:
                return stack[stack.index(nxt):] + [nxt]
            if color[nxt] == WHITE:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for n in names:
        if color[n] == WHITE:
            found = visit(n)
            if found:
                return found
    return None


def validate_suite(model: SuiteModel) -> ValidationReport:
    """Check structural and role/energy consistency; model is usable iff report.ok."""
    report = ValidationReport()
    seen: set[str] = set()
    for job in model.jobs:
        if job.name in seen:
            report.error("DuplicateJob", f"job {job.name!r} defined twice")
        seen.add(job.name)

    cfg = model.ensemble
    if not cfg.is_valid():
        report.error(
            "InvalidEnsemble",
            f"need 1 <= n_control <= n_total, got ({cfg.n_control}, {cfg.n_total})",
        )
    cl = model.cluster
    if cl.node_count is not None and cl.node_count < 1:
        report.error("InvalidCluster", f"node_count must be >= 1 or null, got {cl.node_count}")
    if cl.cores_per_node < 1:
        report.error("InvalidCluster", f"cores_per_node must be >= 1, got {cl.cores_per_node}")
    if cl.idle_power_kw < 0:
        report.error("InvalidCluster", f"idle_power_kw must be >= 0, got {cl.idle_power_kw}")

    for job in model.jobs:
        t = job.energy
        if min(t.per_control_kj, t.per_perturbed_kj, t.per_any_kj, t.fixed_kj) < 0:
            report.error("NegativeEnergy", f"{job.name}: energy coefficients must be >= 0")
        if job.wallclock_ctrl_s < 0 or job.wallclock_pert_s < 0:
            report.error("NegativeWallclock", f"{job.name}: wall-clock must be >= 0")
        if job.cores_per_member < 1:
            report.error("InvalidCores", f"{job.name}: cores_per_member must be >= 1")
        rep = job.repetition
        if rep.instances < 1 or rep.waves < 1:
            report.error("InvalidRepetition", f"{job.name}: instances and waves must be >= 1")
        elif len(rep.wave_widths) != rep.waves or sum(rep.wave_widths) != rep.instances:
            report.error(
                "InvalidRepetition",
                f"{job.name}: wave_widths {list(rep.wave_widths)} do not partition "
                f"{rep.instances} instances into {rep.waves} waves",
            )
        if job.role is MemberRole.CONTROL_ONLY:
            if job.wallclock_pert_s != 0 or job.energy.per_perturbed_kj != 0 or job.energy.per_any_kj != 0:
                report.error(
                    "RoleEnergyMismatch",
                    f"{job.name}: ControlOnly jobs must have zero perturbed wall-clock, b and c",
                )
        if job.role is MemberRole.PERTURBED_ONLY:
            if job.wallclock_ctrl_s != 0 or job.energy.per_control_kj != 0:
                report.error(
                    "RoleEnergyMismatch",
                    f"{job.name}: PerturbedOnly jobs must have zero control wall-clock and a",
                )
        if job.queue not in cl.queues:
            report.error("UnknownQueue", f"{job.name}: queue {job.queue!r} not in cluster.queues")
        if job.contaminated:
            report.warn("Contaminated", f"{job.name}: shared-queue measurement, energy may be overestimated")
        if job.low_confidence:
            report.warn("LowConfidence", f"{job.name}: duration below counter resolution")

    for e in model.edges:
        for endpoint in (e.from_job, e.to_job):
            if endpoint not in seen:
                report.error(
                    "UnknownJobInEdge",
                    f"edge {e.from_job} -> {e.to_job} references unknown job {endpoint!r}",
                )

    cycle = find_job_cycle(model.job_names(), model.edges)
    if cycle:
        report.error("CycleDetected", "dependency cycle: " + " -> ".join(cycle))
    return report


def ensure_valid(model: SuiteModel) -> SuiteModel:
    report = validate_suite(model)
    if not report.ok:
        raise ModelInvalid(report)
    return model


# ---------------------------------------------------------------------------
# Instance expansion


@dataclass(frozen=True)
class Instance:
    """One concrete (job, member, repetition) run."""

    id: str
    job: str
    member: int
    wave: int
    slot: int
    duration_s: float
    category: JobCategory
    queue: str
    cores: int
    is_control: bool


class InstanceGraph:
    """Expanded per-member instances plus dependency edges (a DAG for valid models)."""

    def __init__(self, instances: list[Instance], edges: set[tuple[str, str]]):
        self.instances: dict[str, Instance] = {i.id: i for i in sorted(instances, key=lambda x: x.id)}
        preds: dict[str, list[str]] = {i: [] for i in self.instances}
        succs: dict[str, list[str]] = {i: [] for i in self.instances}
        for src, dst in sorted(edges):
            if src not in self.instances or dst not in self.instances:
                raise SchemaError(f"edge ({src}, {dst}) references unknown instance")
            preds[dst].append(src)
            succs[src].append(dst)
        self.preds = {k: tuple(v) for k, v in preds.items()}
        self.succs = {k: tuple(v) for k, v in succs.items()}

    def __len__(self) -> int:
        return len(self.instances)

    def ids(self) -> list[str]:
        return list(self.instances)

    def topological_order(self) -> list[str]:
        """Kahn order, smallest id first; raises CycleDetected."""
        import heapq

        indeg = {i: len(p) for i, p in self.preds.items()}
        heap = [i for i, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order: list[str] = []
        while heap:
            node = heapq.heappop(heap)
            order.append(node)
            for nxt in self.succs[node]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    heapq.heappush(heap, nxt)
        if len(order) != len(self.instances):
            remaining = [i for i, d in indeg.items() if d > 0]
            raise CycleDetected(remaining[:8])
        return order


def _instance_id(job: str, member: int, slot: int) -> str:
    return f"{job}:m{member:03d}:i{slot:03d}"


def expand_instances(model: SuiteModel) -> InstanceGraph:
    """Expand jobs to per-(member, repetition) instances and replicate edges.

    Each instance lasts wallclock/waves for its member's role; waves chain
    sequentially per member. SameMember edges are replicated for members where
    both jobs exist; ControlToAll / ControlToPerturbed edges connect control
    source instances to the respective target members' instances.
    """
    cfg = model.ensemble
    instances: list[Instance] = []
    # (job, member) -> list of instance ids, wave-major
    by_job_member: dict[tuple[str, int], list[str]] = {}
    wave_of: dict[str, int] = {}

    for job in model.jobs:
        rep = job.repetition
        for member in cfg.members_for(job.role):
            is_control = member < cfg.n_control
            path = MemberPath.CONTROL if is_control else MemberPath.PERTURBED
            duration = job.wallclock_for(path) / rep.waves
            ids: list[str] = []
            slot = 0
            for wave, width in enumerate(rep.wave_widths):
                for _ in range(width):
                    iid = _instance_id(job.name, member, slot)
                    instances.append(
                        Instance(
                            id=iid,
                            job=job.name,
                            member=member,
                            wave=wave,
                            slot=slot,
                            duration_s=duration,
                            category=job.category,
                            queue=job.queue,
                            cores=job.cores_per_member,
                            is_control=is_control,
                        )
                    )
                    wave_of[iid] = wave
                    ids.append(iid)
                    slot += 1
            by_job_member[(job.name, member)] = ids

    edges: set[tuple[str, str]] = set()
    # chain waves per (job, member): every instance of wave k+1 after all of wave k
    for ids in by_job_member.values():
        for a in ids:
            for b in ids:
                if wave_of[b] == wave_of[a] + 1:
                    edges.add((a, b))

    jobs_by_name = {j.name: j for j in model.jobs}
    for edge in model.edges:
        src_job = jobs_by_name[edge.from_job]
        dst_job = jobs_by_name[edge.to_job]
        if edge.scope is EdgeScope.SAME_MEMBER:
            pairs = [
                (m, m)
                for m in cfg.members_for(src_job.role)
                if (edge.to_job, m) in by_job_member
            ]
        else:
            src_members = [m for m in cfg.members_for(src_job.role) if m < cfg.n_control]
            if edge.scope is EdgeScope.CONTROL_TO_ALL:
                dst_members = cfg.members_for(dst_job.role)
            else:  # CONTROL_TO_PERTURBED
                dst_members = [m for m in cfg.members_for(dst_job.role) if m >= cfg.n_control]
            pairs = [(ms, md) for ms in src_members for md in dst_members]
        for ms, md in pairs:
            for a in by_job_member.get((edge.from_job, ms), ()):
                for b in by_job_member.get((edge.to_job, md), ()):
                    edges.add((a, b))

    return InstanceGraph(instances, edges)


# ---------------------------------------------------------------------------
# Suite model file format (JSON)


def _require(mapping: dict, key: str, ctx: str):
    if key not in mapping:
        raise SchemaError(f"{ctx}: missing field {key!r}")
    return mapping[key]


def _enum(cls, raw, ctx: str):
    try:
        return cls(raw)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise SchemaError(f"{ctx}: {raw!r} is not one of [{allowed}]") from None


def job_from_dict(raw: dict) -> JobProfile:
    name = _require(raw, "name", "job")
    ctx = f"job {name!r}"
    energy_raw = raw.get("energy", {})
    energy = EnergyTerm(
        per_control_kj=float(energy_raw.get("per_control_kj", 0.0)),
        per_perturbed_kj=float(energy_raw.get("per_perturbed_kj", 0.0)),
        per_any_kj=float(energy_raw.get("per_any_kj", 0.0)),
        fixed_kj=float(energy_raw.get("fixed_kj", 0.0)),
    )
    rep_raw = raw.get("repetition")
    if rep_raw is None:
        rep = RepetitionSpec.single()
    elif "wave_widths" in rep_raw:
        rep = RepetitionSpec(
            instances=int(_require(rep_raw, "instances", ctx)),
            waves=int(_require(rep_raw, "waves", ctx)),
            wave_widths=tuple(int(w) for w in rep_raw["wave_widths"]),
        )
    else:
        rep = RepetitionSpec.from_counts(
            int(rep_raw.get("instances", 1)), int(rep_raw.get("waves", 1))
        )
    return JobProfile(
        name=str(name),
        category=_enum(JobCategory, _require(raw, "category", ctx), ctx),
        role=_enum(MemberRole, raw.get("role", "All"), ctx),
        queue=str(_require(raw, "queue", ctx)),
        cores_per_member=int(raw.get("cores_per_member", 1)),
        wallclock_ctrl_s=float(raw.get("wallclock_ctrl_s", 0.0)),
        wallclock_pert_s=float(raw.get("wallclock_pert_s", 0.0)),
        energy=energy,
        repetition=rep,
        contaminated=bool(raw.get("contaminated", False)),
        low_confidence=bool(raw.get("low_confidence", False)),
    )


def job_to_dict(job: JobProfile) -> dict:
    return {
        "name": job.name,
        "category": job.category.value,
        "role": job.role.value,
        "queue": job.queue,
        "cores_per_member": job.cores_per_member,
        "wallclock_ctrl_s": job.wallclock_ctrl_s,
        "wallclock_pert_s": job.wallclock_pert_s,
        "energy": {
            "per_control_kj": job.energy.per_control_kj,
            "per_perturbed_kj": job.energy.per_perturbed_kj,
            "per_any_kj": job.energy.per_any_kj,
            "fixed_kj": job.energy.fixed_kj,
        },
        "repetition": {
            "instances": job.repetition.instances,
            "waves": job.repetition.waves,
            "wave_widths": list(job.repetition.wave_widths),
        },
        "contaminated": job.contaminated,
        "low_confidence": job.low_confidence,
    }


def edge_from_dict(raw: dict) -> DependencyEdge:
    return DependencyEdge(
        from_job=str(_require(raw, "from_job", "edge")),
        to_job=str(_require(raw, "to_job", "edge")),
        scope=_enum(EdgeScope, raw.get("scope", "SameMember"), "edge"),
    )


def edge_to_dict(edge: DependencyEdge) -> dict:
    return {"from_job": edge.from_job, "to_job": edge.to_job, "scope": edge.scope.value}


def cluster_from_dict(raw: dict) -> ClusterSpec:
    queues = {}
    for qid, q in raw.get("queues", {}).items():
        mc = q.get("max_concurrent_jobs")
        queues[str(qid)] = QueueSpec(
            exclusive_nodes=bool(q.get("exclusive_nodes", True)),
            max_concurrent_jobs=None if mc is None else int(mc),
        )
    node_count = raw.get("node_count")
    return ClusterSpec(
        node_count=None if node_count is None else int(node_count),
        cores_per_node=int(raw.get("cores_per_node", 36)),
        queues=queues,
        idle_power_kw=float(raw.get("idle_power_kw", 0.3)),
    )


def cluster_to_dict(cluster: ClusterSpec) -> dict:
    return {
        "node_count": cluster.node_count,
        "cores_per_node": cluster.cores_per_node,
        "queues": {
            qid: {
                "exclusive_nodes": q.exclusive_nodes,
                "max_concurrent_jobs": q.max_concurrent_jobs,
            }
            for qid, q in cluster.queues.items()
        },
        "idle_power_kw": cluster.idle_power_kw,
    }


def suite_model_from_dict(raw: dict) -> SuiteModel:
    if not isinstance(raw, dict):
        raise SchemaError("suite model must be a JSON object")
    ens = _require(raw, "ensemble", "suite model")
    ensemble = EnsembleConfig(
        n_control=int(_require(ens, "n_control", "ensemble")),
        n_total=int(_require(ens, "n_total", "ensemble")),
    )
    return SuiteModel(
        ensemble=ensemble,
        cluster=cluster_from_dict(_require(raw, "cluster", "suite model")),
        jobs=tuple(job_from_dict(j) for j in _require(raw, "jobs", "suite model")),
        edges=tuple(edge_from_dict(e) for e in raw.get("edges", [])),
    )


def suite_model_to_dict(model: SuiteModel) -> dict:
    return {
        "ensemble": {
            "n_control": model.ensemble.n_control,
            "n_total": model.ensemble.n_total,
        },
        "cluster": cluster_to_dict(model.cluster),
        "jobs": [job_to_dict(j) for j in model.jobs],
        "edges": [edge_to_dict(e) for e in model.edges],
    }


def load_suite_model(path: str | Path) -> SuiteModel:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    return suite_model_from_dict(raw)


def save_suite_model(model: SuiteModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def dumps_model(model: SuiteModel) -> str:
    return json.dumps(suite_model_to_dict(model), indent=2) + "\n"


def load_edges(path: str | Path) -> tuple[DependencyEdge, ...]:
    """Edge list file: {"edges": [...]} or a bare JSON list."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    if isinstance(raw, dict):
        raw = raw.get("edges", [])
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: expected an edge list")
    return tuple(edge_from_dict(e) for e in raw)
