"""Deterministic discrete-event simulation of an instance graph on a cluster.

Plain list scheduling: an instance becomes ready when all predecessors have
finished, and ready instances are started greedily in (ready_time, id) order
whenever node, core and queue capacity allow. Identical inputs always produce
an identical event log.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import InfeasibleInstance
from .model import ClusterSpec, InstanceGraph, JobCategory, QueueSpec

DEFAULT_QUEUE = QueueSpec(exclusive_nodes=True, max_concurrent_jobs=None)


class EventKind(str, Enum):
    SUBMIT = "Submit"
    START = "Start"
    FINISH = "Finish"


_KIND_ORDER = {EventKind.FINISH: 0, EventKind.SUBMIT: 1, EventKind.START: 2}


@dataclass(frozen=True)
class SimEvent:
    instance_id: str
    kind: EventKind
    time_s: float


@dataclass
class SimulationResult:
    events: list[SimEvent]
    makespan_s: float
    critical_path: list[str]
    critical_path_s: float
    per_node_busy_s: dict[int, float]
    per_category_busy_s: dict[JobCategory, float]
    nodes_used: int
    start_times: dict[str, float] = field(default_factory=dict)
    finish_times: dict[str, float] = field(default_factory=dict)


def critical_path(graph: InstanceGraph) -> tuple[float, list[str]]:
    """Longest duration-weighted path; ties broken by lexicographic instance id."""
    order = graph.topological_order()  # raises CycleDetected defensively
    dist: dict[str, float] = {}
    best_pred: dict[str, str | None] = {}
    for node in order:
        best, pick = 0.0, None
        for p in graph.preds[node]:
            if dist[p] > best or (dist[p] == best and pick is not None and p < pick):
                best, pick = dist[p], p
        dist[node] = graph.instances[node].duration_s + best
        best_pred[node] = pick
    if not dist:
        return 0.0, []
    end = min((i for i in dist), key=lambda i: (-dist[i], i))
    chain: list[str] = []
    node: str | None = end
    while node is not None:
        chain.append(node)
        node = best_pred[node]
    chain.reverse()
    return dist[end], chain


def node_demand(cores: int, queue: QueueSpec, cluster: ClusterSpec) -> int:
    """Whole nodes for exclusive queues; 0 for shared (core-level) placement."""
    if queue.exclusive_nodes:
        return -(-cores // cluster.cores_per_node)
    return 0


class _NodePool:
    """Node states for placement; ids are allocated lowest-first.

    A node is either free, reserved whole by exclusive instances, or hosting
    shared instances up to cores_per_node cores. Unlimited clusters draw from
    an unbounded id space.
    """

    def __init__(self, cluster: ClusterSpec):
        self.cluster = cluster
        self.limit = cluster.node_count  # None = unlimited
        self.exclusive_nodes: set[int] = set()
        self.shared_cores: dict[int, int] = {}
        self.high_water = 0

    def _free_ids(self, need: int) -> list[int]:
        out: list[int] = []
        i = 0
        while len(out) < need and (self.limit is None or i < self.limit):
            if i not in self.exclusive_nodes and i not in self.shared_cores:
                out.append(i)
            i += 1
        return out

    def can_place(self, cores: int, queue: QueueSpec) -> bool:
        if queue.exclusive_nodes:
            need = node_demand(cores, queue, self.cluster)
            return len(self._free_ids(need)) >= need
        if any(u + cores <= self.cluster.cores_per_node for u in self.shared_cores.values()):
            return True
        return len(self._free_ids(1)) >= 1

    def place(self, cores: int, queue: QueueSpec) -> tuple[int, ...]:
        if queue.exclusive_nodes:
            need = node_demand(cores, queue, self.cluster)
            ids = tuple(self._free_ids(need))
            self.exclusive_nodes.update(ids)
            self._bump(ids)
            return ids
        for nid in sorted(self.shared_cores):
            if self.shared_cores[nid] + cores <= self.cluster.cores_per_node:
                self.shared_cores[nid] += cores
                return (nid,)
        nid = self._free_ids(1)[0]
        self.shared_cores[nid] = cores
        self._bump((nid,))
        return (nid,)

    def release(self, ids: tuple[int, ...], cores: int, queue: QueueSpec) -> None:
        if queue.exclusive_nodes:
            self.exclusive_nodes.difference_update(ids)
        else:
            (nid,) = ids
            self.shared_cores[nid] -= cores
            if self.shared_cores[nid] <= 0:
                del self.shared_cores[nid]

    def _bump(self, ids: tuple[int, ...]) -> None:
        for i in ids:
            self.high_water = max(self.high_water, i + 1)


def simulate(graph: InstanceGraph, cluster: ClusterSpec, policy=None) -> SimulationResult:
    """Event-driven list scheduling of the instance graph on the cluster.

    `policy` maps (ready_time, instance_id) to a sort key; the default is the
    pair itself. Raises InfeasibleInstance when an instance cannot fit on the
    cluster even when idle.
    """
    policy = policy or (lambda ready, iid: (ready, iid))
    queues = dict(cluster.queues)
    for inst in graph.instances.values():
        q = queues.setdefault(inst.queue, DEFAULT_QUEUE)
        if q.exclusive_nodes:
            need = node_demand(inst.cores, q, cluster)
            if cluster.node_count is not None and need > cluster.node_count:
                raise InfeasibleInstance(inst.id, need, cluster.node_count)
        elif inst.cores > cluster.cores_per_node:
            raise InfeasibleInstance(inst.id, 1, 0)

    graph.topological_order()  # cycle guard before any event is emitted

    pending_preds = {iid: set(p) for iid, p in graph.preds.items()}
    ready: list[tuple] = []  # heap of (policy key..., ready_time, id)
    events: list[SimEvent] = []
    start_times: dict[str, float] = {}
    finish_times: dict[str, float] = {}
    running: list[tuple[float, str]] = []  # heap of (finish_time, id)
    queue_load: dict[str, int] = {qid: 0 for qid in queues}
    placements: dict[str, tuple[int, ...]] = {}
    pool = _NodePool(cluster)
    node_intervals: dict[int, list[tuple[float, float]]] = {}

    def submit(iid: str, t: float) -> None:
        events.append(SimEvent(iid, EventKind.SUBMIT, t))
        heapq.heappush(ready, (policy(t, iid), t, iid))

    for iid in graph.ids():
        if not pending_preds[iid]:
            submit(iid, 0.0)

    def try_dispatch(now: float) -> None:
        # greedy pass over the ready heap in policy order; instances that do
        # not fit right now are retried at the next event time
        deferred: list[tuple] = []
        while ready:
            key, rt, iid = heapq.heappop(ready)
            inst = graph.instances[iid]
            q = queues[inst.queue]
            if q.max_concurrent_jobs is not None and queue_load[inst.queue] >= q.max_concurrent_jobs:
                deferred.append((key, rt, iid))
                continue
            if not pool.can_place(inst.cores, q):
                deferred.append((key, rt, iid))
                continue
            ids = pool.place(inst.cores, q)
            placements[iid] = ids
            queue_load[inst.queue] += 1
            start_times[iid] = now
            fin = now + inst.duration_s
            finish_times[iid] = fin
            events.append(SimEvent(iid, EventKind.START, now))
            heapq.heappush(running, (fin, iid))
        for item in deferred:
            heapq.heappush(ready, item)

    try_dispatch(0.0)
    while running:
        now = running[0][0]
        finished: list[str] = []
        while running and running[0][0] == now:
            _, iid = heapq.heappop(running)
            finished.append(iid)
        for iid in sorted(finished):
            inst = graph.instances[iid]
            q = queues[inst.queue]
            events.append(SimEvent(iid, EventKind.FINISH, now))
            pool.release(placements[iid], inst.cores, q)
            queue_load[inst.queue] -= 1
            for nid in placements[iid]:
                node_intervals.setdefault(nid, []).append((start_times[iid], now))
            for succ in graph.succs[iid]:
                pending_preds[succ].discard(iid)
                if not pending_preds[succ]:
                    submit(succ, now)
        try_dispatch(now)

    if len(finish_times) != len(graph):
        # capacity was never sufficient for something; the feasibility check
        # above should make this unreachable
        stuck = sorted(set(graph.ids()) - set(finish_times))
        raise InfeasibleInstance(stuck[0], -1, -1)

    makespan = max(finish_times.values(), default=0.0)
    cp_len, cp_chain = critical_path(graph)
    per_node = {nid: _union_length(iv) for nid, iv in sorted(node_intervals.items())}
    per_cat: dict[JobCategory, float] = {}
    for inst in graph.instances.values():
        per_cat[inst.category] = per_cat.get(inst.category, 0.0) + inst.duration_s
    events.sort(key=lambda e: (e.time_s, _KIND_ORDER[e.kind], e.instance_id))
    return SimulationResult(
        events=events,
        makespan_s=makespan,
        critical_path=cp_chain,
        critical_path_s=cp_len,
        per_node_busy_s=per_node,
        per_category_busy_s=per_cat,
        nodes_used=pool.high_water,
        start_times=start_times,
        finish_times=finish_times,
    )


def _union_length(intervals: list[tuple[float, float]]) -> float:
    total, cur_start, cur_end = 0.0, None, None
    for s, e in sorted(intervals):
        if cur_end is None or s > cur_end:
            if cur_end is not None:
                total += cur_end - cur_start
            cur_start, cur_end = s, e
        else:
            cur_end = max(cur_end, e)
    if cur_end is not None:
        total += cur_end - cur_start
    return total


def utilization(result: SimulationResult, cluster: ClusterSpec) -> tuple[dict[int, float], float]:
    """Per-node busy fraction and the aggregate Σbusy / (nodes × makespan)."""
    if result.makespan_s == 0:
        return {}, 0.0
    nodes = cluster.node_count if cluster.node_count is not None else result.nodes_used
    per_node = {nid: b / result.makespan_s for nid, b in result.per_node_busy_s.items()}
    if nodes == 0:
        return per_node, 0.0
    aggregate = sum(result.per_node_busy_s.values()) / (nodes * result.makespan_s)
    return per_node, aggregate


def events_csv(result: SimulationResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["instance_id", "kind", "time_s"])
    for e in result.events:
        writer.writerow([e.instance_id, e.kind.value, repr(e.time_s)])
    return buf.getvalue()


def summary_json(result: SimulationResult, cluster: ClusterSpec) -> str:
    per_node, aggregate = utilization(result, cluster)
    doc = {
        "makespan_s": result.makespan_s,
        "critical_path_s": result.critical_path_s,
        "critical_path": result.critical_path,
        "nodes_used": result.nodes_used,
        "utilization": {str(k): v for k, v in per_node.items()},
        "aggregate_utilization": aggregate,
        "per_category_busy_s": {c.value: v for c, v in sorted(result.per_category_busy_s.items())},
    }
    return json.dumps(doc, indent=2) + "\n"
