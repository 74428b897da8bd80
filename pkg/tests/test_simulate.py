import pytest
from hypothesis import assume, given, settings

import oracle_data as oracle
import strategies

from epsim.errors import CycleDetected, InfeasibleInstance
from epsim.model import (
    ClusterSpec,
    Instance,
    InstanceGraph,
    JobCategory,
    QueueSpec,
    expand_instances,
)
from epsim.simulate import (
    EventKind,
    critical_path,
    events_csv,
    node_demand,
    simulate,
    utilization,
)

NP_NS = {"np": QueueSpec(True), "ns": QueueSpec(False)}
UNLIMITED = ClusterSpec(node_count=None, cores_per_node=1, queues=NP_NS)


def inst(iid, duration, queue="np", cores=1):
    return Instance(
        id=iid, job=iid, member=0, wave=0, slot=0, duration_s=duration,
        category=JobCategory.OTHER, queue=queue, cores=cores, is_control=True,
    )


def graph_of(nodes, edges=()):
    return InstanceGraph(list(nodes), set(edges))


# ---------------------------------------------------------------------------
# independent brute-force replay of the same list-scheduling policy


def oracle_makespan(graph, cluster):
    """Time-stepping replay with an explicit node array; no heaps, no pools."""
    cpn = cluster.cores_per_node
    if cluster.node_count is not None:
        n_nodes = cluster.node_count
    else:
        n_nodes = sum(
            max(1, -(-graph.instances[i].cores // cpn)) for i in graph.ids()
        )
    excl = [False] * n_nodes
    cores_used = [0] * n_nodes
    queues = dict(cluster.queues)
    queue_running = {}
    finish = {}
    running = []  # (end, iid, node_ids)
    started = set()
    t = 0.0

    def try_start_all():
        candidates = []
        for iid in graph.ids():
            if iid in started:
                continue
            preds = graph.preds[iid]
            if not all(p in finish for p in preds):
                continue
            ready = max((finish[p] for p in preds), default=0.0)
            if ready <= t:
                candidates.append((ready, iid))
        for ready, iid in sorted(candidates):
            i = graph.instances[iid]
            q = queues.setdefault(i.queue, QueueSpec())
            if q.max_concurrent_jobs is not None:
                if queue_running.get(i.queue, 0) >= q.max_concurrent_jobs:
                    continue
            if q.exclusive_nodes:
                need = -(-i.cores // cpn)
                free = [k for k in range(n_nodes) if not excl[k] and cores_used[k] == 0]
                if len(free) < need:
                    continue
                ids = free[:need]
                for k in ids:
                    excl[k] = True
            else:
                ids = None
                for k in range(n_nodes):
                    if not excl[k] and 0 < cores_used[k] and cores_used[k] + i.cores <= cpn:
                        ids = [k]
                        break
                if ids is None:
                    for k in range(n_nodes):
                        if not excl[k] and cores_used[k] == 0:
                            ids = [k]
                            break
                if ids is None:
                    continue
                cores_used[ids[0]] += i.cores
            started.add(iid)
            queue_running[i.queue] = queue_running.get(i.queue, 0) + 1
            running.append((t + i.duration_s, iid, tuple(ids)))

    try_start_all()
    while running:
        t = min(end for end, _, _ in running)
        for end, iid, ids in [r for r in running if r[0] == t]:
            running.remove((end, iid, ids))
            finish[iid] = end
            i = graph.instances[iid]
            q = queues[i.queue]
            queue_running[i.queue] -= 1
            if q.exclusive_nodes:
                for k in ids:
                    excl[k] = False
            else:
                cores_used[ids[0]] -= i.cores
        try_start_all()
    if len(finish) != len(graph):
        raise InfeasibleInstance("<oracle stuck>", -1, -1)
    return max(finish.values(), default=0.0)


# ---------------------------------------------------------------------------
# critical path


class TestCriticalPath:
    def test_two_step_chain(self):
        g = graph_of([inst("A", 1.0), inst("B", 2.0)], {("A", "B")})
        length, chain = critical_path(g)
        assert length == 3.0
        assert chain == ["A", "B"]

    def test_parallel_branches_take_max(self):
        g = graph_of(
            [inst("S", 0.5), inst("long", 5.0), inst("short", 3.0), inst("J", 0.5)],
            {("S", "long"), ("S", "short"), ("long", "J"), ("short", "J")},
        )
        length, chain = critical_path(g)
        assert length == pytest.approx(6.0)
        assert chain == ["S", "long", "J"]

    def test_bundled_control_member_chain(self, bundled_model):
        graph = expand_instances(bundled_model)
        length, chain = critical_path(graph)
        assert length == pytest.approx(oracle.EXPECTED_CTRL_PATH_S)
        # the chain runs through a control member (deterministically member 0)
        assert all(graph.instances[i].member == 0 for i in chain)

    def test_cycle_detected(self):
        g = graph_of([inst("A", 1.0), inst("B", 1.0)], {("A", "B"), ("B", "A")})
        with pytest.raises(CycleDetected):
            critical_path(g)

    def test_empty_graph(self):
        assert critical_path(graph_of([])) == (0.0, [])


# ---------------------------------------------------------------------------
# simulate


class TestSimulate:
    def test_unlimited_nodes_reach_critical_path(self, bundled_model):
        graph = expand_instances(bundled_model)
        result = simulate(graph, bundled_model.cluster)
        assert result.makespan_s == pytest.approx(oracle.EXPECTED_CTRL_PATH_S)
        assert result.makespan_s == pytest.approx(result.critical_path_s)

    def test_single_node_serializes(self):
        g = graph_of([inst("A", 2.0), inst("B", 3.0), inst("C", 4.0)])
        cluster = ClusterSpec(node_count=1, cores_per_node=1, queues=NP_NS)
        result = simulate(g, cluster)
        assert result.makespan_s == pytest.approx(9.0)

    def test_capacity_never_binds_with_unlimited_nodes(self):
        g = graph_of([inst(f"t{i}", 1.0) for i in range(10)])
        result = simulate(g, UNLIMITED)
        assert result.makespan_s == pytest.approx(1.0)

    def test_event_ordering_fields(self):
        g = graph_of([inst("A", 1.0), inst("B", 2.0)], {("A", "B")})
        result = simulate(g, UNLIMITED)
        by_instance = {}
        for e in result.events:
            by_instance.setdefault(e.instance_id, {})[e.kind] = e.time_s
        for iid, times in by_instance.items():
            assert times[EventKind.SUBMIT] <= times[EventKind.START]
            assert times[EventKind.FINISH] - times[EventKind.START] == pytest.approx(
                g.instances[iid].duration_s
            )
        assert by_instance["B"][EventKind.START] >= by_instance["A"][EventKind.FINISH]

    def test_infeasible_instance(self):
        g = graph_of([inst("big", 1.0, cores=10)])
        cluster = ClusterSpec(node_count=2, cores_per_node=2, queues=NP_NS)
        with pytest.raises(InfeasibleInstance):
            simulate(g, cluster)

    def test_shared_queue_packs_cores(self):
        # four 1-core shared jobs fit one 4-core node; an exclusive job needs its own
        g = graph_of([inst(f"s{i}", 1.0, queue="ns") for i in range(4)] + [inst("x", 1.0)])
        cluster = ClusterSpec(node_count=2, cores_per_node=4, queues=NP_NS)
        result = simulate(g, cluster)
        assert result.makespan_s == pytest.approx(1.0)
        assert result.nodes_used == 2

    def test_queue_concurrency_limit(self):
        queues = {"np": QueueSpec(True, max_concurrent_jobs=1)}
        cluster = ClusterSpec(node_count=None, cores_per_node=1, queues=queues)
        g = graph_of([inst("A", 1.0), inst("B", 1.0)])
        result = simulate(g, cluster)
        assert result.makespan_s == pytest.approx(2.0)

    def test_deterministic_event_log(self, bundled_model):
        graph = expand_instances(bundled_model)
        first = events_csv(simulate(graph, bundled_model.cluster))
        second = events_csv(simulate(expand_instances(bundled_model), bundled_model.cluster))
        assert first == second


class TestUtilization:
    def test_single_job_full_node(self):
        g = graph_of([inst("A", 5.0)])
        cluster = ClusterSpec(node_count=1, cores_per_node=1, queues=NP_NS)
        result = simulate(g, cluster)
        per_node, aggregate = utilization(result, cluster)
        assert per_node == {0: pytest.approx(1.0)}
        assert aggregate == pytest.approx(1.0)

    def test_two_parallel_jobs_two_nodes(self):
        g = graph_of([inst("A", 5.0), inst("B", 5.0)])
        cluster = ClusterSpec(node_count=2, cores_per_node=1, queues=NP_NS)
        _, aggregate = utilization(simulate(g, cluster), cluster)
        assert aggregate == pytest.approx(1.0)

    def test_serialized_chain_on_two_nodes(self):
        g = graph_of([inst("A", 5.0), inst("B", 5.0)], {("A", "B")})
        cluster = ClusterSpec(node_count=2, cores_per_node=1, queues=NP_NS)
        _, aggregate = utilization(simulate(g, cluster), cluster)
        assert aggregate == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# properties


def _demand_fits(graph, cluster):
    for iid in graph.ids():
        i = graph.instances[iid]
        q = cluster.queues.get(i.queue, QueueSpec())
        if q.exclusive_nodes:
            need = node_demand(i.cores, q, cluster)
            if cluster.node_count is not None and need > cluster.node_count:
                return False
        elif i.cores > cluster.cores_per_node:
            return False
    return True


@settings(max_examples=150, deadline=None)
@given(strategies.instance_graphs(max_nodes=8), strategies.small_clusters(max_nodes=2))
def test_matches_bruteforce_replay_oracle(graph, cluster):
    assume(_demand_fits(graph, cluster))
    result = simulate(graph, cluster)
    assert result.makespan_s == pytest.approx(oracle_makespan(graph, cluster), rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(strategies.instance_graphs(max_nodes=10), strategies.small_clusters(max_nodes=3))
def test_lower_bounds_and_safety(graph, cluster):
    assume(_demand_fits(graph, cluster))
    result = simulate(graph, cluster)
    cp_len, _ = critical_path(graph)
    assert result.makespan_s >= cp_len - 1e-9
    exclusive_work = sum(
        i.duration_s * node_demand(i.cores, cluster.queues.get(i.queue, QueueSpec()), cluster)
        for i in graph.instances.values()
        if cluster.queues.get(i.queue, QueueSpec()).exclusive_nodes
    )
    if cluster.node_count is not None:
        assert result.makespan_s >= exclusive_work / cluster.node_count - 1e-9
    for iid in graph.ids():
        for p in graph.preds[iid]:
            assert result.start_times[iid] >= result.finish_times[p] - 1e-12


@settings(max_examples=100, deadline=None)
@given(strategies.instance_graphs(max_nodes=10))
def test_critical_path_chain_is_consistent(graph):
    length, chain = critical_path(graph)
    assert sum(graph.instances[i].duration_s for i in chain) == pytest.approx(length)
    for a, b in zip(chain, chain[1:]):
        assert a in graph.preds[b]


@settings(max_examples=60, deadline=None)
@given(strategies.instance_graphs(max_nodes=8), strategies.small_clusters(max_nodes=2))
def test_capacity_respected_at_start_events(graph, cluster):
    assume(_demand_fits(graph, cluster))
    result = simulate(graph, cluster)
    # count occupied nodes over the event timeline
    points = sorted({e.time_s for e in result.events})
    for t in points:
        occupied = 0.0
        for iid in graph.ids():
            if iid not in result.start_times:
                continue
            if result.start_times[iid] <= t < result.finish_times[iid]:
                i = graph.instances[iid]
                q = cluster.queues.get(i.queue, QueueSpec())
                occupied += node_demand(i.cores, q, cluster) if q.exclusive_nodes else (
                    i.cores / cluster.cores_per_node
                )
        if cluster.node_count is not None:
            assert occupied <= cluster.node_count + 1e-9
