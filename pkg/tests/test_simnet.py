import time

import networkx as nx
import numpy as np
import pytest

from jurysim.protocol import Behavior, Verdict, ms
from jurysim.simnet import (
    BlameKind,
    CausalityError,
    EventKind,
    EventQueue,
    Phase,
    Scenario,
    TopologyError,
    adjacency_of,
    build_mesh,
    default_time_params,
    flood,
    grid_flood,
    run_election,
    run_round,
)
from jurysim.simnet.election import EMPTY, decode_node, encode_key


def _connected(top):
    g = nx.Graph()
    g.add_nodes_from(range(top.n))
    for v in range(top.n):
        g.add_edges_from((v, u) for u in top.neighbors(v))
    return g


# -- topology --------------------------------------------------------------


def test_mesh_3x3():
    top = build_mesh(9)
    assert (top.width, top.height) == (3, 3)
    assert top.degree[[0, 2, 6, 8]].tolist() == [2, 2, 2, 2]
    assert top.degree[4] == 4
    assert top.edge_count == 12


def test_mesh_12_and_partial_10():
    assert (build_mesh(12).width, build_mesh(12).height) == (4, 3)
    top = build_mesh(10)
    assert (top.width, top.height) == (4, 3)
    assert nx.is_connected(_connected(top))
    assert top.neighbors(9) == [8, 5]


@pytest.mark.parametrize("n", [2, 3, 5, 7, 10, 17, 50, 99, 101])
def test_mesh_connected_and_symmetric(n):
    top = build_mesh(n)
    g = _connected(top)
    assert nx.is_connected(g)
    for v in range(n):
        for u in top.neighbors(v):
            assert v in top.neighbors(u)
            assert top.hops(u, v) == 1


def test_mesh_rejects_tiny():
    with pytest.raises(TopologyError):
        build_mesh(1)


def test_default_time_params():
    t_min, t_max, t_ele = default_time_params(2000)
    assert t_min == ms(100)
    assert abs(t_ele - ms(447.2136)) <= 1
    assert abs(t_max - ms(894.4272)) <= 2
    assert default_time_params(10000) == (ms(100), ms(2000), ms(1000))
    assert default_time_params(100) == (ms(100), ms(200), ms(100))


# -- routing ---------------------------------------------------------------


def test_route_examples():
    top = build_mesh(9)
    assert top.route(0, 2) == [0, 1, 2]
    assert top.hops(0, 2) * top.link_delay == ms(10)
    assert len(top.route(1, 0)) - 1 == 1
    path = top.route(0, 8)
    assert len(path) - 1 == 4
    assert 2 in path
    assert top.hops(0, 8) * top.link_delay == ms(20)


@pytest.mark.parametrize("n", [10, 23, 50])
def test_routes_are_shortest_paths(n):
    top = build_mesh(n)
    g = _connected(top)
    for src in range(n):
        for dst in range(n):
            if src == dst:
                continue
            path = top.route(src, dst)
            assert path[0] == src and path[-1] == dst
            assert all(b in top.neighbors(a) for a, b in zip(path, path[1:]))
            assert len(path) - 1 == top.hops(src, dst) == nx.shortest_path_length(g, src, dst)


# -- event queue and flooding ----------------------------------------------


def test_queue_orders_by_time_then_insertion():
    q = EventQueue()
    q.push(5, EventKind.DELIVER, 1, "a")
    q.push(3, EventKind.DELIVER, 2, "b")
    q.push(5, EventKind.DELIVER, 3, "c")
    assert [q.pop().payload for _ in range(3)] == ["b", "a", "c"]


def test_queue_refuses_past_events():
    q = EventQueue()
    q.push(10, EventKind.TIMER_EXPIRY, 0)
    q.pop()
    with pytest.raises(CausalityError):
        q.push(9, EventKind.TIMER_EXPIRY, 0)


def test_flood_path():
    sched = flood(0, {0: [1], 1: [0, 2], 2: [1]}, link_delay=ms(5))
    assert sched.transmissions == 2
    assert sched.first_receipt[2] == ms(10)
    sched = flood(0, {0: [1], 1: [0, 2], 2: [1]}, link_delay=ms(5), processing=ms(1))
    assert sched.first_receipt[2] == ms(12)


def test_flood_triangle():
    sched = flood(0, {0: [1, 2], 1: [0, 2], 2: [0, 1]}, link_delay=1, record=True)
    assert sched.transmissions == 4
    assert sorted((a, b) for a, b, _ in sched.deliveries) == [(0, 1), (0, 2), (1, 2), (2, 1)]
    assert sched.duplicates == 2


@pytest.mark.parametrize("seed", range(20))
def test_flood_counts_on_random_graphs(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 120))
    g = nx.connected_watts_strogatz_graph(n, 4, 0.3, seed=seed) if n > 4 else nx.path_graph(n)
    adjacency = {v: sorted(g.neighbors(v)) for v in g}
    origin = int(rng.integers(n))
    sched = flood(origin, adjacency, link_delay=3)
    assert sched.transmissions == 2 * g.number_of_edges() - n + 1
    assert sorted(sched.processed) == list(range(n))
    assert all(c == 1 for c in sched.processed.values())
    dist = nx.single_source_shortest_path_length(g, origin)
    assert all(sched.first_receipt[v] == 3 * d for v, d in dist.items())


@pytest.mark.parametrize("n", [9, 10, 37, 100])
def test_grid_flood_matches_event_flood(n):
    top = build_mesh(n)
    origin = n // 3
    event = flood(origin, adjacency_of(top), link_delay=ms(5), start=ms(7))
    closed = grid_flood(top, [(origin, ms(7))], ms(5))
    assert closed.transmissions == event.transmissions == 2 * top.edge_count - n + 1
    assert closed.arrival.tolist() == [event.first_receipt[v] for v in range(n)]
    assert closed.last_delivery == event.last_delivery


def test_grid_flood_multi_source():
    top = build_mesh(25)
    sources = [(0, 0), (24, ms(3))]
    fl = grid_flood(top, sources, ms(5))
    deg = top.degree
    assert fl.transmissions == int(deg[0] + deg[24] + (deg.sum() - deg[0] - deg[24]) - (25 - 2))
    expect = np.minimum(top.hops_from(0) * ms(5), ms(3) + top.hops_from(24) * ms(5))
    assert fl.arrival.tolist() == expect.tolist()


# -- election --------------------------------------------------------------


def _election_inputs(n, seed, t_max=ms(200)):
    top = build_mesh(n)
    rng = np.random.default_rng(seed)
    waits = ms(100) + np.minimum(np.rint(rng.exponential((t_max - ms(100)) / 3, n)).astype(np.int64), t_max - ms(100))
    start = top.hops_from(int(rng.integers(n))) * ms(5)
    return top, start, waits


@pytest.mark.parametrize("n,j,seed,t_ele", [(30, 4, 0, ms(60)), (120, 7, 1, ms(150)), (400, 10, 2, ms(100)), (400, 22, 3, ms(30))])
def test_election_engines_agree(n, j, seed, t_ele):
    top, start, waits = _election_inputs(n, seed)
    eligible = np.ones(n, dtype=bool)
    eligible[seed] = False
    a = run_election(top, start, waits, j, t_ele, ms(89), ms(5), backend="numba", eligible=eligible)
    b = run_election(top, start, waits, j, t_ele, ms(89), ms(5), backend="python", eligible=eligible)
    assert a.messages == b.messages
    assert a.last_delivery == b.last_delivery
    assert a.events == b.events
    assert np.array_equal(a.snapshots, b.snapshots)
    assert np.array_equal(a.juror, b.juror)
    assert np.array_equal(a.announced, b.announced)
    assert not a.announced[seed]


@pytest.mark.parametrize("n,j", [(50, 4), (300, 22), (1000, 10)])
def test_election_converges_with_generous_timeout(n, j):
    top, start, waits = _election_inputs(n, n)
    # covers the blame skew, certificate generation and a full crossing
    t_ele = 2 * top.diameter * ms(5) + ms(89) + ms(100)
    res = run_election(top, start, waits, j, t_ele, ms(89), ms(5))
    assert (res.snapshots == res.snapshots[0]).all()
    ideal = np.sort(encode_key(waits, np.arange(n)))[:j]
    assert res.snapshots[0].tolist() == ideal.tolist()
    assert sorted(res.jurors.tolist()) == sorted(decode_node(ideal).tolist())


def test_election_snapshot_sorted_and_padded():
    top, start, waits = _election_inputs(30, 5)
    res = run_election(top, start, waits, 8, ms(1), ms(89), ms(5))
    for row in res.snapshots:
        real = row[row != EMPTY]
        assert (np.diff(real) > 0).all()
        assert (row[len(real):] == EMPTY).all()


# -- full round ------------------------------------------------------------


def test_round_is_deterministic():
    sc = Scenario(n=400, seed=11)
    a, b = run_round(sc), run_round(sc)
    assert a.trace_hash == b.trace_hash
    assert a.phases == b.phases
    assert run_round(sc.with_seed(12)).trace_hash != a.trace_hash


def test_round_engines_agree():
    sc = Scenario(n=300, seed=4)
    a = run_round(sc)
    b = run_round(Scenario(n=300, seed=4, election_backend="python"))
    assert a.trace_hash == b.trace_hash


@pytest.mark.parametrize("seed", range(6))
def test_benign_phase_monotonicity(seed):
    res = run_round(Scenario(n=900, seed=seed))
    times = [res.phases[p.value].completion_time for p in
             (Phase.INITIAL_ATTESTATION, Phase.BLAME, Phase.ELECTION, Phase.BFT, Phase.DECISION)]
    assert times == sorted(times)
    assert res.final_decision.verdict is Verdict.COMPROMISED
    assert res.final_decision.subject == res.blamed


def test_metric_conservation():
    sc = Scenario(n=900, seed=3, blame_kind=BlameKind.UNJUSTIFIED)
    res = run_round(sc)
    sizes = sc.sizes
    per_message = {
        "Blame": sizes.blame,
        "Election": sizes.certificate,
        "BFT": sizes.bft,
        "BlamerBFT": sizes.bft,
        "Decision": sizes.decision,
        "InitialAttestation": sizes.attestation_response,
    }
    for name, size in per_message.items():
        p = res.phases[name]
        assert p.bytes_sent == p.messages * size
        assert p.messages_per_node * sc.n == pytest.approx(p.messages)
    assert res.total_bytes == sum(p.bytes_sent for p in res.phases.values())
    top = build_mesh(sc.n)
    assert res.phases["Blame"].messages == 2 * top.edge_count - sc.n + 1


def test_unjustified_blame_round():
    res = run_round(Scenario(n=900, seed=2, blame_kind=BlameKind.UNJUSTIFIED))
    assert list(res.phases) == [p.value for p in Scenario(n=900, blame_kind=BlameKind.UNJUSTIFIED).phases]
    assert res.completed
    assert res.final_decision.subject == res.blamer
    assert res.final_decision.verdict is Verdict.COMPROMISED
    t = {k: v.completion_time for k, v in res.phases.items()}
    assert t["BFT"] <= t["BlamerAtt"] <= t["BlamerBFT"] <= t["Decision"]


def test_wait_study_examples():
    good = run_round(Scenario(n=2000, t_min=ms(100), t_max=ms(800), t_ele=ms(400), seed=0))
    assert good.decisions_reached == 22
    bad = run_round(Scenario(n=2000, t_min=ms(100), t_max=ms(800), t_ele=ms(50), seed=0))
    assert bad.decisions_reached < 22
    assert bad.non_juror_bft_messages > good.non_juror_bft_messages


def test_silent_byzantine_jurors_tolerated():
    sc = Scenario(n=400, seed=1)
    jury = run_round(sc).jury
    res = run_round(Scenario(n=400, seed=1, adversaries=jury[1:4], byzantine_behavior=Behavior.SILENT))
    assert res.completed
    assert res.decisions_reached == len(jury) - 3


def test_dissenting_juror_is_auto_blamed():
    jury = run_round(Scenario(n=400, seed=1)).jury
    res = run_round(Scenario(n=400, seed=1, adversaries=(jury[2],), byzantine_behavior=Behavior.DISSENT))
    assert res.completed
    assert jury[2] in {b.target for b in res.auto_blames}


def test_desk_scale_gate():
    t0 = time.perf_counter()
    res = run_round(Scenario(n=10000, seed=0))
    assert time.perf_counter() - t0 < 60
    assert res.completed


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(n=10, j=10)
    with pytest.raises(ValueError):
        Scenario(n=10, adversary_fraction=1.5)
    with pytest.raises(ValueError):
        Scenario(n=10, j=3, adversaries=(12,))
