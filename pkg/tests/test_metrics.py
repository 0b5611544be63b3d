import random

import pytest
from hypothesis import given, settings, strategies as st

from greengate.gate import MetricVector, gate
from greengate.generator import GenSpec, synth
from greengate.metrics import corpus_metrics, delta_eui, ged, iou, mean_eui, rationality
from greengate.plan import RoomKind
from greengate.topology import AdjacencyGraph, Connection, Edge, Node, build_adjacency

from conftest import make_plan
from oracles import ged_bruteforce

BED_SMALL = """
## ## ## ## ## ## ## ##
## B0 B0 ## L0 L0 L0 ##
## B0 B0 DR L0 L0 L0 ##
## ## ## ## L0 L0 L0 EN
## ## ## ## L0 L0 L0 ##
## ## ## ## L0 L0 L0 ##
## ## ## ## L0 L0 L0 ##
## ## ## ## ## ## ## ##
"""

BED_TALL = """
## ## ## ## ## ## ## ##
## B0 B0 ## L0 L0 L0 ##
## B0 B0 DR L0 L0 L0 ##
## B0 B0 ## L0 L0 L0 EN
## B0 B0 ## L0 L0 L0 ##
## ## ## ## L0 L0 L0 ##
## ## ## ## L0 L0 L0 ##
## ## ## ## ## ## ## ##
"""


def test_iou_half_overlapping_bedroom_and_identical_living_room():
    a, b = make_plan(BED_SMALL), make_plan(BED_TALL)
    # bedroom: 4 shared cells of 8 in the union; living room identical
    assert iou(a, b) == pytest.approx(0.75)
    assert iou(b, a) == iou(a, b)


def test_iou_identity_and_disjoint(three_room):
    assert iou(three_room, three_room) == 1.0
    a = make_plan(BED_SMALL)
    moved = make_plan(BED_SMALL.replace("B0", "K0"))
    # kinds present in either plan: bedroom 0, kitchen 0, living room 1
    assert iou(a, moved) == pytest.approx(1 / 3)


def test_iou_rejects_mismatched_plans(three_room, minimal):
    with pytest.raises(ValueError, match="dimension mismatch"):
        iou(three_room, minimal)
    with pytest.raises(ValueError, match="scale mismatch"):
        iou(three_room, three_room.replace(scale=0.3))


KINDS = list(RoomKind)
TYPES = list(Connection)


def _random_graph(rng, n, n_kinds=4):
    nodes = tuple(Node(f"n{i}", KINDS[rng.randrange(n_kinds)], 1.0) for i in range(n))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.4:
                edges.append(Edge(f"n{i}", f"n{j}", rng.choice(TYPES)))
    return AdjacencyGraph(nodes, tuple(edges), None)


def _oracle(a, b):
    ka = [n.kind for n in a.nodes]
    kb = [n.kind for n in b.nodes]
    ea = {frozenset((int(e.a[1:]), int(e.b[1:]))): e.connection.label for e in a.edges}
    eb = {frozenset((int(e.a[1:]), int(e.b[1:]))): e.connection.label for e in b.edges}
    return ged_bruteforce(ka, ea, kb, eb)


def test_ged_matches_bruteforce_on_random_pairs():
    rng = random.Random(20240)
    for _ in range(60):
        a = _random_graph(rng, rng.randint(0, 5))
        b = _random_graph(rng, rng.randint(0, 5))
        res = ged(a, b)
        assert not res.approx
        assert res.cost == _oracle(a, b)


def test_ged_simple_cases(three_room):
    g = build_adjacency(three_room)
    assert ged(g, g) == (0.0, False)
    extra = AdjacencyGraph(g.nodes, g.edges + (Edge("B0", "K0", Connection.DOOR),), g.entrance_room)
    assert ged(g, extra).cost == 1.0
    retyped = AdjacencyGraph(g.nodes, (Edge("B0", "L0", Connection.OPEN), g.edges[1]), g.entrance_room)
    assert ged(g, retyped).cost == 0.5


def test_ged_isomorphic_relabelling_is_zero():
    rng = random.Random(3)
    a = _random_graph(rng, 7)
    perm = list(range(7))
    rng.shuffle(perm)
    nodes = tuple(Node(f"n{perm[i]}", a.nodes[i].kind, 1.0) for i in range(7))
    edges = tuple(Edge(*sorted((f"n{perm[int(e.a[1:])]}", f"n{perm[int(e.b[1:])]}")), e.connection)
                  for e in a.edges)
    b = AdjacencyGraph(tuple(sorted(nodes, key=lambda n: n.id)), edges, None)
    assert ged(a, b).cost == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_ged_axioms(seed):
    rng = random.Random(seed)
    a, b, c = (_random_graph(rng, rng.randint(1, 5)) for _ in range(3))
    ab, ba = ged(a, b).cost, ged(b, a).cost
    assert ab >= 0 and ab == ba
    assert ged(a, a).cost == 0
    assert ged(a, c).cost <= ab + ged(b, c).cost + 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_greedy_mode_is_an_upper_bound(seed):
    rng = random.Random(seed)
    a, b = _random_graph(rng, rng.randint(2, 7)), _random_graph(rng, rng.randint(2, 7))
    approx = ged(a, b, exact_limit=0)
    assert approx.approx
    assert approx.cost >= ged(a, b).cost


def test_large_graphs_use_flagged_approximation():
    rng = random.Random(5)
    a, b = _random_graph(rng, 14, 8), _random_graph(rng, 13, 8)
    res = ged(a, b)
    assert res.approx and res.cost >= 1.0


def test_ged_on_synthetic_plans_is_finite():
    prog = (RoomKind.LIVING_ROOM, RoomKind.BEDROOM, RoomKind.BEDROOM, RoomKind.KITCHEN, RoomKind.BATHROOM)
    a = build_adjacency(synth(GenSpec(36, 30, prog, 1)))
    b = build_adjacency(synth(GenSpec(36, 30, prog, 2, noise=1.0)))
    assert 0 <= ged(a, b).cost < len(a.nodes) + len(b.nodes) + len(a.edges) + len(b.edges)


def _report(eui=100.0, f=10.0, a=80.0, g=1.0, unreachable=0):
    return gate(MetricVector((0.0,) * 60, f, a, g, eui, unreachable))


def test_rationality_counts_functional_gates_only():
    corpus = [_report(), _report(eui=200.0), _report(f=20.0), _report(a=80.0)]
    # the energy failure still counts as rational
    assert rationality(corpus) == 0.75
    assert rationality(list(reversed(corpus))) == 0.75
    assert rationality([_report()] * 3) == 1.0
    with pytest.raises(ValueError):
        rationality([])


def test_delta_eui_sign_convention():
    assert delta_eui([_report(eui=120.0)], [_report(eui=134.0)]) == pytest.approx(-10.447761, abs=1e-6)
    assert round(delta_eui([_report(eui=120.0)], [_report(eui=134.0)]), 2) == -10.45
    assert round(delta_eui([_report(eui=134.27)], [_report(eui=134.0)]), 1) == 0.2
    same = [_report(eui=101.0), _report(eui=99.0)]
    assert delta_eui(same, same) == 0.0
    with pytest.raises(ValueError, match="zero"):
        delta_eui(same, [_report(eui=0.0)])
    with pytest.raises(ValueError):
        mean_eui([])


def test_corpus_metrics_bundle():
    corpus = [_report(eui=110.0), _report(eui=130.0, g=0.8)]
    m = corpus_metrics(corpus, [_report(eui=100.0)])
    assert m.to_dict() == {"rationality": 0.5, "mean_eui": 120.0, "delta_eui_pct": pytest.approx(20.0)}
    assert corpus_metrics(corpus).delta_eui_pct is None
