"""Pair and corpus metrics: IoU, graph edit distance, rationality, delta EUI."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .gate import ComplianceReport
from .plan import KINDS, MAX_INSTANCES, ROOM_BASE, Floorplan
from .topology import AdjacencyGraph, Connection

EXACT_GED_LIMIT = 12

NODE_COST = 1.0  # insert, delete, or kind substitution
EDGE_COST = 1.0  # insert or delete
EDGE_RETYPE_COST = 0.5


def _kind_index_grid(plan: Floorplan) -> np.ndarray:
    grid = plan.grid.astype(np.int64)
    return np.where(grid >= ROOM_BASE, (grid - ROOM_BASE) // MAX_INSTANCES, -1)


def iou(a: Floorplan, b: Floorplan) -> float:
    """Mean per-kind IoU; instances of one kind are merged into one mask."""
    if a.grid.shape != b.grid.shape:
        raise ValueError(f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}")
    if a.scale != b.scale:
        raise ValueError(f"scale mismatch: {a.scale} vs {b.scale}")
    ka, kb = _kind_index_grid(a), _kind_index_grid(b)
    scores = []
    for k in range(len(KINDS)):
        ma, mb = ka == k, kb == k
        union = np.count_nonzero(ma | mb)
        if union:
            scores.append(np.count_nonzero(ma & mb) / union)
    return float(np.mean(scores)) if scores else 1.0


# -- graph edit distance -------------------------------------------------------

class GedResult(NamedTuple):
    cost: float
    approx: bool


class _Graph:
    """Compact labelled graph: kind indices and an edge-type matrix (0 = none)."""

    def __init__(self, graph: AdjacencyGraph):
        ids = [n.id for n in graph.nodes]
        pos = {nid: i for i, nid in enumerate(ids)}
        self.n = len(ids)
        self.kinds = [n.kind.index for n in graph.nodes]
        self.adj = np.zeros((self.n, self.n), dtype=np.int8)
        for e in graph.edges:
            i, j = pos[e.a], pos[e.b]
            self.adj[i, j] = self.adj[j, i] = int(e.connection)
        self.n_edges = len(graph.edges)


def _edge_cost(x: int, y: int) -> float:
    if x == y:
        return 0.0
    if x and y:
        return EDGE_RETYPE_COST
    return EDGE_COST


def mapping_cost(a: _Graph, b: _Graph, mapping: Sequence[int | None]) -> float:
    """Cost of the edit path induced by ``mapping`` (a-node -> b-node or None)."""
    cost = 0.0
    image = set()
    for i, j in enumerate(mapping):
        if j is None:
            cost += NODE_COST
        else:
            image.add(j)
            if a.kinds[i] != b.kinds[j]:
                cost += NODE_COST
    cost += NODE_COST * (b.n - len(image))
    for i in range(a.n):
        for k in range(i + 1, a.n):
            ji, jk = mapping[i], mapping[k]
            eb = b.adj[ji, jk] if ji is not None and jk is not None else 0
            cost += _edge_cost(int(a.adj[i, k]), int(eb))
    for j in range(b.n):
        for l in range(j + 1, b.n):
            if (j not in image or l not in image) and b.adj[j, l]:
                cost += EDGE_COST
    return cost


def _greedy_mapping(a: _Graph, b: _Graph) -> list[int | None]:
    """Assignment on node costs plus a degree-difference edge estimate."""
    n = a.n + b.n
    big = 1e6
    cost = np.full((n, n), big)
    deg_a = (a.adj > 0).sum(axis=1)
    deg_b = (b.adj > 0).sum(axis=1)
    for i in range(a.n):
        for j in range(b.n):
            cost[i, j] = (a.kinds[i] != b.kinds[j]) * NODE_COST + 0.5 * abs(int(deg_a[i]) - int(deg_b[j]))
        cost[i, b.n + i] = NODE_COST + 0.5 * deg_a[i]
    for j in range(b.n):
        cost[a.n + j, j] = NODE_COST + 0.5 * deg_b[j]
    cost[a.n:, b.n:] = 0.0
    rows, cols = linear_sum_assignment(cost)
    mapping: list[int | None] = [None] * a.n
    for r, c in zip(rows, cols):
        if r < a.n and c < b.n:
            mapping[r] = int(c)
    return mapping


def _label_bound(kinds_a: list[int], kinds_b: list[int]) -> float:
    """Node-edit lower bound between two kind multisets."""
    common = 0
    pool: dict[int, int] = {}
    for k in kinds_b:
        pool[k] = pool.get(k, 0) + 1
    for k in kinds_a:
        if pool.get(k, 0):
            pool[k] -= 1
            common += 1
    return NODE_COST * (max(len(kinds_a), len(kinds_b)) - common)


def _exact_ged(a: _Graph, b: _Graph) -> float:
    order = sorted(range(a.n), key=lambda i: -int((a.adj[i] > 0).sum()))
    best = mapping_cost(a, b, _greedy_mapping(a, b))
    assign: list[int | None] = [None] * a.n
    used = [False] * b.n
    # Edges of a / b incident to not-yet-decided nodes give a counting bound.
    a_adj = a.adj
    b_adj = b.adj

    def remaining_edges(adj, decided_mask):
        undecided = ~decided_mask
        inner = adj[np.ix_(undecided, undecided)]
        cross = adj[np.ix_(undecided, decided_mask)]
        return int(np.count_nonzero(inner)) // 2 + int(np.count_nonzero(cross))

    def search(depth: int, cost: float, decided_a: np.ndarray):
        nonlocal best
        if depth == a.n:
            total = cost
            free = [j for j in range(b.n) if not used[j]]
            total += NODE_COST * len(free)
            fset = set(free)
            for x in range(b.n):
                for y in range(x + 1, b.n):
                    if b_adj[x, y] and (x in fset or y in fset):
                        total += EDGE_COST
            if total < best:
                best = total
            return
        rest_a = [a.kinds[order[d]] for d in range(depth, a.n)]
        rest_b = [b.kinds[j] for j in range(b.n) if not used[j]]
        decided_b = np.array(used, dtype=bool)
        bound = (_label_bound(rest_a, rest_b)
                 + EDGE_COST * abs(remaining_edges(a_adj, decided_a) - remaining_edges(b_adj, decided_b)))
        if cost + bound >= best:
            return
        i = order[depth]
        placed = [order[d] for d in range(depth)]
        options = []
        for j in range(b.n):
            if used[j]:
                continue
            step = NODE_COST * (a.kinds[i] != b.kinds[j])
            for p in placed:
                q = assign[p]
                step += _edge_cost(int(a_adj[i, p]), int(b_adj[j, q]) if q is not None else 0)
            options.append((step, j))
        step = NODE_COST + sum(EDGE_COST for p in placed if a_adj[i, p])
        options.append((step, None))
        options.sort(key=lambda t: (t[0], -1 if t[1] is None else t[1]))
        decided_a = decided_a.copy()
        decided_a[i] = True
        for step, j in options:
            if cost + step >= best:
                continue
            assign[i] = j
            if j is not None:
                used[j] = True
            search(depth + 1, cost + step, decided_a)
            if j is not None:
                used[j] = False
            assign[i] = None

    search(0, 0.0, np.zeros(a.n, dtype=bool))
    return best


def ged(a: AdjacencyGraph, b: AdjacencyGraph, exact_limit: int = EXACT_GED_LIMIT) -> GedResult:
    """Graph edit distance under unit node/edge costs and 0.5 edge retyping.

    Exact branch-and-bound when both graphs have at most ``exact_limit``
    nodes; otherwise an assignment-based upper bound flagged ``approx``.
    """
    ga, gb = _Graph(a), _Graph(b)
    if max(ga.n, gb.n) <= exact_limit:
        return GedResult(_exact_ged(ga, gb), False)
    return GedResult(mapping_cost(ga, gb, _greedy_mapping(ga, gb)), True)


# -- corpus metrics --------------------------------------------------------------

@dataclass(frozen=True)
class PairMetrics:
    iou: float
    ged: float
    ged_approx: bool = False


@dataclass(frozen=True)
class CorpusMetrics:
    rationality: float
    mean_eui: float
    delta_eui_pct: float | None = None

    def to_dict(self) -> dict:
        return {"rationality": self.rationality, "mean_eui": self.mean_eui,
                "delta_eui_pct": self.delta_eui_pct}


def rationality(corpus: Iterable[ComplianceReport]) -> float:
    """Share of reports passing fire, area and connectivity (energy ignored)."""
    reports = list(corpus)
    if not reports:
        raise ValueError("rationality of an empty corpus")
    return sum(r.rational for r in reports) / len(reports)


def mean_eui(corpus: Iterable[ComplianceReport]) -> float:
    vals = [r.metrics.eui for r in corpus]
    if not vals:
        raise ValueError("mean EUI of an empty corpus")
    return float(np.mean(vals))


def delta_eui(corpus: Iterable[ComplianceReport], reference: Iterable[ComplianceReport]) -> float:
    """Signed percentage change of mean EUI against ``reference``; negative is better."""
    ref = mean_eui(reference)
    if ref == 0:
        raise ValueError("reference mean EUI is zero")
    return (mean_eui(corpus) - ref) / ref * 100.0


def corpus_metrics(corpus: Sequence[ComplianceReport],
                   reference: Sequence[ComplianceReport] | None = None) -> CorpusMetrics:
    return CorpusMetrics(rationality(corpus), mean_eui(corpus),
                         delta_eui(corpus, reference) if reference else None)
