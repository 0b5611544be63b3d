"""Room-adjacency graph and the functional-connectivity rule catalog.

Rules (``rules=v1``); a rule is skipped when the room kinds it talks about
are absent from the plan.

R1  every non-balcony room is reachable from the entrance room through
    Door/Open edges
R2  exactly one entrance room, and it is a living room, corridor or dining room
R3  every kitchen has a Door/Open edge to a living or dining room
R4  no bedroom is reachable only through a bathroom or another bedroom
R5  every bathroom has a Door edge to some room
R6  every balcony has a Door or WindowLink edge to exactly one interior room
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from itertools import combinations

import numpy as np
from scipy import ndimage

from .plan import Floorplan, PlanError, ROOM_BASE, RoomKind, Tag, code_kind, room_areas, room_id

RULES_VERSION = "v1"


class Connection(IntEnum):
    """Edge type; larger is stronger."""

    WINDOW_LINK = 1
    OPEN = 2
    DOOR = 3

    @property
    def label(self) -> str:
        return {1: "WindowLink", 2: "Open", 3: "Door"}[self.value]

    @classmethod
    def from_label(cls, label: str) -> Connection:
        return {"WindowLink": cls.WINDOW_LINK, "Open": cls.OPEN, "Door": cls.DOOR}[label]


@dataclass(frozen=True)
class Node:
    id: str
    kind: RoomKind
    area: float


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    connection: Connection


@dataclass(frozen=True)
class AdjacencyGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    entrance_room: str | None
    entrance_candidates: tuple[str, ...] = ()

    def kind_of(self, node_id: str) -> RoomKind:
        return self._kinds[node_id]

    @property
    def _kinds(self) -> dict[str, RoomKind]:
        return {n.id: n.kind for n in self.nodes}

    def neighbors(self, node_id: str, types=tuple(Connection)) -> list[tuple[str, Connection]]:
        out = []
        for e in self.edges:
            if e.connection not in types:
                continue
            if e.a == node_id:
                out.append((e.b, e.connection))
            elif e.b == node_id:
                out.append((e.a, e.connection))
        return out

    def edge(self, a: str, b: str) -> Connection | None:
        a, b = min(a, b), max(a, b)
        for e in self.edges:
            if e.a == a and e.b == b:
                return e.connection
        return None

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "kind": n.kind.value, "area": n.area} for n in self.nodes],
            "edges": [{"a": e.a, "b": e.b, "connection": e.connection.label} for e in self.edges],
            "entrance_room": self.entrance_room,
        }

    @classmethod
    def from_dict(cls, data: dict) -> AdjacencyGraph:
        nodes = tuple(sorted((Node(n["id"], RoomKind(n["kind"]), float(n.get("area", 0.0)))
                              for n in data["nodes"]), key=lambda n: n.id))
        edges = {}
        for e in data["edges"]:
            a, b = sorted((e["a"], e["b"]))
            if a == b:
                raise ValueError(f"self-loop on {a}")
            conn = Connection.from_label(e["connection"])
            edges[(a, b)] = max(conn, edges.get((a, b), conn))
        entrance = data.get("entrance_room")
        return cls(nodes, tuple(Edge(a, b, c) for (a, b), c in sorted(edges.items())),
                   entrance, (entrance,) if entrance else ())


def _neighbour_codes(grid: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """4-neighbour codes of each cell in ``mask``; 0 pads the border."""
    p = np.pad(grid, 1)
    rows, cols = np.nonzero(mask)
    rows = rows + 1
    cols = cols + 1
    return np.stack([p[rows - 1, cols], p[rows + 1, cols], p[rows, cols - 1], p[rows, cols + 1]], axis=1)


def _linked_pairs(grid: np.ndarray, tag: Tag) -> set[tuple[int, int]]:
    pairs = set()
    for codes in _neighbour_codes(grid, grid == tag):
        rooms = sorted({int(c) for c in codes if c >= ROOM_BASE})
        pairs.update(combinations(rooms, 2))
    return pairs


def _open_pairs(grid: np.ndarray) -> set[tuple[int, int]]:
    pairs = set()
    for a, b in ((grid[:, :-1], grid[:, 1:]), (grid[:-1, :], grid[1:, :])):
        hit = (a >= ROOM_BASE) & (b >= ROOM_BASE) & (a != b)
        lo = np.minimum(a[hit], b[hit]).astype(np.int32)
        hi = np.maximum(a[hit], b[hit]).astype(np.int32)
        for key in np.unique(lo * 256 + hi):
            pairs.add((int(key) // 256, int(key) % 256))
    return pairs


def entrance_rooms(plan: Floorplan) -> list[int]:
    """Room codes 8-adjacent to any Entrance cell."""
    grid = plan.grid
    near = ndimage.binary_dilation(grid == Tag.ENTRANCE, structure=np.ones((3, 3), bool))
    codes = np.unique(grid[near & (grid >= ROOM_BASE)])
    return [int(c) for c in codes]


def build_adjacency(plan: Floorplan) -> AdjacencyGraph:
    grid = plan.grid
    strength: dict[tuple[int, int], Connection] = {}
    for pairs, conn in ((_linked_pairs(grid, Tag.WINDOW), Connection.WINDOW_LINK),
                        (_open_pairs(grid), Connection.OPEN),
                        (_linked_pairs(grid, Tag.DOOR), Connection.DOOR)):
        for pair in pairs:
            strength[pair] = max(conn, strength.get(pair, conn))

    candidates = entrance_rooms(plan)
    if not candidates:
        r, c = np.argwhere(grid == Tag.ENTRANCE)[0]
        raise PlanError("entrance opens into wall", int(r), int(c))

    nodes = sorted((Node(room_id(code), code_kind(code), area)
                    for code, area in room_areas(plan).items()), key=lambda n: n.id)
    edges = []
    for (a, b), conn in strength.items():
        ia, ib = sorted((room_id(a), room_id(b)))
        edges.append(Edge(ia, ib, conn))
    edges.sort(key=lambda e: (e.a, e.b))
    cand_ids = tuple(sorted(room_id(c) for c in candidates))
    return AdjacencyGraph(tuple(nodes), tuple(edges), cand_ids[0], cand_ids)


# -- rules -------------------------------------------------------------------

@dataclass(frozen=True)
class RuleResult:
    rule: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ConnectivityScore:
    score: float
    rule_results: tuple[RuleResult, ...]

    @property
    def applicable(self) -> int:
        return len(self.rule_results)

    def failed(self) -> list[str]:
        return [r.rule for r in self.rule_results if not r.passed]

    def to_dict(self) -> dict:
        return {"score": self.score,
                "rules": [{"rule": r.rule, "pass": r.passed, "detail": r.detail}
                          for r in self.rule_results]}


_CIRCULATION = (Connection.DOOR, Connection.OPEN)
_PUBLIC_ENTRY = {RoomKind.LIVING_ROOM, RoomKind.CORRIDOR, RoomKind.DINING_ROOM}


def _reachable(graph: AdjacencyGraph, start: str, blocked=frozenset()) -> set[str]:
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if cur != start and cur in blocked:
            continue
        for nxt, _ in graph.neighbors(cur, _CIRCULATION):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def check_connectivity(graph: AdjacencyGraph) -> ConnectivityScore:
    kinds = graph._kinds
    by_kind: dict[RoomKind, list[str]] = {}
    for n in graph.nodes:
        by_kind.setdefault(n.kind, []).append(n.id)
    entry = graph.entrance_room
    reach = _reachable(graph, entry) if entry in kinds else set()
    results = []

    missing = [n.id for n in graph.nodes if n.kind is not RoomKind.BALCONY and n.id not in reach]
    results.append(RuleResult("R1", not missing,
                              f"unreachable: {', '.join(missing)}" if missing else "all rooms reachable"))

    cands = graph.entrance_candidates or ((entry,) if entry else ())
    if len(cands) != 1:
        results.append(RuleResult("R2", False, f"{len(cands)} entrance rooms: {', '.join(cands)}"))
    else:
        kind = kinds.get(cands[0])
        ok = kind in _PUBLIC_ENTRY
        results.append(RuleResult("R2", ok, f"entrance opens into {cands[0]}"
                                  + ("" if ok else f" ({kind.value if kind else '?'})")))

    if RoomKind.KITCHEN in by_kind:
        bad = [k for k in by_kind[RoomKind.KITCHEN]
               if not any(kinds[n] in (RoomKind.LIVING_ROOM, RoomKind.DINING_ROOM)
                          for n, _ in graph.neighbors(k, _CIRCULATION))]
        results.append(RuleResult("R3", not bad, f"kitchen without serving link: {', '.join(bad)}"
                                  if bad else "kitchens linked to living/dining"))

    if RoomKind.BEDROOM in by_kind:
        private = {n.id for n in graph.nodes if n.kind in (RoomKind.BEDROOM, RoomKind.BATHROOM)}
        bad = []
        for bed in by_kind[RoomKind.BEDROOM]:
            if bed not in reach or bed == entry:
                continue
            clear = _reachable(graph, entry, blocked=private - {bed})
            if bed not in clear:
                bad.append(bed)
        results.append(RuleResult("R4", not bad, f"bedroom reached only via private rooms: {', '.join(bad)}"
                                  if bad else "bedrooms reachable via public rooms"))

    if RoomKind.BATHROOM in by_kind:
        bad = [t for t in by_kind[RoomKind.BATHROOM] if not graph.neighbors(t, (Connection.DOOR,))]
        results.append(RuleResult("R5", not bad, f"bathroom without door: {', '.join(bad)}"
                                  if bad else "bathrooms enclosed by doors"))

    if RoomKind.BALCONY in by_kind:
        bad = []
        for bal in by_kind[RoomKind.BALCONY]:
            hosts = {n for n, _ in graph.neighbors(bal, (Connection.DOOR, Connection.WINDOW_LINK))
                     if kinds[n] is not RoomKind.BALCONY}
            if len(hosts) != 1:
                bad.append(f"{bal}({len(hosts)})")
        results.append(RuleResult("R6", not bad, f"balcony host count != 1: {', '.join(bad)}"
                                  if bad else "balconies attached to one room"))

    passed = sum(r.passed for r in results)
    return ConnectivityScore(passed / len(results), tuple(results))


def connectivity_pass(score: ConnectivityScore) -> bool:
    return score.score == 1.0
