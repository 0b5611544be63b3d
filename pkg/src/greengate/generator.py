"""Procedural floorplan synthesis and boundary-preserving mutations.

``synth`` lays a room program into a footprint by recursive binary splits:
the footprint is cut into a living-room spine with one or two rows of rooms
beside it, and each row is split again until every room has its own cell
range. Every row room gets a door onto the spine, the entrance opens into
the spine from the envelope, and windows go onto a seeded subset of the
exterior wall runs. With ``noise > 0`` defects are injected on purpose.

``mutate`` proposes one local edit that never touches Exterior cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import ndimage

from .plan import (
    MAX_INSTANCES,
    ROOM_BASE,
    Floorplan,
    PlanError,
    RoomKind,
    Tag,
    code_kind,
    exterior_facing,
    room_code,
    room_id,
)
from .rng import draw_seed, stream
from .topology import _linked_pairs, _reachable, build_adjacency

SYNTH_STREAM = 0x5157
CORPUS_STREAM = 0xC095
MUTATE_STREAM = 0x3D7A

DEFAULT_GEN_SCALE = 0.25  # m per cell; one-cell walls are 25 cm thick
MIN_ROOM_CELLS = 2
DOOR_WIDTH_M = 0.75
ENTRANCE_WIDTH_M = 1.0

DEFECTS = ("missing_door", "privacy_violation", "oversized_footprint", "excess_glazing", "windowless")

AREA_WEIGHT = {
    RoomKind.LIVING_ROOM: 30.0,
    RoomKind.BEDROOM: 12.0,
    RoomKind.KITCHEN: 8.0,
    RoomKind.BATHROOM: 5.0,
    RoomKind.BALCONY: 4.0,
    RoomKind.DINING_ROOM: 10.0,
    RoomKind.STORAGE: 3.0,
    RoomKind.CORRIDOR: 6.0,
}


SYNTH_TRIES = 24


class GenerationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GenSpec:
    """What to synthesize.

    ``width``/``height`` are grid cells. ``footprint`` optionally masks the
    building outline inside that rectangle (True = building).
    """

    width: int = 40
    height: int = 40
    program: tuple[RoomKind, ...] = (RoomKind.LIVING_ROOM, RoomKind.BEDROOM,
                                     RoomKind.KITCHEN, RoomKind.BATHROOM)
    seed: int = 0
    noise: float = 0.0
    scale: float = DEFAULT_GEN_SCALE
    wall_height: float = 2.8
    footprint: np.ndarray | None = None
    id: str | None = None

    def __post_init__(self):
        program = tuple(self.program)
        object.__setattr__(self, "program", program)
        if not program:
            raise ValueError("room program is empty")
        if program.count(RoomKind.LIVING_ROOM) != 1:
            raise ValueError("room program needs exactly one living room")
        for kind in set(program):
            if program.count(kind) > MAX_INSTANCES:
                raise ValueError(f"more than {MAX_INSTANCES} rooms of kind {kind.value}")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")
        if self.footprint is not None:
            mask = np.asarray(self.footprint, dtype=bool)
            if mask.shape != (self.height, self.width):
                raise ValueError("footprint shape must be (height, width)")
            object.__setattr__(self, "footprint", mask)

    def to_dict(self) -> dict:
        out = {"width": self.width, "height": self.height, "seed": self.seed, "noise": self.noise,
               "scale": self.scale, "wall_height": self.wall_height, "id": self.id,
               "program": [k.value for k in self.program]}
        if self.footprint is not None:
            out["footprint"] = ["".join("#" if v else "." for v in row) for row in self.footprint]
        return out


# -- synthesis ---------------------------------------------------------------------

def _draw_defects(rng: np.random.Generator, noise: float) -> list[str]:
    """Integer-only draws: probabilities are compared on a 1e6 grid."""
    if noise <= 0:
        return []
    p = int(round(noise * 1_000_000))
    defects: list[str] = []
    if int(rng.integers(0, 1_000_000)) < p:
        defects.append(DEFECTS[int(rng.integers(0, len(DEFECTS)))])
        if int(rng.integers(0, 1_000_000)) < p // 4:
            clash = {"windowless", "excess_glazing"}
            rest = [d for d in DEFECTS if d not in defects and not (d in clash and defects[0] in clash)]
            defects.append(rest[int(rng.integers(0, len(rest)))])
    return defects


def _frac(rng: np.random.Generator, lo: float, hi: float) -> float:
    """Uniform in [lo, hi] from an integer draw."""
    return lo + (hi - lo) * int(rng.integers(0, 1_000_001)) / 1_000_000


def _weight(rooms: Sequence[int]) -> float:
    return sum(AREA_WEIGHT[code_kind(c)] for c in rooms)


@dataclass
class _Layout:
    grid: np.ndarray
    doors: dict[int, list[tuple[int, int]]] = field(default_factory=dict)  # code -> [(row, col)]
    rows: list[list[tuple[int, int, int]]] = field(default_factory=list)  # [(code, lo, hi)] per row
    living: int = 0


def _split_row(lo: int, hi: int, rooms: list[int], rng) -> list[tuple[int, int, int]]:
    """Binary split of the cell range [lo, hi] among ``rooms`` with one-cell walls."""
    if len(rooms) == 1:
        return [(rooms[0], lo, hi)]
    k = len(rooms) // 2
    left, right = rooms[:k], rooms[k:]
    span = hi - lo + 1 - 1
    need_l = MIN_ROOM_CELLS * len(left) + len(left) - 1
    need_r = MIN_ROOM_CELLS * len(right) + len(right) - 1
    if need_l + need_r > span:
        raise GenerationError("footprint too small for program")
    share = _weight(left) / _weight(rooms) + _frac(rng, -0.08, 0.08)
    n_left = min(max(int(round(span * share)), need_l), span - need_r)
    wall = lo + n_left
    return _split_row(lo, wall - 1, left, rng) + _split_row(wall + 1, hi, right, rng)


def _layout(h: int, w: int, program: Sequence[RoomKind], rng, scale: float) -> _Layout:
    """Spine layout on an h x w rectangle, spine running along the x axis."""
    grid = np.full((h, w), Tag.WALL, dtype=np.uint8)
    counters: dict[RoomKind, int] = {}
    codes = []
    for kind in program:
        codes.append(room_code(kind, counters.get(kind, 0)))
        counters[kind] = counters.get(kind, 0) + 1
    living = room_code(RoomKind.LIVING_ROOM, 0)
    others = [c for c in codes if c != living]
    order = rng.permutation(len(others))
    others = [others[i] for i in order]
    x0, x1 = 1, w - 2
    y0, y1 = 1, h - 2
    ih = y1 - y0 + 1
    layout = _Layout(grid, living=living)
    if ih < MIN_ROOM_CELLS or x1 - x0 + 1 < MIN_ROOM_CELLS:
        raise GenerationError("footprint too small for program")

    if not others:
        grid[y0:y1 + 1, x0:x1 + 1] = living
        return layout

    # Balance the rooms into one or two rows by area weight.
    groups: list[list[int]] = [[], []]
    n_rows = 1 if len(others) == 1 else 2
    for c in sorted(others, key=lambda c: -AREA_WEIGHT[code_kind(c)]):
        target = 0 if n_rows == 1 else min((0, 1), key=lambda g: _weight(groups[g]))
        groups[target].append(c)
    groups = [g for g in groups if g]
    for g in groups:
        perm = rng.permutation(len(g))
        g[:] = [g[i] for i in perm]

    total = _weight(codes)
    share = min(max(AREA_WEIGHT[RoomKind.LIVING_ROOM] / total + _frac(rng, -0.05, 0.05), 0.22), 0.45)
    walls = len(groups)
    avail = ih - walls
    ds = max(MIN_ROOM_CELLS + 1, int(round(avail * share)))
    rest = avail - ds
    if rest < MIN_ROOM_CELLS * len(groups):
        raise GenerationError("footprint too small for program")
    if len(groups) == 2:
        wa = _weight(groups[0]) / (_weight(groups[0]) + _weight(groups[1]))
        da = min(max(int(round(rest * wa)), MIN_ROOM_CELLS), rest - MIN_ROOM_CELLS)
        depths = [da, rest - da]
        top_first = True
    else:
        depths = [rest]
        top_first = bool(rng.integers(0, 2))

    # Row bands: (row_lo, row_hi, wall_row facing the spine).
    bands = []
    if len(groups) == 2:
        a_lo, a_hi = y0, y0 + depths[0] - 1
        s_lo, s_hi = a_hi + 2, a_hi + 1 + ds
        b_lo, b_hi = s_hi + 2, y1
        bands = [(a_lo, a_hi, a_hi + 1), (b_lo, b_hi, s_hi + 1)]
    elif top_first:
        a_lo, a_hi = y0, y0 + depths[0] - 1
        s_lo, s_hi = a_hi + 2, y1
        bands = [(a_lo, a_hi, a_hi + 1)]
    else:
        s_lo, s_hi = y0, y0 + ds - 1
        b_lo, b_hi = s_hi + 2, y1
        bands = [(b_lo, b_hi, s_hi + 1)]
    grid[s_lo:s_hi + 1, x0:x1 + 1] = living

    door_w = max(1, int(round(DOOR_WIDTH_M / scale)))
    for (r_lo, r_hi, wall_row), group in zip(bands, groups):
        placed = _split_row(x0, x1, group, rng)
        layout.rows.append(placed)
        for code, lo, hi in placed:
            grid[r_lo:r_hi + 1, lo:hi + 1] = code
            a, b = (lo + 1, hi - 1) if hi - lo >= 2 else (lo, hi)
            width = min(door_w, b - a + 1)
            start = a + int(rng.integers(0, b - a + 2 - width))
            cells = [(wall_row, c) for c in range(start, start + width)]
            for r, c in cells:
                grid[r, c] = Tag.DOOR
            layout.doors[code] = cells
    return layout


def _envelope(mask: np.ndarray) -> np.ndarray:
    """Footprint cells 8-adjacent to the outside or on the grid edge."""
    outside = np.pad(~mask, 1, constant_values=True)
    near = ndimage.binary_dilation(outside, structure=np.ones((3, 3), bool))[1:-1, 1:-1]
    return mask & near


def _place_entrance(grid: np.ndarray, living: int, scale: float, rng) -> None:
    facing = exterior_facing(grid)
    is_living = grid == living
    p = np.pad(grid, 1)
    adj_living = np.zeros_like(facing)
    other_room = np.zeros_like(facing)
    h, w = grid.shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            view = p[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
            if abs(dr) + abs(dc) == 1:
                adj_living |= view == living
            other_room |= (view >= ROOM_BASE) & (view != living)
    cand = facing & (grid == Tag.WALL) & adj_living & ~other_room & ~is_living
    labels, n = ndimage.label(cand)
    if n == 0:
        raise GenerationError("no envelope wall next to the living room for an entrance")
    run = np.argwhere(labels == 1 + int(rng.integers(0, n)))
    width = min(max(1, int(round(ENTRANCE_WIDTH_M / scale))), len(run))
    start = int(rng.integers(0, len(run) - width + 1))
    for r, c in run[start:start + width]:
        grid[r, c] = Tag.ENTRANCE


def _window_runs(grid: np.ndarray) -> list[np.ndarray]:
    facing = exterior_facing(grid)
    h, w = grid.shape
    p = np.pad(grid, 1)
    near_room = np.zeros((h, w), bool)
    near_entrance = np.zeros((h, w), bool)
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        view = p[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
        near_room |= view >= ROOM_BASE
        near_entrance |= view == Tag.ENTRANCE
    cand = facing & (grid == Tag.WALL) & near_room & ~near_entrance
    labels, n = ndimage.label(cand)
    return [np.argwhere(labels == i) for i in range(1, n + 1)]


def _place_windows(grid: np.ndarray, rng, mode: str) -> None:
    if mode == "none":
        return
    frac = _frac(rng, 0.25, 0.75)
    for run in _window_runs(grid):
        n = len(run)
        if mode == "all":
            cells = run
        else:
            if int(rng.integers(0, 100)) >= 85 or n < 3:
                continue
            length = min(max(1, int(round(n * frac))), n - 2)
            start = 1 + int(rng.integers(0, n - 2 - length + 1))
            cells = run[start:start + length]
        for r, c in cells:
            grid[r, c] = Tag.WINDOW


def _oversize(spec: GenSpec, rng, t: float = 0.0) -> tuple[int, int]:
    """Grid dims whose interior floor area lands above the area guideline.

    ``t`` in [0, 1] narrows the target toward the limit on later retries, since
    big envelopes with long programs often cannot meet the egress limit.
    """
    target = _frac(rng, 136.0 - 4.0 * t, 152.0 - 16.0 * t)
    iw, ih = spec.width - 2, spec.height - 2
    k = np.sqrt(target / (iw * ih * spec.scale ** 2))
    k = max(k, 1.0)
    return int(np.ceil(ih * k)) + 2, int(np.ceil(iw * k)) + 2


def _apply_defect(layout: _Layout, defect: str, rng) -> bool:
    grid = layout.grid
    if defect == "missing_door":
        rooms = sorted(layout.doors)
        if not rooms:
            return False
        code = rooms[int(rng.integers(0, len(rooms)))]
        for r, c in layout.doors.pop(code):
            grid[r, c] = Tag.WALL
        return True
    if defect == "privacy_violation":
        pairs = []
        for row in layout.rows:
            for (ca, _, ahi), (cb, blo, _) in zip(row, row[1:]):
                kinds = {code_kind(ca), code_kind(cb)}
                if kinds == {RoomKind.BEDROOM, RoomKind.BATHROOM}:
                    pairs.append((ca, cb, ahi + 1))
        if not pairs:
            return False
        ca, cb, wall_col = pairs[int(rng.integers(0, len(pairs)))]
        bed = ca if code_kind(ca) is RoomKind.BEDROOM else cb
        rows = np.flatnonzero((grid[:, wall_col - 1] == ca) & (grid[:, wall_col + 1] == cb))
        if bed not in layout.doors or len(rows) == 0:
            return False
        for r, c in layout.doors.pop(bed):
            grid[r, c] = Tag.WALL
        grid[rows[len(rows) // 2], wall_col] = Tag.DOOR
        return True
    return False


def synth(spec: GenSpec) -> Floorplan:
    """Deterministic plan for ``spec``; raises :class:`GenerationError` if the program cannot fit."""
    rng = stream(spec.seed, SYNTH_STREAM)
    defects = _draw_defects(rng, spec.noise)
    if "privacy_violation" in defects:
        need = {RoomKind.BEDROOM, RoomKind.BATHROOM}
        if not need <= set(spec.program):
            defects[defects.index("privacy_violation")] = "missing_door"
    if len(set(defects)) < len(defects):
        defects = list(dict.fromkeys(defects))

    last_error: Exception | None = None
    fallback: Floorplan | None = None
    for attempt in range(SYNTH_TRIES):
        h, w = spec.height, spec.width
        footprint = spec.footprint
        if "oversized_footprint" in defects:
            if attempt >= SYNTH_TRIES - 4:
                defects = [d for d in defects if d != "oversized_footprint"]
            else:
                h, w = _oversize(spec, rng, attempt / (SYNTH_TRIES - 5))
                footprint = None
        try:
            plan = _synth_once(spec, h, w, footprint, defects, rng)
        except (GenerationError, PlanError) as exc:
            last_error = exc
            continue
        if "privacy_violation" in defects and "privacy_violation" not in plan.meta["generator"]["defects"]:
            # No bedroom/bathroom pair shares a wall in this layout; try another one.
            fallback = fallback or plan
            continue
        return plan
    if fallback is not None:
        return fallback
    raise GenerationError(f"could not synthesize a valid plan: {last_error}")


def _synth_once(spec: GenSpec, h: int, w: int, footprint, defects, rng) -> Floorplan:
    bbox_h, bbox_w = h, w
    if footprint is not None:
        rows, cols = np.nonzero(footprint)
        r0, r1, c0, c1 = rows.min(), rows.max(), cols.min(), cols.max()
        bbox_h, bbox_w = r1 - r0 + 1, c1 - c0 + 1
    transpose = (bbox_w - 2) > (bbox_h - 2)
    lh, lw = (bbox_w, bbox_h) if transpose else (bbox_h, bbox_w)
    layout = _layout(lh, lw, spec.program, rng, spec.scale)
    applied = []
    for d in defects:
        if d in ("missing_door", "privacy_violation") and _apply_defect(layout, d, rng):
            applied.append(d)
        elif d in ("oversized_footprint", "excess_glazing", "windowless"):
            applied.append(d)
    local = layout.grid.T.copy() if transpose else layout.grid

    grid = np.zeros((h, w), dtype=np.uint8)
    if footprint is None:
        grid[:, :] = local
    else:
        grid[r0:r1 + 1, c0:c1 + 1] = local
        grid[~footprint] = Tag.EXTERIOR
        env = _envelope(footprint)
        grid[env] = Tag.WALL

    _place_entrance(grid, layout.living, spec.scale, rng)
    mode = "none" if "windowless" in applied else "all" if "excess_glazing" in applied else "some"
    _place_windows(grid, rng, mode)
    meta = {"generator": {"seed": spec.seed, "noise": spec.noise, "defects": applied}}
    plan = Floorplan(spec.id or f"synth-{spec.seed}", grid, spec.scale, spec.wall_height, meta)
    _check_circulation(plan, strict=not {"missing_door", "privacy_violation"} & set(applied))
    return plan


def _check_circulation(plan: Floorplan, strict: bool = True) -> None:
    """Reject layouts that would break egress or connectivity without a defect asking for it.

    Door defects cut rooms off on purpose, so ``strict=False`` only checks the
    egress distance over the cells that remain reachable.
    """
    from .egress import FIRE_LIMIT, egress_distance
    from .topology import build_adjacency, check_connectivity

    eg = egress_distance(plan)
    if eg.max_distance > FIRE_LIMIT:
        raise GenerationError("layout exceeds the egress limit")
    if not strict:
        return
    if eg.unreachable_cells:
        raise GenerationError("clean layout has unreachable cells")
    if check_connectivity(build_adjacency(plan)).score < 1.0:
        raise GenerationError("clean layout breaks a connectivity rule")


def corpus_specs(count: int, seed: int, noise: float = 0.0, scale: float = DEFAULT_GEN_SCALE,
                 notch_pct: int = 25) -> list[GenSpec]:
    """Per-plan specs for a synthetic corpus; plan ``i`` uses its own stream."""
    specs = []
    for i in range(count):
        rng = stream(seed, CORPUS_STREAM, i)
        n_bed = 1 + int(rng.integers(0, 3))
        program = [RoomKind.LIVING_ROOM] + [RoomKind.BEDROOM] * n_bed + [RoomKind.KITCHEN, RoomKind.BATHROOM]
        if n_bed == 3 and int(rng.integers(0, 2)):
            program.append(RoomKind.BATHROOM)
        if int(rng.integers(0, 100)) < 30:
            program.append(RoomKind.DINING_ROOM)
        if int(rng.integers(0, 100)) < 35:
            program.append(RoomKind.BALCONY)
        if int(rng.integers(0, 100)) < 20:
            program.append(RoomKind.STORAGE)
        area = sum(AREA_WEIGHT[k] for k in program) * 1.25 * _frac(rng, 0.9, 1.1)
        area = min(max(area, 45.0), 118.0)
        aspect = _frac(rng, 0.75, 1.33)
        short = min(np.sqrt(area * aspect), np.sqrt(area / aspect))
        long_ = area / short
        short = min(short, 9.5)
        long_ = min(long_, 11.5)
        w_m, h_m = (short, long_) if int(rng.integers(0, 2)) else (long_, short)
        w = int(round(w_m / scale)) + 2
        h = int(round(h_m / scale)) + 2
        footprint = None
        if int(rng.integers(0, 100)) < notch_pct:
            nw = int(round(w * _frac(rng, 0.12, 0.25)))
            nh = int(round(h * _frac(rng, 0.12, 0.25)))
            footprint = np.ones((h, w), dtype=bool)
            corner = int(rng.integers(0, 4))
            rs = slice(0, nh) if corner < 2 else slice(h - nh, h)
            cs = slice(0, nw) if corner % 2 == 0 else slice(w - nw, w)
            footprint[rs, cs] = False
        specs.append(GenSpec(w, h, tuple(program), draw_seed(rng), noise, scale,
                             footprint=footprint, id=f"plan-{i:05d}"))
    return specs


# -- mutation ---------------------------------------------------------------------------

class MutationRejected(Exception):
    """A sampled mutation produced an invalid plan."""

    def __init__(self, mutation, reason: str):
        super().__init__(f"{mutation.name} rejected: {reason}")
        self.mutation = mutation
        self.reason = reason


class NoApplicableMutation(PlanError):
    pass


Cell = tuple[int, int]  # (col, row)


@dataclass(frozen=True)
class ShiftWall:
    cells: tuple[Cell, ...]
    delta: int
    name = "ShiftWall"

    def to_dict(self) -> dict:
        return {"type": self.name, "cells": [list(c) for c in self.cells], "delta": self.delta}


@dataclass(frozen=True)
class ResizeRoom:
    room: str
    direction: str  # N, S, W, E
    cells: int  # +1 grow, -1 shrink
    name = "ResizeRoom"

    def to_dict(self) -> dict:
        return {"type": self.name, "room": self.room, "direction": self.direction, "cells": self.cells}


@dataclass(frozen=True)
class AddWindow:
    cell: Cell
    name = "AddWindow"

    def to_dict(self) -> dict:
        return {"type": self.name, "cell": list(self.cell)}


@dataclass(frozen=True)
class RemoveWindow:
    cell: Cell
    name = "RemoveWindow"

    def to_dict(self) -> dict:
        return {"type": self.name, "cell": list(self.cell)}


@dataclass(frozen=True)
class MoveDoor:
    door: Cell
    target: Cell
    name = "MoveDoor"

    def to_dict(self) -> dict:
        return {"type": self.name, "door": list(self.door), "target": list(self.target)}


@dataclass(frozen=True)
class RelabelRoom:
    room: str
    kind: RoomKind
    name = "RelabelRoom"

    def to_dict(self) -> dict:
        return {"type": self.name, "room": self.room, "kind": self.kind.value}


@dataclass(frozen=True)
class AddDoor:
    cell: Cell
    name = "AddDoor"

    def to_dict(self) -> dict:
        return {"type": self.name, "cell": list(self.cell)}


Mutation = ShiftWall | ResizeRoom | AddWindow | RemoveWindow | MoveDoor | RelabelRoom | AddDoor

_DIRS = {"N": (-1, 0), "S": (1, 0), "W": (0, -1), "E": (0, 1)}


class _Reject(Exception):
    pass


class _Sites:
    """Lazily computed candidate sites for each move on one plan."""

    def __init__(self, plan: Floorplan):
        self.plan = plan
        self.grid = plan.grid
        h, w = self.grid.shape
        self.h, self.w = h, w

    @cached_property
    def padded(self) -> np.ndarray:
        return np.pad(self.grid, 1)

    def view(self, dr: int, dc: int) -> np.ndarray:
        return self.padded[1 + dr:1 + dr + self.h, 1 + dc:1 + dc + self.w]

    @cached_property
    def facing(self) -> np.ndarray:
        return exterior_facing(self.grid)

    @cached_property
    def rooms(self) -> np.ndarray:
        return np.unique(self.grid[self.grid >= ROOM_BASE])

    @cached_property
    def window_sites(self) -> np.ndarray:
        near_room = np.zeros_like(self.facing)
        for d in _DIRS.values():
            near_room |= self.view(*d) >= ROOM_BASE
        return np.argwhere(self.facing & (self.grid == Tag.WALL) & near_room)

    @cached_property
    def windows(self) -> np.ndarray:
        return np.argwhere(self.grid == Tag.WINDOW)

    @cached_property
    def door_pairs(self) -> np.ndarray:
        """Pair key (lo * 256 + hi) separated by each interior wall cell, 0 if none."""
        n, s, wv, e = self.view(-1, 0), self.view(1, 0), self.view(0, -1), self.view(0, 1)
        key = np.zeros(self.grid.shape, dtype=np.int32)
        base = (self.grid == Tag.WALL) & ~self.facing
        for a, b in ((wv, e), (n, s)):
            ok = base & (a >= ROOM_BASE) & (b >= ROOM_BASE) & (a != b)
            k = np.minimum(a, b).astype(np.int32) * 256 + np.maximum(a, b).astype(np.int32)
            key = np.where(ok & (key == 0), k, key)
        return key

    @cached_property
    def unlinked_pairs(self) -> np.ndarray:
        """Pair keys that share a wall but have no door between them yet."""
        keys = np.unique(self.door_pairs[self.door_pairs > 0])
        linked = [a * 256 + b for a, b in _linked_pairs(self.grid, Tag.DOOR)]
        return keys[~np.isin(keys, linked)]

    @cached_property
    def door_sites(self) -> np.ndarray:
        return np.argwhere(np.isin(self.door_pairs, self.unlinked_pairs))

    @cached_property
    def movable_doors(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        pairs = self.door_pairs
        for r, c in np.argwhere(self.grid == Tag.DOOR):
            rooms = {int(self.view(dr, dc)[r, c]) for dr, dc in _DIRS.values()}
            rooms = sorted(x for x in rooms if x >= ROOM_BASE)
            if len(rooms) != 2:
                continue
            targets = np.argwhere(pairs == rooms[0] * 256 + rooms[1])
            if len(targets):
                out.append((np.array([r, c]), targets))
        return out

    @cached_property
    def relabels(self) -> list[tuple[int, RoomKind]]:
        out = []
        present = set(int(c) for c in self.rooms)
        for code in present:
            kind = code_kind(code)
            if kind is RoomKind.LIVING_ROOM:
                continue
            for new in RoomKind:
                if new in (kind, RoomKind.LIVING_ROOM):
                    continue
                if any(room_code(new, i) not in present for i in range(MAX_INSTANCES)):
                    out.append((code, new))
        return sorted(out, key=lambda t: (t[0], t[1].index))

    @cached_property
    def segments(self) -> list[tuple[tuple[Cell, ...], int]]:
        """Straight wall runs with one room on each side: (cells, axis) with axis 0 = horizontal."""
        out = []
        for axis, g in ((0, self.grid), (1, self.grid.T)):
            above, mid, below = g[:-2].astype(np.int32), g[1:-1], g[2:].astype(np.int32)
            cond = (((mid == Tag.WALL) | (mid == Tag.DOOR)) & (above >= ROOM_BASE)
                    & (below >= ROOM_BASE) & (above != below))
            key = np.where(cond, above * 256 + below, -1)
            prev = np.pad(key, ((0, 0), (1, 0)), constant_values=-1)[:, :-1]
            nxt = np.pad(key, ((0, 0), (0, 1)), constant_values=-1)[:, 1:]
            starts = np.argwhere(cond & (prev != key))
            ends = np.argwhere(cond & (nxt != key))
            for (r, c0), (_, c1) in zip(starts, ends):
                if axis == 0:
                    cells = tuple((c, int(r) + 1) for c in range(int(c0), int(c1) + 1))
                else:
                    cells = tuple((int(r) + 1, c) for c in range(int(c0), int(c1) + 1))
                out.append((cells, axis))
        return out


def _pick(rng, n: int) -> int:
    return int(rng.integers(0, n))


def _propose(kind: str, s: _Sites, rng):
    """Sample one mutation of ``kind`` or return None when it has no site."""
    if kind == "AddWindow":
        if not len(s.window_sites):
            return None
        r, c = s.window_sites[_pick(rng, len(s.window_sites))]
        return AddWindow((int(c), int(r)))
    if kind == "RemoveWindow":
        if not len(s.windows):
            return None
        r, c = s.windows[_pick(rng, len(s.windows))]
        return RemoveWindow((int(c), int(r)))
    if kind == "AddDoor":
        # pair first, then cell: short shared walls are as likely as long ones
        keys = s.unlinked_pairs
        if not len(keys):
            return None
        cells = np.argwhere(s.door_pairs == keys[_pick(rng, len(keys))])
        r, c = cells[_pick(rng, len(cells))]
        return AddDoor((int(c), int(r)))
    if kind == "MoveDoor":
        if not s.movable_doors:
            return None
        door, targets = s.movable_doors[_pick(rng, len(s.movable_doors))]
        tr, tc = targets[_pick(rng, len(targets))]
        return MoveDoor((int(door[1]), int(door[0])), (int(tc), int(tr)))
    if kind == "RelabelRoom":
        if not s.relabels:
            return None
        code, new = s.relabels[_pick(rng, len(s.relabels))]
        return RelabelRoom(room_id(code), new)
    if kind == "ResizeRoom":
        if not len(s.rooms):
            return None
        code = int(s.rooms[_pick(rng, len(s.rooms))])
        direction = "NSWE"[_pick(rng, 4)]
        return ResizeRoom(room_id(code), direction, (-1, 1)[_pick(rng, 2)])
    if kind == "ShiftWall":
        if not s.segments:
            return None
        cells, _axis = s.segments[_pick(rng, len(s.segments))]
        return ShiftWall(cells, (-1, 1)[_pick(rng, 2)])
    raise ValueError(kind)


MOVES = ("ShiftWall", "ResizeRoom", "AddWindow", "RemoveWindow", "MoveDoor", "RelabelRoom", "AddDoor")


def _code_of(rid: str) -> int:
    return room_code(RoomKind.from_letter(rid[0]), int(rid[1:]))


def _dangling_doors(grid: np.ndarray) -> int:
    """Door cells that do not join room cells on two opposite sides."""
    room = np.pad(grid >= ROOM_BASE, 1, constant_values=False)
    ns = room[:-2, 1:-1] & room[2:, 1:-1]
    we = room[1:-1, :-2] & room[1:-1, 2:]
    return int(np.count_nonzero((grid == Tag.DOOR) & ~ns & ~we))


def _degenerate_rooms(grid: np.ndarray, codes) -> set[int]:
    """Rooms among ``codes`` that are split in pieces or thinner than the minimum."""
    bad = set()
    for code in codes:
        mask = grid == code
        if not mask.any():
            continue
        rows, cols = np.nonzero(mask)
        thin = min(np.ptp(rows), np.ptp(cols)) + 1 < MIN_ROOM_CELLS
        if thin or ndimage.label(mask)[1] > 1:
            bad.add(int(code))
    return bad


def _reached_cells(plan: Floorplan) -> np.ndarray:
    """Mask of room cells whose room has a Door/Open path from the entrance."""
    graph = build_adjacency(plan)
    reach = set()
    for start in graph.entrance_candidates:
        reach |= _reachable(graph, start)
    return np.isin(plan.grid, [_code_of(rid) for rid in reach])


def _apply(m, s: _Sites) -> np.ndarray:
    grid = s.grid.copy()
    if isinstance(m, AddWindow):
        grid[m.cell[1], m.cell[0]] = Tag.WINDOW
    elif isinstance(m, RemoveWindow):
        grid[m.cell[1], m.cell[0]] = Tag.WALL
    elif isinstance(m, AddDoor):
        grid[m.cell[1], m.cell[0]] = Tag.DOOR
    elif isinstance(m, MoveDoor):
        grid[m.door[1], m.door[0]] = Tag.WALL
        grid[m.target[1], m.target[0]] = Tag.DOOR
    elif isinstance(m, RelabelRoom):
        code = _code_of(m.room)
        present = set(int(c) for c in s.rooms)
        free = next(i for i in range(MAX_INSTANCES) if room_code(m.kind, i) not in present)
        grid[grid == code] = room_code(m.kind, free)
    elif isinstance(m, ResizeRoom):
        _resize(grid, s, m)
    elif isinstance(m, ShiftWall):
        _shift(grid, m)
    return grid


def _resize(grid: np.ndarray, s: _Sites, m: ResizeRoom) -> None:
    code = _code_of(m.room)
    dr, dc = _DIRS[m.direction]
    rows, cols = np.nonzero(grid == code)
    if dr:
        edge = rows.max() if dr > 0 else rows.min()
        strip = rows == edge
    else:
        edge = cols.max() if dc > 0 else cols.min()
        strip = cols == edge
    sr, sc = rows[strip], cols[strip]
    if m.cells < 0:
        if strip.all():
            raise _Reject("room would vanish")
        grid[sr, sc] = Tag.WALL
        return
    h, w = grid.shape
    tr, tc = sr + dr, sc + dc
    br, bc = tr + dr, tc + dc
    if ((tr < 0) | (tr >= h) | (tc < 0) | (tc >= w) | (br < 0) | (br >= h) | (bc < 0) | (bc >= w)).any():
        raise _Reject("grows past the grid")
    if not (grid[tr, tc] == Tag.WALL).all() or s.facing[tr, tc].any():
        raise _Reject("target strip is not interior wall")
    beyond = grid[br, bc]
    if ((beyond >= ROOM_BASE) & (beyond != code)).any():
        raise _Reject("would merge into a neighbouring room")
    p = s.padded
    for lr, lc in ((dc, dr), (-dc, -dr)):
        side = p[tr + lr + 1, tc + lc + 1]
        if ((side >= ROOM_BASE) & (side != code)).any():
            raise _Reject("would open onto a neighbouring room")
    grid[tr, tc] = code


def _shift(grid: np.ndarray, m: ShiftWall) -> None:
    (c0, r0), (c1, r1) = m.cells[0], m.cells[-1]
    horizontal = r0 == r1
    if horizontal:
        r = r0
        cs = slice(c0, c1 + 1)
        wall = grid[r, cs].copy()
        side = grid[r - m.delta, c0]  # room the wall moves away from
        target_row = r + m.delta
        if not 0 <= target_row < grid.shape[0]:
            raise _Reject("shift past the grid")
        grid[r, cs] = side
        grid[target_row, cs] = wall
    else:
        c = c0
        rs = slice(r0, r1 + 1)
        wall = grid[rs, c].copy()
        side = grid[r0, c - m.delta]
        target_col = c + m.delta
        if not 0 <= target_col < grid.shape[1]:
            raise _Reject("shift past the grid")
        grid[rs, c] = side
        grid[rs, target_col] = wall


def propose_moves(plan: Floorplan) -> dict[str, int]:
    """Number of candidate sites per move kind (diagnostics)."""
    s = _Sites(plan)
    return {
        "ShiftWall": 2 * len(s.segments),
        "ResizeRoom": 8 * len(s.rooms),
        "AddWindow": len(s.window_sites),
        "RemoveWindow": len(s.windows),
        "MoveDoor": len(s.movable_doors),
        "RelabelRoom": len(s.relabels),
        "AddDoor": len(s.door_sites),
    }


def mutate(plan: Floorplan, seed: int):
    """One boundary-preserving edit of ``plan``.

    The move kind is drawn uniformly among kinds that have at least one site,
    then the site uniformly among that kind's sites (AddDoor draws a room pair
    first, then a cell on their shared wall). Returns ``(plan, mutation)``;
    raises :class:`MutationRejected` if the result breaks a plan invariant
    (new dangling doors, split rooms, slivers, rooms cut off from the
    entrance) and
    :class:`NoApplicableMutation` if no move applies.
    """
    rng = stream(seed, MUTATE_STREAM)
    sites = _Sites(plan)
    for k in rng.permutation(len(MOVES)):
        mutation = _propose(MOVES[int(k)], sites, rng)
        if mutation is None:
            continue
        try:
            grid = _apply(mutation, sites)
        except _Reject as exc:
            raise MutationRejected(mutation, str(exc)) from None
        if np.array_equal(grid, plan.grid):
            raise MutationRejected(mutation, "no change")
        if _dangling_doors(grid) > _dangling_doors(plan.grid):
            raise MutationRejected(mutation, "would leave a door without a room on both sides")
        changed = grid != plan.grid
        touched = {int(c) for c in np.unique(np.concatenate([grid[changed], plan.grid[changed]])) if c >= ROOM_BASE}
        if _degenerate_rooms(grid, touched) - _degenerate_rooms(plan.grid, touched):
            raise MutationRejected(mutation, "would split a room or leave a sliver")
        try:
            out = plan.replace(grid=grid)
            if ((out.grid >= ROOM_BASE) & ~_reached_cells(out) & _reached_cells(plan)).any():
                raise MutationRejected(mutation, "would cut a room off from the entrance")
            return out, mutation
        except PlanError as exc:
            raise MutationRejected(mutation, str(exc)) from None
    raise NoApplicableMutation("no applicable mutation")
