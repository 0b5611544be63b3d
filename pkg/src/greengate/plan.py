"""Floorplan grid model and the ``.fpgrid`` text codec.

A plan is a labeled occupancy grid. Internally every cell holds a small
integer code (see :class:`Tag` and :func:`room_code`); the text format uses
two-character tokens::

    {"height": 8, "id": "demo", "scale": 0.5, "wall_height": 2.8, "width": 8}
    ## ## ## EN ## ## ## ##
    ## L0 L0 L0 L0 L0 L0 ##
    ...

Plans are immutable and validated on construction, so any ``Floorplan``
instance satisfies the structural invariants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Any, NamedTuple

import numpy as np
from scipy import ndimage

FORMAT_VERSION = "fpgrid/1"

DEFAULT_SCALE = 18.0 / 256  # m per cell
DEFAULT_WALL_HEIGHT = 2.8  # m
MIN_DIM, MAX_DIM = 8, 1024
MAX_INSTANCES = 10

ROOM_BASE = 10


class PlanError(ValueError):
    """Structural or format problem in a floorplan.

    ``row``/``col`` locate the offending cell when one can be named.
    """

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        if row is not None and col is not None:
            message = f"{message} (row {row}, col {col})"
        elif row is not None:
            message = f"{message}, row {row}"
        super().__init__(message)
        self.row = row
        self.col = col


class Tag(IntEnum):
    EXTERIOR = 0
    WALL = 1
    DOOR = 2
    WINDOW = 3
    ENTRANCE = 4
    ROOM = ROOM_BASE


class RoomKind(Enum):
    LIVING_ROOM = "LivingRoom"
    BEDROOM = "Bedroom"
    KITCHEN = "Kitchen"
    BATHROOM = "Bathroom"
    BALCONY = "Balcony"
    DINING_ROOM = "DiningRoom"
    STORAGE = "Storage"
    CORRIDOR = "Corridor"

    @property
    def index(self) -> int:
        return _KIND_INDEX[self]

    @property
    def letter(self) -> str:
        return _KIND_LETTER[self]

    @classmethod
    def from_letter(cls, letter: str) -> RoomKind:
        try:
            return _LETTER_KIND[letter]
        except KeyError:
            raise ValueError(f"unknown room letter {letter!r}") from None

    def __lt__(self, other: RoomKind) -> bool:
        return self.index < other.index


KINDS: tuple[RoomKind, ...] = tuple(RoomKind)
_KIND_INDEX = {k: i for i, k in enumerate(KINDS)}
_KIND_LETTER = {
    RoomKind.LIVING_ROOM: "L",
    RoomKind.BEDROOM: "B",
    RoomKind.KITCHEN: "K",
    RoomKind.BATHROOM: "T",
    RoomKind.BALCONY: "A",
    RoomKind.DINING_ROOM: "D",
    RoomKind.STORAGE: "S",
    RoomKind.CORRIDOR: "C",
}
_LETTER_KIND = {v: k for k, v in _KIND_LETTER.items()}

_FIXED_TOKENS = {
    "..": Tag.EXTERIOR,
    "##": Tag.WALL,
    "DR": Tag.DOOR,
    "WN": Tag.WINDOW,
    "EN": Tag.ENTRANCE,
}


def room_code(kind: RoomKind, instance: int) -> int:
    if not 0 <= instance < MAX_INSTANCES:
        raise ValueError(f"room instance {instance} outside 0-{MAX_INSTANCES - 1}")
    return ROOM_BASE + kind.index * MAX_INSTANCES + instance


def is_room_code(code: int) -> bool:
    return code >= ROOM_BASE


def code_kind(code: int) -> RoomKind:
    return KINDS[(int(code) - ROOM_BASE) // MAX_INSTANCES]


def code_instance(code: int) -> int:
    return (int(code) - ROOM_BASE) % MAX_INSTANCES


def room_id(code: int) -> str:
    """Two-character room identifier, e.g. ``"B1"``."""
    return f"{code_kind(code).letter}{code_instance(code)}"


_TOKEN_TO_CODE: dict[str, int] = {t: int(tag) for t, tag in _FIXED_TOKENS.items()}
for _kind in KINDS:
    for _inst in range(MAX_INSTANCES):
        _TOKEN_TO_CODE[f"{_kind.letter}{_inst}"] = room_code(_kind, _inst)
_CODE_TO_TOKEN: dict[int, str] = {c: t for t, c in _TOKEN_TO_CODE.items()}

_VALID_CODE = np.zeros(256, dtype=bool)
_VALID_CODE[list(_CODE_TO_TOKEN)] = True
_TOKEN_TABLE = np.array([_CODE_TO_TOKEN.get(c, "??") for c in range(256)], dtype="<U2")


class CellLabel(NamedTuple):
    """Decoded label of one cell. ``kind``/``instance`` are set for rooms only."""

    tag: Tag
    kind: RoomKind | None = None
    instance: int | None = None

    @classmethod
    def from_code(cls, code: int) -> CellLabel:
        code = int(code)
        if code >= ROOM_BASE:
            return cls(Tag.ROOM, code_kind(code), code_instance(code))
        return cls(Tag(code))

    @property
    def code(self) -> int:
        if self.tag is Tag.ROOM:
            return room_code(self.kind, self.instance)
        return int(self.tag)

    @property
    def traversable(self) -> bool:
        return self.tag in (Tag.ROOM, Tag.DOOR, Tag.ENTRANCE)

    @property
    def glazed(self) -> bool:
        return self.tag is Tag.WINDOW


def token_to_code(token: str) -> int:
    try:
        return _TOKEN_TO_CODE[token]
    except KeyError:
        raise ValueError(f"unknown cell code {token!r}") from None


def code_to_token(code: int) -> str:
    return _CODE_TO_TOKEN[int(code)]


# -- neighbourhood helpers -------------------------------------------------

def _shifts(mask: np.ndarray, pad: bool) -> tuple[np.ndarray, ...]:
    """The four orthogonal neighbour views of ``mask`` (N, S, W, E)."""
    p = np.pad(mask, 1, constant_values=pad)
    return p[:-2, 1:-1], p[2:, 1:-1], p[1:-1, :-2], p[1:-1, 2:]


def exterior_facing(grid: np.ndarray) -> np.ndarray:
    """Cells 4-adjacent to an Exterior cell or lying on the grid edge."""
    n, s, w, e = _shifts(grid == Tag.EXTERIOR, pad=True)
    return n | s | w | e


def touches_exterior_cell(grid: np.ndarray) -> np.ndarray:
    """Cells 4-adjacent to an Exterior cell (the grid edge does not count)."""
    n, s, w, e = _shifts(grid == Tag.EXTERIOR, pad=False)
    return n | s | w | e


def validate_grid(grid: np.ndarray) -> None:
    """Raise :class:`PlanError` unless ``grid`` satisfies every plan invariant."""
    if grid.ndim != 2:
        raise PlanError("grid must be two-dimensional")
    h, w = grid.shape
    if not (MIN_DIM <= w <= MAX_DIM and MIN_DIM <= h <= MAX_DIM):
        raise PlanError(f"dimensions {w}x{h} outside [{MIN_DIM}, {MAX_DIM}]")
    bad = ~_VALID_CODE[grid]
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise PlanError(f"unknown cell code {int(grid[r, c])}", int(r), int(c))

    entrance = grid == Tag.ENTRANCE
    labels, n = ndimage.label(entrance)
    if n == 0:
        raise PlanError("no entrance")
    if n > 1:
        r, c = np.argwhere(labels == 2)[0]
        raise PlanError("multiple entrances", int(r), int(c))
    if not (entrance & exterior_facing(grid)).any():
        r, c = np.argwhere(entrance)[0]
        raise PlanError("entrance does not touch the exterior boundary", int(r), int(c))

    rooms = grid >= ROOM_BASE
    leak = rooms & touches_exterior_cell(grid)
    if leak.any():
        r, c = np.argwhere(leak)[0]
        raise PlanError("room cell adjacent to exterior", int(r), int(c))
    for code in np.unique(grid[rooms]):
        labels, n = ndimage.label(grid == code)
        if n > 1:
            r, c = np.argwhere(labels == 2)[0]
            raise PlanError(f"room {room_id(code)} has {n} disjoint components", int(r), int(c))

    labels, n = ndimage.label(grid != Tag.EXTERIOR)
    if n > 1:
        r, c = np.argwhere(labels == 2)[0]
        raise PlanError("interior region is not connected", int(r), int(c))


# -- plan and rooms ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Floorplan:
    """Validated, immutable floorplan.

    ``grid`` is a read-only ``(height, width)`` uint8 array of cell codes;
    ``scale`` is metres per cell.
    """

    id: str
    grid: np.ndarray
    scale: float = DEFAULT_SCALE
    wall_height: float = DEFAULT_WALL_HEIGHT
    meta: Any = None

    def __post_init__(self):
        grid = np.array(self.grid, dtype=np.uint8, copy=True, order="C")
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "wall_height", float(self.wall_height))
        if not isinstance(self.id, str):
            raise PlanError("plan id must be a string")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise PlanError(f"scale must be positive, got {self.scale}")
        if not (self.wall_height > 0 and np.isfinite(self.wall_height)):
            raise PlanError(f"wall_height must be positive, got {self.wall_height}")
        validate_grid(grid)

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def cell_area(self) -> float:
        return self.scale * self.scale

    def label(self, col: int, row: int) -> CellLabel:
        return CellLabel.from_code(self.grid[row, col])

    def replace(self, grid: np.ndarray | None = None, **changes) -> Floorplan:
        """A new validated plan with some fields swapped out."""
        fields = dict(id=self.id, grid=self.grid if grid is None else grid,
                      scale=self.scale, wall_height=self.wall_height, meta=self.meta)
        fields.update(changes)
        return Floorplan(**fields)

    def tokens(self) -> np.ndarray:
        return _TOKEN_TABLE[self.grid]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Floorplan):
            return NotImplemented
        return (self.id == other.id and self.scale == other.scale
                and self.wall_height == other.wall_height and self.meta == other.meta
                and self.grid.shape == other.grid.shape
                and bool(np.array_equal(self.grid, other.grid)))

    def __hash__(self) -> int:
        return hash((self.id, self.scale, self.wall_height, self.grid.shape, self.grid.tobytes()))

    def __repr__(self) -> str:
        return f"Floorplan(id={self.id!r}, {self.width}x{self.height}, scale={self.scale})"


@dataclass(frozen=True)
class Room:
    kind: RoomKind
    instance: int
    cells: frozenset[tuple[int, int]]  # (col, row)
    scale: float

    @property
    def id(self) -> str:
        return f"{self.kind.letter}{self.instance}"

    @property
    def code(self) -> int:
        return room_code(self.kind, self.instance)

    @property
    def area(self) -> float:
        return len(self.cells) * self.scale * self.scale


def extract_rooms(plan: Floorplan) -> list[Room]:
    """Rooms of ``plan`` ordered by (kind, instance)."""
    grid = plan.grid
    rooms = []
    for code in np.unique(grid[grid >= ROOM_BASE]):
        mask = grid == code
        labels, n = ndimage.label(mask)
        if n != 1:
            r, c = np.argwhere(labels == 2)[0]
            raise PlanError(f"room {room_id(code)} has {n} disjoint components", int(r), int(c))
        rows, cols = np.nonzero(mask)
        cells = frozenset(zip(cols.tolist(), rows.tolist()))
        rooms.append(Room(code_kind(code), code_instance(code), cells, plan.scale))
    return rooms


def room_areas(plan: Floorplan) -> dict[int, float]:
    """Area per room code; cheaper than :func:`extract_rooms` for hot paths."""
    counts = np.bincount(plan.grid.ravel(), minlength=256)
    codes = np.flatnonzero(counts[ROOM_BASE:]) + ROOM_BASE
    return {int(c): float(counts[c]) * plan.cell_area for c in codes}


# -- codec -------------------------------------------------------------------

_HEADER_KEYS = {"id", "width", "height", "scale", "wall_height", "meta"}


def _header_number(header: dict, key: str, kind: type, default=None):
    if key not in header:
        if default is None:
            raise PlanError(f"header missing {key!r}", row=0)
        return default
    value = header[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PlanError(f"header field {key!r} must be numeric")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise PlanError(f"header field {key!r} must be an integer")
        return int(value)
    return float(value)


def parse_plan(data: bytes | str) -> Floorplan:
    """Parse ``.fpgrid`` bytes into a validated :class:`Floorplan`."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PlanError(f"not UTF-8: {exc}") from None
    else:
        text = data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]
    if not lines:
        raise PlanError("malformed header: empty input")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise PlanError(f"malformed header: {exc.msg}") from None
    if not isinstance(header, dict):
        raise PlanError("malformed header: not a JSON object")
    extra = set(header) - _HEADER_KEYS
    if extra:
        raise PlanError(f"malformed header: unexpected keys {sorted(extra)}")
    plan_id = header.get("id")
    if not isinstance(plan_id, str):
        raise PlanError("malformed header: 'id' must be a string")
    width = _header_number(header, "width", int)
    height = _header_number(header, "height", int)
    scale = _header_number(header, "scale", float, DEFAULT_SCALE)
    wall_height = _header_number(header, "wall_height", float, DEFAULT_WALL_HEIGHT)
    if not (MIN_DIM <= width <= MAX_DIM and MIN_DIM <= height <= MAX_DIM):
        raise PlanError(f"dimensions {width}x{height} outside [{MIN_DIM}, {MAX_DIM}]")

    rows = lines[1:]
    if len(rows) != height:
        raise PlanError(f"grid dimension mismatch: expected {height} rows, found {len(rows)}")
    grid = np.empty((height, width), dtype=np.uint8)
    for r, line in enumerate(rows):
        tokens = line.split(" ")
        if len(tokens) != width:
            raise PlanError("grid dimension mismatch", row=r)
        for c, tok in enumerate(tokens):
            code = _TOKEN_TO_CODE.get(tok)
            if code is None:
                raise PlanError(f"unknown cell code {tok!r}", r, c)
            grid[r, c] = code
    return Floorplan(plan_id, grid, scale, wall_height, header.get("meta"))


def serialize_plan(plan: Floorplan) -> bytes:
    """Canonical ``.fpgrid`` bytes: sorted header keys, LF endings."""
    header = {"id": plan.id, "width": plan.width, "height": plan.height,
              "scale": plan.scale, "wall_height": plan.wall_height}
    if plan.meta is not None:
        header["meta"] = plan.meta
    lines = [json.dumps(header, sort_keys=True, ensure_ascii=False)]
    lines.extend(" ".join(row) for row in plan.tokens().tolist())
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_plan(path) -> Floorplan:
    with open(path, "rb") as fh:
        return parse_plan(fh.read())
