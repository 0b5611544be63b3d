"""Monthly steady-state degree-day energy model.

Produces a 12 x 5 profile (months x end-uses, kWh) whose row-major
flattening is the 60-entry energy vector, plus the energy use intensity.

Per month ``m`` with ``D`` days::

    UA      = u_wall * A_wall + u_window * A_window                  [W/K]
    Q_int   = sum_rooms (lpd * h_light + epd * h_equip) * A * D / 1000
    Q_sol   = A_window * solar[m] * shgc
    heating = max(0, UA * hdd * 24/1000 - eta * (Q_int + Q_sol)) / eff_heating
    cooling = max(0, UA * cdd * 24/1000 + (1 - eta) * Q_int
                     + Q_sol * cdd / (cdd + hdd)) / cop_cooling
    hot_water = hw * A_wet * D / 365
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np

from .plan import Floorplan, KINDS, ROOM_BASE, MAX_INSTANCES, RoomKind, Tag, exterior_facing

END_USES = ("heating", "cooling", "lighting", "equipment", "hot_water")
MONTH_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
EUI_LIMIT = 135.0  # kWh/m2.yr


class EnergyError(ValueError):
    pass


def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class ClimateTable:
    hdd: tuple[float, ...]  # K.day per month
    cdd: tuple[float, ...]
    solar: tuple[float, ...]  # kWh per m2 of glazing per month
    name: str = "custom"

    def __post_init__(self):
        for key in ("hdd", "cdd", "solar"):
            vals = tuple(float(v) for v in getattr(self, key))
            if len(vals) != 12:
                raise ValueError(f"climate {key} needs 12 monthly values, got {len(vals)}")
            if any(not np.isfinite(v) or v < 0 for v in vals):
                raise ValueError(f"climate {key} entries must be finite and >= 0")
            object.__setattr__(self, key, vals)

    @classmethod
    def from_dict(cls, data: Mapping) -> ClimateTable:
        return cls(data["hdd"], data["cdd"], data["solar"], data.get("name", "custom"))

    @classmethod
    def zero(cls) -> ClimateTable:
        return cls((0.0,) * 12, (0.0,) * 12, (0.0,) * 12, "zero")

    def to_dict(self) -> dict:
        return {"name": self.name, "hdd": list(self.hdd), "cdd": list(self.cdd), "solar": list(self.solar)}

    @property
    def digest(self) -> str:
        return _digest(self.to_dict())


def _per_kind(values: Mapping | float) -> dict[RoomKind, float]:
    if isinstance(values, (int, float)):
        return {k: float(values) for k in KINDS}
    values = {(k.value if isinstance(k, RoomKind) else k): v for k, v in values.items()}
    if not values:
        return {k: 0.0 for k in KINDS}
    out = {}
    for k in KINDS:
        if k.value not in values:
            raise ValueError(f"missing power density for {k.value}")
        out[k] = float(values[k.value])
    unknown = set(values) - {k.value for k in KINDS}
    if unknown:
        raise ValueError(f"unknown room kinds {sorted(unknown)}")
    return out


@dataclass(frozen=True)
class EnergyParams:
    u_wall: float = 0.6  # W/m2K
    u_window: float = 2.8
    shgc: float = 0.4
    window_height: float = 1.5  # m
    lighting_pd: Mapping[RoomKind, float] = field(default_factory=dict)  # W/m2
    equipment_pd: Mapping[RoomKind, float] = field(default_factory=dict)
    lighting_hours: float = 5.0  # h/day
    equipment_hours: float = 10.0
    hot_water: float = 40.0  # kWh/m2.yr over kitchen + bathroom area
    cop_cooling: float = 3.0
    eff_heating: float = 0.9
    gain_utilization: float = 0.8
    name: str = "custom"

    def __post_init__(self):
        for key in ("lighting_pd", "equipment_pd"):
            object.__setattr__(self, key, _per_kind(getattr(self, key)))
        for key in ("u_wall", "u_window", "window_height", "cop_cooling", "eff_heating"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")
        for key in ("lighting_hours", "equipment_hours", "hot_water"):
            if not getattr(self, key) >= 0:
                raise ValueError(f"{key} must be non-negative")
        for key in ("shgc", "gain_utilization"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ValueError(f"{key} must lie in [0, 1]")
        if any(v < 0 for d in (self.lighting_pd, self.equipment_pd) for v in d.values()):
            raise ValueError("power densities must be non-negative")

    @classmethod
    def from_dict(cls, data: Mapping) -> EnergyParams:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown energy parameters {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("lighting_pd", "equipment_pd"):
            out[key] = {k.value: v for k, v in getattr(self, key).items()}
        return out

    def merged(self, overrides: Mapping) -> EnergyParams:
        data = self.to_dict()
        for key, value in overrides.items():
            if isinstance(value, Mapping) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return EnergyParams.from_dict(data)

    @property
    def digest(self) -> str:
        return _digest(self.to_dict())


def _load_json(name: str) -> dict:
    return json.loads(resources.files("greengate.data").joinpath(name).read_text("utf-8"))


_DEFAULTS: dict[str, object] = {}


def default_params() -> EnergyParams:
    if "params" not in _DEFAULTS:
        _DEFAULTS["params"] = EnergyParams.from_dict(_load_json("params_default.json"))
    return _DEFAULTS["params"]


def default_climate() -> ClimateTable:
    if "climate" not in _DEFAULTS:
        _DEFAULTS["climate"] = ClimateTable.from_dict(_load_json("climate_default.json"))
    return _DEFAULTS["climate"]


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    values: np.ndarray  # (12, 5) kWh

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(12, len(END_USES))
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def vector(self) -> np.ndarray:
        return self.values.ravel().copy()

    @classmethod
    def from_vector(cls, vec) -> EnergyProfile:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (60,):
            raise ValueError(f"energy vector must have 60 entries, got {vec.shape}")
        return cls(vec.reshape(12, 5))

    def end_use(self, name: str) -> np.ndarray:
        return self.values[:, END_USES.index(name)]

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def __eq__(self, other):
        if not isinstance(other, EnergyProfile):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class EnvelopeStats:
    wall_area: float  # opaque exterior wall, m2
    window_area: float  # exterior glazing, m2
    floor_area: float  # total room area, m2


def envelope_stats(plan: Floorplan, window_height: float = 1.5) -> EnvelopeStats:
    """Exterior wall/window areas and floor area.

    A wall or window cell counts when it is exterior-facing. Window cells are
    part of the gross wall face, so the glazed area is taken out of the
    gross face rather than out of the Wall cells alone.
    """
    if window_height > plan.wall_height:
        raise EnergyError(f"window height {window_height} exceeds wall height {plan.wall_height}")
    grid = plan.grid
    facing = exterior_facing(grid)
    n_wall = int(np.count_nonzero(facing & (grid == Tag.WALL)))
    n_window = int(np.count_nonzero(facing & (grid == Tag.WINDOW)))
    n_room = int(np.count_nonzero(grid >= ROOM_BASE))
    if n_room == 0:
        raise EnergyError("empty plan")
    window_area = n_window * plan.scale * window_height
    wall_area = (n_wall + n_window) * plan.scale * plan.wall_height - window_area
    return EnvelopeStats(wall_area, window_area, n_room * plan.cell_area)


_KIND_OF_CODE = np.full(256, -1, dtype=np.int64)
for _i, _k in enumerate(KINDS):
    _KIND_OF_CODE[ROOM_BASE + _i * MAX_INSTANCES: ROOM_BASE + (_i + 1) * MAX_INSTANCES] = _i


def kind_areas(plan: Floorplan) -> np.ndarray:
    """Floor area per room kind, indexed like ``KINDS``."""
    counts = np.bincount(plan.grid.ravel(), minlength=256)
    per_kind = counts[ROOM_BASE:ROOM_BASE + len(KINDS) * MAX_INSTANCES].reshape(len(KINDS), MAX_INSTANCES)
    return per_kind.sum(axis=1) * plan.cell_area


def simulate(plan: Floorplan, params: EnergyParams | None = None,
             climate: ClimateTable | None = None) -> EnergyProfile:
    params = params or default_params()
    climate = climate or default_climate()
    env = envelope_stats(plan, params.window_height)
    areas = kind_areas(plan)
    ua = params.u_wall * env.wall_area + params.u_window * env.window_area
    with np.errstate(over="ignore", invalid="ignore"):
        values = _monthly(params, climate, env, areas, ua)
    bad = ~np.isfinite(values)
    if bad.any():
        m, u = np.argwhere(bad)[0]
        raise EnergyError(f"non-finite {END_USES[u]} in month {m + 1}")
    return EnergyProfile(values)


def _monthly(params: EnergyParams, climate: ClimateTable, env: EnvelopeStats, areas: np.ndarray,
             ua: float) -> np.ndarray:
    lpd = np.array([params.lighting_pd[k] for k in KINDS])
    epd = np.array([params.equipment_pd[k] for k in KINDS])
    wet = areas[RoomKind.KITCHEN.index] + areas[RoomKind.BATHROOM.index]
    days = np.array(MONTH_DAYS, dtype=float)
    hdd = np.array(climate.hdd)
    cdd = np.array(climate.cdd)
    solar = np.array(climate.solar)
    eta = params.gain_utilization

    lighting = float(lpd @ areas) * params.lighting_hours * days / 1000.0
    equipment = float(epd @ areas) * params.equipment_hours * days / 1000.0
    q_int = lighting + equipment
    q_sol = env.window_area * solar * params.shgc
    season = cdd + hdd
    cool_share = np.divide(cdd, season, out=np.zeros(12), where=season > 0)

    heating = np.maximum(0.0, ua * hdd * 24.0 / 1000.0 - eta * (q_int + q_sol)) / params.eff_heating
    cooling = np.maximum(0.0, ua * cdd * 24.0 / 1000.0 + (1.0 - eta) * q_int
                         + q_sol * cool_share) / params.cop_cooling
    hot_water = params.hot_water * wet * days / 365.0

    return np.column_stack([heating, cooling, lighting, equipment, hot_water])


def eui(profile: EnergyProfile, floor_area: float) -> float:
    if not floor_area > 0:
        raise EnergyError(f"floor area must be positive, got {floor_area}")
    return profile.total / floor_area
