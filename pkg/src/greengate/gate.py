"""Metric vector assembly and the four-threshold compliance gate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .egress import FIRE_LIMIT, EgressResult, egress_distance
from .energy import EUI_LIMIT, ClimateTable, EnergyParams, default_climate, default_params, simulate
from .plan import FORMAT_VERSION, ROOM_BASE, Floorplan
from .topology import RULES_VERSION, AdjacencyGraph, ConnectivityScore, build_adjacency, check_connectivity

AREA_LIMIT = 130.0  # m2
VECTOR_SIZE = 63


@dataclass(frozen=True)
class Thresholds:
    eui: float = EUI_LIMIT
    fire: float = FIRE_LIMIT
    area: float = AREA_LIMIT
    connectivity: float = 1.0

    def to_dict(self) -> dict:
        return {"eui": self.eui, "fire": self.fire, "area": self.area, "connectivity": self.connectivity}

    @classmethod
    def from_dict(cls, data: dict) -> Thresholds:
        return cls(**{k: float(v) for k, v in data.items() if v is not None})


@dataclass(frozen=True)
class MetricVector:
    """``[e(60), f, a, g]`` plus the derived EUI and the unreachable-cell count."""

    e: tuple[float, ...]  # kWh, months x end-uses
    f: float  # m
    a: float  # m2
    g: float
    eui: float  # kWh/m2.yr
    unreachable: int = 0

    def vector(self) -> np.ndarray:
        return np.array([*self.e, self.f, self.a, self.g], dtype=float)

    def to_dict(self) -> dict:
        return {"e": list(self.e), "f": self.f, "a": self.a, "g": self.g,
                "eui": self.eui, "unreachable": self.unreachable}

    @classmethod
    def from_dict(cls, data: dict) -> MetricVector:
        return cls(tuple(float(x) for x in data["e"]), float(data["f"]), float(data["a"]),
                   float(data["g"]), float(data["eui"]), int(data.get("unreachable", 0)))


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Full evaluation of one plan: the vector plus the intermediate results."""

    metrics: MetricVector
    egress: EgressResult
    graph: AdjacencyGraph
    connectivity: ConnectivityScore


def evaluate_full(plan: Floorplan, params: EnergyParams | None = None,
                  climate: ClimateTable | None = None) -> Evaluation:
    params = params or default_params()
    climate = climate or default_climate()
    eg = egress_distance(plan)
    graph = build_adjacency(plan)
    score = check_connectivity(graph)
    profile = simulate(plan, params, climate)
    area = float(np.count_nonzero(plan.grid >= ROOM_BASE)) * plan.cell_area
    e = profile.vector()
    metrics = MetricVector(tuple(e.tolist()), eg.max_distance, area, score.score,
                           float(e.sum()) / area, eg.unreachable_cells)
    return Evaluation(metrics, eg, graph, score)


def evaluate(plan: Floorplan, params: EnergyParams | None = None,
             climate: ClimateTable | None = None) -> MetricVector:
    return evaluate_full(plan, params, climate).metrics


@dataclass(frozen=True)
class ComplianceReport:
    metrics: MetricVector
    pass_energy: bool
    pass_fire: bool
    pass_area: bool
    pass_connectivity: bool
    thresholds: Thresholds = field(default_factory=Thresholds)
    rules_version: str = RULES_VERSION
    plan_id: str | None = None
    rule_results: tuple = ()

    @property
    def pass_all(self) -> bool:
        return self.pass_energy and self.pass_fire and self.pass_area and self.pass_connectivity

    @property
    def rational(self) -> bool:
        return self.pass_fire and self.pass_area and self.pass_connectivity

    def to_dict(self, versions: dict | None = None) -> dict:
        out = {
            "id": self.plan_id,
            "status": "ok",
            "metrics": self.metrics.to_dict(),
            "pass": {"energy": self.pass_energy, "fire": self.pass_fire,
                     "area": self.pass_area, "connectivity": self.pass_connectivity},
            "pass_all": self.pass_all,
            "thresholds": self.thresholds.to_dict(),
            "rules": [{"rule": r.rule, "pass": r.passed, "detail": r.detail} for r in self.rule_results],
            "versions": {"engine": __version__, "rules": self.rules_version, "format": FORMAT_VERSION},
        }
        if versions:
            out["versions"].update(versions)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ComplianceReport:
        flags = data["pass"]
        return cls(MetricVector.from_dict(data["metrics"]), flags["energy"], flags["fire"],
                   flags["area"], flags["connectivity"], Thresholds.from_dict(data["thresholds"]),
                   data.get("versions", {}).get("rules", RULES_VERSION), data.get("id"))


def gate(metrics: MetricVector, thresholds: Thresholds | None = None, *,
         plan_id: str | None = None, rule_results: tuple = ()) -> ComplianceReport:
    """Apply the four thresholds; every bound is inclusive on the compliant side."""
    t = thresholds or Thresholds()
    return ComplianceReport(
        metrics,
        pass_energy=metrics.eui <= t.eui,
        pass_fire=metrics.f <= t.fire and metrics.unreachable == 0,
        pass_area=metrics.a <= t.area,
        pass_connectivity=metrics.g >= t.connectivity,
        thresholds=t,
        plan_id=plan_id,
        rule_results=rule_results,
    )


def assess(plan: Floorplan, params: EnergyParams | None = None, climate: ClimateTable | None = None,
           thresholds: Thresholds | None = None) -> ComplianceReport:
    """Evaluate and gate ``plan`` in one go, keeping the rule details."""
    ev = evaluate_full(plan, params, climate)
    return gate(ev.metrics, thresholds, plan_id=plan.id, rule_results=ev.connectivity.rule_results)


def passes(plan: Floorplan, params: EnergyParams | None = None, climate: ClimateTable | None = None,
           thresholds: Thresholds | None = None) -> bool:
    return assess(plan, params, climate, thresholds).pass_all
