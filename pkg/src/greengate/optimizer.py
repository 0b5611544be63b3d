"""Reward-guided layout search by simulated annealing over boundary-preserving mutations.

The reward compares the evaluated metric vector with a partial target vector::

    R = -sum_k w_k * ((y_k - t_k) / n_k) ** 2 + lambda_rec * iou(plan, reference)

with normalizers ``n = (135, 15, 130, 1)`` for ``eui, f, a, g``. A target in
``max`` mode only penalizes the excess over its value (a one-sided bound),
and a ``min`` target only the shortfall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .energy import EUI_LIMIT, ClimateTable, EnergyError, EnergyParams, default_climate, default_params
from .egress import FIRE_LIMIT
from .gate import AREA_LIMIT, MetricVector, Thresholds, evaluate, gate
from .generator import MutationRejected, NoApplicableMutation, mutate
from .metrics import iou
from .plan import Floorplan, PlanError, Tag
from .rng import draw_seed, stream
from .topology import AdjacencyGraph

OPTIMIZE_STREAM = 0x0A77

NORMALIZERS = {"eui": EUI_LIMIT, "f": FIRE_LIMIT, "a": AREA_LIMIT, "g": 1.0}
MODES = ("eq", "max", "min")


@dataclass(frozen=True)
class Target:
    value: float
    weight: float = 1.0
    mode: str = "eq"

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("target weights must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown target mode {self.mode!r}")

    def residual(self, achieved: float) -> float:
        diff = achieved - self.value
        if self.mode == "max":
            return max(diff, 0.0)
        if self.mode == "min":
            return min(diff, 0.0)
        return diff

    def to_dict(self) -> dict:
        return {"value": self.value, "weight": self.weight, "mode": self.mode}


@dataclass(frozen=True, eq=False)
class Demand:
    """Targets over any subset of ``eui, f, a, g`` plus an optional reconstruction term.

    ``sketch`` is either an adjacency graph (kept for provenance) or a
    boundary mask that the start plan's exterior must match.
    """

    targets: Mapping[str, Target]
    lambda_rec: float = 0.0
    reference: Floorplan | None = None
    sketch: AdjacencyGraph | np.ndarray | None = None

    def __post_init__(self):
        targets = {k: (v if isinstance(v, Target) else Target(float(v))) for k, v in self.targets.items()}
        if not targets:
            raise ValueError("a demand needs at least one target")
        unknown = set(targets) - set(NORMALIZERS)
        if unknown:
            raise ValueError(f"unknown targets {sorted(unknown)}")
        if self.lambda_rec < 0:
            raise ValueError("lambda_rec must be >= 0")
        object.__setattr__(self, "targets", targets)

    @property
    def max_reward(self) -> float:
        """Supremum of the reward: zero residuals and a perfect reconstruction."""
        return self.lambda_rec if self.reference is not None else 0.0

    @classmethod
    def from_thresholds(cls, thresholds: Thresholds | None = None) -> Demand:
        """One-sided targets at the gate thresholds."""
        t = thresholds or Thresholds()
        return cls({"eui": Target(t.eui, mode="max"), "f": Target(t.fire, mode="max"),
                    "a": Target(t.area, mode="max"), "g": Target(t.connectivity, mode="min")})

    def to_dict(self) -> dict:
        return {"targets": {k: v.to_dict() for k, v in self.targets.items()},
                "lambda_rec": self.lambda_rec, "reference": self.reference.id if self.reference else None}


@dataclass(frozen=True)
class SearchConfig:
    max_steps: int = 2000
    temperature: float = 0.05
    cooling: float = 0.998
    seed: int = 0
    stop_reward: float | None = None

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0 (0 is hill climbing)")
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must lie in (0, 1)")


def _achieved(metrics: MetricVector, key: str, plan: Floorplan) -> float:
    if key == "eui":
        return metrics.eui
    if key == "f":
        # Unreachable cells mean egress is not possible at all: push past the limit.
        if metrics.unreachable:
            return max(metrics.f, FIRE_LIMIT) + metrics.unreachable * plan.scale
        return metrics.f
    if key == "a":
        return metrics.a
    return metrics.g


def reward_from_metrics(plan: Floorplan, metrics: MetricVector, demand: Demand) -> float:
    r = 0.0
    for key, target in demand.targets.items():
        res = target.residual(_achieved(metrics, key, plan)) / NORMALIZERS[key]
        r -= target.weight * res * res
    if demand.reference is not None and demand.lambda_rec:
        r += demand.lambda_rec * iou(plan, demand.reference)
    return r


def reward(plan: Floorplan, demand: Demand, params: EnergyParams | None = None,
           climate: ClimateTable | None = None) -> float:
    return reward_from_metrics(plan, evaluate(plan, params, climate), demand)


@dataclass(frozen=True)
class TraceStep:
    step: int
    reward: float | None  # candidate reward; None when the proposal was rejected
    accepted: bool
    mutation: dict | None
    best: float
    note: str = ""

    def to_dict(self) -> dict:
        return {"step": self.step, "reward": self.reward, "accepted": self.accepted,
                "mutation": self.mutation, "best": self.best, "note": self.note}


@dataclass(frozen=True, eq=False)
class SearchResult:
    plan: Floorplan
    reward: float
    initial_reward: float
    metrics: MetricVector
    trace: list[TraceStep] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.trace)


StopFn = Callable[[Floorplan, MetricVector], bool]


def gate_stop(thresholds: Thresholds | None = None) -> StopFn:
    """Stop predicate: the best plan passes the compliance gate."""
    return lambda plan, metrics: gate(metrics, thresholds).pass_all


def optimize(start: Floorplan, demand: Demand, cfg: SearchConfig | None = None,
             params: EnergyParams | None = None, climate: ClimateTable | None = None,
             stop: StopFn | None = None) -> SearchResult:
    """Anneal from ``start`` and return the best plan seen.

    Proposals that fail validation or evaluation count as rejected steps.
    The search ends after ``max_steps``, when the best reward reaches
    ``stop_reward`` (or the demand's maximum), or when ``stop`` holds.
    """
    cfg = cfg or SearchConfig()
    params = params or default_params()
    climate = climate or default_climate()
    if isinstance(demand.sketch, np.ndarray):
        if not np.array_equal(np.asarray(demand.sketch, bool), start.grid == Tag.EXTERIOR):
            raise ValueError("start plan does not match the demand's boundary sketch")
    rng = stream(cfg.seed, OPTIMIZE_STREAM)

    cur = start
    cur_m = evaluate(start, params, climate)
    cur_r = reward_from_metrics(start, cur_m, demand)
    best, best_m, best_r = cur, cur_m, cur_r
    initial = cur_r
    goal = demand.max_reward if cfg.stop_reward is None else min(cfg.stop_reward, demand.max_reward)
    trace: list[TraceStep] = []

    def done() -> bool:
        return best_r >= goal or (stop is not None and stop(best, best_m))

    temp = cfg.temperature
    if not done():
        for step in range(1, cfg.max_steps + 1):
            mseed = draw_seed(rng)
            u = rng.random()
            try:
                cand, mutation = mutate(cur, mseed)
            except MutationRejected as exc:
                trace.append(TraceStep(step, None, False, exc.mutation.to_dict(), best_r, exc.reason))
                temp *= cfg.cooling
                continue
            except NoApplicableMutation:
                break
            try:
                cand_m = evaluate(cand, params, climate)
            except (EnergyError, PlanError) as exc:
                trace.append(TraceStep(step, None, False, mutation.to_dict(), best_r, str(exc)))
                temp *= cfg.cooling
                continue
            cand_r = reward_from_metrics(cand, cand_m, demand)
            delta = cand_r - cur_r
            accepted = delta >= 0 or (temp > 0 and u < math.exp(delta / temp))
            if accepted:
                cur, cur_m, cur_r = cand, cand_m, cand_r
                if cand_r > best_r:
                    best, best_m, best_r = cand, cand_m, cand_r
            trace.append(TraceStep(step, cand_r, accepted, mutation.to_dict(), best_r))
            temp *= cfg.cooling
            if done():
                break
    return SearchResult(best, best_r, initial, best_m, trace)
