"""Batch labelling, corpus audit and the compliance-repair resampling loop."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from . import __version__
from .energy import ClimateTable, EnergyParams, default_climate, default_params
from .gate import ComplianceReport, Thresholds, assess, gate
from .optimizer import Demand, SearchConfig, gate_stop, optimize
from .plan import FORMAT_VERSION, Floorplan, PlanError, load_plan, parse_plan, serialize_plan
from .rng import draw_seed, stream
from .topology import RULES_VERSION

MANIFEST_FORMAT = "greengate-manifest/1"
RESAMPLE_STREAM = 0x7E5A
DEFAULT_BUDGET = 5

# Repair search schedule; see the README for how it was chosen.
REPAIR_CONFIG = SearchConfig(max_steps=800, temperature=0.0, cooling=0.99)

HIST_EDGES = {
    "eui": np.arange(0.0, 310.0, 10.0),
    "f": np.arange(0.0, 42.0, 2.0),
    "a": np.arange(0.0, 210.0, 10.0),
}


def versions(params: EnergyParams | None = None, climate: ClimateTable | None = None) -> dict:
    params = params or default_params()
    climate = climate or default_climate()
    return {"engine": __version__, "rules": RULES_VERSION, "format": FORMAT_VERSION,
            "params": f"{params.name}@{params.digest}", "climate": f"{climate.name}@{climate.digest}"}


# -- manifest -------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    seed: int | None = None

    def to_dict(self) -> dict:
        out = {"id": self.id, "path": self.path}
        if self.seed is not None:
            out["seed"] = self.seed
        return out


@dataclass(frozen=True)
class CorpusManifest:
    """Plan list with provenance; relative paths resolve against ``root``."""

    entries: tuple[ManifestEntry, ...]
    provenance: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    root: Path = Path(".")

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ValueError(f"duplicate manifest ids: {', '.join(dup)}")

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def to_dict(self) -> dict:
        return {"format": MANIFEST_FORMAT, "plans": [e.to_dict() for e in self.entries],
                "provenance": self.provenance, "versions": self.versions}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> CorpusManifest:
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, list):
            data = {"plans": data}
        entries = tuple(ManifestEntry(str(p["id"]), str(p["path"]), p.get("seed")) for p in data["plans"])
        return cls(entries, data.get("provenance", {}), data.get("versions", {}), path.parent)


def write_corpus(plans: Sequence[Floorplan], out_dir: str | Path, provenance: dict | None = None,
                 seeds: Sequence[int | None] | None = None) -> CorpusManifest:
    """Write plans as ``<id>.fpgrid`` plus ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, plan in enumerate(plans):
        name = f"{plan.id}.fpgrid"
        (out / name).write_bytes(serialize_plan(plan))
        entries.append(ManifestEntry(plan.id, name, seeds[i] if seeds else None))
    manifest = CorpusManifest(tuple(entries), provenance or {}, versions(), out)
    manifest.save(out / "manifest.json")
    return manifest


# -- worker pool --------------------------------------------------------------------------

def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _map(fn: Callable, items: Sequence, jobs: int | None) -> Iterator:
    """Ordered map over ``items``; in-process when one job suffices."""
    jobs = default_jobs() if not jobs else jobs
    if jobs <= 1 or len(items) <= 1:
        yield from map(fn, items)
        return
    chunk = max(1, min(64, len(items) // (4 * jobs)))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        yield from ex.map(fn, items, chunksize=chunk)


# -- label ----------------------------------------------------------------------------------

def _label_one(args) -> dict:
    entry_id, path, params, climate, thresholds, vers = args
    try:
        plan = load_plan(path)
        if plan.id != entry_id:
            plan = plan.replace(id=entry_id)
        return assess(plan, params, climate, thresholds).to_dict(vers)
    except (OSError, PlanError, ValueError) as exc:
        return {"id": entry_id, "status": "error", "path": str(path), "error": str(exc), "versions": vers}


def label(manifest: CorpusManifest, params: EnergyParams | None = None, climate: ClimateTable | None = None,
          thresholds: Thresholds | None = None, jobs: int | None = None) -> Iterator[dict]:
    """One report record per manifest entry, in manifest order; bad files give error records."""
    params = params or default_params()
    climate = climate or default_climate()
    thresholds = thresholds or Thresholds()
    vers = versions(params, climate)
    items = [(e.id, str(manifest.resolve(e)), params, climate, thresholds, vers) for e in manifest.entries]
    yield from _map(_label_one, items, jobs)


def write_jsonl(records: Iterable[dict], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- audit ----------------------------------------------------------------------------------

CATEGORIES = ("energy", "fire", "area", "connectivity")


@dataclass(frozen=True)
class AuditSummary:
    count: int
    errors: int
    violation_rates: dict[str, float]
    pass_all: float
    rationality: float
    mean_eui: float
    histograms: dict[str, dict]
    delta_eui_pct: float | None = None

    def to_dict(self) -> dict:
        return {"count": self.count, "errors": self.errors, "violation_rates": self.violation_rates,
                "pass_all": self.pass_all, "rationality": self.rationality, "mean_eui": self.mean_eui,
                "delta_eui_pct": self.delta_eui_pct, "histograms": self.histograms}


def _as_report(rec) -> ComplianceReport | None:
    if isinstance(rec, ComplianceReport):
        return rec
    if rec.get("status", "ok") != "ok":
        return None
    return ComplianceReport.from_dict(rec)


def _histogram(values: np.ndarray, edges: np.ndarray) -> dict:
    bins = np.append(edges, np.inf)
    counts, _ = np.histogram(values, bins=bins)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def audit(records: Iterable, reference: Iterable | None = None) -> AuditSummary:
    """Violation rates per category, pass_all rate, rationality and EUI/fire/area histograms.

    Error records are counted but excluded from the rates. The last histogram
    bin is open-ended.
    """
    records = list(records)
    reports = [r for r in (_as_report(x) for x in records) if r is not None]
    if not reports:
        raise ValueError("audit needs at least one report")
    n = len(reports)
    flags = {"energy": [r.pass_energy for r in reports], "fire": [r.pass_fire for r in reports],
             "area": [r.pass_area for r in reports], "connectivity": [r.pass_connectivity for r in reports]}
    rates = {k: 1.0 - sum(v) / n for k, v in flags.items()}
    eui = np.array([r.metrics.eui for r in reports])
    hist = {"eui": _histogram(eui, HIST_EDGES["eui"]),
            "f": _histogram(np.array([r.metrics.f for r in reports]), HIST_EDGES["f"]),
            "a": _histogram(np.array([r.metrics.a for r in reports]), HIST_EDGES["a"])}
    delta = None
    if reference is not None:
        ref = [r for r in (_as_report(x) for x in reference) if r is not None]
        if ref:
            ref_mean = float(np.mean([r.metrics.eui for r in ref]))
            if ref_mean:
                delta = (float(eui.mean()) - ref_mean) / ref_mean * 100.0
    return AuditSummary(n, len(records) - n, rates, sum(r.pass_all for r in reports) / n,
                        sum(r.rational for r in reports) / n, float(eui.mean()), hist, delta)


# -- resample --------------------------------------------------------------------------------

PRESERVED, REPAIRED, FAILED = "Preserved", "Repaired", "Failed"


@dataclass(frozen=True)
class ResampleOutcome:
    id: str
    status: str
    attempts: int
    final_id: str | None
    note: str = ""

    def to_dict(self, vers: dict | None = None) -> dict:
        out = {"id": self.id, "status": self.status, "attempts": self.attempts,
               "final_id": self.final_id, "note": self.note}
        if vers:
            out["versions"] = vers
        return out


def _resample_one(args):
    index, entry_id, path, budget, seed, params, climate, thresholds, cfg = args
    try:
        raw = Path(path).read_bytes()
        plan = parse_plan(raw)
    except (OSError, PlanError) as exc:
        return ResampleOutcome(entry_id, FAILED, 0, None, f"unreadable: {exc}"), None, None
    if plan.id != entry_id:
        plan = plan.replace(id=entry_id)
    report = assess(plan, params, climate, thresholds)
    if report.pass_all:
        return ResampleOutcome(entry_id, PRESERVED, 0, entry_id), raw, None
    demand = Demand.from_thresholds(thresholds)
    stop = gate_stop(thresholds)
    current = plan
    for attempt in range(1, budget + 1):
        run_seed = draw_seed(stream(seed, RESAMPLE_STREAM, index, attempt))
        run_cfg = SearchConfig(cfg.max_steps, cfg.temperature, cfg.cooling, run_seed, cfg.stop_reward)
        result = optimize(current, demand, run_cfg, params, climate, stop=stop)
        current = result.plan
        if gate(result.metrics, thresholds).pass_all:
            new_id = f"{entry_id}.r{attempt}"
            meta = {**plan.meta, "repaired_from": entry_id, "attempts": attempt}
            repaired = current.replace(id=new_id, meta=meta)
            return ResampleOutcome(entry_id, REPAIRED, attempt, new_id), None, serialize_plan(repaired)
    last = assess(current, params, climate, thresholds)
    failing = [k for k, ok in zip(CATEGORIES, (last.pass_energy, last.pass_fire, last.pass_area,
                                               last.pass_connectivity)) if not ok]
    return ResampleOutcome(entry_id, FAILED, budget, None, f"budget exhausted; still failing {', '.join(failing)}"), None, None


def resample(manifest: CorpusManifest, out_dir: str | Path, budget: int = DEFAULT_BUDGET, seed: int = 7,
             params: EnergyParams | None = None, climate: ClimateTable | None = None,
             thresholds: Thresholds | None = None, jobs: int | None = None,
             cfg: SearchConfig = REPAIR_CONFIG) -> tuple[CorpusManifest, list[ResampleOutcome]]:
    """Keep passing plans byte-for-byte and repair the rest with gate-targeted search.

    Each failing plan gets up to ``budget`` optimizer runs, each seeded from
    (seed, manifest index, attempt) and continuing from the previous run's
    best plan. The output corpus holds only Preserved and Repaired plans.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    params = params or default_params()
    climate = climate or default_climate()
    thresholds = thresholds or Thresholds()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = [(i, e.id, str(manifest.resolve(e)), budget, seed, params, climate, thresholds, cfg)
             for i, e in enumerate(manifest.entries)]
    outcomes: list[ResampleOutcome] = []
    entries = []
    for outcome, raw, repaired in _map(_resample_one, items, jobs):
        outcomes.append(outcome)
        if outcome.status == FAILED:
            continue
        name = f"{outcome.final_id}.fpgrid"
        (out / name).write_bytes(raw if raw is not None else repaired)
        entries.append(ManifestEntry(outcome.final_id, name))
    vers = versions(params, climate)
    provenance = {**manifest.provenance, "resample": {"source": manifest.provenance.get("name"),
                                                      "budget": budget, "seed": seed,
                                                      "thresholds": thresholds.to_dict()}}
    result = CorpusManifest(tuple(entries), provenance, vers, out)
    result.save(out / "manifest.json")
    write_jsonl((o.to_dict(vers) for o in outcomes), out / "outcomes.jsonl")
    return result, outcomes
