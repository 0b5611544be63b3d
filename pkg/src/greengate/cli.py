"""Command-line entry point: ``greengate <command> ...``.

Exit codes: 0 success, 1 fatal error, 2 partial result (error records or
failed repairs), 64 usage error. In json mode stdout carries data only and
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .egress import egress_distance
from .energy import ClimateTable, EnergyParams, default_climate, default_params
from .gate import Thresholds, assess, evaluate_full, gate
from .generator import GenerationError, corpus_specs, synth
from .metrics import ged, iou
from .optimizer import Demand, SearchConfig, Target, optimize
from .pipeline import (
    CATEGORIES,
    FAILED,
    REPAIR_CONFIG,
    CorpusManifest,
    audit,
    label,
    read_jsonl,
    resample,
    versions,
    write_corpus,
    write_jsonl,
)
from .plan import FORMAT_VERSION, PlanError, load_plan, serialize_plan
from .topology import RULES_VERSION, build_adjacency

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2, 64
CONFIG_ENV = "GREENGATE_CONFIG"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


class Fatal(Exception):
    pass


def _warn(msg: str) -> None:
    print(f"greengate: {msg}", file=sys.stderr)


def _emit(args, data, human: str | None = None) -> None:
    if args.format == "human" and human is not None:
        print(human)
    else:
        print(json.dumps(data, sort_keys=True))


# -- shared options ----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json", help="JSON output (default)")
    fmt.add_argument("--human", dest="format", action="store_const", const="human", help="human-readable output")
    p.set_defaults(format="json")
    p.add_argument("--params", help="energy parameter JSON (partial overrides allowed)")
    p.add_argument("--climate", help="climate table JSON")
    p.add_argument("--max-eui", type=float, help="EUI threshold, kWh/m2.yr")
    p.add_argument("--max-fire", type=float, help="egress distance threshold, m")
    p.add_argument("--max-area", type=float, help="floor area threshold, m2")
    p.add_argument("--min-connectivity", type=float, help="connectivity threshold")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (default: all cores)")


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise Fatal(f"{path}: {exc}") from None


def _params(args) -> EnergyParams:
    if not args.params:
        return default_params()
    try:
        return default_params().merged(_load_json(args.params))
    except (TypeError, ValueError) as exc:
        raise Fatal(f"{args.params}: {exc}") from None


def _climate(args) -> ClimateTable:
    if not args.climate:
        return default_climate()
    try:
        return ClimateTable.from_dict(_load_json(args.climate))
    except (KeyError, TypeError, ValueError) as exc:
        raise Fatal(f"{args.climate}: {exc}") from None


def _thresholds(args) -> Thresholds:
    base = Thresholds()
    return Thresholds(
        args.max_eui if args.max_eui is not None else base.eui,
        args.max_fire if args.max_fire is not None else base.fire,
        args.max_area if args.max_area is not None else base.area,
        args.min_connectivity if args.min_connectivity is not None else base.connectivity,
    )


def _plan(path: str):
    try:
        return load_plan(path)
    except OSError as exc:
        raise Fatal(f"{path}: {exc.strerror or exc}") from None
    except PlanError as exc:
        raise Fatal(f"{path}: {exc}") from None


def _manifest(path: str) -> CorpusManifest:
    try:
        return CorpusManifest.load(path)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise Fatal(f"{path}: {exc}") from None


# -- commands ------------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    params, climate, thresholds = _params(args), _climate(args), _thresholds(args)
    vers = versions(params, climate)
    for path in args.plans:
        plan = _plan(path)
        ev = evaluate_full(plan, params, climate)
        report = gate(ev.metrics, thresholds, plan_id=plan.id, rule_results=ev.connectivity.rule_results)
        data = report.to_dict(vers)
        data["egress"] = {"farthest_cell": list(ev.egress.farthest_cell),
                          "unreachable_cells": ev.egress.unreachable_cells}
        if args.dump_distance:
            out = Path(args.dump_distance)
            if len(args.plans) > 1:
                out = out.with_name(f"{out.stem}.{plan.id}{out.suffix or '.json'}")
            field = [[None if not np.isfinite(v) else float(v) for v in row] for row in ev.egress.distance_field]
            out.write_text(json.dumps({"id": plan.id, "unit": "m", "distance": field}) + "\n", encoding="utf-8")
        m = ev.metrics
        flags = " ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in data["pass"].items())
        _emit(args, data, f"{plan.id}: eui={m.eui:.2f} f={m.f:.2f} a={m.a:.2f} g={m.g:.3f} {flags} "
                          f"-> {'PASS' if report.pass_all else 'FAIL'}")
    return EXIT_OK


def cmd_label(args) -> int:
    manifest = _manifest(args.manifest)
    if not len(manifest):
        _warn("manifest is empty; no reports written")
    records = label(manifest, _params(args), _climate(args), _thresholds(args), args.jobs)
    errors = 0

    def counted():
        nonlocal errors
        for rec in records:
            if rec.get("status") == "error":
                errors += 1
                _warn(f"{rec['id']}: {rec['error']}")
            yield rec

    if args.out:
        n = write_jsonl(counted(), args.out)
    else:
        n = 0
        for rec in counted():
            print(json.dumps(rec, sort_keys=True))
            n += 1
    _warn(f"labelled {n - errors} plans, {errors} errors")
    return EXIT_PARTIAL if errors else EXIT_OK


def _read_labels(path: str) -> list[dict]:
    try:
        return read_jsonl(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise Fatal(f"{path}: {exc}") from None


def _audit_text(summary) -> str:
    lines = [f"plans: {summary.count} (errors: {summary.errors})",
             f"pass_all: {summary.pass_all:.1%}   rationality: {summary.rationality:.1%}   "
             f"mean EUI: {summary.mean_eui:.2f}"]
    if summary.delta_eui_pct is not None:
        lines.append(f"delta EUI vs reference: {summary.delta_eui_pct:+.2f}%")
    lines.append("violation rates:")
    for k in CATEGORIES:
        rate = summary.violation_rates[k]
        lines.append(f"  {k:<13}{rate:7.1%}  {'#' * int(round(rate * 40))}")
    return "\n".join(lines)


def cmd_audit(args) -> int:
    records = _read_labels(args.labels)
    reference = _read_labels(args.reference) if args.reference else None
    try:
        summary = audit(records, reference)
    except ValueError as exc:
        raise Fatal(f"{args.labels}: {exc}") from None
    _emit(args, {**summary.to_dict(), "versions": versions(_params(args), _climate(args))}, _audit_text(summary))
    return EXIT_PARTIAL if summary.errors else EXIT_OK


def cmd_report(args) -> int:
    records = _read_labels(args.labels)
    try:
        summary = audit(records)
    except ValueError as exc:
        raise Fatal(f"{args.labels}: {exc}") from None
    if args.format == "json":
        _emit(args, {**summary.to_dict(), "versions": versions(_params(args), _climate(args))})
        return EXIT_OK
    lines = [_audit_text(summary)]
    for key, unit in (("eui", "kWh/m2.yr"), ("f", "m"), ("a", "m2")):
        h = summary.histograms[key]
        top = max(h["counts"]) or 1
        lines.append(f"\n{key} ({unit})")
        edges = h["edges"] + [float("inf")]
        for lo, hi, c in zip(edges, edges[1:], h["counts"]):
            if c:
                lines.append(f"  [{lo:6.1f}, {hi:6.1f})  {c:6d}  {'#' * max(1, int(round(c / top * 40)))}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_resample(args) -> int:
    manifest = _manifest(args.manifest)
    cfg = SearchConfig(args.steps, args.temperature, args.cooling, 0)
    out, outcomes = resample(manifest, args.out_dir, args.budget, args.seed, _params(args), _climate(args),
                             _thresholds(args), args.jobs, cfg)
    counts = {s: sum(o.status == s for o in outcomes) for s in ("Preserved", "Repaired", "Failed")}
    for o in outcomes:
        if o.status == FAILED:
            _warn(f"{o.id}: failed ({o.note})")
    _emit(args, {"out_dir": str(args.out_dir), "plans": len(out), **counts, "versions": out.versions},
          f"preserved {counts['Preserved']}, repaired {counts['Repaired']}, failed {counts['Failed']} "
          f"-> {args.out_dir}")
    return EXIT_PARTIAL if counts["Failed"] else EXIT_OK


def cmd_optimize(args) -> int:
    plan = _plan(args.plan)
    params, climate = _params(args), _climate(args)
    targets = {}
    if args.target_eui is not None:
        targets["eui"] = Target(args.target_eui, args.weight_eui)
    if args.target_fire is not None:
        targets["f"] = Target(args.target_fire, args.weight_fire)
    if args.target_area is not None:
        targets["a"] = Target(args.target_area, args.weight_area)
    if args.require_connectivity:
        targets["g"] = Target(1.0, args.weight_connectivity)
    if not targets:
        raise UsageError("optimize needs at least one --target-* or --require-connectivity")
    reference = _plan(args.reference) if args.reference else None
    if args.lambda_rec and reference is None:
        reference = plan
    demand = Demand(targets, args.lambda_rec, reference)
    cfg = SearchConfig(args.steps, args.temperature, args.cooling, args.seed, args.stop_reward)
    result = optimize(plan, demand, cfg, params, climate)
    vers = versions(params, climate)
    if args.trace:
        write_jsonl(({**s.to_dict(), "versions": vers} for s in result.trace), args.trace)
    if args.out:
        Path(args.out).write_bytes(serialize_plan(result.plan))
    m = result.metrics
    data = {"id": plan.id, "initial_reward": result.initial_reward, "reward": result.reward,
            "steps": result.steps, "metrics": m.to_dict(), "demand": demand.to_dict(),
            "seed": args.seed, "versions": vers}
    _emit(args, data, f"{plan.id}: reward {result.initial_reward:.6f} -> {result.reward:.6f} in "
                      f"{result.steps} steps; eui={m.eui:.2f} f={m.f:.2f} a={m.a:.2f} g={m.g:.3f}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    if args.manifest or args.labels:
        if args.manifest:
            params, climate, thresholds = _params(args), _climate(args), _thresholds(args)
            records = list(label(_manifest(args.manifest), params, climate, thresholds, args.jobs))
            reference = (list(label(_manifest(args.reference), params, climate, thresholds, args.jobs))
                         if args.reference else None)
            source = args.manifest
        else:
            records = _read_labels(args.labels)
            reference = _read_labels(args.reference) if args.reference else None
            source = args.labels
        try:
            s = audit(records, reference)
        except ValueError as exc:
            raise Fatal(f"{source}: {exc}") from None
        data = {"rationality": s.rationality, "mean_eui": s.mean_eui, "delta_eui_pct": s.delta_eui_pct,
                "count": s.count, "versions": versions(_params(args), _climate(args))}
        delta = "n/a" if s.delta_eui_pct is None else f"{s.delta_eui_pct:+.2f}%"
        _emit(args, data, f"rationality {s.rationality:.3f}  mean EUI {s.mean_eui:.2f}  delta EUI {delta}")
        return EXIT_OK
    if len(args.plans) != 2:
        raise UsageError("metrics needs two plans, --manifest or --labels")
    a, b = (_plan(p) for p in args.plans)
    try:
        score = iou(a, b)
    except ValueError as exc:
        raise Fatal(str(exc)) from None
    dist = ged(build_adjacency(a), build_adjacency(b))
    data = {"a": a.id, "b": b.id, "iou": score, "ged": dist.cost, "ged_approx": dist.approx,
            "versions": versions()}
    _emit(args, data, f"iou {score:.4f}  ged {dist.cost:g}{' (approx)' if dist.approx else ''}")
    return EXIT_OK


def cmd_synth(args) -> int:
    specs = corpus_specs(args.count, args.seed, args.noise)
    plans = []
    for spec in specs:
        try:
            plans.append(synth(spec))
        except GenerationError as exc:
            raise Fatal(f"{spec.id}: {exc}") from None
    provenance = {"name": f"synth-seed{args.seed}-noise{args.noise}", "generator": "synth",
                  "count": args.count, "seed": args.seed, "noise": args.noise}
    manifest = write_corpus(plans, args.out_dir, provenance, [s.seed for s in specs])
    _emit(args, {"out_dir": str(args.out_dir), "plans": len(manifest),
                 "manifest": str(Path(args.out_dir) / "manifest.json"), "versions": manifest.versions},
          f"wrote {len(manifest)} plans to {args.out_dir}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="greengate", description="Floorplan compliance engine and corpus pipeline.")
    parser.add_argument("--version", action="store_true", help="print engine, rules, params and format versions")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("evaluate", help="evaluate and gate plan files")
    _common(p)
    p.add_argument("plans", nargs="+")
    p.add_argument("--dump-distance", metavar="JSON", help="write the egress distance field as a JSON matrix (null = unreachable)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("label", help="label every plan in a manifest")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="JSON-lines output (default: stdout)")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("audit", help="summarize a label file")
    _common(p)
    p.add_argument("labels")
    p.add_argument("--reference", help="reference labels for the EUI delta")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("report", help="audit with histograms")
    _common(p)
    p.add_argument("labels")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("resample", help="repair a corpus until every plan passes")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--budget", type=int, default=5)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--steps", type=int, default=REPAIR_CONFIG.max_steps)
    p.add_argument("--temperature", type=float, default=REPAIR_CONFIG.temperature)
    p.add_argument("--cooling", type=float, default=REPAIR_CONFIG.cooling)
    p.set_defaults(func=cmd_resample)

    defaults = SearchConfig()
    p = sub.add_parser("optimize", help="reward-guided search from one plan")
    _common(p)
    p.add_argument("plan")
    p.add_argument("--target-eui", type=float)
    p.add_argument("--target-fire", type=float)
    p.add_argument("--target-area", type=float)
    p.add_argument("--require-connectivity", action="store_true")
    for key in ("eui", "fire", "area", "connectivity"):
        p.add_argument(f"--weight-{key}", type=float, default=1.0)
    p.add_argument("--lambda-rec", type=float, default=0.0)
    p.add_argument("--reference", help="reference plan for the IoU term (default: the start plan)")
    p.add_argument("--steps", type=int, default=defaults.max_steps)
    p.add_argument("--temperature", type=float, default=defaults.temperature)
    p.add_argument("--cooling", type=float, default=defaults.cooling)
    p.add_argument("--stop-reward", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="per-step JSON-lines trace")
    p.add_argument("--out", help="write the best plan here")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("metrics", help="pair metrics (IoU, GED) or corpus metrics")
    _common(p)
    p.add_argument("plans", nargs="*")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--manifest", help="corpus manifest to evaluate")
    src.add_argument("--labels", help="label file from `label`")
    p.add_argument("--reference", help="reference manifest (with --manifest) or label file (with --labels)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    _common(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _apply_config(parser: argparse.ArgumentParser, config: dict) -> None:
    """Config values become subcommand defaults, so explicit flags still win."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    shared = {k.replace("-", "_"): v for k, v in config.items() if not isinstance(v, dict)}
    thresholds = config.get("thresholds", {})
    for key, dest in (("eui", "max_eui"), ("fire", "max_fire"), ("area", "max_area"),
                      ("connectivity", "min_connectivity")):
        if key in thresholds:
            shared[dest] = thresholds[key]
    for name, p in sub.choices.items():
        dests = {a.dest for a in p._actions}
        values = {k: v for k, v in shared.items() if k in dests}
        values.update({k.replace("-", "_"): v for k, v in config.get(name, {}).items()
                       if k.replace("-", "_") in dests})
        p.set_defaults(**values)


def _version_text() -> str:
    params, climate = default_params(), default_climate()
    return (f"greengate {__version__}\nrules {RULES_VERSION}\nparams {params.name}@{params.digest}\n"
            f"climate {climate.name}@{climate.digest}\nformat {FORMAT_VERSION}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        cfg_path = os.environ.get(CONFIG_ENV)
        if cfg_path:
            config = _load_json(cfg_path)
            if not isinstance(config, dict):
                raise Fatal(f"{cfg_path}: config must be a JSON object")
            _apply_config(parser, config)
        args = parser.parse_args(argv)
        if args.version:
            print(_version_text())
            return EXIT_OK
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        if str(exc) and not str(exc).startswith(("argument", "unrecognized", "the following")):
            _warn(str(exc))
        return EXIT_USAGE
    except Fatal as exc:
        _warn(str(exc))
        return EXIT_FATAL
    except (PlanError, GenerationError, ValueError) as exc:
        _warn(str(exc))
        return EXIT_FATAL
