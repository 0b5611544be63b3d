import json
import shutil

import pytest

from greengate.gate import assess
from greengate.generator import corpus_specs, synth
from greengate.pipeline import (
    FAILED,
    PRESERVED,
    REPAIRED,
    CorpusManifest,
    ManifestEntry,
    audit,
    label,
    read_jsonl,
    resample,
    write_corpus,
    write_jsonl,
)
from greengate.plan import load_plan, serialize_plan
from greengate.optimizer import SearchConfig

from conftest import FIXTURES


def _compliant(n):
    plans = []
    for spec in corpus_specs(40, seed=11, noise=0.0):
        plan = synth(spec)
        if assess(plan).pass_all:
            plans.append(plan)
        if len(plans) == n:
            return plans
    raise AssertionError("not enough compliant plans")


@pytest.fixture(scope="module")
def noisy_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("noisy")
    plans = [synth(s) for s in corpus_specs(16, seed=7, noise=0.6)]
    return write_corpus(plans, out, {"name": "noisy16"})


def test_manifest_round_trip_and_duplicate_ids(tmp_path):
    m = CorpusManifest((ManifestEntry("a", "a.fpgrid", 3), ManifestEntry("b", "b.fpgrid")),
                       {"name": "x"}, {"engine": "0"}, tmp_path)
    m.save(tmp_path / "manifest.json")
    back = CorpusManifest.load(tmp_path / "manifest.json")
    assert back.entries == m.entries and back.provenance == {"name": "x"}
    assert back.resolve(back.entries[0]) == tmp_path / "a.fpgrid"
    with pytest.raises(ValueError, match="duplicate"):
        CorpusManifest((ManifestEntry("a", "1"), ManifestEntry("a", "2")))
    (tmp_path / "list.json").write_text(json.dumps([{"id": "a", "path": "a.fpgrid"}]))
    assert len(CorpusManifest.load(tmp_path / "list.json")) == 1


def test_empty_corpus(tmp_path):
    empty = CorpusManifest((), root=tmp_path)
    assert list(label(empty)) == []
    with pytest.raises(ValueError, match="at least one report"):
        audit([])
    out, outcomes = resample(empty, tmp_path / "out")
    assert len(out) == 0 and outcomes == []


def test_malformed_file_gives_error_record(tmp_path):
    corpus = write_corpus(_compliant(3), tmp_path)
    (tmp_path / "broken.fpgrid").write_text("not a plan\n")
    manifest = CorpusManifest(corpus.entries + (ManifestEntry("broken", "broken.fpgrid"),), root=tmp_path)
    records = list(label(manifest, jobs=1))
    assert len(records) == 4
    assert [r.get("status", "ok") for r in records] == ["ok", "ok", "ok", "error"]
    assert records[3]["id"] == "broken" and records[3]["error"]
    summary = audit(records)
    assert summary.count == 3 and summary.errors == 1


def test_label_is_deterministic_and_ordered(noisy_corpus, tmp_path):
    a = list(label(noisy_corpus, jobs=1))
    b = list(label(noisy_corpus, jobs=2))
    assert a == b
    assert [r["id"] for r in a] == [e.id for e in noisy_corpus.entries]
    write_jsonl(a, tmp_path / "labels.jsonl")
    assert read_jsonl(tmp_path / "labels.jsonl") == json.loads(json.dumps(a))


def test_audit_of_compliant_corpus(tmp_path):
    corpus = write_corpus(_compliant(4), tmp_path)
    summary = audit(label(corpus, jobs=1))
    assert summary.pass_all == 1.0 and summary.rationality == 1.0
    assert set(summary.violation_rates.values()) == {0.0}


def test_audit_rates_match_report_flags(noisy_corpus):
    records = list(label(noisy_corpus, jobs=1))
    summary = audit(records)
    n = len(records)
    assert summary.count == n and summary.errors == 0
    expected = {k: sum(not r["pass"][k] for r in records) / n for k in ("energy", "fire", "area", "connectivity")}
    assert summary.violation_rates == pytest.approx(expected)
    assert summary.pass_all == pytest.approx(sum(r["pass_all"] for r in records) / n)
    assert summary.mean_eui == pytest.approx(sum(r["metrics"]["eui"] for r in records) / n)
    for hist in summary.histograms.values():
        assert sum(hist["counts"]) == n
    assert audit(records, records).delta_eui_pct == 0.0


def test_resample_preserves_passing_bytes_and_is_idempotent(tmp_path):
    plans = _compliant(2)
    src = write_corpus(plans, tmp_path / "src")
    shutil.copy(FIXTURES / "glazed.fpgrid", tmp_path / "src" / "glazed.fpgrid")
    manifest = CorpusManifest(src.entries + (ManifestEntry("glazed", "glazed.fpgrid"),), root=tmp_path / "src")
    out, outcomes = resample(manifest, tmp_path / "out", jobs=1)
    assert [o.status for o in outcomes] == [PRESERVED, PRESERVED, REPAIRED]
    for plan in plans:
        assert (tmp_path / "out" / f"{plan.id}.fpgrid").read_bytes() == serialize_plan(plan)
    assert audit(label(out, jobs=1)).pass_all == 1.0

    again, outcomes2 = resample(CorpusManifest.load(tmp_path / "out" / "manifest.json"), tmp_path / "again", jobs=1)
    assert {o.status for o in outcomes2} == {PRESERVED}
    for entry in again.entries:
        assert again.resolve(entry).read_bytes() == out.resolve(entry).read_bytes()
    logged = read_jsonl(tmp_path / "out" / "outcomes.jsonl")
    assert [r["status"] for r in logged] == [PRESERVED, PRESERVED, REPAIRED]


def test_glazed_fixture_repaired_within_frozen_attempts(tmp_path):
    shutil.copy(FIXTURES / "glazed.fpgrid", tmp_path / "glazed.fpgrid")
    manifest = CorpusManifest((ManifestEntry("glazed", "glazed.fpgrid"),), root=tmp_path)
    out, (outcome,) = resample(manifest, tmp_path / "out", seed=7, budget=5, jobs=1)
    assert outcome.status == REPAIRED and outcome.attempts == 1
    repaired = load_plan(out.resolve(out.entries[0]))
    assert repaired.id == "glazed.r1" and repaired.meta["repaired_from"] == "glazed"
    assert assess(repaired).pass_all
    original = load_plan(FIXTURES / "glazed.fpgrid")
    assert ((repaired.grid == 0) == (original.grid == 0)).all()


def test_exhausted_budget_is_reported_and_excluded(tmp_path):
    shutil.copy(FIXTURES / "glazed.fpgrid", tmp_path / "glazed.fpgrid")
    manifest = CorpusManifest((ManifestEntry("glazed", "glazed.fpgrid"),), root=tmp_path)
    tiny = SearchConfig(max_steps=1, temperature=0.0, cooling=0.5)
    out, (outcome,) = resample(manifest, tmp_path / "out", budget=1, jobs=1, cfg=tiny)
    assert outcome.status == FAILED and "energy" in outcome.note
    assert len(out) == 0
    with pytest.raises(ValueError, match="budget"):
        resample(manifest, tmp_path / "x", budget=0)
