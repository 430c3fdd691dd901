"""Diagnosis workflow: drill down from the query, roll impact back up.

The pipeline for one run, in order:

1. slowdown check of the query total against its run history (stop if the
   query did not actually slow down);
2. plan-change check via plan fingerprints (a changed plan is reported as
   the cause outright; why the optimizer switched is out of scope);
3. per-operator degradation against same-plan history;
4. dependency closures of the degraded operators become the candidate
   component set;
5. anomaly scoring of component metrics over the run window, plus
   configuration and database events in-window;
6. symptom matching of every root-cause entry against the evidence,
   filtered to candidate components;
7. impact roll-up: each cause is credited with the operator slowdown its
   locus can explain;
8. ranking by impact x confidence.

The report is a pure function of the store contents, topology, symptoms
database and configuration: diagnosing the same run twice renders
byte-identical output.
"""

from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import ingest
from .analytics import (
    DegradationRecord,
    anomaly_score,
    fit_baseline,
    operator_degradation,
)
from .errors import InsufficientHistory, NonPositiveDelta, SanDiagError, UnknownRun
from .ingest import RunRecord, RunStore, TopologyDoc
from .model import build_apg, dependency_closure, plan_fingerprint
from .symptoms import (
    EvidenceSet,
    MatchResult,
    PredicateMatch,
    RootCauseEntry,
    SymptomPredicate,
    match_cause,
)

PLAN_CHANGE_CAUSE_ID = "plan_change"

# A metric series needs this many pre-window samples before its baseline is
# trusted for anomaly scoring.
_MIN_BASELINE_SAMPLES = 6


@dataclass(frozen=True)
class EngineConfig:
    """Thresholds for the workflow; every value here is reported back out."""

    theta: float = 0.2        # relative query slowdown threshold
    tau: float = 3.0          # metric anomaly z-score threshold
    delta: float = 0.2        # relative operator degradation threshold
    k: int = 5                # minimum history length
    floor_s: float = 1.0      # absolute operator degradation floor
    interval_s: int = ingest.DEFAULT_INTERVAL_S
    history_limit: int = 50   # most recent runs considered

    def __post_init__(self) -> None:
        for name in ("theta", "tau", "delta", "floor_s"):
            if getattr(self, name) <= 0:
                raise SanDiagError(f"config: {name} must be positive")
        if self.k < 2:
            raise SanDiagError("config: k must be >= 2")
        if self.interval_s <= 0 or self.history_limit <= 0:
            raise SanDiagError("config: interval_s and history_limit must be positive")

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "tau": self.tau,
            "delta": self.delta,
            "k": self.k,
            "floor_s": self.floor_s,
            "interval_s": self.interval_s,
            "history_limit": self.history_limit,
        }


@dataclass(frozen=True)
class SlowdownVerdict:
    query_id: str
    baseline_median_s: float
    current_s: float
    rel_delta: float
    slowed: bool


@dataclass(frozen=True)
class RankedCause:
    cause_id: str
    layer: str
    description: str
    confidence: float
    impact: float
    rank_score: float
    fix: str | None = None
    locus: tuple[str, ...] = ()
    satisfied: tuple[PredicateMatch, ...] = ()
    missing: tuple[SymptomPredicate, ...] = ()


@dataclass(frozen=True)
class SuppressedEvidence:
    """Observed but ignored: its target is outside every degraded closure."""

    category: str
    target: str
    detail: str


@dataclass(frozen=True)
class DiagnosisReport:
    query_id: str
    run_id: str
    verdict: SlowdownVerdict
    plan_changed: bool
    degraded_operators: tuple[DegradationRecord, ...]
    candidate_nodes: tuple[str, ...]
    causes: tuple[RankedCause, ...]
    suppressed_evidence: tuple[SuppressedEvidence, ...]
    config: EngineConfig


# --- workflow steps ------------------------------------------------------------


def detect_slowdown(
    history: Sequence[RunRecord],
    current: RunRecord,
    theta: float = 0.2,
    min_runs: int = 5,
) -> SlowdownVerdict:
    """Compare the current total against the median of historical totals."""
    if len(history) < min_runs:
        raise InsufficientHistory(
            f"need at least {min_runs} historical runs of {current.snapshot.query_id!r}, "
            f"have {len(history)}"
        )
    baseline = statistics.median(r.snapshot.total_elapsed_s for r in history)
    current_s = current.snapshot.total_elapsed_s
    rel_delta = (current_s - baseline) / baseline
    return SlowdownVerdict(
        query_id=current.snapshot.query_id,
        baseline_median_s=baseline,
        current_s=current_s,
        rel_delta=rel_delta,
        slowed=rel_delta >= theta,
    )


def impact_rollup(
    degraded: Sequence[DegradationRecord],
    closures: Mapping[str, frozenset[str]],
    cause_locus: Mapping[str, frozenset[str]],
    total_delta_s: float,
) -> dict[str, float]:
    """Fraction of the query slowdown each cause's locus can explain.

    A cause is credited with the summed deltas of every degraded operator
    whose dependency closure touches the cause's locus, normalized by the
    total slowdown and capped at 1.  Impacts of distinct causes may sum
    above 1 when they explain the same operators.
    """
    if total_delta_s <= 0:
        raise NonPositiveDelta(f"total slowdown must be positive, got {total_delta_s}")
    impacts: dict[str, float] = {}
    for cause_id, locus in cause_locus.items():
        explained = sum(
            d.delta_s for d in degraded if closures.get(d.op_id, frozenset()) & locus
        )
        impacts[cause_id] = min(1.0, explained / total_delta_s)
    return impacts


def _modal_fingerprint(records: Sequence[RunRecord]) -> str:
    counts = Counter(r.plan_fingerprint for r in records)
    return counts.most_common(1)[0][0]


def diagnose(
    store: RunStore,
    query_id: str,
    run_id: str,
    topology: TopologyDoc,
    symptoms_db: Sequence[RootCauseEntry],
    config: EngineConfig = EngineConfig(),
) -> DiagnosisReport:
    """Run the full workflow for one stored run."""
    records = store.runs(query_id)
    current = next((r for r in records if r.snapshot.run_id == run_id), None)
    if current is None:
        raise UnknownRun(f"query {query_id!r} has no run {run_id!r}")
    past = [r for r in records if r.seq < current.seq][-config.history_limit :]

    # Step 1: did the query actually slow down?
    verdict = detect_slowdown(past, current, theta=config.theta, min_runs=config.k)
    if not verdict.slowed:
        return _report(current, verdict, False, (), (), (), (), config)

    # Step 2: same plan as before?
    modal = _modal_fingerprint(past)
    if current.plan_fingerprint != modal:
        cause = RankedCause(
            cause_id=PLAN_CHANGE_CAUSE_ID,
            layer="db",
            description=(
                f"execution plan changed: fingerprint {current.plan_fingerprint} differs "
                f"from the dominant historical plan {modal}; component drill-down suppressed"
            ),
            confidence=1.0,
            impact=1.0,
            rank_score=1.0,
        )
        return _report(current, verdict, True, (), (), (cause,), (), config)

    # Step 3: which operators degraded?
    same_plan = [r for r in past if r.plan_fingerprint == current.plan_fingerprint]
    degradation = operator_degradation(
        same_plan,
        current,
        delta=config.delta,
        floor_s=config.floor_s,
        min_runs=config.k,
    )
    degraded = tuple(d for d in degradation if d.degraded)

    # Step 4: what do those operators depend on?
    apg = build_apg(current.snapshot, topology)
    closures = {d.op_id: frozenset(dependency_closure(apg, d.op_id)) for d in degraded}
    candidates = frozenset().union(*closures.values()) if closures else frozenset()

    # Step 5: evidence over the run window (padded one interval either side).
    window = (
        current.window_start - config.interval_s,
        current.window_end + config.interval_s,
    )
    anomalies = _score_metrics(store, window, config)
    events = ingest.load_events(store.root / "events.jsonl", window=window)
    evidence = EvidenceSet(
        anomalies=tuple(anomalies),
        config_events=tuple(events),
        db_events=current.snapshot.db_events,
        candidate_nodes=candidates,
        node_kinds={n.id: n.kind for n in apg.nodes},
    )
    suppressed = _suppressed(evidence)

    # Step 6: symptom matching, with the candidate filter applied inside.
    results = [match_cause(entry, evidence) for entry in sorted(symptoms_db, key=lambda e: e.id)]

    # Steps 7-8: impact roll-up and ranking.
    entries_by_id = {e.id: e for e in symptoms_db}
    kept = [r for r in results if r.satisfied and not r.disqualified]
    total_delta = verdict.current_s - verdict.baseline_median_s
    impacts = impact_rollup(
        degraded, closures, {r.cause_id: r.locus() for r in kept}, total_delta
    )
    causes = tuple(
        sorted(
            (_ranked(entries_by_id[r.cause_id], r, impacts[r.cause_id]) for r in kept),
            key=lambda c: (-c.rank_score, c.cause_id),
        )
    )
    return _report(current, verdict, False, degraded, tuple(sorted(candidates)), causes, suppressed, config)


def _ranked(entry: RootCauseEntry, result: MatchResult, impact: float) -> RankedCause:
    return RankedCause(
        cause_id=entry.id,
        layer=entry.layer,
        description=entry.description,
        confidence=result.score,
        impact=impact,
        rank_score=impact * result.score,
        fix=entry.fix,
        locus=tuple(sorted(result.locus())),
        satisfied=result.satisfied,
        missing=result.missing,
    )


def _report(current, verdict, plan_changed, degraded, candidates, causes, suppressed, config):
    return DiagnosisReport(
        query_id=current.snapshot.query_id,
        run_id=current.snapshot.run_id,
        verdict=verdict,
        plan_changed=plan_changed,
        degraded_operators=tuple(degraded),
        candidate_nodes=tuple(candidates),
        causes=tuple(causes),
        suppressed_evidence=tuple(suppressed),
        config=config,
    )


def _score_metrics(store: RunStore, window: tuple[int, int], config: EngineConfig):
    """Degraded anomaly verdicts for every component metric, any component.

    Collection is deliberately unfiltered; the candidate filter is applied
    during matching so the report can show what was suppressed.
    """
    metrics_dir = store.root / "metrics"
    if not metrics_dir.exists():
        return []
    anomalies = []
    for series in ingest.load_metrics(metrics_dir, interval_s=config.interval_s):
        baseline_part = series.before(window[0])
        window_part = series.window(*window)
        if len(baseline_part.samples) < _MIN_BASELINE_SAMPLES or not window_part.samples:
            continue
        verdict = anomaly_score(
            fit_baseline(baseline_part.values(), series.component_id, series.metric),
            window_part.values(),
            tau=config.tau,
            window_bounds=window,
        )
        if verdict.degraded:
            anomalies.append(verdict)
    return anomalies


def _suppressed(evidence: EvidenceSet) -> tuple[SuppressedEvidence, ...]:
    out = []
    for verdict in evidence.anomalies:
        if verdict.component_id not in evidence.candidate_nodes:
            out.append(
                SuppressedEvidence(
                    category="metric_anomaly",
                    target=verdict.component_id,
                    detail=f"{verdict.metric} {verdict.direction} (z={verdict.score:.1f})",
                )
            )
    for event in evidence.config_events:
        if event.component_id not in evidence.candidate_nodes:
            out.append(
                SuppressedEvidence(
                    category="config_event",
                    target=event.component_id,
                    detail=f"{event.key}: {event.old_value!r} -> {event.new_value!r}",
                )
            )
    for db_event in evidence.db_events:
        if db_event.target not in evidence.candidate_nodes:
            out.append(
                SuppressedEvidence(
                    category="db_event", target=db_event.target, detail=db_event.code
                )
            )
    return tuple(sorted(out, key=lambda s: (s.category, s.target, s.detail)))


# --- rendering -------------------------------------------------------------------


def _predicate_to_dict(predicate: SymptomPredicate) -> dict:
    payload = {
        "kind": predicate.kind,
        "target_kind": predicate.target_kind.value,
        "weight": predicate.weight,
        "required": predicate.required,
    }
    for name in ("metric", "direction", "event_code", "config_key"):
        value = getattr(predicate, name)
        if value is not None:
            payload[name] = value
    return payload


def report_to_dict(report: DiagnosisReport) -> dict:
    return {
        "schema": "diagnosis/1",
        "query_id": report.query_id,
        "run_id": report.run_id,
        "verdict": {
            "query_id": report.verdict.query_id,
            "baseline_median_s": report.verdict.baseline_median_s,
            "current_s": report.verdict.current_s,
            "rel_delta": report.verdict.rel_delta,
            "slowed": report.verdict.slowed,
        },
        "plan_changed": report.plan_changed,
        "degraded_operators": [
            {
                "op_id": d.op_id,
                "op_kind": d.op_kind,
                "baseline_median_s": d.baseline_median_s,
                "current_s": d.current_s,
                "delta_s": d.delta_s,
                "rel_delta": d.rel_delta,
                "degraded": d.degraded,
            }
            for d in report.degraded_operators
        ],
        "candidate_nodes": list(report.candidate_nodes),
        "causes": [
            {
                "cause_id": c.cause_id,
                "layer": c.layer,
                "description": c.description,
                "confidence": c.confidence,
                "impact": c.impact,
                "rank_score": c.rank_score,
                "fix": c.fix,
                "locus": list(c.locus),
                "satisfied": [
                    {
                        "predicate": _predicate_to_dict(m.predicate),
                        "targets": list(m.targets),
                        "evidence": list(m.evidence),
                    }
                    for m in c.satisfied
                ],
                "missing": [_predicate_to_dict(p) for p in c.missing],
            }
            for c in report.causes
        ],
        "suppressed_evidence": [
            {"category": s.category, "target": s.target, "detail": s.detail}
            for s in report.suppressed_evidence
        ],
        "config": report.config.to_dict(),
    }


def render_report(report: DiagnosisReport, format: str = "text") -> str:
    """Render as machine-readable JSON or a human drill-down trace."""
    if format == "json":
        return ingest.canonical_json(report_to_dict(report))
    if format != "text":
        raise SanDiagError(f"unknown report format {format!r}")
    return _render_text(report)


def _render_text(report: DiagnosisReport) -> str:
    v = report.verdict
    lines = [f"diagnosis for query {report.query_id}, run {report.run_id}"]
    lines.append(
        f"  total elapsed: baseline median {v.baseline_median_s:.2f} s -> "
        f"current {v.current_s:.2f} s ({v.rel_delta:+.1%})"
    )
    if not v.slowed:
        lines.append(f"  no slowdown detected (threshold {report.config.theta:.0%}); nothing to diagnose")
        return "\n".join(lines) + "\n"

    lines.append(f"  slowdown confirmed (threshold {report.config.theta:.0%})")
    lines.append(f"plan changed: {'yes' if report.plan_changed else 'no'}")

    if report.degraded_operators:
        lines.append("degraded operators:")
        for d in report.degraded_operators:
            lines.append(
                f"  {d.op_id} ({d.op_kind}): {d.baseline_median_s:.2f} -> {d.current_s:.2f} s "
                f"({d.delta_s:+.2f} s, {d.rel_delta:+.1%})"
            )
    if report.candidate_nodes:
        lines.append(
            f"candidate components ({len(report.candidate_nodes)}): "
            + ", ".join(report.candidate_nodes)
        )

    if report.causes:
        lines.append("ranked causes:")
        for i, cause in enumerate(report.causes, start=1):
            lines.append(
                f"  {i}. {cause.cause_id} [{cause.layer}]  "
                f"rank {cause.rank_score:.3f} = impact {cause.impact:.3f} x confidence {cause.confidence:.3f}"
            )
            if cause.description:
                lines.append(f"     {cause.description}")
            for match in cause.satisfied:
                for item in match.evidence:
                    lines.append(f"     + {item}")
            for predicate in cause.missing:
                lines.append(f"     - missing: {predicate.describe()}")
            if cause.fix:
                lines.append(f"     fix: {cause.fix}")
    else:
        lines.append("ranked causes: none matched the evidence")

    if report.suppressed_evidence:
        lines.append("suppressed evidence (outside every degraded operator's dependency closure):")
        for s in report.suppressed_evidence:
            lines.append(f"  {s.category} on {s.target}: {s.detail}")
    return "\n".join(lines) + "\n"


# --- auxiliary views ----------------------------------------------------------------


def baseline_statistics(store: RunStore, query_id: str) -> dict:
    """Per-operator and total statistics over the dominant-plan history."""
    records = store.runs(query_id)
    if not records:
        raise UnknownRun(f"no runs stored for query {query_id!r}")
    modal = _modal_fingerprint(records)
    matching = [r for r in records if r.plan_fingerprint == modal]

    per_op: dict[str, dict] = {}
    order: list[str] = []
    for record in matching:
        for op in record.snapshot.root.walk():
            entry = per_op.setdefault(op.op_id, {"op_kind": op.op_kind, "samples": []})
            entry["samples"].append(op.elapsed_s)
            if op.op_id not in order:
                order.append(op.op_id)

    operators = []
    for op_id in order:
        samples = per_op[op_id]["samples"]
        operators.append(
            {
                "op_id": op_id,
                "op_kind": per_op[op_id]["op_kind"],
                "n": len(samples),
                "median_s": statistics.median(samples),
                "mean_s": statistics.fmean(samples),
                "min_s": min(samples),
                "max_s": max(samples),
            }
        )
    totals = [r.snapshot.total_elapsed_s for r in matching]
    return {
        "query_id": query_id,
        "plan_fingerprint": modal,
        "runs": len(matching),
        "operators": operators,
        "total": {
            "n": len(totals),
            "median_s": statistics.median(totals),
            "mean_s": statistics.fmean(totals),
            "min_s": min(totals),
            "max_s": max(totals),
        },
    }


def validate_dataset(data_dir) -> list[str]:
    """Collect format and graph violations across a dataset directory; [] if clean."""
    root = Path(data_dir)
    violations: list[str] = []

    topology = None
    topology_path = root / "topology.json"
    if not topology_path.exists():
        violations.append("topology.json: missing")
    else:
        try:
            topology = ingest.load_topology(topology_path)
        except SanDiagError as exc:
            violations.append(f"topology.json: {exc}")

    store = RunStore(root)
    try:
        query_ids = store.query_ids()
    except SanDiagError as exc:
        violations.append(f"runs: {exc}")
        query_ids = []

    seen_run_ids: set[str] = set()
    for query_id in query_ids:
        try:
            records = store.runs(query_id)
        except SanDiagError as exc:
            violations.append(f"runs/{query_id}: {exc}")
            continue
        for record in records:
            run_id = record.snapshot.run_id
            if run_id in seen_run_ids:
                violations.append(f"runs/{query_id}: duplicate run id {run_id!r}")
            seen_run_ids.add(run_id)
            if record.plan_fingerprint != plan_fingerprint(record.snapshot):
                violations.append(
                    f"runs/{query_id}/{run_id}: stored fingerprint does not match the plan shape"
                )
            if topology is not None:
                try:
                    build_apg(record.snapshot, topology)
                except SanDiagError as exc:
                    violations.append(f"runs/{query_id}/{run_id}: {exc}")

    metrics_dir = root / "metrics"
    if metrics_dir.exists():
        try:
            series = ingest.load_metrics(metrics_dir)
            if topology is not None:
                known = {c.id for c in topology.components}
                for s in series:
                    if s.component_id not in known:
                        violations.append(
                            f"metrics: series for unknown component {s.component_id!r}"
                        )
        except SanDiagError as exc:
            violations.append(f"metrics: {exc}")

    try:
        events = ingest.load_events(root / "events.jsonl")
        if topology is not None:
            known = {c.id for c in topology.components}
            for event in events:
                if event.component_id not in known:
                    violations.append(
                        f"events.jsonl: event for unknown component {event.component_id!r}"
                    )
    except SanDiagError as exc:
        violations.append(f"events.jsonl: {exc}")

    return violations
