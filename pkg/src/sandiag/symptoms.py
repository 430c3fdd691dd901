"""Declarative symptoms database: observable symptoms mapped to root causes.

Each root-cause entry lists weighted symptom predicates; a match scores the
satisfied weight fraction, and any unsatisfied `required` predicate
disqualifies the cause from ranking outright.  Evidence only counts when its
target lies inside the candidate node set (the union of degraded operators'
dependency closures); that filter is what keeps one fault's cascade of
secondary anomalies from implicating unrelated causes.

Filtering happens here, at match time, not at evidence-collection time, so
reports can still show what was suppressed and why.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .analytics import AnomalyVerdict
from .errors import DuplicateCauseId, InvalidPredicate, ParseError, SchemaViolation
from .ingest import ConfigEvent, DbEvent
from .model import NodeKind

KIND_METRIC_ANOMALY = "metric_anomaly"
KIND_CONFIG_EVENT = "config_event"
KIND_DB_EVENT = "db_event"

PREDICATE_KINDS = (KIND_METRIC_ANOMALY, KIND_CONFIG_EVENT, KIND_DB_EVENT)
DIRECTIONS = ("high", "low", "any")
LAYERS = ("db", "san", "both")

DEFAULT_DB_RESOURCE = "symptoms.json"


@dataclass(frozen=True)
class SymptomPredicate:
    kind: str
    target_kind: NodeKind
    weight: float
    required: bool = False
    metric: str | None = None          # metric_anomaly only
    direction: str | None = None       # metric_anomaly only: high | low | any
    event_code: str | None = None      # db_event only
    config_key: str | None = None      # config_event only

    def describe(self) -> str:
        if self.kind == KIND_METRIC_ANOMALY:
            detail = f"{self.metric} {self.direction}"
        elif self.kind == KIND_CONFIG_EVENT:
            detail = f"config key {self.config_key!r} changed"
        else:
            detail = f"event {self.event_code!r}"
        suffix = ", required" if self.required else ""
        return f"{detail} on {self.target_kind.value} (weight {self.weight:g}{suffix})"


@dataclass(frozen=True)
class RootCauseEntry:
    id: str
    layer: str
    description: str
    symptoms: tuple[SymptomPredicate, ...]
    fix: str | None = None


@dataclass(frozen=True)
class EvidenceSet:
    """Everything observed in the analysis window, plus the candidate filter.

    Evidence whose target is outside ``candidate_nodes`` is retained so it
    can be reported as suppressed, but it never satisfies a predicate.
    ``node_kinds`` maps every known node id to its kind so predicates can
    check target kinds.
    """

    anomalies: tuple[AnomalyVerdict, ...] = ()
    config_events: tuple[ConfigEvent, ...] = ()
    db_events: tuple[DbEvent, ...] = ()
    candidate_nodes: frozenset[str] = frozenset()
    node_kinds: Mapping[str, NodeKind] = field(default_factory=dict)


@dataclass(frozen=True)
class PredicateMatch:
    predicate: SymptomPredicate
    targets: tuple[str, ...]
    evidence: tuple[str, ...]


@dataclass(frozen=True)
class MatchResult:
    cause_id: str
    score: float
    satisfied: tuple[PredicateMatch, ...]
    missing: tuple[SymptomPredicate, ...]
    disqualified: bool

    def locus(self) -> frozenset[str]:
        """Candidate nodes whose evidence satisfied any predicate."""
        return frozenset(t for m in self.satisfied for t in m.targets)


# --- matching ----------------------------------------------------------------


def _predicate_hits(
    predicate: SymptomPredicate, evidence: EvidenceSet
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    targets: list[str] = []
    descriptions: list[str] = []

    def kind_ok(node_id: str) -> bool:
        return (
            node_id in evidence.candidate_nodes
            and evidence.node_kinds.get(node_id) == predicate.target_kind
        )

    if predicate.kind == KIND_METRIC_ANOMALY:
        for verdict in evidence.anomalies:
            if not verdict.degraded or verdict.metric != predicate.metric:
                continue
            if predicate.direction != "any" and verdict.direction != predicate.direction:
                continue
            if kind_ok(verdict.component_id):
                targets.append(verdict.component_id)
                descriptions.append(
                    f"{verdict.metric} {verdict.direction} on {verdict.component_id} "
                    f"(z={verdict.score:.1f})"
                )
    elif predicate.kind == KIND_CONFIG_EVENT:
        for event in evidence.config_events:
            if event.key != predicate.config_key:
                continue
            if kind_ok(event.component_id):
                targets.append(event.component_id)
                descriptions.append(
                    f"config {event.key} on {event.component_id}: "
                    f"{event.old_value!r} -> {event.new_value!r}"
                )
    else:
        for db_event in evidence.db_events:
            if db_event.code != predicate.event_code:
                continue
            if kind_ok(db_event.target):
                targets.append(db_event.target)
                descriptions.append(f"db event {db_event.code} on {db_event.target}")

    return tuple(dict.fromkeys(targets)), tuple(descriptions)


def match_cause(entry: RootCauseEntry, evidence: EvidenceSet) -> MatchResult:
    """Score one root-cause entry against the evidence.

    score = satisfied weight / total weight, so uniformly rescaling an
    entry's weights never changes its score.  A cause with an unsatisfied
    required predicate keeps its score for reporting but is disqualified
    from ranking.
    """
    satisfied: list[PredicateMatch] = []
    missing: list[SymptomPredicate] = []
    satisfied_weight = 0.0
    total_weight = 0.0
    disqualified = False

    for predicate in entry.symptoms:
        total_weight += predicate.weight
        targets, descriptions = _predicate_hits(predicate, evidence)
        if targets:
            satisfied_weight += predicate.weight
            satisfied.append(PredicateMatch(predicate=predicate, targets=targets, evidence=descriptions))
        else:
            missing.append(predicate)
            if predicate.required:
                disqualified = True

    score = satisfied_weight / total_weight if total_weight > 0 else 0.0
    return MatchResult(
        cause_id=entry.id,
        score=score,
        satisfied=tuple(satisfied),
        missing=tuple(missing),
        disqualified=disqualified,
    )


# --- loading -------------------------------------------------------------------


def _predicate_from_dict(payload: Mapping, locus: str) -> SymptomPredicate:
    kind = payload.get("kind")
    if kind not in PREDICATE_KINDS:
        raise InvalidPredicate(f"{locus}: unknown predicate kind {kind!r}")
    try:
        target_kind = NodeKind(payload["target_kind"])
    except (KeyError, ValueError):
        raise InvalidPredicate(
            f"{locus}: target_kind must be a node kind, got {payload.get('target_kind')!r}"
        ) from None
    weight = payload.get("weight")
    if not isinstance(weight, (int, float)) or not 0 < weight <= 1:
        raise InvalidPredicate(f"{locus}: weight must be in (0, 1], got {weight!r}")

    fields = {"metric": None, "direction": None, "event_code": None, "config_key": None}
    if kind == KIND_METRIC_ANOMALY:
        fields["metric"] = payload.get("metric")
        fields["direction"] = payload.get("direction", "any")
        if not fields["metric"]:
            raise InvalidPredicate(f"{locus}: metric_anomaly predicate needs a metric name")
        if fields["direction"] not in DIRECTIONS:
            raise InvalidPredicate(f"{locus}: direction must be one of {DIRECTIONS}")
    elif kind == KIND_CONFIG_EVENT:
        fields["config_key"] = payload.get("config_key")
        if not fields["config_key"]:
            raise InvalidPredicate(f"{locus}: config_event predicate needs a config_key")
    else:
        fields["event_code"] = payload.get("event_code")
        if not fields["event_code"]:
            raise InvalidPredicate(f"{locus}: db_event predicate needs an event_code")

    stray = {
        name
        for name, value in fields.items()
        if value is None and payload.get(name) is not None
    }
    if stray:
        raise InvalidPredicate(f"{locus}: fields {sorted(stray)} are not valid for kind {kind!r}")

    return SymptomPredicate(
        kind=kind,
        target_kind=target_kind,
        weight=float(weight),
        required=bool(payload.get("required", False)),
        **fields,
    )


def symptoms_from_dict(payload: Mapping) -> list[RootCauseEntry]:
    if not isinstance(payload, Mapping) or "causes" not in payload:
        raise SchemaViolation("symptoms database must be an object with a 'causes' list")
    entries: list[RootCauseEntry] = []
    seen: set[str] = set()
    for i, raw in enumerate(payload["causes"]):
        locus = f"causes[{i}]"
        cause_id = raw.get("id")
        if not cause_id:
            raise SchemaViolation(f"{locus}: missing id")
        if cause_id in seen:
            raise DuplicateCauseId(f"duplicate cause id {cause_id!r}")
        seen.add(cause_id)
        layer = raw.get("layer")
        if layer not in LAYERS:
            raise SchemaViolation(f"{locus}: layer must be one of {LAYERS}, got {layer!r}")
        predicates = tuple(
            _predicate_from_dict(p, f"{locus}.symptoms[{j}]")
            for j, p in enumerate(raw.get("symptoms", []))
        )
        if not predicates:
            raise SchemaViolation(f"{locus}: symptoms list must be non-empty")
        entries.append(
            RootCauseEntry(
                id=cause_id,
                layer=layer,
                description=raw.get("description", ""),
                symptoms=predicates,
                fix=raw.get("fix"),
            )
        )
    return entries


def load_symptoms_db(path: str | Path) -> list[RootCauseEntry]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise ParseError(f"{path}: empty document")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return symptoms_from_dict(payload)


def load_default_symptoms_db() -> list[RootCauseEntry]:
    """The database shipped with the package, covering the simulator faults."""
    text = resources.files("sandiag.data").joinpath(DEFAULT_DB_RESOURCE).read_text("utf-8")
    return symptoms_from_dict(json.loads(text))
