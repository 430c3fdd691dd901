"""File formats, validation, and the persistent store of historical runs.

One dataset directory holds everything the engine needs:

    topology.json                    component inventory, links, allocations
    runs/<query_id>/<seq>-<run>.json one record per query execution
    metrics/<date>.csv               timestamp,component_id,metric,value
    events.jsonl                     one configuration-change event per line

Documents are UTF-8, JSON is written with sorted keys and 2-space indent so
loading and re-serializing a canonical file is byte-identical.  The run store
is append-only: records are never rewritten, and reopening a store yields the
same contents in the same order.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateRunId,
    IoFailure,
    NonMonotoneTimestamps,
    ParseError,
    SchemaViolation,
)
from .model import NodeKind, plan_fingerprint

DEFAULT_INTERVAL_S = 300

METRICS_HEADER = ["timestamp", "component_id", "metric", "value"]

# Units for the metric vocabulary the simulator emits; unknown metrics get "".
METRIC_UNITS = {
    "cpu_util_pct": "pct",
    "utilization_pct": "pct",
    "latency_ms": "ms",
    "iops": "ops/s",
}

_RUN_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


# --- domain types -----------------------------------------------------------


@dataclass(frozen=True)
class Component:
    id: str
    kind: NodeKind
    attrs: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Connection:
    source: str
    target: str


@dataclass(frozen=True)
class Allocation:
    logical: str
    physical: str


@dataclass(frozen=True)
class Sharing:
    workload: str
    target: str


@dataclass(frozen=True)
class TopologyDoc:
    components: tuple[Component, ...]
    connections: tuple[Connection, ...]
    allocations: tuple[Allocation, ...]
    sharing: tuple[Sharing, ...]

    def component(self, component_id: str) -> Component | None:
        for c in self.components:
            if c.id == component_id:
                return c
        return None


@dataclass(frozen=True)
class OperatorRecord:
    op_id: str
    op_kind: str
    reads: tuple[str, ...] = ()
    elapsed_s: float = 0.0
    children: tuple["OperatorRecord", ...] = ()

    def walk(self) -> Iterable["OperatorRecord"]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class DbEvent:
    """A database-layer event observed during one run (e.g. lock_wait)."""

    code: str
    target: str


@dataclass(frozen=True)
class PlanSnapshot:
    query_id: str
    run_id: str
    started_at: int
    total_elapsed_s: float
    root: OperatorRecord
    db_events: tuple[DbEvent, ...] = ()

    def operators(self) -> tuple[OperatorRecord, ...]:
        return tuple(self.root.walk())


@dataclass(frozen=True)
class MetricSeries:
    component_id: str
    metric: str
    unit: str = ""
    interval_s: int = DEFAULT_INTERVAL_S
    samples: tuple[tuple[int, float], ...] = ()

    def values(self) -> list[float]:
        return [v for _, v in self.samples]

    def window(self, start: int, end: int) -> "MetricSeries":
        """Samples with start <= timestamp <= end; gaps stay gaps."""
        kept = tuple(s for s in self.samples if start <= s[0] <= end)
        return replace(self, samples=kept)

    def before(self, ts: int) -> "MetricSeries":
        return replace(self, samples=tuple(s for s in self.samples if s[0] < ts))


@dataclass(frozen=True)
class ConfigEvent:
    timestamp: int
    component_id: str
    key: str
    old_value: str
    new_value: str

    def __post_init__(self) -> None:
        if self.old_value == self.new_value:
            raise SchemaViolation(
                f"config event on {self.component_id!r} key {self.key!r}: old and new value are equal"
            )


@dataclass(frozen=True)
class RunRecord:
    """One stored execution: the snapshot plus its metric window bounds."""

    snapshot: PlanSnapshot
    plan_fingerprint: str
    window_start: int
    window_end: int
    seq: int = 0


# --- JSON (de)serialization --------------------------------------------------


def canonical_json(payload: object) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def topology_to_dict(doc: TopologyDoc) -> dict:
    return {
        "schema": "topology/1",
        "components": [
            {"id": c.id, "kind": c.kind.value, "attrs": dict(c.attrs)} for c in doc.components
        ],
        "connections": [{"from": c.source, "to": c.target} for c in doc.connections],
        "allocations": [{"logical": a.logical, "physical": a.physical} for a in doc.allocations],
        "sharing": [{"workload": s.workload, "target": s.target} for s in doc.sharing],
    }


def _require(mapping: Mapping, key: str, locus: str):
    if key not in mapping:
        raise SchemaViolation(f"{locus}: missing required field {key!r}")
    return mapping[key]


def topology_from_dict(payload: Mapping) -> TopologyDoc:
    if not isinstance(payload, Mapping):
        raise SchemaViolation("topology document must be a JSON object")
    components = []
    for i, raw in enumerate(_require(payload, "components", "topology")):
        locus = f"components[{i}]"
        cid = _require(raw, "id", locus)
        kind_name = _require(raw, "kind", locus)
        try:
            kind = NodeKind(kind_name)
        except ValueError:
            raise SchemaViolation(f"{locus}: unknown component kind {kind_name!r}") from None
        attrs = raw.get("attrs", {})
        if not isinstance(attrs, Mapping):
            raise SchemaViolation(f"{locus}: attrs must be an object")
        components.append(Component(id=cid, kind=kind, attrs=dict(attrs)))

    declared = {c.id for c in components}
    if len(declared) != len(components):
        raise SchemaViolation("topology: duplicate component ids")

    def _ref(value: str, locus: str) -> str:
        if value not in declared:
            raise SchemaViolation(f"{locus}: references undeclared component {value!r}")
        return value

    connections = [
        Connection(
            _ref(_require(raw, "from", f"connections[{i}]"), f"connections[{i}].from"),
            _ref(_require(raw, "to", f"connections[{i}]"), f"connections[{i}].to"),
        )
        for i, raw in enumerate(payload.get("connections", []))
    ]
    allocations = [
        Allocation(
            _ref(_require(raw, "logical", f"allocations[{i}]"), f"allocations[{i}].logical"),
            _ref(_require(raw, "physical", f"allocations[{i}]"), f"allocations[{i}].physical"),
        )
        for i, raw in enumerate(payload.get("allocations", []))
    ]
    sharing = [
        Sharing(
            _ref(_require(raw, "workload", f"sharing[{i}]"), f"sharing[{i}].workload"),
            _ref(_require(raw, "target", f"sharing[{i}]"), f"sharing[{i}].target"),
        )
        for i, raw in enumerate(payload.get("sharing", []))
    ]

    doc = TopologyDoc(
        components=tuple(components),
        connections=tuple(connections),
        allocations=tuple(allocations),
        sharing=tuple(sharing),
    )
    _check_allocation_chains(doc)
    return doc


def _check_allocation_chains(doc: TopologyDoc) -> None:
    """Every tablespace->volume->pool chain must end at one or more disks."""
    kinds = {c.id: c.kind for c in doc.components}
    targets_of: dict[str, list[str]] = {}
    for a in doc.allocations:
        targets_of.setdefault(a.logical, []).append(a.physical)

    for c in doc.components:
        if c.kind not in (NodeKind.TABLESPACE, NodeKind.VOLUME, NodeKind.STORAGE_POOL):
            continue
        frontier = [c.id]
        seen = set(frontier)
        reaches_disk = False
        while frontier:
            nxt: list[str] = []
            for node in frontier:
                for tgt in targets_of.get(node, []):
                    if kinds[tgt] == NodeKind.DISK:
                        reaches_disk = True
                    elif tgt not in seen:
                        seen.add(tgt)
                        nxt.append(tgt)
            frontier = nxt
        if not reaches_disk:
            raise SchemaViolation(
                f"allocation chain from {c.kind.value} {c.id!r} does not terminate at a Disk"
            )


def load_topology(path: str | Path) -> TopologyDoc:
    """Parse and validate a topology document."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise ParseError(f"{path}: empty document")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return topology_from_dict(payload)


def operator_to_dict(record: OperatorRecord) -> dict:
    return {
        "op_id": record.op_id,
        "op_kind": record.op_kind,
        "reads": list(record.reads),
        "elapsed_s": record.elapsed_s,
        "children": [operator_to_dict(c) for c in record.children],
    }


def operator_from_dict(payload: Mapping, locus: str = "root") -> OperatorRecord:
    op_id = _require(payload, "op_id", locus)
    elapsed = float(payload.get("elapsed_s", 0.0))
    if elapsed < 0:
        raise SchemaViolation(f"{locus}: elapsed_s must be >= 0")
    return OperatorRecord(
        op_id=op_id,
        op_kind=_require(payload, "op_kind", locus),
        reads=tuple(payload.get("reads", [])),
        elapsed_s=elapsed,
        children=tuple(
            operator_from_dict(c, f"{locus}.children[{i}]")
            for i, c in enumerate(payload.get("children", []))
        ),
    )


def snapshot_to_dict(snapshot: PlanSnapshot) -> dict:
    return {
        "query_id": snapshot.query_id,
        "run_id": snapshot.run_id,
        "started_at": snapshot.started_at,
        "total_elapsed_s": snapshot.total_elapsed_s,
        "db_events": [{"code": e.code, "target": e.target} for e in snapshot.db_events],
        "root": operator_to_dict(snapshot.root),
    }


def snapshot_from_dict(payload: Mapping, locus: str = "run") -> PlanSnapshot:
    total = float(_require(payload, "total_elapsed_s", locus))
    if total <= 0:
        raise SchemaViolation(f"{locus}: total_elapsed_s must be > 0")
    snapshot = PlanSnapshot(
        query_id=_require(payload, "query_id", locus),
        run_id=_require(payload, "run_id", locus),
        started_at=int(_require(payload, "started_at", locus)),
        total_elapsed_s=total,
        root=operator_from_dict(_require(payload, "root", locus), f"{locus}.root"),
        db_events=tuple(
            DbEvent(code=_require(e, "code", f"{locus}.db_events[{i}]"),
                    target=_require(e, "target", f"{locus}.db_events[{i}]"))
            for i, e in enumerate(payload.get("db_events", []))
        ),
    )
    for op in snapshot.operators():
        if op.elapsed_s > total + 1e-9:
            raise SchemaViolation(
                f"{locus}: operator {op.op_id!r} elapsed {op.elapsed_s} exceeds total {total}"
            )
    return snapshot


def run_record_to_dict(record: RunRecord) -> dict:
    payload = snapshot_to_dict(record.snapshot)
    payload["schema"] = "run/1"
    payload["plan_fingerprint"] = record.plan_fingerprint
    payload["window"] = {"start": record.window_start, "end": record.window_end}
    return payload


def run_record_from_dict(payload: Mapping, seq: int = 0, locus: str = "run") -> RunRecord:
    snapshot = snapshot_from_dict(payload, locus)
    window = _require(payload, "window", locus)
    return RunRecord(
        snapshot=snapshot,
        plan_fingerprint=_require(payload, "plan_fingerprint", locus),
        window_start=int(_require(window, "start", f"{locus}.window")),
        window_end=int(_require(window, "end", f"{locus}.window")),
        seq=seq,
    )


# --- metrics CSV --------------------------------------------------------------


def format_metric_value(value: float) -> str:
    return f"{value:.6f}"


def write_metrics_csv(path: Path, rows: Sequence[tuple[int, str, str, float]]) -> None:
    """Rows are (timestamp, component_id, metric, value), already ordered."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for ts, component_id, metric, value in rows:
            writer.writerow([ts, component_id, metric, format_metric_value(value)])


def load_metrics(
    path: str | Path,
    components: Iterable[str] | None = None,
    window: tuple[int, int] | None = None,
    interval_s: int = DEFAULT_INTERVAL_S,
) -> list[MetricSeries]:
    """Load metric series from one CSV file or a directory of them.

    Returns one series per (component, metric) pair, sorted by that pair.
    Rows for a series must be strictly increasing in time with gaps that are
    whole multiples of the interval; gaps are preserved, never interpolated.
    A directory is read as its ``*.csv`` files in name order, which keeps
    date-named files chronological.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.csv"))
    else:
        files = [path]

    wanted = set(components) if components is not None else None
    samples: dict[tuple[str, str], list[tuple[int, float]]] = {}
    for file in files:
        _read_metrics_file(file, samples)

    out: list[MetricSeries] = []
    for (component_id, metric) in sorted(samples):
        rows = samples[(component_id, metric)]
        for (t0, _), (t1, _) in zip(rows, rows[1:]):
            if t1 <= t0:
                raise NonMonotoneTimestamps(
                    f"series ({component_id}, {metric}): timestamp {t1} follows {t0}"
                )
            if (t1 - t0) % interval_s != 0:
                raise SchemaViolation(
                    f"series ({component_id}, {metric}): gap {t1 - t0}s is not a multiple "
                    f"of the {interval_s}s interval"
                )
        if wanted is not None and component_id not in wanted:
            continue
        if window is not None:
            rows = [r for r in rows if window[0] <= r[0] <= window[1]]
        if not rows:
            continue
        out.append(
            MetricSeries(
                component_id=component_id,
                metric=metric,
                unit=METRIC_UNITS.get(metric, ""),
                interval_s=interval_s,
                samples=tuple(rows),
            )
        )
    return out


def _read_metrics_file(path: Path, samples: dict[tuple[str, str], list[tuple[int, float]]]) -> None:
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if header != METRICS_HEADER:
            raise ParseError(f"{path}: header must be {','.join(METRICS_HEADER)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                ts = int(row[0])
                value = float(row[3])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            samples.setdefault((row[1], row[2]), []).append((ts, value))


# --- config events -------------------------------------------------------------


def config_event_to_dict(event: ConfigEvent) -> dict:
    return {
        "timestamp": event.timestamp,
        "component_id": event.component_id,
        "key": event.key,
        "old_value": event.old_value,
        "new_value": event.new_value,
    }


def write_events(path: Path, events: Sequence[ConfigEvent]) -> None:
    lines = [json.dumps(config_event_to_dict(e), separators=(",", ":"), sort_keys=True) for e in events]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_events(path: str | Path, window: tuple[int, int] | None = None) -> list[ConfigEvent]:
    path = Path(path)
    if not path.exists():
        return []
    events: list[ConfigEvent] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: {exc.msg}") from exc
        locus = f"{path.name}:{lineno}"
        events.append(
            ConfigEvent(
                timestamp=int(_require(payload, "timestamp", locus)),
                component_id=_require(payload, "component_id", locus),
                key=_require(payload, "key", locus),
                old_value=str(_require(payload, "old_value", locus)),
                new_value=str(_require(payload, "new_value", locus)),
            )
        )
    if window is not None:
        events = [e for e in events if window[0] <= e.timestamp <= window[1]]
    return events


# --- run store -------------------------------------------------------------------


class RunStore:
    """Append-only store of run records under ``<root>/runs/``.

    One JSON document per run, named ``<seq>-<run_id>.json`` inside a
    per-query directory; the zero-padded sequence number preserves append
    order forever.  A single process may append; any number may read.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.runs_dir = self.root / "runs"

    def _entries(self, query_id: str) -> list[tuple[int, str, Path]]:
        query_dir = self.runs_dir / query_id
        if not query_dir.is_dir():
            return []
        entries = []
        for path in query_dir.glob("*.json"):
            stem = path.name[: -len(".json")]
            seq_part, _, run_id = stem.partition("-")
            try:
                seq = int(seq_part)
            except ValueError:
                raise SchemaViolation(f"{path}: file name does not start with a sequence number")
            entries.append((seq, run_id, path))
        entries.sort(key=lambda e: e[0])
        return entries

    def query_ids(self) -> list[str]:
        if not self.runs_dir.is_dir():
            return []
        return sorted(p.name for p in self.runs_dir.iterdir() if p.is_dir())

    def run_ids(self) -> set[str]:
        ids: set[str] = set()
        for query_id in self.query_ids():
            for _, run_id, _ in self._entries(query_id):
                ids.add(run_id)
        return ids

    def runs(self, query_id: str) -> list[RunRecord]:
        """All records of one query in append order."""
        records = []
        for seq, _, path in self._entries(query_id):
            try:
                payload = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise IoFailure(f"cannot load {path}: {exc}") from exc
            records.append(run_record_from_dict(payload, seq=seq, locus=str(path)))
        return records

    def append_run(self, snapshot: PlanSnapshot, db_events: Sequence[DbEvent] = ()) -> int:
        """Durably append one run; returns its sequence index."""
        if not _RUN_ID_RE.match(snapshot.run_id):
            raise SchemaViolation(f"run id {snapshot.run_id!r} is not filesystem-safe")
        if snapshot.run_id in self.run_ids():
            raise DuplicateRunId(f"run {snapshot.run_id!r} already stored")
        if db_events:
            snapshot = replace(snapshot, db_events=tuple(db_events))

        entries = self._entries(snapshot.query_id)
        seq = entries[-1][0] + 1 if entries else 0
        record = RunRecord(
            snapshot=snapshot,
            plan_fingerprint=plan_fingerprint(snapshot),
            window_start=snapshot.started_at,
            window_end=snapshot.started_at + int(round(snapshot.total_elapsed_s)),
            seq=seq,
        )

        query_dir = self.runs_dir / snapshot.query_id
        final = query_dir / f"{seq:05d}-{snapshot.run_id}.json"
        tmp = query_dir / f".{final.name}.tmp"
        try:
            query_dir.mkdir(parents=True, exist_ok=True)
            with tmp.open("w", encoding="utf-8") as fh:
                fh.write(canonical_json(run_record_to_dict(record)))
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, final)
        except OSError as exc:
            raise IoFailure(f"cannot append run {snapshot.run_id!r}: {exc}") from exc
        return seq

    def history(self, query_id: str, fingerprint: str, limit: int) -> list[RunRecord]:
        """Most recent ``limit`` runs with the given plan fingerprint, newest last."""
        matching = [r for r in self.runs(query_id) if r.plan_fingerprint == fingerprint]
        if limit >= 0:
            matching = matching[-limit:] if limit else []
        return matching

    def find_run(self, query_id: str, run_id: str) -> RunRecord | None:
        for record in self.runs(query_id):
            if record.snapshot.run_id == run_id:
                return record
        return None
