"""Synthetic DB+SAN telemetry with fault injection and known ground truth.

A scenario describes a topology, one or more queries with nominal operator
times, and a list of faults with run-index windows.  Generation produces a
complete dataset directory in the ingest formats plus ``ground_truth.json``
recording which cause ids were injected into which runs, so a diagnosis can
be checked against what actually happened.

Performance model, deliberately minimal:

* operator times and metric samples carry multiplicative gaussian noise
  (sigma 0.05, clamped to three sigma) so baselines stay stationary;
* congestion inflates latency by the M/M/1-style factor 1 / (1 - u) with
  utilization u capped at 0.95;
* per run, the query total is exactly the sum of its operator times, so
  impact attribution is exact at the simulator level.

Everything is driven by seeded RNG streams: the same scenario and seed
produce byte-identical output directories.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from . import ingest
from .errors import InconsistentFaultTarget, InvalidScenario, IoFailure, ParseError
from .ingest import (
    ConfigEvent,
    DbEvent,
    OperatorRecord,
    PlanSnapshot,
    RunStore,
    TopologyDoc,
    canonical_json,
    topology_from_dict,
    topology_to_dict,
)
from .model import NodeKind

NOISE_SIGMA = 0.05
UTILIZATION_CAP = 0.95

FAULT_LOCK = "lock_contention"
FAULT_CPU = "cpu_saturation"
FAULT_PORT = "controller_port_congestion"
FAULT_POOL = "volume_contention"
FAULT_PLAN = "plan_change"
FAULT_ZONING = "zoning_change"

FAULT_KINDS = (FAULT_LOCK, FAULT_CPU, FAULT_PORT, FAULT_POOL, FAULT_PLAN, FAULT_ZONING)

# Required node kind of each fault's target component.
FAULT_TARGET_KINDS = {
    FAULT_LOCK: NodeKind.TABLESPACE,
    FAULT_CPU: NodeKind.SERVER,
    FAULT_PORT: NodeKind.CONTROLLER_PORT,
    FAULT_POOL: NodeKind.STORAGE_POOL,
    FAULT_PLAN: NodeKind.QUERY,
    FAULT_ZONING: NodeKind.SWITCH,
}

# Symptoms-database cause id each injected fault should be diagnosed as.
FAULT_CAUSE_IDS = {
    FAULT_LOCK: "db_lock_contention",
    FAULT_CPU: "server_cpu_saturation",
    FAULT_PORT: "controller_port_congestion",
    FAULT_POOL: "shared_pool_contention",
    FAULT_PLAN: "plan_change",
    FAULT_ZONING: "san_zoning_change",
}

# Metric vocabulary: (metric, default nominal attr, fallback nominal).
_KIND_METRICS: dict[NodeKind, tuple[tuple[str, str, float], ...]] = {
    NodeKind.SERVER: (("cpu_util_pct", "cpu_util_nominal_pct", 30.0),),
    NodeKind.CONTROLLER_PORT: (("utilization_pct", "utilization_nominal_pct", 40.0),),
    NodeKind.VOLUME: (
        ("iops", "iops_nominal", 400.0),
        ("latency_ms", "latency_nominal_ms", 5.0),
    ),
    NodeKind.STORAGE_POOL: (
        ("iops", "iops_nominal", 1000.0),
        ("latency_ms", "latency_nominal_ms", 3.0),
        ("utilization_pct", "utilization_nominal_pct", 60.0),
    ),
}


@dataclass(frozen=True)
class NominalOp:
    op_id: str
    op_kind: str
    nominal_s: float
    reads: tuple[str, ...] = ()
    children: tuple["NominalOp", ...] = ()

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class QuerySpec:
    query_id: str
    plan: NominalOp
    alt_plan: NominalOp | None = None


@dataclass(frozen=True)
class FaultSpec:
    kind: str
    target: str
    magnitude: float
    window: tuple[int, int]

    def active(self, run_index: int) -> bool:
        start, end = self.window
        if self.kind == FAULT_PLAN:
            # A plan change persists: the optimizer does not flip back when
            # the window closes.
            return run_index >= start
        return start <= run_index <= end


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    topology: TopologyDoc
    queries: tuple[QuerySpec, ...]
    baseline_runs: int = 20
    faults: tuple[FaultSpec, ...] = ()
    start_epoch: int = 1_700_000_000
    cadence_s: int = 1800
    interval_s: int = ingest.DEFAULT_INTERVAL_S

    @property
    def total_runs(self) -> int:
        ends = [f.window[1] + 1 for f in self.faults]
        return max([self.baseline_runs, *ends]) if ends else self.baseline_runs


@dataclass(frozen=True)
class GroundTruthRun:
    query_id: str
    run_id: str
    run_index: int
    causes: tuple[str, ...]


@dataclass(frozen=True)
class GroundTruth:
    scenario: str
    seed: int
    runs: tuple[GroundTruthRun, ...]

    def causes_for(self, run_id: str) -> tuple[str, ...]:
        for run in self.runs:
            if run.run_id == run_id:
                return run.causes
        return ()

    def first_faulted(self) -> GroundTruthRun | None:
        for run in self.runs:
            if run.causes:
                return run
        return None


# --- scenario parsing ---------------------------------------------------------


def _nominal_op_from_dict(payload: Mapping, locus: str) -> NominalOp:
    for key in ("op_id", "op_kind", "nominal_s"):
        if key not in payload:
            raise InvalidScenario(f"{locus}: missing {key!r}")
    nominal = float(payload["nominal_s"])
    if nominal < 0:
        raise InvalidScenario(f"{locus}: nominal_s must be >= 0")
    return NominalOp(
        op_id=payload["op_id"],
        op_kind=payload["op_kind"],
        nominal_s=nominal,
        reads=tuple(payload.get("reads", [])),
        children=tuple(
            _nominal_op_from_dict(c, f"{locus}.children[{i}]")
            for i, c in enumerate(payload.get("children", []))
        ),
    )


def _nominal_op_to_dict(op: NominalOp) -> dict:
    return {
        "op_id": op.op_id,
        "op_kind": op.op_kind,
        "nominal_s": op.nominal_s,
        "reads": list(op.reads),
        "children": [_nominal_op_to_dict(c) for c in op.children],
    }


def scenario_from_dict(payload: Mapping) -> Scenario:
    if not isinstance(payload, Mapping):
        raise InvalidScenario("scenario must be a JSON object")
    for key in ("name", "seed", "topology", "queries"):
        if key not in payload:
            raise InvalidScenario(f"scenario: missing {key!r}")
    queries = []
    for i, raw in enumerate(payload["queries"]):
        locus = f"queries[{i}]"
        if "query_id" not in raw or "plan" not in raw:
            raise InvalidScenario(f"{locus}: needs query_id and plan")
        queries.append(
            QuerySpec(
                query_id=raw["query_id"],
                plan=_nominal_op_from_dict(raw["plan"], f"{locus}.plan"),
                alt_plan=(
                    _nominal_op_from_dict(raw["alt_plan"], f"{locus}.alt_plan")
                    if raw.get("alt_plan")
                    else None
                ),
            )
        )
    faults = []
    for i, raw in enumerate(payload.get("faults", [])):
        locus = f"faults[{i}]"
        window = raw.get("window")
        if (
            not isinstance(window, Sequence)
            or len(window) != 2
            or not all(isinstance(w, int) for w in window)
        ):
            raise InvalidScenario(f"{locus}: window must be [start_run, end_run]")
        faults.append(
            FaultSpec(
                kind=raw.get("kind", ""),
                target=raw.get("target", ""),
                magnitude=float(raw.get("magnitude", 0.0)),
                window=(window[0], window[1]),
            )
        )
    scenario = Scenario(
        name=payload["name"],
        seed=int(payload["seed"]),
        topology=topology_from_dict(payload["topology"]),
        queries=tuple(queries),
        baseline_runs=int(payload.get("baseline_runs", 20)),
        faults=tuple(faults),
        start_epoch=int(payload.get("start_epoch", 1_700_000_000)),
        cadence_s=int(payload.get("cadence_s", 1800)),
        interval_s=int(payload.get("interval_s", ingest.DEFAULT_INTERVAL_S)),
    )
    validate_scenario(scenario)
    return scenario


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "schema": "scenario/1",
        "name": scenario.name,
        "seed": scenario.seed,
        "start_epoch": scenario.start_epoch,
        "cadence_s": scenario.cadence_s,
        "interval_s": scenario.interval_s,
        "baseline_runs": scenario.baseline_runs,
        "topology": topology_to_dict(scenario.topology),
        "queries": [
            {
                "query_id": q.query_id,
                "plan": _nominal_op_to_dict(q.plan),
                **({"alt_plan": _nominal_op_to_dict(q.alt_plan)} if q.alt_plan else {}),
            }
            for q in scenario.queries
        ],
        "faults": [
            {
                "kind": f.kind,
                "target": f.target,
                "magnitude": f.magnitude,
                "window": list(f.window),
            }
            for f in scenario.faults
        ],
    }


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(payload)


def validate_scenario(scenario: Scenario) -> None:
    if scenario.baseline_runs < 1:
        raise InvalidScenario("baseline_runs must be >= 1")
    if scenario.cadence_s <= 0 or scenario.interval_s <= 0:
        raise InvalidScenario("cadence_s and interval_s must be positive")
    if scenario.interval_s > scenario.cadence_s:
        raise InvalidScenario("interval_s must not exceed cadence_s")
    if not scenario.queries:
        raise InvalidScenario("scenario needs at least one query")

    declared_ts = {
        c.id for c in scenario.topology.components if c.kind == NodeKind.TABLESPACE
    }
    for query in scenario.queries:
        for plan in filter(None, (query.plan, query.alt_plan)):
            if sum(op.nominal_s for op in plan.walk()) <= 0:
                raise InvalidScenario(
                    f"query {query.query_id!r}: plan nominal times sum to zero"
                )
            for op in plan.walk():
                for ts in op.reads:
                    if ts not in declared_ts:
                        raise InvalidScenario(
                            f"query {query.query_id!r}: operator {op.op_id!r} reads "
                            f"undeclared tablespace {ts!r}"
                        )

    component_kinds = {c.id: c.kind for c in scenario.topology.components}
    query_ids = {q.query_id for q in scenario.queries}
    total = scenario.total_runs
    for fault in scenario.faults:
        if fault.kind not in FAULT_KINDS:
            raise InvalidScenario(f"unknown fault kind {fault.kind!r}")
        if fault.magnitude <= 0:
            raise InvalidScenario(f"fault {fault.kind}: magnitude must be > 0")
        start, end = fault.window
        if not (0 <= start <= end < total):
            raise InvalidScenario(
                f"fault {fault.kind}: window {fault.window} outside timeline of {total} runs"
            )
        expected = FAULT_TARGET_KINDS[fault.kind]
        if fault.kind == FAULT_PLAN:
            if fault.target not in query_ids:
                raise InconsistentFaultTarget(
                    f"plan_change must target a scenario query, got {fault.target!r}"
                )
            query = next(q for q in scenario.queries if q.query_id == fault.target)
            if query.alt_plan is None:
                raise InvalidScenario(
                    f"plan_change targets {fault.target!r} which has no alt_plan"
                )
            if end != total - 1:
                raise InvalidScenario(
                    "plan_change persists once triggered; its window must run to the last run index"
                )
        else:
            actual = component_kinds.get(fault.target)
            if actual != expected:
                raise InconsistentFaultTarget(
                    f"fault {fault.kind} must target a {expected.value}, "
                    f"got {fault.target!r} ({actual.value if actual else 'missing'})"
                )


# --- performance model ----------------------------------------------------------


def noise_multiplier(rng: random.Random, sigma: float = NOISE_SIGMA) -> float:
    """1 + gaussian(0, sigma), clamped at three sigma either side."""
    return 1.0 + max(-3.0 * sigma, min(3.0 * sigma, rng.gauss(0.0, sigma)))


def congestion_multiplier(utilization: float) -> float:
    """Queueing latency inflation 1 / (1 - u), utilization capped at 0.95."""
    u = min(UTILIZATION_CAP, utilization)
    return 1.0 / (1.0 - u)


def _attr_float(topology: TopologyDoc, component_id: str, attr: str, fallback: float) -> float:
    comp = topology.component(component_id)
    if comp is None:
        return fallback
    value = comp.attrs.get(attr, fallback)
    return float(value)  # type: ignore[arg-type]


def _downstream_pools(topology: TopologyDoc, component_id: str) -> set[str]:
    """Storage pools whose I/O path passes through the given component."""
    forward: dict[str, list[str]] = {}
    for link in topology.connections:
        forward.setdefault(link.source, []).append(link.target)
    kinds = {c.id: c.kind for c in topology.components}
    pools: set[str] = set()
    frontier = [component_id]
    seen = {component_id}
    while frontier:
        nxt = []
        for node in frontier:
            for tgt in forward.get(node, []):
                if tgt in seen:
                    continue
                seen.add(tgt)
                if kinds.get(tgt) == NodeKind.STORAGE_POOL:
                    pools.add(tgt)
                else:
                    nxt.append(tgt)
        frontier = nxt
    return pools


def _volumes_of_pools(topology: TopologyDoc, pools: set[str]) -> set[str]:
    kinds = {c.id: c.kind for c in topology.components}
    return {
        a.logical
        for a in topology.allocations
        if a.physical in pools and kinds.get(a.logical) == NodeKind.VOLUME
    }


def _volumes_of_tablespace(topology: TopologyDoc, tablespace: str) -> list[str]:
    kinds = {c.id: c.kind for c in topology.components}
    return sorted(
        a.physical
        for a in topology.allocations
        if a.logical == tablespace and kinds.get(a.physical) == NodeKind.VOLUME
    )


def _port_utilization(scenario: Scenario, fault: FaultSpec) -> float:
    base = _attr_float(scenario.topology, fault.target, "utilization_nominal_pct", 40.0)
    return min(100.0, base + 100.0 * fault.magnitude)


def _pool_utilization(scenario: Scenario, fault: FaultSpec) -> float:
    base = _attr_float(scenario.topology, fault.target, "utilization_nominal_pct", 60.0)
    return min(100.0, base * (1.0 + fault.magnitude))


def volume_latency_multipliers(scenario: Scenario, faults: Sequence[FaultSpec]) -> dict[str, float]:
    """Combined latency inflation per volume id for the given active faults."""
    multipliers: dict[str, float] = {}

    def _apply(volumes: set[str], factor: float) -> None:
        for vol in volumes:
            multipliers[vol] = multipliers.get(vol, 1.0) * factor

    for fault in faults:
        if fault.kind == FAULT_PORT:
            u = _port_utilization(scenario, fault) / 100.0
            pools = _downstream_pools(scenario.topology, fault.target)
            _apply(_volumes_of_pools(scenario.topology, pools), congestion_multiplier(u))
        elif fault.kind == FAULT_POOL:
            u = _pool_utilization(scenario, fault) / 100.0
            _apply(_volumes_of_pools(scenario.topology, {fault.target}), congestion_multiplier(u))
        elif fault.kind == FAULT_ZONING:
            pools = _downstream_pools(scenario.topology, fault.target)
            _apply(_volumes_of_pools(scenario.topology, pools), 1.0 + fault.magnitude)
    return multipliers


def pool_latency_multipliers(scenario: Scenario, faults: Sequence[FaultSpec]) -> dict[str, float]:
    out: dict[str, float] = {}
    for fault in faults:
        if fault.kind == FAULT_POOL:
            u = _pool_utilization(scenario, fault) / 100.0
            out[fault.target] = out.get(fault.target, 1.0) * congestion_multiplier(u)
    return out


def _operator_elapsed(
    scenario: Scenario,
    op: NominalOp,
    host: str,
    active: Sequence[FaultSpec],
    vol_multipliers: Mapping[str, float],
    rng: random.Random,
) -> float:
    elapsed = op.nominal_s * noise_multiplier(rng)

    if op.reads:
        read_volumes = sorted(
            {v for ts in op.reads for v in _volumes_of_tablespace(scenario.topology, ts)}
        )
        if read_volumes:
            factors = [vol_multipliers.get(v, 1.0) for v in read_volumes]
            elapsed *= sum(factors) / len(factors)

    for fault in active:
        if fault.kind == FAULT_CPU and fault.target == host:
            elapsed *= 1.0 + fault.magnitude
        elif fault.kind == FAULT_LOCK and fault.target in op.reads:
            elapsed += fault.magnitude * op.nominal_s

    return elapsed


def _instantiate(op: NominalOp, elapsed: Mapping[str, float]) -> OperatorRecord:
    return OperatorRecord(
        op_id=op.op_id,
        op_kind=op.op_kind,
        reads=op.reads,
        elapsed_s=elapsed[op.op_id],
        children=tuple(_instantiate(c, elapsed) for c in op.children),
    )


def _db_host_id(topology: TopologyDoc) -> str:
    servers = [c for c in topology.components if c.kind == NodeKind.SERVER]
    marked = [c for c in servers if c.attrs.get("db_host") is True]
    if marked:
        return marked[0].id
    if servers:
        return servers[0].id
    raise InvalidScenario("scenario topology declares no Server")


# --- generation -----------------------------------------------------------------


def _generate_runs(scenario: Scenario) -> tuple[list[tuple[int, PlanSnapshot, tuple[DbEvent, ...]]], GroundTruth]:
    rng = random.Random(f"{scenario.seed}/runs")
    host = _db_host_id(scenario.topology)
    single_query = len(scenario.queries) == 1

    snapshots: list[tuple[int, PlanSnapshot, tuple[DbEvent, ...]]] = []
    truth_runs: list[GroundTruthRun] = []
    for index in range(scenario.total_runs):
        active = [f for f in scenario.faults if f.active(index)]
        vol_mult = volume_latency_multipliers(scenario, active)
        started_at = scenario.start_epoch + index * scenario.cadence_s
        for query in scenario.queries:
            plan = query.plan
            if any(f.kind == FAULT_PLAN and f.target == query.query_id for f in active):
                plan = query.alt_plan  # validated non-None
            elapsed: dict[str, float] = {}
            for op in plan.walk():
                elapsed[op.op_id] = _operator_elapsed(scenario, op, host, active, vol_mult, rng)
            root = _instantiate(plan, elapsed)
            total = sum(elapsed[op.op_id] for op in plan.walk())
            if total >= scenario.cadence_s:
                raise InvalidScenario(
                    f"run {index} of {query.query_id!r} lasts {total:.0f}s, "
                    f"longer than the {scenario.cadence_s}s cadence"
                )

            run_id = f"r{index:04d}" if single_query else f"{query.query_id}-r{index:04d}"
            db_events = tuple(
                DbEvent(code="lock_wait", target=f.target)
                for f in active
                if f.kind == FAULT_LOCK
                and any(f.target in op.reads for op in plan.walk())
            )
            snapshots.append(
                (
                    index,
                    PlanSnapshot(
                        query_id=query.query_id,
                        run_id=run_id,
                        started_at=started_at,
                        total_elapsed_s=total,
                        root=root,
                    ),
                    db_events,
                )
            )
            causes = sorted({FAULT_CAUSE_IDS[f.kind] for f in active})
            truth_runs.append(
                GroundTruthRun(
                    query_id=query.query_id,
                    run_id=run_id,
                    run_index=index,
                    causes=tuple(causes),
                )
            )

    truth = GroundTruth(scenario=scenario.name, seed=scenario.seed, runs=tuple(truth_runs))
    return snapshots, truth


def _fault_metric_window(
    scenario: Scenario,
    fault: FaultSpec,
    run_ends: Mapping[int, int],
) -> tuple[int, int]:
    """Time span over which a fault shows up in the metrics.

    Padded by one interval either side so a run's analysis window (which is
    padded the same way) sees consistent samples.
    """
    start_idx, end_idx = fault.window
    start = scenario.start_epoch + start_idx * scenario.cadence_s - scenario.interval_s
    end = run_ends.get(end_idx, scenario.start_epoch + end_idx * scenario.cadence_s) + scenario.interval_s
    return start, end


def _emit_metrics(
    scenario: Scenario,
    run_ends: Mapping[int, int],
) -> list[tuple[int, str, str, float]]:
    rng = random.Random(f"{scenario.seed}/metrics")
    end_epoch = scenario.start_epoch + scenario.total_runs * scenario.cadence_s

    metric_faults = [
        f for f in scenario.faults if f.kind in (FAULT_CPU, FAULT_PORT, FAULT_POOL, FAULT_ZONING)
    ]
    fault_spans = {id(f): _fault_metric_window(scenario, f, run_ends) for f in metric_faults}

    series: list[tuple[str, NodeKind, str, float]] = []
    for comp in sorted(scenario.topology.components, key=lambda c: c.id):
        for metric, attr, fallback in _KIND_METRICS.get(comp.kind, ()):
            series.append((comp.id, comp.kind, metric, _attr_float(scenario.topology, comp.id, attr, fallback)))

    rows: list[tuple[int, str, str, float]] = []
    ts = scenario.start_epoch
    while ts < end_epoch:
        active = [
            f for f in metric_faults if fault_spans[id(f)][0] <= ts <= fault_spans[id(f)][1]
        ]
        vol_mult = volume_latency_multipliers(scenario, active)
        pool_mult = pool_latency_multipliers(scenario, active)
        for component_id, kind, metric, nominal in series:
            noise = noise_multiplier(rng)
            value = nominal * noise
            if kind == NodeKind.SERVER and metric == "cpu_util_pct":
                for f in active:
                    if f.kind == FAULT_CPU and f.target == component_id:
                        value = min(100.0, max(90.0, (90.0 + 10.0 * f.magnitude) * noise))
            elif kind == NodeKind.CONTROLLER_PORT and metric == "utilization_pct":
                for f in active:
                    if f.kind == FAULT_PORT and f.target == component_id:
                        value = min(100.0, _port_utilization(scenario, f) * noise)
            elif kind == NodeKind.STORAGE_POOL:
                for f in active:
                    if f.kind == FAULT_POOL and f.target == component_id:
                        if metric == "iops":
                            value = nominal * (1.0 + f.magnitude) * noise
                        elif metric == "utilization_pct":
                            value = min(100.0, _pool_utilization(scenario, f) * noise)
                if metric == "latency_ms" and component_id in pool_mult:
                    value = nominal * pool_mult[component_id] * noise
            elif kind == NodeKind.VOLUME and metric == "latency_ms":
                if component_id in vol_mult:
                    value = nominal * vol_mult[component_id] * noise
            rows.append((ts, component_id, metric, value))
        ts += scenario.interval_s
    return rows


def _config_events(scenario: Scenario) -> list[ConfigEvent]:
    events = []
    for fault in scenario.faults:
        if fault.kind != FAULT_ZONING:
            continue
        events.append(
            ConfigEvent(
                timestamp=scenario.start_epoch + fault.window[0] * scenario.cadence_s,
                component_id=fault.target,
                key="zoning",
                old_value="zoneset-a",
                new_value="zoneset-b",
            )
        )
    events.sort(key=lambda e: (e.timestamp, e.component_id, e.key))
    return events


def ground_truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "schema": "ground-truth/1",
        "scenario": truth.scenario,
        "seed": truth.seed,
        "runs": [
            {
                "query_id": r.query_id,
                "run_id": r.run_id,
                "run_index": r.run_index,
                "causes": list(r.causes),
            }
            for r in truth.runs
        ],
    }


def load_ground_truth(path: str | Path) -> GroundTruth:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return GroundTruth(
        scenario=payload["scenario"],
        seed=payload["seed"],
        runs=tuple(
            GroundTruthRun(
                query_id=r["query_id"],
                run_id=r["run_id"],
                run_index=r["run_index"],
                causes=tuple(r["causes"]),
            )
            for r in payload["runs"]
        ),
    )


_DEFAULTS_TOML = """\
# Default diagnosis thresholds for this dataset; CLI flags override.
theta = 0.2
tau = 3.0
delta = 0.2
k = 5
floor_s = 1.0
interval_s = {interval_s}
"""


def generate(scenario: Scenario, out_dir: str | Path) -> GroundTruth:
    """Write a full dataset directory for the scenario and return its ground truth."""
    validate_scenario(scenario)
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        raise IoFailure(f"output directory {out} is not empty")
    out.mkdir(parents=True, exist_ok=True)

    snapshots, truth = _generate_runs(scenario)

    (out / "topology.json").write_text(
        canonical_json(topology_to_dict(scenario.topology)), encoding="utf-8"
    )
    (out / "scenario.json").write_text(
        canonical_json(scenario_to_dict(scenario)), encoding="utf-8"
    )

    store = RunStore(out)
    run_ends: dict[int, int] = {}
    for index, snapshot, db_events in snapshots:
        store.append_run(snapshot, db_events=db_events)
        end = snapshot.started_at + int(round(snapshot.total_elapsed_s))
        run_ends[index] = max(run_ends.get(index, 0), end)

    rows = _emit_metrics(scenario, run_ends)
    by_date: dict[str, list[tuple[int, str, str, float]]] = {}
    for row in rows:
        date = datetime.fromtimestamp(row[0], tz=timezone.utc).date().isoformat()
        by_date.setdefault(date, []).append(row)
    for date in sorted(by_date):
        ingest.write_metrics_csv(out / "metrics" / f"{date}.csv", by_date[date])

    ingest.write_events(out / "events.jsonl", _config_events(scenario))
    (out / "ground_truth.json").write_text(
        canonical_json(ground_truth_to_dict(truth)), encoding="utf-8"
    )
    (out / "diagnose.toml").write_text(
        _DEFAULTS_TOML.format(interval_s=scenario.interval_s), encoding="utf-8"
    )
    return truth


def builtin_scenario_names() -> list[str]:
    from importlib import resources

    names = []
    for entry in resources.files("sandiag.data.scenarios").iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[: -len(".json")])
    return sorted(names)


def load_builtin_scenario(name: str, seed: int | None = None) -> Scenario:
    """Load a scenario shipped with the package by bare name."""
    from importlib import resources

    resource = resources.files("sandiag.data.scenarios").joinpath(f"{name}.json")
    try:
        text = resource.read_text("utf-8")
    except FileNotFoundError:
        raise InvalidScenario(
            f"no shipped scenario named {name!r} (available: {', '.join(builtin_scenario_names())})"
        ) from None
    scenario = scenario_from_dict(json.loads(text))
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    return scenario
