"""Formats, parsing errors, and run-store durability."""

from __future__ import annotations

import json

import pytest

from conftest import make_snapshot, scan_op, tiny_topology_dict
from sandiag.errors import (
    DuplicateRunId,
    NonMonotoneTimestamps,
    ParseError,
    SchemaViolation,
)
from sandiag.ingest import (
    ConfigEvent,
    OperatorRecord,
    RunStore,
    canonical_json,
    load_events,
    load_metrics,
    load_topology,
    run_record_from_dict,
    run_record_to_dict,
    snapshot_from_dict,
    topology_from_dict,
    topology_to_dict,
)


def _write_topology(tmp_path, doc=None):
    path = tmp_path / "topology.json"
    path.write_text(canonical_json(doc if doc is not None else tiny_topology_dict()))
    return path


# --- topology -----------------------------------------------------------------


def test_load_minimal_topology(tmp_path):
    doc = load_topology(_write_topology(tmp_path))
    assert len(doc.components) == 11


def test_allocation_to_missing_component(tmp_path):
    raw = tiny_topology_dict()
    raw["allocations"].append({"logical": "vol-v", "physical": "missing"})
    with pytest.raises(SchemaViolation, match="missing"):
        load_topology(_write_topology(tmp_path, raw))


def test_empty_topology_file(tmp_path):
    path = tmp_path / "topology.json"
    path.write_text("")
    with pytest.raises(ParseError):
        load_topology(path)


def test_allocation_chain_must_reach_disk(tmp_path):
    raw = tiny_topology_dict()
    raw["allocations"] = [a for a in raw["allocations"] if a["logical"] != "pool-p"]
    with pytest.raises(SchemaViolation, match="Disk"):
        load_topology(_write_topology(tmp_path, raw))


def test_topology_round_trip(tmp_path):
    canonical = canonical_json(topology_to_dict(topology_from_dict(tiny_topology_dict())))
    path = tmp_path / "topology.json"
    path.write_text(canonical)
    assert canonical_json(topology_to_dict(load_topology(path))) == canonical


# --- metrics --------------------------------------------------------------------


def _metrics_file(tmp_path, rows, name="m.csv"):
    path = tmp_path / name
    path.write_text("timestamp,component_id,metric,value\n" + "".join(r + "\n" for r in rows))
    return path


def test_load_metrics_one_series(tmp_path):
    path = _metrics_file(
        tmp_path,
        ["1000,comp,latency_ms,5.0", "1300,comp,latency_ms,6.0", "1600,comp,latency_ms,5.5"],
    )
    series = load_metrics(path)
    assert len(series) == 1
    assert series[0].samples == ((1000, 5.0), (1300, 6.0), (1600, 5.5))
    assert series[0].unit == "ms"


def test_out_of_order_rows_rejected(tmp_path):
    path = _metrics_file(tmp_path, ["1300,comp,iops,1.0", "1000,comp,iops,2.0"])
    with pytest.raises(NonMonotoneTimestamps):
        load_metrics(path)


def test_window_can_exclude_everything(tmp_path):
    path = _metrics_file(tmp_path, ["1000,comp,iops,1.0"])
    assert load_metrics(path, window=(2000, 3000)) == []


def test_gap_must_be_interval_multiple(tmp_path):
    path = _metrics_file(tmp_path, ["1000,comp,iops,1.0", "1450,comp,iops,2.0"])
    with pytest.raises(SchemaViolation, match="multiple"):
        load_metrics(path)
    # A skipped sample (gap of two intervals) is fine.
    path2 = _metrics_file(tmp_path, ["1000,c2,iops,1.0", "1600,c2,iops,2.0"], name="m2.csv")
    assert len(load_metrics(path2)) == 1


def test_bad_header_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("time,comp,metric,value\n1,2,3,4\n")
    with pytest.raises(ParseError, match="header"):
        load_metrics(path)


def test_directory_of_csvs_merges_series(tmp_path):
    d = tmp_path / "metrics"
    d.mkdir()
    _metrics_file(d, ["1000,comp,iops,1.0"], name="2023-11-14.csv")
    _metrics_file(d, ["1300,comp,iops,2.0"], name="2023-11-15.csv")
    series = load_metrics(d)
    assert series[0].samples == ((1000, 1.0), (1300, 2.0))


def test_component_filter(tmp_path):
    path = _metrics_file(tmp_path, ["1000,a,iops,1.0", "1000,b,iops,2.0"])
    series = load_metrics(path, components=["b"])
    assert [s.component_id for s in series] == ["b"]


# --- run store -------------------------------------------------------------------


def test_append_to_empty_store(tmp_path):
    store = RunStore(tmp_path)
    assert store.append_run(make_snapshot(scan_op())) == 0


def test_duplicate_run_id(tmp_path):
    store = RunStore(tmp_path)
    store.append_run(make_snapshot(scan_op(), run_id="r1"))
    with pytest.raises(DuplicateRunId):
        store.append_run(make_snapshot(scan_op(), run_id="r1"))


def test_reopened_store_preserves_order(tmp_path):
    store = RunStore(tmp_path)
    for i in range(20):
        store.append_run(make_snapshot(scan_op(), run_id=f"r{i:03d}", started_at=1000 + i))
    reopened = RunStore(tmp_path)
    records = reopened.runs("q1")
    assert len(records) == 20
    assert [r.snapshot.run_id for r in records] == [f"r{i:03d}" for i in range(20)]
    assert [r.seq for r in records] == list(range(20))


def test_history_filters_by_fingerprint(tmp_path):
    store = RunStore(tmp_path)
    other_plan = OperatorRecord(op_id="op-x", op_kind="Sort", elapsed_s=3.0)
    for i in range(5):
        store.append_run(make_snapshot(scan_op(), run_id=f"match{i}"))
    for i in range(3):
        store.append_run(make_snapshot(other_plan, run_id=f"other{i}"))
    from sandiag.model import plan_fingerprint

    fp = plan_fingerprint(make_snapshot(scan_op()))
    matching = store.history("q1", fp, limit=10)
    assert [r.snapshot.run_id for r in matching] == [f"match{i}" for i in range(5)]
    assert all(r.plan_fingerprint == fp for r in matching)

    last_two = store.history("q1", fp, limit=2)
    assert [r.snapshot.run_id for r in last_two] == ["match3", "match4"]

    assert store.history("q-unknown", fp, limit=10) == []


def test_run_record_round_trip(tmp_path):
    store = RunStore(tmp_path)
    store.append_run(make_snapshot(scan_op(), run_id="r1"), db_events=())
    path = next((tmp_path / "runs" / "q1").glob("*.json"))
    original = path.read_text()
    record = run_record_from_dict(json.loads(original))
    assert canonical_json(run_record_to_dict(record)) == original


def test_snapshot_operator_cannot_exceed_total():
    payload = {
        "query_id": "q1",
        "run_id": "r1",
        "started_at": 0,
        "total_elapsed_s": 5.0,
        "root": {"op_id": "op", "op_kind": "Sort", "elapsed_s": 9.0, "reads": [], "children": []},
    }
    with pytest.raises(SchemaViolation, match="exceeds total"):
        snapshot_from_dict(payload)


# --- events ------------------------------------------------------------------------


def test_config_event_requires_change():
    with pytest.raises(SchemaViolation):
        ConfigEvent(timestamp=1, component_id="sw", key="zoning", old_value="a", new_value="a")


def test_load_events_window(tmp_path):
    path = tmp_path / "events.jsonl"
    lines = [
        {"timestamp": 100, "component_id": "sw", "key": "zoning", "old_value": "a", "new_value": "b"},
        {"timestamp": 900, "component_id": "sw", "key": "zoning", "old_value": "b", "new_value": "c"},
    ]
    path.write_text("".join(json.dumps(l) + "\n" for l in lines))
    assert len(load_events(path)) == 2
    assert [e.timestamp for e in load_events(path, window=(500, 1000))] == [900]
    assert load_events(tmp_path / "missing.jsonl") == []


def test_unknown_component_kind_rejected():
    raw = tiny_topology_dict()
    raw["components"][0]["kind"] = "Mainframe"
    with pytest.raises(SchemaViolation, match="Mainframe"):
        topology_from_dict(raw)
