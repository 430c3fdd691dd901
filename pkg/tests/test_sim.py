"""Simulator: fault formulas, determinism, conservation, ground truth."""

from __future__ import annotations

import hashlib
import statistics
from pathlib import Path

import pytest

from conftest import tiny_topology_dict
from sandiag import sim
from sandiag.errors import InconsistentFaultTarget, InvalidScenario
from sandiag.ingest import RunStore, load_metrics
from sandiag.sim import congestion_multiplier, generate, scenario_from_dict


def _scenario_dict(faults, baseline_runs=6, nominal_s=10.0, alt_plan=False, seed=7):
    plan = {
        "op_id": "op-scan",
        "op_kind": "SeqScan",
        "nominal_s": nominal_s,
        "reads": ["ts-t"],
        "children": [],
    }
    query = {"query_id": "q1", "plan": plan}
    if alt_plan:
        query["alt_plan"] = {
            "op_id": "op-scan",
            "op_kind": "IndexScan",
            "nominal_s": nominal_s,
            "reads": ["ts-t"],
            "children": [],
        }
    return {
        "name": "test",
        "seed": seed,
        "start_epoch": 1_700_000_000,
        "cadence_s": 600,
        "interval_s": 300,
        "baseline_runs": baseline_runs,
        "topology": tiny_topology_dict(),
        "queries": [query],
        "faults": faults,
    }


def _tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


# --- formulas ---------------------------------------------------------------------


def test_congestion_multiplier_formula():
    # base utilization 0.5 plus magnitude 0.3 of capacity -> u = 0.8 -> x5.
    assert congestion_multiplier(0.5 + 0.3) == pytest.approx(5.0)
    # The cap keeps the model finite.
    assert congestion_multiplier(1.2) == pytest.approx(20.0)


def test_lock_contention_adds_magnitude_times_nominal(tmp_path):
    scenario = scenario_from_dict(
        _scenario_dict([{"kind": "lock_contention", "target": "ts-t", "magnitude": 0.5, "window": [4, 5]}])
    )
    generate(scenario, tmp_path / "ds")
    runs = RunStore(tmp_path / "ds").runs("q1")
    faulted = runs[4].snapshot.root
    # nominal 10 with noise in [8.5, 11.5], plus 0.5 * 10 lock wait.
    assert 13.5 <= faulted.elapsed_s <= 16.5
    assert runs[4].snapshot.db_events[0].code == "lock_wait"
    assert runs[4].snapshot.db_events[0].target == "ts-t"
    assert not runs[3].snapshot.db_events


def test_pool_contention_latency_follows_queueing_rule(tmp_path):
    """Magnitude 0.7 on a pool at 60% base utilization.

    Expected, computed from the model by hand before this test was written:
    u = min(0.95, 0.60 * 1.7) = 0.95, multiplier = 1 / (1 - 0.95) = 20.
    Volume latency nominal 5 ms -> 100 ms during the fault, within the
    +/-15% clamped noise band.
    """
    scenario = scenario_from_dict(
        _scenario_dict([{"kind": "volume_contention", "target": "pool-p", "magnitude": 0.7, "window": [4, 5]}])
    )
    generate(scenario, tmp_path / "ds")
    series = {
        (s.component_id, s.metric): s for s in load_metrics(tmp_path / "ds" / "metrics")
    }
    latency = series[("vol-v", "latency_ms")]
    fault_start = scenario.start_epoch + 4 * scenario.cadence_s
    fault_end = scenario.start_epoch + 6 * scenario.cadence_s

    faulted = [v for t, v in latency.samples if fault_start <= t < fault_end]
    clean = [v for t, v in latency.samples if t < fault_start - scenario.interval_s]
    assert faulted and clean
    expected = 5.0 * 20.0
    assert all(expected * 0.85 <= v <= expected * 1.15 for v in faulted)
    assert statistics.fmean(faulted) == pytest.approx(expected, rel=0.1)
    assert statistics.fmean(clean) == pytest.approx(5.0, rel=0.1)
    # The pool's own request rate reflects the external workload.
    pool_iops = series[("pool-p", "iops")]
    faulted_iops = [v for t, v in pool_iops.samples if fault_start <= t < fault_end]
    assert statistics.fmean(faulted_iops) == pytest.approx(1000.0 * 1.7, rel=0.1)


def test_cpu_saturation_pins_server_metric_and_scales_operators(tmp_path):
    scenario = scenario_from_dict(
        _scenario_dict([{"kind": "cpu_saturation", "target": "srv-s", "magnitude": 0.5, "window": [4, 5]}])
    )
    generate(scenario, tmp_path / "ds")
    runs = RunStore(tmp_path / "ds").runs("q1")
    # x1.5 on nominal 10 with noise: [12.75, 17.25].
    assert 12.75 <= runs[4].snapshot.root.elapsed_s <= 17.25

    series = {(s.component_id, s.metric): s for s in load_metrics(tmp_path / "ds" / "metrics")}
    cpu = series[("srv-s", "cpu_util_pct")]
    fault_start = scenario.start_epoch + 4 * scenario.cadence_s
    faulted = [v for t, v in cpu.samples if t >= fault_start]
    assert all(90.0 <= v <= 100.0 for v in faulted)


def test_zoning_change_emits_config_event(tmp_path):
    scenario = scenario_from_dict(
        _scenario_dict([{"kind": "zoning_change", "target": "sw-w", "magnitude": 0.6, "window": [4, 5]}])
    )
    generate(scenario, tmp_path / "ds")
    from sandiag.ingest import load_events

    events = load_events(tmp_path / "ds" / "events.jsonl")
    assert len(events) == 1
    assert events[0].component_id == "sw-w"
    assert events[0].key == "zoning"
    assert events[0].timestamp == scenario.start_epoch + 4 * scenario.cadence_s


# --- determinism and structure ------------------------------------------------------


def test_generation_is_byte_deterministic(tmp_path):
    scenario = scenario_from_dict(
        _scenario_dict([{"kind": "volume_contention", "target": "pool-p", "magnitude": 0.4, "window": [4, 5]}])
    )
    generate(scenario, tmp_path / "a")
    generate(scenario, tmp_path / "b")
    assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")


def test_different_seed_changes_output(tmp_path):
    generate(scenario_from_dict(_scenario_dict([], seed=1)), tmp_path / "a")
    generate(scenario_from_dict(_scenario_dict([], seed=2)), tmp_path / "b")
    assert _tree_digest(tmp_path / "a") != _tree_digest(tmp_path / "b")


def test_zero_fault_scenario_has_empty_ground_truth(tmp_path):
    truth = generate(scenario_from_dict(_scenario_dict([])), tmp_path / "ds")
    assert all(not r.causes for r in truth.runs)
    assert len(truth.runs) == 6


def test_ground_truth_matches_fault_windows(tmp_path):
    truth = generate(
        scenario_from_dict(
            _scenario_dict(
                [{"kind": "lock_contention", "target": "ts-t", "magnitude": 0.5, "window": [3, 4]}],
                baseline_runs=7,
            )
        ),
        tmp_path / "ds",
    )
    for run in truth.runs:
        expected = ("db_lock_contention",) if 3 <= run.run_index <= 4 else ()
        assert run.causes == expected


def test_combined_faults_union_in_ground_truth(tmp_path):
    truth = generate(
        scenario_from_dict(
            _scenario_dict(
                [
                    {"kind": "lock_contention", "target": "ts-t", "magnitude": 0.5, "window": [4, 5]},
                    {"kind": "volume_contention", "target": "pool-p", "magnitude": 0.4, "window": [5, 5]},
                ]
            )
        ),
        tmp_path / "ds",
    )
    by_index = {r.run_index: r.causes for r in truth.runs}
    assert by_index[4] == ("db_lock_contention",)
    assert by_index[5] == ("db_lock_contention", "shared_pool_contention")


def test_conservation_total_equals_operator_sum(tmp_path):
    generate(
        scenario_from_dict(
            _scenario_dict([{"kind": "volume_contention", "target": "pool-p", "magnitude": 0.7, "window": [4, 5]}])
        ),
        tmp_path / "ds",
    )
    for record in RunStore(tmp_path / "ds").runs("q1"):
        total = record.snapshot.total_elapsed_s
        op_sum = sum(op.elapsed_s for op in record.snapshot.operators())
        assert abs(total - op_sum) <= 1e-6 * total


def test_emitted_metrics_satisfy_series_invariants(tmp_path):
    generate(scenario_from_dict(_scenario_dict([])), tmp_path / "ds")
    # load_metrics enforces monotonicity and interval multiples on load.
    series = load_metrics(tmp_path / "ds" / "metrics")
    assert series
    for s in series:
        timestamps = [t for t, _ in s.samples]
        assert timestamps == sorted(timestamps)


# --- validation ------------------------------------------------------------------------


def test_wrong_target_kind_rejected():
    with pytest.raises(InconsistentFaultTarget):
        scenario_from_dict(
            _scenario_dict(
                [{"kind": "controller_port_congestion", "target": "vol-v", "magnitude": 0.3, "window": [4, 5]}]
            )
        )


def test_window_outside_timeline_rejected():
    with pytest.raises(InvalidScenario):
        scenario_from_dict(
            _scenario_dict([{"kind": "lock_contention", "target": "ts-t", "magnitude": 0.5, "window": [4, 3]}])
        )


def test_plan_change_needs_alt_plan_and_open_window():
    with pytest.raises(InvalidScenario, match="alt_plan"):
        scenario_from_dict(
            _scenario_dict([{"kind": "plan_change", "target": "q1", "magnitude": 1.0, "window": [4, 5]}])
        )
    with pytest.raises(InvalidScenario, match="last run"):
        scenario_from_dict(
            _scenario_dict(
                [{"kind": "plan_change", "target": "q1", "magnitude": 1.0, "window": [4, 4]}],
                alt_plan=True,
            )
        )
    # Window reaching the final run is accepted.
    scenario = scenario_from_dict(
        _scenario_dict(
            [{"kind": "plan_change", "target": "q1", "magnitude": 1.0, "window": [4, 5]}],
            alt_plan=True,
        )
    )
    assert scenario.total_runs == 6


def test_zero_time_plan_rejected():
    with pytest.raises(InvalidScenario, match="zero"):
        scenario_from_dict(_scenario_dict([], nominal_s=0.0))


def test_builtin_scenarios_all_load():
    names = sim.builtin_scenario_names()
    assert len(names) == 7
    for name in names:
        scenario = sim.load_builtin_scenario(name)
        assert scenario.name == name
