#!/usr/bin/env python3
"""Regenerate the shipped scenario files from one shared testbed description.

Run from the repository root:  python tools/make_scenarios.py
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "sandiag" / "data" / "scenarios"

TOPOLOGY = {
    "components": [
        {"id": "srv-db", "kind": "Server", "attrs": {"db_host": True, "cpu_util_nominal_pct": 30.0, "cores": 16}},
        {"id": "hba-1", "kind": "Hba", "attrs": {"speed_gbps": 16}},
        {"id": "swp-1", "kind": "SwitchPort", "attrs": {"speed_gbps": 16}},
        {"id": "sw-core", "kind": "Switch", "attrs": {"zone": "zoneset-a"}},
        {"id": "cp-1", "kind": "ControllerPort", "attrs": {"utilization_nominal_pct": 40.0, "speed_gbps": 16}},
        {"id": "ctl-1", "kind": "Controller", "attrs": {"cache_gb": 64}},
        {"id": "pool-1", "kind": "StoragePool", "attrs": {"iops_nominal": 1000.0, "latency_nominal_ms": 3.0, "utilization_nominal_pct": 60.0, "raid": "raid5"}},
        {"id": "d-1", "kind": "Disk", "attrs": {"size_gb": 900}},
        {"id": "d-2", "kind": "Disk", "attrs": {"size_gb": 900}},
        {"id": "d-3", "kind": "Disk", "attrs": {"size_gb": 900}},
        {"id": "d-4", "kind": "Disk", "attrs": {"size_gb": 900}},
        {"id": "vol-data", "kind": "Volume", "attrs": {"latency_nominal_ms": 5.0, "iops_nominal": 400.0, "size_gb": 500}},
        {"id": "vol-index", "kind": "Volume", "attrs": {"latency_nominal_ms": 5.0, "iops_nominal": 250.0, "size_gb": 200}},
        {"id": "vol-other", "kind": "Volume", "attrs": {"latency_nominal_ms": 5.0, "iops_nominal": 300.0, "size_gb": 400}},
        {"id": "ts-data", "kind": "Tablespace", "attrs": {"size_gb": 420}},
        {"id": "ts-index", "kind": "Tablespace", "attrs": {"size_gb": 150}},
        {"id": "ext-batch", "kind": "ExternalWorkload", "attrs": {"description": "nightly batch ETL"}},
    ],
    "connections": [
        {"from": "srv-db", "to": "hba-1"},
        {"from": "hba-1", "to": "swp-1"},
        {"from": "swp-1", "to": "sw-core"},
        {"from": "sw-core", "to": "cp-1"},
        {"from": "cp-1", "to": "ctl-1"},
        {"from": "ctl-1", "to": "pool-1"},
    ],
    "allocations": [
        {"logical": "ts-data", "physical": "vol-data"},
        {"logical": "ts-index", "physical": "vol-index"},
        {"logical": "vol-data", "physical": "pool-1"},
        {"logical": "vol-index", "physical": "pool-1"},
        {"logical": "vol-other", "physical": "pool-1"},
        {"logical": "pool-1", "physical": "d-1"},
        {"logical": "pool-1", "physical": "d-2"},
        {"logical": "pool-1", "physical": "d-3"},
        {"logical": "pool-1", "physical": "d-4"},
    ],
    "sharing": [
        {"workload": "ext-batch", "target": "pool-1"},
    ],
}

PLAN = {
    "op_id": "op-sort",
    "op_kind": "Sort",
    "nominal_s": 15.0,
    "reads": [],
    "children": [
        {
            "op_id": "op-join",
            "op_kind": "NestedLoop",
            "nominal_s": 25.0,
            "reads": [],
            "children": [
                {"op_id": "op-scan-data", "op_kind": "SeqScan", "nominal_s": 40.0, "reads": ["ts-data"], "children": []},
                {"op_id": "op-scan-index", "op_kind": "IndexScan", "nominal_s": 20.0, "reads": ["ts-index"], "children": []},
            ],
        }
    ],
}

ALT_PLAN = {
    "op_id": "op-agg",
    "op_kind": "HashAggregate",
    "nominal_s": 30.0,
    "reads": [],
    "children": [
        {
            "op_id": "op-hash-join",
            "op_kind": "HashJoin",
            "nominal_s": 35.0,
            "reads": [],
            "children": [
                {"op_id": "op-scan-data", "op_kind": "SeqScan", "nominal_s": 55.0, "reads": ["ts-data"], "children": []},
                {"op_id": "op-scan-index", "op_kind": "SeqScan", "nominal_s": 30.0, "reads": ["ts-index"], "children": []},
            ],
        }
    ],
}

WINDOW = [20, 24]

SCENARIOS = {
    "lock_contention": {
        "seed": 101,
        "faults": [{"kind": "lock_contention", "target": "ts-data", "magnitude": 1.0, "window": WINDOW}],
    },
    "cpu_saturation": {
        "seed": 102,
        "faults": [{"kind": "cpu_saturation", "target": "srv-db", "magnitude": 0.5, "window": WINDOW}],
    },
    "controller_port_congestion": {
        "seed": 103,
        "faults": [{"kind": "controller_port_congestion", "target": "cp-1", "magnitude": 0.3, "window": WINDOW}],
    },
    "volume_contention": {
        "seed": 104,
        "faults": [{"kind": "volume_contention", "target": "pool-1", "magnitude": 0.5, "window": WINDOW}],
    },
    "plan_change": {
        "seed": 105,
        "alt_plan": True,
        "faults": [{"kind": "plan_change", "target": "q_reports", "magnitude": 1.0, "window": WINDOW}],
    },
    "zoning_change": {
        "seed": 106,
        "faults": [{"kind": "zoning_change", "target": "sw-core", "magnitude": 0.6, "window": WINDOW}],
    },
    "combined_db_san": {
        "seed": 107,
        "faults": [
            {"kind": "lock_contention", "target": "ts-data", "magnitude": 0.5, "window": WINDOW},
            {"kind": "controller_port_congestion", "target": "cp-1", "magnitude": 0.25, "window": WINDOW},
        ],
    },
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, spec in SCENARIOS.items():
        query = {"query_id": "q_reports", "plan": PLAN}
        if spec.get("alt_plan"):
            query["alt_plan"] = ALT_PLAN
        doc = {
            "schema": "scenario/1",
            "name": name,
            "seed": spec["seed"],
            "start_epoch": 1700000000,
            "cadence_s": 1800,
            "interval_s": 300,
            "baseline_runs": 20,
            "topology": TOPOLOGY,
            "queries": [query],
            "faults": spec["faults"],
        }
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
