"""Shared fixtures: canonical tiny fixtures and cached generated datasets."""

from __future__ import annotations

import random

import pytest

from sandiag import sim
from sandiag.ingest import (
    OperatorRecord,
    PlanSnapshot,
    RunRecord,
    TopologyDoc,
    topology_from_dict,
)
from sandiag.model import plan_fingerprint


def tiny_topology_dict() -> dict:
    """The 11-component fixture: one tablespace on one volume/pool/two disks,
    a single server-to-controller path."""
    return {
        "components": [
            {"id": "srv-s", "kind": "Server", "attrs": {"db_host": True}},
            {"id": "hba-h", "kind": "Hba"},
            {"id": "swp-p", "kind": "SwitchPort"},
            {"id": "sw-w", "kind": "Switch"},
            {"id": "cp-c", "kind": "ControllerPort"},
            {"id": "ctl-c", "kind": "Controller"},
            {"id": "pool-p", "kind": "StoragePool"},
            {"id": "d-1", "kind": "Disk"},
            {"id": "d-2", "kind": "Disk"},
            {"id": "vol-v", "kind": "Volume"},
            {"id": "ts-t", "kind": "Tablespace"},
        ],
        "connections": [
            {"from": "srv-s", "to": "hba-h"},
            {"from": "hba-h", "to": "swp-p"},
            {"from": "swp-p", "to": "sw-w"},
            {"from": "sw-w", "to": "cp-c"},
            {"from": "cp-c", "to": "ctl-c"},
            {"from": "ctl-c", "to": "pool-p"},
        ],
        "allocations": [
            {"logical": "ts-t", "physical": "vol-v"},
            {"logical": "vol-v", "physical": "pool-p"},
            {"logical": "pool-p", "physical": "d-1"},
            {"logical": "pool-p", "physical": "d-2"},
        ],
        "sharing": [],
    }


@pytest.fixture
def tiny_topology() -> TopologyDoc:
    return topology_from_dict(tiny_topology_dict())


def scan_op(op_id: str = "op-scan", reads=("ts-t",), elapsed: float = 10.0) -> OperatorRecord:
    return OperatorRecord(op_id=op_id, op_kind="SeqScan", reads=tuple(reads), elapsed_s=elapsed)


def make_snapshot(
    root: OperatorRecord,
    query_id: str = "q1",
    run_id: str = "r0",
    started_at: int = 1_000_000,
    total: float | None = None,
) -> PlanSnapshot:
    if total is None:
        total = sum(op.elapsed_s for op in root.walk())
    return PlanSnapshot(
        query_id=query_id,
        run_id=run_id,
        started_at=started_at,
        total_elapsed_s=total,
        root=root,
    )


def make_record(snapshot: PlanSnapshot, seq: int = 0) -> RunRecord:
    return RunRecord(
        snapshot=snapshot,
        plan_fingerprint=plan_fingerprint(snapshot),
        window_start=snapshot.started_at,
        window_end=snapshot.started_at + int(round(snapshot.total_elapsed_s)),
        seq=seq,
    )


@pytest.fixture(scope="session")
def dataset_factory(tmp_path_factory):
    """Generate each shipped scenario at most once per test session."""
    cache: dict[str, object] = {}
    base = tmp_path_factory.mktemp("datasets")

    def factory(name: str):
        if name not in cache:
            scenario = sim.load_builtin_scenario(name)
            out = base / name
            truth = sim.generate(scenario, out)
            cache[name] = (out, truth)
        return cache[name]

    return factory


# --- random graph generator (shared by model tests and the acceptance oracle) ---


def random_topology_and_plan(rng: random.Random) -> tuple[dict, OperatorRecord]:
    """A random valid topology document plus a random plan over it (<=50 nodes)."""
    n_disks = rng.randint(1, 5)
    n_pools = rng.randint(1, 3)
    n_vols = rng.randint(1, 5)
    n_ts = rng.randint(1, 4)
    n_hbas = rng.randint(1, 2)
    n_cps = rng.randint(1, 2)

    components = [{"id": "srv", "kind": "Server", "attrs": {"db_host": True}}]
    connections = []
    for h in range(n_hbas):
        components += [
            {"id": f"hba{h}", "kind": "Hba"},
            {"id": f"swp{h}", "kind": "SwitchPort"},
        ]
        connections += [
            {"from": "srv", "to": f"hba{h}"},
            {"from": f"hba{h}", "to": f"swp{h}"},
            {"from": f"swp{h}", "to": "sw"},
        ]
    components.append({"id": "sw", "kind": "Switch"})
    components.append({"id": "ctl", "kind": "Controller"})
    for c in range(n_cps):
        components.append({"id": f"cp{c}", "kind": "ControllerPort"})
        connections += [{"from": "sw", "to": f"cp{c}"}, {"from": f"cp{c}", "to": "ctl"}]

    allocations = []
    for p in range(n_pools):
        components.append({"id": f"pool{p}", "kind": "StoragePool"})
        connections.append({"from": "ctl", "to": f"pool{p}"})
        allocations.append({"logical": f"pool{p}", "physical": f"d{rng.randrange(n_disks)}"})
    for d in range(n_disks):
        components.append({"id": f"d{d}", "kind": "Disk"})
    for v in range(n_vols):
        components.append({"id": f"vol{v}", "kind": "Volume"})
        allocations.append({"logical": f"vol{v}", "physical": f"pool{rng.randrange(n_pools)}"})
    for t in range(n_ts):
        components.append({"id": f"ts{t}", "kind": "Tablespace"})
        allocations.append({"logical": f"ts{t}", "physical": f"vol{rng.randrange(n_vols)}"})

    topology = {
        "components": components,
        "connections": connections,
        "allocations": allocations,
        "sharing": [],
    }

    n_ops = rng.randint(1, 5)
    ops = []
    for i in range(n_ops):
        reads = tuple(
            sorted(rng.sample([f"ts{t}" for t in range(n_ts)], k=rng.randint(0, min(2, n_ts))))
        )
        ops.append(
            OperatorRecord(
                op_id=f"op{i}",
                op_kind=rng.choice(["SeqScan", "Sort", "HashJoin", "NestedLoop"]),
                reads=reads,
                elapsed_s=rng.uniform(0.5, 20.0),
            )
        )
    # Chain into a random tree, children attached to earlier ops.
    for i in range(n_ops - 1, 0, -1):
        parent = rng.randrange(i)
        ops[parent] = OperatorRecord(
            op_id=ops[parent].op_id,
            op_kind=ops[parent].op_kind,
            reads=ops[parent].reads,
            elapsed_s=ops[parent].elapsed_s,
            children=ops[parent].children + (ops[i],),
        )
    return topology, ops[0]
