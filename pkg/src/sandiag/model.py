"""Annotated plan graph: query operators joined to the SAN entities they use.

The graph is the canonical representation the whole diagnosis pipeline works
on.  One graph covers one query execution: the query, its plan and operator
tree on the database side; tablespaces, volumes, pools, disks and the
fibre-channel path components on the storage side.  Nodes carry a
configuration attribute snapshot; performance samples live outside the graph
as metric series keyed by node id.

Graphs are immutable after :func:`build_apg` and safe to share between
concurrent analyses.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Mapping

from .errors import (
    CyclicPlan,
    DanglingConnection,
    InvalidEdge,
    SchemaViolation,
    UnknownNode,
    UnknownTablespace,
    WrongKind,
)

if TYPE_CHECKING:  # pragma: no cover - typing only, ingest imports us at runtime
    from .ingest import OperatorRecord, PlanSnapshot, TopologyDoc


class NodeKind(str, Enum):
    """Every node carries exactly one kind."""

    QUERY = "Query"
    PLAN = "Plan"
    OPERATOR = "Operator"
    TABLESPACE = "Tablespace"
    VOLUME = "Volume"
    STORAGE_POOL = "StoragePool"
    DISK = "Disk"
    SERVER = "Server"
    HBA = "Hba"
    SWITCH_PORT = "SwitchPort"
    SWITCH = "Switch"
    CONTROLLER_PORT = "ControllerPort"
    CONTROLLER = "Controller"
    EXTERNAL_WORKLOAD = "ExternalWorkload"


# Layer partition of the node kinds.
DB_LOGICAL = frozenset({NodeKind.QUERY, NodeKind.PLAN, NodeKind.OPERATOR, NodeKind.TABLESPACE})
SAN_LOGICAL = frozenset({NodeKind.VOLUME, NodeKind.STORAGE_POOL})
SAN_PHYSICAL = frozenset(
    {
        NodeKind.DISK,
        NodeKind.SERVER,
        NodeKind.HBA,
        NodeKind.SWITCH_PORT,
        NodeKind.SWITCH,
        NodeKind.CONTROLLER_PORT,
        NodeKind.CONTROLLER,
    }
)
EXTERNAL = frozenset({NodeKind.EXTERNAL_WORKLOAD})


class EdgeKind(str, Enum):
    PLAN_OF = "PlanOf"                # Query -> Plan
    CHILD_OF = "ChildOf"              # Operator -> Operator (plan tree)
    OPERATOR_OF = "OperatorOf"        # Plan -> root Operator
    READS = "Reads"                   # Operator -> Tablespace
    MAPPED_TO = "MappedTo"            # Tablespace -> Volume
    ALLOCATED_FROM = "AllocatedFrom"  # Volume -> StoragePool, StoragePool -> Disk
    HOSTED_ON = "HostedOn"            # Operator -> Server
    PATH_VIA = "PathVia"              # pairwise I/O path hops, see _EDGE_ENDPOINTS
    SHARES_WITH = "SharesWith"        # ExternalWorkload -> Volume | StoragePool


# Permitted (source kind, target kind) pairs per edge kind; anything else is
# rejected when the graph is built.
_EDGE_ENDPOINTS: dict[EdgeKind, frozenset[tuple[NodeKind, NodeKind]]] = {
    EdgeKind.PLAN_OF: frozenset({(NodeKind.QUERY, NodeKind.PLAN)}),
    EdgeKind.CHILD_OF: frozenset({(NodeKind.OPERATOR, NodeKind.OPERATOR)}),
    EdgeKind.OPERATOR_OF: frozenset({(NodeKind.PLAN, NodeKind.OPERATOR)}),
    EdgeKind.READS: frozenset({(NodeKind.OPERATOR, NodeKind.TABLESPACE)}),
    EdgeKind.MAPPED_TO: frozenset({(NodeKind.TABLESPACE, NodeKind.VOLUME)}),
    EdgeKind.ALLOCATED_FROM: frozenset(
        {
            (NodeKind.VOLUME, NodeKind.STORAGE_POOL),
            (NodeKind.STORAGE_POOL, NodeKind.DISK),
        }
    ),
    EdgeKind.HOSTED_ON: frozenset({(NodeKind.OPERATOR, NodeKind.SERVER)}),
    EdgeKind.PATH_VIA: frozenset(
        {
            (NodeKind.SERVER, NodeKind.HBA),
            (NodeKind.HBA, NodeKind.SWITCH_PORT),
            (NodeKind.SWITCH_PORT, NodeKind.SWITCH),
            (NodeKind.SWITCH, NodeKind.CONTROLLER_PORT),
            (NodeKind.CONTROLLER_PORT, NodeKind.CONTROLLER),
            (NodeKind.CONTROLLER, NodeKind.STORAGE_POOL),
        }
    ),
    EdgeKind.SHARES_WITH: frozenset(
        {
            (NodeKind.EXTERNAL_WORKLOAD, NodeKind.VOLUME),
            (NodeKind.EXTERNAL_WORKLOAD, NodeKind.STORAGE_POOL),
        }
    ),
}

# Edge kinds a dependency closure may traverse, operator outward.
CLOSURE_EDGE_KINDS = frozenset(
    {
        EdgeKind.READS,
        EdgeKind.MAPPED_TO,
        EdgeKind.ALLOCATED_FROM,
        EdgeKind.PATH_VIA,
        EdgeKind.HOSTED_ON,
    }
)


@dataclass(frozen=True)
class ApgNode:
    """One graph node: unique id, kind, and a configuration snapshot."""

    id: str
    kind: NodeKind
    attrs: Mapping[str, object] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise SchemaViolation("node id must be a non-empty string")
        for key in self.attrs:
            if not isinstance(key, str) or not key:
                raise SchemaViolation(f"node {self.id!r}: attrs keys must be non-empty strings")


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    kind: EdgeKind


@dataclass(frozen=True)
class AnnotatedPlanGraph:
    """Immutable graph over ApgNodes with kind-checked edges.

    ``nodes`` and ``edges`` are stored sorted (by id, and by
    (source, target, kind)) so two graphs built from the same inputs are
    identical structure for structure.
    """

    nodes: tuple[ApgNode, ...]
    edges: tuple[Edge, ...]
    query_id: str
    plan_fingerprint: str

    @cached_property
    def node_index(self) -> dict[str, ApgNode]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def out_edges(self) -> dict[str, tuple[Edge, ...]]:
        buckets: dict[str, list[Edge]] = {}
        for e in self.edges:
            buckets.setdefault(e.source, []).append(e)
        return {src: tuple(es) for src, es in buckets.items()}

    def node(self, node_id: str) -> ApgNode:
        try:
            return self.node_index[node_id]
        except KeyError:
            raise UnknownNode(f"no node with id {node_id!r}") from None

    def nodes_of_kind(self, kind: NodeKind) -> tuple[ApgNode, ...]:
        return tuple(n for n in self.nodes if n.kind == kind)

    def kind_of(self, node_id: str) -> NodeKind:
        return self.node(node_id).kind


def _validated_graph(
    nodes: Iterable[ApgNode], edges: Iterable[Edge], query_id: str, fingerprint: str
) -> AnnotatedPlanGraph:
    node_list = sorted(nodes, key=lambda n: n.id)
    seen: set[str] = set()
    for n in node_list:
        if n.id in seen:
            raise SchemaViolation(f"duplicate node id {n.id!r}")
        seen.add(n.id)
    index = {n.id: n for n in node_list}

    edge_list = sorted(set(edges), key=lambda e: (e.source, e.target, e.kind.value))
    for e in edge_list:
        for endpoint in (e.source, e.target):
            if endpoint not in index:
                raise DanglingConnection(
                    f"edge {e.kind.value} {e.source!r}->{e.target!r} references missing component {endpoint!r}"
                )
        pair = (index[e.source].kind, index[e.target].kind)
        if pair not in _EDGE_ENDPOINTS[e.kind]:
            raise InvalidEdge(
                f"{e.kind.value} edge may not connect {pair[0].value} to {pair[1].value} "
                f"({e.source!r} -> {e.target!r})"
            )
    return AnnotatedPlanGraph(
        nodes=tuple(node_list), edges=tuple(edge_list), query_id=query_id, plan_fingerprint=fingerprint
    )


# --- plan fingerprint -------------------------------------------------------


def _canonical_operator(record: "OperatorRecord", seen: set[str]) -> list:
    if record.op_id in seen:
        raise CyclicPlan(f"operator {record.op_id!r} appears more than once in the plan tree")
    seen.add(record.op_id)
    # Structure only: operator kind, what it reads, children in order.
    # Ids, timings, row counts and costs are deliberately excluded.
    return [
        record.op_kind,
        sorted(record.reads),
        [_canonical_operator(child, seen) for child in record.children],
    ]


def plan_fingerprint(plan: "PlanSnapshot") -> str:
    """Stable hash of the plan shape.

    Two runs of the same plan hash identically regardless of elapsed times;
    changing an operator kind, the read objects, or the child order changes
    the hash.  Child order is significant: the outer and inner inputs of a
    join are not interchangeable.
    """
    canonical = _canonical_operator(plan.root, set())
    payload = json.dumps(canonical, separators=(",", ":"), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# --- graph construction -----------------------------------------------------


def _walk_operators(record: "OperatorRecord", seen: set[str]) -> list["OperatorRecord"]:
    if record.op_id in seen:
        raise CyclicPlan(f"operator {record.op_id!r} appears more than once in the plan tree")
    seen.add(record.op_id)
    out = [record]
    for child in record.children:
        out.extend(_walk_operators(child, seen))
    return out


def _db_host(topology: "TopologyDoc") -> str:
    """The server operators run on.

    A server marked ``db_host: true`` in its attrs wins; with exactly one
    server declared the marker may be omitted.
    """
    servers = [c for c in topology.components if c.kind == NodeKind.SERVER]
    marked = [c for c in servers if c.attrs.get("db_host") is True]
    if len(marked) == 1:
        return marked[0].id
    if not marked and len(servers) == 1:
        return servers[0].id
    if not servers:
        raise SchemaViolation("topology declares no Server component to host operators")
    raise SchemaViolation(
        "topology must mark exactly one Server with attrs {'db_host': true} "
        f"(found {len(marked)} marked among {len(servers)} servers)"
    )


def build_apg(plan: "PlanSnapshot", topology: "TopologyDoc") -> AnnotatedPlanGraph:
    """Build the annotated plan graph for one query run over one topology.

    The graph contains the query, plan and operator nodes derived from the
    snapshot, plus every declared topology component with its connection,
    allocation and sharing edges transcribed.  Node and edge ordering is
    sorted, so identical inputs yield an identical graph.
    """
    fingerprint = plan_fingerprint(plan)
    operators = _walk_operators(plan.root, set())

    nodes: list[ApgNode] = []
    edges: list[Edge] = []

    for comp in topology.components:
        nodes.append(ApgNode(id=comp.id, kind=comp.kind, attrs=dict(comp.attrs), label=comp.id))

    component_kinds = {c.id: c.kind for c in topology.components}
    tablespaces = {cid for cid, kind in component_kinds.items() if kind == NodeKind.TABLESPACE}

    plan_node_id = f"{plan.query_id}/plan"
    nodes.append(ApgNode(id=plan.query_id, kind=NodeKind.QUERY, label=plan.query_id))
    nodes.append(ApgNode(id=plan_node_id, kind=NodeKind.PLAN, label=f"plan {fingerprint}"))
    edges.append(Edge(plan.query_id, plan_node_id, EdgeKind.PLAN_OF))
    edges.append(Edge(plan_node_id, plan.root.op_id, EdgeKind.OPERATOR_OF))

    host = _db_host(topology)
    for op in operators:
        nodes.append(
            ApgNode(id=op.op_id, kind=NodeKind.OPERATOR, attrs={"op_kind": op.op_kind}, label=op.op_kind)
        )
        edges.append(Edge(op.op_id, host, EdgeKind.HOSTED_ON))
        for child in op.children:
            edges.append(Edge(op.op_id, child.op_id, EdgeKind.CHILD_OF))
        for ts in op.reads:
            if ts not in tablespaces:
                raise UnknownTablespace(
                    f"operator {op.op_id!r} reads {ts!r} which the topology does not declare"
                )
            edges.append(Edge(op.op_id, ts, EdgeKind.READS))

    for link in topology.connections:
        edges.append(Edge(link.source, link.target, _connection_edge_kind(link, component_kinds)))
    for alloc in topology.allocations:
        edges.append(Edge(alloc.logical, alloc.physical, _allocation_edge_kind(alloc, component_kinds)))
    for share in topology.sharing:
        edges.append(Edge(share.workload, share.target, EdgeKind.SHARES_WITH))

    graph = _validated_graph(nodes, edges, plan.query_id, fingerprint)
    _check_storage_reachability(graph)
    return graph


def _connection_edge_kind(link, kinds: dict[str, NodeKind]) -> EdgeKind:
    for endpoint in (link.source, link.target):
        if endpoint not in kinds:
            raise DanglingConnection(f"connection references missing component {endpoint!r}")
    pair = (kinds[link.source], kinds[link.target])
    if pair in _EDGE_ENDPOINTS[EdgeKind.PATH_VIA]:
        return EdgeKind.PATH_VIA
    raise InvalidEdge(
        f"connection {link.source!r} -> {link.target!r} joins {pair[0].value} to {pair[1].value}, "
        "which is not a valid I/O path hop"
    )


def _allocation_edge_kind(alloc, kinds: dict[str, NodeKind]) -> EdgeKind:
    for endpoint in (alloc.logical, alloc.physical):
        if endpoint not in kinds:
            raise DanglingConnection(f"allocation references missing component {endpoint!r}")
    pair = (kinds[alloc.logical], kinds[alloc.physical])
    if pair in _EDGE_ENDPOINTS[EdgeKind.MAPPED_TO]:
        return EdgeKind.MAPPED_TO
    if pair in _EDGE_ENDPOINTS[EdgeKind.ALLOCATED_FROM]:
        return EdgeKind.ALLOCATED_FROM
    raise InvalidEdge(
        f"allocation {alloc.logical!r} -> {alloc.physical!r} joins {pair[0].value} to {pair[1].value}"
    )


def _check_storage_reachability(graph: AnnotatedPlanGraph) -> None:
    for op in graph.nodes_of_kind(NodeKind.OPERATOR):
        reads = [e for e in graph.out_edges.get(op.id, ()) if e.kind == EdgeKind.READS]
        if not reads:
            continue
        closure = dependency_closure(graph, op.id)
        if not any(graph.node_index[n].kind == NodeKind.DISK for n in closure):
            raise DanglingConnection(
                f"operator {op.id!r} reads storage but reaches no Disk node; "
                "allocation or path chain is incomplete"
            )


# --- graph queries ----------------------------------------------------------


def dependency_closure(apg: AnnotatedPlanGraph, operator_id: str) -> set[str]:
    """Every SAN entity an operator depends on, host server included.

    Breadth-first walk from the operator over Reads, MappedTo,
    AllocatedFrom, PathVia and HostedOn edges.  Operator nodes are never part
    of the result; with multi-path connectivity all parallel paths are
    included.
    """
    start = apg.node(operator_id)
    if start.kind != NodeKind.OPERATOR:
        raise WrongKind(f"{operator_id!r} has kind {start.kind.value}, expected Operator")

    reached: set[str] = set()
    queue: deque[str] = deque([operator_id])
    visited = {operator_id}
    while queue:
        current = queue.popleft()
        for edge in apg.out_edges.get(current, ()):
            if edge.kind not in CLOSURE_EDGE_KINDS:
                continue
            nxt = edge.target
            if nxt in visited:
                continue
            visited.add(nxt)
            if apg.node_index[nxt].kind == NodeKind.OPERATOR:
                continue
            reached.add(nxt)
            queue.append(nxt)
    return reached
