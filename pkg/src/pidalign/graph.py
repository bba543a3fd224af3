"""Shared graph representation for scene and functional topologies.

Both modalities are reduced to the same attributed undirected graph:
equipment and pipeline pieces are nodes, edges mean physical contact.
Two simplification passes keep the representation consistent at the
boundary between modalities: degree-2 pipe chains are contracted into a
single node, and open-ended pipe chains are pruned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

from .errors import (
    DuplicateEdgeError,
    DuplicateNodeError,
    InvalidGraphError,
    UnknownEdgeError,
    UnknownNodeError,
)

PIPE_RUN = "run"
PIPE_JUNCTION = "junction"


class NodeKind(str, Enum):
    EQUIPMENT = "equipment"
    PIPE = "pipe"


class Provenance(str, Enum):
    SCENE = "scene"
    FUNCTIONAL = "functional"


def normalize_label(label: str) -> str:
    """Lowercase, whitespace-trimmed form shared by both modalities."""
    return label.strip().lower()


@dataclass(frozen=True)
class NodeAttribute:
    """Per-node attribute: kind plus a class label.

    Pipe nodes carry one of the two subkind labels ("run" / "junction");
    equipment nodes carry their class name (e.g. "valve", "pump").
    Labels are stored normalized so scene and schematic names agree.
    """

    kind: NodeKind
    label: str

    def __post_init__(self):
        object.__setattr__(self, "label", normalize_label(self.label))
        if self.kind is NodeKind.PIPE:
            if self.label not in (PIPE_RUN, PIPE_JUNCTION):
                raise InvalidGraphError(
                    f"pipe node label must be 'run' or 'junction', got {self.label!r}"
                )
        elif not self.label:
            raise InvalidGraphError("equipment node label must be non-empty")


def equipment(label: str) -> NodeAttribute:
    return NodeAttribute(NodeKind.EQUIPMENT, label)


def pipe_run() -> NodeAttribute:
    return NodeAttribute(NodeKind.PIPE, PIPE_RUN)


def pipe_junction() -> NodeAttribute:
    return NodeAttribute(NodeKind.PIPE, PIPE_JUNCTION)


def _norm_edge(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class AlignmentGraph:
    """Immutable attributed undirected graph.

    Node order is preserved as given (it defines feature-matrix row
    order for the matcher); canonical serialization sorts by id.
    """

    nodes: tuple[tuple[str, NodeAttribute], ...]
    edges: frozenset[tuple[str, str]]
    provenance: Provenance = Provenance.SCENE
    version: int = field(default=0, compare=False)

    @staticmethod
    def create(
        nodes: Iterable[tuple[str, NodeAttribute]],
        edges: Iterable[tuple[str, str]],
        provenance: Provenance = Provenance.SCENE,
        version: int = 0,
    ) -> "AlignmentGraph":
        """Validated constructor; deduplicates edges, rejects self-loops,
        duplicate node ids and dangling edge endpoints."""
        node_list = tuple((str(i), a) for i, a in nodes)
        ids = [i for i, _ in node_list]
        id_set = set(ids)
        if len(id_set) != len(ids):
            seen, dup = set(), None
            for i in ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise InvalidGraphError(f"duplicate node id {dup!r}")
        edge_set = set()
        for a, b in edges:
            a, b = str(a), str(b)
            if a == b:
                raise InvalidGraphError(f"self-loop on node {a!r}")
            if a not in id_set or b not in id_set:
                missing = a if a not in id_set else b
                raise InvalidGraphError(f"edge endpoint {missing!r} is not a node")
            edge_set.add(_norm_edge(a, b))
        return AlignmentGraph(node_list, frozenset(edge_set), provenance, version)

    @cached_property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.nodes)

    @cached_property
    def attributes(self) -> dict[str, NodeAttribute]:
        return {i: a for i, a in self.nodes}

    @cached_property
    def adjacency(self) -> dict[str, frozenset[str]]:
        adj: dict[str, set[str]] = {i: set() for i in self.node_ids}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return {i: frozenset(n) for i, n in adj.items()}

    def degree(self, node_id: str) -> int:
        return len(self.adjacency[node_id])

    def has_edge(self, a: str, b: str) -> bool:
        return _norm_edge(a, b) in self.edges

    def __len__(self) -> int:
        return len(self.nodes)

    def is_pipe(self, node_id: str) -> bool:
        return self.attributes[node_id].kind is NodeKind.PIPE

    def equipment_ids(self) -> tuple[str, ...]:
        return tuple(i for i, a in self.nodes if a.kind is NodeKind.EQUIPMENT)

    def pipe_ids(self) -> tuple[str, ...]:
        return tuple(i for i, a in self.nodes if a.kind is NodeKind.PIPE)


# ---------------------------------------------------------------------------
# Simplification passes
# ---------------------------------------------------------------------------


class _MutableView:
    """Adjacency-dict scratch copy used by the simplification passes."""

    def __init__(self, g: AlignmentGraph):
        self.attrs = dict(g.attributes)
        self.order = list(g.node_ids)
        self.adj: dict[str, set[str]] = {i: set(n) for i, n in g.adjacency.items()}

    def remove_node(self, nid: str):
        for nb in self.adj.pop(nid):
            self.adj[nb].discard(nid)
        del self.attrs[nid]

    def add_edge(self, a: str, b: str):
        if a != b:
            self.adj[a].add(b)
            self.adj[b].add(a)

    def freeze(self, g: AlignmentGraph) -> AlignmentGraph:
        nodes = tuple((i, self.attrs[i]) for i in self.order if i in self.attrs)
        edges = frozenset(
            _norm_edge(a, b) for a, nbrs in self.adj.items() for b in nbrs if a < b
        )
        return replace(g, nodes=nodes, edges=edges)


def contract_degree2_pipes(
    g: AlignmentGraph, protected: frozenset[str] = frozenset()
) -> AlignmentGraph:
    """Remove every degree-2 pipe node that touches another pipe, joining
    its two neighbors, until none remains.

    Candidates are processed in ascending id order, which makes the
    highest-id node of a collapsing chain the survivor. Equipment nodes
    are never touched.
    """
    view = _MutableView(g)

    def eligible(nid: str) -> bool:
        if nid in protected or view.attrs[nid].kind is not NodeKind.PIPE:
            return False
        nbrs = view.adj[nid]
        if len(nbrs) != 2:
            return False
        return any(view.attrs[nb].kind is NodeKind.PIPE for nb in nbrs)

    changed = True
    while changed:
        changed = False
        for nid in sorted(view.adj):
            if nid in view.adj and eligible(nid):
                a, b = sorted(view.adj[nid])
                view.remove_node(nid)
                view.add_edge(a, b)
                changed = True
    return view.freeze(g)


def prune_open_pipes(
    g: AlignmentGraph, protected: frozenset[str] = frozenset()
) -> AlignmentGraph:
    """Remove pipe nodes of degree < 2 until fixpoint.

    Keeps the representation consistent at the scene/schematic boundary:
    a pipe open on one side has no counterpart in the other modality.
    Equipment nodes survive even at degree 0.
    """
    view = _MutableView(g)
    changed = True
    while changed:
        changed = False
        for nid in sorted(view.adj):
            if (
                nid not in protected
                and view.attrs[nid].kind is NodeKind.PIPE
                and len(view.adj[nid]) < 2
            ):
                view.remove_node(nid)
                changed = True
    return view.freeze(g)


def simplify(
    g: AlignmentGraph, protected: frozenset[str] = frozenset()
) -> AlignmentGraph:
    """Contract then prune, repeated to the joint fixpoint."""
    while True:
        h = prune_open_pipes(contract_degree2_pipes(g, protected), protected)
        if h.nodes == g.nodes and h.edges == g.edges:
            return h
        g = h


# ---------------------------------------------------------------------------
# Edits
# ---------------------------------------------------------------------------


class EditOp(str, Enum):
    ADD_NODE = "add-node"
    REMOVE_NODE = "remove-node"
    ADD_EDGE = "add-edge"
    REMOVE_EDGE = "remove-edge"
    SET_ATTRIBUTE = "set-attribute"


@dataclass(frozen=True)
class GraphEdit:
    """One atomic edit step; RemoveNode cascades over incident edges."""

    op: EditOp
    targets: tuple[str, ...]
    attr: NodeAttribute | None = None

    @staticmethod
    def add_node(node_id: str, attr: NodeAttribute) -> "GraphEdit":
        return GraphEdit(EditOp.ADD_NODE, (node_id,), attr)

    @staticmethod
    def remove_node(node_id: str) -> "GraphEdit":
        return GraphEdit(EditOp.REMOVE_NODE, (node_id,))

    @staticmethod
    def add_edge(a: str, b: str) -> "GraphEdit":
        return GraphEdit(EditOp.ADD_EDGE, (a, b))

    @staticmethod
    def remove_edge(a: str, b: str) -> "GraphEdit":
        return GraphEdit(EditOp.REMOVE_EDGE, (a, b))

    @staticmethod
    def set_attribute(node_id: str, attr: NodeAttribute) -> "GraphEdit":
        return GraphEdit(EditOp.SET_ATTRIBUTE, (node_id,), attr)


def apply_edits(g: AlignmentGraph, edits: Sequence[GraphEdit]) -> AlignmentGraph:
    """Apply edits in order, all or none; returns a new graph version.

    The input graph is never mutated. Any failing edit rejects the whole
    batch: UnknownNode / DuplicateNode / DuplicateEdge / UnknownEdge.
    """
    nodes: list[tuple[str, NodeAttribute]] = list(g.nodes)
    index = {i: k for k, (i, _) in enumerate(nodes)}
    edges = set(g.edges)

    def require(nid: str):
        if nid not in index:
            raise UnknownNodeError(f"node {nid!r} does not exist")

    for e in edits:
        if e.op is EditOp.ADD_NODE:
            (nid,) = e.targets
            if nid in index:
                raise DuplicateNodeError(f"node {nid!r} already exists")
            if e.attr is None:
                raise InvalidGraphError("AddNode requires an attribute payload")
            index[nid] = len(nodes)
            nodes.append((nid, e.attr))
        elif e.op is EditOp.REMOVE_NODE:
            (nid,) = e.targets
            require(nid)
            k = index.pop(nid)
            nodes.pop(k)
            index = {i: j for j, (i, _) in enumerate(nodes)}
            edges = {ed for ed in edges if nid not in ed}
        elif e.op is EditOp.ADD_EDGE:
            a, b = e.targets
            require(a)
            require(b)
            if a == b:
                raise InvalidGraphError(f"self-loop on node {a!r}")
            ed = _norm_edge(a, b)
            if ed in edges:
                raise DuplicateEdgeError(f"edge {ed} already exists")
            edges.add(ed)
        elif e.op is EditOp.REMOVE_EDGE:
            a, b = e.targets
            require(a)
            require(b)
            ed = _norm_edge(a, b)
            if ed not in edges:
                raise UnknownEdgeError(f"edge {ed} does not exist")
            edges.remove(ed)
        elif e.op is EditOp.SET_ATTRIBUTE:
            (nid,) = e.targets
            require(nid)
            if e.attr is None:
                raise InvalidGraphError("SetAttribute requires an attribute payload")
            nodes[index[nid]] = (nid, e.attr)
    return replace(
        g, nodes=tuple(nodes), edges=frozenset(edges), version=g.version + 1
    )


# ---------------------------------------------------------------------------
# Serialization (canonical: nodes sorted by id, edges lexicographic)
# ---------------------------------------------------------------------------


def graph_to_dict(g: AlignmentGraph) -> dict:
    return {
        "provenance": g.provenance.value,
        "nodes": [
            {"id": i, "kind": a.kind.value, "label": a.label}
            for i, a in sorted(g.nodes, key=lambda n: n[0])
        ],
        "edges": sorted([a, b] for a, b in g.edges),
    }


def graph_to_json(g: AlignmentGraph) -> str:
    return json.dumps(graph_to_dict(g), indent=2) + "\n"


def graph_from_dict(d: dict) -> AlignmentGraph:
    try:
        provenance = Provenance(d["provenance"])
        nodes = [
            (n["id"], NodeAttribute(NodeKind(n["kind"]), n["label"]))
            for n in d["nodes"]
        ]
        edges = [(a, b) for a, b in d["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidGraphError(f"malformed graph document: {exc}") from exc
    return AlignmentGraph.create(nodes, edges, provenance)


def graph_from_json(text: str) -> AlignmentGraph:
    return graph_from_dict(json.loads(text))


def edit_to_dict(e: GraphEdit) -> dict:
    d: dict = {"op": e.op.value, "targets": list(e.targets)}
    if e.attr is not None:
        d["attr"] = {"kind": e.attr.kind.value, "label": e.attr.label}
    return d


def edit_from_dict(d: dict) -> GraphEdit:
    attr = None
    if d.get("attr") is not None:
        attr = NodeAttribute(NodeKind(d["attr"]["kind"]), d["attr"]["label"])
    return GraphEdit(EditOp(d["op"]), tuple(d["targets"]), attr)
