"""Functional graph ingestion from a digitized P&ID.

The diagram arrives as structured data: equipment symbols and pipe
junctions/runs as nodes, diagram line segments as edges. Ingestion maps
symbol kinds onto the shared representation and applies the same
simplification passes as the scene builder, so both modalities agree at
their boundary.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .errors import (
    DegreeTooHighError,
    InvalidGraphError,
    KindMismatchError,
    UnknownNodeError,
)
from .graph import (
    AlignmentGraph,
    NodeAttribute,
    NodeKind,
    Provenance,
    normalize_label,
    simplify as simplify_graph,
)
from .validation import check_unique_ids

logger = logging.getLogger(__name__)

PID_KINDS = ("equipment", "pipe-junction", "pipe-run")


@dataclass(frozen=True)
class PidNode:
    id: str
    kind: str  # equipment | pipe-junction | pipe-run
    label: str

    def __post_init__(self):
        if self.kind not in PID_KINDS:
            raise InvalidGraphError(
                f"node {self.id!r}: kind must be one of {PID_KINDS}, got {self.kind!r}"
            )


@dataclass(frozen=True)
class RawPid:
    """Digitized P&ID before normalization to the shared representation."""

    nodes: tuple[PidNode, ...]
    edges: tuple[tuple[str, str], ...]

    @staticmethod
    def create(
        nodes: Iterable[PidNode], edges: Iterable[tuple[str, str]]
    ) -> "RawPid":
        nodes = tuple(nodes)
        check_unique_ids((n.id for n in nodes), "P&ID node")
        ids = {n.id for n in nodes}
        norm = []
        for a, b in edges:
            if a == b:
                raise InvalidGraphError(f"self-loop on P&ID node {a!r}")
            for e in (a, b):
                if e not in ids:
                    raise InvalidGraphError(f"edge endpoint {e!r} is not a P&ID node")
            norm.append((a, b) if a <= b else (b, a))
        return RawPid(nodes, tuple(sorted(set(norm))))

    def degree(self, node_id: str) -> int:
        return sum(1 for e in self.edges if node_id in e)

    def node(self, node_id: str) -> PidNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNodeError(f"P&ID node {node_id!r} does not exist")


class Vocabulary:
    """Shared label space: canonical class names plus aliases.

    File format: one canonical label per line, aliases as
    ``alias=canonical``; blank lines and ``#`` comments are skipped.
    Canonical labels keep file order (it defines feature order).
    """

    def __init__(self, labels: Sequence[str] = (), aliases: dict[str, str] | None = None):
        self.labels: tuple[str, ...] = tuple(dict.fromkeys(normalize_label(l) for l in labels))
        self.aliases: dict[str, str] = {
            normalize_label(a): normalize_label(c) for a, c in (aliases or {}).items()
        }
        known = set(self.labels)
        for canonical in self.aliases.values():
            if canonical not in known:
                self.labels += (canonical,)
                known.add(canonical)

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        labels: list[str] = []
        aliases: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line:
                alias, canonical = line.split("=", 1)
                aliases[alias] = canonical
            else:
                labels.append(line)
        return cls(labels, aliases)

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        with open(path) as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_graphs(cls, *graphs: AlignmentGraph) -> "Vocabulary":
        labels = sorted(
            {
                a.label
                for g in graphs
                for _, a in g.nodes
                if a.kind is NodeKind.EQUIPMENT
            }
        )
        return cls(labels)

    def resolve(self, label: str) -> tuple[str, bool]:
        """Return (canonical label, known?); unknown labels pass through."""
        label = normalize_label(label)
        label = self.aliases.get(label, label)
        return label, label in set(self.labels)

    def __contains__(self, label: str) -> bool:
        return self.resolve(label)[1]

    def __len__(self) -> int:
        return len(self.labels)


def build_functional_graph(
    raw: RawPid,
    keep_hidden: Sequence[str] = (),
    vocab: Vocabulary | None = None,
) -> AlignmentGraph:
    """Normalize a digitized P&ID into the shared representation.

    ``keep_hidden`` nodes are exempt from simplification removal; it
    chiefly documents intent for occluded-but-wanted equipment (which
    simplification never removes anyway) and guards pipe-typed
    exemptions.
    """
    ids = {n.id for n in raw.nodes}
    for h in keep_hidden:
        if h not in ids:
            raise UnknownNodeError(f"keep_hidden id {h!r} is not a P&ID node")

    nodes = []
    for n in raw.nodes:
        if n.kind == "equipment":
            label, known = (vocab.resolve(n.label) if vocab else (n.label, True))
            if not known:
                logger.warning("P&ID label %r is not in the vocabulary", n.label)
            nodes.append((n.id, NodeAttribute(NodeKind.EQUIPMENT, label)))
        else:
            sub = "junction" if n.kind == "pipe-junction" else "run"
            nodes.append((n.id, NodeAttribute(NodeKind.PIPE, sub)))
    g = AlignmentGraph.create(nodes, raw.edges, Provenance.FUNCTIONAL)
    return simplify_graph(g, protected=frozenset(keep_hidden))


def remove_equipment(raw: RawPid, ids: Sequence[str]) -> RawPid:
    """Drop equipment symbols, splicing the neighbors of degree-2 nodes.

    Produces the "hidden objects considered unimportant" variant of a
    schematic. Removing a node of degree >= 3 would be ambiguous and is
    rejected.
    """
    nodes = list(raw.nodes)
    edges = set(raw.edges)
    for nid in ids:
        node = next((n for n in nodes if n.id == nid), None)
        if node is None:
            raise UnknownNodeError(f"P&ID node {nid!r} does not exist")
        if node.kind != "equipment":
            raise KindMismatchError(f"P&ID node {nid!r} is not an equipment symbol")
        incident = [e for e in edges if nid in e]
        if len(incident) > 2:
            raise DegreeTooHighError(
                f"cannot remove {nid!r}: degree {len(incident)} >= 3 is ambiguous"
            )
        nodes.remove(node)
        edges -= set(incident)
        if len(incident) == 2:
            nbrs = [a if b == nid else b for a, b in incident]
            edges.add((nbrs[0], nbrs[1]) if nbrs[0] <= nbrs[1] else (nbrs[1], nbrs[0]))
    return RawPid(tuple(nodes), tuple(sorted(edges)))


class FunctionalGraphBuilder(BaseEstimator, TransformerMixin):
    """Estimator-style wrapper around P&ID ingestion."""

    def __init__(self, vocab: Vocabulary | None = None, keep_hidden: tuple = ()):
        self.vocab = vocab
        self.keep_hidden = keep_hidden

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> AlignmentGraph:
        raw = parse_raw_pid(X) if isinstance(X, dict) else X
        return build_functional_graph(raw, self.keep_hidden, self.vocab)


# ---------------------------------------------------------------------------
# Document I/O
# ---------------------------------------------------------------------------


def parse_raw_pid(doc: dict) -> RawPid:
    try:
        nodes = [
            PidNode(str(n["id"]), str(n["kind"]), str(n.get("label", "")))
            for n in doc["nodes"]
        ]
        edges = [(str(a), str(b)) for a, b in doc["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidGraphError(f"malformed P&ID document: {exc}") from exc
    return RawPid.create(nodes, edges)


def raw_pid_to_dict(raw: RawPid) -> dict:
    return {
        "nodes": [
            {"id": n.id, "kind": n.kind, "label": n.label}
            for n in sorted(raw.nodes, key=lambda n: n.id)
        ],
        "edges": sorted([a, b] for a, b in raw.edges),
    }


def load_raw_pid(path) -> RawPid:
    with open(path) as fh:
        return parse_raw_pid(json.load(fh))
