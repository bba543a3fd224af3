"""Inconsistency detection and the human-in-the-loop resolution cycle.

Three disagreement classes are detected after each matching round:
source nodes paired with the same target (Collision), target nodes with
no preimage (UnmatchedTarget), and source edges whose endpoints map to a
non-edge (EdgeViolation). The loop alternates match - detect - resolve
until every record is either resolved by an edit or explicitly accepted
as a known divergence (an occluded-but-documented object is correct as
is, so acceptance is what lets the loop terminate).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    InvalidGraphError,
    MaxRoundsExceededError,
    NeighborsUnmatchedError,
    UnknownNodeError,
)
from .graph import (
    AlignmentGraph,
    GraphEdit,
    apply_edits,
    graph_to_dict,
)
from .matching import (
    Coupling,
    Mapping,
    MatchConfig,
    extract_mapping,
    mapping_to_dict,
    match_graphs,
)
from .scene import PipeElement


class InconsistencyKind(str, Enum):
    COLLISION = "collision"
    UNMATCHED_TARGET = "unmatched-target"
    EDGE_VIOLATION = "edge-violation"


class InconsistencyStatus(str, Enum):
    OPEN = "open"
    RESOLVED = "resolved"
    ACCEPTED = "accepted"


@dataclass(frozen=True)
class Inconsistency:
    """One detected disagreement; `key` is stable across rounds so an
    acceptance issued in round n still applies in round n+1."""

    kind: InconsistencyKind
    payload: tuple
    status: InconsistencyStatus = InconsistencyStatus.OPEN

    @property
    def key(self) -> str:
        if self.kind is InconsistencyKind.COLLISION:
            target, _sources = self.payload
            return f"collision:{target}"
        if self.kind is InconsistencyKind.UNMATCHED_TARGET:
            return f"unmatched-target:{self.payload[0]}"
        (s1, s2), (f1, f2) = self.payload
        return f"edge-violation:{s1}-{s2}"

    def to_dict(self) -> dict:
        if self.kind is InconsistencyKind.COLLISION:
            payload = {"target": self.payload[0], "sources": list(self.payload[1])}
        elif self.kind is InconsistencyKind.UNMATCHED_TARGET:
            payload = {"target": self.payload[0]}
        else:
            payload = {
                "source_edge": list(self.payload[0]),
                "mapped_non_edge": list(self.payload[1]),
            }
        return {"kind": self.kind.value, "payload": payload, "status": self.status.value, "key": self.key}


def get_inconsistencies(
    m: Mapping,
    S: AlignmentGraph,
    F: AlignmentGraph,
    accepted: set[str] | frozenset[str] = frozenset(),
) -> list[Inconsistency]:
    """Detect all three classes; deterministic order (kind, ascending ids).

    `accepted` holds keys of records the operator has whitelisted; those
    are still emitted (status Accepted) but do not keep the loop alive.
    """
    for sid in S.node_ids:
        if sid not in m.assign:
            raise InvalidGraphError(f"mapping is not total: source {sid!r} unassigned")
    for sid, tid in m.assign.items():
        if sid not in S.attributes:
            raise UnknownNodeError(f"mapping source {sid!r} is not an S node")
        if tid not in F.attributes:
            raise UnknownNodeError(f"mapping target {tid!r} is not an F node")

    items: list[Inconsistency] = []

    preimages: dict[str, list[str]] = {}
    for sid in sorted(m.assign):
        preimages.setdefault(m.assign[sid], []).append(sid)
    for tid in sorted(preimages):
        if len(preimages[tid]) >= 2:
            items.append(
                Inconsistency(
                    InconsistencyKind.COLLISION, (tid, tuple(sorted(preimages[tid])))
                )
            )

    for tid in sorted(F.node_ids):
        if tid not in preimages:
            items.append(Inconsistency(InconsistencyKind.UNMATCHED_TARGET, (tid,)))

    for s1, s2 in sorted(S.edges):
        f1, f2 = m.assign[s1], m.assign[s2]
        if f1 != f2 and not F.has_edge(f1, f2):
            items.append(
                Inconsistency(InconsistencyKind.EDGE_VIOLATION, ((s1, s2), (f1, f2)))
            )

    return [
        replace(it, status=InconsistencyStatus.ACCEPTED)
        if it.key in accepted
        else it
        for it in items
    ]


def open_items(items: Sequence[Inconsistency]) -> list[Inconsistency]:
    return [it for it in items if it.status is InconsistencyStatus.OPEN]


# ---------------------------------------------------------------------------
# Session and loop
# ---------------------------------------------------------------------------


@dataclass
class Resolution:
    """One round's worth of operator decisions."""

    edits_source: list[GraphEdit] = field(default_factory=list)
    edits_target: list[GraphEdit] = field(default_factory=list)
    acceptances: list[str] = field(default_factory=list)  # inconsistency keys
    pins: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class AlignmentSession:
    """Mutable state carried across rounds of the resolution cycle."""

    project_id: str
    source: AlignmentGraph
    target: AlignmentGraph
    mapping: Mapping | None = None
    coupling: Coupling | None = None
    inconsistencies: list[Inconsistency] = field(default_factory=list)
    accepted: set[str] = field(default_factory=set)
    pins: list[tuple[str, str]] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)  # append-only round records
    round: int = 0

    def checkpoint(self, directory=None) -> dict:
        """Record (and optionally persist) the current round's artifacts."""
        record = {
            "round": self.round,
            "source": graph_to_dict(self.source),
            "target": graph_to_dict(self.target),
            "mapping": mapping_to_dict(self.mapping) if self.mapping else None,
            "report": {
                "round": self.round,
                "items": [it.to_dict() for it in self.inconsistencies],
            },
        }
        self.history.append(record)
        if directory is not None:
            rdir = Path(directory) / "rounds" / str(self.round)
            rdir.mkdir(parents=True, exist_ok=True)
            _atomic_write(rdir / "S.json", json.dumps(record["source"], indent=2) + "\n")
            _atomic_write(rdir / "F.json", json.dumps(record["target"], indent=2) + "\n")
            if record["mapping"] is not None:
                _atomic_write(
                    rdir / "mapping.json", json.dumps(record["mapping"], indent=2) + "\n"
                )
            _atomic_write(
                rdir / "report.json", json.dumps(record["report"], indent=2) + "\n"
            )
        return record


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


EditProvider = Callable[[list[Inconsistency], AlignmentSession], Resolution]


def run_alignment_loop(
    session: AlignmentSession,
    cfg: MatchConfig = MatchConfig(),
    edit_provider: EditProvider | None = None,
    max_rounds: int = 50,
    checkpoint_dir=None,
    vocab=None,
) -> tuple[Mapping, list[Inconsistency]]:
    """Iterate match - detect - resolve until no open inconsistency remains.

    The edit provider is any source of Resolution batches: a scripted
    test double or a bridge to a human UI. Each round is checkpointed
    into session.history (and checkpoint_dir when given). Edits that
    fail to apply roll the graphs back to the round's checkpoint and
    re-raise. Without an edit provider the loop runs a single round and
    returns whatever it found.
    """
    for _ in range(max_rounds):
        session.round += 1
        session.coupling = match_graphs(
            session.source, session.target, cfg, vocab=vocab, pins=session.pins
        )
        session.mapping = extract_mapping(session.coupling, session.source, session.target)
        session.inconsistencies = get_inconsistencies(
            session.mapping, session.source, session.target, session.accepted
        )
        session.checkpoint(checkpoint_dir)

        remaining = open_items(session.inconsistencies)
        if not remaining:
            return session.mapping, list(session.inconsistencies)
        if edit_provider is None:
            return session.mapping, list(session.inconsistencies)

        resolution = edit_provider(remaining, session)
        src, tgt = session.source, session.target
        try:
            if resolution.edits_source:
                session.source = apply_edits(session.source, resolution.edits_source)
            if resolution.edits_target:
                session.target = apply_edits(session.target, resolution.edits_target)
        except Exception:
            session.source, session.target = src, tgt  # roll back the round
            raise
        session.accepted.update(resolution.acceptances)
        session.pins.extend(resolution.pins)
        if not resolution.edits_source and not resolution.edits_target and not resolution.pins:
            # no structural change: unless every remaining item was just
            # accepted, the next round would replay this one verbatim
            if any(it.key not in session.accepted for it in remaining):
                raise MaxRoundsExceededError(
                    f"edit provider made no progress against "
                    f"{len(open_items(session.inconsistencies))} open items in round {session.round}"
                )

    raise MaxRoundsExceededError(
        f"alignment loop did not converge within {max_rounds} rounds "
        f"({len(open_items(session.inconsistencies))} open items remain)"
    )


# ---------------------------------------------------------------------------
# Occluded-equipment localization
# ---------------------------------------------------------------------------


def infer_hidden_location(
    target_id: str,
    m: Mapping,
    F: AlignmentGraph,
    primitives: dict[str, PipeElement],
) -> tuple[np.ndarray, float]:
    """Approximate 3D location of an unmatched target from its neighbors.

    Every F-neighbor of the target must have a preimage with a known
    primitive. With several neighbors: centroid of their extremities
    nearest the gap, radius covering those points. With a single
    neighbor run: its free extremity, radius = that run's diameter.
    """
    if target_id not in F.attributes:
        raise UnknownNodeError(f"target {target_id!r} is not an F node")
    neighbors = sorted(F.adjacency[target_id])
    if not neighbors:
        raise NeighborsUnmatchedError(f"target {target_id!r} has no neighbors to localize from")

    inverse: dict[str, list[str]] = {}
    for sid, tid in m.assign.items():
        inverse.setdefault(tid, []).append(sid)

    elements: list[PipeElement] = []
    for nb in neighbors:
        pre = inverse.get(nb, [])
        prims = [primitives[s] for s in pre if s in primitives]
        if not prims:
            raise NeighborsUnmatchedError(
                f"neighbor {nb!r} of {target_id!r} has no matched primitive"
            )
        elements.extend(prims)

    if len(elements) == 1:
        elem = elements[0]
        ends = np.asarray(elem.extremities, dtype=float)
        others = np.array(
            [pt for e in primitives.values() if e is not elem for pt in e.extremities],
            dtype=float,
        )
        if len(others):
            # free extremity = the one farthest from every other element
            dists = [float(np.linalg.norm(others - end, axis=1).min()) for end in ends]
            point = ends[int(np.argmax(dists))]
        else:
            point = ends[-1]
        return point, float(elem.diameter)

    # several neighbors: for each element take the extremity nearest the
    # others' extremities (the side facing the gap), then centroid + cover
    all_ends = [np.asarray(e.extremities, dtype=float) for e in elements]
    facing = []
    for k, ends in enumerate(all_ends):
        rest = np.vstack([a for j, a in enumerate(all_ends) if j != k])
        dists = [float(np.linalg.norm(rest - end, axis=1).min()) for end in ends]
        facing.append(ends[int(np.argmin(dists))])
    facing_arr = np.vstack(facing)
    center = facing_arr.mean(axis=0)
    radius = float(np.linalg.norm(facing_arr - center, axis=1).max())
    return center, radius


# ---------------------------------------------------------------------------
# Report I/O
# ---------------------------------------------------------------------------


def report_to_dict(items: Sequence[Inconsistency], round_no: int = 0) -> dict:
    return {"round": round_no, "items": [it.to_dict() for it in items]}


def report_to_json(items: Sequence[Inconsistency], round_no: int = 0) -> str:
    return json.dumps(report_to_dict(items, round_no), indent=2) + "\n"
