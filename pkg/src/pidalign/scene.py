"""Scene graph construction from segmented 3D primitives.

Input primitives are reconstructed pipe elements (cylinders, elbows,
tees, ...) with extremity points and diameter, plus segmented equipment
instances with representative 3D points. Construction has three steps:
link pipe elements by extremity proximity, attach equipment to nearby
pipe elements, then simplify (contract degree-2 chains, prune open
ends) into the shared alignment representation.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DuplicateIdError
from .graph import (
    AlignmentGraph,
    NodeAttribute,
    NodeKind,
    Provenance,
    simplify as simplify_graph,
)
from .validation import check_finite_points, check_positive, check_unique_ids

logger = logging.getLogger(__name__)


class PipeKind(str, Enum):
    CYLINDER = "cylinder"
    ELBOW = "elbow"
    TEE = "tee"
    Y_JUNCTION = "y-junction"
    REDUCER = "reducer"


PORT_COUNT = {
    PipeKind.CYLINDER: 2,
    PipeKind.ELBOW: 2,
    PipeKind.REDUCER: 2,
    PipeKind.TEE: 3,
    PipeKind.Y_JUNCTION: 3,
}


class EquipmentAttach(str, Enum):
    CLOSEST_ONLY = "closest-only"
    ALL_WITHIN_THRESHOLD = "all-within-threshold"


@dataclass(frozen=True)
class PipeElement:
    """A reconstructed pipe primitive with its open-port extremities."""

    id: str
    kind: PipeKind
    extremities: np.ndarray  # (ports, 3), meters
    diameter: float

    def __post_init__(self):
        pts = check_finite_points(self.extremities, f"pipe {self.id!r}")
        object.__setattr__(self, "extremities", pts)
        ports = PORT_COUNT[self.kind]
        if pts.shape[0] != ports:
            raise ValueError(
                f"pipe {self.id!r}: kind {self.kind.value} has {ports} ports, "
                f"got {pts.shape[0]} extremities"
            )
        check_positive(self.diameter, f"pipe {self.id!r} diameter")

    @property
    def port_count(self) -> int:
        return PORT_COUNT[self.kind]


@dataclass(frozen=True)
class EquipmentInstance:
    """A segmented equipment object with representative 3D points."""

    id: str
    class_label: str
    points: np.ndarray  # (n, 3), meters

    def __post_init__(self):
        object.__setattr__(
            self, "points", check_finite_points(self.points, f"equipment {self.id!r}")
        )
        if not self.class_label:
            raise ValueError(f"equipment {self.id!r}: class label must be non-empty")


@dataclass(frozen=True)
class SceneConfig:
    link_threshold: float = 0.04  # meters
    equipment_attach: EquipmentAttach = EquipmentAttach.ALL_WITHIN_THRESHOLD
    subsample_limit: int = 2048  # cap on equipment points used for distances
    seed: int = 0

    def __post_init__(self):
        check_positive(self.link_threshold, "link_threshold")
        if self.subsample_limit < 1:
            raise ValueError("subsample_limit must be >= 1")


@dataclass(frozen=True)
class DegreeWarning:
    """A node whose pre-simplification degree exceeds its port count."""

    node_id: str
    degree: int
    port_count: int

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "degree": self.degree,
            "port_count": self.port_count,
        }


def pipe_distance(a: PipeElement, b: PipeElement) -> float:
    """Min Euclidean distance over pairs of extremity points."""
    diff = a.extremities[:, None, :] - b.extremities[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).min())


def _subsampled_points(eq: EquipmentInstance, cfg: SceneConfig) -> np.ndarray:
    if eq.points.shape[0] <= cfg.subsample_limit:
        return eq.points
    # seeded per instance so input order does not affect the sample
    digest = hashlib.sha256(f"{cfg.seed}:{eq.id}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    idx = rng.choice(eq.points.shape[0], size=cfg.subsample_limit, replace=False)
    return eq.points[np.sort(idx)]


def link_pipe_elements(
    pipes: list[PipeElement], cfg: SceneConfig | None = None
) -> set[tuple[str, str]]:
    """Each element selects its k closest peers within the threshold,
    k = its port count; the edge set is the union of all selections.

    Ties in distance break by ascending id. Equivalent to brute-force
    all-pairs selection; a KD-tree only restricts the candidate pairs.
    """
    cfg = cfg or SceneConfig()
    check_unique_ids((p.id for p in pipes), "pipe")
    if len(pipes) < 2:
        return set()

    pts = np.concatenate([p.extremities for p in pipes])
    owner = np.concatenate([np.full(p.extremities.shape[0], i) for i, p in enumerate(pipes)])
    tree = cKDTree(pts)
    candidate_pairs = tree.query_pairs(r=cfg.link_threshold, output_type="ndarray")

    # min distance per element pair over its extremity-point pairs
    best: dict[tuple[int, int], float] = {}
    for pi, qi in candidate_pairs:
        a, b = int(owner[pi]), int(owner[qi])
        if a == b:
            continue
        if a > b:
            a, b = b, a
        d = float(np.linalg.norm(pts[pi] - pts[qi]))
        if d < best.get((a, b), np.inf):
            best[(a, b)] = d

    per_elem: dict[int, list[tuple[float, str, int]]] = {i: [] for i in range(len(pipes))}
    for (a, b), d in best.items():
        if d < cfg.link_threshold:
            per_elem[a].append((d, pipes[b].id, b))
            per_elem[b].append((d, pipes[a].id, a))

    edges: set[tuple[str, str]] = set()
    for i, cands in per_elem.items():
        cands.sort(key=lambda c: (c[0], c[1]))
        for d, _, j in cands[: pipes[i].port_count]:
            a, b = sorted((pipes[i].id, pipes[j].id))
            edges.add((a, b))
    return edges


def attach_equipment(
    equipment: list[EquipmentInstance],
    pipes: list[PipeElement],
    cfg: SceneConfig | None = None,
) -> set[tuple[str, str]]:
    """Connect equipment to pipe elements by point-to-extremity distance.

    AllWithinThreshold links every pipe element closer than the
    threshold; ClosestOnly links just the single nearest one.
    """
    cfg = cfg or SceneConfig()
    check_unique_ids(
        [p.id for p in pipes] + [e.id for e in equipment], "scene object"
    )
    if not equipment or not pipes:
        return set()

    pts = np.concatenate([p.extremities for p in pipes])
    owner = np.concatenate([np.full(p.extremities.shape[0], i) for i, p in enumerate(pipes)])
    tree = cKDTree(pts)

    edges: set[tuple[str, str]] = set()
    for eq in equipment:
        sample = _subsampled_points(eq, cfg)
        neighbor_lists = tree.query_ball_point(sample, r=cfg.link_threshold)
        dist_by_pipe: dict[int, float] = {}
        for point, hits in zip(sample, neighbor_lists):
            if not hits:
                continue
            d = np.linalg.norm(pts[hits] - point, axis=1)
            for hit, dh in zip(hits, d):
                pidx = int(owner[hit])
                if dh < dist_by_pipe.get(pidx, np.inf):
                    dist_by_pipe[pidx] = float(dh)
        within = [
            (d, pipes[i].id) for i, d in dist_by_pipe.items() if d < cfg.link_threshold
        ]
        if not within:
            continue
        if cfg.equipment_attach is EquipmentAttach.CLOSEST_ONLY:
            within = [min(within)]  # (distance, id): ties break by ascending id
        for _, pid in within:
            a, b = sorted((eq.id, pid))
            edges.add((a, b))
    return edges


def _pipe_attr(p: PipeElement) -> NodeAttribute:
    label = "junction" if p.port_count >= 3 else "run"
    return NodeAttribute(NodeKind.PIPE, label)


def build_scene_graph(
    pipes: list[PipeElement],
    equipment: list[EquipmentInstance],
    cfg: SceneConfig | None = None,
    simplify: bool = True,
    warnings_out: list[DegreeWarning] | None = None,
) -> AlignmentGraph:
    """Full construction: link pipes, attach equipment, simplify.

    Over-degree pipe nodes (degree above port count before
    simplification) are reported as warnings, not errors.
    """
    cfg = cfg or SceneConfig()
    check_unique_ids(
        [p.id for p in pipes] + [e.id for e in equipment], "scene object"
    )
    edges = link_pipe_elements(pipes, cfg) | attach_equipment(equipment, pipes, cfg)
    nodes = [(p.id, _pipe_attr(p)) for p in pipes]
    nodes += [(e.id, NodeAttribute(NodeKind.EQUIPMENT, e.class_label)) for e in equipment]
    g = AlignmentGraph.create(nodes, edges, Provenance.SCENE)

    for p in pipes:
        degree = g.degree(p.id)
        if degree > p.port_count:
            w = DegreeWarning(p.id, degree, p.port_count)
            logger.warning(
                "pipe %s has degree %d, above its %d ports", p.id, degree, p.port_count
            )
            if warnings_out is not None:
                warnings_out.append(w)

    return simplify_graph(g) if simplify else g


class SceneGraphBuilder(BaseEstimator, TransformerMixin):
    """Estimator-style wrapper around scene graph construction.

    Stateless; ``transform`` accepts a parsed scene document (see
    :func:`load_scene`) or a ``(pipes, equipment)`` tuple and returns an
    :class:`AlignmentGraph`. Construction warnings from the last
    transform are kept on ``warnings_``.
    """

    def __init__(
        self,
        link_threshold: float = 0.04,
        equipment_attach: str = "all-within-threshold",
        subsample_limit: int = 2048,
        seed: int = 0,
        simplify: bool = True,
    ):
        self.link_threshold = link_threshold
        self.equipment_attach = equipment_attach
        self.subsample_limit = subsample_limit
        self.seed = seed
        self.simplify = simplify

    def _config(self) -> SceneConfig:
        return SceneConfig(
            link_threshold=self.link_threshold,
            equipment_attach=EquipmentAttach(self.equipment_attach),
            subsample_limit=self.subsample_limit,
            seed=self.seed,
        )

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> AlignmentGraph:
        if isinstance(X, dict):
            pipes, equipment = parse_scene(X)
        else:
            pipes, equipment = X
        self.warnings_ = []
        return build_scene_graph(
            pipes,
            equipment,
            self._config(),
            simplify=self.simplify,
            warnings_out=self.warnings_,
        )


# ---------------------------------------------------------------------------
# Scene document I/O
# ---------------------------------------------------------------------------


def parse_scene(doc: dict) -> tuple[list[PipeElement], list[EquipmentInstance]]:
    """Parse a scene document: ``{"pipes": [...], "equipment": [...]}``."""
    try:
        pipes = [
            PipeElement(
                id=str(p["id"]),
                kind=PipeKind(p["kind"]),
                extremities=np.asarray(p["extremities"], dtype=float),
                diameter=float(p["diameter"]),
            )
            for p in doc.get("pipes", [])
        ]
        equipment = [
            EquipmentInstance(
                id=str(e["id"]),
                class_label=str(e["class"]),
                points=np.asarray(e["points"], dtype=float),
            )
            for e in doc.get("equipment", [])
        ]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scene document: {exc}") from exc
    check_unique_ids(
        [p.id for p in pipes] + [e.id for e in equipment], "scene object"
    )
    return pipes, equipment


def scene_to_dict(
    pipes: list[PipeElement], equipment: list[EquipmentInstance]
) -> dict:
    return {
        "pipes": [
            {
                "id": p.id,
                "kind": p.kind.value,
                "extremities": p.extremities.tolist(),
                "diameter": p.diameter,
            }
            for p in pipes
        ],
        "equipment": [
            {"id": e.id, "class": e.class_label, "points": e.points.tolist()}
            for e in equipment
        ],
    }


def load_scene(path) -> tuple[list[PipeElement], list[EquipmentInstance]]:
    with open(path) as fh:
        return parse_scene(json.load(fh))
