"""Shared generators and brute-force oracles for the test suites."""

from __future__ import annotations

import numpy as np

from pidalign import AlignmentGraph, EquipmentInstance, PipeElement, Provenance
from pidalign.graph import equipment as eq_attr
from pidalign.scene import PORT_COUNT, EquipmentAttach, PipeKind, SceneConfig, pipe_distance

EQUIPMENT_LABELS = ("valve", "pump", "filter", "tank", "sensor")


# ---------------------------------------------------------------------------
# Brute-force oracles for scene construction
# ---------------------------------------------------------------------------


def oracle_link(pipes: list[PipeElement], cfg: SceneConfig) -> set[tuple[str, str]]:
    """All-pairs reimplementation of the k-closest linking rule."""
    edges = set()
    for i, p in enumerate(pipes):
        cands = []
        for j, q in enumerate(pipes):
            if i == j:
                continue
            d = pipe_distance(p, q)
            if d < cfg.link_threshold:
                cands.append((d, q.id, j))
        cands.sort()
        for _, _, j in cands[: PORT_COUNT[p.kind]]:
            edges.add(tuple(sorted((p.id, pipes[j].id))))
    return edges


def oracle_attach(
    equipment: list[EquipmentInstance],
    pipes: list[PipeElement],
    cfg: SceneConfig,
) -> set[tuple[str, str]]:
    """All-pairs reimplementation of the equipment attachment rule.

    Assumes equipment clouds are below the subsample limit (the random
    scenes used in tests keep them small so both paths see all points).
    """
    edges = set()
    for e in equipment:
        dists = []
        for p in pipes:
            d = float(
                np.linalg.norm(
                    e.points[:, None, :] - p.extremities[None, :, :], axis=2
                ).min()
            )
            if d < cfg.link_threshold:
                dists.append((d, p.id))
        if not dists:
            continue
        if cfg.equipment_attach is EquipmentAttach.CLOSEST_ONLY:
            dists = [min(dists)]
        for _, pid in dists:
            edges.add(tuple(sorted((e.id, pid))))
    return edges


# ---------------------------------------------------------------------------
# Random scene generator
# ---------------------------------------------------------------------------


def random_scene(
    seed: int, n_pipes: int = None, n_equipment: int = None
) -> tuple[list[PipeElement], list[EquipmentInstance]]:
    """Clustered random primitives with gaps straddling the threshold.

    Extremities are placed so that plenty of pairs land just inside and
    just outside the default 0.04 m threshold, exercising the strict-<
    boundary and the k-closest cutoff.
    """
    rng = np.random.default_rng(seed)
    if n_pipes is None:
        n_pipes = int(rng.integers(5, 101))
    if n_equipment is None:
        n_equipment = int(rng.integers(0, 21))

    kinds = list(PipeKind)
    pipes = []
    anchor = np.zeros(3)
    for i in range(n_pipes):
        kind = kinds[int(rng.integers(0, len(kinds)))]
        ports = PORT_COUNT[kind]
        # walk anchors so elements form loose chains with realistic gaps
        if rng.random() < 0.75:
            anchor = anchor + rng.normal(scale=0.05, size=3)
        else:
            anchor = rng.uniform(-1.0, 1.0, size=3)
        exts = anchor + rng.uniform(-0.06, 0.06, size=(ports, 3))
        pipes.append(
            PipeElement(
                id=f"p{i:03d}",
                kind=kind,
                extremities=exts,
                diameter=float(rng.uniform(0.02, 0.3)),
            )
        )

    equipment = []
    for j in range(n_equipment):
        if pipes and rng.random() < 0.8:
            base = pipes[int(rng.integers(0, len(pipes)))].extremities[0]
        else:
            base = rng.uniform(-1.0, 1.0, size=3)
        pts = base + rng.uniform(-0.05, 0.05, size=(int(rng.integers(1, 8)), 3))
        equipment.append(
            EquipmentInstance(
                id=f"e{j:03d}",
                class_label=EQUIPMENT_LABELS[int(rng.integers(0, len(EQUIPMENT_LABELS)))],
                points=pts,
            )
        )
    return pipes, equipment


# ---------------------------------------------------------------------------
# Random attributed graphs for the matcher suites
# ---------------------------------------------------------------------------


def random_connected_graph(
    rng: np.random.Generator, n: int, density: float, n_labels: int = 5
) -> tuple[np.ndarray, list[str]]:
    """Adjacency + labels of a random connected attributed graph."""
    while True:
        A = np.triu((rng.random((n, n)) < density).astype(float), 1)
        A = A + A.T
        seen = {0}
        stack = [0]
        adj = [np.nonzero(A[i])[0] for i in range(n)]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(int(v))
                    stack.append(int(v))
        if len(seen) == n:
            break
    labels = [EQUIPMENT_LABELS[int(k % n_labels)] for k in rng.integers(0, n_labels, size=n)]
    return A, labels


def graph_from_adjacency(
    A: np.ndarray, labels: list[str], prefix: str, provenance=Provenance.SCENE
) -> AlignmentGraph:
    n = len(labels)
    nodes = [(f"{prefix}{i:03d}", eq_attr(labels[i])) for i in range(n)]
    edges = [
        (f"{prefix}{i:03d}", f"{prefix}{j:03d}")
        for i in range(n)
        for j in range(i + 1, n)
        if A[i, j]
    ]
    return AlignmentGraph.create(nodes, edges, provenance)


def permuted_copy(
    A: np.ndarray, labels: list[str], rng: np.random.Generator, prefix: str = "f"
) -> tuple[AlignmentGraph, np.ndarray]:
    """Graph with node i of the original renamed to {prefix}{perm[i]}."""
    n = len(labels)
    perm = rng.permutation(n)
    AF = np.zeros_like(A)
    labF = [""] * n
    for i in range(n):
        labF[perm[i]] = labels[i]
        for k in range(n):
            AF[perm[i], perm[k]] = A[i, k]
    return graph_from_adjacency(AF, labF, prefix, Provenance.FUNCTIONAL), perm
