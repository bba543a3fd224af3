"""Input validation helpers shared by builders, matchers and interfaces."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateIdError, EmptyGraphError
from .graph import AlignmentGraph


def check_unique_ids(ids: Iterable[str], what: str = "element") -> None:
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            raise DuplicateIdError(f"duplicate {what} id {i!r}")
        seen.add(i)


def check_finite_points(points: Sequence[Sequence[float]], owner: str) -> np.ndarray:
    """Coerce to an (n, 3) float array, rejecting NaN/Inf and bad shapes."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{owner}: points must be an (n, 3) array, got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{owner}: needs at least one point")
    if not np.isfinite(arr).all():
        raise ValueError(f"{owner}: coordinates must be finite")
    return arr


def check_positive(value: float, name: str) -> float:
    if not (value > 0):
        raise ValueError(f"{name} must be > 0, got {value}")
    return value


def check_non_empty_graph(g: AlignmentGraph, name: str) -> AlignmentGraph:
    if len(g) == 0:
        raise EmptyGraphError(f"{name} graph has no nodes")
    return g
