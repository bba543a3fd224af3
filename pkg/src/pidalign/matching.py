"""Optimal-transport graph matcher with learned structure combination.

Aligns the scene graph S (source) to the functional graph F (target) by
alternating two minimizations of an entropic Gromov-Wasserstein
objective augmented with a linear attribute cost:

  (a) with basis weights fixed, a proximal-point step on the coupling T
      solved by inner log-domain Sinkhorn iterations;
  (b) with T fixed, projected gradient descent on the simplex weights
      that combine the per-graph similarity bases.

Uniform marginals keep every target node mass-receiving, so "no
preimage" is a property of the argmax decoding, not the solver.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .errors import EmptyGraphError, InvalidGraphError, NonFiniteError
from .functional import Vocabulary
from .graph import PIPE_RUN, AlignmentGraph, NodeKind
from .validation import check_non_empty_graph

logger = logging.getLogger(__name__)

BASE_ADJACENCY = "adjacency"
BASE_TWO_HOP = "two-hop"
BASE_ATTRIBUTE_SIM = "attribute-sim"
ALL_BASES = (BASE_ADJACENCY, BASE_TWO_HOP, BASE_ATTRIBUTE_SIM)

PIPE_RUN_FEATURE = "pipe-run"
PIPE_JUNCTION_FEATURE = "pipe-junction"

# Bonus subtracted from the linear cost of a pinned coupling entry. Large
# against both cost terms (C entries and attribute costs live in [0, 1]),
# so pinned mass wins without touching the solver contract.
PIN_BONUS = 10.0


@dataclass(frozen=True)
class MatchConfig:
    """Solver knobs. The defaults are the reference operating point."""

    bases: tuple[str, ...] = ALL_BASES
    epsilon: float = 0.05
    outer_iters: int = 50
    sinkhorn_iters: int = 100
    weight_lr: float = 0.1
    attr_weight: float = 1.0
    seed: int = 0
    tol: float = 1e-7

    def __post_init__(self):
        if not self.bases or any(b not in ALL_BASES for b in self.bases):
            raise InvalidGraphError(
                f"bases must be a non-empty subset of {ALL_BASES}, got {self.bases!r}"
            )
        if not self.epsilon > 0:
            raise InvalidGraphError(f"epsilon must be > 0, got {self.epsilon!r}")
        if self.outer_iters < 1 or self.sinkhorn_iters < 1:
            raise InvalidGraphError("iteration counts must be >= 1")
        if self.weight_lr <= 0 or self.attr_weight < 0 or self.tol <= 0:
            raise InvalidGraphError("weight_lr and tol must be > 0, attr_weight >= 0")


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan between node sets, plus solver diagnostics."""

    plan: np.ndarray  # |S| x |F|, nonnegative
    source_ids: tuple[str, ...]
    target_ids: tuple[str, ...]
    objective_trace: tuple[float, ...]
    beta_source: tuple[float, ...] = ()
    beta_target: tuple[float, ...] = ()

    @property
    def row_marginal(self) -> float:
        return 1.0 / len(self.source_ids)

    @property
    def col_marginal(self) -> float:
        return 1.0 / len(self.target_ids)


@dataclass(frozen=True)
class Mapping:
    """Hard assignment decoded from a coupling; total on source nodes."""

    assign: dict[str, str]
    confidence: dict[str, float]
    unmatched_target: tuple[str, ...] = ()

    def __post_init__(self):
        for s, c in self.confidence.items():
            if not 0.0 < c <= 1.0 + 1e-12:
                raise InvalidGraphError(f"confidence for {s!r} out of (0, 1]: {c}")


# ---------------------------------------------------------------------------
# Features and bases
# ---------------------------------------------------------------------------


def feature_labels(vocab: Vocabulary) -> tuple[str, ...]:
    """Feature axis: vocab labels, the two pipe subkinds, one OOV slot."""
    labels = list(vocab.labels)
    for extra in (PIPE_RUN_FEATURE, PIPE_JUNCTION_FEATURE):
        if extra not in labels:
            labels.append(extra)
    return tuple(labels)


def node_features(g: AlignmentGraph, vocab: Vocabulary | None = None) -> np.ndarray:
    """One-hot rows over equipment labels plus the pipe subkinds.

    Rows follow the graph's node order. Labels the vocabulary cannot
    resolve land on a shared out-of-vocabulary feature (last column)
    with a warning; matching still proceeds.
    """
    if vocab is None:
        vocab = Vocabulary.from_graphs(g)
    labels = feature_labels(vocab)
    index = {l: k for k, l in enumerate(labels)}
    oov = len(labels)  # shared extra column
    X = np.zeros((len(g), len(labels) + 1))
    for row, (nid, attr) in enumerate(g.nodes):
        if attr.kind is NodeKind.PIPE:
            name = PIPE_RUN_FEATURE if attr.label == PIPE_RUN else PIPE_JUNCTION_FEATURE
            X[row, index[name]] = 1.0
        else:
            label, known = vocab.resolve(attr.label)
            if known:
                X[row, index[label]] = 1.0
            else:
                logger.warning(
                    "label %r on node %r is out of vocabulary", attr.label, nid
                )
                X[row, oov] = 1.0
    return X


def adjacency_matrix(g: AlignmentGraph) -> np.ndarray:
    index = {nid: k for k, nid in enumerate(g.node_ids)}
    A = np.zeros((len(g), len(g)))
    for a, b in g.edges:
        A[index[a], index[b]] = 1.0
        A[index[b], index[a]] = 1.0
    return A


def structure_bases(
    g: AlignmentGraph, features: np.ndarray, bases: Sequence[str] = ALL_BASES
) -> list[np.ndarray]:
    """Similarity bases in the order requested, entries clipped to [0, 1]."""
    A = adjacency_matrix(g)
    out = []
    for name in bases:
        if name == BASE_ADJACENCY:
            out.append(A)
        elif name == BASE_TWO_HOP:
            deg = A.sum(axis=1)
            dinv = 1.0 / np.sqrt(np.maximum(deg, 1.0))
            Ahat = A * dinv[:, None] * dinv[None, :]
            out.append(np.clip(Ahat @ Ahat, 0.0, 1.0))
        elif name == BASE_ATTRIBUTE_SIM:
            out.append(np.clip(features @ features.T, 0.0, 1.0))
        else:
            raise InvalidGraphError(f"unknown basis {name!r}")
    return out


# ---------------------------------------------------------------------------
# Objective pieces (module-level so gradients are checkable in isolation)
# ---------------------------------------------------------------------------


def combine_bases(bases: Sequence[np.ndarray], beta: np.ndarray) -> np.ndarray:
    return sum(b * B for b, B in zip(beta, bases))


def gw_objective(CS: np.ndarray, CF: np.ndarray, T: np.ndarray, M: np.ndarray) -> float:
    """Square-loss GW cost of T plus the linear attribute term."""
    p = T.sum(axis=1)
    q = T.sum(axis=0)
    quad = p @ (CS * CS) @ p + q @ (CF * CF) @ q - 2.0 * np.sum(T * (CS @ T @ CF.T))
    return float(quad + np.sum(M * T))


def gw_gradient(CS: np.ndarray, CF: np.ndarray, T: np.ndarray, M: np.ndarray) -> np.ndarray:
    """dJ/dT for the square-loss tensor (constC trick) plus the linear term."""
    p = T.sum(axis=1)
    q = T.sum(axis=0)
    constC = ((CS * CS) @ p)[:, None] + (((CF * CF) @ q)[None, :])
    return 2.0 * (constC - 2.0 * CS @ T @ CF.T) + M


def weight_gradients(
    bases_S: Sequence[np.ndarray],
    bases_F: Sequence[np.ndarray],
    beta_S: np.ndarray,
    beta_F: np.ndarray,
    T: np.ndarray,
    M: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic dJ/dbeta for both graphs at fixed T.

    dJ/dbeta_S[l] = 2 <B_l, CS o (p p^T) - T CF T^T>, symmetrically for F.
    """
    CS = combine_bases(bases_S, beta_S)
    CF = combine_bases(bases_F, beta_F)
    p = T.sum(axis=1)
    q = T.sum(axis=0)
    TCFT = T @ CF @ T.T
    TCST = T.T @ CS @ T
    gS = np.array([2.0 * np.sum(B * (CS * np.outer(p, p) - TCFT)) for B in bases_S])
    gF = np.array([2.0 * np.sum(B * (CF * np.outer(q, q) - TCST)) for B in bases_F])
    return gS, gF


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > (css - 1.0))[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _round_to_polytope(T: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Project a near-feasible plan exactly onto U(p, q).

    Scale rows then columns down to their marginal caps and distribute
    the missing mass as a rank-one correction. Keeps entries
    nonnegative and moves at most the current marginal violation.
    """
    r = T.sum(axis=1)
    T = T * np.minimum(1.0, np.divide(p, r, out=np.ones_like(r), where=r > 0))[:, None]
    c = T.sum(axis=0)
    T = T * np.minimum(1.0, np.divide(q, c, out=np.ones_like(c), where=c > 0))[None, :]
    dr = np.maximum(p - T.sum(axis=1), 0.0)  # clamp float-epsilon negatives
    dc = np.maximum(q - T.sum(axis=0), 0.0)
    missing = dr.sum()
    if missing > 0:
        T = T + np.outer(dr, dc) / missing
    return T


def _prox_sinkhorn(logT, G, eps, logp, logq, iters, stop=1e-10):
    # proximal kernel: log K = log T - G / eps, then balance in log domain
    logK = logT - G / eps
    f = np.zeros(len(logp))
    g = np.zeros(len(logq))
    logTn = logK
    for _ in range(iters):
        f = logp - logsumexp(logK + g[None, :], axis=1)
        g = logq - logsumexp(logK + f[:, None], axis=0)
        logTn = f[:, None] + logK + g[None, :]
        T = np.exp(logTn)
        err = max(
            np.abs(T.sum(axis=1) - np.exp(logp)).max(),
            np.abs(T.sum(axis=0) - np.exp(logq)).max(),
        )
        if err < stop:
            break
    return logTn, np.exp(logTn)


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


def match_graphs(
    S: AlignmentGraph,
    F: AlignmentGraph,
    cfg: MatchConfig = MatchConfig(),
    vocab: Vocabulary | None = None,
    pins: Sequence[tuple[str, str]] = (),
    progress: Callable[[int, int], None] | None = None,
) -> Coupling:
    """Align S onto F; returns the soft coupling with its objective trace.

    Deterministic: the solver draws no random numbers, so identical
    inputs give bit-identical couplings (cfg.seed is recorded in
    artifacts for provenance, it does not perturb the result). The
    trace is non-increasing; a proximal step that would increase the
    objective is re-solved with a larger effective epsilon and, failing
    that, rejected.

    ``pins`` are operator-asserted (source-id, target-id) pairs,
    honored as a strong bonus on the pinned entry of the linear cost.
    """
    check_non_empty_graph(S, "source graph")
    check_non_empty_graph(F, "target graph")
    if vocab is None:
        vocab = Vocabulary.from_graphs(S, F)

    XS = node_features(S, vocab)
    XF = node_features(F, vocab)
    BS = structure_bases(S, XS, cfg.bases)
    BF = structure_bases(F, XF, cfg.bases)

    ns, nf = len(S), len(F)
    p = np.full(ns, 1.0 / ns)
    q = np.full(nf, 1.0 / nf)
    logp, logq = np.log(p), np.log(q)

    M = cfg.attr_weight * (1.0 - XS @ XF.T)
    if pins:
        s_index = {nid: k for k, nid in enumerate(S.node_ids)}
        f_index = {nid: k for k, nid in enumerate(F.node_ids)}
        for s, f in pins:
            if s not in s_index or f not in f_index:
                raise InvalidGraphError(f"pin ({s!r}, {f!r}) references unknown nodes")
            M[s_index[s], f_index[f]] -= PIN_BONUS

    nb = len(cfg.bases)
    bS = np.full(nb, 1.0 / nb)
    bF = np.full(nb, 1.0 / nb)
    T = np.outer(p, q)
    logT = np.log(T)
    trace: list[float] = []

    for it in range(cfg.outer_iters):
        CS = combine_bases(BS, bS)
        CF = combine_bases(BF, bF)
        G = gw_gradient(CS, CF, T, M)
        logTn, Tn = _prox_sinkhorn(logT, G, cfg.epsilon, logp, logq, cfg.sinkhorn_iters)
        obj_old = gw_objective(CS, CF, T, M)
        obj_new = gw_objective(CS, CF, Tn, M)
        # a too-aggressive prox step can overshoot; damp by growing eps
        eps_eff = cfg.epsilon
        retries = 0
        while obj_new > obj_old + 1e-9 and retries < 8:
            eps_eff *= 2.0
            logTn, Tn = _prox_sinkhorn(logT, G, eps_eff, logp, logq, cfg.sinkhorn_iters)
            obj_new = gw_objective(CS, CF, Tn, M)
            retries += 1
        if obj_new > obj_old + 1e-9:
            Tn, logTn = T, logT  # reject the step outright
        if not np.all(np.isfinite(Tn)):
            raise NonFiniteError(
                f"non-finite coupling at outer iteration {it} "
                f"(epsilon={cfg.epsilon}, |S|={ns}, |F|={nf})"
            )
        dT = float(np.abs(Tn - T).max())
        T, logT = Tn, logTn

        # weight step: projected gradient with backtracking so the
        # combined objective never increases
        gS, gF = weight_gradients(BS, BF, bS, bF, T, M)
        obj_cur = gw_objective(CS, CF, T, M)
        step = cfg.weight_lr
        for _ in range(12):
            bS2 = project_simplex(bS - step * gS)
            bF2 = project_simplex(bF - step * gF)
            CS2 = combine_bases(BS, bS2)
            CF2 = combine_bases(BF, bF2)
            if gw_objective(CS2, CF2, T, M) <= obj_cur + 1e-12:
                bS, bF = bS2, bF2
                break
            step *= 0.5

        obj = gw_objective(combine_bases(BS, bS), combine_bases(BF, bF), T, M)
        if not np.isfinite(obj):
            raise NonFiniteError(f"non-finite objective at outer iteration {it}")
        trace.append(obj)
        if progress is not None:
            progress(it + 1, cfg.outer_iters)
        if dT < cfg.tol:
            break

    # the inner solver may stop at its iteration cap short of
    # feasibility, but the Coupling contract promises marginals within
    # 1e-6: balance, then round exactly onto the polytope
    logT, T = _prox_sinkhorn(
        logT, np.zeros_like(T), 1.0, logp, logq, iters=200, stop=1e-9
    )
    T = _round_to_polytope(T, p, q)

    return Coupling(
        plan=T,
        source_ids=S.node_ids,
        target_ids=F.node_ids,
        objective_trace=tuple(trace),
        beta_source=tuple(float(b) for b in bS),
        beta_target=tuple(float(b) for b in bF),
    )


def extract_mapping(c: Coupling, S: AlignmentGraph, F: AlignmentGraph) -> Mapping:
    """Row-argmax decoding; exact ties go to the ascending target id.

    Collisions are allowed here: two source rows sharing an argmax are
    inconsistency type 1, detected downstream.
    """
    # column order sorted by id makes np.argmax's first-hit rule the tie rule
    order = sorted(range(len(c.target_ids)), key=lambda j: c.target_ids[j])
    sorted_plan = c.plan[:, order]
    assign: dict[str, str] = {}
    confidence: dict[str, float] = {}
    hit: set[str] = set()
    for i, sid in enumerate(c.source_ids):
        j = int(np.argmax(sorted_plan[i]))
        tid = c.target_ids[order[j]]
        assign[sid] = tid
        confidence[sid] = float(sorted_plan[i, j] / sorted_plan[i].sum())
        hit.add(tid)
    unmatched = tuple(sorted(set(c.target_ids) - hit))
    return Mapping(assign=assign, confidence=confidence, unmatched_target=unmatched)


# ---------------------------------------------------------------------------
# Estimator facade
# ---------------------------------------------------------------------------


class GraphMatcher(BaseEstimator):
    """Estimator-style wrapper: fit(S, F) aligns, predict() decodes."""

    def __init__(
        self,
        bases=ALL_BASES,
        epsilon=0.05,
        outer_iters=50,
        sinkhorn_iters=100,
        weight_lr=0.1,
        attr_weight=1.0,
        seed=0,
        tol=1e-7,
        vocab: Vocabulary | None = None,
    ):
        self.bases = bases
        self.epsilon = epsilon
        self.outer_iters = outer_iters
        self.sinkhorn_iters = sinkhorn_iters
        self.weight_lr = weight_lr
        self.attr_weight = attr_weight
        self.seed = seed
        self.tol = tol
        self.vocab = vocab

    def _config(self) -> MatchConfig:
        return MatchConfig(
            bases=tuple(self.bases),
            epsilon=self.epsilon,
            outer_iters=self.outer_iters,
            sinkhorn_iters=self.sinkhorn_iters,
            weight_lr=self.weight_lr,
            attr_weight=self.attr_weight,
            seed=self.seed,
            tol=self.tol,
        )

    def fit(self, S: AlignmentGraph, F: AlignmentGraph, pins=()):
        self.coupling_ = match_graphs(S, F, self._config(), self.vocab, pins)
        self.mapping_ = extract_mapping(self.coupling_, S, F)
        return self

    def predict(self, X=None) -> Mapping:
        if not hasattr(self, "mapping_"):
            raise AttributeError("GraphMatcher is not fitted; call fit(S, F) first")
        return self.mapping_


# ---------------------------------------------------------------------------
# Artifact I/O
# ---------------------------------------------------------------------------


def mapping_to_dict(m: Mapping) -> dict:
    return {
        "pairs": [
            {"source": s, "target": m.assign[s], "confidence": m.confidence[s]}
            for s in sorted(m.assign)
        ],
        "unmatched_target": list(m.unmatched_target),
    }


def mapping_to_json(m: Mapping) -> str:
    return json.dumps(mapping_to_dict(m), indent=2) + "\n"


def mapping_from_dict(d: dict) -> Mapping:
    try:
        assign = {p["source"]: p["target"] for p in d["pairs"]}
        confidence = {p["source"]: float(p.get("confidence", 1.0)) for p in d["pairs"]}
        unmatched = tuple(d.get("unmatched_target", ()))
    except (KeyError, TypeError) as exc:
        raise InvalidGraphError(f"malformed mapping document: {exc}") from exc
    return Mapping(assign=assign, confidence=confidence, unmatched_target=unmatched)


def mapping_from_json(text: str) -> Mapping:
    return mapping_from_dict(json.loads(text))


def save_coupling(c: Coupling, path) -> None:
    """Dense plan as little-endian float64 plus a JSON sidecar."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(c.plan, dtype="<f8").tobytes())
    sidecar = {
        "shape": list(c.plan.shape),
        "dtype": "<f8",
        "source_ids": list(c.source_ids),
        "target_ids": list(c.target_ids),
        "objective_trace": list(c.objective_trace),
        "beta_source": list(c.beta_source),
        "beta_target": list(c.beta_target),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_coupling(path) -> Coupling:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    plan = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(sidecar["shape"])
    return Coupling(
        plan=plan,
        source_ids=tuple(sidecar["source_ids"]),
        target_ids=tuple(sidecar["target_ids"]),
        objective_trace=tuple(sidecar["objective_trace"]),
        beta_source=tuple(sidecar.get("beta_source", ())),
        beta_target=tuple(sidecar.get("beta_target", ())),
    )
