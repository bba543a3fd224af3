"""Acceptance gate: one test per release criterion, one verdict line each.

Run with -s (or read captured output) to see the PASS/FAIL lines; each
criterion is also a separate test so the -v listing carries the verdicts.
"""

import json
import time

import numpy as np

from pidalign import (
    AlignmentGraph,
    MatchConfig,
    Provenance,
    build_functional_graph,
    build_scene_graph,
)
from pidalign.cli import main
from pidalign.consistency import (
    AlignmentSession,
    InconsistencyKind,
    Resolution,
    get_inconsistencies,
    open_items,
    run_alignment_loop,
)
from pidalign.fixtures import (
    load_fig5_expected_mapping,
    load_fig5_pid,
    load_fig5_scene,
    load_fig5_vocab,
)
from pidalign.functional import raw_pid_to_dict
from pidalign.graph import (
    NodeKind,
    contract_degree2_pipes,
    equipment,
    pipe_run,
    prune_open_pipes,
    simplify,
)
from pidalign.matching import (
    Mapping,
    combine_bases,
    extract_mapping,
    gw_objective,
    match_graphs,
    weight_gradients,
)
from pidalign.scene import SceneConfig, scene_to_dict
from util import (
    EQUIPMENT_LABELS,
    graph_from_adjacency,
    oracle_attach,
    oracle_link,
    permuted_copy,
    random_connected_graph,
    random_scene,
)


def verdict(criterion: str, ok: bool, detail: str = ""):
    line = f"{'PASS' if ok else 'FAIL'}: {criterion}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# construction + simplification
# ---------------------------------------------------------------------------


def test_construction_oracle_equivalence():
    cfg = SceneConfig()
    mismatches = 0
    t0 = time.monotonic()
    for seed in range(200):
        pipes, eqs = random_scene(seed)
        expected = oracle_link(pipes, cfg) | oracle_attach(eqs, pipes, cfg)
        got = build_scene_graph(pipes, eqs, cfg, simplify=False).edges
        if set(got) != expected:
            mismatches += 1
    elapsed = time.monotonic() - t0
    verdict(
        "construction oracle equivalence on 200 random scenes",
        mismatches == 0 and elapsed < 10.0,
        f"{mismatches} mismatching scenes, {elapsed:.1f}s",
    )


def test_simplification_invariants():
    rng = np.random.default_rng(42)
    violations = []
    for trial in range(500):
        n = int(rng.integers(3, 40))
        A = (rng.random((n, n)) < rng.uniform(0.05, 0.3)).astype(int)
        A = np.triu(A, 1)
        A = A + A.T
        attrs = [
            pipe_run()
            if rng.random() < 0.6
            else equipment(EQUIPMENT_LABELS[int(rng.integers(0, 5))])
            for _ in range(n)
        ]
        nodes = [(f"n{i:03d}", attrs[i]) for i in range(n)]
        edges = [
            (f"n{i:03d}", f"n{j:03d}") for i in range(n) for j in range(i + 1, n) if A[i, j]
        ]
        g = AlignmentGraph.create(nodes, edges, Provenance.SCENE)
        h = simplify(g)
        deg = {i: 0 for i in h.node_ids}
        for a, b in h.edges:
            deg[a] += 1
            deg[b] += 1
        for nid, attr in h.nodes:
            if attr.kind is not NodeKind.PIPE:
                continue
            if deg[nid] < 2:
                violations.append(f"trial {trial}: pipe {nid} degree {deg[nid]}")
            elif deg[nid] == 2:
                nbrs = [b if a == nid else a for a, b in h.edges if nid in (a, b)]
                if any(h.attributes[nb].kind is NodeKind.PIPE for nb in nbrs):
                    violations.append(f"trial {trial}: pipe {nid} kept a pipe neighbor")
        for name, passfn in (
            ("contract", contract_degree2_pipes),
            ("prune", prune_open_pipes),
            ("simplify", simplify),
        ):
            again = passfn(h)
            if again.nodes != h.nodes or again.edges != h.edges:
                violations.append(f"trial {trial}: {name} not idempotent at fixpoint")
    verdict(
        "simplification invariants + idempotence on 500 random graphs",
        not violations,
        violations[0] if violations else "clean",
    )


# ---------------------------------------------------------------------------
# matching quality
# ---------------------------------------------------------------------------


def test_isomorphism_recovery():
    rng = np.random.default_rng(30)
    perfect, slowest = 0, 0.0
    for _ in range(100):
        A, labels = random_connected_graph(rng, 30, float(rng.uniform(0.1, 0.2)))
        S = graph_from_adjacency(A, labels, "s")
        F, perm = permuted_copy(A, labels, rng)
        t0 = time.monotonic()
        m = extract_mapping(match_graphs(S, F, MatchConfig()), S, F)
        slowest = max(slowest, time.monotonic() - t0)
        if all(m.assign[f"s{i:03d}"] == f"f{perm[i]:03d}" for i in range(30)):
            perfect += 1
    verdict(
        "isomorphism recovery (n=30) perfect on >= 95 of 100 trials, < 5s each",
        perfect >= 95 and slowest < 5.0,
        f"{perfect}/100 perfect, slowest {slowest:.2f}s",
    )


def test_perturbation_robustness():
    rng = np.random.default_rng(20260817)
    good = 0
    for _ in range(100):
        while True:  # instances must offer a degree-2 node to delete
            n = int(rng.integers(20, 41))
            A, labels = random_connected_graph(rng, n, float(rng.uniform(0.1, 0.2)))
            deg2 = [i for i in range(n) if A[:, i].sum() == 2]
            if deg2:
                break
        F, perm = permuted_copy(A, labels, rng)
        victim = int(rng.choice(deg2))
        keep = [i for i in range(n) if i != victim]
        kept = graph_from_adjacency(A[np.ix_(keep, keep)], [labels[i] for i in keep], "s")
        renamed = {f"s{j:03d}": f"s{keep[j]:03d}" for j in range(len(keep))}
        S = AlignmentGraph.create(
            [(renamed[i], attr) for i, attr in kept.nodes],
            [(renamed[a], renamed[b]) for a, b in kept.edges],
            Provenance.SCENE,
        )
        m = extract_mapping(match_graphs(S, F, MatchConfig()), S, F)
        correct = sum(1 for i in keep if m.assign[f"s{i:03d}"] == f"f{perm[i]:03d}")
        if correct / len(keep) >= 0.95:
            good += 1
    verdict(
        "degree-2 deletion keeps >= 95% of nodes matched on >= 90 of 100 trials",
        good >= 90,
        f"{good}/100 trials at >= 95%",
    )


def test_fig5_miniature():
    S = build_scene_graph(*load_fig5_scene())
    F = build_functional_graph(
        load_fig5_pid(), keep_hidden=["filter-main"], vocab=load_fig5_vocab()
    )
    m = extract_mapping(match_graphs(S, F, MatchConfig()), S, F)
    expected = load_fig5_expected_mapping()
    items = get_inconsistencies(m, S, F)
    one_unmatched = [it.kind for it in items] == [InconsistencyKind.UNMATCHED_TARGET]

    session = AlignmentSession("fig5", S, F)
    provider = lambda its, sess: Resolution(acceptances=[it.key for it in its])
    _, final_items = run_alignment_loop(session, MatchConfig(), provider)
    verdict(
        "Fig. 5 miniature: perfect match, one unmatched filter, 2-round acceptance",
        m.assign == expected.assign
        and m.unmatched_target == ("filter-main",)
        and one_unmatched
        and session.round == 2
        and open_items(final_items) == [],
        f"assign ok={m.assign == expected.assign}, rounds={session.round}",
    )


# ---------------------------------------------------------------------------
# inconsistency detection
# ---------------------------------------------------------------------------


def test_inconsistency_completeness():
    rng = np.random.default_rng(7)
    misses = []
    for trial in range(300):
        mode = trial % 3
        n = int(rng.integers(6, 16))
        A, labels = random_connected_graph(rng, n, 0.3)
        S = graph_from_adjacency(A, labels, "s")
        F, perm = permuted_copy(A, labels, rng)
        pairs = {f"s{i:03d}": f"f{perm[i]:03d}" for i in range(n)}
        if mode == 0:  # mapping collision
            pairs["s000"] = pairs["s001"]
            expect = InconsistencyKind.COLLISION
        elif mode == 1:  # node deletion
            del pairs["s000"]
            S = AlignmentGraph.create(
                [nd for nd in S.nodes if nd[0] != "s000"],
                [e for e in S.edges if "s000" not in e],
                S.provenance,
            )
            expect = InconsistencyKind.UNMATCHED_TARGET
        else:  # edge deletion in F
            a, b = sorted(S.edges)[int(rng.integers(0, len(S.edges)))]
            gone = tuple(sorted((pairs[a], pairs[b])))
            F = AlignmentGraph.create(
                list(F.nodes), [e for e in F.edges if e != gone], F.provenance
            )
            expect = InconsistencyKind.EDGE_VIOLATION
        m = Mapping(assign=pairs, confidence={s: 1.0 for s in pairs})
        kinds = {it.kind for it in get_inconsistencies(m, S, F)}
        if expect not in kinds:
            misses.append(f"trial {trial} mode {mode}")
    verdict(
        "planted collision/deletion perturbations all detected over 300 trials",
        not misses,
        misses[0] if misses else "300/300",
    )


# ---------------------------------------------------------------------------
# solver numerics
# ---------------------------------------------------------------------------


def test_solver_numerics():
    rng = np.random.default_rng(99)
    worst_marginal, worst_rise = 0.0, 0.0
    for _ in range(10):
        n = int(rng.integers(5, 35))
        A, labels = random_connected_graph(rng, n, 0.2)
        S = graph_from_adjacency(A, labels, "s")
        F, _ = permuted_copy(A, labels, rng)
        coupling = match_graphs(S, F, MatchConfig())
        T = coupling.plan
        p, q = np.full(n, 1 / n), np.full(n, 1 / n)
        worst_marginal = max(
            worst_marginal,
            np.abs(T.sum(axis=1) - p).max(),
            np.abs(T.sum(axis=0) - q).max(),
        )
        trace = np.asarray(coupling.objective_trace)
        worst_rise = max(worst_rise, float(np.diff(trace).max(initial=0.0)))

    h, worst_grad = 1e-5, 0.0
    for _ in range(20):
        BS = [np.clip((x := rng.random((6, 6))) + x.T, 0, 1) for _ in range(3)]
        BF = [np.clip((x := rng.random((6, 6))) + x.T, 0, 1) for _ in range(3)]
        bS, bF = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        T = rng.random((6, 6))
        T /= T.sum()
        M = rng.random((6, 6))
        gS, gF = weight_gradients(BS, BF, bS, bF, T, M)
        for which, beta, grad in (("S", bS, gS), ("F", bF, gF)):
            for l in range(3):
                e = np.zeros(3)
                e[l] = h
                args = ((beta + e, bF) if which == "S" else (bS, beta + e))
                hi = gw_objective(combine_bases(BS, args[0]), combine_bases(BF, args[1]), T, M)
                args = ((beta - e, bF) if which == "S" else (bS, beta - e))
                lo = gw_objective(combine_bases(BS, args[0]), combine_bases(BF, args[1]), T, M)
                fd = (hi - lo) / (2 * h)
                rel = abs(fd - grad[l]) / max(abs(fd), abs(grad[l]), 1e-12)
                worst_grad = max(worst_grad, rel)
    verdict(
        "solver numerics: marginals 1e-6, monotone trace 1e-6, FD gradients 1e-3",
        worst_marginal <= 1e-6 and worst_rise <= 1e-6 and worst_grad < 1e-3,
        f"marginal {worst_marginal:.1e}, rise {worst_rise:.1e}, grad {worst_grad:.1e}",
    )


# ---------------------------------------------------------------------------
# artifacts + scale
# ---------------------------------------------------------------------------


def test_cmd_match_determinism(tmp_path):
    pipes, eqs = load_fig5_scene()
    (tmp_path / "scene.json").write_text(json.dumps(scene_to_dict(pipes, eqs)))
    (tmp_path / "pid.json").write_text(json.dumps(raw_pid_to_dict(load_fig5_pid())))
    (tmp_path / "vocab.txt").write_text("tank\npump\nvalve\nfilter\n")
    assert main(["build-scene", str(tmp_path / "scene.json"), "-o", str(tmp_path / "S.json")]) == 0
    assert (
        main(
            [
                "build-functional",
                str(tmp_path / "pid.json"),
                "--vocab",
                str(tmp_path / "vocab.txt"),
                "--keep-hidden",
                "filter-main",
                "-o",
                str(tmp_path / "F.json"),
            ]
        )
        == 0
    )
    for run in ("r1", "r2"):
        assert (
            main(
                [
                    "match",
                    str(tmp_path / "S.json"),
                    str(tmp_path / "F.json"),
                    "-o",
                    str(tmp_path / run),
                    "--seed",
                    "11",
                ]
            )
            == 0
        )
    stable = all(
        (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
        for name in ("mapping.json", "coupling.bin", "coupling.bin.json", "report.json")
    )
    verdict("cmd_match artifacts byte-identical across seeded runs", stable)


def test_scale_smoke_n500():
    rng = np.random.default_rng(5)
    A, labels = random_connected_graph(rng, 500, 0.02)
    S = graph_from_adjacency(A, labels, "s")
    F, _ = permuted_copy(A, labels, rng)
    t0 = time.monotonic()
    coupling = match_graphs(S, F, MatchConfig())
    elapsed = time.monotonic() - t0
    finite = bool(
        np.isfinite(coupling.plan).all()
        and np.isfinite(np.asarray(coupling.objective_trace)).all()
    )
    verdict(
        "n=500 matching finishes free of NaN inside 5 minutes",
        finite and elapsed < 300.0,
        f"{elapsed:.1f}s, finite={finite}",
    )
