"""Inconsistency detection, the resolution loop, hidden-object localization."""

import numpy as np
import pytest

from pidalign import (
    AlignmentGraph,
    AlignmentSession,
    GraphEdit,
    Inconsistency,
    InconsistencyKind,
    InconsistencyStatus,
    InvalidGraphError,
    Mapping,
    MatchConfig,
    MaxRoundsExceededError,
    NeighborsUnmatchedError,
    PipeElement,
    PipeKind,
    Provenance,
    Resolution,
    UnknownNodeError,
    build_functional_graph,
    build_scene_graph,
    get_inconsistencies,
    infer_hidden_location,
    open_items,
    report_to_dict,
    run_alignment_loop,
)
from pidalign.consistency import EditProvider  # noqa: F401  (documented alias)
from pidalign.fixtures import (
    load_fig5_expected_mapping,
    load_fig5_pid,
    load_fig5_scene,
    load_fig5_vocab,
)
from pidalign.graph import equipment, pipe_junction, pipe_run
from util import graph_from_adjacency, permuted_copy, random_connected_graph


def graph(prefix, labels, edges, provenance=Provenance.SCENE):
    nodes = [(f"{prefix}{i}", attr) for i, attr in enumerate(labels)]
    return AlignmentGraph.create(
        nodes, [(f"{prefix}{a}", f"{prefix}{b}") for a, b in edges], provenance
    )


def total_mapping(S, assignments):
    return Mapping(assign=dict(assignments), confidence={s: 1.0 for s, _ in assignments})


# ---------------------------------------------------------------------------
# detection definitions
# ---------------------------------------------------------------------------


def test_collision_detected_per_shared_target():
    S = graph("s", [equipment("pump"), equipment("pump")], [])
    F = graph("f", [equipment("pump"), equipment("pump")], [], Provenance.FUNCTIONAL)
    m = total_mapping(S, [("s0", "f0"), ("s1", "f0")])
    items = get_inconsistencies(m, S, F)
    collisions = [it for it in items if it.kind is InconsistencyKind.COLLISION]
    assert len(collisions) == 1
    assert collisions[0].payload == ("f0", ("s0", "s1"))
    assert collisions[0].key == "collision:f0"


def test_unmatched_target_detected():
    S = graph("s", [equipment("pump")], [])
    F = graph("f", [equipment("pump"), equipment("filter")], [], Provenance.FUNCTIONAL)
    m = total_mapping(S, [("s0", "f0")])
    items = get_inconsistencies(m, S, F)
    assert [it.payload for it in items] == [("f1",)]
    assert items[0].kind is InconsistencyKind.UNMATCHED_TARGET
    assert items[0].key == "unmatched-target:f1"


def test_edge_violation_detected():
    S = graph("s", [equipment("pump"), equipment("valve")], [(0, 1)])
    F = graph("f", [equipment("pump"), equipment("valve")], [], Provenance.FUNCTIONAL)
    m = total_mapping(S, [("s0", "f0"), ("s1", "f1")])
    items = get_inconsistencies(m, S, F)
    assert len(items) == 1
    assert items[0].kind is InconsistencyKind.EDGE_VIOLATION
    assert items[0].payload == (("s0", "s1"), ("f0", "f1"))
    assert items[0].key == "edge-violation:s0-s1"


def test_edge_mapped_to_single_node_is_not_a_violation():
    # both endpoints sharing a target is a collision, not an edge violation
    S = graph("s", [equipment("pump"), equipment("pump")], [(0, 1)])
    F = graph("f", [equipment("pump")], [], Provenance.FUNCTIONAL)
    m = total_mapping(S, [("s0", "f0"), ("s1", "f0")])
    items = get_inconsistencies(m, S, F)
    assert [it.kind for it in items] == [InconsistencyKind.COLLISION]


def test_accepted_records_keep_status_and_leave_loop_count():
    S = graph("s", [equipment("pump")], [])
    F = graph("f", [equipment("pump"), equipment("filter")], [], Provenance.FUNCTIONAL)
    m = total_mapping(S, [("s0", "f0")])
    items = get_inconsistencies(m, S, F, accepted={"unmatched-target:f1"})
    assert len(items) == 1
    assert items[0].status is InconsistencyStatus.ACCEPTED
    assert open_items(items) == []


def test_detection_order_is_kind_then_ids():
    S = graph(
        "s",
        [equipment("pump"), equipment("pump"), equipment("valve"), equipment("tank")],
        [(2, 3)],
    )
    F = graph(
        "f",
        [equipment("pump"), equipment("valve"), equipment("tank"), equipment("filter")],
        [],
        Provenance.FUNCTIONAL,
    )
    m = total_mapping(S, [("s0", "f0"), ("s1", "f0"), ("s2", "f1"), ("s3", "f2")])
    kinds = [it.kind for it in get_inconsistencies(m, S, F)]
    assert kinds == [
        InconsistencyKind.COLLISION,
        InconsistencyKind.UNMATCHED_TARGET,
        InconsistencyKind.EDGE_VIOLATION,
    ]


def test_true_bijection_on_isomorphic_pair_is_clean():
    rng = np.random.default_rng(8)
    for seed in range(10):
        A, labels = random_connected_graph(rng, 9, 0.4)
        S = graph_from_adjacency(A, labels, "s")
        F, perm = permuted_copy(A, labels, rng)
        m = total_mapping(
            S, [(f"s{i:03d}", f"f{perm[i]:03d}") for i in range(len(labels))]
        )
        assert get_inconsistencies(m, S, F) == []


def test_partial_mapping_rejected():
    S = graph("s", [equipment("pump"), equipment("valve")], [(0, 1)])
    F = graph("f", [equipment("pump")], [], Provenance.FUNCTIONAL)
    with pytest.raises(InvalidGraphError):
        get_inconsistencies(total_mapping(S, [("s0", "f0")]), S, F)


def test_mapping_with_unknown_ids_rejected():
    S = graph("s", [equipment("pump")], [])
    F = graph("f", [equipment("pump")], [], Provenance.FUNCTIONAL)
    with pytest.raises(UnknownNodeError):
        get_inconsistencies(total_mapping(S, [("s0", "ghost")]), S, F)


def test_report_serialization_shape():
    S = graph("s", [equipment("pump")], [])
    F = graph("f", [equipment("pump"), equipment("filter")], [], Provenance.FUNCTIONAL)
    items = get_inconsistencies(total_mapping(S, [("s0", "f0")]), S, F)
    d = report_to_dict(items, round_no=3)
    assert d["round"] == 3
    assert d["items"][0]["kind"] == "unmatched-target"
    assert d["items"][0]["payload"] == {"target": "f1"}
    assert d["items"][0]["status"] == "open"


# ---------------------------------------------------------------------------
# equivalence and completeness properties
# ---------------------------------------------------------------------------


def consistency_predicate(m, S, F):
    """Direct statement: injective + surjective + edge-preserving."""
    targets = list(m.assign.values())
    injective = len(set(targets)) == len(targets)
    surjective = set(targets) == set(F.node_ids)
    edge_preserving = all(
        m.assign[a] == m.assign[b] or F.has_edge(m.assign[a], m.assign[b])
        for a, b in S.edges
    )
    return injective and surjective and edge_preserving


def test_zero_open_iff_bijective_edge_preserving():
    rng = np.random.default_rng(23)
    clean = broken = 0
    for trial in range(120):
        n = int(rng.integers(4, 9))
        A, labels = random_connected_graph(rng, n, 0.45)
        S = graph_from_adjacency(A, labels, "s")
        F, perm = permuted_copy(A, labels, rng)
        if trial % 3 == 0:
            # true bijection: must be clean
            pairs = [(f"s{i:03d}", f"f{perm[i]:03d}") for i in range(n)]
        else:
            # random total map: usually violates something
            pairs = [
                (f"s{i:03d}", f"f{int(rng.integers(0, n)):03d}") for i in range(n)
            ]
        m = total_mapping(S, pairs)
        no_open = open_items(get_inconsistencies(m, S, F)) == []
        assert no_open == consistency_predicate(m, S, F), f"trial {trial}"
        clean += no_open
        broken += not no_open
    assert clean > 0 and broken > 0  # both directions exercised


def test_planted_perturbations_are_detected():
    rng = np.random.default_rng(42)
    for trial in range(60):
        n = int(rng.integers(5, 10))
        A, labels = random_connected_graph(rng, n, 0.4)
        S = graph_from_adjacency(A, labels, "s")
        F, perm = permuted_copy(A, labels, rng)
        pairs = {f"s{i:03d}": f"f{perm[i]:03d}" for i in range(n)}
        mode = trial % 3
        if mode == 0:  # duplicate mapping
            a, b = rng.choice(n, size=2, replace=False)
            pairs[f"s{a:03d}"] = pairs[f"s{b:03d}"]
            expect = InconsistencyKind.COLLISION
        elif mode == 1:  # node deleted from S
            victim = f"s{int(rng.integers(0, n)):03d}"
            S = AlignmentGraph.create(
                [(i, a) for i, a in S.nodes if i != victim],
                [e for e in S.edges if victim not in e],
                S.provenance,
            )
            del pairs[victim]
            expect = InconsistencyKind.UNMATCHED_TARGET
        else:  # edge deleted from F
            edges = sorted(S.edges)
            s1, s2 = edges[int(rng.integers(0, len(edges)))]
            f1, f2 = pairs[s1], pairs[s2]
            F = AlignmentGraph.create(
                list(F.nodes),
                [e for e in F.edges if set(e) != {f1, f2}],
                F.provenance,
            )
            expect = InconsistencyKind.EDGE_VIOLATION
        m = Mapping(assign=pairs, confidence={s: 1.0 for s in pairs})
        kinds = {it.kind for it in get_inconsistencies(m, S, F)}
        assert expect in kinds, f"trial {trial} mode {mode}"


# ---------------------------------------------------------------------------
# resolution loop
# ---------------------------------------------------------------------------


def spec_pair():
    """Isomorphic S/F with distinct labels, aligned uniquely."""
    labels = [equipment("pump"), equipment("valve"), equipment("tank")]
    S = graph("s", labels, [(0, 1), (1, 2)])
    F = graph("f", labels, [(0, 1), (1, 2)], Provenance.FUNCTIONAL)
    return S, F


def test_consistent_pair_terminates_first_round():
    S, F = spec_pair()
    session = AlignmentSession("t1", S, F)
    calls = []

    def provider(items, sess):
        calls.append(items)
        return Resolution()

    mapping, items = run_alignment_loop(session, MatchConfig(outer_iters=20), provider)
    assert session.round == 1
    assert calls == []
    assert items == []
    assert mapping.assign == {"s0": "f0", "s1": "f1", "s2": "f2"}


def test_loop_without_provider_reports_single_round():
    S, F = spec_pair()
    F2 = AlignmentGraph.create(
        list(F.nodes) + [("f9", equipment("filter"))], list(F.edges), F.provenance
    )
    session = AlignmentSession("t2", S, F2)
    mapping, items = run_alignment_loop(session, MatchConfig(outer_iters=20), None)
    assert session.round == 1
    assert [it.key for it in open_items(items)] == ["unmatched-target:f9"]


def test_spurious_edge_removed_by_provider():
    S, F = spec_pair()
    spoiled = AlignmentGraph.create(list(S.nodes), list(S.edges) + [("s0", "s2")], S.provenance)
    session = AlignmentSession("t3", spoiled, F)
    seen = []

    def provider(items, sess):
        seen.append([it.key for it in items])
        assert items[0].kind is InconsistencyKind.EDGE_VIOLATION
        (s1, s2), _ = items[0].payload
        return Resolution(edits_source=[GraphEdit.remove_edge(s1, s2)])

    mapping, items = run_alignment_loop(session, MatchConfig(outer_iters=20), provider)
    assert session.round == 2
    assert seen == [["edge-violation:s0-s2"]]
    assert open_items(items) == []
    assert not session.source.has_edge("s0", "s2")
    assert session.source.version == 1  # one edit batch applied


def test_acceptance_terminates_with_accepted_record():
    S, F = spec_pair()
    F2 = AlignmentGraph.create(
        list(F.nodes) + [("f9", equipment("filter"))], list(F.edges), F.provenance
    )
    session = AlignmentSession("t4", S, F2)

    def provider(items, sess):
        return Resolution(acceptances=[it.key for it in items])

    mapping, items = run_alignment_loop(session, MatchConfig(outer_iters=20), provider)
    assert session.round == 2
    assert [it.status for it in items] == [InconsistencyStatus.ACCEPTED]
    # loop soundness: re-detection with the session's accepted set yields
    # no open records
    again = get_inconsistencies(mapping, session.source, session.target, session.accepted)
    assert open_items(again) == []


def test_pin_resolves_symmetric_collision():
    labels = [equipment("pump"), equipment("pump"), equipment("valve")]
    S = graph("s", labels, [(0, 2), (1, 2)])
    F = graph("f", labels, [(0, 2), (1, 2)], Provenance.FUNCTIONAL)
    session = AlignmentSession("t5", S, F)

    def provider(items, sess):
        collisions = [it for it in items if it.kind is InconsistencyKind.COLLISION]
        if not collisions:
            return Resolution(acceptances=[it.key for it in items])
        target, sources = collisions[0].payload
        # keep the first source on the collided target, pin the second
        # onto some unmatched target
        unmatched = [
            it.payload[0] for it in items if it.kind is InconsistencyKind.UNMATCHED_TARGET
        ]
        return Resolution(pins=[(sources[1], unmatched[0])])

    mapping, items = run_alignment_loop(session, MatchConfig(outer_iters=30), provider)
    assert open_items(items) == []
    assert sorted(mapping.assign.values()) == ["f0", "f1", "f2"]
    assert session.pins  # the pin is recorded on the session


def test_failed_edit_rolls_back_session():
    S, F = spec_pair()
    F2 = AlignmentGraph.create(
        list(F.nodes) + [("f9", equipment("filter"))], list(F.edges), F.provenance
    )
    session = AlignmentSession("t6", S, F2)

    def provider(items, sess):
        return Resolution(edits_source=[GraphEdit.remove_node("ghost")])

    with pytest.raises(UnknownNodeError):
        run_alignment_loop(session, MatchConfig(outer_iters=20), provider)
    assert session.source is S  # rolled back, never swapped
    assert session.target is F2


def test_stalled_provider_raises_no_progress():
    S, F = spec_pair()
    F2 = AlignmentGraph.create(
        list(F.nodes) + [("f9", equipment("filter"))], list(F.edges), F.provenance
    )
    session = AlignmentSession("t7", S, F2)

    def provider(items, sess):
        return Resolution()  # neither edits nor acceptances

    with pytest.raises(MaxRoundsExceededError, match="no progress"):
        run_alignment_loop(session, MatchConfig(outer_iters=20), provider)


def test_round_cap_raises():
    # a persistent collision: two identical pumps, one target pump
    S = graph("s", [equipment("pump"), equipment("pump")], [])
    F = graph("f", [equipment("pump")], [], Provenance.FUNCTIONAL)
    session = AlignmentSession("t8", S, F)
    flip = []

    def provider(items, sess):
        # "progress" of the busy-work kind: toggle an S edge every round
        flip.append(1)
        if len(flip) % 2:
            return Resolution(edits_source=[GraphEdit.add_edge("s0", "s1")])
        return Resolution(edits_source=[GraphEdit.remove_edge("s0", "s1")])

    with pytest.raises(MaxRoundsExceededError, match="did not converge"):
        run_alignment_loop(session, MatchConfig(outer_iters=10), provider, max_rounds=4)
    assert session.round == 4


def test_checkpoints_are_written_per_round(tmp_path):
    S, F = spec_pair()
    F2 = AlignmentGraph.create(
        list(F.nodes) + [("f9", equipment("filter"))], list(F.edges), F.provenance
    )
    session = AlignmentSession("t9", S, F2)

    def provider(items, sess):
        return Resolution(acceptances=[it.key for it in items])

    run_alignment_loop(
        session, MatchConfig(outer_iters=20), provider, checkpoint_dir=tmp_path
    )
    for rnd in (1, 2):
        rdir = tmp_path / "rounds" / str(rnd)
        for name in ("S.json", "F.json", "mapping.json", "report.json"):
            assert (rdir / name).exists(), f"round {rnd} missing {name}"
    assert len(session.history) == 2
    assert session.history[0]["round"] == 1
    assert session.history[0]["report"]["items"][0]["key"] == "unmatched-target:f9"


# ---------------------------------------------------------------------------
# Fig. 5 miniature: pumped filter line with a bypass
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def fig5():
    pipes, eqs = load_fig5_scene()
    vocab = load_fig5_vocab()
    S = build_scene_graph(pipes, eqs)
    F = build_functional_graph(load_fig5_pid(), keep_hidden=["filter-main"], vocab=vocab)
    return pipes, eqs, vocab, S, F


def test_fig5_matching_is_perfect(fig5):
    pipes, eqs, vocab, S, F = fig5
    session = AlignmentSession("fig5", S, F)
    mapping, items = run_alignment_loop(
        session, MatchConfig(), edit_provider=None, vocab=vocab
    )
    expected = load_fig5_expected_mapping()
    assert mapping.assign == expected.assign
    assert mapping.unmatched_target == ("filter-main",)
    keys = [it.key for it in items]
    assert keys == ["unmatched-target:filter-main"]


def test_fig5_acceptance_loop_converges_in_two_rounds(fig5):
    pipes, eqs, vocab, S, F = fig5
    session = AlignmentSession("fig5-loop", S, F)

    def provider(items, sess):
        assert [it.key for it in items] == ["unmatched-target:filter-main"]
        return Resolution(acceptances=["unmatched-target:filter-main"])

    mapping, items = run_alignment_loop(session, MatchConfig(), provider, vocab=vocab)
    assert session.round == 2
    assert [(it.key, it.status) for it in items] == [
        ("unmatched-target:filter-main", InconsistencyStatus.ACCEPTED)
    ]
    assert mapping.assign == load_fig5_expected_mapping().assign


def test_fig5_hidden_filter_located_between_tees(fig5):
    pipes, eqs, vocab, S, F = fig5
    session = AlignmentSession("fig5-locate", S, F)
    mapping, _ = run_alignment_loop(session, MatchConfig(), None, vocab=vocab)
    primitives = {p.id: p for p in pipes}
    point, radius = infer_hidden_location("filter-main", mapping, F, primitives)
    # facing tee ports are at x = 1.56 and x = 2.32
    np.testing.assert_allclose(point, [1.94, 0.0, 0.0], atol=1e-9)
    assert radius == pytest.approx(0.38)
    # the located region lies inside the unsegmented span of the line
    assert 1.56 <= point[0] <= 2.32


# ---------------------------------------------------------------------------
# infer_hidden_location
# ---------------------------------------------------------------------------


def run_primitive(id, a, b, diameter=0.08):
    return PipeElement(
        id=id, kind=PipeKind.CYLINDER, extremities=np.array([a, b], float), diameter=diameter
    )


def filter_between_runs_f():
    return AlignmentGraph.create(
        [
            ("r1", pipe_run()),
            ("filter", equipment("filter")),
            ("r2", pipe_run()),
        ],
        [("r1", "filter"), ("filter", "r2")],
        Provenance.FUNCTIONAL,
    )


def test_two_facing_runs_give_midpoint_and_radius():
    F = filter_between_runs_f()
    m = Mapping(assign={"sa": "r1", "sb": "r2"}, confidence={"sa": 1.0, "sb": 1.0})
    primitives = {
        "sa": run_primitive("sa", (0.5, 0, 0), (1.0, 0, 0)),
        "sb": run_primitive("sb", (1.3, 0, 0), (1.9, 0, 0)),
    }
    point, radius = infer_hidden_location("filter", m, F, primitives)
    # oracle: facing extremities (1,0,0) and (1.3,0,0); centroid and
    # covering radius computed by hand
    np.testing.assert_allclose(point, [1.15, 0, 0], atol=1e-12)
    assert radius == pytest.approx(0.15)


def test_single_neighbor_uses_free_extremity_and_diameter():
    F = AlignmentGraph.create(
        [("r1", pipe_run()), ("filter", equipment("filter"))],
        [("r1", "filter")],
        Provenance.FUNCTIONAL,
    )
    m = Mapping(assign={"sa": "r1", "sb": "x"}, confidence={"sa": 1.0, "sb": 1.0})
    primitives = {
        "sa": run_primitive("sa", (0, 0, 0), (2, 0, 0), diameter=0.11),
        "sb": run_primitive("sb", (-0.5, 0, 0), (-0.1, 0, 0)),
    }
    point, radius = infer_hidden_location("filter", m, F, primitives)
    # the (2,0,0) end is farthest from every other primitive: free end
    np.testing.assert_allclose(point, [2, 0, 0], atol=1e-12)
    assert radius == pytest.approx(0.11)


def test_unmatched_neighbor_cannot_localize():
    F = filter_between_runs_f()
    m = Mapping(assign={"sa": "r1"}, confidence={"sa": 1.0})  # r2 has no preimage
    primitives = {"sa": run_primitive("sa", (0, 0, 0), (1, 0, 0))}
    with pytest.raises(NeighborsUnmatchedError):
        infer_hidden_location("filter", m, F, primitives)


def test_neighbor_without_primitive_cannot_localize():
    F = filter_between_runs_f()
    m = Mapping(assign={"sa": "r1", "sb": "r2"}, confidence={"sa": 1.0, "sb": 1.0})
    primitives = {"sa": run_primitive("sa", (0, 0, 0), (1, 0, 0))}  # sb missing
    with pytest.raises(NeighborsUnmatchedError):
        infer_hidden_location("filter", m, F, primitives)


def test_unknown_target_rejected():
    F = filter_between_runs_f()
    m = Mapping(assign={"sa": "r1"}, confidence={"sa": 1.0})
    with pytest.raises(UnknownNodeError):
        infer_hidden_location("ghost", m, F, {})


def test_isolated_target_cannot_localize():
    F = AlignmentGraph.create(
        [("filter", equipment("filter"))], [], Provenance.FUNCTIONAL
    )
    m = Mapping(assign={"sa": "filter"}, confidence={"sa": 1.0})
    with pytest.raises(NeighborsUnmatchedError):
        infer_hidden_location("filter", m, F, {})
