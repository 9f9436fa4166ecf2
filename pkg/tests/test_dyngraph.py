import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsl_lab.dyngraph import (
    KIND_PAIR,
    build_graph,
    build_overlap_graph,
    build_tree,
    check_pairs,
    cyclic_order,
    dist,
    dist_many,
    export_dot,
    graph_to_json,
    gromov_delta,
    pair_class,
    qi_check,
    relation_loops,
    sphere_counts,
    tree_size,
)
from bsl_lab.errors import DepthTooLarge, IncompleteLink, OutOfBuiltRegion
from oracles import group_spheres, matrix_key, word_matrix


@pytest.fixture(scope="module")
def spheres(octagon):
    return group_spheres(octagon, None, 6)


# ------------------------------------------------------------------ tree


def test_tree_size_level_two(scheme):
    t = build_tree(scheme, 2)
    assert t.n_vertices == 65 == tree_size(8, 2)


def test_children_exclude_inverse(scheme):
    t = build_tree(scheme, 2)
    labels = sorted(int(x) for x in t.label[t.children(t.find((1,)))])
    assert labels == [1, 2, 3, 4, 6, 7, 8]


def test_reverse_label(scheme):
    t = build_tree(scheme, 2)
    assert t.reverse_label(t.find((1, 6))) == 2


def test_every_inner_vertex_has_2n_minus_1_children(scheme):
    t = build_tree(scheme, 3)
    for v in range(1, int(t.level_start[3])):
        assert len(t.children(v)) == 7


def test_tree_guard(scheme):
    with pytest.raises(DepthTooLarge):
        build_tree(scheme, 6, max_vertices=1000)


# ------------------------------------------------------------------ fold


def test_pair_classes_without_prefix(scheme, graph7):
    level4 = graph7.sphere(4)
    pairs = [int(c) for c in level4 if graph7.kind[c] == KIND_PAIR]
    assert len(pairs) == 8
    for j in scheme.labels:
        c = pair_class(graph7, (), j)
        assert c in pairs
        assert graph7.words(c) == (scheme.gamma_word(j), scheme.delta_word(j))


def test_v_tilde_one(graph7):
    c = graph7.find((1, 6, 3, 8))
    assert graph7.find((8, 3, 6, 1)) == c
    assert graph7.level(c) == 4
    # the two forbidden continuations are the incoming edges
    for x in (4, 5):
        assert graph7.level(int(graph7.nbr[c, x - 1])) == 3


def test_pair_pattern_everywhere(scheme, graph7):
    for c in np.flatnonzero(graph7.kind == KIND_PAIR):
        left, right = graph7.words(int(c))
        j = int(graph7.anchor[c])
        k = scheme.k(j)
        assert len(left) == len(right)
        assert left[:-k] == right[:-k]
        assert left[-k:] == scheme.gamma_word(j)
        assert right[-k:] == scheme.delta_word(j)


def test_at_most_two_words(graph7):
    assert set(np.unique(graph7.nwords)) <= {1, 2}


def test_constant_valency(graph7):
    full = graph7.full_link()
    assert np.all(graph7.degree(full) == 8)


def test_no_sphere_edges(graph7):
    inner = graph7.full_link()
    lv = graph7.level(inner)
    nb = graph7.nbr[inner]
    assert np.all(np.abs(graph7.level(nb) - lv[:, None]) == 1)


def test_numeric_pair_checks(gmap, graph7):
    rep = check_pairs(gmap, graph7)
    assert rep.n_pairs > 0
    assert rep.ok, rep.failures[:5]


def test_default_splits_match_map(scheme, gmap, graph7):
    g = build_graph(scheme, 6)
    assert np.array_equal(np.diff(g.level_start), np.diff(graph7.level_start[:8]))


# ------------------------------------------------------------------ local structure


def test_ring_root(graph7):
    assert [x for x, _ in cyclic_order(graph7, 0)] == list(range(1, 9))


@pytest.mark.parametrize("j", range(1, 9))
def test_ring_single_letter(scheme, graph7, j):
    ring = [x for x, _ in cyclic_order(graph7, graph7.find((j,)))]
    assert ring[0] == scheme.zeta[scheme.iota[j]]
    assert ring[-2] == scheme.gamma[j]
    assert ring[-1] == scheme.iota[j]


def test_ring_pair_class(graph7):
    ring = [x for x, _ in cyclic_order(graph7, graph7.find((1, 6, 3, 8)))]
    assert ring[:2] == [4, 5]


def test_ring_incomplete(graph7):
    with pytest.raises(IncompleteLink):
        cyclic_order(graph7, int(graph7.level_start[7]))


def test_relation_loops_root(scheme, graph7):
    loops = relation_loops(graph7, 0)
    assert len(loops) == 8
    assert all(len(lp.labels) == 8 for lp in loops)
    z1 = next(lp for lp in loops if lp.j == 1)
    assert z1.labels[:4] == scheme.gamma_word(1)
    assert z1.labels[4:] == tuple(scheme.iota[t] for t in reversed(scheme.delta_word(1)))


def test_relation_loops_interior(graph7):
    for c in (1, 9, 100, 400):
        loops = relation_loops(graph7, c)
        assert len(loops) == 8
        assert all(lp.vertices[0] == lp.vertices[-1] == c for lp in loops)


# ------------------------------------------------------------------ metric


def test_dist_examples(scheme, graph7):
    for j in scheme.labels:
        assert dist(graph7, 0, graph7.find((j,))) == 1
    assert dist(graph7, 0, graph7.find((1, 6, 3, 8))) == 4
    t = build_tree(scheme, 3)
    u, v = (8, 3, 6), (1, 6, 3)
    assert t.dist(t.find(u), t.find(v)) == 6
    assert dist(graph7, graph7.find(u), graph7.find(v)) == 2


def test_spheres_match_fuchsian_group(graph7, spheres):
    sizes, _ = spheres
    assert np.diff(graph7.level_start[:8]).tolist() == sizes


def test_word_count_dp(scheme, graph7):
    # the state count tracks real words, i.e. the vertices of the overlap graph
    assert sphere_counts(scheme, 7) == graph7.word_count.tolist()


def test_classes_are_distinct_group_elements(graph7, octagon, spheres):
    _, lengths = spheres
    for c in graph7.ball_root(5):
        key = matrix_key(word_matrix(octagon, graph7.canonical(int(c))))
        assert lengths[key] == graph7.level(int(c))
    # same count of classes and elements up to radius 5
    assert int(graph7.level_start[6]) == sum(1 for v in lengths.values() if v <= 5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dist_matches_fuchsian_lengths(graph7, octagon, spheres, seed):
    _, lengths = spheres
    rng = np.random.default_rng(seed)
    u, v = (int(x) for x in rng.integers(0, int(graph7.level_start[4]), 2))
    mu = word_matrix(octagon, graph7.canonical(u))
    mv = word_matrix(octagon, graph7.canonical(v))
    assert dist(graph7, u, v) == lengths[matrix_key(mv @ np.linalg.inv(mu))]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dist_symmetric_and_triangle(graph7, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.integers(0, int(graph7.level_start[4]), (3, 8))
    dab = dist_many(graph7, a, b)
    assert np.array_equal(dab, dist_many(graph7, b, a))
    assert np.all(dab <= dist_many(graph7, a, c) + dist_many(graph7, c, b))


def test_ball_radius_guard(graph7):
    with pytest.raises(OutOfBuiltRegion):
        graph7.ball_root(8)


# ------------------------------------------------------------------ overlap graph and probes


@pytest.fixture(scope="module")
def overlap(gmap):
    return build_overlap_graph(gmap, 5)


def test_overlap_level_counts(overlap):
    counts = overlap.sphere_counts().tolist()
    assert counts[:3] == [1, 8, 56]


def test_overlap_spheres_are_cycles(overlap):
    for lv in range(1, overlap.depth + 1):
        lo, hi = overlap.level_start[lv], overlap.level_start[lv + 1]
        v, steps = lo, 0
        while True:
            v = int(overlap.next_on_sphere[v])
            steps += 1
            if v == lo:
                break
        assert steps == hi - lo
        assert np.array_equal(overlap.prev_on_sphere[overlap.next_on_sphere[lo:hi]],
                              np.arange(lo, hi))


def test_qi_check(overlap, graph7):
    rep = qi_check(overlap, graph7, samples=300)
    assert rep.K == 4
    assert rep.ok, rep


def test_delta_tree_is_zero(scheme):
    t = build_tree(scheme, 4)
    assert gromov_delta(t, 4, samples=6, targets=500) == 0


def test_delta_small_ball(graph7):
    assert gromov_delta(graph7, 1) <= 1


# ------------------------------------------------------------------ export


def test_dot_is_deterministic(graph7):
    a = export_dot(graph7, 2)
    assert a == export_dot(graph7, 2)
    assert "before folding: 65" in a
    assert a.count("->") == 64


def test_dot_pair_labels(graph7):
    text = export_dot(graph7, 4)
    assert 'label="8,3,6,1 | 1,6,3,8"' in text


def test_json_dump(graph7):
    import json

    doc = json.loads(graph_to_json(graph7, 1))
    assert len(doc["classes"]) == 9
    assert doc["classes"][0]["words"] == [[]]
