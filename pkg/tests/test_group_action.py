import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsl_lab.circle_map import circ_diff, eval_map
from bsl_lab.errors import BoundsExhausted, NoAdmissibleInterval, NotFound
from bsl_lab.generators import eval_genword, neutral_points
from bsl_lab.group_action import (
    Exceptional,
    act_edge,
    act_letter,
    act_many,
    act_word,
    build_interval_index,
    check_cocompact,
    check_forward,
    check_freeness,
    check_geometric,
    check_isometry,
    check_loop_sets,
    check_order,
    count_movers,
    find_translator,
    free_reduce,
    interval_act_detail,
    interval_act_letter,
    inverse_word,
    is_identity,
    is_reduced,
    loop_set,
    max_slope_interval,
    orbit_equiv_backward,
    orbit_equiv_forward,
    reduced_words,
    word_class_interval,
)
from oracles import is_identity_matrix, matrix_key, word_matrix


def relator(s, j):
    return s.delta_word(j) + tuple(s.iota[t] for t in reversed(s.gamma_word(j)))


@pytest.fixture(scope="module")
def index(gmap, graph7):
    return build_interval_index(gmap, graph7, 6)


# ------------------------------------------------------------------ words


def test_free_reduce(scheme):
    assert free_reduce(scheme, (1, 5, 2)) == (2,)
    assert free_reduce(scheme, (3, 1, 5, 7)) == ()
    assert is_reduced(scheme, (1, 6, 3, 8))
    assert not is_reduced(scheme, (1, 5))


def test_inverse_word(scheme):
    assert inverse_word(scheme, (1, 6, 3)) == (7, 2, 5)


@pytest.mark.parametrize("n", range(4))
def test_reduced_word_count(scheme, n):
    words = list(reduced_words(scheme, n))
    assert len(words) == (1 if n == 0 else 8 * 7 ** (n - 1))
    assert len(set(words)) == len(words)


# ------------------------------------------------------------------ combinatorial action


def test_act_letter_level_one(graph7):
    f = graph7.find
    assert act_letter(graph7, 1, 0) == f((5,))
    assert act_letter(graph7, 1, f((1,))) == 0
    assert act_letter(graph7, 1, f((3,))) == f((5, 3))


def test_act_letter_pair_class(graph7):
    f = graph7.find
    vt = f((1, 6, 3, 8))
    assert act_letter(graph7, 1, vt) == f((6, 3, 8))
    assert act_letter(graph7, 2, vt) == f((6, 1, 6, 3, 8))


def test_act_many_matches_scalar(graph7):
    B = graph7.ball_root(3)
    for j in (1, 4, 7):
        got = act_many(graph7, j, B)
        assert got.tolist() == [act_letter(graph7, j, int(v)) for v in B]


def test_inverse_pairs_cancel(scheme, graph7):
    B = graph7.ball_root(4)
    for j in scheme.labels:
        back = act_many(graph7, scheme.iota[j], act_many(graph7, j, B))
        assert np.array_equal(back, B)


@pytest.mark.parametrize("j", range(1, 9))
def test_relators_fix_ball(scheme, graph7, j):
    B = graph7.ball_root(3)
    cur = B.copy()
    for x in relator(scheme, j):
        cur = act_many(graph7, x, cur)
    assert np.array_equal(cur, B)


def test_relator_example(scheme, graph7):
    assert relator(scheme, 1) == (1, 6, 3, 8, 5, 2, 7, 4)
    assert is_identity(graph7, (1, 6, 3, 8, 5, 2, 7, 4))


def test_word_problem_small(scheme, graph7):
    assert is_identity(graph7, ())
    for j in scheme.labels:
        assert is_identity(graph7, relator(scheme, j))
    for n in (1, 2, 3):
        assert not any(is_identity(graph7, w) for w in reduced_words(scheme, n))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=1, max_size=6), st.booleans())
def test_word_problem_matches_fuchsian(scheme, graph7, octagon, letters, conjugate_relator):
    w = free_reduce(scheme, letters)
    if conjugate_relator and len(w) <= 1:
        w = w + relator(scheme, letters[0]) + inverse_word(scheme, w)
    got = is_identity(graph7, w)
    assert got == is_identity_matrix(word_matrix(octagon, w))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_action_is_right_multiplication(graph7, octagon, seed, j):
    rng = np.random.default_rng(seed)
    v = int(rng.integers(0, int(graph7.level_start[4])))
    mv = word_matrix(octagon, graph7.canonical(v))
    a = act_letter(graph7, j, v)
    ma = word_matrix(octagon, graph7.canonical(a))
    assert matrix_key(ma) == matrix_key(mv @ np.linalg.inv(octagon[j]))


def test_act_edge_keeps_labels(graph7):
    u = graph7.find((2,))
    v = int(graph7.nbr[u, 6])
    au, av = act_edge(graph7, (1, 3), (u, v))
    assert graph7.nbr[au, 6] == av
    with pytest.raises(ValueError):
        act_edge(graph7, (1,), (0, graph7.find((1, 2))))


def test_find_translator(scheme, graph7):
    f = graph7.find
    assert find_translator(graph7, f((6, 1, 6, 3, 8))) == (6,)
    assert act_word(graph7, (6,), f((6, 1, 6, 3, 8))) == f((1, 6, 3, 8))
    assert act_word(graph7, (2, 3), f((2, 3))) == 0
    for c in graph7.sphere(3)[:50]:
        if graph7.kind[c] == 1:
            assert len(find_translator(graph7, int(c))) == 3


def test_loop_set_image(graph7):
    img = {act_letter(graph7, 1, v) for v in loop_set(graph7, 0)}
    assert img == set(loop_set(graph7, graph7.find((5,))))


# ------------------------------------------------------------------ interval oracle


@pytest.mark.parametrize("j", range(1, 9))
def test_oracle_full_coverage(scheme, graph7, fam, index, j):
    r = interval_act_detail(index, fam, j, graph7.find((j,)))
    assert (r.vertex, r.case) == (0, "1")
    assert r.met == 7


@pytest.mark.parametrize("j", range(1, 9))
def test_oracle_next_interval(scheme, graph7, fam, index, j):
    r = interval_act_detail(index, fam, j, graph7.find((scheme.zeta[j],)))
    assert r.case == "3-i"
    assert r.vertex == graph7.find((scheme.iota[j], scheme.zeta[j]))


def test_oracle_root(graph7, fam, index):
    assert interval_act_detail(index, fam, 3, 0).vertex == graph7.find((7,))


def test_dual_oracle_small_ball(scheme, graph7, fam, index):
    for v in graph7.ball_root(2):
        for j in scheme.labels:
            assert interval_act_letter(index, fam, j, int(v)) == act_letter(graph7, j, int(v))


# ------------------------------------------------------------------ certificates


def test_isometry_small(graph7):
    pairs, bad, _ = check_isometry(graph7, 2)
    assert pairs == 8 * 65 * 65
    assert bad == 0


def test_order_preserved(graph7):
    n, bad = check_order(graph7, 3)
    assert n == 8 * 457 and bad == 0


def test_loop_sets_equivariant(graph7):
    assert check_loop_sets(graph7, [0, 1, 10, 60]) == 0


def test_freeness(graph7):
    n, fails = check_freeness(graph7, 2, 3)
    assert n == 8 + 56 + 392
    assert fails == []


def test_cocompact(graph7):
    n, bad = check_cocompact(graph7, 7)
    assert n == int(graph7.level_start[8]) - 1
    assert bad == 0


def test_movers_finite(graph8):
    movers = count_movers(graph8, graph8.find((1,)), 2)
    assert movers[0] == 1
    # a ball of radius 2 around v_1 lies within distance 5 of the root ball
    assert max(n for n, c in movers.items() if c) == 5


def test_geometric_report(graph7):
    rep = check_geometric(graph7, r=2, samples=8, free_radius=2, free_len=3, cocompact_depth=6)
    assert rep.isometry_failures == rep.order_failures == rep.loop_set_failures == 0
    assert rep.freeness_failures == [] and rep.cocompact_failures == 0
    # depth 7 leaves no room past the mover bound, so finiteness is not certified
    assert not rep.movers_finite and not rep.ok
    assert rep.to_dict()["ok"] is False


# ------------------------------------------------------------------ slope law


def test_slope_two_letters(gmap, fam, graph7):
    word, slope = max_slope_interval(gmap, fam, graph7, (2, 7))
    assert word == (2, 7)
    assert slope == pytest.approx(gmap.lam ** 2, rel=1e-6)


def test_slope_relation_word(scheme, gmap, fam, graph7):
    w = scheme.delta_word(1)
    word, slope = max_slope_interval(gmap, fam, graph7, w)
    assert graph7.find(word) == graph7.find((8, 3, 6, 1))
    assert slope == pytest.approx(gmap.lam ** 4, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=1, max_size=5))
def test_slope_law(scheme, gmap, fam, graph7, letters):
    w = free_reduce(scheme, letters)
    if not w:
        return
    _, slope = max_slope_interval(gmap, fam, graph7, w)
    assert slope == pytest.approx(gmap.lam ** len(w), rel=1e-6)


def test_slope_rejects_unreduced(gmap, graph7):
    with pytest.raises(NoAdmissibleInterval):
        word_class_interval(gmap, graph7, (1, 5))


# ------------------------------------------------------------------ orbit equivalence


def test_backward_single_step(gmap):
    x = 0.3
    y = float(eval_map(gmap, x))
    assert orbit_equiv_backward(gmap, x, y) == (int(gmap.interval_of(x)),)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1, exclude_max=True))
def test_backward_depth_three(gmap, fam, x):
    y = x
    for _ in range(3):
        y = float(eval_map(gmap, y))
    w = orbit_equiv_backward(gmap, x, y)
    assert len(w) <= 6
    assert abs(circ_diff(float(eval_genword(fam, w, x)), y)) < 1e-7


def test_backward_generic_pair(gmap):
    with pytest.raises(NotFound):
        orbit_equiv_backward(gmap, 0.123456, 0.7654321, (4, 4, 1e-9))


@pytest.mark.parametrize("j", range(1, 9))
def test_forward_inside(gmap, fam, j):
    x = float(gmap.z[j] + 0.5 * gmap.lengths[j])
    assert orbit_equiv_forward(gmap, fam, x, j) == (1, 0)


@pytest.mark.parametrize("j", range(1, 9))
def test_forward_neutral_points(fam, gmap, j):
    for p in neutral_points(fam, j):
        r = orbit_equiv_forward(gmap, fam, float(p) + 5e-7, j)
        assert isinstance(r, Exceptional)


@settings(max_examples=80, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.integers(1, 8))
def test_forward_consistency(gmap, fam, x, j):
    if min(abs(circ_diff(x, p)) for p in neutral_points(fam, j)) < 1e-4:
        return
    n, k = orbit_equiv_forward(gmap, fam, x, j)
    assert n <= 64 and k <= 64
    assert check_forward(gmap, fam, x, j, (n, k)) < 1e-7


def test_forward_bounds(gmap, fam):
    # just past a neutral point the relation rewriting needs several rounds
    _, npos = neutral_points(fam, 1)
    raised = 0
    for x in float(npos) + np.linspace(1e-4, 5e-4, 9):
        try:
            orbit_equiv_forward(gmap, fam, float(x), 1, max_iter=1)
        except BoundsExhausted:
            raised += 1
    assert raised > 0
