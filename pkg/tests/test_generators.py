import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsl_lab.circle_map import circ, circ_diff, cutting_orbits, eval_branch, word_interval
from bsl_lab.errors import InterpolationInfeasible
from bsl_lab.generators import (
    GapProfile,
    affine_power_slope,
    coincidence_window,
    count_fixed_points,
    cutting_relation,
    dump_generator_csv,
    eval_gen,
    eval_genword,
    gen_deriv,
    mobius_like,
    neutral_points,
    relation_discrepancy,
)

GRID = np.linspace(0.0, 1.0, 10_000, endpoint=False)


def test_inversion_on_grid(fam):
    s = fam.scheme
    for j in s.labels:
        back = eval_gen(fam, s.iota[j], eval_gen(fam, j, GRID))
        assert np.max(np.abs(circ_diff(back, GRID))) < 1e-8


def test_boundary_derivatives(fam, gmap):
    s = gmap.scheme
    for j in s.labels:
        assert float(gen_deriv(fam, j, gmap.z[j])) == pytest.approx(gmap.lam)
        assert float(gen_deriv(fam, j, gmap.z[s.iota[j]])) == pytest.approx(1 / gmap.lam)


def test_derivative_sandwich(fam, gmap):
    lam = gmap.lam
    for j in fam.scheme.labels:
        d = gen_deriv(fam, j, GRID)
        assert np.all(d >= 1 / lam * (1 - 1e-4)) and np.all(d <= lam * (1 + 1e-4))
        # finite differences agree with the derivative away from kinks
        h = 1e-7
        fd = circ_diff(eval_gen(fam, j, GRID + h), eval_gen(fam, j, GRID)) / h
        assert np.median(np.abs(fd / d - 1)) < 1e-4


def test_one_neutral_point_per_gap(fam):
    for j in fam.scheme.labels:
        logd = np.log(gen_deriv(fam, j, GRID))
        sign = np.sign(logd)
        changes = np.count_nonzero(sign != np.roll(sign, -1))
        assert changes == 2
        for p in neutral_points(fam, j):
            # the gaps are a few 1e-6 long, so probe the sign change just around p
            lo, hi = gen_deriv(fam, j, p - 2e-7), gen_deriv(fam, j, p + 2e-7)
            assert (float(lo) - 1) * (float(hi) - 1) < 0


def test_generator_is_branch_on_its_interval(fam, gmap):
    for j in fam.scheme.labels:
        xs = gmap.z[j] + np.linspace(0, 1, 200, endpoint=False) * gmap.length(j)
        assert np.max(np.abs(circ_diff(eval_gen(fam, j, xs), eval_branch(gmap, j, xs)))) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.floats(0, 1, exclude_max=True))
def test_inverse_pair_word(j, x):
    fam = _family()
    s = fam.scheme
    assert abs(float(circ_diff(eval_genword(fam, (s.iota[j], j), x), x))) < 1e-8


_CACHE = {}


def _family():
    if "fam" not in _CACHE:
        from bsl_lab.circle_map import genus2_map
        from bsl_lab.generators import build_generators

        _CACHE["fam"] = build_generators(genus2_map())
    return _CACHE["fam"]


def test_two_fixed_points(fam):
    for j in fam.scheme.labels:
        assert count_fixed_points(lambda x, j=j: eval_gen(fam, j, x)) == 2
        assert count_fixed_points(mobius_like(fam, j)) == 2


def test_relation_word_at_cutting_point(fam, gmap):
    merged = cutting_orbits(gmap, 1).merged
    rel = cutting_relation(gmap.scheme, 1)
    assert abs(float(circ_diff(eval_genword(fam, rel.right, gmap.z[1]), merged))) < 1e-8
    assert abs(float(circ_diff(eval_genword(fam, rel.left, gmap.z[1]), merged))) < 1e-8


def test_cutting_relation_words(scheme):
    rel = cutting_relation(scheme, 1)
    assert rel.left == (8, 3, 6, 1) and rel.right == (1, 6, 3, 8)
    for j in scheme.labels:
        r = cutting_relation(scheme, j)
        assert len(r.relator) == scheme.ell[j]
        assert len(r.left) == len(r.right) == scheme.k(j)


def test_relation_discrepancy(fam):
    for j in fam.scheme.labels:
        on_window, anywhere = relation_discrepancy(fam, j, 10_000)
        assert on_window < 1e-8
        assert anywhere < 1e-4  # reported, not required to vanish


def test_window_is_pair_of_cylinders(gmap):
    win = coincidence_window(gmap, 1)
    left = word_interval(gmap, (8, 3, 6, 1))
    right = word_interval(gmap, (1, 6, 3, 8))
    assert win.V[0] == pytest.approx(left[0]) and win.V[1] == pytest.approx(right[1])
    assert left[1] == pytest.approx(right[0])
    assert win.c == 1 and win.d == 8
    # U sits strictly inside V around z_1
    lv = float(circ(win.V[1] - win.V[0]))
    lu = float(circ(win.U[1] - win.U[0]))
    assert 0 < lu < lv
    assert float(circ(win.U[0] - win.V[0])) < lv


def test_window_slope(gmap):
    for j in gmap.scheme.labels:
        assert affine_power_slope(gmap, j) == pytest.approx(gmap.lam ** 4, rel=1e-6)


def test_neutral_ordering(fam, gmap):
    s = gmap.scheme
    for j in s.labels:
        zd = gmap.z[s.delta[j]]
        p = float(eval_gen(fam, j, gmap.z[j]))
        n_plus = neutral_points(fam, s.iota[j])[1]
        assert circ(n_plus - zd) < circ(p - zd)
        back = float(eval_gen(fam, s.iota[j], zd))
        n_minus = neutral_points(fam, j)[0]
        assert circ(n_minus - back) < circ(gmap.z[j] - back)


def test_gap_profile_limits():
    prof = GapProfile(0.1, 0.3, 4.0, falling=True)
    assert float(prof.value(np.array([0.1]))[0]) == pytest.approx(0.3, rel=1e-12)
    with pytest.raises(InterpolationInfeasible):
        GapProfile(0.1, 0.5, 4.0, falling=True)


def test_csv_dump(tmp_path, fam):
    p = tmp_path / "phi1.csv"
    dump_generator_csv(fam, 1, p, n=50)
    lines = p.read_text().splitlines()
    assert lines[0] == "x,phi,dphi" and len(lines) == 51
