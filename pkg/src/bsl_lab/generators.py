"""Circle diffeomorphisms phi_j built from the affine model, plus coincidence windows.

Layout of phi_j around the circle, starting at the left end of its expanding
region E_j:

    E_j   slope lam; the branch of I_j, extended affinely by the coincidence
          windows at z_j (on the left) and z_{j+1} (on the right) so that both
          writings of each cutting-point relation are affine there
    G_R   derivative decreasing from lam to 1/lam
    C_j   slope 1/lam; the inverse of the branch of I_{iota(j)} (extended the same way)
    G_L   derivative increasing from 1/lam back to lam

On a gap of length h with image length H the derivative is
lam ** (1 - 2 B(t)) with B(t) = (e^{ct} - 1)/(e^c - 1), where c is fixed by
requiring the integral to equal H. This admits any mean slope H/h strictly
between 1/lam and lam. phi_{iota(j)} is stored as the numerical inverse of phi_j.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from bsl_lab.circle_map import (
    PiecewiseAffineMap,
    circ,
    circ_diff,
    cutting_orbits,
    eval_map,
    word_interval,
)
from bsl_lab.combinatorics import Scheme
from bsl_lab.errors import IndexOutOfRange, InterpolationInfeasible, WindowDegenerate

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_PANELS = 6


def _bump(u, c: float):
    if abs(c) < 1e-9:
        return u
    return np.expm1(c * u) / np.expm1(c)


class GapProfile:
    """Monotone transition of log-derivative across a gap.

    ``falling`` goes from slope lam to 1/lam, otherwise from 1/lam to lam.
    """

    def __init__(self, h: float, H: float, lam: float, falling: bool):
        if h <= 0 or H <= 0:
            raise InterpolationInfeasible(f"gap length {h:.3g} or image length {H:.3g} not positive")
        mean = H / h
        if not 1.0 / lam < mean < lam:
            raise InterpolationInfeasible(
                f"mean slope {mean:.6g} outside ({1 / lam:.6g}, {lam:.6g})")
        self.h, self.H, self.lam, self.sign = h, H, lam, (1.0 if falling else -1.0)
        self.log_lam = np.log(lam)
        f = lambda c: self._integral(np.array([1.0]), c)[0] - mean
        lo, hi = -1.0, 1.0
        while f(lo) * f(hi) > 0:
            lo, hi = 2 * lo, 2 * hi
            if hi > 400:
                raise InterpolationInfeasible("cannot match gap length")
        self.c = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
        # rescale so that the endpoint matches exactly despite quadrature error
        self._scale = H / (h * self._integral(np.array([1.0]), self.c)[0])
        # coarse table that brackets the inverse before the Newton steps
        self._tab_s = np.linspace(0.0, h, 1025)
        self._tab_v = self.value(self._tab_s)

    def _slope(self, u, c):
        return np.exp(self.sign * self.log_lam * (1.0 - 2.0 * _bump(u, c)))

    def _integral(self, u, c):
        """int_0^u slope for u in [0, 1] (vectorised composite Gauss-Legendre)."""
        u = np.asarray(u, dtype=float)
        edges = np.linspace(0.0, 1.0, _PANELS + 1)
        total = np.zeros_like(u)
        for a, b in zip(edges[:-1], edges[1:]):
            lo = np.full(u.shape + (1,), a)
            hi = np.clip(u, a, b)[..., None]
            mid, half = (lo + hi) / 2, (hi - lo) / 2
            nodes = mid + half * _GL_NODES
            total += (half[..., 0]) * (self._slope(nodes, c) @ _GL_WEIGHTS)
        return total

    def value(self, s):
        return self.h * self._scale * self._integral(np.asarray(s) / self.h, self.c)

    def deriv(self, s):
        return self._scale * self._slope(np.asarray(s) / self.h, self.c)

    def inverse(self, y, tol: float = 1e-15):
        y = np.asarray(y, dtype=float)
        k = np.clip(np.searchsorted(self._tab_v, y) - 1, 0, len(self._tab_s) - 2)
        lo, hi = self._tab_s[k], self._tab_s[k + 1]
        s = np.interp(y, self._tab_v, self._tab_s)
        for _ in range(60):
            f = self.value(s) - y
            lo = np.where(f < 0, s, lo)
            hi = np.where(f >= 0, s, hi)
            step = s - f / self.deriv(s)
            s = np.where((step > lo) & (step < hi), step, 0.5 * (lo + hi))
            if np.max(np.abs(f), initial=0.0) < tol:
                break
        return s

    @property
    def neutral(self) -> float:
        """Position inside the gap where the derivative equals 1."""
        # scale * lam**(sign*(1 - 2B)) = 1
        target = 0.5 * (1.0 + self.sign * np.log(self._scale) / self.log_lam)
        c = self.c
        u = target if abs(c) < 1e-9 else np.log1p(target * np.expm1(c)) / c
        return float(u * self.h)


@dataclass
class Generator:
    """phi_j as four pieces in a coordinate t = x - base (mod 1)."""

    j: int
    base: float
    image_base: float
    lam: float
    e: float  # |E_j|
    e_partner: float  # |E_{iota j}|
    right: GapProfile
    left: GapProfile
    inverted: bool = False

    @property
    def dom(self) -> np.ndarray:
        return np.cumsum([0.0, self.e, self.right.h, self.e_partner * self.lam, self.left.h])

    @property
    def img(self) -> np.ndarray:
        return np.cumsum([0.0, self.lam * self.e, self.right.H, self.e_partner, self.left.H])

    def _forward(self, x):
        t = circ(np.asarray(x, dtype=float) - self.base)
        d = self.dom
        t = np.minimum(t, d[4])
        out = np.where(t < d[1], self.lam * t, 0.0)
        seg = (t >= d[1]) & (t < d[2])
        out = np.where(seg, self.lam * self.e + self.right.value(np.clip(t - d[1], 0, self.right.h)), out)
        seg = (t >= d[2]) & (t < d[3])
        out = np.where(seg, self.img[2] + (t - d[2]) / self.lam, out)
        seg = t >= d[3]
        out = np.where(seg, self.img[3] + self.left.value(np.clip(t - d[3], 0, self.left.h)), out)
        return circ(self.image_base + out)

    def _forward_deriv(self, x):
        t = circ(np.asarray(x, dtype=float) - self.base)
        d = self.dom
        out = np.where(t < d[1], self.lam, 1.0 / self.lam)
        seg = (t >= d[1]) & (t < d[2])
        out = np.where(seg, self.right.deriv(np.clip(t - d[1], 0, self.right.h)), out)
        seg = t >= d[3]
        out = np.where(seg, self.left.deriv(np.clip(t - d[3], 0, self.left.h)), out)
        return out

    def _backward(self, y):
        u = circ(np.asarray(y, dtype=float) - self.image_base)
        g = self.img
        u = np.minimum(u, g[4])
        out = np.where(u < g[1], u / self.lam, 0.0)
        seg = (u >= g[1]) & (u < g[2])
        out = np.where(seg, self.e + self.right.inverse(np.clip(u - g[1], 0, self.right.H)), out)
        seg = (u >= g[2]) & (u < g[3])
        out = np.where(seg, self.dom[2] + (u - g[2]) * self.lam, out)
        seg = u >= g[3]
        out = np.where(seg, self.dom[3] + self.left.inverse(np.clip(u - g[3], 0, self.left.H)), out)
        return circ(self.base + out)

    def __call__(self, x):
        return self._backward(x) if self.inverted else self._forward(x)

    def deriv(self, x):
        if self.inverted:
            return 1.0 / self._forward_deriv(self._backward(x))
        return self._forward_deriv(x)

    def neutral_points(self) -> tuple[float, float]:
        """(N^-, N^+): neutral point left of the expanding region, then right of it."""
        d = self.dom
        n_left = circ(self.base + d[3] + self.left.neutral)
        n_right = circ(self.base + d[1] + self.right.neutral)
        if not self.inverted:
            return float(n_left), float(n_right)
        # the inverse swaps the two gaps
        return float(self._forward(n_right)), float(self._forward(n_left))


@dataclass
class GeneratorFamily:
    map: PiecewiseAffineMap
    gens: dict[int, Generator]
    window_left: np.ndarray  # |V_j^{c_j}|, 1-based
    window_right: np.ndarray  # |V_j^{d_j}|, 1-based

    @property
    def scheme(self) -> Scheme:
        return self.map.scheme

    def expanding_region(self, j: int) -> tuple[float, float]:
        g = self.gens[j]
        if g.inverted:
            g = self.gens[self.scheme.iota[j]]
            return float(g.image_base + g.img[2]), float(circ(g.image_base + g.img[3]))
        return float(g.base), float(circ(g.base + g.e))


def _window_lengths(m: PiecewiseAffineMap) -> tuple[np.ndarray, np.ndarray]:
    s = m.scheme
    left, right = np.zeros(s.two_n + 1), np.zeros(s.two_n + 1)
    for j in s.labels:
        wl, wr = word_interval(m, s.gamma_word(j)), word_interval(m, s.delta_word(j))
        if wl is None or wr is None:
            raise WindowDegenerate(f"coincidence window at z_{j} is empty")
        left[j] = circ(wl[1] - wl[0])
        right[j] = circ(wr[1] - wr[0])
    return left, right


def build_generators(m: PiecewiseAffineMap) -> GeneratorFamily:
    s, lam, z, a = m.scheme, m.lam, m.z, m.a
    vl, vr = _window_lengths(m)

    def region(i: int) -> tuple[float, float]:
        """Left end and length of the expanding region E_i."""
        return float(z[i] - vl[i]), m.length(i) + vl[i] + vr[s.zeta[i]]

    gens: dict[int, Generator] = {}
    for j in s.labels:
        jb = s.iota[j]
        if jb < j:
            continue
        b, e = region(j)
        bp, ep = region(jb)
        y0 = float(circ(a[j] - lam * vl[j]))  # image of b
        # domain: E_j, gap, C = image of E_{jb} under its branch, gap
        c_start = float(circ(a[jb] - lam * vl[jb]))
        c_len = lam * ep
        h_right = float(circ(c_start - (b + e)))
        h_left = float(circ(b - (c_start + c_len)))
        # images: lam*E_j, gap, E_{jb}, gap
        H_right = float(circ(bp - (y0 + lam * e)))
        H_left = float(circ(y0 - (bp + ep)))
        total = e + h_right + c_len + h_left
        if abs(total - 1.0) > 1e-9 or h_right > 0.5 or h_left > 0.5:
            raise WindowDegenerate(f"expanding and contracting regions of phi_{j} overlap")
        right = GapProfile(h_right, H_right, lam, falling=True)
        left = GapProfile(h_left, H_left, lam, falling=False)
        gens[j] = Generator(j, b, y0, lam, e, ep, right, left)
        gens[jb] = Generator(jb, b, y0, lam, e, ep, right, left, inverted=True)
    return GeneratorFamily(m, gens, vl, vr)


def eval_gen(fam: GeneratorFamily, j: int, x):
    if j not in fam.gens:
        raise IndexOutOfRange(f"no generator {j}")
    return fam.gens[j](x)


def eval_genword(fam: GeneratorFamily, word: Sequence[int], x):
    """Apply the letters of ``word`` in order (first letter first)."""
    for j in word:
        x = eval_gen(fam, j, x)
    return x


def gen_deriv(fam: GeneratorFamily, j: int, x):
    return fam.gens[j].deriv(x)


def neutral_points(fam: GeneratorFamily, j: int) -> tuple[float, float]:
    return fam.gens[j].neutral_points()


@dataclass(frozen=True)
class RelationPair:
    """Two words with equal composition; both listed in application order."""

    j: int
    left: tuple[int, ...]
    right: tuple[int, ...]
    relator: tuple[int, ...]


def cutting_relation(s: Scheme, j: int) -> RelationPair:
    return RelationPair(j, s.gamma_word(j), s.delta_word(j), s.relator(j))


@dataclass
class CoincidenceWindow:
    j: int
    c: int
    d: int
    U: tuple[float, float]
    V: tuple[float, float]
    J_c: tuple[float, float]
    J_d: tuple[float, float]
    merged: float
    host: int


def coincidence_window(m: PiecewiseAffineMap, j: int) -> CoincidenceWindow:
    s = m.scheme
    k = s.k(j)
    orb = cutting_orbits(m, j)
    vl = word_interval(m, s.gamma_word(j))
    vr = word_interval(m, s.delta_word(j))
    if vl is None or vr is None:
        raise WindowDegenerate(f"empty window at z_{j}")
    zj = float(m.z[j])
    if abs(circ_diff(vl[1], zj)) > 1e-9 or abs(circ_diff(vr[0], zj)) > 1e-9:
        raise WindowDegenerate(f"window at z_{j} does not touch the cutting point")
    a = orb.host
    lo, hi = float(m.z[a]), float(m.z[s.zeta[a]])
    if orb.on_boundary:
        if abs(circ_diff(orb.merged, lo)) < 1e-9:
            lo = float(m.z[s.zeta_inv[a]])
        else:
            hi = float(m.z[s.zeta[s.zeta[a]]])
    scale = m.lam ** k
    u_left = float(circ(orb.merged - lo)) / scale
    u_right = float(circ(hi - orb.merged)) / scale
    c, d = s.c(j), s.d(j)
    return CoincidenceWindow(
        j=j, c=c, d=d,
        U=(float(circ(zj - u_left)), float(circ(zj + u_right))),
        V=(vl[0], vr[1]),
        J_c=(float(m.z[c]), orb.left[k - 2] if k >= 2 else zj),
        J_d=(orb.right[k - 2] if k >= 2 else zj, float(m.z[s.zeta[d]])),
        merged=orb.merged, host=a)


def arc_grid(start: float, end: float, n: int, inset: float = 0.0) -> np.ndarray:
    length = float(circ(end - start)) or 1.0
    return circ(start + np.linspace(inset, length - inset, n))


def relation_discrepancy(fam: GeneratorFamily, j: int, grid_size: int = 10_000) -> tuple[float, float]:
    """Sup gap between the two sides of the cutting-point relation at z_j.

    Returns (gap on the window V_j, gap on the whole circle).
    """
    rel = cutting_relation(fam.scheme, j)
    win = coincidence_window(fam.map, j)
    xv = arc_grid(win.V[0], win.V[1], grid_size, inset=1e-12)
    gap_v = np.max(np.abs(circ_diff(eval_genword(fam, rel.right, xv), eval_genword(fam, rel.left, xv))))
    xs = np.linspace(0.0, 1.0, grid_size, endpoint=False)
    gap_all = np.max(np.abs(circ_diff(eval_genword(fam, rel.right, xs), eval_genword(fam, rel.left, xs))))
    return float(gap_v), float(gap_all)


def count_fixed_points(f, grid_size: int = 20_000) -> int:
    """Sign changes of f(x) - x around the circle, ignoring jumps of the circular difference."""
    xs = np.linspace(0.0, 1.0, grid_size, endpoint=False)
    d = circ_diff(f(xs), xs)
    nxt = np.roll(d, -1)
    crossing = (np.sign(d) != np.sign(nxt)) & (np.abs(d - nxt) < 0.5)
    return int(np.count_nonzero(crossing))


def mobius_like(fam: GeneratorFamily, j: int):
    """The element G_j: the right-hand relation word at z_j, as a callable."""
    word = fam.scheme.delta_word(j)
    return lambda x: eval_genword(fam, word, x)


def affine_power_slope(m: PiecewiseAffineMap, j: int, n: int = 200) -> float:
    """Measured slope of the k(j)-th iterate across the window V_j (least squares)."""
    win = coincidence_window(m, j)
    xs = arc_grid(win.V[0], win.V[1], n, inset=1e-9 * float(circ(win.V[1] - win.V[0])))
    ys = xs.copy()
    for _ in range(m.scheme.k(j)):
        ys = eval_map(m, ys)
    # unwrap both around the cutting point
    tx = circ_diff(xs, m.z[j])
    ty = circ_diff(ys, win.merged)
    return float(np.polyfit(tx, ty, 1)[0])


def dump_generator_csv(fam: GeneratorFamily, j: int, path, n: int = 2000) -> None:
    xs = np.linspace(0.0, 1.0, n, endpoint=False)
    data = np.column_stack([xs, eval_gen(fam, j, xs), gen_deriv(fam, j, xs)])
    np.savetxt(path, data, delimiter=",", header="x,phi,dphi", comments="")
