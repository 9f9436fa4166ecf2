"""Piecewise-affine constant-slope circle maps: evaluation, condition checks, synthesis.

The circle is [0, 1). Interval I_j = [z_j, z_{j+1}) is half-open, so a cutting
point belongs to the interval on its right and its left-hand orbit is only
reached as a limit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cmp_to_key
from pathlib import Path
from typing import Sequence

import numpy as np

from bsl_lab.combinatorics import Scheme, scheme_from_dict
from bsl_lab.errors import (
    IndexOutOfRange,
    NoCoincidence,
    NoConsistentOrder,
    NonMonotoneCuttingPoints,
    ParseError,
    ReducibleMatrix,
    SlopeNotGreaterThanOne,
    VerificationFailed,
)

DEFAULT_TOL = 1e-9


def circ(x):
    """Reduce to [0, 1)."""
    return np.mod(x, 1.0)


def circ_diff(x, y):
    """Signed representative of x - y in [-1/2, 1/2)."""
    return np.mod(np.asarray(x) - y + 0.5, 1.0) - 0.5


@dataclass(frozen=True, eq=False)
class PiecewiseAffineMap:
    scheme: Scheme
    lam: float
    # 1-based: z[0] and a[0] are padding
    z: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)

    @property
    def two_n(self) -> int:
        return self.scheme.two_n

    @property
    def cutting(self) -> np.ndarray:
        return self.z[1:].copy()

    @property
    def offsets(self) -> np.ndarray:
        return self.a[1:].copy()

    def length(self, j: int) -> float:
        return float(circ(self.z[self.scheme.zeta[j]] - self.z[j])) or 1.0

    @property
    def lengths(self) -> np.ndarray:
        out = np.mod(np.roll(self.z[1:], -1) - self.z[1:], 1.0)
        return np.concatenate([[np.nan], out])

    def interval_of(self, x):
        """Label j with x in I_j (vectorised)."""
        x = circ(np.asarray(x, dtype=float))
        j = np.searchsorted(self.z[1:], x, side="right")
        return np.where(j == 0, self.two_n, j)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.to_dict(),
            "lambda": float(self.lam),
            "cutting": [float(v) for v in self.z[1:]],
            "offsets": [float(v) for v in self.a[1:]],
        }


def make_map(scheme: Scheme, lam: float, cutting: Sequence[float],
             offsets: Sequence[float]) -> PiecewiseAffineMap:
    cutting = np.asarray(cutting, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    n = scheme.two_n
    if cutting.shape != (n,) or offsets.shape != (n,):
        raise ParseError(f"expected {n} cutting points and offsets")
    if not np.all(np.isfinite(cutting)) or not np.all(np.isfinite(offsets)):
        raise ParseError("non-finite coordinate")
    if not lam > 1.0:
        raise SlopeNotGreaterThanOne(f"lambda={lam}")
    if np.any(cutting < 0) or np.any(cutting >= 1) or np.any(np.diff(cutting) <= 0):
        raise NonMonotoneCuttingPoints("cutting points must increase strictly inside [0, 1)")
    return PiecewiseAffineMap(scheme, float(lam), np.concatenate([[np.nan], cutting]),
                              np.concatenate([[np.nan], circ(offsets)]))


def map_from_dict(doc: dict) -> PiecewiseAffineMap:
    try:
        scheme = scheme_from_dict(doc["scheme"])
        lam = float(doc["lambda"])
        cutting, offsets = doc["cutting"], doc["offsets"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed map document: {exc}") from exc
    return make_map(scheme, lam, cutting, offsets)


def load_map(doc) -> PiecewiseAffineMap:
    """Load from a dict, a JSON string or a path."""
    if isinstance(doc, dict):
        return map_from_dict(doc)
    text = str(doc)
    if not text.lstrip().startswith("{"):
        text = Path(text).read_text()
    try:
        parsed = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc)) from exc
    if not isinstance(parsed, dict):
        raise ParseError("map document must be a JSON object")
    return map_from_dict(parsed)


def dump_map(m: PiecewiseAffineMap, path: str | Path, note: str | None = None) -> None:
    doc = m.to_dict()
    if note:
        doc["provenance"] = note
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def genus2_map() -> PiecewiseAffineMap:
    """The shipped genus-2 fixture."""
    return load_map(Path(__file__).with_name("data") / "genus2_map.json")


def _check_label(m: PiecewiseAffineMap, j: int) -> None:
    if not 1 <= j <= m.two_n:
        raise IndexOutOfRange(f"index {j} outside 1..{m.two_n}")


def eval_branch(m: PiecewiseAffineMap, j: int, x):
    """Affine branch j extended to the whole line; x is taken literally (no wrap)."""
    _check_label(m, j)
    return circ(m.a[j] + m.lam * (np.asarray(x, dtype=float) - m.z[j]))


def eval_map(m: PiecewiseAffineMap, x):
    j = m.interval_of(x)
    return circ(m.a[j] + m.lam * circ(np.asarray(x, dtype=float) - m.z[j]))


def fixed_point(m: PiecewiseAffineMap, j: int) -> float:
    """Expanding fixed point of branch j inside I_j."""
    _check_label(m, j)
    # a_j + lam*t = z_j + t (mod 1) with t = x - z_j in [0, |I_j|)
    shift = float(circ(m.z[j] - m.a[j]))
    for wrap in range(int(np.ceil(m.lam)) + 1):
        t = (shift + wrap) / (m.lam - 1.0)
        if t < m.length(j):
            return float(circ(m.z[j] + t))
    raise NoCoincidence(f"branch {j} has no fixed point in its interval")


def itinerary(m: PiecewiseAffineMap, x: float, n: int) -> tuple[int, ...]:
    out = []
    for _ in range(n):
        j = int(m.interval_of(x))
        out.append(j)
        x = float(eval_map(m, x))
    return tuple(out)


def _arc_meet(start: float, length: float, lo: float, hi: float) -> list[tuple[float, float]]:
    """Pieces of the arc [start, start+length) (start relative to an origin) inside [lo, hi)."""
    pieces = []
    for shift in (-1.0, 0.0, 1.0):
        s, e = max(start + shift, lo), min(start + shift + length, hi)
        if e > s:
            pieces.append((s, e))
    return pieces


def word_interval(m: PiecewiseAffineMap, word: Sequence[int],
                  tol: float = DEFAULT_TOL) -> tuple[float, float] | None:
    """Endpoints (start, end) of the cylinder I_{w1..wk}, or None when empty."""
    if not word:
        raise ValueError("empty word")
    for j in word:
        _check_label(m, j)
    last = word[-1]
    start, length = float(m.z[last]), m.length(last)
    for j in reversed(word[:-1]):
        rel = float(circ(start - m.a[j]))
        pieces = [p for p in _arc_meet(rel, length, 0.0, m.lam * m.length(j)) if p[1] - p[0] > tol]
        if len(pieces) != 1:
            return None
        lo, hi = pieces[0]
        start, length = float(circ(m.z[j] + lo / m.lam)), (hi - lo) / m.lam
    if length <= tol:
        return None
    return start, float(circ(start + length))


# ---------------------------------------------------------------- conditions

@dataclass
class CuttingOrbitPair:
    j: int
    right: list[float]  # P^0 .. P^{k-1}
    left: list[float]  # Q^0 .. Q^{k-1}
    right_itinerary: tuple[int, ...]
    left_itinerary: tuple[int, ...]
    k: int
    merged: float
    host: int
    on_boundary: bool


def _orbit_pair(m: PiecewiseAffineMap, j: int, steps: int) -> tuple[list[float], list[float]]:
    p = float(m.a[j])
    jl = m.scheme.zeta_inv[j]
    q = float(eval_branch(m, jl, m.z[jl] + m.length(jl)))
    right, left = [p], [q]
    for _ in range(steps - 1):
        right.append(float(eval_map(m, right[-1])))
        left.append(float(eval_map(m, left[-1])))
    return right, left


def cutting_orbits(m: PiecewiseAffineMap, j: int, tol: float = DEFAULT_TOL,
                   max_steps: int = 64) -> CuttingOrbitPair:
    _check_label(m, j)
    right, left = _orbit_pair(m, j, max_steps)
    for n in range(max_steps):
        if abs(circ_diff(right[n], left[n])) < tol:
            k = n + 1
            merged = right[n]
            host = int(m.interval_of(merged))
            edge = min(abs(circ_diff(merged, m.z[host])),
                       abs(circ_diff(merged, m.z[m.scheme.zeta[host]])))
            return CuttingOrbitPair(
                j=j, right=right[:k], left=left[:k],
                right_itinerary=tuple(int(m.interval_of(x)) for x in right[:k - 1]),
                left_itinerary=tuple(int(m.interval_of(x)) for x in left[:k - 1]),
                k=k, merged=merged, host=host, on_boundary=edge < tol)
    raise NoCoincidence(f"orbits of z_{j} do not merge within {max_steps} steps")


@dataclass
class ConditionReport:
    se: bool
    ep: bool
    em: bool
    ec: bool
    host_ok: bool
    k: dict[int, int]
    host: dict[int, int]
    right_itinerary: dict[int, tuple[int, ...]]
    left_itinerary: dict[int, tuple[int, ...]]
    failures: list[str]

    @property
    def ok(self) -> bool:
        return self.se and self.ep and self.em and self.ec and self.host_ok


def verify_conditions(m: PiecewiseAffineMap, tol: float = DEFAULT_TOL) -> ConditionReport:
    s = m.scheme
    fails: list[str] = []
    se = ep = em = ec = host_ok = True
    ks, hosts, ritin, litin = {}, {}, {}, {}
    for j in s.labels:
        span = m.lam * m.length(j)
        if span >= 1.0:
            se = False
            fails.append(f"SE j={j}: image covers the circle")
        else:
            for t in s.labels:
                rel = float(circ(m.z[t] - m.a[j]))
                meet = sum(e - b for b, e in _arc_meet(rel, m.length(t), 0.0, span))
                if t == s.iota[j] and meet > tol:
                    se = False
                    fails.append(f"SE j={j}: image meets I_{t} (length {meet:.3g})")
                elif t != s.iota[j] and meet <= tol:
                    se = False
                    fails.append(f"SE j={j}: image misses I_{t}")
        kj = s.k(j)
        right, left = _orbit_pair(m, j, max(kj, 2) + 1)
        ritin[j] = tuple(int(m.interval_of(x)) for x in right[:kj - 1])
        litin[j] = tuple(int(m.interval_of(x)) for x in left[:kj - 1])
        want_r = tuple(s.power("delta", j, i + 1) for i in range(kj - 1))
        want_l = tuple(s.power("gamma", s.zeta_inv[j], i + 1) for i in range(kj - 1))
        if ritin[j] != want_r:
            ep = False
            fails.append(f"E+ j={j}: itinerary {ritin[j]} != {want_r}")
        if litin[j] != want_l:
            em = False
            fails.append(f"E- j={j}: itinerary {litin[j]} != {want_l}")
        gaps = [abs(float(circ_diff(r, q))) for r, q in zip(right, left)]
        first = next((n for n, g in enumerate(gaps) if g < tol), None)
        ks[j] = first + 1 if first is not None else -1
        if first != kj - 1:
            ec = False
            fails.append(f"EC j={j}: first coincidence index {first}, gap at k-1 = {gaps[kj - 1]:.3g}")
        hosts[j] = int(m.interval_of(right[kj - 1]))
        if hosts[j] in (s.iota[s.c(j)], s.iota[s.d(j)]):
            host_ok = False
            fails.append(f"host j={j}: a_j={hosts[j]} is excluded")
    return ConditionReport(se, ep, em, ec, host_ok, ks, hosts, ritin, litin, fails)


# ---------------------------------------------------------------- synthesis

def perron(A: np.ndarray) -> tuple[float, np.ndarray]:
    """Perron root and positive right eigenvector (sum 1) of a nonnegative irreducible matrix."""
    vals, vecs = np.linalg.eig(A)
    i = int(np.argmax(vals.real))
    v = np.abs(vecs[:, i].real)
    return float(vals[i].real), v / v.sum()


def perron_power(A: np.ndarray, tol: float = 1e-14, max_iter: int = 100000) -> float:
    """Perron root by power iteration on (A + I), which is primitive when A is irreducible."""
    B = A + np.eye(len(A))
    v = np.ones(len(A)) / len(A)
    rho = 0.0
    for _ in range(max_iter):
        w = B @ v
        new = w.sum() / v.sum()
        v = w / w.sum()
        if abs(new - rho) < tol * new:
            break
        rho = new
    return float(new - 1.0)


def perron_charpoly(A: np.ndarray) -> float:
    """Largest real root of the characteristic polynomial."""
    roots = np.roots(np.poly(A))
    real = roots[np.abs(roots.imag) < 1e-6].real
    return float(real.max())


def is_irreducible(A: np.ndarray) -> bool:
    from scipy.sparse.csgraph import connected_components

    n, _ = connected_components(A > 0, directed=True, connection="strong")
    return n == 1


@dataclass
class MarkovData:
    """Combinatorial skeleton of a synthesized map."""

    points: list[tuple]  # marked points in circular order starting at z_1
    interval: list[int]
    matrix: np.ndarray
    lam: float
    lengths: np.ndarray
    positions: np.ndarray
    image: dict = field(repr=False, default_factory=dict)


def _marked_points(s: Scheme, a_choice: Sequence[int]):
    """Marked points, their interval and their image under the map.

    Returns (interval, image, left_image_of_z). Point ids are tuples:
    ('z', i), ('P', j, m), ('Q', j, m), ('X', a) for the fixed point of branch a.
    An orbit point whose interval is the host of its own merged point is that
    fixed point, so it is stored under the ('X', a) id.
    """
    interval, image = {}, {}

    def chain(kind: str, j: int, labels: list[int]) -> list:
        host = a_choice[j]
        ids = [(kind, j, m) for m in range(len(labels))]
        if labels and labels[-1] == host:
            ids[-1] = ("X", host)
        for m, (pid, lab) in enumerate(zip(ids, labels)):
            interval[pid] = lab
            image[pid] = ids[m + 1] if m + 1 < len(ids) else ("X", host)
        return ids

    left_image = {}
    for j in s.labels:
        kj = s.k(j)
        host = a_choice[j]
        interval[("X", host)] = host
        image[("X", host)] = ("X", host)
        pids = chain("P", j, [s.power("delta", j, m + 1) for m in range(kj - 1)])
        qids = chain("Q", j, [s.power("gamma", s.zeta_inv[j], m + 1) for m in range(kj - 1)])
        interval[("z", j)] = j
        image[("z", j)] = pids[0] if pids else ("X", host)
        left_image[s.zeta_inv[j]] = qids[0] if qids else ("X", host)
    return interval, image, left_image


def _merge_equal_points(s: Scheme, interval: dict, image: dict, left_image: dict):
    """Identify marked points with the same infinite itinerary.

    The map is injective on each interval, so two points in the same interval
    with equal images are equal. This is the coarsest partition stable under
    the map (computed by refinement). Cutting points stay distinct.
    """
    pts = list(interval)
    cls = {p: (p if p[0] == "z" else ("I", interval[p])) for p in pts}
    while True:
        sig = {p: (cls[p], cls[image[p]]) if p[0] != "z" else cls[p] for p in pts}
        ids: dict = {}
        new = {p: ids.setdefault(sig[p], len(ids)) for p in pts}
        if len(ids) == len(set(cls.values())):
            break
        cls = new
    rep: dict = {}
    for p in pts:
        rep.setdefault(cls[p], p)
    canon = {p: rep[cls[p]] for p in pts}
    for j in s.labels:
        for m in range(s.k(j) - 1):
            pj, qj = ("P", j, m), ("Q", j, m)
            if pj in canon and qj in canon and canon[pj] == canon[qj]:
                raise NoConsistentOrder(f"orbits of z_{j} merge before step {s.k(j) - 1}")
    interval = {canon[p]: interval[p] for p in pts}
    image = {canon[p]: canon[image[p]] for p in pts}
    left_image = {i: canon[q] for i, q in left_image.items()}
    return interval, image, left_image, canon


def _order_within(s: Scheme, interval: dict, image: dict, left_image: dict) -> dict[int, list]:
    """Sort marked points of each interval by their itinerary order."""

    def rank(i: int, t: int) -> int:
        return (t - s.delta[i]) % s.two_n

    def cmp(p, q, seen=None) -> int:
        if p == q:
            return 0
        i = interval[p]
        if p == ("z", i):
            return -1
        if q == ("z", i):
            return 1
        seen = set() if seen is None else seen
        if (p, q) in seen:
            raise NoConsistentOrder(f"{p} and {q} share an infinite itinerary")
        seen.add((p, q))
        fp, fq = image[p], image[q]
        tp, tq = interval[fp], interval[fq]
        if rank(i, tp) != rank(i, tq):
            return -1 if rank(i, tp) < rank(i, tq) else 1
        return cmp(fp, fq, seen)

    by_interval: dict[int, list] = {j: [] for j in s.labels}
    for p, i in interval.items():
        by_interval[i].append(p)
    for i in s.labels:
        by_interval[i].sort(key=cmp_to_key(cmp))
        # images must stay inside the image arc of branch i
        lo, hi = image[("z", i)], left_image[i]
        for p in by_interval[i][1:]:
            fp = image[p]
            t = interval[fp]
            if t == s.iota[i]:
                raise NoConsistentOrder(f"{p} would map into I_{t}")
            if t == interval[lo] and fp != lo and cmp(fp, lo) < 0:
                raise NoConsistentOrder(f"image of {p} precedes the image of z_{i}")
            if t == interval[hi] and cmp(fp, hi) >= 0:
                raise NoConsistentOrder(f"image of {p} passes the left image of z_{i + 1}")
    return by_interval


def _host_table(s: Scheme, a_choice: Sequence[int] | None) -> list[int]:
    if a_choice is None:
        return list(range(s.two_n + 1))
    return [0, *a_choice] if len(a_choice) == s.two_n else list(a_choice)


def markov_data(s: Scheme, a_choice: Sequence[int] | None = None) -> MarkovData:
    a_choice = _host_table(s, a_choice)
    interval, image, left_image = _marked_points(s, a_choice)
    for j in s.labels:
        if a_choice[j] in (s.iota[s.c(j)], s.iota[s.d(j)]):
            raise NoConsistentOrder(f"host a_{j}={a_choice[j]} is excluded")
    interval, image, left_image, _ = _merge_equal_points(s, interval, image, left_image)
    order = _order_within(s, interval, image, left_image)
    points = [p for i in s.labels for p in order[i]]
    pos = {p: n for n, p in enumerate(points)}
    n = len(points)
    A = np.zeros((n, n))
    for idx, p in enumerate(points):
        q = points[(idx + 1) % n]
        i = interval[p]
        start = pos[image[p]]
        end = pos[left_image[i]] if q == ("z", s.zeta[i]) else pos[image[q]]
        width = (end - start) % n
        if width == 0:
            raise NoConsistentOrder(f"subinterval after {p} has an empty image")
        for t in range(width):
            A[idx, (start + t) % n] = 1.0
    if not is_irreducible(A):
        raise ReducibleMatrix("Markov matrix is reducible")
    lam, v = perron(A)
    if np.any(v <= 1e-12):
        raise ReducibleMatrix("Perron vector has a vanishing entry")
    positions = np.concatenate([[0.0], np.cumsum(v)[:-1]])
    return MarkovData(points, [interval[p] for p in points], A, lam, v, positions, image)


def synthesize_markov(s: Scheme, a_choice: Sequence[int] | None = None,
                      tol: float = DEFAULT_TOL) -> PiecewiseAffineMap:
    """Build a Markov map for the scheme and check all conditions on it."""
    md = markov_data(s, a_choice)
    pos = dict(zip(md.points, md.positions))
    cutting = [pos[("z", j)] for j in s.labels]
    offsets = [pos[md.image[("z", j)]] for j in s.labels]
    m = make_map(s, md.lam, cutting, offsets)
    report = verify_conditions(m, tol)
    if not report.ok:
        raise VerificationFailed("; ".join(report.failures))
    return m


def markov_residual(m: PiecewiseAffineMap, md: MarkovData) -> float:
    """Largest mismatch between the image of a subinterval and the union its row claims."""
    n = len(md.points)
    worst = 0.0
    for idx in range(n):
        j = md.interval[idx]
        x0 = md.positions[idx]
        img_start = float(eval_branch(m, j, m.z[j] + circ(x0 - m.z[j])))
        cols = np.flatnonzero(md.matrix[idx])
        # row is a cyclic run; find where it starts
        first = next(c for c in cols if md.matrix[idx, (c - 1) % n] == 0) if len(cols) < n else cols[0]
        worst = max(worst, abs(float(circ_diff(img_start, md.positions[first]))))
        worst = max(worst, abs(m.lam * md.lengths[idx] - md.lengths[cols].sum()))
    return worst


def search_hosts(s: Scheme, tries: int = 500, seed: int = 0) -> list[int]:
    """Find a host table for which synthesis succeeds.

    Tries a_j = j first, then random admissible tables.
    """
    import random

    rng = random.Random(seed)
    allowed = {j: [a for a in s.labels if a not in (s.iota[s.c(j)], s.iota[s.d(j)])]
               for j in s.labels}
    for trial in range(tries):
        hosts = [0] + [rng.choice(allowed[j]) if trial else j for j in s.labels]
        try:
            synthesize_markov(s, hosts)
        except (NoConsistentOrder, ReducibleMatrix, VerificationFailed):
            continue
        return hosts
    raise NoConsistentOrder(f"no host table found in {tries} tries")
