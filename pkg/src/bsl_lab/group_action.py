"""Action of the generators on the folded graph, its certificates, and orbit equivalence.

Conventions. A word (w1, ..., wn) is in application order: w1 acts first. A
class of the graph is the group element reached from the root by reading its
canonical word, and the action of phi_j is right multiplication by phi_j^-1.
Concretely ``act_letter(g, j, v)`` strips a leading j from a word of v when
there is one and prepends iota(j) to the canonical word otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from bsl_lab.circle_map import DEFAULT_TOL, PiecewiseAffineMap, circ, circ_diff, eval_map
from bsl_lab.dyngraph import (
    KIND_PAIR,
    DynGraph,
    OverlapGraph,
    build_overlap_graph,
    cylinders,
    dist_many,
    project,
    relation_loops,
)
from bsl_lab.errors import (
    AmbiguousCase,
    BoundsExhausted,
    NoAdmissibleInterval,
    NotFound,
    OutOfBuiltRegion,
)
from bsl_lab.generators import GeneratorFamily, eval_gen, eval_genword, gen_deriv, neutral_points

Word = tuple[int, ...]


def free_reduce(s, word: Sequence[int]) -> Word:
    out: list[int] = []
    for x in word:
        if out and s.iota[out[-1]] == x:
            out.pop()
        else:
            out.append(int(x))
    return tuple(out)


def is_reduced(s, word: Sequence[int]) -> bool:
    return all(s.iota[a] != b for a, b in zip(word, word[1:]))


def inverse_word(s, word: Sequence[int]) -> Word:
    return tuple(s.iota[x] for x in reversed(word))


def reduced_words(s, length: int):
    """All reduced words of exactly the given length, in lexicographic order."""
    if length == 0:
        yield ()
        return
    for w in reduced_words(s, length - 1):
        for x in s.labels:
            if not w or s.iota[w[-1]] != x:
                yield w + (x,)


# ------------------------------------------------------------------ combinatorial action


def act_letter(g: DynGraph, j: int, v: int) -> int:
    """Image of class v under the action of phi_j."""
    s = g.scheme
    if v == 0:
        return int(g.nbr[0, s.iota[j] - 1])
    starting = [w for w in g.words(v) if w[0] == j]
    if len(starting) == 2 and len(starting[0]) == g.scheme.k(int(g.anchor[v])):
        # a prefix-free pair class starts with zeta^-1(i) on one side and i on the other
        raise AssertionError(f"both words of class {v} start with {j}")
    if starting:
        # with a common prefix both strips give the same class; use the last listed word
        return g.find(starting[-1][1:])
    return g.find((s.iota[j],) + g.canonical(v))


def act_many(g: DynGraph, letters, vs) -> np.ndarray:
    """Elementwise action: walk from v_{iota(j)} along the canonical word of v.

    Same map as :func:`act_letter`, vectorised; -1 marks results outside the build.
    """
    vs = np.asarray(vs, dtype=np.int64).reshape(-1)
    letters = np.broadcast_to(np.asarray(letters, dtype=np.int64), vs.shape)
    iota = np.asarray(g.scheme.iota)
    out = np.full(len(vs), -1, dtype=np.int64)
    ok = vs >= 0
    if not ok.any():
        return out
    words, lens = g.canonical_matrix(vs[ok])
    start = g.nbr[0, iota[letters[ok]] - 1]
    out[ok] = g.walk(start, words, lens)
    return out


def act_word(g: DynGraph, word: Sequence[int], v: int) -> int:
    for j in word:
        v = act_letter(g, j, v)
    return v


def act_word_many(g: DynGraph, word: Sequence[int], vs) -> np.ndarray:
    cur = np.asarray(vs, dtype=np.int64).reshape(-1).copy()
    for j in word:
        cur = act_many(g, j, cur)
        if np.any(cur < 0):
            raise OutOfBuiltRegion(f"word {tuple(word)} moves a vertex outside the build")
    return cur


def act_edge(g: DynGraph, word: Sequence[int], edge: tuple[int, int]) -> tuple[int, int]:
    """Image of an edge (u, v); checks that the image is again an edge with the same label."""
    u, v = edge
    labels = np.flatnonzero(g.nbr[u] == v)
    if not len(labels):
        raise ValueError(f"({u}, {v}) is not an edge")
    au, av = act_word(g, word, u), act_word(g, word, v)
    if g.nbr[au, labels[0]] != av:
        raise AssertionError(f"edge ({u}, {v}) does not map to an edge with the same label")
    return au, av


def find_translator(g: DynGraph, v: int) -> Word:
    """Word whose action brings v into the relation loops around the root."""
    if v == 0:
        return ()
    word = g.canonical(v)
    if g.kind[v] == KIND_PAIR:
        k = g.scheme.k(int(g.anchor[v]))
        return word[: len(word) - k]
    return word


def is_identity(g: DynGraph, word: Sequence[int]) -> bool:
    v = 0
    for j in word:
        v = int(act_many(g, j, [v])[0])
        if v < 0:
            raise OutOfBuiltRegion(f"word {tuple(word)} leaves the build depth {g.depth}")
    return v == 0


def loop_set(g: DynGraph, v: int) -> frozenset[int]:
    """Vertices of the union of relation loops at v."""
    return frozenset(x for loop in relation_loops(g, v) for x in loop.vertices)


# ------------------------------------------------------------------ interval oracle


@dataclass(eq=False)
class IntervalIndex:
    """Numeric intervals of all classes up to a level, sorted per level for lookup."""

    graph: DynGraph
    depth: int
    start: dict[int, np.ndarray]  # per level, sorted starts
    length: dict[int, np.ndarray]
    cls: dict[int, np.ndarray]
    class_start: np.ndarray
    class_length: np.ndarray

    def interval(self, v: int) -> tuple[float, float]:
        return float(self.class_start[v]), float(self.class_length[v])


def build_interval_index(m: PiecewiseAffineMap, g: DynGraph, depth: int,
                         g0: OverlapGraph | None = None) -> IntervalIndex:
    g0 = build_overlap_graph(m, depth) if g0 is None else g0
    wid = project(g0, g)
    top = int(g.level_start[depth + 1])
    cs = np.full(top, np.nan)
    cl = np.zeros(top)
    cls = g.w_class[wid]
    side = g.w_side[wid]
    # the left word of a class fixes its start; lengths add up
    first = (side == 0) & (cls > 0)
    cs[cls[first]] = g0.start[first]
    np.add.at(cl, cls[cls > 0], g0.length[cls > 0])
    start, length, members = {}, {}, {}
    for lv in range(1, depth + 1):
        ids = np.arange(g.level_start[lv], g.level_start[lv + 1])
        order = np.argsort(cs[ids], kind="stable")
        start[lv] = cs[ids][order]
        length[lv] = cl[ids][order]
        members[lv] = ids[order]
    return IntervalIndex(g, depth, start, length, members, cs, cl)


def _containing(idx: IntervalIndex, lv: int, a: float, length: float, tol: float) -> int:
    """Class at level lv whose interval contains the arc [a, a+length], or -1."""
    st, ln = idx.start[lv], idx.length[lv]
    pos = int(np.searchsorted(st, a + tol, side="right")) - 1
    cand = [pos % len(st), (pos - 1) % len(st)]
    for p in cand:
        off = float(circ(a - st[p]))
        if off > 1 - tol:
            off -= 1.0
        if off >= -tol and off + length <= ln[p] + tol:
            return int(idx.cls[lv][p])
    return -1


def _contained(idx: IntervalIndex, lv: int, a: float, length: float, tol: float) -> np.ndarray:
    st, ln = idx.start[lv], idx.length[lv]
    off = circ(st - a)
    off = np.where(off > 1 - tol, off - 1.0, off)
    inside = (off >= -tol) & (off + ln <= length + tol)
    return idx.cls[lv][inside]


def _meets(idx: IntervalIndex, a: float, length: float, tol: float) -> int:
    st, ln = idx.start[1], idx.length[1]
    off = circ(st - a)  # start of each interval inside the arc frame
    head = np.where(off < length, np.minimum(off + ln, length) - off, 0.0)
    tail = np.where(off + ln > 1.0, np.minimum(off + ln - 1.0, length), 0.0)
    return int(np.sum((head > tol) | (tail > tol)))


@dataclass
class OracleResult:
    vertex: int
    case: str
    met: int  # level-1 intervals met by the image arc


def interval_act_detail(idx: IntervalIndex, fam: GeneratorFamily, j: int, v: int,
                        tol: float = DEFAULT_TOL) -> OracleResult:
    """Literal case analysis on the numeric image phi_j(I_v)."""
    g = idx.graph
    s = g.scheme
    if v == 0:
        return OracleResult(int(g.nbr[0, s.iota[j] - 1]), "4", 0)
    a, ln = idx.interval(v)
    ia = float(eval_gen(fam, j, a))
    ib = float(eval_gen(fam, j, circ(a + ln)))
    jl = float(circ(ib - ia))
    met = _meets(idx, ia, jl, tol)
    if met > 3:
        return OracleResult(0, "1", met)
    # a whole interval inside the image wins over the enclosing one: the image of
    # an interval next to an expanding region spills past the partition point
    for lv in range(1, idx.depth + 1):
        inside = _contained(idx, lv, ia, jl, tol)
        if len(inside) == 0:
            continue
        if len(inside) == 1 and g.kind[inside[0]] != KIND_PAIR:
            return OracleResult(int(inside[0]), "3-i", met)
        pairs = inside[g.kind[inside] == KIND_PAIR]
        if len(pairs) == 1:
            # nothing of the level below fits, since lv is the first level with a fit
            return OracleResult(int(pairs[0]), "3-ii", met)
        break
    deepest = -1
    for lv in range(1, idx.depth + 1):
        w = _containing(idx, lv, ia, jl, tol)
        if w < 0:
            continue
        if lv == idx.depth:
            raise OutOfBuiltRegion(f"image of {v} under {j} is contained at the index depth")
        deepest = w
    if deepest >= 0:
        return OracleResult(deepest, "2", met)
    raise AmbiguousCase(f"no case applies to {v} under {j}")


def interval_act_letter(idx: IntervalIndex, fam: GeneratorFamily, j: int, v: int,
                        tol: float = DEFAULT_TOL) -> int:
    return interval_act_detail(idx, fam, j, v, tol).vertex


# ------------------------------------------------------------------ geometric certificates


def _distance_rows(g: DynGraph, sources: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d(source, target) for all pairs, by reading target words after the source inverse.

    ``targets`` must be closed under taking canonical parents. Entries are -1
    where the walk leaves the build.
    """
    s = g.scheme
    iota = np.asarray(s.iota)
    # class of source^-1 for every source
    words, lens = g.canonical_matrix(sources)
    inv = np.zeros_like(words)
    for i in range(words.shape[1]):
        live = lens > i
        inv[live, i] = iota[words[live, lens[live] - 1 - i]]
    start = g.walk(np.zeros(len(sources), dtype=np.int64), inv, lens)
    pos = {int(t): i for i, t in enumerate(targets)}
    tl = g.level(targets)
    parent_pos = np.asarray([pos.get(int(p), -1) for p in g.canon_parent[targets]])
    last = g.canon_last[targets]
    out = np.full((len(sources), len(targets)), -1, dtype=np.int64)
    order = np.argsort(tl, kind="stable")
    for lv in np.unique(tl):
        cols = order[tl[order] == lv]
        if lv == 0:
            out[:, cols] = start[:, None]
            continue
        if np.any(parent_pos[cols] < 0):
            raise ValueError("targets are not closed under canonical parents")
        prev = out[:, parent_pos[cols]]
        nxt = np.where(prev >= 0, g.nbr[np.maximum(prev, 0), last[cols] - 1], -1)
        out[:, cols] = nxt
    return np.where(out >= 0, g.level(np.maximum(out, 0)), -1)


def _close_parents(g: DynGraph, vs: np.ndarray) -> np.ndarray:
    todo = np.unique(vs)
    seen = set(int(v) for v in todo)
    frontier = todo
    while len(frontier):
        par = np.unique(g.canon_parent[frontier[frontier > 0]])
        par = np.asarray([p for p in par if int(p) not in seen], dtype=np.int64)
        seen.update(int(p) for p in par)
        frontier = par
    return np.asarray(sorted(seen), dtype=np.int64)


@dataclass
class GeometricReport:
    radius: int
    isometry_pairs: int = 0
    isometry_failures: int = 0
    isometry_fallbacks: int = 0
    order_vertices: int = 0
    order_failures: int = 0
    loop_set_failures: int = 0
    freeness_words: int = 0
    freeness_failures: list = field(default_factory=list)
    cocompact_depth: int = 0
    cocompact_vertices: int = 0
    cocompact_failures: int = 0
    movers: dict = field(default_factory=dict)
    movers_finite: bool = False

    @property
    def ok(self) -> bool:
        return (self.isometry_failures == 0 and self.order_failures == 0
                and self.loop_set_failures == 0 and not self.freeness_failures
                and self.cocompact_failures == 0 and self.movers_finite)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["movers"] = {str(k): v for k, v in self.movers.items()}
        d["freeness_failures"] = [list(map(list, f)) if isinstance(f, tuple) else f
                                  for f in self.freeness_failures]
        d["ok"] = self.ok
        return d


def check_isometry(g: DynGraph, r: int, letters: Sequence[int] | None = None,
                   chunk: int = 256) -> tuple[int, int, int]:
    """Compare d(u, v) with d(A u, A v) for all pairs of the r-ball; returns (pairs, bad, fallbacks)."""
    s = g.scheme
    letters = list(s.labels) if letters is None else list(letters)
    B = g.ball_root(r)
    base = np.concatenate([_distance_rows(g, B[i:i + chunk], B) for i in range(0, len(B), chunk)])
    if np.any(base < 0):
        raise OutOfBuiltRegion(f"radius {r} needs a deeper build than {g.depth}")
    pairs = bad = fallbacks = 0
    for j in letters:
        img = act_many(g, j, B)
        if np.any(img < 0):
            raise OutOfBuiltRegion(f"action of {j} leaves the build")
        targets = _close_parents(g, img)
        col = np.searchsorted(targets, img)
        for i in range(0, len(B), chunk):
            rows = _distance_rows(g, img[i:i + chunk], targets)[:, col]
            miss = np.argwhere(rows < 0)
            if len(miss):
                fallbacks += len(miss)
                fix = dist_many(g, img[i + miss[:, 0]], img[miss[:, 1]])
                rows[miss[:, 0], miss[:, 1]] = fix
            bad += int(np.sum(rows != base[i:i + chunk]))
            pairs += rows.size
    return pairs, bad, fallbacks


def check_order(g: DynGraph, r: int) -> tuple[int, int]:
    """Every letter maps the labelled ring at v onto the labelled ring at its image."""
    B = g.ball_root(r)
    bad = 0
    for j in g.scheme.labels:
        img = act_many(g, j, B)
        nb = g.nbr[B]
        moved = act_many(g, j, nb.ravel()).reshape(nb.shape)
        bad += int(np.sum(np.any(moved != g.nbr[img], axis=1)))
    return len(B) * g.two_n, bad


def check_loop_sets(g: DynGraph, vertices: Sequence[int]) -> int:
    bad = 0
    for v in vertices:
        before = loop_set(g, int(v))
        for j in g.scheme.labels:
            img = set(act_word_many(g, (j,), np.fromiter(before, dtype=np.int64)).tolist())
            if img != set(loop_set(g, act_letter(g, j, int(v)))):
                bad += 1
    return bad


def check_freeness(g: DynGraph, r: int, max_len: int) -> tuple[int, list]:
    """No nonempty reduced word of length <= max_len fixes a vertex of the r-ball."""
    s = g.scheme
    B = g.ball_root(r)
    words = [w for n in range(1, max_len + 1) for w in reduced_words(s, n)]
    W = np.asarray([w + (0,) * (max_len - len(w)) for w in words])
    lens = np.asarray([len(w) for w in words])
    cur = np.repeat(B[None, :], len(words), axis=0)
    for pos in range(max_len):
        live = lens > pos
        sub = cur[live]
        lt = np.repeat(W[live, pos][:, None], sub.shape[1], axis=1)
        res = act_many(g, lt.ravel(), sub.ravel()).reshape(sub.shape)
        if np.any(res < 0):
            raise OutOfBuiltRegion("freeness check leaves the build")
        cur[live] = res
    fixed = np.argwhere(cur == B[None, :])
    fails = [(words[i], int(B[k])) for i, k in fixed[:20]]
    return len(words), fails


def check_cocompact(g: DynGraph, depth: int) -> tuple[int, int]:
    """Translate every class of level <= depth by its translator and test landing near the root."""
    top = int(g.level_start[depth + 1])
    vs = np.arange(1, top)
    target = np.zeros(g.n_classes, dtype=bool)
    target[list(loop_set(g, 0))] = True
    words, lens = g.canonical_matrix(vs)
    tl = lens.copy()
    pair = g.kind[vs] == KIND_PAIR
    k = np.asarray([0] + [g.scheme.k(j) for j in g.scheme.labels])
    tl[pair] -= k[g.anchor[vs[pair]]]
    cur = vs.copy()
    for pos in range(int(tl.max(initial=0))):
        live = np.flatnonzero(tl > pos)
        cur[live] = act_many(g, words[live, pos], cur[live])
        if np.any(cur[live] < 0):
            raise OutOfBuiltRegion("translator leaves the build")
    return len(vs), int(np.sum(~target[cur]))


def count_movers(g: DynGraph, centre: int, r: int = 2, max_len: int | None = None) -> dict[int, int]:
    """Number of group elements g, by length, with A_g(B(root, r)) meeting B(centre, r)."""
    from bsl_lab.dyngraph import ball

    max_len = g.depth - r if max_len is None else max_len
    B1 = g.ball_root(r)
    B2 = np.zeros(g.n_classes, dtype=bool)
    B2[ball(g, centre, r)] = True
    elems = g.ball_root(max_len)
    s = g.scheme
    iota = np.asarray(s.iota)
    words, lens = g.canonical_matrix(elems)
    # class of g^-1; the action of g is right multiplication by g^-1
    inv = np.zeros_like(words)
    for i in range(words.shape[1]):
        live = lens > i
        inv[live, i] = iota[words[live, lens[live] - 1 - i]]
    ginv = g.walk(np.zeros(len(elems), dtype=np.int64), inv, lens)
    bw, bl = g.canonical_matrix(B1)
    hit = np.zeros(len(elems), dtype=bool)
    for b in range(len(B1)):
        img = g.walk(ginv, bw[b:b + 1], np.full(len(elems), bl[b]))
        hit |= (img >= 0) & B2[np.maximum(img, 0)]
    out: dict[int, int] = {}
    for n in range(max_len + 1):
        out[n] = int(np.sum(hit & (lens == n)))
    return out


def check_geometric(g: DynGraph, r: int = 4, samples: int = 32, seed: int = 0,
                    free_radius: int = 3, free_len: int = 4,
                    cocompact_depth: int | None = None) -> GeometricReport:
    rep = GeometricReport(radius=r)
    rep.isometry_pairs, rep.isometry_failures, rep.isometry_fallbacks = check_isometry(g, r)
    rep.order_vertices, rep.order_failures = check_order(g, r)
    rng = np.random.default_rng(seed)
    top = int(g.level_start[max(0, min(r, g.depth - 5)) + 1])
    sample = np.unique(np.concatenate([[0], rng.choice(top, min(samples, top), replace=False)]))
    rep.loop_set_failures = check_loop_sets(g, sample)
    rep.freeness_words, rep.freeness_failures = check_freeness(g, free_radius, free_len)
    rep.cocompact_depth = g.depth if cocompact_depth is None else cocompact_depth
    rep.cocompact_vertices, rep.cocompact_failures = check_cocompact(g, rep.cocompact_depth)
    centre = g.find((1,))
    rep.movers = count_movers(g, centre, 2)
    bound = 1 + 2 * 2
    rep.movers_finite = all(c == 0 for n, c in rep.movers.items() if n > bound) and \
        max(rep.movers) > bound
    return rep


# ------------------------------------------------------------------ slope law


def word_class_interval(m: PiecewiseAffineMap, g: DynGraph, word: Sequence[int]) -> tuple[Word, float, float]:
    """Interval of the class reached by ``word``: (defining word, start, length)."""
    s = g.scheme
    if not word or not is_reduced(s, word):
        raise NoAdmissibleInterval(f"{tuple(word)} is empty or not reduced")
    c = g.find(tuple(word))
    ws = g.words(c)
    mats = np.zeros((len(ws), len(word)), dtype=np.int64)
    for i, w in enumerate(ws):
        mats[i, : len(w)] = w
    cs, cl, _, _ = cylinders(m, mats, np.full(len(ws), len(word)))
    if np.any(cl <= 0):
        raise NoAdmissibleInterval(f"class of {tuple(word)} has an empty cylinder")
    defining = tuple(word) if tuple(word) in ws else ws[-1]
    return defining, float(cs[0]), float(cl.sum())


def max_slope_interval(m: PiecewiseAffineMap, fam: GeneratorFamily, g: DynGraph,
                       word: Sequence[int]) -> tuple[Word, float]:
    """Interval word on which the composition of ``word`` is affine, and its measured slope."""
    defining, a, ln = word_class_interval(m, g, word)
    x1, x2 = circ(a + 0.25 * ln), circ(a + 0.75 * ln)
    y1 = float(eval_genword(fam, word, x1))
    y2 = float(eval_genword(fam, word, x2))
    slope = float(circ(y2 - y1)) / (0.5 * ln)
    return defining, slope


# ------------------------------------------------------------------ orbit equivalence


def _orbit(m: PiecewiseAffineMap, x: float, n: int) -> tuple[np.ndarray, list[int]]:
    pts = [float(x)]
    labels = []
    for _ in range(n):
        labels.append(int(m.interval_of(pts[-1])))
        pts.append(float(eval_map(m, pts[-1])))
    return np.asarray(pts), labels


def orbit_equiv_backward(m: PiecewiseAffineMap, x: float, y: float,
                         bounds: tuple[int, int, float] = (16, 16, 1e-9)) -> Word:
    """Word w with w(x) = y built from iterates n, m meeting at a common point.

    The word reads the itinerary of x and then the inverse itinerary of y.
    Among all matches the one with the smallest n + m is returned.
    """
    n_max, m_max, tol = bounds
    s = m.scheme
    px, lx = _orbit(m, x, n_max)
    py, ly = _orbit(m, y, m_max)
    diff = np.abs(circ_diff(px[:, None], py[None, :]))
    hits = np.argwhere(diff < tol)
    if not len(hits):
        raise NotFound(f"no common iterate within n <= {n_max}, m <= {m_max}")
    n, k = min(hits.tolist(), key=lambda t: (t[0] + t[1], t[0]))
    word = tuple(lx[:n]) + tuple(s.iota[t] for t in reversed(ly[:k]))
    return free_reduce(s, word)


class Exceptional:
    """Marker result: the starting point is a neutral point of the generator."""

    def __init__(self, j: int, x: float, which: str):
        self.j, self.x, self.which = j, x, which

    def __repr__(self) -> str:
        return f"Exceptional(j={self.j}, x={self.x!r}, {self.which})"


def orbit_equiv_forward(m: PiecewiseAffineMap, fam: GeneratorFamily, x: float, j: int,
                        max_iter: int = 64, neutral_tol: float = 1e-6):
    """Iterate counts (n, k) with Phi^n(x) = Phi^k(phi_j(x)), or Exceptional.

    Outside I_j the relation of the cutting point next to x is used
    repeatedly to move the comparison forward until x lands in the right
    interval.
    """
    s = m.scheme
    x = float(circ(x))
    for which, npt in zip(("N-", "N+"), neutral_points(fam, j)):
        if abs(circ_diff(x, npt)) < neutral_tol:
            return Exceptional(j, x, which)
    if float(gen_deriv(fam, j, x)) < 1.0:
        y = float(eval_gen(fam, j, x))
        n, k = _forward_expanding(m, y, s.iota[j], max_iter)
        return k, n
    return _forward_expanding(m, x, j, max_iter)


def _forward_expanding(m: PiecewiseAffineMap, x: float, j: int, max_iter: int) -> tuple[int, int]:
    s = m.scheme
    if int(m.interval_of(x)) == j:
        return 1, 0
    left = float(circ(m.z[j] - x)) < float(circ(x - m.z[s.zeta[j]]))
    total = 0
    cur, js = x, j
    for _ in range(max_iter):
        if int(m.interval_of(cur)) == js:
            return total + 1, total
        anchor = js if left else s.zeta[js]
        steps = s.k(anchor) - 1
        for _ in range(steps):
            cur = float(eval_map(m, cur))
        total += steps
        js = s.c(anchor) if left else s.d(anchor)
        if total + 1 > max_iter:
            break
    raise BoundsExhausted(f"no landing within {max_iter} iterates (x={x!r}, j={j})")


def check_forward(m: PiecewiseAffineMap, fam: GeneratorFamily, x: float, j: int,
                  nk: tuple[int, int]) -> float:
    """|Phi^n(x) - Phi^k(phi_j x)| for a forward result."""
    n, k = nk
    a = float(x)
    for _ in range(n):
        a = float(eval_map(m, a))
    b = float(eval_gen(fam, j, x))
    for _ in range(k):
        b = float(eval_map(m, b))
    return abs(float(circ_diff(a, b)))

