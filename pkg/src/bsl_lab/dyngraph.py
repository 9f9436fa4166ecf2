"""Symbol tree, folded dynamical graph, numeric overlap graph and metric probes.

The folded graph is built on *real words*: admissible words whose cylinder is
nonempty. Every class of the fold is a group element, holds one or two real
words of the same length, and is connected to its neighbours by ``nbr``:
``nbr[c, x - 1]`` is the class reached from ``c`` along the edge labelled x.
A class created from a parent via label x has its parent at label iota(x).

Two-word classes come in two flavours. A *pair* class joins the gamma-half and
the delta-half of a cutting-point relation after a common prefix. A *cascade*
class is the common child of both sides of a two-word class along the split
label, the letter whose interval contains the merged orbit point.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from bsl_lab.circle_map import (
    DEFAULT_TOL,
    PiecewiseAffineMap,
    circ,
    circ_diff,
    cutting_orbits,
    itinerary,
)
from bsl_lab.combinatorics import Scheme
from bsl_lab.errors import (
    AmbiguousAdjacency,
    DepthTooLarge,
    InconsistentFold,
    IncompleteLink,
    OutOfBuiltRegion,
)

MAX_TREE_VERTICES = 20_000_000
MAX_GRAPH_DEPTH = 9

KIND_ROOT, KIND_SINGLE, KIND_PAIR, KIND_CASCADE = 0, 1, 2, 3


def _ring(two_n: int, start, count):
    """Labels start, zeta(start), ... (count of them) for arrays of starts/counts."""
    start = np.asarray(start, dtype=np.int64)
    count = np.asarray(count, dtype=np.int64)
    owner = np.repeat(np.arange(len(start)), count)
    first = np.cumsum(count) - count
    offset = np.arange(int(count.sum())) - np.repeat(first, count)
    return owner, (start[owner] - 1 + offset) % two_n + 1


def _table(s: Scheme, name: str) -> np.ndarray:
    return np.asarray(getattr(s, name), dtype=np.int64)


# ------------------------------------------------------------------ tree


@dataclass(eq=False)
class SymbolTree:
    """Complete tree of admissible words up to ``depth``, stored level by level."""

    scheme: Scheme
    depth: int
    parent: np.ndarray
    label: np.ndarray
    level_start: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.parent)

    def level(self, v: int) -> int:
        return int(np.searchsorted(self.level_start, v, side="right") - 1)

    def word(self, v: int) -> tuple[int, ...]:
        out = []
        while v:
            out.append(int(self.label[v]))
            v = int(self.parent[v])
        return tuple(reversed(out))

    def children(self, v: int) -> np.ndarray:
        lv = self.level(v)
        if lv >= self.depth:
            return np.empty(0, dtype=np.int64)
        lo, hi = self.level_start[lv + 1], self.level_start[lv + 2]
        idx = lo + np.searchsorted(self.parent[lo:hi], v)
        end = lo + np.searchsorted(self.parent[lo:hi], v, side="right")
        return np.arange(idx, end)

    def find(self, word: Sequence[int]) -> int:
        v = 0
        for x in word:
            kids = self.children(v)
            hit = kids[self.label[kids] == x]
            if not len(hit):
                raise OutOfBuiltRegion(f"word {tuple(word)} is not in the tree")
            v = int(hit[0])
        return v

    def reverse_label(self, v: int) -> int:
        """Label of the edge read from v back to its parent."""
        if v == 0:
            raise ValueError("root has no parent edge")
        return self.scheme.iota[int(self.label[v])]

    def dist(self, u: int, v: int) -> int:
        a, b = self.word(u), self.word(v)
        common = 0
        for x, y in zip(a, b):
            if x != y:
                break
            common += 1
        return len(a) + len(b) - 2 * common

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        kids = np.arange(1, self.n_vertices)
        return self.parent[1:], kids


def tree_size(two_n: int, depth: int) -> int:
    return 1 + two_n * sum((two_n - 1) ** i for i in range(depth))


def build_tree(s: Scheme, depth: int, max_vertices: int = MAX_TREE_VERTICES) -> SymbolTree:
    if depth < 1:
        raise ValueError("depth must be at least 1")
    size = tree_size(s.two_n, depth)
    if size > max_vertices:
        raise DepthTooLarge(f"tree of depth {depth} has {size} vertices (limit {max_vertices})")
    two_n = s.two_n
    iota = _table(s, "iota")
    parent = [np.zeros(1, dtype=np.int64)]
    label = [np.zeros(1, dtype=np.int64)]
    starts = [0, 1]
    parent.append(np.zeros(two_n, dtype=np.int64))
    label.append(np.arange(1, two_n + 1))
    for lv in range(2, depth + 1):
        lo, hi = starts[lv - 1], starts[lv - 1] + len(label[-1])
        last = label[-1]
        # children of v: every label except iota(last), in zeta order after iota(last)
        owner, lab = _ring(two_n, iota[last] % two_n + 1, np.full(len(last), two_n - 1))
        parent.append(lo + owner)
        label.append(lab)
        starts.append(hi)
    starts.append(starts[-1] + len(label[-1]))
    return SymbolTree(s, depth, np.concatenate(parent), np.concatenate(label),
                      np.asarray(starts, dtype=np.int64))


# ------------------------------------------------------------------ folded graph


def default_splits(s: Scheme, depth: int, hosts: Sequence[int] | None = None) -> np.ndarray:
    """Split labels when every merged orbit point is the fixed point of its host branch."""
    hosts = list(s.labels) if hosts is None else list(hosts)
    out = np.zeros((s.two_n + 1, depth + 1), dtype=np.int64)
    for j in s.labels:
        out[j, :] = hosts[j - 1]
    return out


def splits_from_map(m: PiecewiseAffineMap, depth: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Itinerary of each merged cutting-point orbit, read numerically from the map."""
    s = m.scheme
    out = np.zeros((s.two_n + 1, depth + 1), dtype=np.int64)
    for j in s.labels:
        pair = cutting_orbits(m, j, tol)
        if pair.on_boundary:
            raise InconsistentFold(f"merged orbit of z_{j} lands on a cutting point")
        out[j, :] = itinerary(m, pair.merged, depth + 1)
    return out


@dataclass(eq=False)
class DynGraph:
    scheme: Scheme
    depth: int
    splits: np.ndarray
    level_start: np.ndarray
    kind: np.ndarray
    nwords: np.ndarray
    anchor: np.ndarray
    step: np.ndarray
    nbr: np.ndarray
    cwords: np.ndarray  # (n, 2) word ids; side 0 = gamma/left, side 1 = delta/right
    w_parent: np.ndarray
    w_last: np.ndarray
    w_class: np.ndarray
    w_side: np.ndarray
    w_level_start: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(self.kind)

    @property
    def two_n(self) -> int:
        return self.scheme.two_n

    @property
    def root(self) -> int:
        return 0

    def level(self, c):
        return np.searchsorted(self.level_start, c, side="right") - 1

    def sphere(self, r: int) -> np.ndarray:
        return np.arange(self.level_start[r], self.level_start[r + 1])

    def ball_root(self, r: int) -> np.ndarray:
        if r > self.depth:
            raise OutOfBuiltRegion(f"radius {r} exceeds built depth {self.depth}")
        return np.arange(self.level_start[r + 1])

    @cached_property
    def canon_word_id(self) -> np.ndarray:
        return np.where(self.nwords == 2, self.cwords[:, 1], self.cwords[:, 0])

    @cached_property
    def canon_parent(self) -> np.ndarray:
        """Class of the canonical word with its last letter removed (root for the root)."""
        return self.w_class[self.w_parent[self.canon_word_id]]

    @cached_property
    def canon_last(self) -> np.ndarray:
        return self.w_last[self.canon_word_id]

    def word_of(self, w: int) -> tuple[int, ...]:
        out = []
        while w:
            out.append(int(self.w_last[w]))
            w = int(self.w_parent[w])
        return tuple(reversed(out))

    def words(self, c: int) -> tuple[tuple[int, ...], ...]:
        """Real words of class c; for two-word classes the left (gamma) word comes first."""
        return tuple(self.word_of(int(w)) for w in self.cwords[c, : self.nwords[c]])

    def canonical(self, c: int) -> tuple[int, ...]:
        return self.word_of(int(self.canon_word_id[c]))

    def canonical_matrix(self, cs) -> tuple[np.ndarray, np.ndarray]:
        """Canonical words of many classes as a zero-padded matrix plus their lengths."""
        cs = np.asarray(cs, dtype=np.int64)
        lv = self.level(cs)
        width = int(lv.max()) if len(cs) else 0
        out = np.zeros((len(cs), width), dtype=np.int64)
        # follow word parents, not class parents: the parent class may be canonised
        # by a different word
        cur = self.canon_word_id[cs]
        for pos in range(width - 1, -1, -1):
            live = lv > pos
            out[live, pos] = self.w_last[cur[live]]
            cur[live] = self.w_parent[cur[live]]
        return out, lv

    def walk(self, start, letters: np.ndarray, lengths=None) -> np.ndarray:
        """Follow label sequences from start vertices; -1 once the walk leaves the build."""
        cur = np.array(start, dtype=np.int64, copy=True).reshape(-1)
        letters = np.atleast_2d(np.asarray(letters, dtype=np.int64))
        if letters.shape[0] == 1 and len(cur) > 1:
            letters = np.broadcast_to(letters, (len(cur), letters.shape[1]))
        if cur.shape[0] == 1 and letters.shape[0] > 1:
            cur = np.repeat(cur, letters.shape[0])
        if lengths is None:
            lengths = np.full(len(cur), letters.shape[1])
        for pos in range(letters.shape[1]):
            live = (pos < lengths) & (cur >= 0)
            cur[live] = self.nbr[cur[live], letters[live, pos] - 1]
        return cur

    def find(self, word: Sequence[int]) -> int:
        """Class reached from the root along ``word`` (any word, reduced or not)."""
        if not word:
            return 0
        c = int(self.walk([0], np.asarray([word]))[0])
        if c < 0:
            raise OutOfBuiltRegion(f"word {tuple(word)} leaves the built depth {self.depth}")
        return c

    def degree(self, c) -> np.ndarray:
        return (self.nbr[c] >= 0).sum(axis=-1)

    def full_link(self) -> np.ndarray:
        """Classes whose every neighbour lies inside the build."""
        return np.arange(self.level_start[self.depth])

    @cached_property
    def word_count(self) -> np.ndarray:
        return np.diff(self.w_level_start)


def _half_tables(s: Scheme):
    two_n = s.two_n
    kmax = max(s.k(j) for j in s.labels)
    k = np.asarray([0] + [s.k(j) for j in s.labels], dtype=np.int64)
    dw = np.zeros((two_n + 1, kmax), dtype=np.int64)
    for j in s.labels:
        w = s.delta_word(j)
        dw[j, : len(w)] = w
    dpow = np.zeros((two_n + 1, kmax + 1), dtype=np.int64)  # delta^{-m}
    gpow = np.zeros((two_n + 1, kmax + 1), dtype=np.int64)  # gamma^{-m}
    for j in s.labels:
        for m in range(kmax + 1):
            dpow[j, m] = s.power("delta", j, -m)
            gpow[j, m] = s.power("gamma", j, -m)
    return k, dw, dpow, gpow, kmax


def build_graph(s: Scheme, depth: int, splits: np.ndarray | None = None) -> DynGraph:
    """Fold real words level by level into group-element classes.

    Raises InconsistentFold whenever the local rules disagree: more than two
    words per class, a half relation without its partner, or an edge slot
    claimed twice.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if depth > MAX_GRAPH_DEPTH:
        raise DepthTooLarge(f"depth {depth} exceeds {MAX_GRAPH_DEPTH}")
    two_n = s.two_n
    if splits is None:
        splits = default_splits(s, depth)
    iota, zeta = _table(s, "iota"), _table(s, "zeta")
    gamma, delta = _table(s, "gamma"), _table(s, "delta")
    k, dw, dpow, gpow, kmax = _half_tables(s)

    # per-class storage grows in chunks per level
    kind = [np.array([KIND_ROOT], dtype=np.int8)]
    nwords = [np.array([1], dtype=np.int8)]
    anchor = [np.array([0], dtype=np.int64)]
    step = [np.array([0], dtype=np.int64)]
    cwords = [np.array([[0, -1]], dtype=np.int64)]
    nbr_rows = [np.full((1, two_n), -1, dtype=np.int64)]
    w_parent = [np.array([0], dtype=np.int64)]
    w_last = [np.array([0], dtype=np.int64)]
    w_class = [np.array([0], dtype=np.int64)]
    w_side = [np.array([0], dtype=np.int8)]
    w_drun = [np.array([0], dtype=np.int64)]
    w_grun = [np.array([0], dtype=np.int64)]
    level_start = [0, 1]
    w_level_start = [0, 1]

    def cat(chunks):
        return np.concatenate(chunks) if len(chunks) > 1 else chunks[0]

    for lv in range(depth):
        # flatten history for random access (cheap relative to a level)
        nbr = cat(nbr_rows)
        nbr_rows = [nbr]
        cls_nw = cat(nwords); nwords = [cls_nw]
        cls_anchor = cat(anchor); anchor = [cls_anchor]
        cls_step = cat(step); step = [cls_step]
        wp = cat(w_parent); w_parent = [wp]
        wl = cat(w_last); w_last = [wl]
        wc = cat(w_class); w_class = [wc]
        ws = cat(w_side); w_side = [ws]
        wd = cat(w_drun); w_drun = [wd]
        wg = cat(w_grun); w_grun = [wg]

        ids = np.arange(w_level_start[lv], w_level_start[lv + 1])
        pcls, pside, plast = wc[ids], ws[ids], wl[ids]
        if lv == 0:
            owner, x = _ring(two_n, [1], [two_n])
        else:
            two = cls_nw[pcls] == 2
            split = splits[cls_anchor[pcls], np.minimum(cls_step[pcls], splits.shape[1] - 1)]
            start = delta[plast].copy()
            count = np.full(len(ids), two_n - 1, dtype=np.int64)
            left = two & (pside == 0)
            right = two & (pside == 1)
            count[left] = (split[left] - start[left]) % two_n + 1
            start[right] = split[right]
            count[right] = (gamma[plast[right]] - split[right]) % two_n + 1
            owner, x = _ring(two_n, start, count)
        pw = ids[owner]
        pc = pcls[owner]
        pl = plast[owner]
        drun = np.where(delta[pl] == x, wd[pw] + 1, 1)
        grun = np.where(gamma[pl] == x, wg[pw] + 1, 1)
        if lv == 0:
            drun[:] = 1
            grun[:] = 1
        dcomp = drun == k[x]
        gcomp = grun == k[iota[x]]
        if np.any(dcomp & gcomp):
            raise InconsistentFold("a word completes both half relations at once")

        key = pc * two_n + (x - 1)
        half_j = np.zeros(len(x), dtype=np.int64)
        if dcomp.any():
            idx = np.flatnonzero(dcomp)
            half_j[idx] = dpow[x[idx], k[x[idx]] - 1]
        if gcomp.any():
            idx = np.flatnonzero(gcomp)
            kk = k[iota[x[idx]]]
            first = gpow[x[idx], kk - 1]
            j = zeta[first]
            half_j[idx] = j
            # prefix class: k-1 word steps above the parent word
            anc = pw[idx].copy()
            for up in range(1, kmax):
                live = up < kk
                anc[live] = wp[anc[live]]
            y = wc[anc]
            for pos in range(kmax - 1):
                live = (pos < kk - 1) & (y >= 0)
                y[live] = nbr[y[live], dw[j[live], pos] - 1]
            if np.any(y < 0):
                raise InconsistentFold("gamma half relation has no delta partner in the build")
            d = dw[j, kk - 1]
            key[idx] = y * two_n + (d - 1)

        uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
        if counts.max(initial=0) > 2:
            raise InconsistentFold(f"{counts.max()} words fold into one class at level {lv + 1}")
        n_new = len(uniq)
        base = level_start[-1]
        new_cls = base + inv

        pair_members = np.flatnonzero(counts[inv] == 2)
        lone = counts[inv] == 1
        if np.any(lone & (dcomp | gcomp)):
            bad = np.flatnonzero(lone & (dcomp | gcomp))[0]
            raise InconsistentFold(
                f"half relation ending with {int(x[bad])} at level {lv + 1} has no partner")

        c_kind = np.full(n_new, KIND_SINGLE, dtype=np.int8)
        c_nw = counts.astype(np.int8)
        c_anchor = np.zeros(n_new, dtype=np.int64)
        c_step = np.zeros(n_new, dtype=np.int64)
        c_words = np.full((n_new, 2), -1, dtype=np.int64)
        side = np.zeros(len(x), dtype=np.int8)

        if len(pair_members):
            order = pair_members[np.argsort(inv[pair_members], kind="stable")]
            a, b = order[0::2], order[1::2]
            if np.any(inv[a] != inv[b]):
                raise InconsistentFold("unpaired fold group")
            grp = inv[a]
            is_pair = (dcomp[a] & gcomp[b]) | (gcomp[a] & dcomp[b])
            is_casc = (~dcomp[a] & ~gcomp[a] & ~dcomp[b] & ~gcomp[b]
                       & (pc[a] == pc[b]) & (side_of(ws, pw, a) != side_of(ws, pw, b)))
            if np.any(~(is_pair | is_casc)):
                raise InconsistentFold(f"mixed fold group at level {lv + 1}")
            # left member: gamma half for pairs, side-0 parent for cascades
            a_left = np.where(is_pair, gcomp[a], ws[pw[a]] == 0)
            lm = np.where(a_left, a, b)
            rm = np.where(a_left, b, a)
            side[lm] = 0
            side[rm] = 1
            c_kind[grp] = np.where(is_pair, KIND_PAIR, KIND_CASCADE)
            c_anchor[grp] = np.where(is_pair, half_j[rm], cls_anchor[pc[a]])
            c_step[grp] = np.where(is_pair, 0, cls_step[pc[a]] + 1)
            c_words[grp, 0] = w_level_start[-1] + lm
            c_words[grp, 1] = w_level_start[-1] + rm
        single = np.flatnonzero(lone)
        c_words[inv[single], 0] = w_level_start[-1] + single

        # edges: parent -> new along x, new -> parent along iota(x)
        rows = np.full((n_new, two_n), -1, dtype=np.int64)
        back = iota[x] - 1
        prev = rows[inv, back]
        rows[inv, back] = pc
        if len(pair_members):
            # both members of a cascade share (parent, x); pair members use distinct labels
            chk = rows[inv, back]
            if np.any(chk != pc):
                raise InconsistentFold("two parents claim the same edge slot")
        del prev
        slot = nbr[pc, x - 1]
        if np.any((slot >= 0) & (slot != new_cls)):
            raise InconsistentFold(f"edge slot already used at level {lv}")
        nbr[pc, x - 1] = new_cls
        nbr_rows = [nbr, rows]

        kind.append(c_kind)
        nwords.append(c_nw)
        anchor.append(c_anchor)
        step.append(c_step)
        cwords.append(c_words)
        w_parent.append(pw)
        w_last.append(x)
        w_class.append(new_cls)
        w_side.append(side)
        w_drun.append(drun)
        w_grun.append(grun)
        level_start.append(base + n_new)
        w_level_start.append(w_level_start[-1] + len(x))

    return DynGraph(
        scheme=s, depth=depth, splits=splits,
        level_start=np.asarray(level_start, dtype=np.int64),
        kind=cat(kind), nwords=cat(nwords), anchor=cat(anchor), step=cat(step),
        nbr=cat(nbr_rows).astype(np.int32 if level_start[-1] < 2**31 else np.int64),
        cwords=cat(cwords), w_parent=cat(w_parent), w_last=cat(w_last),
        w_class=cat(w_class), w_side=cat(w_side),
        w_level_start=np.asarray(w_level_start, dtype=np.int64),
    )


def side_of(ws: np.ndarray, pw: np.ndarray, members: np.ndarray) -> np.ndarray:
    return ws[pw[members]]


def fold_graph(tree: SymbolTree, splits: np.ndarray | None = None) -> DynGraph:
    """Fold the admissible tree: keep real words and identify them into classes.

    Every real word of the result is a vertex of ``tree``; this is asserted.
    """
    g = build_graph(tree.scheme, tree.depth, splits)
    iota = _table(tree.scheme, "iota")
    lastp = g.w_last[g.w_parent[1:]]
    if np.any((lastp > 0) & (g.w_last[1:] == iota[lastp])):
        raise InconsistentFold("fold produced a non-admissible word")
    return g


def graph_from_map(m: PiecewiseAffineMap, depth: int, tol: float = DEFAULT_TOL) -> DynGraph:
    return build_graph(m.scheme, depth, splits_from_map(m, depth, tol))


# ------------------------------------------------------------------ local structure


def ring_start(g: DynGraph, c: int) -> int:
    s = g.scheme
    if c == 0:
        return 1
    last = int(g.canon_last[c])
    if g.kind[c] == KIND_PAIR:
        return s.iota[last]
    return s.zeta[s.iota[last]]


def cyclic_order(g: DynGraph, c: int) -> list[tuple[int, int]]:
    """Incident edges of c as (label, neighbour) in the zeta order of labels."""
    if np.any(g.nbr[c] < 0):
        raise IncompleteLink(f"class {c} has neighbours outside the build")
    start = ring_start(g, c)
    out = []
    x = start
    for _ in range(g.two_n):
        out.append((x, int(g.nbr[c, x - 1])))
        x = g.scheme.zeta[x]
    return out


@dataclass(frozen=True)
class RelationLoop:
    j: int
    labels: tuple[int, ...]
    vertices: tuple[int, ...]  # closed: first == last

    @property
    def edges(self) -> frozenset:
        vs = self.vertices
        return frozenset(frozenset((vs[i], vs[i + 1])) for i in range(len(vs) - 1))


def loop_word(s: Scheme, y: int) -> tuple[int, ...]:
    """Labels around the face between the edges zeta^-1(y) and y at a vertex."""
    return s.gamma_word(y) + tuple(s.iota[t] for t in reversed(s.delta_word(y)))


def relation_loops(g: DynGraph, c: int) -> list[RelationLoop]:
    ring = cyclic_order(g, c)
    s = g.scheme
    loops = []
    for x, _ in ring:
        y = s.zeta[x]
        word = loop_word(s, y)
        path = [c]
        cur = c
        for t in word:
            cur = int(g.nbr[cur, t - 1])
            if cur < 0:
                raise IncompleteLink(f"relation loop at {c} for z_{y} leaves the build")
            path.append(cur)
        if cur != c:
            raise InconsistentFold(f"relation loop at {c} for z_{y} does not close")
        loops.append(RelationLoop(y, word, tuple(path)))
    return loops


def pair_class(g: DynGraph, prefix: Sequence[int], j: int) -> int:
    """Class holding (prefix, delta_word(j)), with consistency against the gamma side."""
    s = g.scheme
    right = g.find(tuple(prefix) + s.delta_word(j))
    left = g.find(tuple(prefix) + s.gamma_word(j))
    if left != right:
        raise InconsistentFold(f"halves of z_{j} after {tuple(prefix)} are not identified")
    return right


# ------------------------------------------------------------------ metric


def dist_many(g: DynGraph, us, vs, fallback: bool = True) -> np.ndarray:
    """Graph distances d(u, v) = |v u^-1| read off a walk through the build.

    The walk follows the inverse of u's canonical word and then v's canonical
    word after cancelling their common prefix. Pairs whose walk leaves the build
    fall back to a breadth-first search inside it.
    """
    us = np.asarray(us, dtype=np.int64).reshape(-1)
    vs = np.asarray(vs, dtype=np.int64).reshape(-1)
    iota = _table(g.scheme, "iota")
    cu, lu = g.canonical_matrix(us)
    cv, lv = g.canonical_matrix(vs)
    width = max(cu.shape[1], cv.shape[1])
    cu = np.pad(cu, ((0, 0), (0, width - cu.shape[1])))
    cv = np.pad(cv, ((0, 0), (0, width - cv.shape[1])))
    same = (cu == cv) & (cu > 0)
    common = np.cumprod(same, axis=1).sum(axis=1)
    # letters: iota of u's tail reversed, then v's tail
    n1 = lu - common
    n2 = lv - common
    total = n1 + n2
    letters = np.zeros((len(us), int(total.max(initial=0))), dtype=np.int64)
    rows = np.arange(len(us))
    for pos in range(letters.shape[1]):
        first = pos < n1
        src = np.where(first, lu - 1 - pos, common + pos - n1)
        src = np.clip(src, 0, max(width - 1, 0))
        val = np.where(first, iota[cu[rows, src]], cv[rows, src])
        letters[:, pos] = np.where(pos < total, val, 0)
    end = g.walk(np.zeros(len(us), dtype=np.int64), letters, total)
    out = np.where(end >= 0, g.level(np.maximum(end, 0)), -1)
    bad = np.flatnonzero(end < 0)
    if len(bad):
        if not fallback:
            raise OutOfBuiltRegion(f"{len(bad)} distance walks leave the build")
        for i in bad:
            out[i] = bfs_pair(g, int(us[i]), int(vs[i]))
    return out


def dist(g: DynGraph, u: int, v: int) -> int:
    return int(dist_many(g, [u], [v])[0])


def bfs_pair(g: DynGraph, u: int, v: int, limit: int | None = None) -> int:
    """Bidirectional breadth-first search restricted to built classes."""
    if u == v:
        return 0
    limit = 2 * g.depth + 2 if limit is None else limit
    seen = [{u: 0}, {v: 0}]
    front = [[u], [v]]
    steps = 0
    while front[0] and front[1] and steps < limit:
        side = 0 if len(front[0]) <= len(front[1]) else 1
        nxt = []
        mine, other = seen[side], seen[1 - side]
        for a in front[side]:
            da = mine[a]
            for b in g.nbr[a]:
                b = int(b)
                if b < 0 or b in mine:
                    continue
                if b in other:
                    return da + 1 + other[b]
                mine[b] = da + 1
                nxt.append(b)
        front[side] = nxt
        steps += 1
    raise OutOfBuiltRegion(f"no path between {u} and {v} inside the build")


def bfs_levels(g: DynGraph, source: int, allowed: np.ndarray | None = None) -> np.ndarray:
    """Distances from source to every class (-1 when unreachable inside ``allowed``)."""
    n = g.n_classes
    out = np.full(n, -1, dtype=np.int32)
    out[source] = 0
    front = np.array([source], dtype=np.int64)
    d = 0
    while len(front):
        d += 1
        cand = g.nbr[front].ravel()
        cand = cand[cand >= 0]
        if allowed is not None:
            cand = cand[allowed[cand]]
        cand = np.unique(cand)
        cand = cand[out[cand] < 0]
        out[cand] = d
        front = cand.astype(np.int64)
    return out


def ball(g: DynGraph, c: int, r: int) -> np.ndarray:
    """Classes within distance r of c (breadth-first inside the build)."""
    if c == 0:
        return g.ball_root(r)
    d = np.full(g.n_classes, -1, dtype=np.int32)
    d[c] = 0
    front = np.array([c], dtype=np.int64)
    for step in range(1, r + 1):
        cand = g.nbr[front].ravel()
        if np.any(cand < 0):
            raise OutOfBuiltRegion(f"ball of radius {r} around {c} leaves the build")
        cand = np.unique(cand)
        cand = cand[d[cand] < 0]
        d[cand] = step
        front = cand
    return np.flatnonzero(d >= 0)


# ------------------------------------------------------------------ hyperbolicity


def _four_point(dxy, dzw, dxz, dyw, dxw, dyz) -> np.ndarray:
    sums = np.sort(np.stack([dxy + dzw, dxz + dyw, dxw + dyz]), axis=0)
    return (sums[2] - sums[1]) / 2.0


def _delta_from_rows(rows: np.ndarray, sources: np.ndarray, targets: np.ndarray) -> float:
    """Max four-point defect with three points among sources and the fourth in targets."""
    k = len(sources)
    best = 0.0
    dS = rows[:, sources].astype(np.float64)
    dT = rows[:, targets].astype(np.float64)
    for a in range(k):
        for b in range(a + 1, k):
            for c in range(b + 1, k):
                val = _four_point(dS[a, b], dT[c], dS[a, c], dT[b], dT[a], dS[b, c])
                best = max(best, float(val.max(initial=0.0)))
    return best


def gromov_delta(g, r: int, samples: int = 10, targets: int = 4000, seed: int = 0) -> float:
    """Sampled four-point hyperbolicity constant of the ball of radius r around the root.

    Distances are measured inside the ball. Three points of each quadruple
    range over ``samples`` seeded sources (always including the root) and the
    fourth over up to ``targets`` seeded vertices of the ball.
    Accepts a DynGraph or a SymbolTree.
    """
    rng = np.random.default_rng(seed)
    if isinstance(g, SymbolTree):
        if r > g.depth:
            raise OutOfBuiltRegion(f"radius {r} exceeds tree depth {g.depth}")
        n = int(g.level_start[r + 1])
        pool = np.arange(n)
        src = np.unique(np.concatenate([[0], rng.choice(pool, min(samples, n), replace=False)]))
        rows = np.stack([_tree_bfs(g, int(v), n) for v in src])
    else:
        pool = g.ball_root(r)
        allowed = np.zeros(g.n_classes, dtype=bool)
        allowed[pool] = True
        src = np.unique(np.concatenate([[0], rng.choice(pool, min(samples, len(pool)),
                                                         replace=False)]))
        rows = np.stack([bfs_levels(g, int(v), allowed) for v in src])[:, : len(pool)]
    tgt = pool if len(pool) <= targets else np.sort(rng.choice(pool, targets, replace=False))
    tgt = np.unique(np.concatenate([tgt, src]))
    return _delta_from_rows(rows, np.searchsorted(pool, src), np.searchsorted(pool, tgt))


def _tree_bfs(t: SymbolTree, v: int, n: int) -> np.ndarray:
    par = t.parent[:n]
    nb: list[list[int]] = [[] for _ in range(n)]
    for c in range(1, n):
        nb[c].append(int(par[c]))
        nb[int(par[c])].append(c)
    out = np.full(n, -1, dtype=np.int32)
    out[v] = 0
    q = deque([v])
    while q:
        a = q.popleft()
        for b in nb[a]:
            if out[b] < 0:
                out[b] = out[a] + 1
                q.append(b)
    return out


# ------------------------------------------------------------------ overlap graph


@dataclass(eq=False)
class OverlapGraph:
    """Nonempty cylinders by level with tree edges and same-level adjacency."""

    scheme: Scheme
    depth: int
    level_start: np.ndarray
    parent: np.ndarray
    last: np.ndarray
    start: np.ndarray  # cylinder start on the circle
    length: np.ndarray
    image_start: np.ndarray  # image of the cylinder under the first (level - 1) iterates
    image_length: np.ndarray
    next_on_sphere: np.ndarray  # clockwise neighbour at the same level (-1 for the root)
    prev_on_sphere: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.parent)

    def level(self, v):
        return np.searchsorted(self.level_start, v, side="right") - 1

    def word(self, v: int) -> tuple[int, ...]:
        out = []
        while v:
            out.append(int(self.last[v]))
            v = int(self.parent[v])
        return tuple(reversed(out))

    def sphere_counts(self) -> np.ndarray:
        return np.diff(self.level_start)

    @cached_property
    def adjacency(self):
        from scipy.sparse import coo_matrix

        kids = np.arange(1, self.n_vertices)
        a = np.concatenate([self.parent[1:], kids, kids])
        b = np.concatenate([kids, self.next_on_sphere[1:], self.prev_on_sphere[1:]])
        keep = b >= 0
        a, b = a[keep], b[keep]
        n = self.n_vertices
        m = coo_matrix((np.ones(2 * len(a), dtype=np.int8),
                        (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(n, n))
        m = m.tocsr()
        m.data[:] = 1
        return m

    def bfs(self, source: int) -> np.ndarray:
        from scipy.sparse.csgraph import shortest_path

        d = shortest_path(self.adjacency, unweighted=True, indices=[source])[0]
        return np.where(np.isfinite(d), d, -1).astype(np.int64)


def build_overlap_graph(m: PiecewiseAffineMap, depth: int, tol: float = DEFAULT_TOL) -> OverlapGraph:
    """Nonempty cylinders of levels 1..depth and their circular adjacency.

    A child of a cylinder along label x is the part of the next branch image
    inside I_x; pieces shorter than ``tol`` (in image coordinates) are dropped.
    """
    s = m.scheme
    two_n = s.two_n
    z = np.asarray(m.z, dtype=float)
    a = np.asarray(m.a, dtype=float)
    lengths = np.asarray(m.lengths, dtype=float)
    lam = m.lam

    parent = [np.zeros(1, dtype=np.int64)]
    last = [np.zeros(1, dtype=np.int64)]
    start = [np.zeros(1)]
    length = [np.ones(1)]
    istart = [np.zeros(1)]
    ilen = [np.ones(1)]
    level_start = [0, 1]

    labels = np.arange(1, two_n + 1)
    parent.append(np.zeros(two_n, dtype=np.int64))
    last.append(labels)
    start.append(z[labels])
    length.append(lengths[labels])
    istart.append(z[labels])
    ilen.append(lengths[labels])
    level_start.append(1 + two_n)

    for lv in range(2, depth + 1):
        p_last, p_is, p_il = last[-1], istart[-1], ilen[-1]
        p_start = start[-1]
        # image of the previous image under branch p_last: an arc of length lam * p_il
        arc_s = circ(a[p_last] + lam * (p_is - z[p_last]))
        arc_l = lam * p_il
        # meet with every I_x
        off = circ(z[labels][None, :] - arc_s[:, None])  # where I_x starts inside the arc
        lo = np.where(off + lengths[labels][None, :] > 1.0, 0.0, off)
        hi = np.minimum(off + lengths[labels][None, :], arc_l[:, None])
        wrap_hi = np.minimum(off + lengths[labels][None, :] - 1.0, arc_l[:, None])
        head = np.where(off < arc_l[:, None], np.minimum(off + lengths[labels][None, :],
                                                         arc_l[:, None]) - off, 0.0)
        tail = np.where(off + lengths[labels][None, :] > 1.0, np.maximum(wrap_hi, 0.0), 0.0)
        if np.any((head > tol) & (tail > tol)):
            raise AmbiguousAdjacency("a branch image meets an interval in two pieces")
        use_tail = tail > tol
        piece_lo = np.where(use_tail, 0.0, off)
        piece_len = np.where(use_tail, tail, head)
        del lo, hi
        keep = piece_len > tol
        row, col = np.nonzero(keep)
        x = labels[col]
        plo, plen = piece_lo[row, col], piece_len[row, col]
        scale = lam ** (lv - 1)
        parent.append(level_start[-2] + row)
        last.append(x)
        start.append(circ(p_start[row] + plo / scale))
        length.append(plen / scale)
        istart.append(circ(arc_s[row] + plo))
        ilen.append(plen)
        level_start.append(level_start[-1] + len(x))
    level_start_a = np.asarray(level_start, dtype=np.int64)
    st = np.concatenate(start)
    ln = np.concatenate(length)
    nxt = np.full(len(st), -1, dtype=np.int64)
    prv = np.full(len(st), -1, dtype=np.int64)
    for lv in range(1, depth + 1):
        lo, hi = level_start_a[lv], level_start_a[lv + 1]
        order = lo + np.argsort(st[lo:hi], kind="stable")
        ends = circ(st[order] + ln[order])
        gaps = circ_diff(st[np.roll(order, -1)], ends)
        if np.any(np.abs(gaps) > tol * max(1.0, m.lam ** lv) * 1e-3 + 1e-12):
            raise AmbiguousAdjacency(f"level {lv} cylinders do not tile the circle "
                                     f"(worst gap {np.abs(gaps).max():.3g})")
        nxt[order] = np.roll(order, -1)
        prv[order] = np.roll(order, 1)
    return OverlapGraph(s, depth, level_start_a, np.concatenate(parent), np.concatenate(last),
                        st, ln, np.concatenate(istart), np.concatenate(ilen), nxt, prv)


def project(g0: OverlapGraph, g: DynGraph) -> np.ndarray:
    """Word id in g of every overlap vertex; raises if the two sets of words differ."""
    if g0.depth > g.depth:
        raise OutOfBuiltRegion("overlap graph is deeper than the folded graph")
    two_n = g.two_n
    out = np.zeros(g0.n_vertices, dtype=np.int64)
    for lv in range(1, g0.depth + 1):
        lo, hi = g0.level_start[lv], g0.level_start[lv + 1]
        wlo, whi = g.w_level_start[lv], g.w_level_start[lv + 1]
        if hi - lo != whi - wlo:
            raise InconsistentFold(f"level {lv}: {hi - lo} cylinders vs {whi - wlo} real words")
        wkeys = g.w_parent[wlo:whi] * (two_n + 1) + g.w_last[wlo:whi]
        order = np.argsort(wkeys)
        keys = out[g0.parent[lo:hi]] * (two_n + 1) + g0.last[lo:hi]
        pos = np.searchsorted(wkeys, keys, sorter=order)
        pos = np.clip(pos, 0, len(order) - 1)
        hit = wlo + order[pos]
        if np.any(wkeys[order[pos]] != keys):
            raise InconsistentFold(f"level {lv}: a nonempty cylinder is not a real word")
        out[lo:hi] = hit
    return out


# ------------------------------------------------------------------ numeric pair checks


def cylinders(m: PiecewiseAffineMap, words: np.ndarray, lengths: np.ndarray, tol: float = 1e-12):
    """Vectorised cylinders of padded words: (start, length, image start, image length).

    The image is the full iterate Phi^n of the cylinder, n being the word length.
    Empty cylinders come back with length 0.
    """
    z = np.asarray(m.z, dtype=float)
    a = np.asarray(m.a, dtype=float)
    L = np.asarray(m.lengths, dtype=float)
    lam = m.lam
    w0 = words[:, 0]
    cs, cl = z[w0].copy(), L[w0].copy()
    img_s, img_l = cs.copy(), cl.copy()
    for pos in range(1, words.shape[1]):
        live = (pos < lengths) & (cl > 0)
        prev = words[live, pos - 1]
        x = words[live, pos]
        arc_s = circ(a[prev] + lam * (img_s[live] - z[prev]))
        arc_l = lam * img_l[live]
        off = circ(z[x] - arc_s)
        head = np.where(off < arc_l, np.minimum(off + L[x], arc_l) - off, 0.0)
        tail = np.where(off + L[x] > 1.0, np.maximum(np.minimum(off + L[x] - 1.0, arc_l), 0), 0.0)
        use_tail = tail > tol
        plo = np.where(use_tail, 0.0, off)
        plen = np.where(use_tail, tail, head)
        plen = np.where(plen > tol, plen, 0.0)
        scale = lam ** pos
        idx = np.flatnonzero(live)
        cs[idx] = circ(cs[idx] + plo / scale)
        cl[idx] = plen / scale
        img_s[idx] = circ(arc_s + plo)
        img_l[idx] = plen
    last = words[np.arange(len(words)), lengths - 1]
    full_s = circ(a[last] + lam * (img_s - z[last]))
    return cs, cl, full_s, lam * img_l


@dataclass
class PairCheck:
    n_pairs: int
    adjacent_gap: float  # worst gap between the two cylinders
    touch_gap: float  # worst distance between the touching image endpoints
    overlap: float  # worst overlap of the two images beyond a point
    min_image: float  # shortest image (non-degeneracy)
    failures: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def check_pairs(m: PiecewiseAffineMap, g: DynGraph, tol: float = DEFAULT_TOL,
                max_level: int | None = None) -> PairCheck:
    """Numeric check of every pair class: adjacent cylinders whose images touch at one point.

    For every pair class the left (gamma) cylinder must end where the right
    (delta) one starts, and after the full iterate the two images must share
    exactly one endpoint while their union stays a nondegenerate arc.
    """
    top = g.depth if max_level is None else min(max_level, g.depth)
    cls = np.flatnonzero((g.kind == KIND_PAIR) & (g.level(np.arange(g.n_classes)) <= top))
    if not len(cls):
        return PairCheck(0, 0.0, 0.0, 0.0, 0.0)
    lw, lr = [], []
    for side in (0, 1):
        wid = g.cwords[cls, side]
        words, lens = _word_matrix(g, wid)
        lw.append(words)
        lr.append(lens)
    ls, ll, lis, lil = cylinders(m, lw[0], lr[0])
    rs, rl, ris, ril = cylinders(m, lw[1], lr[1])
    adj = np.abs(circ_diff(circ(ls + ll), rs)) / np.maximum(np.minimum(ll, rl), 1e-300)
    touch = np.abs(circ_diff(circ(lis + lil), ris))
    overlap = np.maximum(0.0, -circ_diff(ris, circ(lis + lil)))
    bad = (adj > tol * 1e3) | (touch > tol) | (overlap > tol) | (ll <= 0) | (rl <= 0) \
        | (lil + ril >= 1.0) | (np.minimum(lil, ril) <= tol)
    return PairCheck(len(cls), float(np.max(adj)), float(touch.max()), float(overlap.max()),
                     float(np.minimum(lil, ril).min()), [int(c) for c in cls[bad]])


def _word_matrix(g: DynGraph, wids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lv = np.searchsorted(g.w_level_start, wids, side="right") - 1
    width = int(lv.max())
    out = np.zeros((len(wids), width), dtype=np.int64)
    cur = wids.copy()
    for pos in range(width - 1, -1, -1):
        live = lv > pos
        out[live, pos] = g.w_last[cur[live]]
        cur[live] = g.w_parent[cur[live]]
    return out, lv


# ------------------------------------------------------------------ growth


def sphere_counts(s: Scheme, depth: int, splits: np.ndarray | None = None) -> list[int]:
    """Number of real words per level, by counting word states instead of building.

    A state records everything the fold rules look at: the class size, the
    side, the last letter, both run counters and the split position.
    """
    if splits is None:
        splits = default_splits(s, depth)
    two_n = s.two_n
    states: dict[tuple, int] = {}
    for x in s.labels:
        key = (1, 0, x, 1, 1, 0, 0)
        states[key] = states.get(key, 0) + 1
    counts = [1, two_n]
    for _ in range(1, depth):
        nxt: dict[tuple, int] = {}
        for (nw, side, last, dr, gr, anc, t), cnt in states.items():
            if nw == 1:
                start, count = s.delta[last], two_n - 1
            else:
                sp = int(splits[anc, min(t, splits.shape[1] - 1)])
                if side == 0:
                    start, count = s.delta[last], (sp - s.delta[last]) % two_n + 1
                else:
                    start, count = sp, (s.gamma[last] - sp) % two_n + 1
            x = start
            for _ in range(count):
                dr2 = dr + 1 if x == s.delta[last] else 1
                gr2 = gr + 1 if x == s.gamma[last] else 1
                if dr2 == s.k(x):
                    key = (2, 1, x, dr2, gr2, s.power("delta", x, -(s.k(x) - 1)), 0)
                elif gr2 == s.k(s.iota[x]):
                    j = s.zeta[s.power("gamma", x, -(s.k(s.iota[x]) - 1))]
                    key = (2, 0, x, dr2, gr2, j, 0)
                elif nw == 2 and x == int(splits[anc, min(t, splits.shape[1] - 1)]):
                    key = (2, side, x, dr2, gr2, anc, t + 1)
                else:
                    key = (1, 0, x, dr2, gr2, 0, 0)
                nxt[key] = nxt.get(key, 0) + cnt
                x = s.zeta[x]
        states = nxt
        counts.append(sum(states.values()))
    return counts


# ------------------------------------------------------------------ quasi-isometry


@dataclass
class QIReport:
    K: int
    pairs: int
    upper_violations: int
    lower_violations: int
    adjacent_max: int  # largest Gamma distance between same-level neighbours in the overlap graph
    ancestor_mismatch: int

    @property
    def ok(self) -> bool:
        return not (self.upper_violations or self.lower_violations or self.ancestor_mismatch) \
            and self.adjacent_max <= self.K


def qi_check(g0: OverlapGraph, g: DynGraph, samples: int = 1000, max_level: int = 3,
             seed: int = 0) -> QIReport:
    """Compare distances in the overlap graph with distances between projected classes."""
    s = g.scheme
    K = max(s.k(j) for j in s.labels)
    rng = np.random.default_rng(seed)
    proj = g.w_class[project(g0, g)]
    top = int(g0.level_start[max_level + 1])
    n_src = max(1, int(np.sqrt(samples)))
    srcs = rng.choice(top, n_src, replace=False)
    per = -(-samples // n_src)
    us, vs, d0 = [], [], []
    for u in srcs:
        row = g0.bfs(int(u))
        tg = rng.choice(top, per, replace=True)
        us.append(np.full(per, u))
        vs.append(tg)
        d0.append(row[tg])
    us = np.concatenate(us)[:samples]
    vs = np.concatenate(vs)[:samples]
    d0 = np.concatenate(d0)[:samples]
    d1 = dist_many(g, proj[us], proj[vs])
    upper = int(np.sum(d1 > K * d0))
    lower = int(np.sum(d1 < d0 / K - 1))
    # same-level neighbours
    lo, hi = g0.level_start[1], g0.level_start[max_level + 1]
    a = np.arange(lo, hi)
    adj = dist_many(g, proj[a], proj[g0.next_on_sphere[a]])
    # ancestor pairs: walk up from each sampled vertex
    anc_bad = 0
    for v in vs[:200]:
        u = int(v)
        while u:
            u = int(g0.parent[u])
            if dist(g, int(proj[u]), int(proj[v])) != g0.level(v) - g0.level(u):
                anc_bad += 1
    return QIReport(K, len(us), upper, lower, int(adj.max()), anc_bad)


# ------------------------------------------------------------------ export


def _fmt_word(w: Iterable[int]) -> str:
    return ",".join(str(x) for x in w) or "0"


def export_dot(g: DynGraph, radius: int = 2) -> str:
    """DOT text for the ball of the given radius around the root; output is deterministic."""
    cls = g.ball_root(radius)
    lines = [
        "digraph dyngraph {",
        f"  // scheme iota={list(g.scheme.iota[1:])} radius={radius}",
        f"  // admissible tree vertices before folding: {tree_size(g.two_n, radius)}",
        f"  // classes after folding: {len(cls)}",
        "  rankdir=TB;",
        "  node [shape=circle, fontsize=9];",
    ]
    for lv in range(radius + 1):
        members = [int(c) for c in g.sphere(lv)]
        lines.append(f"  {{ rank=same; {' '.join(f'n{c}' for c in members)} }}")
    for c in cls:
        c = int(c)
        words = g.words(c)
        text = " | ".join(_fmt_word(w) for w in words)
        attrs = f'label="{text}"'
        if g.kind[c] == KIND_PAIR:
            attrs += ", shape=box, style=bold"
        elif g.kind[c] == KIND_CASCADE:
            attrs += ", shape=box"
        lines.append(f"  n{c} [{attrs}];")
    lv_of = g.level(cls)
    for c, lv in zip(cls, lv_of):
        if lv >= radius:
            continue
        for x in range(1, g.two_n + 1):
            t = int(g.nbr[c, x - 1])
            if t >= 0 and g.level(t) == lv + 1:
                lines.append(f'  n{int(c)} -> n{t} [label="Psi{x}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_json(g: DynGraph, radius: int | None = None) -> str:
    radius = g.depth if radius is None else radius
    cls = g.ball_root(radius)
    doc = {
        "two_n": g.two_n,
        "iota": list(g.scheme.iota[1:]),
        "depth": g.depth,
        "radius": radius,
        "classes": [
            {"id": int(c), "level": int(g.level(c)), "kind": int(g.kind[c]),
             "words": [list(w) for w in g.words(int(c))]}
            for c in cls
        ],
        "edges": [
            [int(c), x, int(g.nbr[c, x - 1])]
            for c in cls for x in range(1, g.two_n + 1)
            if 0 <= g.nbr[c, x - 1] and g.level(int(g.nbr[c, x - 1])) == g.level(c) + 1
        ],
    }
    return json.dumps(doc, indent=1)
