"""2-complex obtained by gluing a polygon into every relation loop of the graph.

Faces are keyed by their edge sets, so a loop found from any of its corners
is stored once. The link of a vertex is read from the face corners at that
vertex; a vertex is locally planar when these corners chain its incident edges
into one cycle.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from bsl_lab.combinatorics import Scheme
from bsl_lab.dyngraph import DynGraph, RelationLoop, relation_loops
from bsl_lab.errors import DepthInsufficient, IncompleteLink, IncompleteLoop, NotInterior
from bsl_lab.group_action import act_many


def _edge(u: int, v: int) -> frozenset:
    return frozenset((u, v))


@dataclass(frozen=True)
class Face:
    j: int
    labels: tuple[int, ...]
    vertices: tuple[int, ...]  # closed, first == last

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def edges(self) -> frozenset:
        vs = self.vertices
        return frozenset(_edge(vs[i], vs[i + 1]) for i in range(self.size))


@dataclass(frozen=True, eq=False)
class Complex2:
    graph: DynGraph
    radius: int
    faces: tuple[Face, ...]
    interior: frozenset[int]
    _index: dict = field(default=None, repr=False)
    _corners: dict = field(default=None, repr=False)

    @property
    def face_keys(self) -> dict[frozenset, int]:
        if self._index is None:
            object.__setattr__(self, "_index", {f.edges: i for i, f in enumerate(self.faces)})
        return self._index

    def edge_face_counts(self) -> Counter:
        out: Counter = Counter()
        for f in self.faces:
            out.update(f.edges)
        return out

    def interior_edges(self) -> list[frozenset]:
        g = self.graph
        out = []
        for v in sorted(self.interior):
            for w in g.nbr[v]:
                if v < w and int(w) in self.interior:
                    out.append(_edge(v, int(w)))
        return out

    def corners(self, v: int) -> list[tuple[int, int]]:
        """(previous, next) neighbours of v around every face through v."""
        if self._corners is None:
            table: dict[int, list[tuple[int, int]]] = {}
            for f in self.faces:
                vs = f.vertices
                for i in range(f.size):
                    table.setdefault(vs[i], []).append((vs[i - 1] if i else vs[-2], vs[i + 1]))
            object.__setattr__(self, "_corners", table)
        return list(self._corners.get(v, ()))

    def without_face(self, i: int) -> "Complex2":
        return replace(self, faces=self.faces[:i] + self.faces[i + 1:], _index=None,
                       _corners=None)


def attach_faces(g: DynGraph, r: int) -> Complex2:
    """Glue a face into every relation loop through a vertex of the ball of radius r."""
    if r > g.depth:
        raise IncompleteLoop(f"radius {r} exceeds built depth {g.depth}")
    faces: dict[frozenset, Face] = {}
    for c in g.ball_root(r):
        try:
            loops: list[RelationLoop] = relation_loops(g, int(c))
        except IncompleteLink as exc:
            raise IncompleteLoop(str(exc)) from exc
        for lp in loops:
            if lp.edges not in faces:
                faces[lp.edges] = Face(lp.j, lp.labels, lp.vertices)
    interior = frozenset(int(c) for c in g.ball_root(r))
    return Complex2(g, r, tuple(faces.values()), interior)


def link_is_circle(cx: Complex2, v: int) -> bool:
    """Whether the face corners at v chain all incident edges into a single cycle."""
    if v not in cx.interior:
        raise NotInterior(f"vertex {v} is outside the ball of radius {cx.radius}")
    nbrs = [int(w) for w in cx.graph.nbr[v]]
    if len(set(nbrs)) != len(nbrs):
        return False
    adj: dict[int, list[int]] = {w: [] for w in nbrs}
    for a, b in cx.corners(v):
        if a not in adj or b not in adj:
            return False
        adj[a].append(b)
        adj[b].append(a)
    if any(len(x) != 2 for x in adj.values()):
        return False
    # walk the corner cycle from one edge and see whether it covers every edge
    start = nbrs[0]
    prev, cur, seen = None, start, 1
    while True:
        a, b = adj[cur]
        nxt = b if a == prev else a
        prev, cur = cur, nxt
        if cur == start:
            break
        seen += 1
    return seen == len(nbrs)


def corners_follow_rotation(cx: Complex2, v: int) -> bool:
    """Whether every corner at v joins two edges adjacent in the cyclic label order."""
    g = cx.graph
    s = g.scheme
    label = {int(w): x for x, w in zip(s.labels, g.nbr[v])}
    for a, b in cx.corners(v):
        la, lb = label[a], label[b]
        if s.zeta[la] != lb and s.zeta[lb] != la:
            return False
    return True


# ------------------------------------------------------------------ quotient


class QuotientCounts(NamedTuple):
    V: int
    E: int
    F: int
    chi: int
    genus: float


class _Components:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> None:
        self.parent[self.find(a)] = self.find(b)

    def count(self) -> int:
        return len({self.find(x) for x in self.parent})


def root_images(g: DynGraph, vs) -> np.ndarray:
    """Image of every vertex under the action of its own canonical word."""
    vs = np.asarray(vs, dtype=np.int64).reshape(-1)
    words, lens = g.canonical_matrix(vs)
    cur = vs.copy()
    for pos in range(words.shape[1]):
        live = np.flatnonzero(lens > pos)
        cur[live] = act_many(g, words[live, pos], cur[live])
        if np.any(cur[live] < 0):
            raise DepthInsufficient("translating a vertex leaves the build")
    return cur


def quotient_counts(cx: Complex2) -> QuotientCounts:
    """Orbit counts of vertices, edges and faces under the group action.

    Each cell is moved by the canonical word of one of its vertices, which
    sends that vertex to the root. The action preserves edge labels, so the
    moved cell is read off by walking its labels from the root. Cells that
    become identified from different corners are merged.
    """
    g = cx.graph
    s = g.scheme
    verts = np.asarray(sorted(cx.interior), dtype=np.int64)
    normal = set(root_images(g, verts).tolist())
    V = len(normal)

    # an edge moved to the root from either end leaves the root along the label
    # it carries at that end
    edges = _Components()
    for v in verts:
        for x in s.labels:
            w = int(g.nbr[v, x - 1])
            back = np.flatnonzero(g.nbr[w] == v) if w >= 0 else []
            if len(back) != 1:
                raise DepthInsufficient(f"edge at {v} labelled {x} leaves the build")
            edges.union(x, int(back[0]) + 1)
    E = edges.count()

    faces = _Components()
    keys = cx.face_keys
    for f in cx.faces:
        reps = []
        for i in range(f.size):
            word = f.labels[i:] + f.labels[:i]
            walk = [0]
            cur = 0
            for t in word:
                cur = int(g.nbr[cur, t - 1])
                walk.append(cur)
            if cur != 0:
                raise DepthInsufficient(f"face {f.labels} does not close at the root")
            key = frozenset(_edge(walk[k], walk[k + 1]) for k in range(len(word)))
            if key not in keys:
                raise DepthInsufficient("a translated face is missing from the complex")
            reps.append(keys[key])
        for a in reps[1:]:
            faces.union(reps[0], a)
    F = faces.count()
    if F == 0:
        raise DepthInsufficient(f"no face lies inside the ball of radius {cx.radius}")
    chi = V - E + F
    return QuotientCounts(V, E, F, chi, (2 - chi) / 2)


def presentation_counts(s: Scheme) -> tuple[int, int, int]:
    """Cells of the one-vertex complex: generator pairs and one face per gamma-cycle."""
    return 1, s.two_n // 2, len(s.gamma_cycles)


@dataclass
class SurfaceReport:
    radius: int
    n_faces: int
    face_sizes: dict[int, int]
    edge_incidence: dict[int, int]
    link_failures: list[int]
    rotation_failures: list[int]
    counts: QuotientCounts
    presentation: tuple[int, int, int]

    @property
    def ok(self) -> bool:
        return (not self.link_failures and not self.rotation_failures
                and set(self.edge_incidence) == {2}
                and (self.counts.V, self.counts.E, self.counts.F) == self.presentation)

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "faces": self.n_faces,
            "face_sizes": self.face_sizes,
            "edge_incidence": self.edge_incidence,
            "link_failures": self.link_failures,
            "rotation_failures": self.rotation_failures,
            "V": self.counts.V, "E": self.counts.E, "F": self.counts.F,
            "chi": self.counts.chi, "genus": self.counts.genus,
            "presentation": list(self.presentation),
            "ok": self.ok,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def surface_report(g: DynGraph, r: int) -> SurfaceReport:
    cx = attach_faces(g, r)
    counts = cx.edge_face_counts()
    incidence = Counter(counts[e] for e in cx.interior_edges())
    links = [v for v in sorted(cx.interior) if not link_is_circle(cx, v)]
    rot = [v for v in sorted(cx.interior) if not corners_follow_rotation(cx, v)]
    return SurfaceReport(
        radius=r,
        n_faces=len(cx.faces),
        face_sizes=dict(Counter(f.size for f in cx.faces)),
        edge_incidence=dict(incidence),
        link_failures=links,
        rotation_failures=rot,
        counts=quotient_counts(cx),
        presentation=presentation_counts(g.scheme),
    )
