"""Independent reference computations used by the tests.

None of these import the library's graph or action code.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np


# ------------------------------------------------------------------ permutations by composition


def perm_dict(table: Sequence[int]) -> dict[int, int]:
    return {j: int(table[j - 1]) for j in range(1, len(table) + 1)}


def compose(f: dict[int, int], g: dict[int, int]) -> dict[int, int]:
    """f after g."""
    return {j: f[g[j]] for j in g}


def cycles_of(f: dict[int, int]) -> list[tuple[int, ...]]:
    seen, out = set(), []
    for j in sorted(f):
        if j in seen:
            continue
        cyc = [j]
        seen.add(j)
        while f[cyc[-1]] != j:
            cyc.append(f[cyc[-1]])
            seen.add(cyc[-1])
        out.append(tuple(cyc))
    return out


def valid_pairings(two_n: int) -> list[tuple[int, ...]]:
    """Brute force over all permutations: fixed-point-free involutions with no adjacent pair
    and every zeta*iota cycle of even length at least 4."""
    out = []
    zeta = {j: j % two_n + 1 for j in range(1, two_n + 1)}
    for perm in itertools.permutations(range(1, two_n + 1)):
        io = dict(zip(range(1, two_n + 1), perm))
        if any(io[j] == j or io[io[j]] != j for j in io):
            continue
        if any(io[j] == zeta[j] or zeta[io[j]] == j for j in io):
            continue
        if any(len(c) % 2 or len(c) < 4 for c in cycles_of(compose(zeta, io))):
            continue
        out.append(perm)
    return out


# ------------------------------------------------------------------ Fuchsian octagon group


def _translation(direction: float, distance: float) -> np.ndarray:
    """Hyperbolic translation of the unit disc along the diameter at angle ``direction``."""
    c, s = np.cosh(distance / 2), np.sinh(distance / 2)
    rot = np.diag([np.exp(0.5j * direction), np.exp(-0.5j * direction)])
    return rot @ np.array([[c, s], [s, c]]) @ np.linalg.inv(rot)


def octagon_generators() -> dict[int, np.ndarray]:
    """Side pairings of the regular octagon with angles pi/4: side j goes to side j + 4.

    The octagon's centre-to-side distance h has cosh h = cot(pi/8); each pairing
    translates by 2h along the diameter through the side midpoints.
    """
    h = float(np.arccosh(1.0 / np.tan(np.pi / 8)))
    return {j: _translation(2 * np.pi * (j - 0.5) / 8, 2 * h) for j in range(1, 9)}


def word_matrix(gens: dict[int, np.ndarray], word: Sequence[int]) -> np.ndarray:
    """Matrix of the composition that applies word[0] first."""
    m = np.eye(2, dtype=complex)
    for x in word:
        m = gens[x] @ m
    return m


def matrix_key(m: np.ndarray, digits: int = 6) -> tuple:
    """Hashable key of a matrix up to sign (PSU(1,1))."""
    flat = m.reshape(-1)
    lead = flat[np.argmax(np.abs(flat) > 1e-9)]
    if lead.real < 0 or (abs(lead.real) < 1e-9 and lead.imag < 0):
        flat = -flat
    return tuple(np.round(np.concatenate([flat.real, flat.imag]), digits) + 0.0)


def is_identity_matrix(m: np.ndarray, tol: float = 1e-7) -> bool:
    eye = np.eye(2)
    return min(np.abs(m - eye).max(), np.abs(m + eye).max()) < tol


def group_spheres(gens: dict[int, np.ndarray], inverse: dict[int, int], radius: int):
    """Breadth-first search in the Cayley graph: sphere sizes and element -> length."""
    start = np.eye(2, dtype=complex)
    lengths = {matrix_key(start): 0}
    frontier = [start]
    sizes = [1]
    for r in range(1, radius + 1):
        nxt = []
        for m in frontier:
            for x, g in gens.items():
                p = g @ m
                key = matrix_key(p)
                if key not in lengths:
                    lengths[key] = r
                    nxt.append(p)
        sizes.append(len(nxt))
        frontier = nxt
    return sizes, lengths


# ------------------------------------------------------------------ linear algebra


def power_iteration(a: np.ndarray, iters: int = 5000) -> float:
    v = np.ones(a.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = a @ v
        lam = float(np.linalg.norm(w) / np.linalg.norm(v))
        v = w / np.linalg.norm(w)
    return lam


def largest_real_root(coeffs: Sequence[float]) -> float:
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) < 1e-7].real
    return float(real.max())
