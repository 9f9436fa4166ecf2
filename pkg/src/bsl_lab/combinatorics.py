"""Index permutations zeta, iota, gamma, delta on {1..2N} and their identities.

All indices are 1-based. Tables are stored as tuples of length 2N + 1 with a
dummy entry at position 0 so that ``table[j]`` reads naturally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from bsl_lab.errors import (
    AdjacentPairing,
    HasFixedPoint,
    IndexOutOfRange,
    NotInvolution,
    OddCycle,
    TooLarge,
    TooSmall,
)

PERM_KINDS = ("zeta", "zeta_inv", "iota", "gamma", "delta", "gamma_inv", "delta_inv")
ENUMERATE_LIMIT = 12


def _inverse(table: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(table)
    for j in range(1, len(table)):
        inv[table[j]] = j
    return tuple(inv)


def _cycles(table: Sequence[int]) -> list[tuple[int, ...]]:
    seen: set[int] = set()
    out = []
    for start in range(1, len(table)):
        if start in seen:
            continue
        cyc = [start]
        seen.add(start)
        j = table[start]
        while j != start:
            cyc.append(j)
            seen.add(j)
            j = table[j]
        out.append(tuple(cyc))
    return out


@dataclass(frozen=True)
class Scheme:
    """Validated permutation package. Build it with :func:`build_scheme`."""

    two_n: int
    iota: tuple[int, ...]
    zeta: tuple[int, ...] = field(repr=False)
    zeta_inv: tuple[int, ...] = field(repr=False)
    gamma: tuple[int, ...] = field(repr=False)
    delta: tuple[int, ...] = field(repr=False)
    gamma_inv: tuple[int, ...] = field(repr=False)
    delta_inv: tuple[int, ...] = field(repr=False)
    ell: tuple[int, ...] = field(repr=False)
    gamma_cycles: tuple[tuple[int, ...], ...] = field(repr=False)
    delta_cycles: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def labels(self) -> range:
        return range(1, self.two_n + 1)

    def k(self, j: int) -> int:
        return self.ell[j] // 2

    def power(self, kind: str, j: int, m: int) -> int:
        """Apply the permutation ``kind`` m times (m may be negative)."""
        if m < 0:
            kind = {"gamma": "gamma_inv", "delta": "delta_inv", "zeta": "zeta_inv",
                    "gamma_inv": "gamma", "delta_inv": "delta", "zeta_inv": "zeta",
                    "iota": "iota"}[kind]
            m = -m
        table = getattr(self, kind)
        for _ in range(m):
            j = table[j]
        return j

    def c(self, j: int) -> int:
        """Last letter of the gamma-side half relation anchored at j."""
        return self.power("gamma", self.zeta_inv[j], self.k(j) - 1)

    def d(self, j: int) -> int:
        """Last letter of the delta-side half relation anchored at j."""
        return self.power("delta", j, self.k(j) - 1)

    def delta_word(self, j: int) -> tuple[int, ...]:
        """(j, delta(j), ..., delta^{k-1}(j)): itinerary of the right orbit of z_j."""
        out = [j]
        for _ in range(self.k(j) - 1):
            out.append(self.delta[out[-1]])
        return tuple(out)

    def gamma_word(self, j: int) -> tuple[int, ...]:
        """(zeta^-1(j), gamma(.), ..., gamma^{k-1}(.)): itinerary of the left orbit of z_j."""
        out = [self.zeta_inv[j]]
        for _ in range(self.k(j) - 1):
            out.append(self.gamma[out[-1]])
        return tuple(out)

    def relator(self, j: int) -> tuple[int, ...]:
        """Full relator through j: delta-word of j followed by the inverse gamma-word.

        The inverse of a word (w1..wn) is (iota(wn)..iota(w1)). Letters are
        listed in application order.
        """
        inv_gamma = tuple(self.iota[x] for x in reversed(self.gamma_word(j)))
        return self.delta_word(j) + inv_gamma

    def to_dict(self) -> dict:
        return {"two_n": self.two_n, "iota": list(self.iota[1:])}


def build_scheme(two_n: int, iota: Sequence[int]) -> Scheme:
    if two_n < 8:
        raise TooSmall(f"two_n={two_n} < 8")
    if two_n % 2:
        raise OddCycle(f"two_n={two_n} is odd")
    if len(iota) != two_n:
        raise IndexOutOfRange(f"iota has {len(iota)} entries, expected {two_n}")
    io = (0, *(int(x) for x in iota))
    for j in range(1, two_n + 1):
        if not 1 <= io[j] <= two_n:
            raise IndexOutOfRange(f"iota({j})={io[j]}")
    for j in range(1, two_n + 1):
        if io[j] == j:
            raise HasFixedPoint(f"iota({j})={j}")
        if io[io[j]] != j:
            raise NotInvolution(f"iota(iota({j}))={io[io[j]]}")
    zeta = (0, *(j % two_n + 1 for j in range(1, two_n + 1)))
    zeta_inv = _inverse(zeta)
    for j in range(1, two_n + 1):
        if io[j] in (zeta[j], zeta_inv[j]):
            raise AdjacentPairing(f"iota({j})={io[j]} is adjacent to {j}")
    gamma = (0, *(zeta_inv[io[j]] for j in range(1, two_n + 1)))
    delta = (0, *(zeta[io[j]] for j in range(1, two_n + 1)))
    delta_cycles = _cycles(delta)
    ell = [0] * (two_n + 1)
    for cyc in delta_cycles:
        if len(cyc) % 2 or len(cyc) < 4:
            raise OddCycle(f"delta-cycle {cyc} has length {len(cyc)}")
        for j in cyc:
            ell[j] = len(cyc)
    return Scheme(
        two_n=two_n,
        iota=io,
        zeta=zeta,
        zeta_inv=zeta_inv,
        gamma=gamma,
        delta=delta,
        gamma_inv=_inverse(gamma),
        delta_inv=_inverse(delta),
        ell=tuple(ell),
        gamma_cycles=tuple(_cycles(gamma)),
        delta_cycles=tuple(delta_cycles),
    )


def genus2_scheme() -> Scheme:
    """The scheme iota = (1 5)(2 6)(3 7)(4 8)."""
    return build_scheme(8, [5, 6, 7, 8, 1, 2, 3, 4])


def apply_perm(s: Scheme, kind: str, j: int) -> int:
    if kind not in PERM_KINDS:
        raise ValueError(f"unknown permutation {kind!r}")
    if not 1 <= j <= s.two_n:
        raise IndexOutOfRange(f"index {j} outside 1..{s.two_n}")
    return getattr(s, kind)[j]


@dataclass
class IdentityReport:
    checked: dict[str, int]
    violations: list[tuple[str, int, int]]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_perm_identities(s: Scheme) -> IdentityReport:
    """Exhaustively test the conjugacy, same-cycle, adjacency and gamma/delta identities.

    Violations are recorded as (identity name, j, m).
    """
    io, P = s.iota, s.power
    checked = {"conjugacy": 0, "same_cycle": 0, "adjacency": 0, "gamma_delta": 0,
               "paired_k": 0, "cycle_length": 0}
    bad: list[tuple[str, int, int]] = []

    def record(name: str, ok: bool, j: int, m: int = 0) -> None:
        checked[name] += 1
        if not ok:
            bad.append((name, j, m))

    for j in s.labels:
        record("conjugacy", s.gamma[j] == io[s.delta_inv[io[j]]], j)
        record("cycle_length", s.ell[j] == s.ell[s.delta[j]] and
               len(next(c for c in s.gamma_cycles if io[j] in c)) == s.ell[j], j)
        zj = s.zeta_inv[j]
        gcyc = next(c for c in s.gamma_cycles if zj in c)
        for m in range(1, s.ell[j] + 1):
            lhs = io[P("delta", j, m - 1)]
            record("same_cycle", lhs == P("gamma", zj, -m) and io[j] in gcyc and lhs in gcyc,
                   j, m)
        for m in range(1, s.ell[io[j]] + 1):
            record("adjacency", s.zeta[P("gamma", j, m)] == io[P("gamma", j, m - 1)], j, m)
            record("gamma_delta", s.gamma[io[P("delta", j, m)]] == io[P("delta", j, m - 1)], j, m)
            record("gamma_delta",
                   s.delta[io[P("gamma", zj, m)]] == io[P("gamma", zj, m - 1)], j, m)
        # even-length corollary of the adjacency identity
        kb = s.k(io[j])
        record("adjacency", s.zeta[io[P("delta", s.zeta[j], kb - 1)]] == io[P("gamma", j, kb - 1)],
               j, -1)
        record("paired_k", s.k(io[s.c(j)]) == s.k(j), j)
    return IdentityReport(checked, bad)


def _matchings(items: list[int]) -> Iterator[list[tuple[int, int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, other in enumerate(rest):
        for tail in _matchings(rest[:i] + rest[i + 1:]):
            yield [(first, other), *tail]


def enumerate_involutions(two_n: int, limit: int = ENUMERATE_LIMIT) -> list[Scheme]:
    """All valid schemes on 2N labels, by exhaustive search over perfect matchings."""
    if two_n > limit:
        raise TooLarge(f"two_n={two_n} exceeds enumeration bound {limit}")
    if two_n < 8:
        raise TooSmall(f"two_n={two_n} < 8")
    out = []
    for match in _matchings(list(range(1, two_n + 1))):
        io = [0] * (two_n + 1)
        for a, b in match:
            io[a], io[b] = b, a
        try:
            out.append(build_scheme(two_n, io[1:]))
        except (AdjacentPairing, OddCycle):
            continue
    return out


def scheme_from_dict(doc: dict) -> Scheme:
    return build_scheme(int(doc["two_n"]), list(doc["iota"]))


def load_scheme(path: str | Path) -> Scheme:
    return scheme_from_dict(json.loads(Path(path).read_text()))


def dump_scheme(s: Scheme, path: str | Path) -> None:
    Path(path).write_text(json.dumps(s.to_dict(), indent=2) + "\n")
