"""Exact Catalan and ballot-type tables and checks of the identities they obey.

Everything here runs on Python integers; no floating point enters an identity
check. ``gf_residual`` is the single exception since it compares a truncated
series against its closed form at a real point.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator


@dataclass(frozen=True)
class CatalanTable:
    """Catalan numbers ``A_0 .. A_{n_max}``."""

    values: tuple[int, ...]

    @property
    def n_max(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, n: int) -> int:
        return self.values[n]

    def to_json(self) -> str:
        return json.dumps({"catalan": [str(v) for v in self.values]})

    @classmethod
    def from_json(cls, text: str) -> "CatalanTable":
        return cls(tuple(int(v) for v in json.loads(text)["catalan"]))


@dataclass(frozen=True)
class BallotTable:
    """Composition sums ``B_{n,m}`` for ``0 <= n, m <= n_max``.

    Entries outside ``1 <= m <= n`` (other than ``B_{0,0} = 1``) are zero.
    """

    rows: tuple[tuple[int, ...], ...]

    @property
    def n_max(self) -> int:
        return len(self.rows) - 1

    def __getitem__(self, nm: tuple[int, int]) -> int:
        n, m = nm
        if n < 0 or m < 0 or n > self.n_max or m > self.n_max:
            return 0
        return self.rows[n][m]

    def to_json(self) -> str:
        return json.dumps({"ballot": [[str(v) for v in row] for row in self.rows]})

    @classmethod
    def from_json(cls, text: str) -> "BallotTable":
        rows = json.loads(text)["ballot"]
        return cls(tuple(tuple(int(v) for v in row) for row in rows))


@lru_cache(maxsize=64)
def catalan_table(n_max: int) -> CatalanTable:
    """A_0 = 1, A_n = sum_h A_h A_{n-h-1}."""
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    a = [1]
    for n in range(1, n_max + 1):
        a.append(sum(a[h] * a[n - h - 1] for h in range(n)))
    return CatalanTable(tuple(a))


def compositions(n: int, m: int) -> Iterator[tuple[int, ...]]:
    """All ordered tuples of ``m`` integers >= 1 summing to ``n``."""
    if m == 0:
        if n == 0:
            yield ()
        return
    # stars and bars: choose m-1 cut points among n-1 gaps
    for cuts in itertools.combinations(range(1, n), m - 1):
        bounds = (0,) + cuts + (n,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(m))


def _ballot_by_enumeration(n_max: int, a: CatalanTable) -> BallotTable:
    rows = []
    for n in range(n_max + 1):
        row = []
        for m in range(n_max + 1):
            if n == 0 and m == 0:
                row.append(1)
            elif 1 <= m <= n:
                row.append(sum(math.prod(a[k - 1] for k in c) for c in compositions(n, m)))
            else:
                row.append(0)
        rows.append(tuple(row))
    return BallotTable(tuple(rows))


def _ballot_by_powers(n_max: int, a: CatalanTable) -> BallotTable:
    # column m holds the coefficients of (sum_{k>=1} A_{k-1} x^k)^m
    base = [0] + [a[k - 1] for k in range(1, n_max + 1)]
    cols = [[1] + [0] * n_max]
    for _ in range(n_max):
        prev = cols[-1]
        nxt = [0] * (n_max + 1)
        for i, p in enumerate(prev):
            if p:
                for k in range(1, n_max + 1 - i):
                    nxt[i + k] += p * base[k]
        cols.append(nxt)
    rows = tuple(tuple(cols[m][n] for m in range(n_max + 1)) for n in range(n_max + 1))
    return BallotTable(rows)


@lru_cache(maxsize=64)
def ballot_table(n_max: int, method: str = "powers") -> BallotTable:
    """Table of ``B_{n,m}``.

    ``method="enumerate"`` sums over explicit compositions (reference path);
    ``method="powers"`` expands powers of the shifted Catalan series (fast path).
    """
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    a = catalan_table(n_max)
    if method == "enumerate":
        return _ballot_by_enumeration(n_max, a)
    if method == "powers":
        return _ballot_by_powers(n_max, a)
    raise ValueError(f"unknown method {method!r}")


def factorial_ratio(p: int, q: int) -> int:
    """``(p+q)!/q!`` as the product ``prod_{j=1}^{p} (j+q)``, legal for negative ``q``."""
    if p < 0:
        raise ValueError(f"p must be >= 0, got {p}")
    return math.prod(j + q for j in range(1, p + 1))


def lemma2_sides(N: int, n1: int, n2: int) -> tuple[int, int]:
    """Both sides of the subset-sum identity, the left by literal subset enumeration."""
    lhs = 0
    for mask in range(1 << N):
        k = bin(mask).count("1")
        lhs += factorial_ratio(k, n1) * factorial_ratio(N - k, n2)
    rhs = factorial_ratio(N, n1 + n2 + 1)
    return lhs, rhs


def check_lemma2(N: int, n1: int, n2: int) -> bool:
    if min(N, n1, n2) < 0:
        raise ValueError("N, n1, n2 must be nonnegative")
    lhs, rhs = lemma2_sides(N, n1, n2)
    return lhs == rhs


def lemma3_rhs(n: int, m: int, a: CatalanTable, b: BallotTable) -> int:
    """``sum_h A_h (m B_{n-h-1,m-1} + (2n-2h-m-2) B_{n-h-1,m})``; weights may be negative."""
    return sum(
        a[h] * (m * b[n - h - 1, m - 1] + (2 * n - 2 * h - m - 2) * b[n - h - 1, m])
        for h in range(n)
    )


def check_lemma3_recursion(n: int, m: int, tables: tuple[CatalanTable, BallotTable]) -> bool:
    a, b = tables
    if not 1 <= m <= n <= min(a.n_max, b.n_max):
        raise ValueError(f"need 1 <= m <= n <= n_max, got n={n}, m={m}")
    return n * b[n, m] == lemma3_rhs(n, m, a, b)


def catalan_gf(x: float) -> float:
    return 2.0 / (1.0 + math.sqrt(1.0 - 4.0 * x))


def ballot_gf(x: float, m: int) -> float:
    # (1 - sqrt(1-4x))/2 written as x*g(x) to avoid cancellation at small x
    return (x * catalan_gf(x)) ** m


def gf_residual(x: float, n_max: int, m: int | None = None) -> float:
    """Gap between a truncated generating series and its closed form.

    With ``m=None`` the Catalan series is used, otherwise column ``m`` of the
    ballot table. Compare against :func:`geometric_tail`.
    """
    if not 0.0 <= x < 0.25:
        raise ValueError(f"x must lie in [0, 1/4), got {x}")
    if m is None:
        coeffs = catalan_table(n_max).values
        closed = catalan_gf(x)
    else:
        b = ballot_table(max(n_max, m))
        coeffs = [b[n, m] for n in range(n_max + 1)]
        closed = ballot_gf(x, m)
    head = math.fsum(c * x**n for n, c in enumerate(coeffs))
    return abs(head - closed)


def geometric_tail(x: float, n_max: int) -> float:
    """``sum_{n > n_max} (4x)^n``, which dominates both series tails."""
    r = 4.0 * x
    return r ** (n_max + 1) / (1.0 - r)


def ballot_column_sums(n_max: int) -> list[int]:
    """``sum_{m>=1} B_{n,m}`` for n = 0..n_max, read off ``sum_m (xg)^m`` by series algebra."""
    a = catalan_table(n_max)
    # sum_m (xg)^m = xg / (1 - xg); expand with exact integer power series
    xg = [0] + [a[k - 1] for k in range(1, n_max + 1)]
    total = [0] * (n_max + 1)
    power = [1] + [0] * n_max
    for _ in range(n_max):
        nxt = [0] * (n_max + 1)
        for i, p in enumerate(power):
            if p:
                for k in range(1, n_max + 1 - i):
                    nxt[i + k] += p * xg[k]
        power = nxt
        total = [s + p for s, p in zip(total, power)]
    return total


def first_lemma3_failure(b: BallotTable, a: CatalanTable) -> tuple[int, int] | None:
    """Locate the first ``(n, m)`` where the recursion fails, or ``None``."""
    top = min(a.n_max, b.n_max)
    for n in range(1, top + 1):
        for m in range(1, n + 1):
            if n * b[n, m] != lemma3_rhs(n, m, a, b):
                return n, m
    return None
