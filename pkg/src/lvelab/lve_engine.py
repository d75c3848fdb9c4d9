"""Recursive Monte-Carlo evaluation of the loop-vertex terms on the lattice.

A term ``W^(n)`` is a sum over splittings ``h`` and point subsets ``K`` of
``int_0^t ds int dx (nu_{t-s} * (W^(h)_s W^(n-h-1)_s))``. The evaluator treats
the ``ds`` integral with Gauss-Legendre nodes, the ``dx`` integral as an exact
lattice sum ``a * sum_x`` (each factor is returned as a tensor over its free
lattice points), and every Gaussian convolution by sampling. The two factors of
a product always use independent noise so that the product of their estimates
is unbiased; deeper levels may use very few draws because unbiasedness does
not depend on the inner sample size.

Every top-level draw is an iid unbiased estimate of the whole term, so the
reported standard error is the plain sample standard error over top-level
draws. Draws are processed in fixed-size chunks; chunk ``c`` takes all of its
randomness from ``rng.child(c)``, which keeps results bit-identical for any
number of worker threads.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .gaussian import Estimate, RngStream
from .kernels import (
    ModelParams,
    InadmissibleError,
    lemma4_bound,
    tail_certificate,
    theorem1_bound,
    theorem2_bound,
)
from .lattice import GreenBatch, LatticeSpec, SigmaField

CHUNK = 64
MAX_W0_POINTS = 6
# terminal element of every noise address; node addresses never contain it
_NOISE = 2**32
SIGMA_K = 3.0
SIGMA_FLOOR = 1e-12


class BudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class EvalBudget:
    """Sampling budget.

    ``outer_samples`` draws are taken at the top level (per term).
    ``inner_samples[d-1]`` draws estimate each zeroth-order factor at nesting
    depth ``d`` (the last entry is reused below the listed depths).
    ``branch_samples`` draws per s-node estimate each higher-order factor below
    the top level. ``max_leaf_rows`` caps the number of resolvent evaluations.
    """

    s_nodes: int = 8
    outer_samples: int = 2000
    inner_samples: tuple[int, ...] = (200, 2)
    branch_samples: int = 1
    max_order: int = 2
    max_leaf_rows: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "inner_samples", tuple(int(i) for i in self.inner_samples))
        if self.s_nodes < 1 or self.outer_samples < 1 or self.branch_samples < 1:
            raise ValueError("budget sizes must be positive")
        if not self.inner_samples or min(self.inner_samples) < 1:
            raise ValueError("inner_samples must be a nonempty sequence of positive integers")
        if not 0 <= self.max_order <= 3:
            raise ValueError(f"max_order must lie in 0..3, got {self.max_order}")

    def inner_at(self, depth: int) -> int:
        return self.inner_samples[min(depth, len(self.inner_samples)) - 1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inner_samples"] = list(self.inner_samples)
        return d

    def describe(self) -> str:
        inner = "/".join(str(i) for i in self.inner_samples)
        return f"S{self.s_nodes};O{self.outer_samples};I{inner};B{self.branch_samples}"


@dataclass(frozen=True)
class WQuery:
    """A requested term.

    Vacuum points are ``(z0, z1, ..., zN)``; source points are
    ``(y1, y2, z1, ..., zN)``. With ``refine_m`` set the query asks for the
    refined term with unprimed points ``z`` and primed points ``primed``.
    Points are lattice site indices.
    """

    order: int
    kind: str
    points: tuple[int, ...]
    t: float = 1.0
    base: SigmaField | None = None
    refine_m: int | None = None
    primed: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(int(p) for p in self.points))
        object.__setattr__(self, "primed", tuple(int(p) for p in self.primed))
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if self.kind == "vacuum":
            if len(self.points) < 1:
                raise ValueError("vacuum terms need at least one point")
            if self.refine_m is not None:
                raise ValueError("refined terms are source-rooted")
        elif self.kind == "source":
            if len(self.points) < 2:
                raise ValueError("source terms need at least two points")
        else:
            raise ValueError(f"kind must be 'vacuum' or 'source', got {self.kind!r}")
        if self.refine_m is not None and not 0 <= self.refine_m <= self.order:
            raise ValueError(f"refine_m must satisfy 0 <= m <= n, got m={self.refine_m}, n={self.order}")
        if self.primed and self.refine_m is None:
            raise ValueError("primed points only apply to refined terms")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {self.t}")

    def to_dict(self) -> dict:
        return {"order": self.order, "kind": self.kind, "points": list(self.points), "t": self.t,
                "refine_m": self.refine_m, "primed": list(self.primed),
                "base": "zero" if self.base is None else "field"}


# ---------------------------------------------------------------------------
# internal term algebra


@dataclass(frozen=True, order=True)
class _Var:
    """Integration point introduced at recursion depth ``level``."""

    level: int


@dataclass(frozen=True)
class _Term:
    kind: str
    order: int
    points: tuple
    m: int | None = None
    primed: tuple = ()

    @property
    def free(self) -> tuple[_Var, ...]:
        return tuple(sorted({p for p in self.points + self.primed if isinstance(p, _Var)}))

    @property
    def n_z(self) -> int:
        return len(self.points) - (1 if self.kind == "vacuum" else 2)


def _is_zero(term: _Term, lam: float) -> bool:
    if term.m is not None:
        if term.m > term.order:
            return True
        if term.m == 0 and (term.order > 0 or term.primed):
            return True
    if lam == 0.0:
        source_leaf = term.kind == "source" and term.order == 0 and term.n_z == 0
        return not source_leaf
    return False


def _is_leaf(term: _Term) -> bool:
    return term.order == 0


def _subsets(items: tuple) -> list[tuple[tuple, tuple]]:
    out = []
    for mask in range(1 << len(items)):
        inside = tuple(p for i, p in enumerate(items) if mask >> i & 1)
        outside = tuple(p for i, p in enumerate(items) if not mask >> i & 1)
        out.append((inside, outside))
    return out


def _children(term: _Term, x: _Var) -> list[tuple[_Term, list[_Term]]]:
    """Factor pairs ``(A, [B...])`` of the recursion; the B list is summed."""
    n = term.order
    out = []
    if term.m is not None:
        y1, y2 = term.points[:2]
        zs = term.points[2:]
        for h in range(n):
            for k_in, k_out in _subsets(term.primed):
                a = _Term("vacuum", h, (x,) + k_in)
                b1 = _Term("source", n - h - 1, (y1, y2, x) + zs, term.m - 1, k_out)
                b2 = _Term("source", n - h - 1, (y1, y2) + zs, term.m, (x,) + k_out)
                out.append((a, [b1, b2]))
        return out
    if term.kind == "vacuum":
        root, zs = term.points[0], term.points[1:]
        for h in range(n):
            for k_in, k_out in _subsets(zs):
                out.append((_Term("vacuum", h, (x,) + k_in), [_Term("vacuum", n - h - 1, (root, x) + k_out)]))
        return out
    y1, y2 = term.points[:2]
    zs = term.points[2:]
    for h in range(n):
        for k_in, k_out in _subsets(zs):
            out.append((_Term("vacuum", h, (x,) + k_in), [_Term("source", n - h - 1, (y1, y2, x) + k_out)]))
    return out


def _letter(v: _Var) -> str:
    return chr(ord("i") + v.level)


@lru_cache(maxsize=None)
def _gauss_legendre(k: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(k)


class _Evaluator:
    def __init__(self, spec: LatticeSpec, params: ModelParams, budget: EvalBudget, stream: RngStream):
        self.spec = spec
        self.params = params
        self.budget = budget
        self.stream = stream
        self.c = -2j * math.sqrt(2.0 * params.lam)
        self.n = spec.n_sites

    # -- randomness ---------------------------------------------------------
    def _noise(self, t: float, shape: tuple, key: tuple) -> np.ndarray:
        if t <= 0.0:
            return np.zeros(shape + (self.n,))
        return math.sqrt(t / self.spec.spacing) * self.stream.child(*key, _NOISE).normal(shape + (self.n,))

    def _nodes(self, t: float):
        x, w = _gauss_legendre(self.budget.s_nodes)
        return 0.5 * t * (x + 1.0), 0.5 * t * w

    # -- leaves -------------------------------------------------------------
    def _chains(self, term: _Term) -> tuple[complex, list[tuple]]:
        pts = term.points
        if term.kind == "vacuum":
            root, zs = pts[0], pts[1:]
            return 0.5 * self.c ** (len(zs) + 1), [(root,) + perm + (root,) for perm in itertools.permutations(zs)]
        y1, y2, zs = pts[0], pts[1], pts[2:]
        return self.c ** len(zs), [(y1,) + perm + (y2,) for perm in itertools.permutations(zs)]

    def _leaf_sigma(self, t: float, base: np.ndarray, n_draws: int, key: tuple) -> np.ndarray:
        b = base.shape[0]
        return (base[:, None, :] + self._noise(t, (b, n_draws), key)).reshape(b * n_draws, self.n)

    def _leaf(self, term: _Term, sig: np.ndarray) -> np.ndarray:
        """Zeroth-order term at each row of ``sig``; shape ``(R, n, ..)`` over free points."""
        pref, chains = self._chains(term)
        gb = GreenBatch(self.spec, self.params, sig)
        cols: dict[int, np.ndarray] = {}
        full = None

        def column(j):
            if j not in cols:
                cols[j] = full[:, :, j] if full is not None else gb.column(j)
            return cols[j]

        needs_full = any(
            isinstance(p, _Var) and isinstance(q, _Var) and p != q
            for ch in chains for p, q in zip(ch[:-1], ch[1:])
        )
        if needs_full:
            full = gb.full()
        out_sub = "r" + "".join(_letter(v) for v in term.free)
        total = None
        for ch in chains:
            ops, subs = [], []
            for p, q in zip(ch[:-1], ch[1:]):
                pv, qv = isinstance(p, _Var), isinstance(q, _Var)
                if not pv and not qv:
                    ops.append(column(q)[:, p])
                    subs.append("r")
                elif pv and qv and p == q:
                    ops.append(np.diagonal(full, axis1=1, axis2=2) if full is not None else gb.diag())
                    subs.append("r" + _letter(p))
                elif pv and qv:
                    ops.append(full)
                    subs.append("r" + _letter(p) + _letter(q))
                else:
                    fixed, var = (q, p) if pv else (p, q)
                    ops.append(column(fixed))
                    subs.append("r" + _letter(var))
            val = np.einsum(",".join(subs) + "->" + out_sub, *ops)
            total = val if total is None else total + val
        return pref * total

    def _leaf_contracted(self, term: _Term, t: float, base: np.ndarray, depth: int, key: tuple,
                         other: np.ndarray, x: _Var) -> np.ndarray:
        """``sum_x leaf(u, x) other(x)`` for a leaf with free points ``{u, x}``, mean over draws.

        Each chain factors as ``alpha(u) * g_ux**k * beta(x)``, so the sum over
        ``x`` is a semiseparable matrix-vector product and ``g`` is never formed.
        Draws and noise addresses match :meth:`_leaf`, so both routes give the
        same number up to rounding.
        """
        n_draws = self.n_draws_at(term, depth)
        sig = self._leaf_sigma(t, base, n_draws, key)
        rows = sig.shape[0]
        gb = GreenBatch(self.spec, self.params, sig)
        (u,) = [v for v in term.free if v != x]
        o = np.repeat(other, n_draws, axis=0)
        cols: dict[int, np.ndarray] = {}

        def column(j):
            if j not in cols:
                cols[j] = gb.column(j)
            return cols[j]

        pref, chains = self._chains(term)
        total = np.zeros((rows, self.n), dtype=complex)
        for ch in chains:
            alpha = np.ones((rows, self.n), dtype=complex)
            beta = np.ones((rows, self.n), dtype=complex)
            const = np.ones(rows, dtype=complex)
            k = 0
            for p, q in zip(ch[:-1], ch[1:]):
                if {p, q} == {u, x}:
                    k += 1
                elif p == q:
                    if p == u:
                        alpha = alpha * gb.diag()
                    else:
                        beta = beta * gb.diag()
                elif u in (p, q) or x in (p, q):
                    var, fixed = (p, q) if isinstance(p, _Var) else (q, p)
                    if var == u:
                        alpha = alpha * column(fixed)
                    else:
                        beta = beta * column(fixed)
                else:
                    const = const * column(q)[:, p]
            total += const[:, None] * alpha * gb.power_matvec(k, beta * o)
        return (pref * total).reshape(base.shape[0], n_draws, self.n).mean(axis=1)

    # -- recursion ----------------------------------------------------------
    def _lazy(self, leaf: _Term, other: _Term, x: _Var) -> bool:
        return (_is_leaf(leaf) and len(leaf.free) == 2 and x in leaf.free and other.free == (x,)
                and len(leaf.points) <= MAX_W0_POINTS + 2)

    def _contract(self, fa: np.ndarray, va: tuple, fb: np.ndarray, vb: tuple, x: _Var) -> np.ndarray:
        out_vars = sorted((set(va) | set(vb)) - {x})
        sub = "r{},r{}->r{}".format(
            "".join(map(_letter, va)), "".join(map(_letter, vb)), "".join(map(_letter, out_vars))
        )
        return np.einsum(sub, fa, fb)

    def draws(self, term: _Term, t: float, base: np.ndarray, depth: int, n_draws: int, key: tuple) -> np.ndarray | None:
        """Per-draw unbiased values, shape ``(B, n_draws, n, ..)``; ``None`` for identically zero terms."""
        if _is_zero(term, self.params.lam):
            return None
        b = base.shape[0]
        free_shape = (self.n,) * len(term.free)
        if _is_leaf(term):
            vals = self._leaf(term, self._leaf_sigma(t, base, n_draws, key))
            return vals.reshape((b, n_draws) + free_shape)
        out = np.zeros((b * n_draws,) + free_shape, dtype=complex)
        x = _Var(depth)
        a = self.spec.spacing
        nodes, weights = self._nodes(t)
        kids = _children(term, x)
        for j, (s, w) in enumerate(zip(nodes, weights)):
            sp = self._leaf_sigma(t - s, base, n_draws, key + (j,))
            for ci, (a_term, b_terms) in enumerate(kids):
                if _is_zero(a_term, self.params.lam):
                    continue
                live = [(bi, bt) for bi, bt in enumerate(b_terms) if not _is_zero(bt, self.params.lam)]
                if not live:
                    continue
                a_key = key + (j, ci, 0)
                if all(self._lazy(a_term, bt, x) for _, bt in live):
                    fb = sum(self.estimate(bt, s, sp, depth + 1, key + (j, ci, 1, bi)) for bi, bt in live)
                    out += (w * a) * self._leaf_contracted(a_term, s, sp, depth + 1, a_key, fb, x)
                    continue
                fa = self.estimate(a_term, s, sp, depth + 1, a_key)
                for bi, bt in live:
                    b_key = key + (j, ci, 1, bi)
                    if self._lazy(bt, a_term, x):
                        out += (w * a) * self._leaf_contracted(bt, s, sp, depth + 1, b_key, fa, x)
                    else:
                        fb = self.estimate(bt, s, sp, depth + 1, b_key)
                        out += (w * a) * self._contract(fa, a_term.free, fb, bt.free, x)
        return out.reshape((b, n_draws) + free_shape)

    def n_draws_at(self, term: _Term, depth: int) -> int:
        return self.budget.inner_at(depth) if _is_leaf(term) else self.budget.branch_samples

    def estimate(self, term: _Term, t: float, base: np.ndarray, depth: int, key: tuple) -> np.ndarray:
        v = self.draws(term, t, base, depth, self.n_draws_at(term, depth), key)
        if v is None:
            return np.zeros((base.shape[0],) + (self.n,) * len(term.free), dtype=complex)
        return v.mean(axis=1)


def _leaf_rows(term: _Term, lam: float, budget: EvalBudget, depth: int, n_draws: int) -> int:
    """Number of resolvent evaluations one base field costs."""
    if _is_zero(term, lam):
        return 0
    if _is_leaf(term):
        return n_draws
    total = 0
    for a_term, b_terms in _children(term, _Var(depth)):
        if _is_zero(a_term, lam) or all(_is_zero(bt, lam) for bt in b_terms):
            continue
        for sub in [a_term] + list(b_terms):
            nd = budget.inner_at(depth + 1) if _is_leaf(sub) else budget.branch_samples
            total += _leaf_rows(sub, lam, budget, depth + 1, nd)
    return n_draws * budget.s_nodes * total


def _to_term(query: WQuery) -> _Term:
    if query.refine_m is not None:
        return _Term("source", query.order, query.points, query.refine_m, query.primed)
    return _Term(query.kind, query.order, query.points)


def _base_array(spec: LatticeSpec, base: SigmaField | None) -> np.ndarray:
    if base is None:
        return np.zeros((1, spec.n_sites))
    v = base.values
    if v.shape != (spec.n_sites,):
        raise ValueError(f"base field has shape {v.shape}, lattice has {spec.n_sites} sites")
    return v[None, :]


def _check_points(spec: LatticeSpec, query: WQuery) -> None:
    for p in query.points + query.primed:
        if not 0 <= p < spec.n_sites:
            raise ValueError(f"point {p} outside lattice of {spec.n_sites} sites")


def _run_chunks(fn, n_total: int, threads: int) -> np.ndarray:
    chunks = [(c, min(CHUNK, n_total - c * CHUNK)) for c in range((n_total + CHUNK - 1) // CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda cn: fn(*cn), chunks))
    else:
        parts = [fn(c, n) for c, n in chunks]
    return np.concatenate(parts)


def _evaluate(query: WQuery, spec: LatticeSpec, params: ModelParams, budget: EvalBudget,
              rng: RngStream, threads: int = 1) -> Estimate:
    _check_points(spec, query)
    if query.order > budget.max_order:
        raise BudgetExhausted(f"order {query.order} exceeds max_order {budget.max_order}")
    term = _to_term(query)
    if query.order == 0 and len(query.points) - (1 if query.kind == "vacuum" else 2) + len(query.primed) > MAX_W0_POINTS:
        raise ValueError(f"zeroth-order terms are limited to {MAX_W0_POINTS} extra points")
    n_out = budget.outer_samples
    if _is_zero(term, params.lam):
        return Estimate.exact(0.0, n_out)
    if budget.max_leaf_rows is not None:
        rows = _leaf_rows(term, params.lam, budget, 0, n_out)
        if rows > budget.max_leaf_rows:
            raise BudgetExhausted(f"query needs {rows} resolvent evaluations, cap is {budget.max_leaf_rows}")
    base = _base_array(spec, query.base)

    def chunk(c: int, n: int) -> np.ndarray:
        ev = _Evaluator(spec, params, budget, rng.child(c))
        return ev.draws(term, query.t, base, 0, n, ())[0]

    return Estimate.from_samples(_run_chunks(chunk, n_out, threads))


def eval_w0(query: WQuery, spec: LatticeSpec, params: ModelParams, budget: EvalBudget,
            rng: RngStream, threads: int = 1) -> Estimate:
    """Zeroth-order term: a Gaussian average of a resolvent cycle or chain summed over orderings."""
    if query.order != 0:
        raise ValueError("eval_w0 needs order 0")
    return _evaluate(query, spec, params, budget, rng, threads)


def eval_w(query: WQuery, spec: LatticeSpec, params: ModelParams, budget: EvalBudget,
           rng: RngStream, threads: int = 1) -> Estimate:
    if query.refine_m is not None:
        raise ValueError("use eval_wnm for refined terms")
    return _evaluate(query, spec, params, budget, rng, threads)


def eval_wnm(query: WQuery, spec: LatticeSpec, params: ModelParams, budget: EvalBudget,
             rng: RngStream, threads: int = 1) -> Estimate:
    if query.refine_m is None or query.kind != "source":
        raise ValueError("eval_wnm needs a source query with refine_m set")
    return _evaluate(query, spec, params, budget, rng, threads)


def lemma5_sum(query: WQuery, spec: LatticeSpec, params: ModelParams, budget: EvalBudget,
               rng: RngStream, threads: int = 1) -> Estimate:
    """``sum_m sum_K`` of refined terms with the points in ``K`` primed."""
    y1, y2 = query.points[:2]
    zs = query.points[2:]
    total = None
    idx = 0
    for m in range(query.order + 1):
        for k_in, k_out in _subsets(zs):
            q = WQuery(query.order, "source", (y1, y2) + k_out, query.t, query.base, refine_m=m, primed=k_in)
            est = eval_wnm(q, spec, params, budget, rng.child(idx), threads)
            idx += 1
            total = est if total is None else total + est
    return total


# ---------------------------------------------------------------------------
# physics pipelines


@dataclass(frozen=True)
class BoundCheck:
    value: float
    bound: float
    tail: float
    std_err: float
    margin: float
    passes: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _bound_check(value: float, bound: float, tail: float, std_err: float) -> BoundCheck:
    allowance = bound + tail + SIGMA_K * std_err + SIGMA_FLOOR
    return BoundCheck(value, bound, tail, std_err, allowance - value, value <= allowance)


@dataclass(frozen=True)
class TwoPointResult:
    partial_sum: Estimate
    terms: tuple[Estimate, ...]
    tail: float
    tail_certificate: dict
    bound_check: BoundCheck


def two_point(params: ModelParams, spec: LatticeSpec, y1: int, y2: int, n_max: int,
              budget: EvalBudget, rng: RngStream, threads: int = 1) -> TwoPointResult:
    """Partial sum ``sum_{n <= n_max} W^(n)_{1,y1,y2}[0]`` with its certified tail and bound check."""
    if n_max > budget.max_order:
        raise BudgetExhausted(f"n_max {n_max} exceeds max_order {budget.max_order}")
    if not params.admissible(1.0, strict=True) and params.lam > 0:
        raise InadmissibleError(f"two-point runs need 8 lam < re(m2)^1.5; lam={params.lam}")
    terms = tuple(
        eval_w(WQuery(n, "source", (y1, y2), 1.0), spec, params, budget, rng.child(n), threads)
        for n in range(n_max + 1)
    )
    total = terms[0]
    for est in terms[1:]:
        total = total + est
    x1, x2 = spec.coords[y1], spec.coords[y2]
    cert = tail_certificate(params, n_max, 1.0, x1, x2)
    check = _bound_check(abs(total.mean), theorem1_bound(params, x1, x2), cert.value, total.std_err)
    return TwoPointResult(total, terms, cert.value, cert.describe(), check)


@dataclass(frozen=True)
class PressureResult:
    estimate: Estimate
    site: int
    bound_check: BoundCheck
    other_sites: tuple[tuple[int, Estimate], ...]
    x_independent: bool


def _pressure_at(params: ModelParams, spec: LatticeSpec, site: int, n_max: int, budget: EvalBudget,
                 rng: RngStream, threads: int) -> Estimate:
    if params.lam == 0.0:
        return Estimate.exact(0.0, budget.outer_samples)

    def chunk(c: int, n: int) -> np.ndarray:
        ev = _Evaluator(spec, params, budget, rng.child(c))
        nodes, weights = ev._nodes(1.0)
        vals = np.zeros(n, dtype=complex)
        for j, (t, w) in enumerate(zip(nodes, weights)):
            sig = ev._noise(1.0 - t, (n,), (j,))
            g = GreenBatch(spec, params, sig).column(site)[:, site]
            first = -4.0 * params.lam * g**2
            reps = []
            for rep in range(2):
                s = np.zeros(n, dtype=complex)
                for order in range(n_max + 1):
                    s += ev.estimate(_Term("vacuum", order, (site,)), t, sig, 1, (j, rep, order))
                reps.append(s)
            vals += w * 0.5 * (first + reps[0] * reps[1])
        return vals

    return Estimate.from_samples(_run_chunks(chunk, budget.outer_samples, threads))


def pressure(params: ModelParams, spec: LatticeSpec, n_max: int, budget: EvalBudget, rng: RngStream,
             threads: int = 1, site: int | None = None, other_sites: tuple[int, ...] | None = None) -> PressureResult:
    """Truncated pressure expression at a central site, plus two more sites for x-independence.

    Each truncated partial sum of vacuum terms is bounded by the same series
    as the full sum, so the truncated expression obeys the full bound and the
    tail allowance is zero.
    """
    if n_max > budget.max_order:
        raise BudgetExhausted(f"n_max {n_max} exceeds max_order {budget.max_order}")
    if not params.admissible(1.0):
        raise InadmissibleError(f"pressure needs 8 lam <= re(m2)^1.5; lam={params.lam}")
    n = spec.n_sites
    site = n // 2 if site is None else site
    if other_sites is None:
        shift = max(1, n // 8)
        other_sites = (site - shift, site + shift)
    est = _pressure_at(params, spec, site, n_max, budget, rng.child(0), threads)
    others = tuple(
        (s, _pressure_at(params, spec, s, n_max, budget, rng.child(i + 1), threads))
        for i, s in enumerate(other_sites)
    )
    check = _bound_check(abs(est.mean), theorem2_bound(params), 0.0, est.std_err)
    same = all(
        abs(o.mean - est.mean) <= SIGMA_K * math.hypot(o.std_err, est.std_err) + SIGMA_FLOOR for _, o in others
    )
    return PressureResult(est, site, check, others, same)


@dataclass(frozen=True)
class Lemma4Report:
    n: int
    t: float
    bound: float
    values: tuple[float, ...]
    std_errs: tuple[float, ...]
    holds: bool


def lemma4_check(params: ModelParams, spec: LatticeSpec, n: int, t: float, budget: EvalBudget,
                 rng: RngStream, n_fields: int = 20, site: int | None = None, threads: int = 1) -> Lemma4Report:
    """Check ``|W^(n)_{t;z}[sigma]| <= lemma4_bound`` at random fields ``sigma`` drawn at strength one."""
    if n not in (0, 1):
        raise ValueError("lemma4_check supports n in {0, 1}")
    site = spec.n_sites // 2 if site is None else site
    bound = lemma4_bound(params, n, 0, t)
    vals, errs = [], []
    for i in range(n_fields):
        sig = SigmaField(math.sqrt(1.0 / spec.spacing) * rng.child(0, i).normal((spec.n_sites,)))
        est = eval_w(WQuery(n, "vacuum", (site,), t, sig), spec, params, budget, rng.child(1, i), threads)
        vals.append(abs(est.mean))
        errs.append(est.std_err)
    holds = all(v <= bound + SIGMA_K * e + SIGMA_FLOOR for v, e in zip(vals, errs))
    return Lemma4Report(n, t, bound, tuple(vals), tuple(errs), holds)


def json_record(query: WQuery, budget: EvalBudget, rng: RngStream, estimate: Estimate,
                tail: float | None = None, check: BoundCheck | None = None) -> dict:
    rec = {"query": query.to_dict(), "budget": budget.to_dict(), "seed": rng.seed, "path": list(rng.path),
           "estimate": estimate.to_dict()}
    if tail is not None:
        rec["tail"] = tail
    if check is not None:
        rec["bound_margin"] = check.margin
        rec["passes"] = check.passes
    return rec
