"""Box discretization of the auxiliary-field theory and its complex resolvent.

The lattice carries continuum normalization throughout: the delta function is
``delta_xy / a``, so ``g = H^{-1} / a`` approximates the continuum kernel and
``a * sum_x`` approximates ``int dx``. With ``H = -Lap_a + m2 + 2i sqrt(2 lam) sigma``
the functional derivative ``delta/delta sigma_x`` is ``(1/a) d/d sigma_x``, which
makes ``delta g_xy / delta sigma_z = -2i sqrt(2 lam) g_xz g_zy`` hold exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .kernels import ModelParams


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    spacing: float
    half_length: float
    boundary: str = "dirichlet"

    def __post_init__(self):
        if not self.spacing > 0 or not self.half_length > 0:
            raise ValueError("spacing and half_length must be positive")
        if self.boundary not in ("dirichlet", "periodic"):
            raise ValueError(f"boundary must be 'dirichlet' or 'periodic', got {self.boundary!r}")
        if self.n_sites < 2:
            raise ValueError(f"lattice needs at least 2 sites, got {self.n_sites}")

    @property
    def n_sites(self) -> int:
        return int(round(2.0 * self.half_length / self.spacing))

    @property
    def coords(self) -> np.ndarray:
        return -self.half_length + (np.arange(self.n_sites) + 0.5) * self.spacing

    def site_near(self, x: float) -> int:
        return int(np.argmin(np.abs(self.coords - x)))

    def centered_pair(self, separation: float) -> tuple[int, int]:
        """Two sites straddling the box center, ``separation`` apart (rounded to the grid)."""
        k = int(round(separation / self.spacing))
        y1 = (self.n_sites - k) // 2
        return y1, y1 + k

    def describe(self) -> str:
        return f"a={self.spacing:g};L={self.half_length:g};n={self.n_sites};{self.boundary}"


@dataclass(frozen=True)
class SigmaField:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("sigma must be a finite 1-d array")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, spec: LatticeSpec) -> "SigmaField":
        return cls(np.zeros(spec.n_sites))


@dataclass(frozen=True)
class Resolvent:
    g: np.ndarray


def _sigma_array(spec: LatticeSpec, sigma) -> np.ndarray:
    v = sigma.values if isinstance(sigma, SigmaField) else np.asarray(sigma, dtype=float)
    if v.shape[-1] != spec.n_sites:
        raise ValueError(f"sigma has {v.shape[-1]} sites, lattice has {spec.n_sites}")
    return v


def coupling(params: ModelParams) -> complex:
    """The factor ``2i sqrt(2 lam)`` multiplying sigma in the operator."""
    return 2j * math.sqrt(2.0 * params.lam)


def _diagonal(spec: LatticeSpec, params: ModelParams, sig: np.ndarray) -> np.ndarray:
    a = spec.spacing
    d = np.empty(sig.shape, dtype=complex)
    d.real = 2.0 / a**2 + params.m2.real
    d.imag = params.m2.imag + coupling(params).imag * sig
    return d


def build_operator(spec: LatticeSpec, params: ModelParams, sigma) -> np.ndarray:
    """Dense ``H = -Lap_a + m2 + 2i sqrt(2 lam) diag(sigma)``."""
    sig = _sigma_array(spec, sigma)
    if sig.ndim != 1:
        raise ValueError("build_operator takes a single field")
    n, a = spec.n_sites, spec.spacing
    h = np.diag(_diagonal(spec, params, sig).astype(complex))
    off = -1.0 / a**2
    idx = np.arange(n - 1)
    h[idx, idx + 1] = off
    h[idx + 1, idx] = off
    if spec.boundary == "periodic":
        h[0, n - 1] += off
        h[n - 1, 0] += off
    return h


def _free_operator(spec: LatticeSpec, mass2: float) -> np.ndarray:
    n, a = spec.n_sites, spec.spacing
    h = np.diag(np.full(n, 2.0 / a**2 + mass2))
    idx = np.arange(n - 1)
    h[idx, idx + 1] = h[idx + 1, idx] = -1.0 / a**2
    if spec.boundary == "periodic":
        h[0, n - 1] += -1.0 / a**2
        h[n - 1, 0] += -1.0 / a**2
    return h


def comparator_matrix(spec: LatticeSpec, params: ModelParams) -> np.ndarray:
    """Lattice comparator ``(-Lap_a + re m2)^{-1} / a`` (real, entrywise positive)."""
    return np.linalg.inv(_free_operator(spec, params.re_m2)) / spec.spacing


def free_covariance(spec: LatticeSpec, mass2: float) -> np.ndarray:
    return np.linalg.inv(_free_operator(spec, mass2)) / spec.spacing


_LANES = 16


@numba.njit(nogil=True, cache=True)
def _pivots(d, e2):
    """Left and right continued-fraction pivots of the tridiagonal operator.

    ``_LANES`` rows advance together so the divisions of independent rows
    overlap; ``e2/p`` is written as ``e2 conj(p)/|p|^2``.
    """
    rows, n = d.shape
    lp = np.empty_like(d)
    rp = np.empty_like(d)
    ar = np.empty(_LANES)
    ai = np.empty(_LANES)
    for r0 in range(0, rows, _LANES):
        m = min(_LANES, rows - r0)
        for out, start, stop, step in ((lp, 0, n, 1), (rp, n - 1, -1, -1)):
            for k in range(m):
                ar[k] = d[r0 + k, start].real
                ai[k] = d[r0 + k, start].imag
                out[r0 + k, start] = d[r0 + k, start]
            for i in range(start + step, stop, step):
                for k in range(m):
                    q = e2 / (ar[k] * ar[k] + ai[k] * ai[k])
                    ar[k] = d[r0 + k, i].real - q * ar[k]
                    ai[k] = d[r0 + k, i].imag + q * ai[k]
                    out[r0 + k, i] = complex(ar[k], ai[k])
    return lp, rp


@numba.njit(nogil=True, cache=True)
def _inv(z):
    return z.conjugate() / (z.real * z.real + z.imag * z.imag)


@numba.njit(nogil=True, cache=True)
def _diag(lp, rp, d, inv_a):
    rows, n = d.shape
    out = np.empty_like(d)
    for r in range(rows):
        for i in range(n):
            out[r, i] = inv_a * _inv(lp[r, i] + rp[r, i] - d[r, i])
    return out


@numba.njit(nogil=True, cache=True)
def _column(lp, rp, d, e, j, inv_a):
    rows, n = d.shape
    col = np.empty_like(d)
    for r in range(rows):
        g = inv_a * _inv(lp[r, j] + rp[r, j] - d[r, j])
        col[r, j] = g
        v = g
        for i in range(j + 1, n):
            v = -e * v * _inv(rp[r, i])
            col[r, i] = v
        v = g
        for i in range(j - 1, -1, -1):
            v = -e * v * _inv(lp[r, i])
            col[r, i] = v
    return col


@numba.njit(nogil=True, cache=True)
def _power_matvec(lp, rp, d, e, k, v, inv_a):
    # with g_ij = g_ii * prod_{l=i+1..j} rho_l for i <= j, the upper part obeys
    # S_i = v_i + rho_{i+1}^k S_{i+1} and the lower part T_i = rho_i^k (T_{i-1} + g_{i-1,i-1}^k v_{i-1})
    rows, n = d.shape
    out = np.empty_like(d)
    for r in range(rows):
        acc = 0j
        for i in range(n - 1, -1, -1):
            acc = v[r, i] + acc
            out[r, i] = acc
            acc = acc * (-e * _inv(rp[r, i])) ** k
        acc = 0j
        gprev = 0j
        for i in range(n):
            g = (inv_a * _inv(lp[r, i] + rp[r, i] - d[r, i])) ** k
            if i > 0:
                acc = (acc + gprev * v[r, i - 1]) * (-e * _inv(rp[r, i])) ** k
            out[r, i] = g * out[r, i] + acc
            gprev = g
    return out


def _reciprocal(z: np.ndarray) -> np.ndarray:
    # conj(z)/|z|^2; faster than numpy's overflow-safe complex division, and
    # safe here because every modulus is bounded away from 0 and infinity
    return np.conj(z) / (z.real**2 + z.imag**2)


class GreenBatch:
    """Resolvent entries ``g = H^{-1}/a`` for a batch of fields, computed on demand.

    Dirichlet lattices use O(n) pivot sweeps: left and right continued-fraction
    pivots give the diagonal, and ratios of pivots propagate a column away from
    its diagonal entry. Every ratio has modulus below one (the real part of the
    diagonal dominates the hopping), so the propagation never overflows.
    Periodic lattices fall back to dense batched inversion.
    """

    def __init__(self, spec: LatticeSpec, params: ModelParams, sigma: np.ndarray):
        self.spec = spec
        self.params = params
        sig = np.atleast_2d(_sigma_array(spec, sigma))
        self.d = _diagonal(spec, params, sig)
        self.e = -1.0 / spec.spacing**2
        self._dense = None
        self._diag = None
        self._lp = self._rp = None
        if spec.boundary == "periodic":
            self._dense = self._dense_inverse()

    @property
    def batch(self) -> int:
        return self.d.shape[0]

    def _dense_inverse(self) -> np.ndarray:
        n = self.spec.n_sites
        h = np.zeros((self.batch, n, n), dtype=complex)
        idx = np.arange(n)
        h[:, idx, idx] = self.d
        h[:, idx[:-1], idx[:-1] + 1] = self.e
        h[:, idx[:-1] + 1, idx[:-1]] = self.e
        if self.spec.boundary == "periodic":
            h[:, 0, n - 1] += self.e
            h[:, n - 1, 0] += self.e
        return np.linalg.inv(h) / self.spec.spacing

    def _sweep(self):
        if self._lp is None:
            self._lp, self._rp = _pivots(self.d, self.e**2)

    def left_pivots(self) -> np.ndarray:
        """Pivots of the forward elimination; ``det H = prod`` of them."""
        self._sweep()
        return self._lp

    def diag(self) -> np.ndarray:
        if self._dense is not None:
            return np.diagonal(self._dense, axis1=1, axis2=2).copy()
        if self._diag is None:
            self._sweep()
            self._diag = _diag(self._lp, self._rp, self.d, 1.0 / self.spec.spacing)
        return self._diag

    def column(self, j: int) -> np.ndarray:
        """``g[:, :, j]`` (equal to row ``j`` by symmetry), shape ``(batch, n)``."""
        if self._dense is not None:
            return self._dense[:, :, j].copy()
        self._sweep()
        return _column(self._lp, self._rp, self.d, self.e, j, 1.0 / self.spec.spacing)

    def _log_ratios(self) -> np.ndarray:
        # g_ij = g_ii * P_j / P_i for i <= j, with log P the cumulative log of -e/R
        self._sweep()
        rho = np.ones_like(self.d)
        rho[:, 1:] = -self.e * _reciprocal(self._rp[:, 1:])
        return np.cumsum(np.log(rho), axis=1)

    def power_matvec(self, k: int, v: np.ndarray) -> np.ndarray:
        """``sum_j g_ij**k v_j`` per batch row without forming ``g``.

        On Dirichlet lattices ``g`` is semiseparable, so the sum splits into a
        backward and a forward recursion and costs O(n); every step multiplies
        by a ratio of modulus below one, so nothing overflows.
        """
        v = np.ascontiguousarray(np.broadcast_to(v, self.d.shape), dtype=complex)
        if self._dense is not None:
            return np.einsum("rij,rj->ri", self._dense**k, v)
        self._sweep()
        return _power_matvec(self._lp, self._rp, self.d, self.e, k, v, 1.0 / self.spec.spacing)

    def full(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        n = self.spec.n_sites
        gd = self.diag()
        logp = self._log_ratios()
        upper = np.triu(np.ones((n, n), dtype=bool))
        if logp[:, -1].real.min() > -600.0:
            p = np.exp(logp)
            g = (gd / p)[:, :, None] * p[:, None, :]
        else:
            g = gd[:, :, None] * np.exp(np.where(upper, logp[:, None, :] - logp[:, :, None], -np.inf))
        g = np.where(upper, g, np.swapaxes(g, 1, 2))
        return g


def resolvent(spec: LatticeSpec, params: ModelParams, sigma) -> Resolvent:
    sig = _sigma_array(spec, sigma)
    g = GreenBatch(spec, params, sig[None, :]).full()[0].copy()
    h = build_operator(spec, params, sig)
    a = spec.spacing
    res = np.max(np.abs(h @ g - np.eye(spec.n_sites) / a))
    if not res <= 1e-10 / a:
        raise SolverError(f"resolvent residual {res:.3e} exceeds {1e-10 / a:.3e}")
    return Resolvent(g)


@dataclass(frozen=True)
class Lemma1Report:
    max_violation: float
    holds: bool


def check_lemma1(spec: LatticeSpec, params: ModelParams, sigma, rel_tol: float = 1e-9) -> Lemma1Report:
    """Entrywise ``|g| <= g'`` against the comparator built from ``re(m2)``.

    ``max_violation`` is ``max(|g| / g' - 1)``; it is negative when the bound is strict everywhere.
    """
    sig = np.atleast_2d(_sigma_array(spec, sigma))
    g = GreenBatch(spec, params, sig).full()
    gp = comparator_matrix(spec, params)
    ratio = np.abs(g) / gp[None]
    worst = float(np.max(ratio) - 1.0)
    return Lemma1Report(max_violation=worst, holds=worst <= rel_tol)
