"""Continuum kernels and closed-form bounds for the one-dimensional quartic model.

Conventions: ``M = re(m2)`` is the comparator mass squared, ``lam`` the quartic
coupling. Only the real part of ``m2`` enters the bound evaluators; the full
complex ``m2`` is used by the lattice code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import integrate

from .combinatorics import ballot_table, catalan_table, factorial_ratio


class InadmissibleError(ValueError):
    """Raised when ``8 lam t > re(m2)^{3/2}`` (outside the convergence region)."""


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelParams:
    m2: complex
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "m2", complex(self.m2))
        object.__setattr__(self, "lam", float(self.lam))
        if not self.m2.real > 0:
            raise ValueError(f"re(m2) must be positive, got m2={self.m2}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")

    @property
    def re_m2(self) -> float:
        return self.m2.real

    @property
    def frontier(self) -> float:
        """Largest coupling admissible at t=1."""
        return self.re_m2**1.5 / 8.0

    def admissible(self, t: float = 1.0, strict: bool = False) -> bool:
        lhs, rhs = 8.0 * self.lam * t, self.re_m2**1.5
        return lhs < rhs if strict else lhs <= rhs


@dataclass(frozen=True)
class DecayParams:
    eps_t: float
    c: float


def _require_admissible(params: ModelParams, t: float, strict: bool = False) -> None:
    if not params.admissible(t, strict=strict):
        rel = "<" if strict else "<="
        raise InadmissibleError(
            f"need 8*lam*t {rel} re(m2)^(3/2): lam={params.lam}, t={t}, "
            f"frontier lam*t={params.frontier}"
        )


def covariance_C(mass: float, x: float, y: float) -> float:
    if not mass > 0:
        raise ValueError(f"mass must be positive, got {mass}")
    return math.exp(-mass * abs(x - y)) / (2.0 * mass)


def comparator_Cprime(params: ModelParams, x: float, y: float) -> float:
    return covariance_C(math.sqrt(params.re_m2), x, y)


def decay_params(params: ModelParams, t: float = 1.0) -> DecayParams:
    """Resummation parameter ``eps_t`` and the decay fraction ``c = 1 - eps_t``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    _require_admissible(params, t)
    k = 8.0 * params.lam * t * params.re_m2**-1.5
    root = math.sqrt(max(0.0, 1.0 - k))
    # 1 - root = k / (1 + root) avoids cancellation at small k
    eps = 0.5 * k / (1.0 + root)
    return DecayParams(eps_t=eps, c=1.0 - eps)


# ---------------------------------------------------------------------------
# kernel powers (C'^{m+1})_{y1,y2}


@lru_cache(maxsize=None)
def _matern_coeffs(m: int) -> tuple[float, ...]:
    # (2m-j)! / (j! (m-j)! m!) for j = 0..m
    return tuple(
        float(Fraction(math.factorial(2 * m - j), math.factorial(j) * math.factorial(m - j) * math.factorial(m)))
        for j in range(m + 1)
    )


def _kernel_power_closed(mass2: float, m: int, r: float) -> float:
    kappa = math.sqrt(mass2)
    r = abs(r)
    log_pref = -kappa * r - (2 * m + 1) * math.log(2.0 * kappa)
    total = 0.0
    for j, c in enumerate(_matern_coeffs(m)):
        if j == 0:
            total += c * math.exp(log_pref)
        elif r > 0:
            total += c * math.exp(log_pref + j * math.log(2.0 * kappa * r))
    return total


def _kernel_power_quadrature(mass2: float, m: int, r: float) -> tuple[float, float]:
    r = abs(r)
    if r == 0.0:
        # p = sqrt(M) tan(theta) on [0, pi/2)
        val, err = integrate.quad(
            lambda th: math.cos(th) ** (2 * m), 0.0, math.pi / 2, epsabs=1e-14, epsrel=1e-13, limit=200
        )
        scale = mass2 ** (-m - 0.5) / math.pi
        return val * scale, err * scale
    # p = sqrt(M) u, then a Fourier-weighted rule on [0, inf) for the oscillatory tail
    val, err = integrate.quad(
        lambda u: (u * u + 1.0) ** (-(m + 1)), 0.0, np.inf, weight="cos", wvar=math.sqrt(mass2) * r,
        epsabs=1e-12, limlst=400, limit=1000,
    )
    scale = mass2 ** (-m - 0.5) / math.pi
    return val * scale, err * scale


def kernel_power(params: ModelParams, m: int, y1: float, y2: float, method: str = "closed") -> float:
    """``(C'^{m+1})_{y1,y2} = int dp/2pi e^{ip(y1-y2)} / (p^2 + re m2)^{m+1}``.

    ``method="closed"`` uses the exact finite sum produced by repeated
    convolution of ``C'``; ``method="quadrature"`` integrates the Fourier
    representation numerically.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if method == "closed":
        return _kernel_power_closed(params.re_m2, m, y1 - y2)
    if method == "quadrature":
        val, err = _kernel_power_quadrature(params.re_m2, m, y1 - y2)
        if not err <= 1e-9 * abs(val) + 1e-11 * params.re_m2 ** (-m - 0.5):
            raise QuadratureError(f"Fourier quadrature did not converge: value={val}, error estimate={err}")
        return val
    raise ValueError(f"unknown method {method!r}")


def resummed_kernel(params: ModelParams, eps: float, y1: float, y2: float) -> float:
    """``sum_m (eps re m2)^m (C'^{m+1})_{y1,y2}`` in closed form."""
    return covariance_C(math.sqrt((1.0 - eps) * params.re_m2), y1, y2)


# ---------------------------------------------------------------------------
# bounds


def theorem1_bound(params: ModelParams, y1: float, y2: float) -> float:
    _require_admissible(params, 1.0)
    c = decay_params(params, 1.0).c
    return covariance_C(math.sqrt(c * params.re_m2), y1, y2)


def _theorem2_integral(k: float) -> float:
    # int_0^1 dt (1 + sqrt(1 - k t))^-2 via u = sqrt(1 - k t):
    # (2/k) [ln(1+u) + 1/(1+u)]_{u1}^{1} = (2/k) (log1p(d) - d/2), d = k / (1+u1)^2
    if k < 1e-8:
        # (1/4)(1 + k/4 + 5k^2/48) + O(k^3); avoids 2/k overflowing for tiny k
        return 0.25 * (1.0 + 0.25 * k)
    u1 = math.sqrt(max(0.0, 1.0 - k))
    d = k / (1.0 + u1) ** 2
    return 2.0 / k * (math.log1p(d) - 0.5 * d)


def theorem2_integral_quadrature(k: float) -> float:
    val, _ = integrate.quad(
        lambda t: (1.0 + math.sqrt(max(0.0, 1.0 - k * t))) ** -2, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200
    )
    return val


def theorem2_bound(params: ModelParams) -> float:
    _require_admissible(params, 1.0)
    k = 8.0 * params.lam * params.re_m2**-1.5
    return params.lam / params.re_m2 * (0.5 + _theorem2_integral(k))


def lemma4_bound(params: ModelParams, n: int, N: int, t: float) -> float:
    """Bound on ``int dz_1..dz_N |W^(n)_{t; z0, z1..zN}|``."""
    if n < 0 or N < 0:
        raise ValueError("n and N must be >= 0")
    M = params.re_m2
    g = 2.0 * math.sqrt(2.0 * params.lam)
    a = catalan_table(n)[n]
    return (
        t**n / 4.0 ** (n + 1) * g ** (N + 2 * n + 1) / M ** (N + 1.5 * n + 0.5)
        * factorial_ratio(N, 2 * n) * a
    )


def lemma6_bound(params: ModelParams, n: int, m: int, N: int, Nprime: int, t: float, y1: float, y2: float) -> float:
    """Bound on the integrated refined term ``|W^(n,m)_{t,y1,y2; z; z'}|``."""
    if n < 0 or m < 0 or N < 0 or Nprime < 0:
        raise ValueError("n, m, N, Nprime must be >= 0")
    if m > n:
        return 0.0
    b = ballot_table(n)[n, m]
    if b == 0:
        return 0.0
    M = params.re_m2
    g = 2.0 * math.sqrt(2.0 * params.lam)
    return (
        t**n / 4.0**n * g ** (N + Nprime + 2 * n) / M ** (Nprime + 1.5 * n - m)
        * factorial_ratio(N, m) * factorial_ratio(Nprime, 2 * n - m - 1) * b
        * kernel_power(params, N + m, y1, y2)
    )


@dataclass(frozen=True)
class TailCertificate:
    """Certified bound on ``sum_{n > n_max} sum_m |W^(n,m)_{t,y1,y2}|``.

    ``explicit`` sums the refined bounds for ``n_max < n <= n_cut`` exactly;
    ``majorant`` bounds the rest by ``(4x)^n / (2 sqrt(M))`` summed
    geometrically, where ``x = 2 lam t M^{-3/2}``. This uses
    ``(C'^{m+1})_{y1,y2} <= M^{-m} / (2 sqrt(M))`` and ``sum_m B_{n,m} = A_n <= 4^n``.
    """

    n_max: int
    n_cut: int
    ratio: float
    explicit: float
    majorant: float
    value: float

    def describe(self) -> dict:
        return {
            "n_max": self.n_max,
            "n_cut": self.n_cut,
            "geometric_ratio_4x": self.ratio,
            "explicit_sum": self.explicit,
            "geometric_majorant": self.majorant,
            "value": self.value,
            "majorant": "sum_{n>n_cut} (4x)^n / (2 sqrt(re m2)), x = 2 lam t re(m2)^-1.5",
        }


# relative slack absorbing float round-off in the explicit sum
_ROUNDOFF = 1e-12


def tail_certificate(params: ModelParams, n_max: int, t: float, y1: float, y2: float, extra_terms: int = 40) -> TailCertificate:
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    if params.lam == 0.0:
        return TailCertificate(n_max, n_max, 0.0, 0.0, 0.0, 0.0)
    _require_admissible(params, t, strict=True)
    M = params.re_m2
    x = 2.0 * params.lam * t * M**-1.5
    n_cut = n_max + extra_terms
    b = ballot_table(n_cut)
    kp = [kernel_power(params, m, y1, y2) for m in range(n_cut + 1)]
    terms = []
    for n in range(n_max + 1, n_cut + 1):
        col = math.fsum(float(b[n, m]) * M**m * kp[m] for m in range(1, n + 1))
        terms.append(x**n * col)
    explicit = math.fsum(terms) * (1.0 + _ROUNDOFF)
    r = 4.0 * x
    majorant = r ** (n_cut + 1) / (1.0 - r) / (2.0 * math.sqrt(M)) * (1.0 + _ROUNDOFF)
    return TailCertificate(n_max, n_cut, r, explicit, majorant, explicit + majorant)


def tail_bound(params: ModelParams, n_max: int, t: float, y1: float, y2: float) -> float:
    return tail_certificate(params, n_max, t, y1, y2).value


def refined_bound_partial_sum(params: ModelParams, n_max: int, t: float, y1: float, y2: float) -> float:
    """``sum_{n <= n_max} sum_m`` of the pointwise refined bounds (at N = N' = 0)."""
    M = params.re_m2
    x = 2.0 * params.lam * t * M**-1.5
    b = ballot_table(n_max)
    total = kernel_power(params, 0, y1, y2)
    for n in range(1, n_max + 1):
        total += x**n * math.fsum(float(b[n, m]) * M**m * kernel_power(params, m, y1, y2) for m in range(1, n + 1))
    return total


def lemma4_series_bound(params: ModelParams, t: float) -> float:
    """Closed form of ``sum_n`` Lemma-4 point bounds: ``sqrt(lam / 2M) * g(2 lam t M^-1.5)``."""
    _require_admissible(params, t)
    M = params.re_m2
    k = 8.0 * params.lam * t * M**-1.5
    return math.sqrt(params.lam / (2.0 * M)) * 2.0 / (1.0 + math.sqrt(max(0.0, 1.0 - k)))
