"""White noise on the lattice, splittable random streams, and Monte-Carlo estimates.

The lattice stand-in for the Gaussian measure with covariance ``t delta(x-y)`` is
iid ``N(0, t/a)`` per site.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import LatticeSpec, SigmaField


class MonteCarloError(RuntimeError):
    pass


@dataclass(frozen=True)
class RngStream:
    """A random stream addressed by ``(seed, path)``.

    Draws depend only on the address, so a sample's noise does not depend on
    which worker evaluates it or in which order.
    """

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *idx: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(idx))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))

    def normal(self, shape) -> np.ndarray:
        return self.generator().standard_normal(shape)


@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo mean with a standard error.

    ``std_err`` combines the real and imaginary sample variances in quadrature.
    """

    mean: complex
    std_err: float
    n_samples: int

    @classmethod
    def from_samples(cls, values: np.ndarray) -> "Estimate":
        v = np.asarray(values, dtype=complex).ravel()
        n = v.size
        if n == 0:
            raise ValueError("no samples")
        if np.all(v == v[0]):
            return cls(complex(v[0]), 0.0, n)
        mean = complex(np.mean(v))
        if n < 2:
            return cls(mean, math.inf, n)
        var = np.var(v.real, ddof=1) + np.var(v.imag, ddof=1)
        return cls(mean, float(math.sqrt(var / n)), n)

    @classmethod
    def exact(cls, value: complex, n_samples: int = 1) -> "Estimate":
        return cls(complex(value), 0.0, n_samples)

    def merge(self, other: "Estimate") -> "Estimate":
        """Pool two estimates of the same quantity from independent streams."""
        n = self.n_samples + other.n_samples
        w1, w2 = self.n_samples / n, other.n_samples / n
        mean = w1 * self.mean + w2 * other.mean
        # pooled standard error of the weighted mean of independent means
        se = math.sqrt((w1 * self.std_err) ** 2 + (w2 * other.std_err) ** 2)
        return Estimate(mean, se, n)

    def __add__(self, other: "Estimate") -> "Estimate":
        """Sum of two independent estimates of different quantities."""
        return Estimate(self.mean + other.mean, math.hypot(self.std_err, other.std_err),
                        min(self.n_samples, other.n_samples))

    def scaled(self, c: complex) -> "Estimate":
        return Estimate(c * self.mean, abs(c) * self.std_err, self.n_samples)

    def to_dict(self) -> dict:
        return {"mean_re": self.mean.real, "mean_im": self.mean.imag,
                "std_err": self.std_err, "n_samples": self.n_samples}


def agree_within(a: Estimate, b: Estimate, k: float = 3.0, floor: float = 1e-12) -> bool:
    return abs(a.mean - b.mean) <= k * math.hypot(a.std_err, b.std_err) + floor


def noise(spec: LatticeSpec, t: float, shape: Sequence[int], stream: RngStream) -> np.ndarray:
    """Raw white-noise array of shape ``(*shape, n_sites)`` with variance ``t/a``."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    full = tuple(shape) + (spec.n_sites,)
    if t == 0:
        return np.zeros(full)
    return math.sqrt(t / spec.spacing) * stream.normal(full)


def sample_noise(spec: LatticeSpec, t: float, rng: RngStream) -> SigmaField:
    return SigmaField(noise(spec, t, (), rng))


def mc_convolve(
    f: Callable[[SigmaField], complex],
    spec: LatticeSpec,
    t: float,
    base: SigmaField,
    n_samples: int,
    rng: RngStream,
    threads: int = 1,
    antithetic: bool = False,
) -> Estimate:
    """Unbiased estimate of ``E f(base + sigma_bar)`` with ``sigma_bar`` white noise of strength ``t``.

    Sample ``i`` is drawn from ``rng.child(i)``. With ``antithetic=True``
    sample pairs share one draw with opposite signs, and the standard error is
    computed from pair averages.
    """
    if t == 0:
        return Estimate.exact(f(base), max(n_samples, 1))
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    if antithetic and n_samples % 2:
        raise ValueError("antithetic pairing needs an even n_samples")

    def one(i: int) -> complex:
        j = i // 2 if antithetic else i
        xi = noise(spec, t, (), rng.child(j))
        if antithetic and i % 2:
            xi = -xi
        try:
            return complex(f(SigmaField(base.values + xi)))
        except Exception as exc:
            raise MonteCarloError(f"evaluation failed at sample {i}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = np.array(list(pool.map(one, range(n_samples))))
    else:
        values = np.array([one(i) for i in range(n_samples)])
    if antithetic:
        est = Estimate.from_samples(values.reshape(-1, 2).mean(axis=1))
        return Estimate(est.mean, est.std_err, n_samples)
    return Estimate.from_samples(values)
