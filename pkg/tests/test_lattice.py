import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from lvelab.gaussian import RngStream, noise
from lvelab.kernels import ModelParams, covariance_C
from lvelab.lattice import (
    GreenBatch,
    LatticeSpec,
    SigmaField,
    SolverError,
    build_operator,
    check_lemma1,
    comparator_matrix,
    free_covariance,
    resolvent,
)


def _dense_g(spec, params, sig):
    return np.linalg.inv(build_operator(spec, params, sig)) / spec.spacing


def test_spec_geometry():
    spec = LatticeSpec(0.25, 4.0)
    assert spec.n_sites == 32
    assert spec.coords[0] == pytest.approx(-3.875)
    assert spec.coords[-1] == pytest.approx(3.875)
    y1, y2 = spec.centered_pair(1.0)
    assert (spec.coords[y2] - spec.coords[y1]) == pytest.approx(1.0)
    assert spec.site_near(0.1) in (15, 16)


@pytest.mark.parametrize("kw", [dict(spacing=0.0, half_length=1.0), dict(spacing=1.0, half_length=-1.0),
                                dict(spacing=1.0, half_length=4.0, boundary="open"),
                                dict(spacing=1.0, half_length=0.5)])
def test_spec_rejects_bad_geometry(kw):
    with pytest.raises(ValueError):
        LatticeSpec(**kw)


def test_sigma_field_validation():
    with pytest.raises(ValueError):
        SigmaField(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        SigmaField(np.zeros((2, 2)))
    spec = LatticeSpec(1.0, 3.0)
    with pytest.raises(ValueError):
        resolvent(spec, ModelParams(1.0, 0.05), np.zeros(5))


@pytest.mark.parametrize("boundary", ["dirichlet", "periodic"])
@pytest.mark.parametrize("m2", [1.0, cmath.exp(1.0j), cmath.exp(1.4j)])
def test_batch_matches_dense_inverse(boundary, m2):
    spec = LatticeSpec(0.25, 4.0, boundary)
    params = ModelParams(m2, 0.125)
    sig = noise(spec, 1.0, (3,), RngStream(11))
    gb = GreenBatch(spec, params, sig)
    dense = np.stack([_dense_g(spec, params, s) for s in sig])
    scale = np.abs(dense).max()
    assert np.abs(gb.full() - dense).max() <= 1e-12 * scale
    assert np.abs(gb.diag() - np.diagonal(dense, axis1=1, axis2=2)).max() <= 1e-12 * scale
    for j in (0, 7, spec.n_sites - 1):
        assert np.abs(gb.column(j) - dense[:, :, j]).max() <= 1e-12 * scale
    v = RngStream(12).normal((3, spec.n_sites))
    for k in (1, 2, 3):
        ref = np.einsum("rij,rj->ri", dense**k, v)
        assert np.abs(gb.power_matvec(k, v) - ref).max() <= 1e-11 * np.abs(ref).max()


def test_full_survives_long_chains():
    # decay across the box is far below exp(-600); the log-space path must not underflow to nan
    spec = LatticeSpec(0.25, 128.0)
    params = ModelParams(4.0, 0.05)
    g = GreenBatch(spec, params, np.zeros((1, spec.n_sites))).full()[0]
    assert np.all(np.isfinite(g))
    ref = free_covariance(spec, 4.0)
    assert np.allclose(g[:40, :40].real, ref[:40, :40], rtol=1e-10, atol=0)


def test_resolvent_residual_and_symmetry():
    spec = LatticeSpec(0.25, 8.0)
    params = ModelParams(cmath.exp(1.0j), 0.05)
    sig = SigmaField(noise(spec, 1.0, (), RngStream(3)))
    g = resolvent(spec, params, sig).g
    h = build_operator(spec, params, sig)
    assert np.abs(h @ g - np.eye(spec.n_sites) / spec.spacing).max() < 1e-10
    # complex symmetric, not Hermitian
    assert np.abs(g - g.T).max() < 1e-13
    assert np.abs(g - g.conj().T).max() > 1e-3


def test_resolvent_raises_on_bad_residual(monkeypatch):
    spec = LatticeSpec(1.0, 3.0)
    params = ModelParams(1.0, 0.05)
    monkeypatch.setattr(GreenBatch, "full", lambda self: np.zeros((1, 6, 6), dtype=complex))
    with pytest.raises(SolverError):
        resolvent(spec, params, np.zeros(6))


def test_conjugation_parity():
    # real m2: g[-sigma] = conj(g[sigma])
    spec = LatticeSpec(0.5, 4.0)
    params = ModelParams(1.0, 0.1)
    sig = noise(spec, 1.0, (), RngStream(5))
    g1 = resolvent(spec, params, sig).g
    g2 = resolvent(spec, params, -sig).g
    assert np.abs(g2 - g1.conj()).max() < 1e-13


def test_functional_derivative_convention():
    # dg_xy / dsigma_z (times 1/a) equals -2i sqrt(2 lam) g_xz g_zy
    spec = LatticeSpec(0.5, 3.0)
    params = ModelParams(1.0, 0.08)
    sig = noise(spec, 1.0, (), RngStream(9))
    a, z, h = spec.spacing, 4, 1e-6
    dp, dm = sig.copy(), sig.copy()
    dp[z] += h
    dm[z] -= h
    num = (resolvent(spec, params, dp).g - resolvent(spec, params, dm).g) / (2 * h) / a
    g = resolvent(spec, params, sig).g
    exact = -2j * math.sqrt(2 * params.lam) * np.outer(g[:, z], g[z, :])
    assert np.abs(num - exact).max() < 1e-7 * np.abs(exact).max()


def test_comparator_is_positive_and_matches_free_covariance():
    spec = LatticeSpec(0.25, 4.0)
    params = ModelParams(cmath.exp(1.0j), 0.05)
    gp = comparator_matrix(spec, params)
    assert np.all(gp > 0)
    assert np.allclose(gp, free_covariance(spec, math.cos(1.0)))


@pytest.mark.parametrize("m2", [1.0, cmath.exp(1.0j), cmath.exp(1.4j)])
def test_lemma1_holds_on_random_fields(m2):
    spec = LatticeSpec(0.25, 16.0)
    params = ModelParams(m2, 0.125)
    sig = noise(spec, 1.0, (20,), RngStream(21))
    rep = check_lemma1(spec, params, sig)
    assert rep.holds
    assert rep.max_violation <= 1e-9


def test_lemma1_zero_field_is_tight_for_real_mass():
    spec = LatticeSpec(0.5, 4.0)
    rep = check_lemma1(spec, ModelParams(1.0, 0.1), np.zeros(spec.n_sites))
    assert abs(rep.max_violation) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.45), st.floats(0.0, 0.3), st.integers(0, 2**32 - 1))
def test_lemma1_property(theta, lam, seed):
    spec = LatticeSpec(0.5, 6.0)
    params = ModelParams(cmath.exp(1j * theta), lam)
    sig = 3.0 * noise(spec, 1.0, (2,), RngStream(seed))
    assert check_lemma1(spec, params, sig).holds


def test_exponential_decay_rate():
    # |g_0r| <= g'_0r decays at the comparator mass
    spec = LatticeSpec(0.25, 16.0)
    params = ModelParams(1.0, 0.05)
    g = np.abs(resolvent(spec, params, noise(spec, 1.0, (), RngStream(2))).g)
    c = spec.n_sites // 2
    r = np.arange(4, 40)
    slope = np.polyfit(r * spec.spacing, np.log(g[c, c + r]), 1)[0]
    assert slope < -0.8


@pytest.mark.parametrize("a, tol", [(0.25, 0.07), (0.0625, 0.005)])
def test_free_limit_against_continuum(a, tol):
    spec = LatticeSpec(a, 16.0)
    g = free_covariance(spec, 1.0)
    for sep in (0.0, 1.0, 2.0, 3.0, 4.0):
        y1, y2 = spec.centered_pair(sep)
        c = covariance_C(1.0, spec.coords[y1], spec.coords[y2])
        assert abs(g[y1, y2] - c) <= tol * c
