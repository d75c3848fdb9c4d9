
import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from lvelab.gaussian import (
    Estimate,
    MonteCarloError,
    RngStream,
    agree_within,
    mc_convolve,
    noise,
    sample_noise,
)
from lvelab.lattice import LatticeSpec, SigmaField


SPEC = LatticeSpec(0.25, 2.0)


def test_stream_addresses_are_deterministic_and_distinct():
    a = RngStream(7).child(1, 2).normal(5)
    b = RngStream(7, (1, 2)).normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, RngStream(7).child(2, 1).normal(5))
    assert not np.array_equal(a, RngStream(8).child(1, 2).normal(5))


def test_stream_rejects_bad_seed():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)


def test_noise_variance_matches_lattice_delta():
    t = 0.6
    xi = noise(SPEC, t, (20000,), RngStream(1))
    var = xi.var()
    assert var == pytest.approx(t / SPEC.spacing, rel=0.02)
    assert abs(np.corrcoef(xi[:, 0], xi[:, 1])[0, 1]) < 0.03


def test_noise_zero_strength_and_validation():
    assert np.all(noise(SPEC, 0.0, (3,), RngStream(1)) == 0)
    with pytest.raises(ValueError):
        noise(SPEC, -0.1, (), RngStream(1))
    assert sample_noise(SPEC, 1.0, RngStream(4)).values.shape == (SPEC.n_sites,)


def test_semigroup_of_strengths():
    # independent draws of strength s and t add up to strength s + t
    s, t = 0.3, 0.5
    x = noise(SPEC, s, (20000,), RngStream(1)) + noise(SPEC, t, (20000,), RngStream(2))
    assert x.var() == pytest.approx((s + t) / SPEC.spacing, rel=0.02)


def test_estimate_from_samples():
    est = Estimate.from_samples(np.array([1.0, 3.0]))
    assert est.mean == 2.0
    assert est.std_err == pytest.approx(1.0)
    assert Estimate.from_samples(np.full(4, 2.5 + 1j)).std_err == 0.0
    assert Estimate.from_samples(np.array([1.0])).std_err == 0.0
    with pytest.raises(ValueError):
        Estimate.from_samples(np.array([]))


def test_estimate_arithmetic():
    a = Estimate(1.0, 0.3, 10)
    b = Estimate(2.0j, 0.4, 30)
    s = a + b
    assert s.mean == 1 + 2j and s.std_err == pytest.approx(0.5)
    m = Estimate(1.0, 0.2, 10).merge(Estimate(3.0, 0.2, 30))
    assert m.mean == pytest.approx(2.5) and m.n_samples == 40
    assert a.scaled(-2j).std_err == pytest.approx(0.6)
    assert set(a.to_dict()) == {"mean_re", "mean_im", "std_err", "n_samples"}
    assert agree_within(Estimate(1.0, 0.1, 2), Estimate(1.5, 0.1, 2), k=4.0)
    assert not agree_within(Estimate(1.0, 0.1, 2), Estimate(1.5, 0.1, 2), k=3.0)


def test_mc_convolve_at_zero_strength_is_exact():
    base = SigmaField(np.linspace(-1, 1, SPEC.n_sites))
    est = mc_convolve(lambda s: s.values.sum() + 2.0, SPEC, 0.0, base, 10, RngStream(0))
    assert est.mean == pytest.approx(2.0) and est.std_err == 0.0


def test_mc_convolve_quadratic_moment():
    # E (sigma_0 + xi_0)^2 = sigma_0^2 + t/a
    t = 0.5
    base = SigmaField(np.full(SPEC.n_sites, 0.7))
    est = mc_convolve(lambda s: s.values[0] ** 2, SPEC, t, base, 4000, RngStream(3))
    exact = 0.49 + t / SPEC.spacing
    assert abs(est.mean - exact) <= 4 * est.std_err


def test_mc_convolve_antithetic_cancels_odd_functions():
    base = SigmaField(np.zeros(SPEC.n_sites))
    est = mc_convolve(lambda s: s.values[2] ** 3, SPEC, 1.0, base, 200, RngStream(3), antithetic=True)
    assert abs(est.mean) < 1e-12 and est.n_samples == 200
    with pytest.raises(ValueError):
        mc_convolve(lambda s: 0.0, SPEC, 1.0, base, 201, RngStream(3), antithetic=True)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**63), st.sampled_from([2, 4, 8]))
def test_mc_convolve_independent_of_threads(seed, threads):
    base = SigmaField(np.zeros(SPEC.n_sites))
    f = lambda s: np.exp(1j * s.values[:3].sum())
    one = mc_convolve(f, SPEC, 1.0, base, 40, RngStream(seed))
    many = mc_convolve(f, SPEC, 1.0, base, 40, RngStream(seed), threads=threads)
    assert one == many


def test_mc_convolve_reports_failing_sample():
    base = SigmaField(np.zeros(SPEC.n_sites))

    def f(s):
        raise ZeroDivisionError("boom")

    with pytest.raises(MonteCarloError, match="sample 0"):
        mc_convolve(f, SPEC, 1.0, base, 4, RngStream(0))
    with pytest.raises(ValueError):
        mc_convolve(lambda s: 0.0, SPEC, 1.0, base, 1, RngStream(0))
