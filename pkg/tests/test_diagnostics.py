import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nngrowth.diagnostics import autocorrelation, effective_sample_size, gelman_rubin, multichain_ess, psrf


def ar1(rng, phi, n):
    x = np.empty(n)
    x[0] = rng.standard_normal() / np.sqrt(1 - phi ** 2)
    eps = rng.standard_normal(n)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + eps[i]
    return x


def test_psrf_same_distribution():
    rng = np.random.default_rng(0)
    r = psrf(rng.standard_normal((2, 10_000)))
    assert 0.99 <= r <= 1.02


def test_psrf_offset_chain():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 1000))
    x[1] += 10
    assert psrf(x) > 2


def test_psrf_input_checks():
    with pytest.raises(ValueError):
        psrf(np.zeros((1, 100)))
    with pytest.raises(ValueError, match="degenerate"):
        psrf(np.ones((2, 100)))


def test_gelman_rubin_needs_ten_draws():
    with pytest.raises(ValueError, match="10 draws"):
        gelman_rubin(None, np.random.default_rng(2).standard_normal((2, 9)))


def test_autocorrelation_examples():
    rng = np.random.default_rng(3)
    n = 10_000
    rho = autocorrelation(rng.standard_normal(n), 20)
    assert rho[0] == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.abs(rho[1:]) < 3 / np.sqrt(n))
    rho = autocorrelation(ar1(rng, 0.9, 100_000), 1)
    assert rho[1] == pytest.approx(0.9, abs=0.01)


def test_autocorrelation_matches_direct_sum():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(50)
    xc = x - x.mean()
    direct = np.array([np.dot(xc[: 50 - k], xc[k:]) for k in range(10)]) / np.dot(xc, xc)
    np.testing.assert_allclose(autocorrelation(x, 9), direct, atol=1e-12)


def test_ess_examples():
    rng = np.random.default_rng(5)
    assert 8000 <= effective_sample_size(rng.standard_normal(10_000)) <= 12_000
    n = 100_000
    assert effective_sample_size(ar1(rng, 0.9, n)) == pytest.approx(n / 19, rel=0.2)
    small = effective_sample_size(np.arange(10.0))
    assert np.isfinite(small) and small > 0


def test_multichain_ess_adds():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((3, 4000))
    assert multichain_ess(x) == pytest.approx(sum(effective_sample_size(c) for c in x))


@given(st.integers(0, 2**31))
def test_psrf_scale_and_shift_invariant(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 200)) + rng.normal(0, 0.3, (3, 1))
    a, b = rng.uniform(0.1, 10), rng.normal(0, 5)
    assert psrf(a * x + b) == pytest.approx(psrf(x), rel=1e-9)
