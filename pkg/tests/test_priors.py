import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import trapezoid

from nngrowth import priors
from nngrowth.models import NnWeights
from nngrowth.priors import HierarchyState, HyperParams, gibbs_update_sigma2, log_prior, n0_posterior

HYPER = HyperParams()


def test_default_hyperparameters():
    h = HyperParams()
    assert (h.a, h.b) == (0.2, 0.2)
    assert (h.c_beta, h.e_beta, h.d_beta1, h.d_beta2, h.c_gamma, h.d_gamma2) == (10, 10, 0.1, 0.01, 10, 0.01)
    assert (h.m_beta_fixed, h.sigma_beta_fixed, h.sigma_gamma_fixed) == (0.0, 10.0, 10.0)
    with pytest.raises(ValueError):
        HyperParams(c_beta=0.0)


def _state(rng, n_rows=3, p=4, **kw):
    base = dict(m_i_beta=rng.normal(size=n_rows), m_0_beta=float(rng.normal()), sigma2_beta=float(rng.uniform(0.5, 2)),
                m_gamma=rng.normal(size=p), sigma2_gamma=float(rng.uniform(0.5, 2)), sigma2=float(rng.uniform(0.01, 1)))
    base.update(kw)
    return HierarchyState(**base)


def _scipy_log_prior(beta, gamma, s, h):
    lp = stats.norm.logpdf(beta, s.m_i_beta[:, None], math.sqrt(s.sigma2_beta)).sum()
    lp += stats.norm.logpdf(gamma, s.m_gamma[:, None], math.sqrt(s.sigma2_gamma)).sum()
    lp += stats.norm.logpdf(s.m_i_beta, s.m_0_beta, math.sqrt(s.sigma2_beta / h.c_beta)).sum()
    lp += stats.norm.logpdf(s.m_0_beta, 0, math.sqrt(s.sigma2_beta / h.e_beta))
    lp += stats.gamma.logpdf(1 / s.sigma2_beta, h.d_beta1 / 2, scale=2 / h.d_beta2)
    lp += stats.norm.logpdf(s.m_gamma, 0, math.sqrt(s.sigma2_gamma / h.c_gamma)).sum()
    lp += stats.gamma.logpdf(1 / s.sigma2_gamma, h.d_gamma1 / 2, scale=2 / h.d_gamma2)
    lp += stats.gamma.logpdf(1 / s.sigma2, h.a / 2, scale=2 / h.b)
    return lp


def test_log_prior_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = _state(rng)
        beta, gamma = rng.normal(size=(3, 2)), rng.normal(size=(4, 2))
        got = log_prior(NnWeights(beta, gamma), s, HYPER)
        assert got == pytest.approx(_scipy_log_prior(beta, gamma, s, HYPER), abs=1e-10)


def test_weights_at_means_give_normalizers():
    rng = np.random.default_rng(1)
    s = _state(rng)
    beta = np.repeat(s.m_i_beta[:, None], 2, axis=1)
    gamma = np.repeat(s.m_gamma[:, None], 2, axis=1)
    expected = -0.5 * math.log(2 * math.pi * s.sigma2_beta) * 6 - 0.5 * math.log(2 * math.pi * s.sigma2_gamma) * 8
    assert log_prior((beta, gamma), s, HYPER, hierarchical=False) == pytest.approx(expected, abs=1e-10)
    doubled = priors.replace(s, sigma2_beta=2 * s.sigma2_beta)
    drop = priors.log_prior_weights(beta, gamma, s) - priors.log_prior_weights(beta, gamma, doubled)
    assert drop == pytest.approx(6 * 0.5 * math.log(2), abs=1e-12)


def test_fixed_mode_omits_hierarchy():
    rng = np.random.default_rng(2)
    s = HierarchyState.fixed(HYPER, 3, 3)
    b, g = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    expected = stats.norm.logpdf(b, 0, 10).sum() + stats.norm.logpdf(g, 0, 10).sum()
    assert log_prior((b, g), s, HYPER, hierarchical=False) == pytest.approx(expected, abs=1e-10)


@given(st.integers(0, 2**31), st.integers(2, 5))
def test_log_prior_node_permutation_invariant(seed, m):
    rng = np.random.default_rng(seed)
    s = _state(rng)
    beta, gamma = rng.normal(size=(3, m)), rng.normal(size=(4, m))
    perm = rng.permutation(m)
    assert log_prior((beta, gamma), s, HYPER) == log_prior((beta[:, perm], gamma[:, perm]), s, HYPER)


@given(st.integers(0, 2**31))
def test_log_prior_decreases_away_from_mean(seed):
    rng = np.random.default_rng(seed)
    s = _state(rng)
    beta = np.repeat(s.m_i_beta[:, None], 2, axis=1)
    gamma = np.repeat(s.m_gamma[:, None], 2, axis=1)
    which, i, k = rng.integers(2), rng.integers(3), rng.integers(2)
    sign = rng.choice([-1.0, 1.0])
    vals = []
    for step in np.linspace(0, 3, 10):
        b, g = beta.copy(), gamma.copy()
        (b if which == 0 else g)[i, k] += sign * step
        vals.append(log_prior((b, g), s, HYPER))
    assert np.all(np.diff(vals) < 0)


def test_sigma2_update_moments():
    rng = np.random.default_rng(3)
    prec = 1 / np.array([gibbs_update_sigma2(3.0, 40, HYPER, rng) for _ in range(100_000)])
    assert prec.mean() == pytest.approx((0.2 + 40) / (0.2 + 3.0), rel=0.01)
    prior = 1 / np.array([gibbs_update_sigma2(0.0, 0, HYPER, rng) for _ in range(100_000)])
    assert np.mean(prior) == pytest.approx(1.0, rel=0.05)
    assert stats.kstest(prior, stats.gamma(0.1, scale=10).cdf).pvalue > 1e-3


def _grid_moments(logdens, grid):
    lp = np.array([logdens(x) for x in grid])
    w = np.exp(lp - lp.max())
    z = trapezoid(w, grid)
    mean = trapezoid(grid * w, grid) / z
    var = trapezoid((grid - mean) ** 2 * w, grid) / z
    return mean, var


def test_hierarchy_conditionals_match_quadrature():
    """Each conjugate draw against numerical integration of the joint log prior."""
    rng = np.random.default_rng(4)
    s = _state(rng, n_rows=2, p=4)
    beta, gamma = rng.normal(0.5, 1, size=(2, 2)), rng.normal(0, 1, size=(4, 2))
    n = 100_000

    def check(draws, logdens, grid):
        mean, var = _grid_moments(logdens, grid)
        se = math.sqrt(var / len(draws))
        assert abs(np.mean(draws) - mean) < 4 * se + 1e-3 * abs(mean)
        assert np.var(draws) == pytest.approx(var, rel=0.03)

    m1 = np.array([priors.draw_m_i_beta(beta, s.m_0_beta, s.sigma2_beta, HYPER, rng)[0] for _ in range(n)])
    check(m1, lambda x: log_prior((beta, gamma), priors.replace(s, m_i_beta=np.array([x, s.m_i_beta[1]])), HYPER),
          np.linspace(-6, 6, 4001))
    m0 = np.array([priors.draw_m_0_beta(s.m_i_beta, s.sigma2_beta, HYPER, rng) for _ in range(n)])
    check(m0, lambda x: log_prior((beta, gamma), priors.replace(s, m_0_beta=x), HYPER), np.linspace(-6, 6, 4001))
    tb = 1 / np.array([priors.draw_sigma2_beta(beta, s.m_i_beta, s.m_0_beta, HYPER, rng) for _ in range(n)])
    check(tb, lambda t: log_prior((beta, gamma), priors.replace(s, sigma2_beta=1 / t), HYPER),
          np.linspace(1e-4, 15, 6001))
    mg = np.array([priors.draw_m_gamma(gamma, s.sigma2_gamma, HYPER, rng)[2] for _ in range(n)])
    check(mg, lambda x: log_prior((beta, gamma), priors.replace(s, m_gamma=np.r_[s.m_gamma[:2], x, s.m_gamma[3]]),
                                  HYPER), np.linspace(-6, 6, 4001))
    tg = 1 / np.array([priors.draw_sigma2_gamma(gamma, s.m_gamma, HYPER, rng) for _ in range(n)])
    check(tg, lambda t: log_prior((beta, gamma), priors.replace(s, sigma2_gamma=1 / t), HYPER),
          np.linspace(1e-4, 15, 6001))


def _rwm_mean(logdens, x0, step, n, rng, log_scale=False):
    """Plain random-walk Metropolis; ``log_scale`` walks on log x with the Jacobian."""
    if log_scale:
        target = lambda u: logdens(math.exp(u)) + u
        u = math.log(x0)
    else:
        target = logdens
        u = x0
    lp = target(u)
    total = 0.0
    for z, log_u in zip(rng.standard_normal(n), np.log(rng.uniform(size=n))):
        cand = u + step * z
        lc = target(cand)
        if log_u < lc - lp:
            u, lp = cand, lc
        total += math.exp(u) if log_scale else u
    return total / n


def test_hierarchy_conditionals_match_metropolis_oracle():
    """Two-weight toy (one output, one input weight): conjugate means vs a random-walk sampler."""
    rng = np.random.default_rng(9)
    beta, gamma = np.array([[3.0]]), np.array([[1.5]])
    s = HierarchyState(np.array([2.5]), 2.0, 0.25, np.array([1.0]), 0.5)
    n = 100_000
    cases = [
        (lambda: priors.draw_m_i_beta(beta, s.m_0_beta, s.sigma2_beta, HYPER, rng)[0],
         lambda x: log_prior((beta, gamma), priors.replace(s, m_i_beta=np.array([x])), HYPER), 2.5, 0.3, False),
        (lambda: priors.draw_m_0_beta(s.m_i_beta, s.sigma2_beta, HYPER, rng),
         lambda x: log_prior((beta, gamma), priors.replace(s, m_0_beta=x), HYPER), 2.0, 0.3, False),
        (lambda: 1 / priors.draw_sigma2_beta(beta, s.m_i_beta, s.m_0_beta, HYPER, rng),
         lambda t: log_prior((beta, gamma), priors.replace(s, sigma2_beta=1 / t), HYPER), 4.0, 1.5, True),
        (lambda: priors.draw_m_gamma(gamma, s.sigma2_gamma, HYPER, rng)[0],
         lambda x: log_prior((beta, gamma), priors.replace(s, m_gamma=np.array([x])), HYPER), 1.0, 0.4, False),
        (lambda: 1 / priors.draw_sigma2_gamma(gamma, s.m_gamma, HYPER, rng),
         lambda t: log_prior((beta, gamma), priors.replace(s, sigma2_gamma=1 / t), HYPER), 2.0, 1.5, True),
    ]
    for draw, logdens, x0, step, log_scale in cases:
        gibbs = np.mean([draw() for _ in range(n)])
        oracle = _rwm_mean(logdens, x0, step, n, rng, log_scale)
        assert gibbs == pytest.approx(oracle, rel=0.02)


def test_m_i_collapses_with_huge_c_beta():
    rng = np.random.default_rng(5)
    h = HyperParams(c_beta=1e12)
    beta = rng.normal(size=(3, 2))
    for _ in range(1000):
        m_i = priors.draw_m_i_beta(beta, 0.7, 1.3, h, rng)
        assert np.all(np.abs(m_i - 0.7) < 1e-4)


def test_gibbs_sweep_returns_valid_state():
    rng = np.random.default_rng(6)
    s = _state(rng)
    new = priors.gibbs_update_hierarchy((rng.normal(size=(3, 2)), rng.normal(size=(4, 2))), s, HYPER, rng)
    assert new.sigma2 == s.sigma2
    assert new.m_i_beta.shape == (3,) and new.m_gamma.shape == (4,)
    assert new.sigma2_beta > 0 and new.sigma2_gamma > 0


def test_n0_posterior_example():
    rng = np.random.default_rng(7)
    m0, s0 = n0_posterior([1.0, 2.0, 3.0], rng, size=100_000)
    # s0^2 ~ InverseGamma(2, 2) and m0 | s0^2 ~ Normal(2, s0^2 / 3)
    assert stats.kstest(s0, stats.invgamma(2, scale=2).cdf).pvalue > 1e-3
    assert np.mean(m0) == pytest.approx(2.0, rel=0.01)
    z = (m0 - 2.0) / np.sqrt(s0 / 3)
    assert stats.kstest(z, "norm").pvalue > 1e-3
    x = np.array([0.05, 0.052, 0.047, 0.049, 0.051])
    m0, _ = n0_posterior(x, rng, size=100_000)
    assert np.mean(m0) == pytest.approx(x.mean(), rel=0.01)


def test_n0_posterior_degenerate():
    rng = np.random.default_rng(8)
    with pytest.raises(ValueError, match="all equal"):
        n0_posterior([0.05, 0.05, 0.05], rng)
    with pytest.raises(ValueError):
        n0_posterior([0.05], rng)
