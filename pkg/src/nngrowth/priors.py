"""Prior hierarchy for network weights, conjugate updates, and initial-density posterior.

Output weights in row ``i`` share a mean ``m_beta[i]``; rows are growth
parameters for the GNN model and groups for the NN model. Every input-weight
column ``gamma[:, k]`` is Normal(m_gamma, sigma2_gamma I). Precisions carry
Gamma(shape, rate) priors with the conventional halved constants.

Gamma distributions here are in the (shape, rate) parameterization.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .models import LOG_2PI, GnnWeights, NnWeights


@dataclass(frozen=True)
class HyperParams:
    c_beta: float = 10.0
    e_beta: float = 10.0
    d_beta1: float = 0.1
    d_beta2: float = 0.01
    c_gamma: float = 10.0
    # d_gamma1 has no published value; mirrors d_beta1
    d_gamma1: float = 0.1
    d_gamma2: float = 0.01
    a: float = 0.2
    b: float = 0.2
    m_beta_fixed: float = 0.0
    sigma_beta_fixed: float = 10.0
    sigma_gamma_fixed: float = 10.0
    gompertz_prior_var: float = 100.0
    n0_prior_var: float = 100.0

    def __post_init__(self):
        for name, val in asdict(self).items():
            if name == "m_beta_fixed":
                continue
            if not val > 0:
                raise ValueError(f"hyperparameter {name} must be > 0, got {val}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(**d)


@dataclass
class HierarchyState:
    m_i_beta: np.ndarray
    m_0_beta: float
    sigma2_beta: float
    m_gamma: np.ndarray
    sigma2_gamma: float
    sigma2: float = 1.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.m_i_beta = np.asarray(self.m_i_beta, dtype=float)
        self.m_gamma = np.asarray(self.m_gamma, dtype=float)
        for name in ("sigma2_beta", "sigma2_gamma", "sigma2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def fixed(cls, hyper: HyperParams, n_rows: int, n_inputs: int, sigma2: float = 1.0) -> "HierarchyState":
        """Hyperparameters held at the fixed-mode constants."""
        return cls(np.full(n_rows, hyper.m_beta_fixed), 0.0, hyper.sigma_beta_fixed ** 2,
                   np.zeros(n_inputs), hyper.sigma_gamma_fixed ** 2, sigma2)

    @classmethod
    def prior_means(cls, hyper: HyperParams, n_rows: int, n_inputs: int) -> "HierarchyState":
        """Means at zero, variances at the reciprocal of the prior-mean precision."""
        return cls(np.zeros(n_rows), 0.0, hyper.d_beta2 / hyper.d_beta1,
                   np.zeros(n_inputs), hyper.d_gamma2 / hyper.d_gamma1, hyper.b / hyper.a)

    def to_unknowns(self) -> dict:
        return {"m_beta": self.m_i_beta.copy(), "m0_beta": float(self.m_0_beta),
                "sigma2_beta": float(self.sigma2_beta), "m_gamma": self.m_gamma.copy(),
                "sigma2_gamma": float(self.sigma2_gamma)}

    @classmethod
    def from_unknowns(cls, u: dict) -> "HierarchyState":
        return cls(u["m_beta"], float(u["m0_beta"]), float(u["sigma2_beta"]),
                   u["m_gamma"], float(u["sigma2_gamma"]), float(u.get("sigma2", 1.0)))


def weight_matrices(weights) -> tuple[np.ndarray, np.ndarray]:
    """(output weights by row, input weights by column) for either network model."""
    if isinstance(weights, GnnWeights):
        return weights.network.b, weights.network.gamma
    if isinstance(weights, NnWeights):
        return weights.beta_by_group, weights.gamma
    beta, gamma = weights
    return np.atleast_2d(np.asarray(beta, float)), np.atleast_2d(np.asarray(gamma, float))


def normal_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var


def gamma_logpdf(x, shape, rate):
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x


def log_prior_weights(beta: np.ndarray, gamma: np.ndarray, state: HierarchyState) -> float:
    """Normal densities of output and input weights given the hierarchy."""
    if not (state.sigma2_beta > 0 and state.sigma2_gamma > 0):
        raise ValueError("nonpositive prior variance")
    terms = np.concatenate([normal_logpdf(beta, state.m_i_beta[:, None], state.sigma2_beta).ravel(),
                            normal_logpdf(gamma, state.m_gamma[:, None], state.sigma2_gamma).ravel()])
    # exactly rounded, so independent of node order
    return math.fsum(terms)


def log_prior(weights, state: HierarchyState, hyper: HyperParams, hierarchical: bool = True) -> float:
    """Joint log prior of network weights and, in hierarchical mode, their hyperparameters.

    In fixed mode only the weight densities are summed. The hierarchical
    sum also includes the prior of the observation precision 1/sigma2.
    """
    beta, gamma = weight_matrices(weights)
    for name in ("sigma2_beta", "sigma2_gamma", "sigma2"):
        if not getattr(state, name) > 0:
            raise ValueError(f"nonpositive variance {name}")
    lp = log_prior_weights(beta, gamma, state)
    if not hierarchical:
        return lp
    s2b, s2g = state.sigma2_beta, state.sigma2_gamma
    lp += normal_logpdf(state.m_i_beta, state.m_0_beta, s2b / hyper.c_beta).sum()
    lp += float(normal_logpdf(state.m_0_beta, 0.0, s2b / hyper.e_beta))
    lp += gamma_logpdf(1.0 / s2b, hyper.d_beta1 / 2, hyper.d_beta2 / 2)
    lp += normal_logpdf(state.m_gamma, 0.0, s2g / hyper.c_gamma).sum()
    lp += gamma_logpdf(1.0 / s2g, hyper.d_gamma1 / 2, hyper.d_gamma2 / 2)
    lp += gamma_logpdf(1.0 / state.sigma2, hyper.a / 2, hyper.b / 2)
    return float(lp)


def gibbs_update_sigma2(residual_ss_weighted: float, n_obs: int, hyper: HyperParams,
                        rng: np.random.Generator) -> float:
    """Draw sigma2 from its conditional given weighted residuals.

    ``residual_ss_weighted`` is sum((y - mean)**2 / base**v).
    """
    shape = (hyper.a + n_obs) / 2.0
    rate = (hyper.b + residual_ss_weighted) / 2.0
    return 1.0 / rng.gamma(shape, 1.0 / rate)


# Full conditionals of the hierarchy, one at a time. Each takes the current
# values of everything else and returns a fresh draw.

def draw_m_i_beta(beta, m0, s2b, hyper, rng):
    n_rows, m = beta.shape
    prec = (m + hyper.c_beta) / s2b
    mean = (beta.sum(axis=1) + hyper.c_beta * m0) / (m + hyper.c_beta)
    return mean + rng.standard_normal(n_rows) / math.sqrt(prec)


def draw_m_0_beta(m_i, s2b, hyper, rng):
    r = len(m_i)
    denom = r * hyper.c_beta + hyper.e_beta
    mean = hyper.c_beta * m_i.sum() / denom
    return mean + rng.standard_normal() * math.sqrt(s2b / denom)


def draw_sigma2_beta(beta, m_i, m0, hyper, rng):
    n_rows, m = beta.shape
    shape = hyper.d_beta1 / 2 + (n_rows * m + n_rows + 1) / 2
    ss = ((beta - m_i[:, None]) ** 2).sum() + hyper.c_beta * ((m_i - m0) ** 2).sum() + hyper.e_beta * m0 ** 2
    rate = hyper.d_beta2 / 2 + ss / 2
    return 1.0 / rng.gamma(shape, 1.0 / rate)


def draw_m_gamma(gamma, s2g, hyper, rng):
    p, m = gamma.shape
    denom = m + hyper.c_gamma
    return gamma.sum(axis=1) / denom + rng.standard_normal(p) * math.sqrt(s2g / denom)


def draw_sigma2_gamma(gamma, m_gamma, hyper, rng):
    p, m = gamma.shape
    shape = hyper.d_gamma1 / 2 + (p * m + p) / 2
    ss = ((gamma - m_gamma[:, None]) ** 2).sum() + hyper.c_gamma * (m_gamma ** 2).sum()
    rate = hyper.d_gamma2 / 2 + ss / 2
    return 1.0 / rng.gamma(shape, 1.0 / rate)


def gibbs_update_hierarchy(weights, state: HierarchyState, hyper: HyperParams,
                           rng: np.random.Generator) -> HierarchyState:
    """One systematic-scan sweep over the weight hyperparameters."""
    beta, gamma = weight_matrices(weights)
    m_i = draw_m_i_beta(beta, state.m_0_beta, state.sigma2_beta, hyper, rng)
    m0 = draw_m_0_beta(m_i, state.sigma2_beta, hyper, rng)
    s2b = draw_sigma2_beta(beta, m_i, m0, hyper, rng)
    m_g = draw_m_gamma(gamma, state.sigma2_gamma, hyper, rng)
    s2g = draw_sigma2_gamma(gamma, m_g, hyper, rng)
    return replace(state, m_i_beta=m_i, m_0_beta=float(m0), sigma2_beta=float(s2b),
                   m_gamma=m_g, sigma2_gamma=float(s2g))


def n0_posterior(initial_densities, rng: np.random.Generator, size: int | None = None):
    """Draw (m0, s0^2) for the mean initial density under the 1/t0 reference prior.

    s0^2 ~ InverseGamma(I - 1, sum of squares) and m0 | s0^2 ~ Normal(mean, s0^2 / I).
    """
    n0 = np.asarray(initial_densities, dtype=float)
    n = len(n0)
    if n < 2:
        raise ValueError("need at least two initial densities")
    ss = float(((n0 - n0.mean()) ** 2).sum())
    if np.ptp(n0) == 0 or ss <= 0:
        raise ValueError("initial densities are all equal; s0^2 posterior is degenerate")
    s0_sq = 1.0 / rng.gamma(n - 1, 1.0 / ss, size=size)
    m0 = n0.mean() + rng.standard_normal(size) * np.sqrt(s0_sq / n)
    if size is None:
        return float(m0), float(s0_sq)
    return m0, s0_sq
