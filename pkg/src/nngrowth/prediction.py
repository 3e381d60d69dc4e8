"""Posterior predictive summaries: fitted curves, one-step-ahead and new-group prediction.

All intervals are empirical 2.5% / 97.5% quantiles of predictive draws.
Predictive draws use the model's step variance without the likelihood
floor, so an extinct population predicts exactly zero.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import EnvCondition, GrowthCurve, scale_inputs
from .mcmc import PosteriorSamples
from .models import GOMPERTZ_KEYS, Family, gompertz_mean
from .priors import n0_posterior


@dataclass
class PredictiveSummary:
    time_index: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    lower95: np.ndarray
    upper95: np.ndarray
    mode: str = ""
    draws: np.ndarray | None = None

    @classmethod
    def from_draws(cls, time_index, draws, mode: str = "", keep_draws: bool = False) -> "PredictiveSummary":
        draws = np.asarray(draws, dtype=float)
        lo, med, hi = np.quantile(draws, [0.025, 0.5, 0.975], axis=0)
        return cls(np.asarray(time_index), draws.mean(axis=0), med, lo, hi, mode,
                   draws if keep_draws else None)

    def __len__(self):
        return len(self.time_index)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_index", "mean", "lower95", "upper95", "mode_flag"])
            for row in zip(self.time_index, self.mean, self.lower95, self.upper95):
                w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]] + [self.mode])


def mse(predicted_means, observed) -> float:
    p = np.asarray(predicted_means, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.shape != o.shape or p.size == 0:
        raise ValueError(f"need equal nonempty lengths, got {p.shape} and {o.shape}")
    return float(np.mean((p - o) ** 2))


# --- per-draw model pieces --------------------------------------------------

def _gompertz_draws(samples: PosteriorSamples, unit: int) -> np.ndarray:
    """(S, 4) Gompertz parameters of one curve (independent) or group."""
    fam = samples.spec.family
    if fam is Family.GNN:
        env = samples.table().env_scaled[unit]
        return np.column_stack([samples.flat("n0")[:, unit], _gnn_theta_at(samples, env)])
    return np.column_stack([samples.flat(k)[:, unit] for k in GOMPERTZ_KEYS])


def _gnn_theta_at(samples: PosteriorSamples, env_scaled) -> np.ndarray:
    b, gamma = samples.flat("b"), samples.flat("gamma")
    hidden = expit(np.einsum("r,srm->sm", np.asarray(env_scaled, float), gamma))
    return np.einsum("sm,sqm->sq", hidden, b)


def _nn_rate(beta_rows, gamma, env_scaled, prev):
    """Per-draw growth rate for output weights ``beta_rows`` (S, M) at densities ``prev`` (S,)."""
    env_part = np.einsum("r,srm->sm", np.asarray(env_scaled, float), gamma[:, 1:, :])
    act = expit(gamma[:, 0, :] * prev[:, None] + env_part) - expit(env_part)
    return np.einsum("sm,sm->s", beta_rows, act)


def _noise_sd(samples: PosteriorSamples, base):
    base = np.maximum(np.asarray(base, dtype=float), 0.0)
    return np.sqrt(samples.flat("sigma2") * base ** samples.spec.v)


def _unit_of_curve(samples: PosteriorSamples, curve: GrowthCurve) -> int:
    if samples.spec.family is Family.INDEPENDENT:
        try:
            return samples.dataset.curve_position(curve.curve_id)
        except KeyError:
            raise KeyError(f"curve {curve.curve_id!r} was not part of the independent fit") from None
    if not 0 <= curve.group_index < samples.dataset.n_groups:
        raise KeyError(f"curve {curve.curve_id!r} refers to unknown group {curve.group_index}")
    return curve.group_index


# --- fitted curves ----------------------------------------------------------

def fitted_mean_draws(samples: PosteriorSamples, group: int, n_times: int | None = None) -> np.ndarray:
    """(S, T) draws of the noise-free model curve for one group.

    Gompertz-type families give the curve directly (the independent model
    averages its member curves). For ``nn`` the mean recursion is iterated
    from the group's average observed initial density.
    """
    members = samples.dataset.curves_in_group(group)
    if n_times is None:
        n_times = max(c.n_obs for c in members)
    t = np.arange(n_times, dtype=float)
    fam = samples.spec.family
    if fam is Family.NN:
        beta = samples.flat("beta")[:, group, :]
        gamma = samples.flat("gamma")
        env = samples.table().env_scaled[group]
        out = np.empty((beta.shape[0], n_times))
        out[:, 0] = np.mean([c.initial_density for c in members])
        for s in range(1, n_times):
            prev = out[:, s - 1]
            out[:, s] = prev + prev * _nn_rate(beta, gamma, env, prev)
        return out
    if fam is Family.INDEPENDENT:
        pos = [samples.dataset.curve_position(c.curve_id) for c in members]
        curves = [gompertz_mean(t[None, :], *(p[:, None] for p in _gompertz_draws(samples, u).T))
                  for u in pos]
        return np.mean(curves, axis=0)
    p = _gompertz_draws(samples, group)
    return gompertz_mean(t[None, :], *(c[:, None] for c in p.T))


def fitted_summary(samples: PosteriorSamples, group: int) -> PredictiveSummary:
    draws = fitted_mean_draws(samples, group)
    return PredictiveSummary.from_draws(np.arange(draws.shape[1]), draws, mode="fitted")


def monitored_quantities(samples: PosteriorSamples) -> dict:
    """Fitted-curve values at a quarter, half and the end of each group's time span.

    Each value is an (n_chains, n_draws) array. These functionals do not
    depend on the labelling of hidden nodes.
    """
    out = {}
    C, S = samples.n_chains, samples.n_draws
    for j in range(samples.dataset.n_groups):
        draws = fitted_mean_draws(samples, j)
        T = draws.shape[1]
        for t in sorted({max(T // 4, 1), T // 2, T - 1}):
            out[f"fit[{j}][{t}]"] = draws[:, t].reshape(C, S)
    return out


# --- prediction -------------------------------------------------------------

def one_step_ahead(samples: PosteriorSamples, curve: GrowthCurve, seed: int = 0,
                   keep_draws: bool = False) -> PredictiveSummary:
    """Predict each observation t = 1..T-1 given the observed values up to t-1.

    The recursive model conditions on the observed previous density; the
    Gompertz-type models' predictive at t does not depend on the prefix.
    """
    if curve.n_obs < 2:
        raise ValueError("curve needs at least two observations")
    rng = np.random.default_rng(seed)
    unit = _unit_of_curve(samples, curve)
    y = np.asarray(curve.densities, dtype=float)
    T = len(y)
    S = samples.n_chains * samples.n_draws
    out = np.empty((S, T - 1))
    if samples.spec.family is Family.NN:
        beta = samples.flat("beta")[:, unit, :]
        gamma = samples.flat("gamma")
        env = samples.table().env_scaled[unit]
        for t in range(1, T):
            prev = np.full(S, y[t - 1])
            mean = prev + prev * _nn_rate(beta, gamma, env, prev)
            out[:, t - 1] = mean + _noise_sd(samples, prev) * rng.standard_normal(S)
    else:
        p = _gompertz_draws(samples, unit)
        for t in range(1, T):
            g = gompertz_mean(float(t), p[:, 0], p[:, 1], p[:, 2], p[:, 3])
            out[:, t - 1] = g + _noise_sd(samples, g) * rng.standard_normal(S)
    return PredictiveSummary.from_draws(np.arange(1, T), out, mode="one-step", keep_draws=keep_draws)


def predict_new_group(samples: PosteriorSamples, env: EnvCondition, horizon: int,
                      init_density: float | None = None, mode: str = "forecast",
                      trajectory=None, seed: int = 0, keep_draws: bool = False) -> PredictiveSummary:
    """Predict a curve under environmental conditions not used in the fit.

    GNN: the shared network is evaluated at the new inputs. NN: output
    weights for the new group are drawn from their hierarchical prior given
    each posterior draw. In ``mode="forecast"`` the NN recursion feeds on
    its own simulated values; ``mode="condition"`` instead conditions each
    step on the supplied ``trajectory`` (for example the mean of observed
    replications). Without ``init_density`` the initial density comes from
    the posterior of the mean initial density of the fitted curves.
    """
    fam = samples.spec.family
    if not fam.is_network:
        raise ValueError("model has no environmental inputs")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    rng = np.random.default_rng(seed)
    x = scale_inputs(env, samples.scaling)
    S = samples.n_chains * samples.n_draws
    t_idx = np.arange(horizon + 1)
    init_obs = [c.initial_density for c in samples.dataset.curves]

    if fam is Family.GNN:
        if init_density is None:
            n0, _ = n0_posterior(init_obs, rng, size=S)
        else:
            n0 = np.full(S, float(init_density))
        theta = _gnn_theta_at(samples, x)
        g = gompertz_mean(t_idx[None, :].astype(float), n0[:, None], theta[:, 0:1], theta[:, 1:2], theta[:, 2:3])
        sd = np.sqrt(samples.flat("sigma2")[:, None] * np.maximum(g, 0.0) ** samples.spec.v)
        draws = g + sd * rng.standard_normal(g.shape)
        return PredictiveSummary.from_draws(t_idx, draws, mode="gnn", keep_draws=keep_draws)

    beta_new = _new_group_weights(samples, rng)
    gamma = samples.flat("gamma")
    sigma2 = samples.flat("sigma2")
    v = samples.spec.v
    draws = np.empty((S, horizon + 1))
    if mode == "condition":
        if trajectory is None or len(trajectory) < horizon + 1:
            raise ValueError("condition mode needs a trajectory of length horizon + 1")
        traj = np.asarray(trajectory, dtype=float)
        draws[:, 0] = traj[0]
        for t in range(1, horizon + 1):
            prev = np.full(S, traj[t - 1])
            mean = prev + prev * _nn_rate(beta_new, gamma, x, prev)
            draws[:, t] = mean + np.sqrt(sigma2 * np.maximum(prev, 0.0) ** v) * rng.standard_normal(S)
        return PredictiveSummary.from_draws(t_idx, draws, mode="condition", keep_draws=keep_draws)
    if mode != "forecast":
        raise ValueError(f"unknown NN prediction mode {mode!r}")
    if init_density is None:
        m0, s0_sq = n0_posterior(init_obs, rng, size=S)
        draws[:, 0] = np.maximum(m0 + np.sqrt(s0_sq) * rng.standard_normal(S), 0.0)
    else:
        draws[:, 0] = float(init_density)
    for t in range(1, horizon + 1):
        prev = draws[:, t - 1]
        mean = prev + prev * _nn_rate(beta_new, gamma, x, prev)
        step = mean + np.sqrt(sigma2 * np.maximum(prev, 0.0) ** v) * rng.standard_normal(S)
        # extinction is absorbing
        draws[:, t] = np.maximum(step, 0.0)
    return PredictiveSummary.from_draws(t_idx, draws, mode="forecast", keep_draws=keep_draws)


def _new_group_weights(samples: PosteriorSamples, rng) -> np.ndarray:
    """(S, M) output weights for an unseen group, one set per posterior draw."""
    S = samples.n_chains * samples.n_draws
    m = samples.spec.m
    hyper = samples.hyper
    if samples.spec.uses_hierarchy:
        s2b = samples.flat("sigma2_beta")
        m_new = samples.flat("m0_beta") + np.sqrt(s2b / hyper.c_beta) * rng.standard_normal(S)
        return m_new[:, None] + np.sqrt(s2b)[:, None] * rng.standard_normal((S, m))
    return hyper.m_beta_fixed + hyper.sigma_beta_fixed * rng.standard_normal((S, m))


def mean_curve(curves) -> np.ndarray:
    """Pointwise mean of replications, truncated to the shortest curve."""
    n = min(c.n_obs for c in curves)
    return np.mean([np.asarray(c.densities[:n]) for c in curves], axis=0)
