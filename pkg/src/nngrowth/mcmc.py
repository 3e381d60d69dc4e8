"""Adaptive random-walk Metropolis-within-Gibbs samplers for the four model families.

Each chain sweeps, per iteration:

1. Gaussian random-walk Metropolis blocks. Gompertz parameters form one
   4-dimensional block per curve (independent) or per group (pooled); these
   units are conditionally independent given sigma2 and are updated in one
   vectorized step with separate accept/reject decisions. Network weights
   are blocked by hidden node. For the NN family the node block moves
   ``gamma[:, k]`` with the output weights integrated out analytically, and
   the output weights are then drawn exactly from their Gaussian
   conditional, which makes the node move joint in (gamma_k, beta).
2. Conjugate draws for sigma2 and, in hierarchical mode, the weight
   hyperparameters.

Proposal covariances are adapted during burn-in only: a per-unit scale is
tuned towards ``target_accept`` every ``adapt_window`` iterations and the
shape is learned from the burn-in history. Both are frozen afterwards.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import priors
from .data import DataError, GrowthDataset, ObservationTable, ScalingSpec, build_scaling, validate_dataset
from .models import (GOMPERTZ_KEYS, Family, ModelSpec, gaussian_logpdf, gnn_theta,
                     gompertz_mean, network_hidden, nn_design)
from .priors import HierarchyState, HyperParams

MAX_INIT_TRIES = 100
# random input-weight draws screened per network initialization
INIT_CANDIDATES = 200


class InitializationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 200_000
    burn_in: int = 100_000
    thin: int = 1000
    n_chains: int = 2
    seed: int = 0
    target_accept: float = 0.35
    adapt_window: int = 50

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_keep < 10:
            raise ValueError("(iterations - burn_in) / thin must be >= 10")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @property
    def n_keep(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PosteriorSamples:
    """Thinned post-burn-in draws.

    ``draws[name]`` has shape (n_chains, n_draws, *param_shape).
    """

    spec: ModelSpec
    config: ChainConfig
    dataset: GrowthDataset
    scaling: ScalingSpec | None
    draws: dict
    acceptance: dict = field(default_factory=dict)
    proposal_state: dict = field(default_factory=dict)
    hyper: HyperParams = field(default_factory=HyperParams)

    @property
    def n_chains(self) -> int:
        return next(iter(self.draws.values())).shape[0]

    @property
    def n_draws(self) -> int:
        return next(iter(self.draws.values())).shape[1]

    def draw(self, chain: int, index: int) -> dict:
        return {k: v[chain, index] for k, v in self.draws.items()}

    def flat(self, key: str) -> np.ndarray:
        v = self.draws[key]
        return v.reshape((-1,) + v.shape[2:])

    def iter_draws(self):
        """Yield every retained draw, chain by chain."""
        for c in range(self.n_chains):
            for s in range(self.n_draws):
                yield self.draw(c, s)

    def table(self) -> ObservationTable:
        return ObservationTable.from_dataset(self.dataset, self.scaling)


# --- adaptive proposals -----------------------------------------------------

class AdaptiveProposal:
    """Gaussian random-walk proposals for ``units`` independent copies of a block."""

    def __init__(self, units: int, dim: int, init_sd, target: float, window: int,
                 burn_in: int):
        self.units, self.dim = units, dim
        self.target, self.window = target, window
        sd = np.broadcast_to(np.asarray(init_sd, float), (units, dim))
        self.chol = np.zeros((units, dim, dim))
        idx = np.arange(dim)
        self.chol[:, idx, idx] = sd
        self.log_scale = np.zeros(units)
        self.window_accepts = np.zeros(units)
        self.n_windows = 0
        self.total_accepts = np.zeros(units)
        self.total_tried = 0
        self.cov_start = burn_in // 10
        self.cov_restart = burn_in // 2
        self.min_cov_count = max(20, 10 * dim)
        self._reset_moments()
        self.learned = False

    def _reset_moments(self):
        self.count = 0
        self.mean = np.zeros((self.units, self.dim))
        self.m2 = np.zeros((self.units, self.dim, self.dim))

    def propose(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((self.units, self.dim))
        step = np.einsum("uij,uj->ui", self.chol, z)
        return x + np.exp(self.log_scale)[:, None] * step

    def update(self, accepted: np.ndarray, x: np.ndarray, iteration: int, adapting: bool):
        """Record one step's outcome; adapt when still in burn-in."""
        if not adapting:
            self.total_accepts += accepted
            self.total_tried += 1
            return
        self.window_accepts += accepted
        if iteration == self.cov_restart and self.count >= self.min_cov_count:
            self._reset_moments()
        if iteration >= self.cov_start:
            self.count += 1
            delta = x - self.mean
            self.mean += delta / self.count
            self.m2 += np.einsum("ui,uj->uij", delta, x - self.mean)
        if (iteration + 1) % self.window == 0:
            rate = self.window_accepts / self.window
            step = 1.0 / math.sqrt(1.0 + self.n_windows / 10.0)
            self.log_scale += step * (rate - self.target)
            np.clip(self.log_scale, -30.0, 10.0, out=self.log_scale)
            self.window_accepts[:] = 0
            self.n_windows += 1
            if self.count >= self.min_cov_count:
                self._refresh_shape()

    def _refresh_shape(self):
        cov = self.m2 / (self.count - 1) * (2.38 ** 2 / self.dim)
        jitter = 1e-10 * (np.trace(cov, axis1=1, axis2=2)[:, None, None] / self.dim + 1e-12)
        cov = cov + jitter * np.eye(self.dim)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            return
        if not self.learned:
            self.log_scale[:] = 0.0
            self.learned = True
        self.chol = chol

    def snapshot(self) -> dict:
        return {"log_scale": self.log_scale.copy(), "chol": self.chol.copy()}

    def acceptance_rate(self) -> np.ndarray:
        if self.total_tried == 0:
            return np.full(self.units, np.nan)
        return self.total_accepts / self.total_tried


def _mh_accept(lp_new, lp_old, rng):
    lp_new = np.where(np.isfinite(lp_new), lp_new, -np.inf)
    u = rng.random(np.shape(lp_new))
    with np.errstate(invalid="ignore"):
        return np.log(u) < lp_new - lp_old


# --- family kernels ---------------------------------------------------------

class _Kernel:
    """Shared scaffolding: a kernel owns the data view and proposal objects."""

    def __init__(self, spec: ModelSpec, table: ObservationTable, hyper: HyperParams,
                 config: ChainConfig):
        self.spec, self.table, self.hyper, self.config = spec, table, hyper, config
        self.proposals: dict[str, AdaptiveProposal] = {}

    def _proposal(self, name, units, dim, init_sd):
        self.proposals[name] = AdaptiveProposal(units, dim, init_sd, self.config.target_accept,
                                                self.config.adapt_window, self.config.burn_in)

    def weighted_ss(self, resid, base):
        return float(np.sum(resid ** 2 / np.maximum(base, self.spec.var_floor) ** self.spec.v))


def _unit_heuristics(table: ObservationTable, unit_of_obs: np.ndarray, n_units: int) -> np.ndarray:
    """Rough (n0, D, mu, lambda) per unit from its mean observed curve."""
    out = np.zeros((n_units, 4))
    t = table.time.astype(int)
    for u in range(n_units):
        sel = unit_of_obs == u
        if not np.any(sel):
            out[u] = (0.0, 1.0, 0.1, 1.0)
            continue
        tt, yy = t[sel], table.y[sel]
        n_t = tt.max() + 1
        curve = np.bincount(tt, weights=yy, minlength=n_t) / np.maximum(np.bincount(tt, minlength=n_t), 1)
        n0 = curve[0]
        d = curve.max() - n0
        if abs(d) < 1e-6:
            d = 1e-3
        if len(curve) > 1:
            diffs = np.diff(curve)
            k = int(np.argmax(diffs))
            mu = max(diffs[k], 1e-3 * abs(d))
            # tangent at the steepest step meets the baseline at the lag
            lam = (k + 0.5) - (0.5 * (curve[k] + curve[k + 1]) - n0) / mu
        else:
            mu, lam = 0.1 * abs(d), 0.0
        out[u] = (n0, d, mu, lam)
    return out


class GompertzKernel(_Kernel):
    def __init__(self, spec, table, hyper, config):
        super().__init__(spec, table, hyper, config)
        independent = spec.family is Family.INDEPENDENT
        self.unit = table.curve if independent else table.group
        self.n_units = table.n_curves if independent else table.n_groups
        self.heur = _unit_heuristics(table, self.unit, self.n_units)
        scale = np.abs(self.heur) * 0.02 + 0.01 * (np.abs(self.heur[:, 1:2]) + 0.01)
        self._proposal("gompertz", self.n_units, 4, scale)

    def init_state(self, rng):
        h = self.heur
        theta = h.copy()
        theta[:, 0] += 0.02 * np.abs(h[:, 1]) * rng.standard_normal(self.n_units)
        theta[:, 1] *= np.exp(0.05 * rng.standard_normal(self.n_units))
        theta[:, 2] *= np.exp(0.1 * rng.standard_normal(self.n_units))
        theta[:, 3] += 0.3 * rng.standard_normal(self.n_units)
        mean = self._mean(theta)
        sigma2 = max(self.weighted_ss(self.table.y - mean, mean) / max(len(mean), 1), 1e-10)
        return {"theta": theta, "sigma2": sigma2}

    def _mean(self, theta):
        p = theta[self.unit]
        return gompertz_mean(self.table.time, p[:, 0], p[:, 1], p[:, 2], p[:, 3])

    def unit_logpost(self, theta, sigma2):
        mean = self._mean(theta)
        var = sigma2 * np.maximum(mean, self.spec.var_floor) ** self.spec.v
        with np.errstate(all="ignore"):
            ll = gaussian_logpdf(self.table.y, mean, var)
        ll = np.bincount(self.unit, weights=ll, minlength=self.n_units)
        lp = -0.5 * (theta ** 2).sum(axis=1) / self.hyper.gompertz_prior_var
        out = ll + lp
        return np.where(np.isfinite(out), out, -np.inf)

    def log_post(self, state):
        return float(self.unit_logpost(state["theta"], state["sigma2"]).sum())

    def sweep(self, state, rng, it, adapting):
        prop = self.proposals["gompertz"]
        theta, sigma2 = state["theta"], state["sigma2"]
        lp_old = self.unit_logpost(theta, sigma2)
        cand = prop.propose(theta, rng)
        lp_new = self.unit_logpost(cand, sigma2)
        acc = _mh_accept(lp_new, lp_old, rng)
        theta = np.where(acc[:, None], cand, theta)
        prop.update(acc, theta, it, adapting)
        mean = self._mean(theta)
        ss = self.weighted_ss(self.table.y - mean, mean)
        sigma2 = priors.gibbs_update_sigma2(ss, len(mean), self.hyper, rng)
        return {"theta": theta, "sigma2": sigma2}

    def export(self, state):
        out = {k: state["theta"][:, i].copy() for i, k in enumerate(GOMPERTZ_KEYS)}
        out["sigma2"] = np.float64(state["sigma2"])
        return out


def _random_input_weights(rng, p, m):
    """Random input weights on a log-uniform scale between 0.5 and 20."""
    scale = np.exp(rng.uniform(math.log(0.5), math.log(20.0)))
    return scale * rng.standard_normal((p, m))


def _finite_or_ninf(x):
    return x if np.isfinite(x) else -np.inf


def _hierarchy_init(spec, hyper, n_rows, n_inputs):
    if spec.uses_hierarchy:
        return HierarchyState.prior_means(hyper, n_rows, n_inputs)
    return HierarchyState.fixed(hyper, n_rows, n_inputs)


class GnnKernel(_Kernel):
    def __init__(self, spec, table, hyper, config):
        super().__init__(spec, table, hyper, config)
        self.m = spec.m
        self.env = table.env_scaled
        self.J = table.n_groups
        self.heur = _unit_heuristics(table, table.group, self.J)
        for k in range(self.m):
            self._proposal(f"node{k}", 1, 6, 0.05)
        if self.m > 1:
            self._proposal("weights", 1, 6 * self.m, 0.02)
        self._proposal("n0", self.J, 1, 0.01 * (np.abs(self.heur[:, 1:2]) + 0.01))

    def _theta(self, b, gamma):
        return gnn_theta(self.env, b, gamma)

    def _candidate(self, gamma, rng):
        H = network_hidden(self.env, gamma)
        # output weights placed by ridge regression onto heuristic (D, mu, lambda)
        b = np.linalg.solve(H.T @ H + 1e-3 * np.eye(self.m), H.T @ self.heur[:, 1:]).T
        b += 0.01 * rng.standard_normal(b.shape)
        n0 = self.heur[:, 0] + 0.01 * np.abs(self.heur[:, 1]) * rng.standard_normal(self.J)
        hier = _hierarchy_init(self.spec, self.hyper, 3, 3)
        state = {"b": b, "gamma": gamma, "n0": n0, "hier": hier}
        mean = self._mean(state)
        state["sigma2"] = max(self.weighted_ss(self.table.y - mean, mean) / max(len(mean), 1), 1e-10)
        return state

    def init_state(self, rng):
        cands = [self._candidate(_random_input_weights(rng, 3, self.m), rng) for _ in range(INIT_CANDIDATES)]
        return max(cands, key=lambda st: _finite_or_ninf(self.log_post(st)))

    def _mean_from(self, n0, theta):
        g = self.table.group
        return gompertz_mean(self.table.time, n0[g], theta[g, 0], theta[g, 1], theta[g, 2])

    def _mean(self, state):
        return self._mean_from(state["n0"], self._theta(state["b"], state["gamma"]))

    def _pointwise(self, mean, sigma2):
        var = sigma2 * np.maximum(mean, self.spec.var_floor) ** self.spec.v
        with np.errstate(all="ignore"):
            return gaussian_logpdf(self.table.y, mean, var)

    def _loglik(self, state):
        ll = self._pointwise(self._mean(state), state["sigma2"]).sum()
        return ll if np.isfinite(ll) else -np.inf

    def _n0_prior(self, n0):
        return -0.5 * n0 ** 2 / self.hyper.n0_prior_var

    def log_post(self, state):
        return (self._loglik(state) + self._n0_prior(state["n0"]).sum()
                + priors.log_prior_weights(state["b"], state["gamma"], state["hier"]))

    def _node_prior(self, bk, gk, hier):
        return (priors.normal_logpdf(bk, hier.m_i_beta, hier.sigma2_beta).sum()
                + priors.normal_logpdf(gk, hier.m_gamma, hier.sigma2_gamma).sum())

    def sweep(self, state, rng, it, adapting):
        state = dict(state)
        hier = state["hier"]
        ll_old = self._loglik(state)
        for k in range(self.m):
            prop = self.proposals[f"node{k}"]
            b, gamma = state["b"], state["gamma"]
            x = np.concatenate([b[:, k], gamma[:, k]])[None, :]
            cand = prop.propose(x, rng)[0]
            b_new, g_new = b.copy(), gamma.copy()
            b_new[:, k], g_new[:, k] = cand[:3], cand[3:]
            trial = dict(state, b=b_new, gamma=g_new)
            ll_new = self._loglik(trial)
            lp_new = ll_new + self._node_prior(cand[:3], cand[3:], hier)
            lp_old = ll_old + self._node_prior(x[0, :3], x[0, 3:], hier)
            acc = _mh_accept(np.array([lp_new]), np.array([lp_old]), rng)
            if acc[0]:
                state, ll_old = trial, ll_new
                x = cand[None, :]
            prop.update(acc.astype(float), x, it, adapting)
        if self.m > 1:
            state, ll_old = self._joint_move(state, ll_old, rng, it, adapting)

        theta = self._theta(state["b"], state["gamma"])
        g = self.table.group

        def group_lp(n0):
            ll = self._pointwise(self._mean_from(n0, theta), state["sigma2"])
            out = np.bincount(g, weights=ll, minlength=self.J) + self._n0_prior(n0)
            return np.where(np.isfinite(out), out, -np.inf)

        prop = self.proposals["n0"]
        n0 = state["n0"]
        cand = prop.propose(n0[:, None], rng)[:, 0]
        acc = _mh_accept(group_lp(cand), group_lp(n0), rng)
        n0 = np.where(acc, cand, n0)
        prop.update(acc.astype(float), n0[:, None], it, adapting)
        state["n0"] = n0

        mean = self._mean_from(n0, theta)
        ss = self.weighted_ss(self.table.y - mean, mean)
        state["sigma2"] = priors.gibbs_update_sigma2(ss, len(mean), self.hyper, rng)
        hier.sigma2 = state["sigma2"]
        if self.spec.uses_hierarchy:
            state["hier"] = priors.gibbs_update_hierarchy((state["b"], state["gamma"]), hier,
                                                          self.hyper, rng)
        return state

    def _joint_move(self, state, ll_old, rng, it, adapting):
        """All network weights at once, so moves along directions that couple nodes are possible."""
        hier = state["hier"]
        prop = self.proposals["weights"]
        x = np.concatenate([state["b"].ravel(), state["gamma"].ravel()])[None, :]
        cand = prop.propose(x, rng)[0]
        b_new, g_new = cand[: 3 * self.m].reshape(3, self.m), cand[3 * self.m:].reshape(3, self.m)
        trial = dict(state, b=b_new, gamma=g_new)
        ll_new = self._loglik(trial)
        lp_new = ll_new + priors.log_prior_weights(b_new, g_new, hier)
        lp_old = ll_old + priors.log_prior_weights(state["b"], state["gamma"], hier)
        acc = _mh_accept(np.array([lp_new]), np.array([lp_old]), rng)
        if acc[0]:
            state, ll_old, x = trial, ll_new, cand[None, :]
        prop.update(acc.astype(float), x, it, adapting)
        return state, ll_old

    def export(self, state):
        out = {"b": state["b"].copy(), "gamma": state["gamma"].copy(), "n0": state["n0"].copy(),
               "sigma2": np.float64(state["sigma2"])}
        if self.spec.uses_hierarchy:
            out.update(state["hier"].to_unknowns())
        return out


class NnKernel(_Kernel):
    """Input weights by random walk with output weights marginalized, then exact output-weight draws."""

    def __init__(self, spec, table, hyper, config):
        super().__init__(spec, table, hyper, config)
        self.m = spec.m
        self.J = table.n_groups
        idx = table.trans_index
        self.prev = table.prev[idx]
        self.dy = table.y[idx] - self.prev
        self.g = table.group[idx]
        self.env_rows = table.env_scaled[self.g]
        self.base = np.maximum(self.prev, spec.var_floor) ** spec.v
        self.onehot = (self.g[None, :] == np.arange(self.J)[:, None]).astype(float)
        self.n = len(idx)
        for k in range(self.m):
            self._proposal(f"node{k}", 1, 4, 0.1)
        if self.m > 1:
            self._proposal("weights", 1, 4 * self.m, 0.05)

    def design(self, gamma):
        return nn_design(self.prev, self.env_rows, gamma)

    def _conditional(self, gamma, sigma2, hier):
        """Gaussian conditional of output weights and the log marginal likelihood."""
        X = self.design(gamma)
        m = self.m
        winv = 1.0 / (sigma2 * self.base)
        r = self.dy - X.sum(axis=1) * hier.m_i_beta[self.g]
        Xw = X * winv[:, None]
        gram = (self.onehot @ (Xw[:, :, None] * X[:, None, :]).reshape(self.n, m * m)).reshape(self.J, m, m)
        prec = gram + np.eye(m) / hier.sigma2_beta
        rhs = self.onehot @ (Xw * r[:, None])
        rwr = self.onehot @ (r * r * winv)
        try:
            chol = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError:
            return -np.inf, None
        mean_off = np.linalg.solve(prec, rhs[:, :, None])[:, :, 0]
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum()
        logml = (-0.5 * (rwr.sum() - np.einsum("jm,jm->", rhs, mean_off)) - 0.5 * logdet
                 - 0.5 * self.J * m * math.log(hier.sigma2_beta)
                 - 0.5 * np.sum(np.log(2 * math.pi / winv)))
        if not np.isfinite(logml):
            return -np.inf, None
        return float(logml), (chol, mean_off)

    def _draw_beta(self, cond, hier, rng):
        chol, mean_off = cond
        z = rng.standard_normal((self.J, self.m, 1))
        noise = np.linalg.solve(np.swapaxes(chol, 1, 2), z)[:, :, 0]
        return hier.m_i_beta[:, None] + mean_off + noise

    def _gamma_prior(self, gk, hier):
        mean = hier.m_gamma if gk.ndim == 1 else hier.m_gamma[:, None]
        return priors.normal_logpdf(gk, mean, hier.sigma2_gamma).sum()

    def init_state(self, rng):
        hier = _hierarchy_init(self.spec, self.hyper, self.J, 4)
        # start sigma2 from one-step increments so the first output-weight draw is sensible
        sigma2 = max(float(np.mean(self.dy ** 2 / self.base)) if self.n else 1.0, 1e-10)
        best = (-np.inf, None, None)
        for _ in range(INIT_CANDIDATES):
            gamma = _random_input_weights(rng, 4, self.m)
            logml, cond = self._conditional(gamma, sigma2, hier)
            # screened on fit alone; the hierarchy is still at its starting values
            score = logml
            if score > best[0] or best[1] is None:
                best = (score, gamma, cond)
        _, gamma, cond = best
        if cond is None:
            return {"gamma": gamma, "beta": np.full((self.J, self.m), np.nan), "sigma2": sigma2, "hier": hier}
        beta = self._draw_beta(cond, hier, rng)
        return {"gamma": gamma, "beta": beta, "sigma2": sigma2, "hier": hier}

    def _loglik(self, state):
        X = self.design(state["gamma"])
        mean = np.einsum("nm,nm->n", X, state["beta"][self.g])
        var = state["sigma2"] * self.base
        ll = gaussian_logpdf(self.dy, mean, var).sum()
        return ll if np.isfinite(ll) else -np.inf

    def log_post(self, state):
        return self._loglik(state) + priors.log_prior_weights(state["beta"], state["gamma"], state["hier"])

    def sweep(self, state, rng, it, adapting):
        state = dict(state)
        hier = state["hier"]
        gamma = state["gamma"]
        logml, cond = self._conditional(gamma, state["sigma2"], hier)
        for k in range(self.m):
            prop = self.proposals[f"node{k}"]
            x = gamma[:, k][None, :]
            cand = prop.propose(x, rng)[0]
            g_new = gamma.copy()
            g_new[:, k] = cand
            logml_new, cond_new = self._conditional(g_new, state["sigma2"], hier)
            lp_new = logml_new + self._gamma_prior(cand, hier)
            lp_old = logml + self._gamma_prior(x[0], hier)
            acc = _mh_accept(np.array([lp_new]), np.array([lp_old]), rng)
            if acc[0]:
                gamma, logml, cond = g_new, logml_new, cond_new
                x = cand[None, :]
            prop.update(acc.astype(float), x, it, adapting)
        if self.m > 1:
            # joint move of every input weight, output weights still integrated out
            prop = self.proposals["weights"]
            x = gamma.ravel()[None, :]
            cand = prop.propose(x, rng)[0]
            g_new = cand.reshape(gamma.shape)
            logml_new, cond_new = self._conditional(g_new, state["sigma2"], hier)
            lp_new = logml_new + self._gamma_prior(g_new, hier)
            lp_old = logml + self._gamma_prior(gamma, hier)
            acc = _mh_accept(np.array([lp_new]), np.array([lp_old]), rng)
            if acc[0]:
                gamma, logml, cond = g_new, logml_new, cond_new
                x = cand[None, :]
            prop.update(acc.astype(float), x, it, adapting)
        beta = self._draw_beta(cond, hier, rng)
        X = self.design(gamma)
        resid = self.dy - np.einsum("nm,nm->n", X, beta[self.g])
        sigma2 = priors.gibbs_update_sigma2(float(np.sum(resid ** 2 / self.base)), self.n,
                                            self.hyper, rng)
        hier.sigma2 = sigma2
        if self.spec.uses_hierarchy:
            hier = priors.gibbs_update_hierarchy((beta, gamma), hier, self.hyper, rng)
        return {"gamma": gamma, "beta": beta, "sigma2": sigma2, "hier": hier}

    def export(self, state):
        out = {"beta": state["beta"].copy(), "gamma": state["gamma"].copy(),
               "sigma2": np.float64(state["sigma2"])}
        if self.spec.uses_hierarchy:
            out.update(state["hier"].to_unknowns())
        return out


KERNELS = {Family.INDEPENDENT: GompertzKernel, Family.POOLED: GompertzKernel,
           Family.GNN: GnnKernel, Family.NN: NnKernel}


def make_kernel(spec, table, hyper, config) -> _Kernel:
    return KERNELS[spec.family](spec, table, hyper, config)


def _run_chain(spec, table, hyper, config, seed_seq):
    rng = np.random.default_rng(seed_seq)
    kernel = make_kernel(spec, table, hyper, config)
    for _ in range(MAX_INIT_TRIES):
        state = kernel.init_state(rng)
        lp = kernel.log_post(state)
        if np.isfinite(lp):
            break
    else:
        raise InitializationError("initialization failed: non-finite log-posterior after "
                                  f"{MAX_INIT_TRIES} attempts")
    kept = []
    snap_burn = None
    for it in range(config.iterations):
        adapting = it < config.burn_in
        if it == config.burn_in:
            snap_burn = {k: p.snapshot() for k, p in kernel.proposals.items()}
        state = kernel.sweep(state, rng, it, adapting)
        done = it - config.burn_in + 1
        if done > 0 and done % config.thin == 0 and len(kept) < config.n_keep:
            kept.append(kernel.export(state))
    if snap_burn is None:
        snap_burn = {k: p.snapshot() for k, p in kernel.proposals.items()}
    snap_final = {k: p.snapshot() for k, p in kernel.proposals.items()}
    draws = {k: np.stack([d[k] for d in kept]) for k in kept[0]}
    accept = {k: p.acceptance_rate() for k, p in kernel.proposals.items()}
    return draws, accept, {"burn_in": snap_burn, "final": snap_final}


def run_chains(spec: ModelSpec, dataset: GrowthDataset, hyper: HyperParams | None = None,
               config: ChainConfig | None = None, scaling: ScalingSpec | None = None) -> PosteriorSamples:
    """Run ``config.n_chains`` independent chains and collect thinned draws.

    Chain ``c`` uses the ``c``-th child of ``SeedSequence(config.seed)``,
    so results depend only on the arguments.
    """
    problems = validate_dataset(dataset)
    if problems:
        raise DataError("invalid dataset: " + "; ".join(problems))
    hyper = hyper or HyperParams()
    config = config or ChainConfig()
    if spec.family.is_network:
        scaling = scaling or build_scaling(dataset)
    else:
        scaling = None
    table = ObservationTable.from_dataset(dataset, scaling)
    children = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    results = [_run_chain(spec, table, hyper, config, ss) for ss in children]
    draws = {k: np.stack([r[0][k] for r in results]) for k in results[0][0]}
    accept = {k: np.stack([r[1][k] for r in results]) for k in results[0][1]}
    snaps = [r[2] for r in results]
    return PosteriorSamples(spec, config, dataset, scaling, draws, accept, {"per_chain": snaps}, hyper)
