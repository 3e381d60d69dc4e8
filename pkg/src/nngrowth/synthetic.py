"""Ground-truth data generation and a naive reference log-likelihood."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import EnvCondition, GrowthCurve, GrowthDataset, ScalingSpec, build_scaling, scale_inputs
from .models import ErrorModel, GnnWeights, GompertzParams, NetworkWeights, NnWeights


@dataclass(frozen=True)
class SyntheticDesign:
    """Experimental layout plus the generating truth.

    ``truth`` is a list of :class:`GompertzParams` (one per group),
    :class:`GnnWeights` or :class:`NnWeights`. ``n0_mean``/``n0_sd`` give the
    initial-density distribution used by the recursive (NN) truth.
    """

    groups: tuple
    replications: int
    n_times: int
    truth: object
    error: ErrorModel
    seed: int = 0
    time_step: float = 1.0
    n0_mean: float = 0.05
    n0_sd: float = 0.005

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if self.n_times < 2:
            raise ValueError("n_times must be >= 2")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if isinstance(self.truth, (list, tuple)):
            object.__setattr__(self, "truth", tuple(self.truth))
            if len(self.truth) != len(self.groups):
                raise ValueError("need one GompertzParams per group")
        elif isinstance(self.truth, NnWeights) and self.truth.n_groups != len(self.groups):
            raise ValueError("NN truth must have one output-weight row per group")
        elif isinstance(self.truth, GnnWeights) and len(self.truth.n0_per_group) != len(self.groups):
            raise ValueError("GNN truth must have one N0 per group")

    @property
    def truth_kind(self) -> str:
        if isinstance(self.truth, NnWeights):
            return "nn"
        if isinstance(self.truth, GnnWeights):
            return "gnn"
        return "pooled"

    def scaling(self) -> ScalingSpec:
        return build_scaling(GrowthDataset(self.groups, ()))


def _gompertz(t, n0, d, mu, lam):
    return n0 + d * np.exp(-np.exp(1.0 + mu * math.e * (lam - t) / d))


def simulate(design: SyntheticDesign) -> GrowthDataset:
    """Draw a dataset from the design's truth.

    Gompertz-type truths add Normal(0, sigma2 * g(t)**v) noise at every time
    point. The recursive truth starts each curve at Normal(n0_mean, n0_sd^2),
    adds Normal(0, sigma2 * N_prev**v) noise per step and clamps at zero,
    so a curve that reaches zero stays there.
    """
    rng = np.random.default_rng(design.seed)
    sigma2, v = design.error.sigma2, design.error.v
    t = np.arange(design.n_times, dtype=float)
    kind = design.truth_kind
    if kind != "pooled":
        scaling = design.scaling()
        env = np.array([scale_inputs(g, scaling) for g in design.groups])
    curves = []
    for j in range(len(design.groups)):
        if kind == "pooled":
            p = design.truth[j]
            mean = _gompertz(t, p.n0, p.d, p.mu, p.lam)
        elif kind == "gnn":
            w = design.truth
            d, mu, lam = w.network.b @ (1.0 / (1.0 + np.exp(-(env[j] @ w.network.gamma))))
            mean = _gompertz(t, w.n0_per_group[j], d, mu, lam)
        for r in range(design.replications):
            if kind == "nn":
                y = _simulate_nn_curve(design, env[j], j, rng)
            else:
                sd = np.sqrt(sigma2 * np.maximum(mean, 0.0) ** v)
                y = mean + sd * rng.standard_normal(design.n_times)
            curves.append(GrowthCurve(f"g{j}r{r}", j, y, design.time_step))
    labels = tuple(f"g{j}" for j in range(len(design.groups)))
    return GrowthDataset(design.groups, tuple(curves), labels)


def _simulate_nn_curve(design, env, j, rng):
    w = design.truth
    sigma2, v = design.error.sigma2, design.error.v
    y = np.empty(design.n_times)
    y[0] = max(design.n0_mean + design.n0_sd * rng.standard_normal(), 0.0)
    env_part = env @ w.gamma[1:]
    for s in range(1, design.n_times):
        prev = y[s - 1]
        act = 1 / (1 + np.exp(-(w.gamma[0] * prev + env_part))) - 1 / (1 + np.exp(-env_part))
        mean = prev + prev * float(w.beta_by_group[j] @ act)
        noise = math.sqrt(sigma2 * prev ** v) * rng.standard_normal() if prev > 0 else 0.0
        y[s] = max(mean + noise, 0.0)
    return y


# --- design files -----------------------------------------------------------

def design_from_dict(d: dict) -> SyntheticDesign:
    groups = [EnvCondition(g["temperature"], g["ph"], g["nacl"]) for g in d["groups"]]
    truth = d["truth"]
    kind = truth["family"]
    if kind == "pooled":
        tr = [GompertzParams(p["n0"], p["d"], p["mu"], p["lambda"]) for p in truth["params"]]
    elif kind == "gnn":
        tr = GnnWeights(NetworkWeights(truth["b"], truth["gamma"]), truth["n0"])
    elif kind == "nn":
        tr = NnWeights(truth["beta"], truth["gamma"])
    else:
        raise ValueError(f"unknown truth family {kind!r}")
    err = d.get("error", {})
    init = d.get("initial", {})
    return SyntheticDesign(groups, int(d["replications"]), int(d["n_times"]), tr,
                           ErrorModel(float(err.get("sigma2", 1e-4)), float(err.get("v", 0.5))),
                           int(d.get("seed", 0)), float(d.get("time_step", 1.0)),
                           float(init.get("mean", 0.05)), float(init.get("sd", 0.005)))


def design_to_dict(design: SyntheticDesign) -> dict:
    kind = design.truth_kind
    if kind == "pooled":
        truth = {"family": "pooled", "params": [
            {"n0": p.n0, "d": p.d, "mu": p.mu, "lambda": p.lam} for p in design.truth]}
    elif kind == "gnn":
        w = design.truth
        truth = {"family": "gnn", "b": w.network.b.tolist(), "gamma": w.network.gamma.tolist(),
                 "n0": list(map(float, w.n0_per_group))}
    else:
        truth = {"family": "nn", "beta": design.truth.beta_by_group.tolist(),
                 "gamma": design.truth.gamma.tolist()}
    return {
        "groups": [{"temperature": g.temperature, "ph": g.ph, "nacl": g.nacl} for g in design.groups],
        "replications": design.replications, "n_times": design.n_times,
        "time_step": design.time_step, "seed": design.seed,
        "error": {"sigma2": design.error.sigma2, "v": design.error.v},
        "initial": {"mean": design.n0_mean, "sd": design.n0_sd},
        "truth": truth,
    }


def load_design(path: str | Path) -> SyntheticDesign:
    return design_from_dict(json.loads(Path(path).read_text()))


# --- naive reference --------------------------------------------------------

def oracle_loglik(family: str, unknowns: dict, dataset: GrowthDataset, v: float = 0.5,
                  var_floor: float = 1e-8) -> float:
    """Point-by-point log-likelihood written with plain loops and the math module.

    Deliberately shares no code with the vectorized implementation; it is
    only meant as a test oracle.
    """
    family = getattr(family, "value", family)
    s2 = float(unknowns["sigma2"])
    total = 0.0
    env = None
    if family in ("gnn", "nn"):
        cols = list(zip(*[(g.temperature, g.ph, g.nacl) for g in dataset.groups]))
        lo = [min(c) for c in cols]
        hi = [max(c) for c in cols]
        env = [[0.1 + (x - a) * 0.8 / (b - a) for x, a, b in zip((g.temperature, g.ph, g.nacl), lo, hi)]
               for g in dataset.groups]

    def sig(x):
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)

    def gomp(t, n0, d, mu, lam):
        inner = 1.0 + mu * math.e * (lam - t) / d
        if inner > 700:
            return n0
        return n0 + d * math.exp(-math.exp(inner))

    def dens(y, m, base):
        w = s2 * max(base, var_floor) ** v
        return -0.5 * math.log(2 * math.pi * w) - (y - m) ** 2 / (2 * w)

    for i, curve in enumerate(dataset.curves):
        j = curve.group_index
        ys = [float(x) for x in curve.densities]
        if family == "nn":
            beta = unknowns["beta"]
            gam = unknowns["gamma"]
            m_nodes = len(gam[0])
            for t in range(1, len(ys)):
                prev = ys[t - 1]
                f = 0.0
                for k in range(m_nodes):
                    e_part = gam[1][k] * env[j][0] + gam[2][k] * env[j][1] + gam[3][k] * env[j][2]
                    f += beta[j][k] * (sig(gam[0][k] * prev + e_part) - sig(e_part))
                total += dens(ys[t], prev + prev * f, prev)
            continue
        if family == "independent":
            n0, d, mu, lam = (float(unknowns[k][i]) for k in ("n0", "d", "mu", "lambda"))
        elif family == "pooled":
            n0, d, mu, lam = (float(unknowns[k][j]) for k in ("n0", "d", "mu", "lambda"))
        else:
            b, gam = unknowns["b"], unknowns["gamma"]
            theta = []
            for s in range(3):
                acc = 0.0
                for k in range(len(gam[0])):
                    acc += b[s][k] * sig(sum(env[j][r] * gam[r][k] for r in range(3)))
                theta.append(acc)
            n0 = float(unknowns["n0"][j])
            d, mu, lam = theta
        for t, y in enumerate(ys):
            m = gomp(float(t), n0, d, mu, lam)
            total += dens(y, m, m)
    return total
