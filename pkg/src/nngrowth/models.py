"""Growth models: Gompertz curves, feedforward networks and the observation model.

Four model families share one observation model. Each observation is
Gaussian around the model mean with variance ``sigma2 * base**v``:

* ``independent`` -- one Gompertz curve per replication.
* ``pooled`` -- one Gompertz curve per group.
* ``gnn`` -- per-group Gompertz curves whose (D, mu, lambda) come from a
  network shared by all groups, evaluated at the scaled environment.
* ``nn`` -- a network gives the per-capita growth rate of a one-step
  recursion, with group-specific output weights.

For the Gompertz-type families the variance base is the curve value at the
current time; for ``nn`` it is the previously observed density. In the
likelihood the base is floored at ``var_floor`` so that negative or zero
means do not produce an undefined variance.

Unknowns are passed around as plain dicts of numpy arrays, keyed as in
:data:`PARAM_KEYS`. Time is the observation index (0, 1, 2, ...).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import GrowthDataset, ObservationTable, ScalingSpec, build_scaling

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_V = 0.5
DEFAULT_VAR_FLOOR = 1e-8


class Family(str, enum.Enum):
    INDEPENDENT = "independent"
    POOLED = "pooled"
    GNN = "gnn"
    NN = "nn"

    @property
    def is_network(self) -> bool:
        return self in (Family.GNN, Family.NN)


GOMPERTZ_KEYS = ("n0", "d", "mu", "lambda")
HIERARCHY_KEYS = ("m_beta", "m0_beta", "sigma2_beta", "m_gamma", "sigma2_gamma")
PARAM_KEYS = {
    Family.INDEPENDENT: GOMPERTZ_KEYS + ("sigma2",),
    Family.POOLED: GOMPERTZ_KEYS + ("sigma2",),
    Family.GNN: ("b", "gamma", "n0", "sigma2"),
    Family.NN: ("beta", "gamma", "sigma2"),
}


@dataclass(frozen=True)
class ModelSpec:
    """Which model to fit.

    ``hierarchical`` toggles the full weight hierarchy; when ``None`` the
    family default is used (fixed hyperparameters for GNN, full hierarchy
    for NN). It has no effect on the Gompertz benchmarks.
    """

    family: Family
    m: int | None = None
    hierarchical: bool | None = None
    v: float = DEFAULT_V
    var_floor: float = DEFAULT_VAR_FLOOR

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if fam.is_network:
            if self.m is None or int(self.m) < 1:
                raise ValueError(f"{fam.value} model needs a node count m >= 1")
            object.__setattr__(self, "m", int(self.m))
        elif self.m is not None:
            raise ValueError(f"{fam.value} model takes no node count")
        if self.hierarchical is None:
            object.__setattr__(self, "hierarchical", fam is Family.NN)

    @property
    def uses_hierarchy(self) -> bool:
        return self.family.is_network and bool(self.hierarchical)

    def label(self) -> str:
        names = {Family.INDEPENDENT: "Independent Gompertz", Family.POOLED: "Pooled Gompertz",
                 Family.GNN: "Gompertz & NN", Family.NN: "Neural Networks"}
        s = names[self.family]
        return f"{s} (M={self.m})" if self.m is not None else s

    def to_dict(self) -> dict:
        return {"family": self.family.value, "m": self.m, "hierarchical": self.hierarchical,
                "v": self.v, "var_floor": self.var_floor}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(Family(d["family"]), d.get("m"), d.get("hierarchical"),
                   d.get("v", DEFAULT_V), d.get("var_floor", DEFAULT_VAR_FLOOR))


@dataclass(frozen=True)
class GompertzParams:
    n0: float
    d: float
    mu: float
    lam: float


@dataclass(frozen=True)
class NetworkWeights:
    """Single-hidden-layer network without intercept.

    ``b`` is (q, M) output weights and ``gamma`` is (p, M) input weights.
    """

    b: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        g = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if b.shape[1] != g.shape[1]:
            raise ValueError(f"node count mismatch: b is {b.shape}, gamma is {g.shape}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(g))):
            raise ValueError("network weights must be finite")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "gamma", g)

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.gamma.shape[0]

    @property
    def q(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class GnnWeights:
    """Network mapping scaled (T, pH, NaCl) to (D, mu, lambda), plus per-group N0."""

    network: NetworkWeights
    n0_per_group: np.ndarray

    def __post_init__(self):
        if self.network.q != 3 or self.network.p != 3:
            raise ValueError("GNN network must have 3 inputs and 3 outputs")
        object.__setattr__(self, "n0_per_group", np.asarray(self.n0_per_group, dtype=float))


@dataclass(frozen=True)
class NnWeights:
    """Group-indexed output weights (J, M) and input weights (4, M).

    Input rows are ordered (previous density, T, pH, NaCl).
    """

    beta_by_group: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta_by_group, dtype=float))
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if gamma.shape[0] != 4 or gamma.shape[1] != beta.shape[1]:
            raise ValueError(f"inconsistent NN weights: beta {beta.shape}, gamma {gamma.shape}")
        object.__setattr__(self, "beta_by_group", beta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def n_groups(self) -> int:
        return self.beta_by_group.shape[0]


@dataclass(frozen=True)
class ErrorModel:
    sigma2: float
    v: float = DEFAULT_V

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")


# --- primitives -------------------------------------------------------------

def logistic(x):
    """exp(x) / (1 + exp(x)) without overflow, for scalars or arrays."""
    out = expit(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def nn_forward(x, w: NetworkWeights) -> np.ndarray:
    """Network outputs ``B @ logistic(x' Gamma)`` for one input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (w.p,):
        raise ValueError(f"input has shape {x.shape}, network expects ({w.p},)")
    return w.b @ logistic(x @ w.gamma)


def gompertz_eval(t, params: GompertzParams):
    """Reparameterized Gompertz curve N0 + D exp(-exp(1 + mu e (lambda - t) / D))."""
    if params.d == 0:
        raise ValueError("degenerate span: D == 0")
    return gompertz_mean(t, params.n0, params.d, params.mu, params.lam)


def gompertz_mean(t, n0, d, mu, lam):
    """Vectorized Gompertz curve; silently returns N0 when the inner term overflows."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        inner = 1.0 + mu * math.e * (lam - t) / d
        return n0 + d * np.exp(-np.exp(inner))


def gnn_growth_params(env_scaled, w: GnnWeights) -> tuple[float, float, float]:
    """(D, mu, lambda) produced by the shared network at one scaled environment."""
    d, mu, lam = nn_forward(env_scaled, w.network)
    return float(d), float(mu), float(lam)


def nn_growth_rate(prev_density: float, env_scaled, group: int, w: NnWeights) -> float:
    """Per-capita growth rate f_j; exactly zero when ``prev_density`` is zero."""
    if not 0 <= group < w.n_groups:
        raise IndexError(f"group {group} out of range for {w.n_groups} groups")
    env = np.asarray(env_scaled, dtype=float)
    base = env @ w.gamma[1:]
    act = logistic(w.gamma[0] * prev_density + base) - logistic(base)
    return float(w.beta_by_group[group] @ act)


def nn_step_mean(prev_density: float, env_scaled, group: int, w: NnWeights) -> float:
    return prev_density + prev_density * nn_growth_rate(prev_density, env_scaled, group, w)


def step_variance(base, err: ErrorModel):
    """sigma2 * base**v, with negative bases treated as zero."""
    base = np.maximum(np.asarray(base, dtype=float), 0.0)
    out = err.sigma2 * base ** err.v
    return out if out.ndim else float(out)


def gaussian_logpdf(y, mean, var):
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (y - mean) ** 2 / var


# --- vectorized observation model ------------------------------------------

def network_hidden(env_scaled: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """(J, M) node activations for a (J, 3) block of scaled inputs."""
    return expit(env_scaled @ gamma)


def gnn_theta(env_scaled: np.ndarray, b: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """(J, 3) matrix of (D, mu, lambda) for every group."""
    return network_hidden(env_scaled, gamma) @ b.T


def nn_design(prev: np.ndarray, env_rows: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Per-observation regressors ``prev * (psi(.) - psi(env part))``, shape (n, M).

    The NN mean is ``prev + design @ beta[group]``.
    """
    base = env_rows @ gamma[1:]
    act = expit(prev[:, None] * gamma[0] + base) - expit(base)
    return prev[:, None] * act


def gompertz_unit_params(unknowns: dict, table: ObservationTable, family: Family) -> np.ndarray:
    """(n_units, 4) columns (n0, D, mu, lambda) for the Gompertz families."""
    if family is Family.GNN:
        theta = gnn_theta(table.env_scaled, unknowns["b"], unknowns["gamma"])
        return np.column_stack([np.asarray(unknowns["n0"], float), theta])
    return np.column_stack([np.asarray(unknowns[k], float) for k in GOMPERTZ_KEYS])


def observation_moments(spec: ModelSpec, unknowns: dict, table: ObservationTable):
    """Model mean, likelihood variance and observed values for every modelled point.

    Returns ``(y, mean, var, index)`` where ``index`` selects the modelled
    observations from the table (all of them for the Gompertz-type
    families, the transitions t >= 1 for ``nn``).
    """
    sigma2 = float(unknowns["sigma2"])
    fam = spec.family
    if fam is Family.NN:
        idx = table.trans_index
        prev = table.prev[idx]
        g = table.group[idx]
        X = nn_design(prev, table.env_scaled[g], np.asarray(unknowns["gamma"], float))
        beta = np.asarray(unknowns["beta"], float)
        mean = prev + np.einsum("nm,nm->n", X, beta[g])
        base = prev
    else:
        idx = np.arange(len(table.y))
        theta = gompertz_unit_params(unknowns, table, fam)
        unit = table.curve if fam is Family.INDEPENDENT else table.group
        p = theta[unit]
        mean = gompertz_mean(table.time, p[:, 0], p[:, 1], p[:, 2], p[:, 3])
        base = mean
    var = sigma2 * np.maximum(base, spec.var_floor) ** spec.v
    return table.y[idx], mean, var, idx


def pointwise_loglik(spec: ModelSpec, unknowns: dict, table: ObservationTable) -> np.ndarray:
    y, mean, var, _ = observation_moments(spec, unknowns, table)
    with np.errstate(all="ignore"):
        ll = gaussian_logpdf(y, mean, var)
    return np.where(np.isfinite(ll), ll, -np.inf)


def _check_unknowns(spec: ModelSpec, unknowns: dict, table: ObservationTable) -> None:
    for key in PARAM_KEYS[spec.family]:
        if key not in unknowns:
            raise KeyError(f"missing unknown {key!r} for {spec.family.value} model")
        if np.any(np.isnan(np.asarray(unknowns[key], dtype=float))):
            raise ValueError(f"NaN in unknown {key!r}")
    if not float(unknowns["sigma2"]) > 0:
        raise ValueError("sigma2 must be positive")
    fam = spec.family
    n_units = table.n_curves if fam is Family.INDEPENDENT else table.n_groups
    if fam in (Family.INDEPENDENT, Family.POOLED):
        for key in GOMPERTZ_KEYS:
            if np.shape(unknowns[key]) != (n_units,):
                raise ValueError(f"{key!r} must have shape ({n_units},)")
    elif fam is Family.GNN:
        if np.shape(unknowns["b"]) != (3, spec.m) or np.shape(unknowns["gamma"]) != (3, spec.m):
            raise ValueError(f"GNN weights must be (3, {spec.m})")
        if np.shape(unknowns["n0"]) != (n_units,):
            raise ValueError(f"n0 must have shape ({n_units},)")
    else:
        if np.shape(unknowns["beta"]) != (n_units, spec.m) or np.shape(unknowns["gamma"]) != (4, spec.m):
            raise ValueError(f"NN weights must be ({n_units}, {spec.m}) and (4, {spec.m})")


def log_likelihood(spec: ModelSpec, unknowns: dict, dataset: GrowthDataset,
                   scaling: ScalingSpec | None = None) -> float:
    """Gaussian log-likelihood of the whole dataset under ``spec``.

    The first observation of each curve enters through the curve value at
    t = 0 for the Gompertz-type families and is a fixed initial condition
    for ``nn``.
    """
    if spec.family.is_network and scaling is None:
        scaling = build_scaling(dataset)
    table = ObservationTable.from_dataset(dataset, scaling if spec.family.is_network else None)
    _check_unknowns(spec, unknowns, table)
    return float(np.sum(pointwise_loglik(spec, unknowns, table)))
