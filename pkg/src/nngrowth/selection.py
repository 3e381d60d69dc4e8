"""Model comparison: DIC3, posterior predictive loss, and node-count selection."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import GrowthDataset, ObservationTable
from .mcmc import ChainConfig, PosteriorSamples, run_chains
from .models import Family, ModelSpec, gaussian_logpdf, observation_moments
from .priors import HyperParams

log = logging.getLogger(__name__)


def _num(x):
    return float(x) if np.isfinite(x) else None


@dataclass
class CriterionReport:
    model: ModelSpec
    dic3: float
    pplp: float
    pplp_k: float
    per_observation_density_means: np.ndarray
    goodness_term: float
    penalty_term: float
    status: str = "ok"
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(), "label": self.model.label(),
            "dic3": _num(self.dic3), "pplp": _num(self.pplp), "pplp_k": self.pplp_k,
            "goodness_term": _num(self.goodness_term), "penalty_term": _num(self.penalty_term),
            "per_observation_density_means": np.asarray(self.per_observation_density_means).tolist(),
            "status": self.status, "message": self.message,
        }

    @classmethod
    def failed(cls, model: ModelSpec, message: str, k: float = 1.0) -> "CriterionReport":
        nan = float("nan")
        return cls(model, nan, nan, k, np.array([]), nan, nan, "failed", message)


def dic3_from_pointwise(logdens) -> tuple[float, np.ndarray]:
    """DIC3 from a (draws, observations) matrix of log f(y_i | theta_s).

    Returns the criterion and the per-observation log of the posterior mean
    density, averaged with a max shift for stability.
    """
    ld = np.atleast_2d(np.asarray(logdens, dtype=float))
    S = ld.shape[0]
    mean_loglik = ld.sum(axis=1).mean()
    log_mean_dens = logsumexp(ld, axis=0) - np.log(S)
    bad = np.flatnonzero(~np.isfinite(log_mean_dens))
    if bad.size:
        raise FloatingPointError(f"posterior mean density is zero for observation(s) {bad.tolist()}")
    return float(-4.0 * mean_loglik + 2.0 * log_mean_dens.sum()), log_mean_dens


def pplp_from_moments(m, y, s2, k: float = 1.0) -> tuple[float, float, float]:
    """k/(k+1) * sum (m - y)^2 + sum s^2 -> (total, goodness, penalty)."""
    if not k > 0:
        raise ValueError("k must be positive")
    m, y, s2 = (np.asarray(a, dtype=float) for a in (m, y, s2))
    if m.shape != y.shape or s2.shape != y.shape:
        raise ValueError("m, y and s2 must have equal shapes")
    goodness = float(k / (k + 1.0) * np.sum((m - y) ** 2))
    penalty = float(np.sum(s2))
    return goodness + penalty, goodness, penalty


def _modelled_points(samples: PosteriorSamples, table: ObservationTable):
    """Per-draw log densities and predictive moments over the modelled observations."""
    spec = samples.spec
    n_total = samples.n_chains * samples.n_draws
    logdens = None
    means = variances = None
    y = idx = None
    for s, draw in enumerate(samples.iter_draws()):
        y, mu, var, idx = observation_moments(spec, draw, table)
        if logdens is None:
            logdens = np.empty((n_total, len(y)))
            means = np.empty_like(logdens)
            variances = np.empty_like(logdens)
        with np.errstate(all="ignore"):
            logdens[s] = gaussian_logpdf(y, mu, var)
        means[s], variances[s] = mu, var
    logdens[~np.isfinite(logdens)] = -np.inf
    return y, idx, logdens, means, variances


def _observation_names(table: ObservationTable, dataset: GrowthDataset, idx) -> list[str]:
    return [f"{dataset.curves[table.curve[i]].curve_id}@t{int(table.time[i])}" for i in idx]


def dic3(samples: PosteriorSamples, dataset: GrowthDataset | None = None, spec: ModelSpec | None = None) -> float:
    """DIC3 of a fitted model over its modelled observations."""
    return criterion_report(samples, dataset, spec).dic3


def pplp(samples: PosteriorSamples, dataset: GrowthDataset | None = None, spec: ModelSpec | None = None,
         k: float = 1.0, seed: int = 0) -> CriterionReport:
    return criterion_report(samples, dataset, spec, k=k, seed=seed)


def criterion_report(samples: PosteriorSamples, dataset: GrowthDataset | None = None,
                     spec: ModelSpec | None = None, k: float = 1.0, seed: int = 0) -> CriterionReport:
    """DIC3 and PPLP for one fitted model.

    PPLP uses one replicate observation per retained draw, drawn from the
    observation model (for ``nn`` conditional on the observed previous
    density).
    """
    if samples.n_draws == 0:
        raise ValueError("no posterior draws")
    dataset = dataset or samples.dataset
    spec = spec or samples.spec
    table = ObservationTable.from_dataset(dataset, samples.scaling)
    y, idx, logdens, means, variances = _modelled_points(samples, table)
    try:
        value, log_mean_dens = dic3_from_pointwise(logdens)
    except FloatingPointError:
        bad = np.flatnonzero(~np.isfinite(logsumexp(logdens, axis=0)))
        names = _observation_names(table, dataset, idx[bad])
        raise FloatingPointError(f"posterior mean density is zero at {', '.join(names[:10])}") from None
    rng = np.random.default_rng(seed)
    reps = means + np.sqrt(variances) * rng.standard_normal(means.shape)
    total, good, pen = pplp_from_moments(reps.mean(axis=0), y, reps.var(axis=0), k)
    return CriterionReport(spec, value, total, k, np.exp(log_mean_dens), good, pen)


def select_nodes(family, dataset: GrowthDataset, hyper: HyperParams | None = None,
                 config: ChainConfig | None = None, candidate_ms=(1, 2, 3), k: float = 1.0,
                 spec_options: dict | None = None):
    """Fit every candidate node count and return the one with the smallest DIC3.

    Returns ``(best_m, reports)``; failed fits appear in ``reports`` with
    ``status == "failed"`` and are excluded from the choice.
    """
    family = Family(family)
    if not family.is_network:
        raise ValueError("node selection applies to network models only")
    if not candidate_ms:
        raise ValueError("no candidate node counts")
    reports = []
    for m in candidate_ms:
        spec = ModelSpec(family, m, **(spec_options or {}))
        try:
            samples = run_chains(spec, dataset, hyper, config)
            rep = criterion_report(samples, k=k)
        except Exception as exc:  # recorded, not fatal
            log.warning("fit with M=%s failed: %s", m, exc)
            rep = CriterionReport.failed(spec, str(exc), k)
        reports.append(rep)
    ok = [r for r in reports if r.status == "ok" and np.isfinite(r.dic3)]
    if not ok:
        raise RuntimeError("all candidate fits failed")
    best = min(ok, key=lambda r: r.dic3)
    return best.model.m, reports


def comparison_table(reports: list[CriterionReport]) -> str:
    """Aligned text table (Model, DIC3, PPLP), sorted by DIC3 with failures last."""
    rows = sorted(reports, key=lambda r: (r.status != "ok", r.dic3 if np.isfinite(r.dic3) else np.inf))
    width = max([len("Model")] + [len(r.model.label()) for r in rows])
    lines = [f"{'Model':<{width}}  {'DIC3':>14}  {'PPLP':>14}"]
    lines.append("-" * len(lines[0]))
    for r in rows:
        if r.status == "ok":
            lines.append(f"{r.model.label():<{width}}  {r.dic3:>14.3f}  {r.pplp:>14.6f}")
        else:
            lines.append(f"{r.model.label():<{width}}  {'failed':>14}  {'':>14}  {r.message}")
    return "\n".join(lines)


def reports_to_json(reports: list[CriterionReport]) -> str:
    rows = sorted(reports, key=lambda r: (r.status != "ok", r.dic3 if np.isfinite(r.dic3) else np.inf))
    return json.dumps([r.to_dict() for r in rows], indent=2)
