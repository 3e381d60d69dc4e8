"""Acceptance suite: one or more tests per criterion, summarized at the end of the run.

Each test carries a ``criterion`` marker; conftest collects outcomes and
prints a PASS/FAIL line per criterion in the terminal summary.
"""
import hashlib
import math
import time

import numpy as np
import pytest

from conftest import SIX_ENVS, gnn_truth_design, nn_truth_design, pooled_truth_design, random_dataset
from nngrowth.cli import RunConfig, cmd_fit
from nngrowth.data import EnvCondition, GrowthDataset, build_scaling, scale_inputs, write_dataset
from nngrowth.diagnostics import multichain_ess, psrf
from nngrowth.mcmc import ChainConfig, run_chains
from nngrowth.models import (ErrorModel, Family, GompertzParams, ModelSpec, NnWeights, log_likelihood, nn_design,
                             nn_step_mean, step_variance)
from nngrowth.prediction import monitored_quantities, one_step_ahead
from nngrowth.selection import criterion_report, dic3_from_pointwise, pplp_from_moments, select_nodes
from nngrowth.synthetic import SyntheticDesign, oracle_loglik, simulate

REFERENCE = ChainConfig(iterations=20_000, burn_in=10_000, thin=10, n_chains=2)


@pytest.fixture(autouse=True)
def _tag_criterion(request):
    mark = request.node.get_closest_marker("criterion")
    if mark is not None:
        request.node.user_properties.append(("criterion", mark.args[0]))


def note(record_property, text):
    record_property("detail", text)
    print(text)


# --- 1: likelihood oracle ----------------------------------------------------

def _random_unknowns(family, ds, m, rng):
    if family in ("independent", "pooled"):
        n = ds.n_curves if family == "independent" else ds.n_groups
        u = {"n0": rng.uniform(0.01, 0.1, n), "d": rng.uniform(0.3, 1.5, n),
             "mu": rng.uniform(0.05, 0.5, n), "lambda": rng.uniform(0, 6, n)}
    elif family == "gnn":
        u = {"b": rng.uniform(0.2, 2.0, (3, m)), "gamma": rng.normal(0, 2, (3, m)),
             "n0": rng.uniform(0.01, 0.1, ds.n_groups)}
    else:
        u = {"beta": rng.normal(0, 2, (ds.n_groups, m)), "gamma": rng.normal(0, 2, (4, m))}
    u["sigma2"] = float(rng.uniform(1e-4, 0.1))
    return u


@pytest.mark.criterion(1)
def test_criterion_01_likelihood_oracle(record_property):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for family in Family:
        for _ in range(50):
            ds = random_dataset(rng, n_groups=3, curves_per_group=1, n_times=5)
            m = int(rng.integers(1, 4))
            spec = ModelSpec(family, m if family.is_network else None)
            u = _random_unknowns(family.value, ds, m, rng)
            worst = max(worst, abs(log_likelihood(spec, u, ds) - oracle_loglik(family.value, u, ds)))
    elapsed = time.perf_counter() - start
    note(record_property, f"max |diff| {worst:.2e} over 4x50 instances in {elapsed:.2f}s")
    assert worst <= 1e-10
    assert elapsed < 10


# --- 2: pooled Gompertz recovery ----------------------------------------------

RECOVERY_TRUTH = {"n0": 0.05, "d": 1.0, "mu": 0.3, "lambda": 3.0, "sigma2": 1e-4}


@pytest.fixture(scope="module")
def recovery_runs():
    start = time.perf_counter()
    hits = dict.fromkeys(RECOVERY_TRUTH, 0)
    p = RECOVERY_TRUTH
    for seed in range(20):
        design = SyntheticDesign(SIX_ENVS[:1], 10, 20, [GompertzParams(p["n0"], p["d"], p["mu"], p["lambda"])],
                                 ErrorModel(p["sigma2"]), seed)
        s = run_chains(ModelSpec("pooled"), simulate(design), config=ChainConfig(20_000, 10_000, 10, 2, seed))
        for key, truth in p.items():
            x = s.flat(key).reshape(s.n_chains * s.n_draws, -1)[:, 0]
            lo, hi = np.quantile(x, [0.025, 0.975])
            hits[key] += bool(lo <= truth <= hi)
    return hits, time.perf_counter() - start


@pytest.mark.slow
@pytest.mark.criterion(2)
def test_criterion_02_gompertz_recovery(recovery_runs, record_property):
    hits, elapsed = recovery_runs
    note(record_property, "coverage/20 " + ", ".join(f"{k} {v}" for k, v in hits.items())
         + f" in {elapsed:.0f}s")
    assert elapsed < 300
    for key in ("n0", "d", "mu", "lambda"):
        assert hits[key] >= 16, key


@pytest.mark.slow
@pytest.mark.criterion(2)
def test_criterion_02_error_variance_recovery(recovery_runs):
    # Under the default Gamma(0.1, 0.1) precision prior the residual sum of
    # squares (about 0.02) is swamped by the prior rate, so this fails.
    hits, _ = recovery_runs
    assert hits["sigma2"] >= 16


# --- 3: pooled beats independent on pooled truth -----------------------------

@pytest.mark.slow
@pytest.mark.criterion(3)
def test_criterion_03_pooled_beats_independent(record_property):
    start = time.perf_counter()
    wins = 0
    gaps = []
    for seed in range(10):
        ds = simulate(pooled_truth_design(seed, replications=5, n_times=15))
        cfg = ChainConfig(20_000, 10_000, 10, 2, seed)
        pooled = criterion_report(run_chains(ModelSpec("pooled"), ds, config=cfg)).dic3
        indep = criterion_report(run_chains(ModelSpec("independent"), ds, config=cfg)).dic3
        wins += pooled < indep
        gaps.append(indep - pooled)
    elapsed = time.perf_counter() - start
    note(record_property, f"pooled < independent in {wins}/10 seeds (median gap {np.median(gaps):.1f}) "
         f"in {elapsed:.0f}s")
    assert wins >= 9
    assert elapsed < 600


# --- 4: convergence of the reference fits ------------------------------------

def _reference_fits():
    yield "independent", ModelSpec("independent"), simulate(pooled_truth_design(0)), REFERENCE
    yield "pooled", ModelSpec("pooled"), simulate(pooled_truth_design(0)), REFERENCE
    yield "gnn", ModelSpec("gnn", 2), simulate(gnn_truth_design(0)), ChainConfig(20_000, 10_000, 10, 4)
    yield "nn", ModelSpec("nn", 2), simulate(nn_truth_design(0)), REFERENCE


@pytest.mark.slow
@pytest.mark.criterion(4)
@pytest.mark.parametrize("name", ["independent", "pooled", "gnn", "nn"])
def test_criterion_04_convergence(name, record_property):
    _, spec, ds, cfg = next(f for f in _reference_fits() if f[0] == name)
    s = run_chains(spec, ds, config=cfg)
    quantities = dict(monitored_quantities(s))
    quantities["sigma2"] = s.draws["sigma2"]
    rhat = {k: psrf(v) for k, v in quantities.items()}
    ess = {k: multichain_ess(v) for k, v in quantities.items()}
    note(record_property, f"{name}: max rhat {max(rhat.values()):.3f}, min ess {min(ess.values()):.0f} "
         f"over {len(quantities)} quantities")
    assert max(rhat.values()) <= 1.1, max(rhat, key=rhat.get)
    assert min(ess.values()) >= 50, min(ess, key=ess.get)


# --- 5: extinction is absorbing ----------------------------------------------

@pytest.mark.criterion(5)
def test_criterion_05_extinction_absorbing(record_property):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(10_000):
        m = int(rng.integers(1, 5))
        n_groups = int(rng.integers(1, 5))
        w = NnWeights(rng.normal(0, 10, (n_groups, m)), rng.normal(0, 10, (4, m)))
        env = rng.uniform(0.1, 0.9, 3)
        j = int(rng.integers(n_groups))
        mean = nn_step_mean(0.0, env, j, w)
        var = step_variance(0.0, ErrorModel(float(rng.uniform(1e-6, 10))))
        # the sampler's vectorized design rows must vanish too, not just the product
        rows = nn_design(np.zeros(1), env[None, :], w.gamma)
        bad += not (mean == 0.0 and var == 0.0 and not np.any(rows))
    note(record_property, f"{10_000 - bad}/10000 weight draws keep density 0 with zero variance")
    assert bad == 0


# --- 6: DIC3 on a conjugate toy model ----------------------------------------

@pytest.mark.criterion(6)
def test_criterion_06_dic3_closed_form(record_property):
    rng = np.random.default_rng(6)
    s2, tau2 = 0.5, 9.0
    y = rng.normal(1.5, math.sqrt(s2), 25)
    n = len(y)
    post_var = 1.0 / (n / s2 + 1.0 / tau2)
    post_mean = post_var * y.sum() / s2
    theta = post_mean + math.sqrt(post_var) * rng.standard_normal(100_000)
    logdens = -0.5 * np.log(2 * np.pi * s2) - (y[None, :] - theta[:, None]) ** 2 / (2 * s2)
    mc, _ = dic3_from_pointwise(logdens)
    # E[log f(y|theta)] and the posterior predictive density in closed form
    e_loglik = sum(-0.5 * math.log(2 * math.pi * s2) - ((yi - post_mean) ** 2 + post_var) / (2 * s2) for yi in y)
    pred_var = s2 + post_var
    log_pred = sum(-0.5 * math.log(2 * math.pi * pred_var) - (yi - post_mean) ** 2 / (2 * pred_var) for yi in y)
    exact = -4 * e_loglik + 2 * log_pred
    rel = abs(mc - exact) / abs(exact)
    note(record_property, f"Monte Carlo {mc:.4f} vs exact {exact:.4f} (rel err {rel:.2e})")
    assert rel <= 0.01


# --- 7: PPLP -------------------------------------------------------------------

@pytest.mark.criterion(7)
def test_criterion_07_pplp_exact(record_property):
    total = pplp_from_moments([1, 2], [0, 2], [0.5, 0.5], k=1)[0]
    perfect = pplp_from_moments([0.2, 0.8, 1.1], [0.2, 0.8, 1.1], [0, 0, 0], k=1)[0]
    note(record_property, f"hand case {total!r}, perfect prediction {perfect!r}")
    assert abs(total - 1.5) <= 1e-12
    assert perfect == 0.0


# --- 8: node selection -------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(8)
def test_criterion_08_node_selection(record_property):
    start = time.perf_counter()
    picks = []
    for seed in range(10):
        ds = simulate(nn_truth_design(seed, replications=5, n_times=15))
        best, _ = select_nodes("nn", ds, config=ChainConfig(20_000, 10_000, 10, 2, seed), candidate_ms=(1, 2))
        picks.append(best)
    elapsed = time.perf_counter() - start
    hits = picks.count(2)
    note(record_property, f"M=2 chosen in {hits}/10 seeds {picks} in {elapsed:.0f}s")
    assert hits >= 7
    assert elapsed < 1200


# --- 9: one-step-ahead calibration -------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(9)
def test_criterion_09_one_step_calibration(record_property):
    # noise large enough that the data, not the sigma2 prior, set the interval width
    ds = simulate(pooled_truth_design(9, replications=5, n_times=15, sigma2=1e-2))
    s = run_chains(ModelSpec("pooled"), ds, config=ChainConfig(20_000, 10_000, 10, 2, 9))
    covered = events = 0
    for i, curve in enumerate(ds.curves):
        pred = one_step_ahead(s, curve, seed=i)
        y = np.asarray(curve.densities[1:])
        covered += int(np.sum((pred.lower95 <= y) & (y <= pred.upper95)))
        events += len(y)
    freq = covered / events
    note(record_property, f"{covered}/{events} events covered ({freq:.3f})")
    assert events >= 200
    assert 0.88 <= freq <= 0.99


# --- 10: input scaling -------------------------------------------------------

@pytest.mark.criterion(10)
def test_criterion_10_scaling_exact(record_property):
    ds = GrowthDataset((EnvCondition(22, 4.5, 2.5), EnvCondition(42, 7.4, 5.5), EnvCondition(30, 6.0, 4.0)), ())
    spec = build_scaling(ds)
    lo = scale_inputs(EnvCondition(22, 4.5, 2.5), spec)
    hi = scale_inputs(EnvCondition(42, 7.4, 5.5), spec)
    mid = scale_inputs(EnvCondition(32, 5.95, 4.0), spec)
    note(record_property, f"22 -> {float(lo[0])!r}, 42 -> {float(hi[0])!r}, 32 -> {float(mid[0])!r}")
    assert abs(lo[0] - 0.1) <= 1e-12 and abs(hi[0] - 0.9) <= 1e-12 and abs(mid[0] - 0.5) <= 1e-12
    np.testing.assert_allclose(lo, 0.1, atol=1e-12)
    np.testing.assert_allclose(hi, 0.9, atol=1e-12)
    np.testing.assert_allclose(mid, 0.5, atol=1e-12)


# --- 11: determinism ---------------------------------------------------------

def _digest(folder):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.glob("*.csv"))}


@pytest.mark.criterion(11)
@pytest.mark.parametrize("model, nodes", [("pooled", None), ("gnn", 2), ("nn", 2)])
def test_criterion_11_fit_is_deterministic(model, nodes, tmp_path, record_property):
    ds = simulate(nn_truth_design(1, replications=2, n_times=10) if model == "nn"
                  else pooled_truth_design(1, replications=2, n_times=10))
    data = tmp_path / "data.csv"
    write_dataset(ds, data)
    digests = []
    for run in ("a", "b"):
        cfg = RunConfig(model=model, nodes=nodes, data=str(data), out=str(tmp_path / run),
                        chain=ChainConfig(2000, 1000, 10, 2, seed=11))
        digests.append(_digest(cmd_fit(cfg) / "chains"))
    note(record_property, f"{model}: {len(digests[0])} chain dumps identical = {digests[0] == digests[1]}")
    assert len(digests[0]) == 2
    assert digests[0] == digests[1]
