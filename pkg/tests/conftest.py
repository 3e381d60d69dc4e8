import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nngrowth.data import EnvCondition, GrowthCurve, GrowthDataset

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SIX_ENVS = (
    EnvCondition(22.0, 6.5, 2.5), EnvCondition(30.0, 5.5, 4.5), EnvCondition(34.0, 6.5, 5.5),
    EnvCondition(38.0, 7.4, 3.5), EnvCondition(42.0, 5.5, 2.5), EnvCondition(42.0, 7.4, 2.5),
)


def random_dataset(rng, n_groups=3, curves_per_group=1, n_times=5, low=0.02, high=1.2):
    """Small dataset with distinct random environments inside the usual ranges."""
    groups = []
    while len(groups) < n_groups:
        env = EnvCondition(float(rng.uniform(22, 42)), float(rng.uniform(4.5, 7.4)), float(rng.uniform(2.5, 5.5)))
        groups.append(env)
    curves = []
    for j in range(n_groups):
        for r in range(curves_per_group):
            curves.append(GrowthCurve(f"c{j}_{r}", j, rng.uniform(low, high, n_times)))
    return GrowthDataset(tuple(groups), tuple(curves))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- shared designs and fits ------------------------------------------------

NN_ENVS = (EnvCondition(22, 4.5, 2.5), EnvCondition(30, 5.5, 5.5), EnvCondition(38, 6.5, 3.5),
           EnvCondition(42, 7.4, 4.5))
NN_GAMMA = np.array([[30.0, 3.0], [0.5, 0.2], [-0.5, 0.1], [0.3, -0.2]])
NN_BETA = np.array([[1.0, -1.1], [0.8, -1.0], [1.1, -1.2], [0.9, -1.2]])

GNN_GAMMA = np.array([[2.0, -1.0], [1.0, 1.5], [-1.5, 0.5]])
GNN_B = np.array([[0.8, 0.6], [0.5, -0.2], [3.0, 4.0]])


def nn_truth_design(seed=0, replications=5, n_times=15, sigma2=4e-4):
    """Two-node recursive truth with sigmoidal curves that level off below 1."""
    from nngrowth.models import ErrorModel, NnWeights
    from nngrowth.synthetic import SyntheticDesign
    return SyntheticDesign(NN_ENVS, replications, n_times, NnWeights(NN_BETA, NN_GAMMA), ErrorModel(sigma2), seed)


def gnn_truth_design(seed=0, replications=5, n_times=15, sigma2=1e-4):
    from nngrowth.models import ErrorModel, GnnWeights, NetworkWeights
    from nngrowth.synthetic import SyntheticDesign
    return SyntheticDesign(SIX_ENVS, replications, n_times, GnnWeights(NetworkWeights(GNN_B, GNN_GAMMA), [0.05] * 6),
                           ErrorModel(sigma2), seed)


def pooled_truth_design(seed=0, replications=5, n_times=15, sigma2=1e-4):
    from nngrowth.models import ErrorModel, GompertzParams
    from nngrowth.synthetic import SyntheticDesign
    truth = [GompertzParams(0.05, d, mu, lam) for d, mu, lam in
             ((0.6, 0.10, 6.0), (0.7, 0.15, 5.0), (0.8, 0.20, 4.5), (1.0, 0.30, 3.0), (0.9, 0.25, 3.5), (1.1, 0.35, 2.5))]
    return SyntheticDesign(SIX_ENVS, replications, n_times, truth, ErrorModel(sigma2), seed)


QUICK = dict(iterations=8000, burn_in=4000, thin=10, n_chains=2)


@pytest.fixture(scope="session")
def pooled_fit():
    from nngrowth.mcmc import ChainConfig, run_chains
    from nngrowth.models import ModelSpec
    from nngrowth.synthetic import simulate
    ds = simulate(pooled_truth_design(replications=3, n_times=12))
    return run_chains(ModelSpec("pooled"), ds, config=ChainConfig(seed=1, **QUICK))


@pytest.fixture(scope="session")
def gnn_fit():
    from nngrowth.mcmc import ChainConfig, run_chains
    from nngrowth.models import ModelSpec
    from nngrowth.synthetic import simulate
    ds = simulate(gnn_truth_design(replications=3, n_times=12))
    return run_chains(ModelSpec("gnn", 2), ds, config=ChainConfig(seed=2, iterations=16000, burn_in=8000, thin=10))


@pytest.fixture(scope="session")
def nn_fit():
    from nngrowth.mcmc import ChainConfig, run_chains
    from nngrowth.models import ModelSpec
    from nngrowth.synthetic import simulate
    ds = simulate(nn_truth_design(replications=3))
    return run_chains(ModelSpec("nn", 2), ds, config=ChainConfig(seed=3, **QUICK))


# --- acceptance summary -----------------------------------------------------

_CRITERIA: dict = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    entry = _CRITERIA.setdefault(props["criterion"], {"ok": True, "details": []})
    entry["ok"] &= report.passed
    if props.get("detail"):
        entry["details"].append(props["detail"])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        e = _CRITERIA[key]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {key:>2}: {status}  {'; '.join(e['details'])}")
