"""Bayesian growth-curve models with neural-network components.

Four model families share one data layer and one sampler interface:
independent and pooled Gompertz benchmarks, a Gompertz model whose
parameters come from a network of environmental inputs (``gnn``), and a
hierarchical recursive model whose per-step growth rate is a network of
the current density and the environment (``nn``).
"""
from .data import (DataError, EnvCondition, GrowthCurve, GrowthDataset, ScalingSpec, build_scaling,
                   read_dataset, scale_inputs, unscale_inputs, validate_dataset, write_dataset)
from .diagnostics import effective_sample_size, gelman_rubin, multichain_ess, psrf
from .mcmc import ChainConfig, InitializationError, PosteriorSamples, run_chains
from .models import (ErrorModel, Family, GnnWeights, GompertzParams, ModelSpec, NetworkWeights, NnWeights,
                     gompertz_eval, log_likelihood, nn_forward, nn_growth_rate, nn_step_mean, step_variance)
from .prediction import PredictiveSummary, mse, one_step_ahead, predict_new_group
from .priors import HierarchyState, HyperParams, log_prior, n0_posterior
from .selection import CriterionReport, comparison_table, criterion_report, dic3, pplp, select_nodes
from .synthetic import SyntheticDesign, oracle_loglik, simulate

__version__ = "0.1.0"
