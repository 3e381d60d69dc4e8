"""Command-line interface: ``python -m nngrowth {fit,compare,select,predict,simulate}``.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .data import DataError, EnvCondition, ScalingSpec, read_dataset, validate_dataset, write_dataset
from .diagnostics import effective_sample_size, psrf
from .mcmc import ChainConfig, InitializationError, PosteriorSamples, run_chains
from .models import Family, ModelSpec
from .prediction import (PredictiveSummary, fitted_summary, mean_curve, monitored_quantities, mse,
                         one_step_ahead, predict_new_group)
from .priors import HyperParams
from .selection import CriterionReport, comparison_table, criterion_report, reports_to_json, select_nodes
from .synthetic import design_from_dict, design_to_dict, simulate

log = logging.getLogger("nngrowth")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_USAGE = 0, 2, 3, 4
BUNDLED_DESIGNS = ("reference_6group",)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything needed to reproduce a run; written as ``config.json`` next to its outputs."""

    model: str = "pooled"
    nodes: int | None = None
    hierarchical: bool | None = None
    models: list = field(default_factory=list)
    candidate_nodes: list = field(default_factory=lambda: [1, 2, 3])
    hyper: HyperParams = field(default_factory=HyperParams)
    chain: ChainConfig = field(default_factory=ChainConfig)
    scaling: ScalingSpec | None = None
    pplp_k: float = 1.0
    nn_mode: str = "forecast"
    data: str | None = None
    out: str = "run"
    time_step: float = 1.0

    def spec(self, model: str | None = None, nodes: int | None = None) -> ModelSpec:
        fam = Family(model or self.model)
        m = nodes if nodes is not None else self.nodes
        return ModelSpec(fam, m if fam.is_network else None, self.hierarchical)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["hyper"] = self.hyper.to_dict()
        d["chain"] = self.chain.to_dict()
        d["scaling"] = self.scaling.to_dict() if self.scaling else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        d = dict(d)
        if "hyper" in d:
            d["hyper"] = HyperParams.from_dict(d["hyper"])
        if "chain" in d:
            d["chain"] = ChainConfig(**d["chain"])
        if d.get("scaling"):
            d["scaling"] = ScalingSpec.from_dict(d["scaling"])
        return cls(**d)

    def write(self, directory: Path) -> None:
        (directory / "config.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# --- argument parsing -------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, data_required: bool = False):
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--data", help="input dataset (CSV)", required=data_required)
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--thin", type=int)
    p.add_argument("--pplp-k", type=float, dest="pplp_k")
    p.add_argument("--hierarchical", action=argparse.BooleanOptionalAction, default=None,
                   help="full weight hierarchy (default: on for nn, off for gnn)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nngrowth", description="Bayesian growth-curve models with neural-network components.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    families = [f.value for f in Family]

    p = sub.add_parser("fit", help="run MCMC for one model")
    _common(p)
    p.add_argument("--model", choices=families)
    p.add_argument("--nodes", type=int)

    p = sub.add_parser("compare", help="DIC3 / PPLP table for several models")
    _common(p)
    p.add_argument("--model", action="append", dest="models", metavar="FAMILY[:M]",
                   help="repeat for each model, e.g. --model pooled --model nn:2")
    p.add_argument("--nodes", type=int, help="node count for network models given without :M")

    p = sub.add_parser("select", help="choose the node count by DIC3")
    _common(p)
    p.add_argument("--model", choices=["gnn", "nn"])
    p.add_argument("--nodes", help="comma-separated candidate node counts (default 1,2,3)")

    p = sub.add_parser("predict", help="predict from a finished fit")
    p.add_argument("--run", type=Path, required=True, help="directory written by 'fit'")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--curve", help="one-step-ahead prediction for this curve id")
    target.add_argument("--env", help="new group as TEMPERATURE,PH,NACL")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--init-density", type=float, dest="init_density")
    p.add_argument("--nn-mode", choices=["forecast", "condition"], dest="nn_mode")
    p.add_argument("--data", help="held-out observations (CSV) for the target")
    p.add_argument("--out", help="output directory (default: RUN/predict)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("simulate", help="simulate a dataset from a design file")
    p.add_argument("--config", help=f"design JSON, or one of {', '.join(BUNDLED_DESIGNS)}",
                   default=BUNDLED_DESIGNS[0])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            cfg = RunConfig.from_dict(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
    over = {}
    for key in ("data", "out", "pplp_k", "hierarchical"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if getattr(args, "model", None) and args.command in ("fit", "select"):
        over["model"] = args.model
    if args.command == "fit" and args.nodes is not None:
        over["nodes"] = args.nodes
    if args.command == "compare":
        if args.nodes is not None:
            over["nodes"] = args.nodes
        if args.models:
            over["models"] = list(args.models)
    if args.command == "select" and args.nodes:
        try:
            over["candidate_nodes"] = [int(x) for x in args.nodes.split(",")]
        except ValueError:
            raise UsageError(f"--nodes expects comma-separated integers, got {args.nodes!r}") from None
    chain = {}
    for key, name in (("seed", "seed"), ("chains", "n_chains"), ("iterations", "iterations"),
                      ("burn_in", "burn_in"), ("thin", "thin")):
        val = getattr(args, key, None)
        if val is not None:
            chain[name] = val
    if chain:
        over["chain"] = replace(cfg.chain, **chain)
    cfg = replace(cfg, **over)
    if cfg.data is None:
        raise UsageError("--data is required")
    return cfg


def _load_data(cfg: RunConfig):
    ds = read_dataset(cfg.data, cfg.time_step)
    problems = validate_dataset(ds)
    if problems:
        raise DataError("dataset failed validation:\n  " + "\n  ".join(problems))
    return ds


# --- output helpers ---------------------------------------------------------

def _flat_columns(draws: dict) -> list[tuple[str, str, tuple]]:
    cols = []
    for key, arr in draws.items():
        shape = arr.shape[2:]
        for idx in np.ndindex(*shape):
            cols.append((key + "".join(f"[{i}]" for i in idx), key, idx))
    return cols


def write_chain_dumps(samples: PosteriorSamples, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    cols = _flat_columns(samples.draws)
    for c in range(samples.n_chains):
        with (directory / f"chain_{c}.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["draw"] + [name for name, _, _ in cols])
            for s in range(samples.n_draws):
                w.writerow([s] + [repr(float(samples.draws[key][(c, s) + idx])) for _, key, idx in cols])


_COL = re.compile(r"^([A-Za-z_0-9]+?)((?:\[\d+\])*)$")


def read_chain_dumps(directory: Path) -> dict:
    """Inverse of :func:`write_chain_dumps`."""
    files = sorted(directory.glob("chain_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not files:
        raise DataError(f"no chain dumps in {directory}")
    per_chain = []
    for path in files:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0][1:], np.array([[float(x) for x in r[1:]] for r in rows[1:]])
        per_chain.append((header, body))
    header = per_chain[0][0]
    parsed = []
    shapes = {}
    for name in header:
        m = _COL.match(name)
        key = m.group(1)
        idx = tuple(int(i) for i in re.findall(r"\[(\d+)\]", m.group(2)))
        parsed.append((key, idx))
        prev = shapes.get(key, tuple(0 for _ in idx))
        shapes[key] = tuple(max(a, b + 1) for a, b in zip(prev, idx))
    n_draws = per_chain[0][1].shape[0]
    draws = {k: np.empty((len(files), n_draws) + shp) for k, shp in shapes.items()}
    for c, (_, body) in enumerate(per_chain):
        for col, (key, idx) in enumerate(parsed):
            draws[key][(c, slice(None)) + idx] = body[:, col]
    return draws


def _summary_rows(samples: PosteriorSamples) -> list[list]:
    series = {}
    for name, key, idx in _flat_columns(samples.draws):
        series[name] = samples.draws[key][(slice(None), slice(None)) + idx]
    series.update(monitored_quantities(samples))
    rows = []
    for name, x in series.items():
        flat = x.reshape(-1)
        q = np.quantile(flat, [0.025, 0.5, 0.975])
        try:
            rhat = psrf(x) if x.shape[0] >= 2 else float("nan")
        except ValueError:
            rhat = float("nan")
        try:
            ess = float(sum(effective_sample_size(c) for c in x))
        except ValueError:
            ess = float("nan")
        rows.append([name, flat.mean(), flat.std(ddof=1), q[0], q[1], q[2], rhat, ess])
    return rows


def write_summary(samples: PosteriorSamples, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "mean", "sd", "q2.5", "q50", "q97.5", "rhat", "ess"])
        for row in _summary_rows(samples):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def samples_from_run(run: Path) -> PosteriorSamples:
    cfg = RunConfig.from_dict(json.loads((run / "config.json").read_text()))
    ds = read_dataset(run / "data.csv", cfg.time_step)
    spec = cfg.spec()
    scaling = cfg.scaling
    draws = read_chain_dumps(run / "chains")
    return PosteriorSamples(spec, cfg.chain, ds, scaling, draws, hyper=cfg.hyper)


# --- commands ---------------------------------------------------------------

def cmd_fit(cfg: RunConfig) -> Path:
    ds = _load_data(cfg)
    spec = cfg.spec()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = run_chains(spec, ds, cfg.hyper, cfg.chain, cfg.scaling)
    cfg = replace(cfg, scaling=samples.scaling, nodes=spec.m, hierarchical=spec.hierarchical)
    write_chain_dumps(samples, out / "chains")
    write_summary(samples, out / "summary.csv")
    fitted = out / "fitted"
    fitted.mkdir(exist_ok=True)
    for j in range(ds.n_groups):
        fitted_summary(samples, j).to_csv(fitted / f"group_{j}.csv")
    acc = {k: v.tolist() for k, v in samples.acceptance.items()}
    (out / "acceptance.json").write_text(json.dumps(acc, indent=2) + "\n")
    write_dataset(ds, out / "data.csv")
    cfg.write(out)
    log.info("fit written to %s", out)
    return out


def _parse_model(token: str, default_nodes: int | None):
    fam, _, m = token.partition(":")
    try:
        family = Family(fam)
    except ValueError:
        raise UsageError(f"unknown model {fam!r}") from None
    if family.is_network:
        nodes = int(m) if m else default_nodes
        if nodes is None:
            raise UsageError(f"{fam} needs a node count (use {fam}:M or --nodes)")
        return family.value, nodes
    if m:
        raise UsageError(f"{fam} takes no node count")
    return family.value, None


def cmd_compare(cfg: RunConfig) -> list[CriterionReport]:
    if len(cfg.models) < 2:
        raise UsageError("need >= 2 models")
    models = [_parse_model(t, cfg.nodes) for t in cfg.models]
    ds = _load_data(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for fam, m in models:
        spec = cfg.spec(fam, m)
        try:
            samples = run_chains(spec, ds, cfg.hyper, cfg.chain, cfg.scaling)
            reports.append(criterion_report(samples, k=cfg.pplp_k, seed=cfg.chain.seed))
        except (InitializationError, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.warning("%s failed: %s", spec.label(), exc)
            reports.append(CriterionReport.failed(spec, str(exc), cfg.pplp_k))
    if all(r.status != "ok" for r in reports):
        raise FloatingPointError("all models failed")
    table = comparison_table(reports)
    (out / "comparison.txt").write_text(table + "\n")
    (out / "comparison.json").write_text(reports_to_json(reports) + "\n")
    cfg.write(out)
    print(table)
    return reports


def cmd_select(cfg: RunConfig) -> int:
    fam = Family(cfg.model)
    if not fam.is_network:
        raise UsageError("select needs --model gnn or --model nn")
    ds = _load_data(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = {"hierarchical": cfg.hierarchical}
    best, reports = select_nodes(fam, ds, cfg.hyper, cfg.chain, cfg.candidate_nodes, cfg.pplp_k, opts)
    table = comparison_table(reports)
    (out / "selection.txt").write_text(table + f"\n\nselected M = {best}\n")
    (out / "selection.json").write_text(json.dumps(
        {"selected_nodes": best, "reports": json.loads(reports_to_json(reports))}, indent=2) + "\n")
    cfg.write(out)
    print(table)
    print(f"selected M = {best}")
    return best


def _parse_env(text: str) -> EnvCondition:
    try:
        t, ph, nacl = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--env expects TEMPERATURE,PH,NACL, got {text!r}") from None
    return EnvCondition(t, ph, nacl)


def cmd_predict(args) -> PredictiveSummary:
    run = Path(args.run)
    if not (run / "config.json").exists():
        raise DataError(f"{run} is not a fit directory (no config.json)")
    samples = samples_from_run(run)
    out = Path(args.out) if args.out else run / "predict"
    out.mkdir(parents=True, exist_ok=True)
    extra = read_dataset(args.data) if args.data else None
    result = {}
    if args.curve is not None:
        curve = None
        if extra is not None:
            try:
                curve = extra.curve(args.curve)
            except KeyError:
                pass
        if curve is None:
            try:
                curve = samples.dataset.curve(args.curve)
            except KeyError:
                raise DataError(f"unknown curve id {args.curve!r}") from None
        elif samples.spec.family is not Family.INDEPENDENT:
            env = extra.groups[curve.group_index]
            if env not in samples.dataset.groups:
                raise DataError(f"curve {args.curve!r} is not from a fitted group; use --env")
            curve = replace(curve, group_index=samples.dataset.groups.index(env))
        summary = one_step_ahead(samples, curve, seed=args.seed)
        observed = np.asarray(curve.densities[1:])
        name = f"curve_{args.curve}.csv"
        result["target"] = {"curve": args.curve}
    else:
        env = _parse_env(args.env)
        obs_curves = [c for c in extra.curves if extra.groups[c.group_index] == env] if extra else []
        horizon = args.horizon
        if horizon is None:
            if not obs_curves:
                raise UsageError("--horizon is required without held-out observations")
            horizon = min(c.n_obs for c in obs_curves) - 1
        mode = args.nn_mode or "forecast"
        trajectory = mean_curve(obs_curves) if obs_curves else None
        if mode == "condition" and trajectory is None:
            raise UsageError("--nn-mode condition needs held-out observations via --data")
        summary = predict_new_group(samples, env, horizon, args.init_density, mode=mode,
                                    trajectory=trajectory, seed=args.seed)
        observed = trajectory[: horizon + 1] if trajectory is not None else None
        if observed is not None and len(observed) < horizon + 1:
            observed = None
        name = "new_group.csv"
        result["target"] = asdict(env)
    summary.to_csv(out / name)
    result["mode"] = summary.mode
    result["file"] = name
    if observed is not None:
        result["mse"] = mse(summary.mean, observed)
        print(f"MSE = {result['mse']:.6g}")
    (out / "prediction.json").write_text(json.dumps(result, indent=2) + "\n")
    return summary


def _design_dict(source: str) -> dict:
    if source in BUNDLED_DESIGNS:
        return json.loads(resources.files("nngrowth").joinpath(f"designs/{source}.json").read_text())
    return json.loads(Path(source).read_text())


def cmd_simulate(args) -> Path:
    try:
        d = _design_dict(args.config)
        if args.seed is not None:
            d["seed"] = args.seed
        design = design_from_dict(d)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid design: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = simulate(design)
    write_dataset(ds, out / "data.csv")
    (out / "truth.json").write_text(json.dumps(design_to_dict(design), indent=2) + "\n")
    log.info("%d curves written to %s", ds.n_curves, out / "data.csv")
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on --help and on usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "predict":
            cmd_predict(args)
        elif args.command == "simulate":
            cmd_simulate(args)
        else:
            cfg = _config_from_args(args)
            {"fit": cmd_fit, "compare": cmd_compare, "select": cmd_select}[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InitializationError, FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ValueError, KeyError, OSError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK
