"""Fit every model family to the bundled six-group design and print DIC3/PPLP.

    python scripts/compare_reference.py --nodes 2 --iterations 20000
"""
import argparse
import json
from importlib import resources

from nngrowth.mcmc import ChainConfig, run_chains
from nngrowth.models import ModelSpec
from nngrowth.selection import CriterionReport, comparison_table, criterion_report
from nngrowth.synthetic import design_from_dict, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=2)
    ap.add_argument("--replications", type=int, default=5)
    ap.add_argument("--n-times", type=int, default=15)
    ap.add_argument("--iterations", type=int, default=20_000)
    ap.add_argument("--burn-in", type=int, default=10_000)
    ap.add_argument("--thin", type=int, default=10)
    ap.add_argument("--chains", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    raw = json.loads(resources.files("nngrowth").joinpath("designs/reference_6group.json").read_text())
    raw.update(replications=args.replications, n_times=args.n_times, seed=args.seed)
    ds = simulate(design_from_dict(raw))
    cfg = ChainConfig(args.iterations, args.burn_in, args.thin, args.chains, args.seed)
    reports = []
    for spec in (ModelSpec("independent"), ModelSpec("pooled"), ModelSpec("gnn", args.nodes),
                 ModelSpec("nn", args.nodes)):
        try:
            reports.append(criterion_report(run_chains(spec, ds, config=cfg)))
        except Exception as exc:
            reports.append(CriterionReport.failed(spec, str(exc)))
    print(comparison_table(reports))


if __name__ == "__main__":
    main()
