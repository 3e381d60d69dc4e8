"""Coverage study: fit pooled Gompertz to repeated simulations from one known curve.

    python scripts/recovery.py --seeds 20 --sigma2 1e-4
"""
import argparse
import time

import numpy as np

from nngrowth.data import EnvCondition
from nngrowth.mcmc import ChainConfig, run_chains
from nngrowth.models import ErrorModel, GompertzParams, ModelSpec
from nngrowth.priors import HyperParams
from nngrowth.synthetic import SyntheticDesign, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--replications", type=int, default=10)
    ap.add_argument("--n-times", type=int, default=20)
    ap.add_argument("--truth", type=float, nargs=4, default=[0.05, 1.0, 0.3, 3.0], metavar=("N0", "D", "MU", "LAMBDA"))
    ap.add_argument("--sigma2", type=float, default=1e-4)
    ap.add_argument("--iterations", type=int, default=20_000)
    ap.add_argument("--burn-in", type=int, default=10_000)
    ap.add_argument("--thin", type=int, default=10)
    ap.add_argument("--vague", action="store_true", help="use a = b = 1e-3 for the error precision prior")
    args = ap.parse_args()

    truth = dict(zip(("n0", "d", "mu", "lambda"), args.truth), sigma2=args.sigma2)
    hyper = HyperParams(a=1e-3, b=1e-3) if args.vague else HyperParams()
    hits = dict.fromkeys(truth, 0)
    widths = {k: [] for k in truth}
    start = time.perf_counter()
    for seed in range(args.seeds):
        design = SyntheticDesign((EnvCondition(30, 6, 4),), args.replications, args.n_times,
                                 [GompertzParams(*args.truth)], ErrorModel(args.sigma2), seed)
        cfg = ChainConfig(args.iterations, args.burn_in, args.thin, 2, seed)
        s = run_chains(ModelSpec("pooled"), simulate(design), hyper, cfg)
        for key, value in truth.items():
            x = s.flat(key).reshape(s.n_chains * s.n_draws, -1)[:, 0]
            lo, hi = np.quantile(x, [0.025, 0.975])
            hits[key] += bool(lo <= value <= hi)
            widths[key].append(hi - lo)
    print(f"{args.seeds} seeds in {time.perf_counter() - start:.0f}s")
    print(f"{'param':<8}{'truth':>10}{'covered':>9}{'median width':>14}")
    for key, value in truth.items():
        print(f"{key:<8}{value:>10.4g}{hits[key]:>9d}{np.median(widths[key]):>14.4g}")


if __name__ == "__main__":
    main()
