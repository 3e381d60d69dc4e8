"""Node-count selection on data simulated from a recursive-network truth.

Repeats the DIC3 choice over several seeds and tallies the selected M.

    python scripts/node_sweep.py --seeds 10 --candidates 1 2 3
"""
import argparse
import collections
import time

import numpy as np

from nngrowth.data import EnvCondition
from nngrowth.mcmc import ChainConfig
from nngrowth.models import ErrorModel, NnWeights
from nngrowth.selection import select_nodes
from nngrowth.synthetic import SyntheticDesign, simulate

ENVS = (EnvCondition(22, 4.5, 2.5), EnvCondition(30, 5.5, 5.5), EnvCondition(38, 6.5, 3.5), EnvCondition(42, 7.4, 4.5))
# two nodes: the first drives growth, the second pulls it back near the plateau
GAMMA = np.array([[30.0, 3.0], [0.5, 0.2], [-0.5, 0.1], [0.3, -0.2]])
BETA = np.array([[1.0, -1.1], [0.8, -1.0], [1.1, -1.2], [0.9, -1.2]])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--candidates", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--replications", type=int, default=5)
    ap.add_argument("--n-times", type=int, default=15)
    ap.add_argument("--sigma2", type=float, default=4e-4)
    ap.add_argument("--iterations", type=int, default=20_000)
    ap.add_argument("--burn-in", type=int, default=10_000)
    ap.add_argument("--thin", type=int, default=10)
    args = ap.parse_args()

    tally = collections.Counter()
    start = time.perf_counter()
    for seed in range(args.seeds):
        design = SyntheticDesign(ENVS, args.replications, args.n_times, NnWeights(BETA, GAMMA),
                                 ErrorModel(args.sigma2), seed)
        cfg = ChainConfig(args.iterations, args.burn_in, args.thin, 2, seed)
        best, reports = select_nodes("nn", simulate(design), config=cfg, candidate_ms=tuple(args.candidates))
        tally[best] += 1
        scores = "  ".join(f"M={r.model.m}: {r.dic3:.1f}" for r in reports)
        print(f"seed {seed:>2}  best M={best}  {scores}", flush=True)
    print(f"{args.seeds} seeds in {time.perf_counter() - start:.0f}s; chosen M: {dict(sorted(tally.items()))}")


if __name__ == "__main__":
    main()
