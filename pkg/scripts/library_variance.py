"""Reuse gains on scenario 1 for several independently trained policy libraries.

Separates source-training variance from target-episode noise: each
library seed retrains all six source policies, and every library is
evaluated on the same target seeds.
Usage: python scripts/library_variance.py [--library-seeds 0-2] [--seeds 0-9]
"""
import argparse
import tempfile

import numpy as np

from lobtransfer.cli import parse_seeds
from lobtransfer.experiments import ExperimentManifest, run_experiment, train_library

LIBRARY = [f"table1:{i}" for i in range(2, 8)]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--library-seeds", default="0-2")
    ap.add_argument("--seeds", default="0-9")
    ap.add_argument("--source-episodes", type=int, default=100)
    args = ap.parse_args()
    seeds = parse_seeds(args.seeds)
    table = []
    with tempfile.TemporaryDirectory() as tmp:
        for ls in parse_seeds(args.library_seeds):
            m = ExperimentManifest("reuse-gain", ["table1:1"], seeds, f"{tmp}/{ls}", episodes=20,
                                   library=LIBRARY, library_seed=ls, source_episodes=args.source_episodes)
            gains = run_experiment(m, library=train_library(m)).results["mean_gains"]
            row = [gains[f"scenario_{i}"] for i in range(2, 8)]
            table.append(row)
            ordered = np.mean(row[3:5]) >= max(row[:3] + row[5:])
            print(f"library_seed={ls} " + " ".join(f"g{i}={g:.1f}" for i, g in zip(range(2, 8), row))
                  + f" ordering_holds={bool(ordered)}", flush=True)
    mean = np.mean(table, axis=0)
    print("mean over libraries " + " ".join(f"g{i}={g:.1f}" for i, g in zip(range(2, 8), mean)))


if __name__ == "__main__":
    main()
