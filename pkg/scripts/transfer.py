"""Reuse gain of each past policy on scenario 1, then PRQ against scratch Q-learning.

The library is trained once and shared by both experiments.
Usage: python scripts/transfer.py [--seeds 0-9] [--out runs/transfer]
"""
import argparse

from lobtransfer.cli import parse_seeds
from lobtransfer.experiments import ExperimentManifest, run_experiment, train_library

LIBRARY = [f"table1:{i}" for i in range(2, 8)]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", default="0-9")
    ap.add_argument("--out", default="runs/transfer")
    ap.add_argument("--source-episodes", type=int, default=100)
    args = ap.parse_args()
    seeds = parse_seeds(args.seeds)
    common = dict(scenarios=["table1:1"], seeds=seeds, library=LIBRARY, source_episodes=args.source_episodes)
    reuse_m = ExperimentManifest("reuse-gain", out=f"{args.out}/reuse", **common)
    prq_m = ExperimentManifest("prq", out=f"{args.out}/prq", **common)
    library = train_library(reuse_m)

    gains = run_experiment(reuse_m, library=library).results["mean_gains"]
    for name, g in sorted(gains.items()):
        print(f"reuse gain {name}: {g:.1f}")

    res = run_experiment(prq_m, library=library).results
    print(f"first-10 mean reward: prq {res['prq_first']:.1f}, q-learning {res['q_first']:.1f}")
    for name, p in zip(res["library"], res["p_final"]):
        print(f"final P {name}: {p:.3f}")


if __name__ == "__main__":
    main()
