"""Cluster the seven scenarios with both market-similarity metrics.

Learning episodes are collected once and shared by the two metrics.
Usage: python scripts/cluster_scenarios.py [--seeds 0-4] [--out runs/clusters]
"""
import argparse

from lobtransfer.cli import parse_seeds
from lobtransfer.experiments import ExperimentManifest, cluster_report, collect_all, run_experiment

SCENARIOS = [f"table1:{i}" for i in range(1, 8)]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", default="0-4")
    ap.add_argument("--out", default="runs/clusters")
    args = ap.parse_args()
    seeds = parse_seeds(args.seeds)
    sf_m = ExperimentManifest("sf-metrics", SCENARIOS, seeds, f"{args.out}/sf")
    rbm_m = ExperimentManifest("rbm-metrics", SCENARIOS, seeds, f"{args.out}/rbm")
    records = collect_all(sf_m)
    matrices = {
        "stylized facts": run_experiment(sf_m, records=records).results["sf_matrix"],
        "rbm": run_experiment(rbm_m, records=records).results["rbm"].normalized,
    }
    for name, matrix in matrices.items():
        report = cluster_report(matrix)
        groups = " | ".join(",".join(c) for c in report["clusters"])
        print(f"{name}: {groups}  within={report['within']:.3f} cross={report['cross']:.3f}")


if __name__ == "__main__":
    main()
