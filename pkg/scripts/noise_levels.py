"""Test accuracy and spike-flip robustness of NSNNs across membrane noise
levels, with the deterministic net as the sigma = 0 reference.

    python3 scripts/noise_levels.py --seeds 3 --out runs/noise_levels.csv
"""
import argparse
import csv
import os

from nsnn.harness.config import ExperimentConfig
from nsnn.harness.tasks import fit_classifier, initial_model, task_data
from nsnn.neuron import NoiseModel
from nsnn.numerics import RngStream
from nsnn.perturb import AttackConfig, attacked_metrics

SIGMAS = (0.0, 0.1, 0.2, 0.3, 0.5, 0.8)
BETAS = (0.0, 0.04, 0.1)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--out", default="runs/noise_levels.csv")
    args = parser.parse_args()
    rows = []
    for seed in range(args.seeds):
        for sigma in SIGMAS:
            cfg = ExperimentConfig(task="train", seed=seed,
                                   noise_family="gaussian" if sigma > 0 else "none",
                                   noise_scale=sigma if sigma > 0 else 0.3)
            train_set, test_set = task_data(cfg)
            net, _ = fit_classifier(cfg, initial_model(cfg), train_set, None, seed)
            for beta in BETAS:
                loss, acc = attacked_metrics(net, test_set.x, test_set.y, AttackConfig("spike_flip", beta=beta),
                                             RngStream(seed, 7))
                rows.append(dict(seed=seed, sigma=sigma, beta=beta, loss=loss, accuracy=acc))
                print(rows[-1], flush=True)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


if __name__ == "__main__":
    main()
