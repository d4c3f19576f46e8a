"""Pick the initial learning rate from {1e-3, 3e-3, 1e-2} on a held-out
split of the training set, then report the test accuracy of the winner.

    python3 scripts/lr_grid.py --seed 0 --epochs 60
"""
import argparse
import json

import numpy as np

from nsnn.harness.config import ExperimentConfig
from nsnn.harness.tasks import initial_model, task_data
from nsnn.learning import OptimizerState, evaluate, train
from nsnn.numerics import RngStream

GRID = (1e-3, 3e-3, 1e-2)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=60)
    args = parser.parse_args()
    cfg = ExperimentConfig(task="train", seed=args.seed, epochs=args.epochs)
    train_set, test_set = task_data(cfg)
    n_val = len(train_set) // 5
    fit, val = train_set.subset(np.arange(n_val, len(train_set))), train_set.subset(np.arange(n_val))
    scores = {}
    for lr in GRID:
        net, _ = train(initial_model(cfg), fit, OptimizerState("adam", lr), cfg.epochs, RngStream(cfg.seed, 2))
        scores[lr] = evaluate(net, val.x, val.y, "sample", RngStream(cfg.seed, 3))[1]
    # ties go to the grid midpoint
    best = max(GRID, key=lambda lr: (scores[lr], -abs(np.log10(lr) - np.log10(3e-3))))
    net, _ = train(initial_model(cfg), train_set, OptimizerState("adam", best), cfg.epochs, RngStream(cfg.seed, 2))
    test_acc = evaluate(net, test_set.x, test_set.y, "sample", RngStream(cfg.seed, 4))[1]
    print(json.dumps({"validation_accuracy": {repr(k): v for k, v in scores.items()}, "chosen_lr": best,
                      "test_accuracy": test_acc}, indent=1))


if __name__ == "__main__":
    main()
