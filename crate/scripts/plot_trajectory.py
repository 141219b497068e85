#!/usr/bin/env python3
"""Render trajectory CSVs written by `qrcd run`.

usage: plot_trajectory.py OUT.png TRAJ.csv [TRAJ.csv ...]

Top panel: residual_sq against iteration (log scale).
Bottom panel: probe prediction (de-normalized when available).
Each file is labelled by its stem.
"""
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    iters, resid, pred = [], [], []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            iters.append(int(row["iter"]))
            resid.append(float(row["residual_sq"]))
            p = row["prediction_denorm"] or row["prediction"]
            pred.append(float(p) if p else float("nan"))
    return iters, resid, pred


def main(argv):
    if len(argv) < 3:
        sys.exit(__doc__)
    out, paths = argv[1], argv[2:]
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(8, 7))
    for p in paths:
        iters, resid, pred = load(p)
        label = Path(p).stem
        top.semilogy(iters, resid, label=label)
        bottom.plot(iters, pred, label=label)
    top.set_ylabel("residual_sq")
    bottom.set_ylabel("prediction")
    bottom.set_xlabel("iteration")
    top.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)


if __name__ == "__main__":
    main(sys.argv)
