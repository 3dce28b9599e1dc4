"""Synthetic classification logits with controllable difficulty.

Class means are random points on a sphere in logit space, each rotated
toward its own coordinate axis so that the logits are informative of the
true class; instances add isotropic Gaussian noise.  Instances are i.i.d.
draws, hence exchangeable, which is all the conformal guarantee needs.
"""

from __future__ import annotations

import csv

import numpy as np

from entconform import LabeledLogitDataset


def make_task(
    n: int,
    num_classes: int = 10,
    seed: int = 0,
    radius: float = 5.0,
    align: float = 0.7,
    noise: float = 1.0,
) -> LabeledLogitDataset:
    rng = np.random.default_rng(seed)
    k = num_classes
    means = np.zeros((k, k))
    for c in range(k):
        u = rng.standard_normal(k)
        u[c] = 0.0
        u /= np.linalg.norm(u)
        direction = align * np.eye(k)[c] + np.sqrt(1.0 - align**2) * u
        means[c] = radius * direction
    labels = rng.integers(0, k, size=n)
    logits = means[labels] + noise * rng.standard_normal((n, k))
    return LabeledLogitDataset(logits, labels)


def write_dataset_csv(path: str, data: LabeledLogitDataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"z{i}" for i in range(data.num_classes)])
        for label, row in zip(data.labels, data.logits):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])
