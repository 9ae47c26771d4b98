"""Synthetic benchmark: two clusters in dims 1-4, three in dims 5-6, noise in 7-10."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataMatrix, LabelVector

N_POINTS = 1500
N_BLUE = 600

CENTER_VAR_14 = 25.0
CENTER_VAR_56 = 1.0
POINT_VAR = 0.01
NOISE_VAR = 1.0

# Smallest seed passing ``is_benchmark_seed``; see ``find_benchmark_seed``.
BENCHMARK_SEED = 9
PURITY_K = 30
MAX_SHAPE_MIXING = 0.01


@dataclass(frozen=True)
class SyntheticDataset:
    data: DataMatrix
    labels14: LabelVector
    labels56: LabelVector


def generate_synthetic(seed: int = 42) -> SyntheticDataset:
    """Generate the 1500 x 10 benchmark deterministically from ``seed``.

    Second parameters of the normal distributions are variances. Random draws
    come from ``numpy.random.Generator(PCG64(seed))`` in this fixed order:
    dims 1-4 centers (2 x 4), dims 5-6 centers (3 x 2), per-point offsets
    (n x 6), noise dims (n x 4), row permutation.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    n = N_POINTS
    centers14 = rng.normal(0.0, np.sqrt(CENTER_VAR_14), size=(2, 4))
    centers56 = rng.normal(0.0, np.sqrt(CENTER_VAR_56), size=(3, 2))
    offsets = rng.normal(0.0, np.sqrt(POINT_VAR), size=(n, 6))
    noise = rng.normal(0.0, np.sqrt(NOISE_VAR), size=(n, 4))

    idx = np.arange(n)
    lab14 = (idx >= N_BLUE).astype(np.int64)
    lab56 = idx % 3

    x = np.empty((n, 10))
    x[:, :4] = centers14[lab14] + offsets[:, :4]
    x[:, 4:6] = centers56[lab56] + offsets[:, 4:]
    x[:, 6:] = noise

    perm = rng.permutation(n)
    return SyntheticDataset(
        data=DataMatrix(x[perm]),
        labels14=LabelVector(lab14[perm], names=("blue", "orange")),
        labels56=LabelVector(lab56[perm], names=("circle", "triangle", "square")),
    )


def input_space_mixing(ds: SyntheticDataset, k: int = PURITY_K) -> tuple[float, float]:
    """Fraction of input-space ``k``-NN with another label, for both label sets."""
    from .knn import neighbors_unsplit

    nb = neighbors_unsplit(ds.data, k).indices
    mix14 = float(np.mean(ds.labels14.labels[nb] != ds.labels14.labels[:, None]))
    mix56 = float(np.mean(ds.labels56.labels[nb] != ds.labels56.labels[:, None]))
    return mix14, mix56


def is_benchmark_seed(seed: int) -> bool:
    """True if the input-space neighborhoods are pure in both label sets.

    A draw qualifies when no ``k``-NN crosses the dims 1-4 split and at most
    1% cross the dims 5-6 split; some draws place two dims 5-6 centers so
    close that the three shapes are not separable at all.
    """
    mix14, mix56 = input_space_mixing(generate_synthetic(seed))
    return mix14 == 0.0 and mix56 <= MAX_SHAPE_MIXING


def find_benchmark_seed(max_seed: int = 1000) -> int:
    for seed in range(max_seed):
        if is_benchmark_seed(seed):
            return seed
    raise RuntimeError(f"no qualifying seed below {max_seed}")
