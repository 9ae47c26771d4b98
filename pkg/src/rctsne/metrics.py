"""Embedding quality: label-balanced neighborhood preservation and label mixing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import DataMatrix, Embedding, LabelVector, ValidationError
from .knn import VPTree, merge_by_distance


def _values(x):
    if isinstance(x, (DataMatrix,)):
        return x.values
    if isinstance(x, Embedding):
        return x.coords
    return np.asarray(x, dtype=np.float64)


def _labels(x):
    return x.labels if isinstance(x, LabelVector) else np.asarray(x, dtype=np.int64)


def _knn(points, k, query_idx):
    tree = VPTree(points)
    ids, _ = tree.query_many(points[query_idx], k, query_idx)
    return ids


def qnx(hd_sets, ld_sets, k: int) -> float:
    """Mean fraction of shared members between paired size-``k`` neighborhoods."""
    hd = np.asarray(hd_sets)
    ld = np.asarray(ld_sets)
    if hd.shape != ld.shape or hd.ndim != 2 or hd.shape[1] != k:
        raise ValidationError(f"neighborhood arrays must both be (m, {k}); got {hd.shape} and {ld.shape}")
    overlap = sum(len(np.intersect1d(a, b)) for a, b in zip(hd, ld))
    return overlap / (k * len(hd))


def rnx(qnx_value: float, k: int, n: int) -> float:
    """Rescale Q_NX so a random embedding scores 0; negative values are kept."""
    if k >= n - 1:
        raise ValidationError(f"k={k} must be smaller than n-1={n - 1}")
    return ((n - 1) * qnx_value - k) / (n - 1 - k)


def laplacian_score(emb, labels, k: int, indices=None) -> float:
    """Mean fraction of each point's ``k`` embedding neighbors with another label."""
    y = _values(emb)
    lab = _labels(labels)
    n = len(y)
    if k >= n:
        raise ValidationError(f"k={k} must be smaller than n={n}")
    idx = np.arange(n) if indices is None else np.asarray(indices, dtype=np.int64)
    nb = _knn(y, k, idx)
    return float(np.mean(lab[nb] != lab[idx][:, None]))


def laplacian_baseline(labels) -> float:
    """Expected Laplacian score under a random label assignment."""
    lab = _labels(labels)
    n = len(lab)
    counts = np.bincount(lab).astype(np.float64)
    return float(np.sum(counts * (n - counts)) / (n * (n - 1)))


def balanced_hd_neighbors(data, labels, ld_neighbors, indices):
    """High-dimensional neighborhoods matching the label split of ``ld_neighbors``.

    For evaluated point ``i`` with ``s`` same-label points among its
    embedding neighbors, returns its ``s`` nearest same-label and ``k - s``
    nearest differently-labeled points in the input space.
    """
    x = _values(data)
    lab = _labels(labels)
    idx = np.asarray(indices, dtype=np.int64)
    k = ld_neighbors.shape[1]
    n_same = np.sum(lab[ld_neighbors] == lab[idx][:, None], axis=1)
    classes = np.unique(lab)
    trees = {c: VPTree(x[lab == c], ids=np.flatnonzero(lab == c)) for c in classes}
    out = -np.ones((len(idx), k), dtype=np.int64)
    for c in classes:
        rows = np.flatnonzero(lab[idx] == c)
        if rows.size == 0:
            continue
        q = x[idx[rows]]
        same_ids, _ = trees[c].query_many(q, k, idx[rows])
        blocks = [trees[o].query_many(q, k) for o in classes if o != c]
        if blocks:
            diff_ids, _ = merge_by_distance([b[0] for b in blocks], [b[1] for b in blocks], k)
        else:
            diff_ids = -np.ones((rows.size, k), dtype=np.int64)
        for r, sa, di in zip(rows, same_ids, diff_ids):
            s = n_same[r]
            out[r, :s] = sa[:s]
            out[r, s:] = di[: k - s]
    return out


def adjusted_rnx(data, labels, emb, k: int, indices=None) -> float:
    """R_NX(k) with high-dimensional neighborhoods label-balanced to the embedding's."""
    y = _values(emb)
    n = len(y)
    idx = np.arange(n) if indices is None else np.asarray(indices, dtype=np.int64)
    ld = _knn(y, k, idx)
    hd = balanced_hd_neighbors(data, labels, ld, idx)
    return rnx(qnx(hd, ld, k), k, n)


def plain_rnx(data, emb, k: int, indices=None) -> float:
    x = _values(data)
    y = _values(emb)
    n = len(y)
    idx = np.arange(n) if indices is None else np.asarray(indices, dtype=np.int64)
    return rnx(qnx(_knn(x, k, idx), _knn(y, k, idx), k), k, n)


@dataclass(frozen=True)
class EvalReport:
    k: int
    rnx_adjusted: float
    laplacian: dict
    laplacian_baseline: dict
    indices: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "rnx_adjusted": self.rnx_adjusted,
            "laplacian": dict(self.laplacian),
            "baseline": dict(self.laplacian_baseline),
        }


def subsample_indices(n: int, fraction: float, seed: int) -> np.ndarray:
    if not 0 < fraction <= 1:
        raise ValidationError("subsample fraction must lie in (0, 1]")
    if fraction == 1:
        return np.arange(n)
    m = max(1, int(round(fraction * n)))
    rng = np.random.Generator(np.random.PCG64(seed))
    return np.sort(rng.choice(n, size=m, replace=False))


def evaluate(data, emb, label_sets: Mapping[str, LabelVector], k: int = 30,
             subsample_fraction: float = 1.0, seed: int = 0,
             prior: Optional[str] = None) -> EvalReport:
    """Score an embedding on a seeded subset of points.

    Neighbors are always searched among all points. The label-balanced
    R_NX uses the ``prior`` label set (default: the first one).
    """
    y = _values(emb)
    n = len(y)
    if len(_values(data)) != n:
        raise ValidationError(f"row-count mismatch: data has {len(_values(data))}, embedding {n}")
    if not label_sets:
        raise ValidationError("at least one label set is required")
    idx = subsample_indices(n, subsample_fraction, seed)
    prior = prior or next(iter(label_sets))
    lap = {name: laplacian_score(y, lab, k, idx) for name, lab in label_sets.items()}
    base = {name: laplacian_baseline(lab) for name, lab in label_sets.items()}
    score = adjusted_rnx(data, label_sets[prior], y, k, idx)
    return EvalReport(k, float(score), lap, base, idx)
