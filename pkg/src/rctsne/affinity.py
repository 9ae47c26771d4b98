"""High-dimensional affinities.

Gaussian rows calibrated to a target perplexity, label conditioning of the
rows (same-label entries weighted by ``beta``, others by ``alpha``), and
symmetrization into a joint distribution.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DataMatrix, EmbedConfig, LabelVector, SparseAffinity, ValidationError
from .knn import NeighborSets, neighbors_per_label, neighbors_unsplit

log = logging.getLogger(__name__)

TAU_MIN = 1e-20
TAU_MAX = 1e20
MAX_ITER = 200
TOL = 1e-5
FLOOR = 1e-12


@dataclass(frozen=True)
class BandwidthResult:
    """Bisection outcome; fields are scalars for one row, arrays for many."""

    sigma: np.ndarray
    achieved_perplexity: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray

    @property
    def precision(self):
        return 1.0 / (2.0 * np.square(self.sigma))


@dataclass(frozen=True)
class ConditioningSpec:
    beta: float
    labels: LabelVector
    alpha: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError("beta must be positive")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")


def _entropy_bits(p):
    logp = np.log2(np.where(p > 0, p, 1.0))
    return -np.sum(p * logp, axis=-1)


def _gaussian(d2, mask, tau):
    """Row-normalized exp(-tau * d2) over masked entries, shifted by the row minimum."""
    dmin = np.min(np.where(mask, d2, np.inf), axis=-1, keepdims=True)
    dmin = np.where(np.isfinite(dmin), dmin, 0.0)
    shifted = np.where(mask, d2 - dmin, 0.0)
    e = np.where(mask, np.exp(-tau[..., None] * shifted), 0.0)
    s = e.sum(axis=-1, keepdims=True)
    bad = ~(s[..., 0] > 0) | ~np.isfinite(s[..., 0])
    if np.any(bad):
        uniform = mask / np.maximum(mask.sum(axis=-1, keepdims=True), 1)
        e = np.where(bad[..., None], uniform, e / np.where(s > 0, s, 1.0))
        return e, bad
    return e / s, bad


def _reweight(p, weights):
    """Scale entries by ``weights`` and renormalize each row."""
    r = p * weights
    s = r.sum(axis=-1, keepdims=True)
    bad = ~(s[..., 0] > 0)
    if np.any(bad):
        # underflow: spread uniformly over the entries that carry mass
        support = p > 0
        uniform = support / np.maximum(support.sum(axis=-1, keepdims=True), 1)
        return np.where(bad[..., None], uniform, r / np.where(s > 0, s, 1.0)), bad
    return r / s, bad


def gaussian_row(sq_distances, sigma: float) -> np.ndarray:
    """Normalized Gaussian kernel over one neighbor list."""
    d2 = np.asarray(sq_distances, dtype=np.float64)
    if d2.ndim != 1 or d2.size == 0:
        raise ValidationError("need a nonempty 1-D list of squared distances")
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    tau = np.array([1.0 / (2.0 * sigma * sigma)])
    row, bad = _gaussian(d2[None, :], np.isfinite(d2)[None, :], tau)
    if bad[0]:
        warnings.warn("Gaussian row underflowed; returning uniform row", RuntimeWarning)
    return row[0]


def calibrate_rows(d2, mask, perplexity: float, tol: float = TOL, max_iter: int = MAX_ITER,
                   weights=None):
    """Bisect the Gaussian precision of every row to hit ``perplexity``.

    With ``weights`` given, the entropy is measured on the reweighted row
    (variance estimated on the conditioned similarities). Returns
    ``(BandwidthResult, plain_rows, target_rows)`` where ``target_rows`` is
    the distribution whose perplexity was matched.
    """
    d2 = np.asarray(d2, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    n = d2.shape[0]
    target = np.log2(perplexity)
    lo = np.full(n, np.log(TAU_MIN))
    hi = np.full(n, np.log(TAU_MAX))
    mid = 0.5 * (lo + hi)
    active = mask.any(axis=1)
    converged = np.zeros(n, dtype=bool)
    iters = np.zeros(n, dtype=np.int64)
    log_perp = np.zeros(n)
    tau = np.exp(mid)

    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        p, _ = _gaussian(d2[idx], mask[idx], np.exp(mid[idx]))
        q = p if weights is None else _reweight(p, weights[idx])[0]
        h = _entropy_bits(q)
        err = h - target
        log_perp[idx] = h
        tau[idx] = np.exp(mid[idx])
        iters[idx] = it
        done = np.abs(err) <= tol
        converged[idx[done]] = True
        # perplexity too high -> sharpen (larger precision)
        up = idx[~done & (err > 0)]
        down = idx[~done & (err <= 0)]
        lo[up] = mid[up]
        hi[down] = mid[down]
        mid[idx] = 0.5 * (lo[idx] + hi[idx])
        active[idx[done]] = False

    plain, _ = _gaussian(d2, mask, tau)
    target_rows = plain if weights is None else _reweight(plain, weights)[0]
    result = BandwidthResult(
        sigma=np.sqrt(1.0 / (2.0 * tau)),
        achieved_perplexity=np.exp2(log_perp),
        iterations=iters,
        converged=converged,
    )
    return result, plain, target_rows


def perplexity_search(sq_distances, perplexity: float, tol: float = TOL, max_iter: int = MAX_ITER,
                      mode: str = "on_p", cond=None):
    """Calibrate one row; returns ``(BandwidthResult, row)``.

    ``mode="on_r"`` measures perplexity on the row reweighted by ``cond``
    (one weight per entry) and returns that reweighted row. Non-convergence
    is reported through ``converged`` and never raised.
    """
    d2 = np.asarray(sq_distances, dtype=np.float64)[None, :]
    weights = None
    if mode == "on_r":
        if cond is None:
            raise ValidationError("mode on_r needs conditioning weights")
        weights = np.asarray(cond, dtype=np.float64)[None, :]
    elif mode != "on_p":
        raise ValidationError(f"unknown mode {mode!r}")
    res, _, rows = calibrate_rows(d2, np.isfinite(d2), perplexity, tol, max_iter, weights)
    single = BandwidthResult(
        sigma=float(res.sigma[0]),
        achieved_perplexity=float(res.achieved_perplexity[0]),
        iterations=int(res.iterations[0]),
        converged=bool(res.converged[0]),
    )
    return single, rows[0]


def effective_perplexity(row) -> float:
    """2 ** entropy (bits) of a probability row."""
    return float(np.exp2(_entropy_bits(np.asarray(row, dtype=np.float64))))


def rows_to_affinity(indices, values, n: int) -> SparseAffinity:
    """Padded ``(n, K)`` rows (``-1`` = missing) to a conditional SparseAffinity."""
    mask = indices >= 0
    counts = mask.sum(axis=1)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    cols = indices[mask]
    vals = values[mask]
    # sort columns within each row for a canonical layout
    rows = np.repeat(np.arange(n), counts)
    order = np.lexsort((cols, rows))
    return SparseAffinity(indptr, cols[order], vals[order], n, state="conditional")


def _label_weights(rows, cols, labels, beta, alpha):
    lab = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels)
    same = lab[rows] == lab[cols]
    return np.where(same, beta, alpha)


def condition_rows(aff: SparseAffinity, spec: ConditioningSpec) -> SparseAffinity:
    """Reweight conditional rows by label agreement and renormalize per row.

    Same-label entries get ``beta``, different-label entries ``alpha``.
    ``beta == alpha`` returns the input unchanged.
    """
    if aff.state != "conditional":
        raise ValidationError("condition_rows expects conditional rows")
    if spec.beta == spec.alpha:
        return aff
    rows = aff.rows()
    w = _label_weights(rows, aff.indices, spec.labels, spec.beta, spec.alpha)
    r = aff.values * w
    sums = np.bincount(rows, weights=r, minlength=aff.n)
    bad = ~(sums > 0) & (np.diff(aff.indptr) > 0)
    out = r / np.where(sums > 0, sums, 1.0)[rows]
    if np.any(bad):
        log.warning("conditioning underflowed in %d rows; using uniform rows", int(bad.sum()))
        support = aff.values > 0
        cnt = np.bincount(rows, weights=support.astype(float), minlength=aff.n)
        uniform = support / np.maximum(cnt, 1)[rows]
        out = np.where(bad[rows], uniform, out)
    return SparseAffinity(aff.indptr, aff.indices, out, aff.n, state="conditional")


def symmetrize(aff: SparseAffinity, floor: float = FLOOR) -> SparseAffinity:
    """``(v_ij + v_ji) / 2n`` over the union pattern, floored at ``floor / n``, mass one."""
    if aff.state != "conditional":
        raise ValidationError("symmetrize expects conditional rows")
    n = aff.n
    r = aff.rows()
    c = aff.indices
    keys = np.concatenate([r * n + c, c * n + r])
    vals = np.concatenate([aff.values, aff.values])
    uniq, inv = np.unique(keys, return_inverse=True)
    summed = np.bincount(inv, weights=vals) / (2.0 * n)
    summed = np.maximum(summed, floor / n)
    summed = summed / summed.sum()
    rows = uniq // n
    cols = uniq % n
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))])
    return SparseAffinity(indptr, cols, summed, n, state="symmetric")


@dataclass(frozen=True)
class AffinityDiagnostics:
    bandwidth: BandwidthResult
    effective_perplexity: np.ndarray

    @property
    def convergence_rate(self) -> float:
        return float(np.mean(self.bandwidth.converged))

    @property
    def median_effective_perplexity(self) -> float:
        return float(np.median(self.effective_perplexity))

    def summary(self) -> dict:
        return {
            "convergence_rate": self.convergence_rate,
            "median_effective_perplexity": self.median_effective_perplexity,
            "min_effective_perplexity": float(np.min(self.effective_perplexity)),
            "max_effective_perplexity": float(np.max(self.effective_perplexity)),
        }


def default_neighbors(data, labels, cfg: EmbedConfig) -> NeighborSets:
    if cfg.method == "rctsne":
        return neighbors_per_label(data, labels, cfg.k_half, cfg.k_half)
    return neighbors_unsplit(data, cfg.k_total)


def build_affinities_with_diagnostics(data, labels: Optional[LabelVector], cfg: EmbedConfig,
                                      neighbors: Optional[NeighborSets] = None, tol: float = TOL):
    """Run the affinity pipeline for ``cfg.method``; returns ``(affinity, diagnostics)``.

    ``tol`` is the bisection stopping tolerance on log2-perplexity.
    """
    if isinstance(data, DataMatrix):
        n = data.n
    else:
        n = len(data)
    if neighbors is None:
        neighbors = default_neighbors(data, labels, cfg)
    if neighbors.split:
        # canonical row order, so beta=1 is bitwise the plain pipeline
        neighbors = neighbors.merged()
    ids, d2, mask = neighbors.indices, neighbors.sq_distances, neighbors.mask

    conditioned = cfg.method == "rctsne" and cfg.beta != 1.0
    if conditioned and labels is None:
        raise ValidationError("labels required for method 'rctsne'")

    weights = None
    rows_of = np.broadcast_to(np.arange(n)[:, None], ids.shape)
    if conditioned:
        weights = np.where(mask, _label_weights(rows_of, np.where(mask, ids, 0), labels, cfg.beta, 1.0), 0.0)

    if conditioned and cfg.variance_mode == "on_r":
        bw, _, final_rows = calibrate_rows(d2, mask, cfg.perplexity, tol, weights=weights)
        aff = rows_to_affinity(ids, final_rows, n)
    else:
        bw, plain, _ = calibrate_rows(d2, mask, cfg.perplexity, tol)
        aff = rows_to_affinity(ids, plain, n)
        if conditioned:
            aff = condition_rows(aff, ConditioningSpec(cfg.beta, labels))
    eff = _row_effective_perplexity(aff)
    n_bad = int(np.sum(~bw.converged))
    if n_bad:
        log.info("perplexity bisection did not converge for %d of %d rows", n_bad, n)
    log.debug("median effective perplexity %.3f", float(np.median(eff)))
    return symmetrize(aff), AffinityDiagnostics(bw, eff)


def build_affinities(data, labels: Optional[LabelVector], cfg: EmbedConfig,
                     neighbors: Optional[NeighborSets] = None, tol: float = TOL) -> SparseAffinity:
    return build_affinities_with_diagnostics(data, labels, cfg, neighbors, tol)[0]


def _row_effective_perplexity(aff: SparseAffinity) -> np.ndarray:
    rows = aff.rows()
    v = aff.values
    h = -np.bincount(rows, weights=v * np.log2(np.where(v > 0, v, 1.0)), minlength=aff.n)
    return np.exp2(h)
