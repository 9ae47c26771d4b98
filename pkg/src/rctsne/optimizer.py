"""Gradient descent on the embedding.

Attraction is summed over the stored affinity pairs. Repulsion uses a
Barnes-Hut quadtree (2-D) or an exact double loop when ``theta == 0``.
Original ct-SNE reweights repulsion by label: with pair weights
``c = 1`` (same label) and ``c = beta`` (different label),

    c_ij = beta + (1 - beta) * same_ij

so the label-weighted sums are ``beta * (all pairs) + (1 - beta) * (same-label
pairs)``, the latter computed with one tree per class.
"""

from __future__ import annotations

import logging
from typing import Optional

import numba
import numpy as np

from .core import EmbedConfig, Embedding, LabelVector, SparseAffinity

log = logging.getLogger(__name__)

MAX_DEPTH = 48
INIT_STD = 1e-4
MIN_GAIN = 0.01


class DivergenceError(RuntimeError):
    pass


# --- quadtree ---------------------------------------------------------------

# float columns: center x, center y, half width, com x, com y, count
# int columns: start, end, child0..child3 (-1 = none)

@numba.njit(cache=True)
def _grow(fl, it):
    cap = fl.shape[0] * 2
    nf = np.empty((cap, fl.shape[1]))
    ni = -np.ones((cap, it.shape[1]), np.int64)
    nf[: fl.shape[0]] = fl
    ni[: it.shape[0]] = it
    return nf, ni


@numba.njit(cache=True)
def _build_quadtree(y):
    n = y.shape[0]
    perm = np.arange(n)
    cap = max(4 * n, 16)
    fl = np.zeros((cap, 6))
    it = -np.ones((cap, 6), np.int64)
    depth = np.zeros(cap, np.int64)
    xmin = y[:, 0].min()
    xmax = y[:, 0].max()
    ymin = y[:, 1].min()
    ymax = y[:, 1].max()
    hw = 0.5 * max(xmax - xmin, ymax - ymin)
    hw = hw * (1.0 + 1e-6) + 1e-12
    fl[0, 0] = 0.5 * (xmin + xmax)
    fl[0, 1] = 0.5 * (ymin + ymax)
    fl[0, 2] = hw
    it[0, 0] = 0
    it[0, 1] = n
    n_nodes = 1
    stack = [0]
    buf = np.empty(n, np.int64)
    quad = np.empty(n, np.int64)
    while len(stack) > 0:
        node = stack.pop()
        s = it[node, 0]
        e = it[node, 1]
        cnt = e - s
        sx = 0.0
        sy = 0.0
        for p in range(s, e):
            sx += y[perm[p], 0]
            sy += y[perm[p], 1]
        fl[node, 3] = sx / cnt
        fl[node, 4] = sy / cnt
        fl[node, 5] = cnt
        if cnt <= 1 or depth[node] >= MAX_DEPTH:
            continue
        cx = fl[node, 0]
        cy = fl[node, 1]
        # all points coincide: keep as a multi-point leaf
        same = True
        for p in range(s + 1, e):
            if y[perm[p], 0] != y[perm[s], 0] or y[perm[p], 1] != y[perm[s], 1]:
                same = False
                break
        if same:
            continue
        counts = np.zeros(4, np.int64)
        for p in range(s, e):
            j = perm[p]
            qd = (1 if y[j, 0] > cx else 0) + (2 if y[j, 1] > cy else 0)
            quad[p] = qd
            counts[qd] += 1
        offs = np.zeros(5, np.int64)
        for qd in range(4):
            offs[qd + 1] = offs[qd] + counts[qd]
        fill = offs[:4].copy()
        for p in range(s, e):
            qd = quad[p]
            buf[s + fill[qd]] = perm[p]
            fill[qd] += 1
        for p in range(s, e):
            perm[p] = buf[p]
        h = fl[node, 2] * 0.5
        for qd in range(4):
            if counts[qd] == 0:
                continue
            if n_nodes >= fl.shape[0]:
                fl, it = _grow(fl, it)
                nd = np.zeros(fl.shape[0], np.int64)
                nd[: depth.shape[0]] = depth
                depth = nd
            c = n_nodes
            n_nodes += 1
            fl[c, 0] = cx + (h if qd & 1 else -h)
            fl[c, 1] = cy + (h if qd & 2 else -h)
            fl[c, 2] = h
            it[c, 0] = s + offs[qd]
            it[c, 1] = s + offs[qd + 1]
            depth[c] = depth[node] + 1
            it[node, 2 + qd] = c
            stack.append(c)
    return perm, fl[:n_nodes].copy(), it[:n_nodes].copy()


@numba.njit(cache=True)
def _bh_point(yi, self_id, y, ids, perm, fl, it, theta2, out):
    """Sum w^2 (yi - yj) into ``out`` and return sum of w, w = 1/(1 + |yi - yj|^2)."""
    out[0] = 0.0
    out[1] = 0.0
    z = 0.0
    stack = np.empty(4 * MAX_DEPTH + 8, np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        leaf = it[node, 2] < 0 and it[node, 3] < 0 and it[node, 4] < 0 and it[node, 5] < 0
        if leaf:
            for p in range(it[node, 0], it[node, 1]):
                j = perm[p]
                if ids[j] == self_id:
                    continue
                dx = yi[0] - y[j, 0]
                dy = yi[1] - y[j, 1]
                w = 1.0 / (1.0 + dx * dx + dy * dy)
                z += w
                out[0] += w * w * dx
                out[1] += w * w * dy
            continue
        dx = yi[0] - fl[node, 3]
        dy = yi[1] - fl[node, 4]
        d2 = dx * dx + dy * dy
        hw = fl[node, 2]
        inside = abs(yi[0] - fl[node, 0]) <= hw and abs(yi[1] - fl[node, 1]) <= hw
        side2 = 4.0 * hw * hw
        if not inside and side2 <= theta2 * d2:
            cnt = fl[node, 5]
            w = 1.0 / (1.0 + d2)
            z += cnt * w
            out[0] += cnt * w * w * dx
            out[1] += cnt * w * w * dy
            continue
        for qd in range(4):
            c = it[node, 2 + qd]
            if c >= 0:
                stack[top] = c
                top += 1
    return z


@numba.njit(cache=True, parallel=True)
def _bh_all(queries, query_ids, y, ids, perm, fl, it, theta2):
    m = queries.shape[0]
    f = np.zeros((m, 2))
    z = np.zeros(m)
    for i in numba.prange(m):
        z[i] = _bh_point(queries[i], query_ids[i], y, ids, perm, fl, it, theta2, f[i])
    return f, z


@numba.njit(cache=True, parallel=True)
def _exact_all(queries, query_ids, y, ids):
    m, d = queries.shape
    f = np.zeros((m, d))
    z = np.zeros(m)
    for i in numba.prange(m):
        zi = 0.0
        for j in range(y.shape[0]):
            if ids[j] == query_ids[i]:
                continue
            d2 = 0.0
            for t in range(d):
                diff = queries[i, t] - y[j, t]
                d2 += diff * diff
            w = 1.0 / (1.0 + d2)
            zi += w
            for t in range(d):
                f[i, t] += w * w * (queries[i, t] - y[j, t])
        z[i] = zi
    return f, z


class QuadTree:
    """Barnes-Hut quadtree over 2-D points.

    ``ids`` are the global indices of the rows of ``coords``; a query with
    a matching id skips that point.
    """

    def __init__(self, coords, ids=None):
        y = np.ascontiguousarray(coords, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != 2 or len(y) == 0:
            raise ValueError("QuadTree needs a nonempty (n, 2) array")
        self.coords = y
        self.ids = np.arange(len(y), dtype=np.int64) if ids is None else np.ascontiguousarray(ids, dtype=np.int64)
        self.perm, self._fl, self._it = _build_quadtree(y)

    @property
    def centers(self):
        return self._fl[:, :2]

    @property
    def half_widths(self):
        return self._fl[:, 2]

    @property
    def centers_of_mass(self):
        return self._fl[:, 3:5]

    @property
    def counts(self):
        return self._fl[:, 5].astype(np.int64)

    @property
    def children(self):
        return self._it[:, 2:]

    @property
    def ranges(self):
        return self._it[:, :2]

    def is_leaf(self):
        return np.all(self.children < 0, axis=1)

    def repulsion(self, queries, query_ids, theta: float):
        """Unnormalized repulsion sums and per-query kernel sums."""
        q = np.ascontiguousarray(queries, dtype=np.float64)
        qi = np.ascontiguousarray(query_ids, dtype=np.int64)
        return _bh_all(q, qi, self.coords, self.ids, self.perm, self._fl, self._it, float(theta) ** 2)


def _repulsion_sums(y, theta, members=None):
    """Unnormalized repulsion and kernel sums, optionally restricted to a point subset."""
    n = len(y)
    ids = np.arange(n, dtype=np.int64)
    if members is not None:
        sub = y[members]
        sub_ids = ids[members]
    else:
        sub, sub_ids = y, ids
    if theta == 0 or y.shape[1] != 2:
        return _exact_all(np.ascontiguousarray(sub), sub_ids, np.ascontiguousarray(sub), sub_ids)
    tree = QuadTree(sub, sub_ids)
    return tree.repulsion(sub, sub_ids, theta)


def bh_repulsion(coords, theta: float):
    """Normalized repulsive forces ``sum_j w_ij^2 (y_i - y_j) / Z`` and ``Z``."""
    y = np.ascontiguousarray(coords, dtype=np.float64)
    f, z = _repulsion_sums(y, theta)
    zsum = float(np.sum(z))
    return f / zsum, zsum


def _same_label_sums(y, labels, theta):
    lab = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels)
    f = np.zeros_like(y)
    z = np.zeros(len(y))
    for c in np.unique(lab):
        m = np.flatnonzero(lab == c)
        if len(m) < 2:
            continue
        fc, zc = _repulsion_sums(y, theta, m)
        f[m] = fc
        z[m] = zc
    return f, z


def ctsne_repulsion(coords, labels, beta: float, theta: float):
    """Label-weighted repulsion: same-label pairs weight 1, others ``beta``.

    Returns normalized forces and ``U = sum_{k != l} c_kl w_kl``.
    """
    if beta == 1.0:
        return bh_repulsion(coords, theta)
    y = np.ascontiguousarray(coords, dtype=np.float64)
    fa, za = _repulsion_sums(y, theta)
    fs, zs = _same_label_sums(y, labels, theta)
    u = beta * float(np.sum(za)) + (1.0 - beta) * float(np.sum(zs))
    return (beta * fa + (1.0 - beta) * fs) / u, u


# --- attraction and loss ------------------------------------------------------

@numba.njit(cache=True, parallel=True)
def _attractive(indptr, indices, values, y):
    n, d = y.shape
    f = np.zeros((n, d))
    for i in numba.prange(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            d2 = 0.0
            for t in range(d):
                diff = y[i, t] - y[j, t]
                d2 += diff * diff
            w = values[p] / (1.0 + d2)
            for t in range(d):
                f[i, t] += w * (y[i, t] - y[j, t])
    return f


def attractive_forces(aff: SparseAffinity, coords) -> np.ndarray:
    """``F_i = sum_j a_ij (1 + |y_i - y_j|^2)^-1 (y_i - y_j)`` over stored pairs."""
    y = np.ascontiguousarray(coords, dtype=np.float64)
    return _attractive(aff.indptr, aff.indices, aff.values, y)


@numba.njit(cache=True, parallel=True)
def _kernel_sums(y, lab):
    n, d = y.shape
    z = np.zeros(n)
    zs = np.zeros(n)
    for i in numba.prange(n):
        a = 0.0
        b = 0.0
        for j in range(n):
            if j == i:
                continue
            d2 = 0.0
            for t in range(d):
                diff = y[i, t] - y[j, t]
                d2 += diff * diff
            w = 1.0 / (1.0 + d2)
            a += w
            if lab[i] == lab[j]:
                b += w
        z[i] = a
        zs[i] = b
    return z.sum(), zs.sum()


def kl_loss(aff: SparseAffinity, coords, mode: str = "tsne", labels=None, beta: float = 1.0) -> float:
    """Exact KL divergence between the affinities and the embedding similarities.

    ``mode="ctsne"`` compares against the label-weighted similarities
    ``c_ij w_ij / sum c_kl w_kl``.
    """
    y = np.ascontiguousarray(coords, dtype=np.float64)
    n = len(y)
    rows = aff.rows()
    cols = aff.indices
    p = aff.values
    d2 = np.sum((y[rows] - y[cols]) ** 2, axis=1)
    log_w = -np.log1p(d2)
    if mode == "ctsne" and beta != 1.0:
        lab = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels, dtype=np.int64)
        z, zs = _kernel_sums(y, np.ascontiguousarray(lab, dtype=np.int64))
        norm = beta * z + (1.0 - beta) * zs
        log_c = np.where(lab[rows] == lab[cols], 0.0, np.log(beta))
    else:
        z, _ = _kernel_sums(y, np.zeros(n, dtype=np.int64))
        norm = z
        log_c = 0.0
    pos = p > 0
    plogp = np.sum(p[pos] * np.log(p[pos]))
    return float(plogp - np.sum(p * (log_c + log_w)) + np.sum(p) * np.log(norm))


def kl_gradient(aff: SparseAffinity, coords, theta: float = 0.5, mode: str = "tsne",
                labels=None, beta: float = 1.0, exaggeration: float = 1.0) -> np.ndarray:
    """``4 * (exaggeration * attraction - repulsion)``."""
    attr = attractive_forces(aff, coords)
    if mode == "ctsne":
        rep, _ = ctsne_repulsion(coords, labels, beta, theta)
    else:
        rep, _ = bh_repulsion(coords, theta)
    return 4.0 * (exaggeration * attr - rep)


def run_embedding(aff: SparseAffinity, labels: Optional[LabelVector], cfg: EmbedConfig,
                  init=None, callback=None) -> Embedding:
    """Optimize an embedding of ``aff`` with momentum, gains and early exaggeration.

    The ctsne method uses the label-weighted repulsion; tsne and rctsne use
    plain repulsion. ``loss_trace`` holds ``(iteration, KL)`` pairs.
    """
    n = aff.n
    mode = "ctsne" if cfg.method == "ctsne" else "tsne"
    if mode == "ctsne" and labels is None:
        raise ValueError("ctsne optimization needs labels")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if init is None:
        y = rng.normal(0.0, INIT_STD, size=(n, cfg.out_dim))
    else:
        y = np.array(init, dtype=np.float64)
    lr = cfg.resolved_learning_rate(n)
    vel = np.zeros_like(y)
    gains = np.ones_like(y)
    trace = []

    def record(step):
        trace.append((step, kl_loss(aff, y, mode, labels, cfg.beta)))

    record(0)
    for step in range(cfg.epochs):
        exag = cfg.exaggeration if step < cfg.exaggeration_iters else 1.0
        mom = cfg.momentum if step < cfg.momentum_switch_iter else cfg.final_momentum
        grad = kl_gradient(aff, y, cfg.theta, mode, labels, cfg.beta, exag)
        flip = np.sign(grad) != np.sign(vel)
        gains = np.where(flip, gains + 0.2, gains * 0.8)
        np.maximum(gains, MIN_GAIN, out=gains)
        with np.errstate(over="ignore", invalid="ignore"):
            vel = mom * vel - lr * gains * grad
            y = y + vel
            y -= y.mean(axis=0)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite coordinates at iteration {step + 1}")
        if (step + 1) % cfg.log_every == 0 or step + 1 == cfg.epochs:
            record(step + 1)
            log.debug("iteration %d: KL %.6f", step + 1, trace[-1][1])
        if callback is not None:
            callback(step, y)
    return Embedding(y, loss_trace=tuple(trace), seed=cfg.seed)
