"""Exact Euclidean nearest neighbors via vantage-point trees.

Ties in distance are broken by the smaller point index, so results are
identical to a brute-force ``(squared distance, index)`` sort.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .core import DataMatrix, LabelVector, ValidationError

LEAF_SIZE = 8
# Relative slack on triangle-inequality pruning; guards against rounding in sqrt.
_PRUNE_SLACK = 1e-9


@numba.njit(cache=True)
def _sqdist(a, b):
    s = 0.0
    for t in range(a.shape[0]):
        diff = a[t] - b[t]
        s += diff * diff
    return s


@numba.njit(cache=True)
def _build(points, leaf_size, seed):
    m = points.shape[0]
    perm = np.arange(m)
    cap = 2 * m + 1
    start = np.zeros(cap, np.int64)
    end = np.zeros(cap, np.int64)
    mu = np.zeros(cap)
    inside = -np.ones(cap, np.int64)
    outside = -np.ones(cap, np.int64)
    leaf = np.zeros(cap, np.bool_)
    n_nodes = 1
    start[0] = 0
    end[0] = m
    stack = np.empty(cap, np.int64)
    top = 0
    stack[0] = 0
    top = 1
    state = np.uint64(seed) * np.uint64(6364136223846793005) + np.uint64(1442695040888963407)
    while top > 0:
        top -= 1
        node = stack[top]
        s = start[node]
        e = end[node]
        if e - s <= leaf_size:
            leaf[node] = True
            continue
        # xorshift64 choice of the vantage point
        state ^= state << np.uint64(13)
        state ^= state >> np.uint64(7)
        state ^= state << np.uint64(17)
        r = s + np.int64(state % np.uint64(e - s))
        tmp = perm[s]
        perm[s] = perm[r]
        perm[r] = tmp
        vp = points[perm[s]]
        cnt = e - s - 1
        dist = np.empty(cnt)
        for p in range(cnt):
            dist[p] = np.sqrt(_sqdist(points[perm[s + 1 + p]], vp))
        order = np.argsort(dist, kind="mergesort")
        moved = perm[s + 1:e].copy()
        for p in range(cnt):
            perm[s + 1 + p] = moved[order[p]]
        half = cnt // 2
        mu[node] = dist[order[half]]
        mid = s + 1 + half
        if mid > s + 1:
            inside[node] = n_nodes
            start[n_nodes] = s + 1
            end[n_nodes] = mid
            stack[top] = n_nodes
            top += 1
            n_nodes += 1
        outside[node] = n_nodes
        start[n_nodes] = mid
        end[n_nodes] = e
        stack[top] = n_nodes
        top += 1
        n_nodes += 1
    return (perm, start[:n_nodes].copy(), end[:n_nodes].copy(), mu[:n_nodes].copy(),
            inside[:n_nodes].copy(), outside[:n_nodes].copy(), leaf[:n_nodes].copy())


@numba.njit(cache=True)
def _offer(d2, gid, best_d, best_i, count, k):
    """Insert (d2, gid) into the sorted candidate list if it qualifies."""
    if count == k:
        wd = best_d[k - 1]
        if d2 > wd or (d2 == wd and gid > best_i[k - 1]):
            return count
        pos = k - 1
    else:
        pos = count
        count += 1
    while pos > 0 and (best_d[pos - 1] > d2 or (best_d[pos - 1] == d2 and best_i[pos - 1] > gid)):
        best_d[pos] = best_d[pos - 1]
        best_i[pos] = best_i[pos - 1]
        pos -= 1
    best_d[pos] = d2
    best_i[pos] = gid
    return count


@numba.njit(cache=True)
def _query_one(points, ids, perm, start, end, mu, inside, outside, leaf,
               x, k, exclude, best_d, best_i):
    for t in range(k):
        best_d[t] = np.inf
        best_i[t] = -1
    if k == 0:
        return
    count = 0
    n_nodes = start.shape[0]
    stack_node = np.empty(n_nodes + 1, np.int64)
    stack_lb = np.empty(n_nodes + 1)
    stack_node[0] = 0
    stack_lb[0] = 0.0
    top = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        if count == k:
            tau = np.sqrt(best_d[k - 1])
            if stack_lb[top] > tau * (1.0 + _PRUNE_SLACK):
                continue
        s = start[node]
        e = end[node]
        if leaf[node]:
            for p in range(s, e):
                j = perm[p]
                gid = ids[j]
                if gid == exclude:
                    continue
                count = _offer(_sqdist(points[j], x), gid, best_d, best_i, count, k)
            continue
        j = perm[s]
        d2 = _sqdist(points[j], x)
        if ids[j] != exclude:
            count = _offer(d2, ids[j], best_d, best_i, count, k)
        dq = np.sqrt(d2)
        m = mu[node]
        lb_in = dq - m if dq > m else 0.0
        lb_out = m - dq if m > dq else 0.0
        # push the far side first so the near side is searched first
        if dq <= m:
            if outside[node] >= 0:
                stack_node[top] = outside[node]
                stack_lb[top] = lb_out
                top += 1
            if inside[node] >= 0:
                stack_node[top] = inside[node]
                stack_lb[top] = lb_in
                top += 1
        else:
            if inside[node] >= 0:
                stack_node[top] = inside[node]
                stack_lb[top] = lb_in
                top += 1
            if outside[node] >= 0:
                stack_node[top] = outside[node]
                stack_lb[top] = lb_out
                top += 1


@numba.njit(cache=True, parallel=True)
def _query_many(points, ids, perm, start, end, mu, inside, outside, leaf, queries, k, exclude):
    nq = queries.shape[0]
    out_d = np.empty((nq, k))
    out_i = np.empty((nq, k), np.int64)
    for q in numba.prange(nq):
        _query_one(points, ids, perm, start, end, mu, inside, outside, leaf,
                   queries[q], k, exclude[q], out_d[q], out_i[q])
    return out_i, out_d


class VPTree:
    """Vantage-point tree over a set of points.

    ``ids`` gives the global index reported for each row of ``points``
    (defaults to ``arange(len(points))``).
    """

    def __init__(self, points, ids=None, leaf_size: int = LEAF_SIZE, seed: int = 0):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValidationError("VPTree needs a nonempty 2-D point array")
        self.points = points
        self.ids = (np.arange(len(points), dtype=np.int64) if ids is None
                    else np.ascontiguousarray(ids, dtype=np.int64))
        if self.ids.shape != (len(points),):
            raise ValidationError("ids must have one entry per point")
        (self.perm, self.start, self.end, self.mu,
         self.inside, self.outside, self.leaf) = _build(points, max(int(leaf_size), 1), seed)

    def __len__(self):
        return self.points.shape[0]

    def _arrays(self):
        return (self.points, self.ids, self.perm, self.start, self.end, self.mu,
                self.inside, self.outside, self.leaf)

    def query_many(self, queries, k: int, exclude=None):
        """Return ``(ids, sq_distances)`` of shape ``(len(queries), k)``.

        Rows with fewer than ``k`` candidates are padded with ``-1`` / ``inf``.
        ``exclude`` holds one global id per query to skip (``-1`` for none).
        """
        queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
        if exclude is None:
            exclude = -np.ones(len(queries), dtype=np.int64)
        exclude = np.ascontiguousarray(exclude, dtype=np.int64)
        return _query_many(*self._arrays(), queries, int(k), exclude)

    def query(self, x, k: int, exclude: int = -1):
        ids, d2 = self.query_many(np.asarray(x, dtype=np.float64)[None, :], k, [exclude])
        keep = ids[0] >= 0
        return ids[0][keep], d2[0][keep]


@dataclass(frozen=True)
class NeighborSets:
    """Padded per-point neighbor lists.

    In split mode (``k_same`` set) columns ``[:k_same]`` hold same-label
    neighbors and the rest differently-labeled ones, each ascending.
    Missing entries are ``-1`` with distance ``inf``.
    """

    indices: np.ndarray
    sq_distances: np.ndarray
    k_same: Optional[int] = None

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def split(self) -> bool:
        return self.k_same is not None

    @property
    def mask(self) -> np.ndarray:
        return self.indices >= 0

    def row(self, i: int):
        keep = self.indices[i] >= 0
        return self.indices[i][keep], self.sq_distances[i][keep]

    def same(self):
        return self.indices[:, : self.k_same], self.sq_distances[:, : self.k_same]

    def diff(self):
        return self.indices[:, self.k_same:], self.sq_distances[:, self.k_same:]

    def merged(self) -> "NeighborSets":
        """Unsplit view with every row sorted by (distance, index)."""
        ids = self.indices.copy()
        d2 = self.sq_distances
        order = np.lexsort((np.where(ids < 0, np.iinfo(np.int64).max, ids), d2), axis=-1)
        return NeighborSets(np.take_along_axis(ids, order, 1),
                            np.take_along_axis(d2, order, 1))


def neighbors_unsplit(data, k: int) -> NeighborSets:
    """Exact ``k`` nearest other points for every row."""
    x = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    n = len(x)
    if k >= n:
        raise ValidationError(f"k={k} must be smaller than n={n}")
    tree = VPTree(x)
    ids, d2 = tree.query_many(x, k, np.arange(n))
    return NeighborSets(ids, d2)


def merge_by_distance(id_blocks, d2_blocks, k: int):
    """Merge per-row candidate blocks and keep the ``k`` nearest."""
    ids = np.concatenate(id_blocks, axis=1)
    d2 = np.concatenate(d2_blocks, axis=1)
    order = np.lexsort((np.where(ids < 0, np.iinfo(np.int64).max, ids), d2), axis=-1)[:, :k]
    return np.take_along_axis(ids, order, 1), np.take_along_axis(d2, order, 1)


def neighbors_per_label(data, labels, k_same: int, k_diff: int) -> NeighborSets:
    """Same-label and different-label exact neighbors, one tree per class.

    Rows whose class is too small (or whose complement is too small) get
    fewer entries; no budget moves between the two lists.
    """
    x = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    lab = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels, dtype=np.int64)
    n = len(x)
    classes = np.unique(lab)
    members = {c: np.flatnonzero(lab == c) for c in classes}
    trees = {c: VPTree(x[m], ids=m) for c, m in members.items()}

    ids = -np.ones((n, k_same + k_diff), dtype=np.int64)
    d2 = np.full((n, k_same + k_diff), np.inf)
    for c, m in members.items():
        q = x[m]
        if k_same > 0:
            si, sd = trees[c].query_many(q, k_same, m)
            ids[m, :k_same] = si
            d2[m, :k_same] = sd
        if k_diff > 0 and len(classes) > 1:
            blocks = [trees[o].query_many(q, k_diff) for o in classes if o != c]
            di, dd = merge_by_distance([b[0] for b in blocks], [b[1] for b in blocks], k_diff)
            ids[m, k_same:] = di
            d2[m, k_same:] = dd
    return NeighborSets(ids, d2, k_same=k_same)
