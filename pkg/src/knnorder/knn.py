"""Exact k-nearest-neighbor search and the majority-vote classification rule.

Neighbors are ordered by (squared Euclidean distance, original index), so
distance ties always resolve to the earlier training point.  Both index
structures compute squared distances with the same coordinate-by-coordinate
accumulation and therefore return identical answers.
"""

from __future__ import annotations

import numpy as np

from .sampling import TrainingSet

BRUTE_FORCE = "brute"
KD_TREE = "kdtree"
STRUCTURES = (BRUTE_FORCE, KD_TREE)

LEAF_SIZE = 16
# cap on query-block x training-size entries held in memory at once
_BLOCK_ENTRIES = 1 << 22


def _sq_dists(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """(m, n) squared distances, summed over coordinates in fixed order."""
    out = np.zeros((queries.shape[0], points.shape[0]))
    for j in range(points.shape[1]):
        diff = queries[:, j, None] - points[None, :, j]
        out += diff * diff
    return out


def _sq_dists_one(z: np.ndarray, points: np.ndarray) -> np.ndarray:
    out = np.zeros(points.shape[0])
    for j in range(points.shape[1]):
        diff = z[j] - points[:, j]
        out += diff * diff
    return out


def _select_rows(d2: np.ndarray, k: int, offset: int = 0) -> np.ndarray:
    """Column indices of the k smallest entries per row, ordered by (value, column)."""
    m, n = d2.shape
    if k >= n:
        return np.argsort(d2, axis=1, kind="stable")[:, :k] + offset
    part = np.argpartition(d2, k - 1, axis=1)[:, :k]
    vals = np.take_along_axis(d2, part, axis=1)
    kth = vals.max(axis=1)
    # rows whose k-th distance is tied with an unselected point need a full stable sort
    tied = np.count_nonzero(d2 <= kth[:, None], axis=1) > k
    order = np.argsort(vals, axis=1)
    idx = np.take_along_axis(part, order, axis=1)
    # equal distances inside the selection must come out in index order
    svals = np.take_along_axis(vals, order, axis=1)
    dup = np.any(svals[:, 1:] == svals[:, :-1], axis=1)
    if np.any(dup):
        idx[dup] = np.take_along_axis(part[dup], np.lexsort((part[dup], vals[dup]), axis=1), axis=1)
    if np.any(tied):
        idx[tied] = np.argsort(d2[tied], axis=1, kind="stable")[:, :k]
    return idx + offset


class NeighborIndex:
    """Immutable nearest-neighbor index over a fixed point set."""

    def __init__(self, points, structure: str = KD_TREE, leaf_size: int = LEAF_SIZE):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise ValueError("points must form a 2-d array (n, d)")
        if pts.shape[0] == 0:
            raise ValueError("cannot build an index over zero points")
        if pts.shape[1] == 0:
            raise ValueError("points must have at least one coordinate")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if structure not in STRUCTURES:
            raise ValueError(f"unknown index structure {structure!r}")
        self.points = np.ascontiguousarray(pts)
        self.points.setflags(write=False)
        self.structure = structure
        self.leaf_size = leaf_size
        if structure == KD_TREE:
            self._build_tree()

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    # kd-tree -----------------------------------------------------------------

    def _build_tree(self):
        # node arrays: split dim (-1 for leaf), split value, children, leaf slice
        self._dim, self._split, self._left, self._right = [], [], [], []
        self._start, self._stop = [], []
        perm = np.arange(len(self))
        order_chunks = []
        cursor = 0

        def new_node():
            for lst, val in ((self._dim, -1), (self._split, 0.0), (self._left, -1),
                             (self._right, -1), (self._start, 0), (self._stop, 0)):
                lst.append(val)
            return len(self._dim) - 1

        def build(ids: np.ndarray) -> int:
            nonlocal cursor
            node = new_node()
            sub = self.points[ids]
            spread = sub.max(axis=0) - sub.min(axis=0)
            dim = int(np.argmax(spread))
            if len(ids) <= self.leaf_size or spread[dim] == 0.0:
                order_chunks.append(ids)
                self._start[node], self._stop[node] = cursor, cursor + len(ids)
                cursor += len(ids)
                return node
            order = np.argsort(sub[:, dim], kind="stable")
            mid = len(ids) // 2
            self._dim[node] = dim
            self._split[node] = float(sub[order[mid], dim])
            left = build(ids[order[:mid]])
            right = build(ids[order[mid:]])
            self._left[node], self._right[node] = left, right
            return node

        build(perm)
        self._leaf_ids = np.concatenate(order_chunks)
        self._leaf_pts = self.points[self._leaf_ids]

    def _tree_query(self, z: np.ndarray, k: int) -> np.ndarray:
        best_d = np.empty(0)
        best_i = np.empty(0, dtype=np.intp)
        stack = [(0, 0.0)]
        dims, splits, lefts, rights = self._dim, self._split, self._left, self._right
        while stack:
            node, bound = stack.pop()
            if best_d.shape[0] == k and bound > best_d[-1]:
                continue
            dim = dims[node]
            if dim < 0:
                lo, hi = self._start[node], self._stop[node]
                cand_d = np.concatenate((best_d, _sq_dists_one(z, self._leaf_pts[lo:hi])))
                cand_i = np.concatenate((best_i, self._leaf_ids[lo:hi]))
                order = np.lexsort((cand_i, cand_d))[:k]
                best_d, best_i = cand_d[order], cand_i[order]
                continue
            diff = z[dim] - splits[node]
            if diff < 0:
                near, far = lefts[node], rights[node]
            else:
                near, far = rights[node], lefts[node]
            stack.append((far, max(bound, diff * diff)))
            stack.append((near, bound))
        return best_i

    # queries -----------------------------------------------------------------

    def _check_k(self, k: int):
        if int(k) != k or not 1 <= k <= len(self):
            raise ValueError(f"k must be an integer in [1, {len(self)}], got {k!r}")

    def _check_query(self, z) -> np.ndarray:
        arr = np.asarray(z, dtype=float).reshape(-1)
        if arr.shape[0] != self.d:
            raise ValueError(f"query has dimension {arr.shape[0]}, index has {self.d}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("query point must be finite")
        return arr

    def query(self, z, k: int) -> np.ndarray:
        """Indices of the k nearest points to z, ordered by (distance, index)."""
        self._check_k(k)
        z = self._check_query(z)
        if self.structure == KD_TREE:
            return self._tree_query(z, int(k))
        return _select_rows(_sq_dists_one(z, self.points)[None, :], int(k))[0]

    def query_batch(self, queries, k: int) -> np.ndarray:
        """(m, k) neighbor indices for m query points."""
        self._check_k(k)
        qs = np.asarray(queries, dtype=float)
        if qs.ndim == 1:
            qs = qs.reshape(-1, self.d)
        if qs.ndim != 2 or qs.shape[1] != self.d:
            raise ValueError(f"queries must have shape (m, {self.d})")
        if self.structure == KD_TREE:
            out = np.empty((qs.shape[0], int(k)), dtype=np.intp)
            for row, z in enumerate(qs):
                out[row] = self._tree_query(z, int(k))
            return out
        return brute_force_neighbors(self.points, qs, int(k))


def brute_force_neighbors(points: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """(m, k) exact neighbor indices by exhaustive search, processed in blocks."""
    n = points.shape[0]
    block = max(1, _BLOCK_ENTRIES // max(n, 1))
    out = np.empty((queries.shape[0], k), dtype=np.intp)
    for s in range(0, queries.shape[0], block):
        out[s:s + block] = _select_rows(_sq_dists(queries[s:s + block], points), k)
    return out


def build_index(points, structure: str = KD_TREE) -> NeighborIndex:
    return NeighborIndex(points, structure)


def k_nearest(index: NeighborIndex, z, k: int) -> np.ndarray:
    return index.query(z, k)


def classify_knn(training: TrainingSet, index: NeighborIndex, z, k: int) -> str:
    """'X' when at least half of the k nearest training points are X, else 'Y'."""
    if len(training) == 0:
        raise ValueError("empty training set")
    if len(index) != len(training):
        raise ValueError("index was not built over this training set")
    nearest = index.query(z, k)
    n_x = int(np.count_nonzero(training.is_x[nearest]))
    return "X" if 2 * n_x >= k else "Y"


def vote_table(points: np.ndarray, is_x: np.ndarray, queries: np.ndarray, ks) -> np.ndarray:
    """(m, len(ks)) boolean table: True where the k-NN rule assigns the query to X.

    Neighbors are found once up to max(ks); every k reuses the same ordering.
    """
    ks = np.asarray(ks, dtype=np.intp)
    kmax = int(ks.max())
    n = points.shape[0]
    if ks.min() < 1 or kmax > n:
        raise ValueError(f"every k must lie in [1, {n}]")
    out = np.empty((queries.shape[0], ks.shape[0]), dtype=bool)
    block = max(1, _BLOCK_ENTRIES // max(n, 1))
    for s in range(0, queries.shape[0], block):
        idx = _select_rows(_sq_dists(queries[s:s + block], points), kmax)
        votes = np.cumsum(is_x[idx], axis=1)[:, ks - 1]
        out[s:s + block] = 2 * votes >= ks
    return out
