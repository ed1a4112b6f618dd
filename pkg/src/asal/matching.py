"""Exact nearest-neighbour retrieval over compressed pool features.

A bucketed k-d tree (median split at the widest dimension, numpy leaf
scans) answers exact nearest / k-nearest queries with backtracking. Already
labeled pool samples are skipped *inside* the search through a QueryMask,
so the tree never needs rebuilding between learning cycles. Ties in
distance break toward the lowest pool index.
"""

from __future__ import annotations

import numpy as np

from .features import FeatureSet
from .numerics import Matrix, as_matrix


class PoolExhaustedError(RuntimeError):
    """Not enough unmasked pool samples to satisfy the query."""


class QueryMask:
    """Boolean mask over pool indices; True marks already-labeled samples."""

    def __init__(self, size: int):
        self.labeled = np.zeros(size, dtype=bool)

    @classmethod
    def from_array(cls, labeled: np.ndarray) -> "QueryMask":
        m = cls.__new__(cls)
        m.labeled = np.asarray(labeled, dtype=bool).copy()
        return m

    def __len__(self) -> int:
        return self.labeled.size

    def mark(self, index: int) -> None:
        self.labeled[index] = True

    def unmasked_count(self) -> int:
        return int((~self.labeled).sum())

    def copy(self) -> "QueryMask":
        return QueryMask.from_array(self.labeled)


class KdTree:
    """Static exact index over FeatureSet rows.

    Interior nodes store a split plane; leaves hold up to `leaf_size` points
    kept contiguous in memory for vectorized scans. Each node splits at the
    median of its widest dimension: revisiting informative dimensions keeps
    cells shrinking on data that concentrates near a low-dim manifold, where
    a fixed dimension rotation stops pruning once the informative axes are
    spent. Backtracking carries a lower bound accumulated per axis from the
    split-plane offsets along the path, so whole subtrees prune in one check.
    """

    SPREAD_SAMPLE = 4096  # rows used to estimate per-dimension spread

    def __init__(self, points: Matrix, leaf_size: int = 256):
        points = as_matrix(points)
        if points.shape[0] < 1:
            raise ValueError("cannot build a tree over an empty point set")
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.dim = points.shape[1]
        self.leaf_size = leaf_size
        self.indices = np.arange(points.shape[0], dtype=np.int64)

        split_dim: list[int] = []
        split_val: list[float] = []
        left: list[int] = []
        right: list[int] = []
        lo_arr: list[int] = []
        hi_arr: list[int] = []

        def new_node() -> int:
            split_dim.append(-1)
            split_val.append(0.0)
            left.append(-1)
            right.append(-1)
            lo_arr.append(0)
            hi_arr.append(0)
            return len(split_dim) - 1

        root = new_node()
        stack = [(root, 0, points.shape[0])]
        while stack:
            node, lo, hi = stack.pop()
            lo_arr[node], hi_arr[node] = lo, hi
            if hi - lo <= leaf_size:
                continue
            seg = self.indices[lo:hi]
            probe = seg if seg.size <= self.SPREAD_SAMPLE else seg[::seg.size // self.SPREAD_SAMPLE + 1]
            block = points[probe]
            axis = int(np.argmax(block.max(axis=0) - block.min(axis=0)))
            mid = (hi - lo) // 2
            part = np.argpartition(points[seg, axis], mid)
            self.indices[lo:hi] = seg[part]
            split_dim[node] = axis
            split_val[node] = float(points[self.indices[lo + mid], axis])
            lchild, rchild = new_node(), new_node()
            left[node], right[node] = lchild, rchild
            stack.append((lchild, lo, lo + mid))
            stack.append((rchild, lo + mid, hi))

        self.split_dim = split_dim
        self.split_val = split_val
        self.left = left
        self.right = right
        self.lo = lo_arr
        self.hi = hi_arr
        # leaf points stored in tree order: leaf scans slice contiguously,
        # with cached squared norms so each scan is one matvec + axpy
        self.leaf_points = np.ascontiguousarray(points[self.indices])
        self.leaf_norm2 = np.einsum("ij,ij->i", self.leaf_points, self.leaf_points)

    def __len__(self) -> int:
        return self.indices.size

    def traverse_indices(self) -> np.ndarray:
        """All pool indices in tree (in-order leaf) order; each appears once."""
        out = []
        stack = [0]
        while stack:
            node = stack.pop()
            if self.left[node] < 0:
                out.append(self.indices[self.lo[node]:self.hi[node]])
            else:
                stack.append(self.right[node])
                stack.append(self.left[node])
        return np.concatenate(out)

    def nearest(self, q, mask: QueryMask | None = None,
                return_stats: bool = False):
        """Exact argmin of Euclidean distance over unmasked points."""
        q = np.asarray(q, dtype=np.float64).ravel()
        if q.size != self.dim:
            raise ValueError(f"query width {q.size} != tree width {self.dim}")
        labeled = mask.labeled if mask is not None else None
        pts, idxs, norm2 = self.leaf_points, self.indices, self.leaf_norm2
        split_dim, split_val = self.split_dim, self.split_val
        left, right, los, his = self.left, self.right, self.lo, self.hi
        qnorm2 = float(q @ q)

        best_d2 = np.inf
        best_idx = -1
        visits = 0
        # squared offset of the current cell from q, tracked per axis; the
        # running bound replaces (never adds to) an axis entry, which stays
        # valid when the same axis splits repeatedly along a path
        off = [0.0] * self.dim

        def visit(node, bound):
            nonlocal best_d2, best_idx, visits
            visits += 1
            l = left[node]
            if l < 0:
                lo, hi = los[node], his[node]
                ids = idxs[lo:hi]
                d2 = norm2[lo:hi] - 2.0 * (pts[lo:hi] @ q) + qnorm2
                if labeled is not None:
                    keep = ~labeled[ids]
                    if not keep.any():
                        return
                    d2, ids = d2[keep], ids[keep]
                j = int(np.argmin(d2))
                dmin = d2[j]
                if dmin < best_d2:
                    best_d2 = dmin
                    cand = ids[d2 == dmin]
                    best_idx = int(cand.min()) if cand.size > 1 else int(ids[j])
                elif dmin == best_d2 and best_idx >= 0:
                    cand = int(ids[d2 == dmin].min())
                    if cand < best_idx:
                        best_idx = cand
                return
            axis = split_dim[node]
            diff = q[axis] - split_val[node]
            near, far = (l, right[node]) if diff < 0 else (right[node], l)
            visit(near, bound)
            old = off[axis]
            far_bound = bound - old + diff * diff
            if far_bound <= best_d2:
                off[axis] = diff * diff
                visit(far, far_bound)
                off[axis] = old

        visit(0, 0.0)
        if best_idx < 0:
            raise PoolExhaustedError("all pool samples are masked")
        if return_stats:
            return best_idx, {"visits": visits,
                              "distance": float(np.sqrt(max(best_d2, 0.0)))}
        return best_idx

    def k_nearest(self, q, k: int, mask: QueryMask | None = None,
                  return_stats: bool = False):
        """Exact k nearest unmasked indices, ascending (distance, index)."""
        q = np.asarray(q, dtype=np.float64).ravel()
        if q.size != self.dim:
            raise ValueError(f"query width {q.size} != tree width {self.dim}")
        if k < 1:
            raise ValueError("k must be >= 1")
        available = (len(self) if mask is None else mask.unmasked_count())
        if available < k:
            raise PoolExhaustedError(f"need {k} unmasked samples, have {available}")
        labeled = mask.labeled if mask is not None else None
        pts, idxs, norm2 = self.leaf_points, self.indices, self.leaf_norm2
        split_dim, split_val = self.split_dim, self.split_val
        left, right, los, his = self.left, self.right, self.lo, self.hi
        qnorm2 = float(q @ q)

        # best-k kept sorted by (distance^2, index); bound = k-th best distance
        best_d2 = np.full(k, np.inf)
        best_idx = np.full(k, np.iinfo(np.int64).max, dtype=np.int64)
        visits = 0
        off = [0.0] * self.dim

        def visit(node, bound):
            nonlocal best_d2, best_idx, visits
            visits += 1
            l = left[node]
            if l < 0:
                lo, hi = los[node], his[node]
                ids = idxs[lo:hi]
                d2 = norm2[lo:hi] - 2.0 * (pts[lo:hi] @ q) + qnorm2
                if labeled is not None:
                    keep = ~labeled[ids]
                    if not keep.any():
                        return
                    d2, ids = d2[keep], ids[keep]
                # merge only candidates that can enter the current best-k
                good = d2 <= best_d2[-1]
                if not good.any():
                    return
                all_d2 = np.concatenate([best_d2, d2[good]])
                all_idx = np.concatenate([best_idx, ids[good]])
                order = np.lexsort((all_idx, all_d2))[:k]
                best_d2 = all_d2[order]
                best_idx = all_idx[order]
                return
            axis = split_dim[node]
            diff = q[axis] - split_val[node]
            near, far = (l, right[node]) if diff < 0 else (right[node], l)
            visit(near, bound)
            old = off[axis]
            far_bound = bound - old + diff * diff
            if far_bound <= best_d2[-1]:
                off[axis] = diff * diff
                visit(far, far_bound)
                off[axis] = old

        visit(0, 0.0)
        result = best_idx[np.isfinite(best_d2)]
        if result.size < k:  # unreachable given the availability check
            raise PoolExhaustedError(f"found only {result.size} of {k} requested")
        if return_stats:
            return result, {"visits": visits,
                            "distances": np.sqrt(np.maximum(best_d2, 0.0)).tolist()}
        return result


def build(points: FeatureSet | Matrix, leaf_size: int = 256) -> KdTree:
    data = points.matrix if isinstance(points, FeatureSet) else points
    return KdTree(data, leaf_size=leaf_size)


def nearest(tree: KdTree, q, mask: QueryMask | None = None) -> int:
    return tree.nearest(q, mask)


def k_nearest(tree: KdTree, q, k: int, mask: QueryMask | None = None) -> np.ndarray:
    return tree.k_nearest(q, k, mask)


def brute_force_nearest(points: Matrix, q, mask: QueryMask | None = None) -> int:
    """Reference linear scan with the same tie rule; used by tests and the bench."""
    ids = np.arange(points.shape[0])
    if mask is not None:
        ids = ids[~mask.labeled]
    if ids.size == 0:
        raise PoolExhaustedError("all pool samples are masked")
    diff = points[ids] - np.asarray(q, dtype=np.float64).ravel()
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((ids, d2))
    return int(ids[order[0]])


def brute_force_k_nearest(points: Matrix, q, k: int,
                          mask: QueryMask | None = None) -> np.ndarray:
    ids = np.arange(points.shape[0])
    if mask is not None:
        ids = ids[~mask.labeled]
    if ids.size < k:
        raise PoolExhaustedError(f"need {k} unmasked samples, have {ids.size}")
    diff = points[ids] - np.asarray(q, dtype=np.float64).ravel()
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((ids, d2))
    return ids[order[:k]]
