import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asal.matching import (
    PoolExhaustedError,
    QueryMask,
    brute_force_k_nearest,
    brute_force_nearest,
    build,
    k_nearest,
    nearest,
)


class TestBuild:
    def test_single_point(self):
        tree = build(np.array([[1.0, 2.0]]))
        assert len(tree) == 1
        assert tree.nearest([0.0, 0.0]) == 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build(np.empty((0, 3)))

    def test_traversal_covers_every_index_once(self, rng):
        pts = rng.standard_normal((137, 4))
        tree = build(pts, leaf_size=8)
        visited = tree.traverse_indices()
        assert sorted(visited.tolist()) == list(range(137))

    def test_duplicates_all_retrievable(self, rng):
        base = rng.standard_normal((6, 3))
        pts = np.tile(base, (4, 1))
        tree = build(pts, leaf_size=4)
        got = tree.k_nearest(base[2], 4)
        assert sorted(got.tolist()) == [2, 8, 14, 20]

    def test_subtree_respects_split_planes(self, rng):
        pts = rng.standard_normal((64, 3))
        tree = build(pts, leaf_size=4)
        for node in range(len(tree.split_dim)):
            if tree.left[node] < 0:
                continue
            axis, val = tree.split_dim[node], tree.split_val[node]
            lnode, rnode = tree.left[node], tree.right[node]
            lids = tree.indices[tree.lo[lnode]:tree.hi[lnode]]
            rids = tree.indices[tree.lo[rnode]:tree.hi[rnode]]
            assert (pts[lids, axis] <= val).all()
            assert (pts[rids, axis] >= val).all()


class TestNearest:
    def test_stored_point_returns_itself(self, rng):
        pts = rng.standard_normal((50, 5))
        tree = build(pts, leaf_size=8)
        for i in (0, 17, 49):
            assert tree.nearest(pts[i]) == i

    def test_matches_brute_force_on_random_data(self, rng):
        pts = rng.standard_normal((2000, 50))
        tree = build(pts)
        for q in rng.standard_normal((200, 50)):
            assert tree.nearest(q) == brute_force_nearest(pts, q)

    def test_masked_nearest_falls_to_second(self, rng):
        pts = rng.standard_normal((300, 8))
        tree = build(pts, leaf_size=16)
        for q in rng.standard_normal((50, 8)):
            first = tree.nearest(q)
            mask = QueryMask(300)
            mask.mark(first)
            second = tree.nearest(q, mask)
            assert second == brute_force_nearest(pts, q, mask)
            assert second != first

    def test_heavily_masked_matches_brute_force(self, rng):
        pts = rng.standard_normal((500, 6))
        tree = build(pts, leaf_size=8)
        mask = QueryMask(500)
        mask.labeled[rng.choice(500, 480, replace=False)] = True
        for q in rng.standard_normal((50, 6)):
            assert tree.nearest(q, mask) == brute_force_nearest(pts, q, mask)

    def test_returned_index_never_masked(self, rng):
        pts = rng.standard_normal((100, 4))
        tree = build(pts, leaf_size=8)
        mask = QueryMask(100)
        mask.labeled[::2] = True
        for q in rng.standard_normal((30, 4)):
            assert not mask.labeled[tree.nearest(q, mask)]

    def test_all_masked_raises(self, rng):
        pts = rng.standard_normal((10, 3))
        tree = build(pts)
        mask = QueryMask(10)
        mask.labeled[:] = True
        with pytest.raises(PoolExhaustedError):
            tree.nearest(np.zeros(3), mask)

    def test_width_mismatch(self, rng):
        tree = build(rng.standard_normal((10, 3)))
        with pytest.raises(ValueError):
            tree.nearest(np.zeros(4))

    def test_tie_breaks_to_lowest_index(self):
        pts = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [0.0, 5.0]])
        tree = build(pts, leaf_size=1)
        # indices 0 and 2 are identical; 0 and 1 are equidistant from origin
        assert tree.nearest([0.0, 0.0]) == 0
        assert tree.nearest([1.0, 0.0]) == 0
        assert tree.nearest([0.9, 0.0]) == 0


class TestKNearest:
    def test_k_equal_to_pool_returns_sorted_all(self, rng):
        pts = rng.standard_normal((40, 3))
        tree = build(pts, leaf_size=4)
        q = rng.standard_normal(3)
        got = tree.k_nearest(q, 40)
        assert np.array_equal(got, brute_force_k_nearest(pts, q, 40))
        d = np.linalg.norm(pts[got] - q, axis=1)
        assert (np.diff(d) >= -1e-12).all()

    def test_k1_reduces_to_nearest(self, rng):
        pts = rng.standard_normal((200, 10))
        tree = build(pts, leaf_size=16)
        for q in rng.standard_normal((40, 10)):
            assert tree.k_nearest(q, 1)[0] == tree.nearest(q)

    def test_matches_brute_force(self, rng):
        pts = rng.standard_normal((1000, 20))
        tree = build(pts, leaf_size=32)
        mask = QueryMask(1000)
        mask.labeled[rng.choice(1000, 300, replace=False)] = True
        for q in rng.standard_normal((60, 20)):
            got = tree.k_nearest(q, 7, mask)
            assert np.array_equal(got, brute_force_k_nearest(pts, q, 7, mask))

    def test_insufficient_unmasked_raises(self, rng):
        pts = rng.standard_normal((5, 2))
        tree = build(pts)
        mask = QueryMask(5)
        mask.labeled[:3] = True
        with pytest.raises(PoolExhaustedError):
            tree.k_nearest(np.zeros(2), 3, mask)

    def test_module_level_wrappers(self, rng):
        pts = rng.standard_normal((30, 4))
        tree = build(pts)
        q = rng.standard_normal(4)
        assert nearest(tree, q) == tree.nearest(q)
        assert np.array_equal(k_nearest(tree, q, 3), tree.k_nearest(q, 3))


@given(st.integers(2, 60), st.integers(1, 4), st.integers(0, 2 ** 31))
@settings(max_examples=60, deadline=None)
def test_property_matches_brute_force(n, d, seed):
    rng = np.random.default_rng(seed)
    # pile points on a small integer grid to force many exact ties
    pts = rng.integers(-2, 3, size=(n, d)).astype(np.float64)
    tree = build(pts, leaf_size=4)
    q = rng.integers(-2, 3, size=d).astype(np.float64)
    assert tree.nearest(q) == brute_force_nearest(pts, q)
    k = min(5, n)
    assert np.array_equal(tree.k_nearest(q, k), brute_force_k_nearest(pts, q, k))
    mask = QueryMask(n)
    mask.labeled[rng.random(n) < 0.4] = True
    free = mask.unmasked_count()
    if free >= 1:
        assert tree.nearest(q, mask) == brute_force_nearest(pts, q, mask)
    if free >= k:
        assert np.array_equal(tree.k_nearest(q, k, mask),
                              brute_force_k_nearest(pts, q, k, mask))


class TestVisitScaling:
    def test_clustered_data_visits_grow_sublinearly(self, rng):
        """Node visits across a 10x size step on clustered data stay well under 10x."""
        def median_visits(n):
            base = rng.standard_normal((50, 20)) * 8.0
            reps = n // 50
            pts = np.repeat(base, reps, axis=0)
            pts += 0.05 * rng.standard_normal(pts.shape)
            tree = build(pts)
            counts = []
            for q in base[:20] + 0.05 * rng.standard_normal((20, 20)):
                _, stats = tree.nearest(q, return_stats=True)
                counts.append(stats["visits"])
            return np.median(counts), len(tree.split_dim)

        v_small, nodes_small = median_visits(5_000)
        v_big, nodes_big = median_visits(50_000)
        assert nodes_big > 5 * nodes_small  # the tree itself really grew
        assert v_big <= 5 * v_small
