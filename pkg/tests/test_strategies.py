import numpy as np
import pytest

from asal.data import GaussianMixtureSpec, make_gaussian_mixture, mixture_generator
from asal.features import FeatureExtractor, build_feature_set, fit_pca
from asal.loop import SimulatedOracle
from asal.matching import KdTree, PoolExhaustedError, QueryMask
from asal.models import AnalyticMixtureGenerator, Classifier, ConfigError, TrainConfig, train_classifier
from asal.numerics import entropy
from asal.strategies import (
    SelectionRequest,
    select,
    select_asal,
    select_asal_overgenerate,
    select_coreset,
    select_gaal,
    select_max_entropy,
    select_min_distance,
    select_random,
)
from asal.synthesis import SynthesisConfig

from conftest import brute_force_kcenter, covering_radius


def make_context(seed=0, pool_size=600, labeled=40, overlap=0.2, k=4, dim=5):
    spec = GaussianMixtureSpec(num_components=k, dim=dim, pool_size=pool_size,
                               test_size=50, overlap=overlap, radius=5.0)
    pool, _ = make_gaussian_mixture(spec, seed)
    labels = pool.hidden_labels()
    rng = np.random.default_rng(seed)
    lab_ids = rng.choice(pool_size, labeled, replace=False)
    mask = QueryMask(pool_size)
    mask.labeled[lab_ids] = True
    clf = train_classifier(pool.x[lab_ids], labels[lab_ids], pool.num_classes,
                           cfg=TrainConfig(epochs=80, learning_rate=1e-2),
                           rng=np.random.default_rng(seed + 1))
    gen = mixture_generator(pool, seed=seed)
    extractor = FeatureExtractor("raw")
    pca = fit_pca(pool.x, dim)
    fs = build_feature_set(pool.x, extractor, pca)
    tree = KdTree(fs.matrix)
    return pool, mask, clf, gen, extractor, pca, fs, tree


def make_request(count=10, seed=0, **overrides):
    pool, mask, clf, gen, extractor, pca, fs, tree = make_context(seed=seed)
    base = dict(pool=pool, mask=mask, classifier=clf, count=count,
                rng=np.random.default_rng(seed + 7), generator=gen,
                extractor=extractor, pca=pca, tree=tree, feature_set=fs,
                synthesis=SynthesisConfig(steps=30))
    base.update(overrides)
    return SelectionRequest(**base)


def assert_valid_pool_selection(sel, req):
    assert len(sel.indices) == req.count
    assert len(set(sel.indices.tolist())) == req.count
    assert not req.mask.labeled[sel.indices].any()


class TestRandom:
    def test_full_remainder_when_n_equals_unmasked(self):
        req = make_request(count=5)
        req.mask.labeled[:] = True
        keep = [3, 99, 200, 401, 555]
        req.mask.labeled[keep] = False
        sel = select_random(req)
        assert sorted(sel.indices.tolist()) == keep

    def test_fixed_seed_fixed_selection(self):
        a = select_random(make_request(seed=3))
        b = select_random(make_request(seed=3))
        assert np.array_equal(a.indices, b.indices)

    def test_mask_not_mutated(self):
        req = make_request()
        before = req.mask.labeled.copy()
        select_random(req)
        assert np.array_equal(req.mask.labeled, before)

    def test_class_frequency_tracks_pool(self):
        spec = GaussianMixtureSpec(num_components=4, dim=3, pool_size=2000, test_size=10)
        pool, _ = make_gaussian_mixture(spec, seed=0)
        labels = pool.hidden_labels()
        counts = np.zeros(4)
        draws = 0
        clf = Classifier(3, 4, rng=np.random.default_rng(0))
        for trial in range(40):
            req = SelectionRequest(pool=pool, mask=QueryMask(2000), classifier=clf,
                                   count=50, rng=np.random.default_rng(trial))
            sel = select_random(req)
            counts += np.bincount(labels[sel.indices], minlength=4)
            draws += 50
        expect = draws * np.bincount(labels, minlength=4) / 2000
        sigma = np.sqrt(draws * 0.25 * 0.75)
        assert np.abs(counts - expect).max() <= 3 * sigma

    def test_exhausted_pool(self):
        req = make_request(count=601)
        with pytest.raises(PoolExhaustedError):
            select_random(req)


class TestMaxEntropy:
    def test_binary_linear_selects_smallest_margins(self):
        pool, mask, clf, *_ = make_context(k=2, dim=4, seed=2)
        clf = train_classifier(pool.x[:60], pool.hidden_labels()[:60], 2,
                               cfg=TrainConfig(epochs=60, learning_rate=1e-2),
                               rng=np.random.default_rng(0))
        req = SelectionRequest(pool=pool, mask=mask, classifier=clf, count=15,
                               rng=np.random.default_rng(0))
        sel = select_max_entropy(req)
        w, b = clf.decision_params()
        ids = np.flatnonzero(~mask.labeled)
        margins = np.abs(pool.x[ids] @ w + b)
        chosen_margin = np.abs(pool.x[sel.indices] @ w + b).max()
        others = np.setdiff1d(ids, sel.indices)
        # entropy is monotone decreasing in |margin|: chosen = smallest margins
        assert chosen_margin <= np.abs(pool.x[others] @ w + b).min() + 1e-9

    def test_zero_classifier_ties_resolve_to_lowest_indices(self):
        req = make_request(count=4)
        req.classifier.mlp.params = [(np.zeros((5, 4)), np.zeros((1, 4)))]
        req.mask.labeled[:] = False
        sel = select_max_entropy(req)
        assert sel.indices.tolist() == [0, 1, 2, 3]

    def test_top_n_property(self):
        req = make_request(count=12)
        sel = select_max_entropy(req)
        ids = np.flatnonzero(~req.mask.labeled)
        scores = entropy(req.classifier.predict_proba(req.pool.x[ids]))[:, 0]
        unselected = np.setdiff1d(ids, sel.indices)
        un_scores = entropy(req.classifier.predict_proba(req.pool.x[unselected]))[:, 0]
        assert sel.scores.min() >= un_scores.max() - 1e-12
        assert_valid_pool_selection(sel, req)


class TestMinDistance:
    def _linear_binary_request(self, xs, count):
        from asal.data import Pool

        pool = Pool(np.array(xs, dtype=np.float64), np.zeros(len(xs), dtype=int), 2)
        clf = Classifier(2, 2, rng=np.random.default_rng(0))
        clf.mlp.params = [(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((1, 2)))]  # w=(1,0), b=0
        return SelectionRequest(pool=pool, mask=QueryMask(len(xs)), classifier=clf,
                                count=count, rng=np.random.default_rng(0))

    def test_hand_ordered_distances(self):
        req = self._linear_binary_request([[3.0, 0.0], [-1.0, 0.0], [0.5, 0.0]], 3)
        sel = select_min_distance(req)
        assert sel.indices.tolist() == [2, 1, 0]  # |0.5| < |-1| < |3|

    def test_agrees_with_max_entropy_for_binary_linear(self):
        pool, mask, _, *_ = make_context(k=2, dim=4, seed=5)
        clf = train_classifier(pool.x[:50], pool.hidden_labels()[:50], 2,
                               cfg=TrainConfig(epochs=50, learning_rate=1e-2),
                               rng=np.random.default_rng(1))
        req = SelectionRequest(pool=pool, mask=mask, classifier=clf, count=20,
                               rng=np.random.default_rng(0))
        by_margin = select_min_distance(req)
        by_entropy = select_max_entropy(req)
        assert set(by_margin.indices.tolist()) == set(by_entropy.indices.tolist())

    def test_weight_scale_invariance(self):
        req = self._linear_binary_request(
            [[3.0, 1.0], [-1.0, 2.0], [0.5, -1.0], [2.0, 0.0], [-0.2, 5.0]], 2)
        first = select_min_distance(req).indices
        w, b = req.classifier.mlp.params[0]
        req.classifier.mlp.params = [(w * 7.5, b * 7.5)]
        second = select_min_distance(req).indices
        assert set(first.tolist()) == set(second.tolist())

    def test_multiclass_rejected(self):
        req = make_request()
        with pytest.raises(ConfigError):
            select_min_distance(req)


class TestAsal:
    def test_constant_generator_matches_exact_pool_point_then_dedups(self):
        req = make_request(count=3)
        target = req.pool.x[17].copy()
        req.mask.labeled[17] = False
        # generator collapses to exactly pool point 17: every synthetic sample
        # matches it at distance zero, dedup must fall through to neighbours
        req.generator = AnalyticMixtureGenerator(
            target[None, :], [np.zeros((5, 5))])
        sel = select_asal(req)
        assert sel.indices[0] == 17
        assert_valid_pool_selection(sel, req)

    def test_selected_entropy_beats_random_across_seeds(self):
        for seed in range(3):
            req_a = make_request(count=20, seed=seed)
            req_r = make_request(count=20, seed=seed)
            sel_a = select_asal(req_a)
            sel_r = select_random(req_r)
            ent_a = entropy(req_a.classifier.predict_proba(req_a.pool.x[sel_a.indices])).mean()
            ent_r = entropy(req_r.classifier.predict_proba(req_r.pool.x[sel_r.indices])).mean()
            assert ent_a >= ent_r

    def test_missing_context_rejected(self):
        req = make_request(tree=None)
        with pytest.raises(ConfigError, match="tree"):
            select_asal(req)

    def test_deterministic(self):
        a = select_asal(make_request(seed=11))
        b = select_asal(make_request(seed=11))
        assert np.array_equal(a.indices, b.indices)


class TestAsalOvergenerate:
    def test_m_gen_equal_n_matches_plain_asal(self):
        plain = select_asal(make_request(count=8, seed=4))
        over = select_asal_overgenerate(make_request(count=8, seed=4, overgenerate=8))
        assert set(plain.indices.tolist()) == set(over.indices.tolist())

    def test_overgeneration_does_not_lower_selected_entropy(self):
        wins = 0
        for seed in range(5):
            req_n = make_request(count=10, seed=seed, overgenerate=10)
            req_4n = make_request(count=10, seed=seed, overgenerate=40)
            ent_n = select_asal_overgenerate(req_n).scores.mean()
            ent_4n = select_asal_overgenerate(req_4n).scores.mean()
            if ent_4n >= ent_n - 1e-12:
                wins += 1
        assert wins >= 3

    def test_top_n_among_candidates(self):
        req = make_request(count=5, overgenerate=25)
        sel = select_asal_overgenerate(req)
        assert (np.diff(sel.scores) <= 1e-12).all()  # descending entropy
        assert_valid_pool_selection(sel, req)

    def test_neighbors_variant_returns_distinct(self):
        req = make_request(count=6, overgenerate=6, neighbors=3)
        sel = select_asal_overgenerate(req)
        assert_valid_pool_selection(sel, req)

    def test_m_gen_below_n_rejected(self):
        req = make_request(count=10, overgenerate=5)
        with pytest.raises(ValueError):
            select_asal_overgenerate(req)


class TestCoreset:
    def _line_request(self, labeled_ids, count):
        from asal.data import Pool

        x = np.array([[0.0], [1.0], [10.0]])
        pool = Pool(x, np.zeros(3, dtype=int), 2)
        mask = QueryMask(3)
        mask.labeled[labeled_ids] = True
        clf = Classifier(1, 2, rng=np.random.default_rng(0))
        return SelectionRequest(pool=pool, mask=mask, classifier=clf, count=count,
                                rng=np.random.default_rng(0))

    def test_farthest_point_first(self):
        sel = select_coreset(self._line_request([0], 1), features=np.array([[0.0], [1.0], [10.0]]))
        assert sel.indices.tolist() == [2]

    def test_two_picks_order(self):
        sel = select_coreset(self._line_request([0], 2), features=np.array([[0.0], [1.0], [10.0]]))
        assert sel.indices.tolist() == [2, 1]

    def test_two_approximation_bound(self, rng):
        for trial in range(25):
            n = int(rng.integers(6, 12))
            pts = rng.standard_normal((n, 2))
            seed_ids = [int(rng.integers(0, n))]
            n_new = 2
            from asal.data import Pool

            pool = Pool(pts, np.zeros(n, dtype=int), 2)
            mask = QueryMask(n)
            mask.labeled[seed_ids] = True
            req = SelectionRequest(pool=pool, mask=mask,
                                   classifier=Classifier(2, 2, rng=np.random.default_rng(0)),
                                   count=n_new, rng=np.random.default_rng(0))
            sel = select_coreset(req, features=pts)
            greedy_r = covering_radius(pts, seed_ids + sel.indices.tolist())
            best_r = brute_force_kcenter(pts, seed_ids, n_new)
            assert greedy_r <= 2.0 * best_r + 1e-9

    def test_uses_classifier_features_by_default(self):
        req = make_request(count=5, feature_set=None)
        sel = select_coreset(req)
        assert_valid_pool_selection(sel, req)


class TestGaal:
    def test_every_synthetic_sample_labeled(self):
        req = make_request(count=8, seed=3)
        req.oracle = SimulatedOracle(req.pool)
        sel = select_gaal(req)
        assert sel.indices is None
        assert sel.synthetic.shape == (8, 5)
        assert sel.synthetic_labels.shape == (8,)
        assert sel.skipped == 0
        assert (sel.synthetic_labels >= 0).all()
        assert (sel.synthetic_labels < req.pool.num_classes).all()

    def test_synthetic_points_are_not_pool_rows(self):
        req = make_request(count=5, seed=9)
        req.oracle = SimulatedOracle(req.pool)
        sel = select_gaal(req)
        pool_rows = {tuple(r) for r in req.pool.x.round(9).tolist()}
        for row in sel.synthetic.round(9).tolist():
            assert tuple(row) not in pool_rows


class TestRegistry:
    def test_unknown_strategy_lists_valid_names(self):
        req = make_request()
        with pytest.raises(ConfigError, match="asal"):
            select("does_not_exist", req)

    def test_all_pool_strategies_return_valid_selections(self):
        for name in ("random", "max_entropy", "asal", "asal_overgen", "coreset"):
            req = make_request(count=7, seed=1)
            mask_before = req.mask.labeled.copy()
            pool_before = req.pool.x.copy()
            sel = select(name, req)
            assert sel.strategy in (name, "asal_overgen")
            assert_valid_pool_selection(sel, req)
            assert sel.wall_time >= 0.0
            # no strategy mutates the pool or the caller's mask
            assert np.array_equal(req.mask.labeled, mask_before)
            assert np.array_equal(req.pool.x, pool_before)
