"""Sample-selection strategies behind one uniform interface.

Pool strategies return `count` distinct unmasked pool indices; the
synthetic strategy (gaal) returns generated samples labeled directly by
the oracle. Each strategy measures its own selection wall time. None of
them mutates the pool or the caller's mask.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import Pool
from .features import FeatureExtractor, FeatureSet, PcaModel
from .matching import KdTree, PoolExhaustedError, QueryMask
from .models import Classifier, ConfigError, Generator
from .numerics import Matrix, entropy
from .synthesis import SynthesisConfig, synthesize_uncertain


@dataclass
class SelectionRequest:
    pool: Pool
    mask: QueryMask
    classifier: Classifier
    count: int
    rng: np.random.Generator
    # strategy-specific context
    generator: Generator | None = None
    extractor: FeatureExtractor | None = None
    pca: PcaModel | None = None
    tree: KdTree | None = None
    feature_set: FeatureSet | None = None
    synthesis: SynthesisConfig | None = None
    oracle: object | None = None
    overgenerate: int | None = None     # m_gen for asal_overgen (default 4 * count)
    neighbors: int = 1                  # matches per synthetic sample

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")

    def unmasked(self) -> np.ndarray:
        return np.flatnonzero(~self.mask.labeled)

    def require_pool_capacity(self) -> np.ndarray:
        ids = self.unmasked()
        if ids.size < self.count:
            raise PoolExhaustedError(f"need {self.count} unlabeled samples, have {ids.size}")
        return ids


@dataclass
class Selection:
    strategy: str
    indices: np.ndarray | None          # pool strategies; None for gaal
    scores: np.ndarray
    wall_time: float
    synthetic: Matrix | None = None     # gaal samples
    synthetic_labels: np.ndarray | None = None
    skipped: int = 0
    queries: Matrix | None = None       # matching-space queries (asal family)

    def __post_init__(self):
        if self.indices is not None:
            self.indices = np.asarray(self.indices, dtype=np.int64)
            if len(np.unique(self.indices)) != len(self.indices):
                raise ValueError("duplicate indices in selection")


def select_random(req: SelectionRequest) -> Selection:
    """Uniform without replacement over the unlabeled pool."""
    t0 = time.perf_counter()
    ids = req.require_pool_capacity()
    chosen = req.rng.choice(ids, size=req.count, replace=False)
    wall = time.perf_counter() - t0
    return Selection("random", chosen, np.zeros(req.count), wall)


def _pool_entropy(req: SelectionRequest, ids: np.ndarray, chunk: int = 65536) -> np.ndarray:
    out = np.empty(ids.size)
    for start in range(0, ids.size, chunk):
        stop = min(start + chunk, ids.size)
        probs = req.classifier.predict_proba(req.pool.x[ids[start:stop]])
        out[start:stop] = entropy(probs)[:, 0]
    return out


def select_max_entropy(req: SelectionRequest) -> Selection:
    """Exhaustive scan: top-count pool samples by predictive entropy."""
    t0 = time.perf_counter()
    ids = req.require_pool_capacity()
    scores = _pool_entropy(req, ids)
    order = np.lexsort((ids, -scores))[:req.count]
    wall = time.perf_counter() - t0
    return Selection("max_entropy", ids[order], scores[order], wall)


def select_min_distance(req: SelectionRequest) -> Selection:
    """Smallest |w.x + b| / ||w|| margin; linear binary classifiers only."""
    t0 = time.perf_counter()
    if not req.classifier.is_linear_binary:
        raise ConfigError("min-distance sampling requires a linear binary classifier")
    w, b = req.classifier.decision_params()
    ids = req.require_pool_capacity()
    margins = np.abs(req.pool.x[ids] @ w + b) / np.linalg.norm(w)
    order = np.lexsort((ids, margins))[:req.count]
    wall = time.perf_counter() - t0
    return Selection("min_distance", ids[order], margins[order], wall)


def _require_matching_context(req: SelectionRequest) -> None:
    missing = [name for name, v in [("generator", req.generator),
                                    ("extractor", req.extractor),
                                    ("pca", req.pca), ("tree", req.tree)] if v is None]
    if missing:
        raise ConfigError(f"asal selection needs prepared context: missing {missing}")


def _synthesize_and_project(req: SelectionRequest, batch_size: int):
    cfg = req.synthesis or SynthesisConfig()
    cfg = SynthesisConfig(steps=cfg.steps, learning_rate=cfg.learning_rate,
                          batch_size=batch_size)
    batch = synthesize_uncertain(req.generator, req.classifier, cfg, req.rng)
    queries = req.pca.project(req.extractor.extract(batch.samples))
    return batch, queries


def select_asal(req: SelectionRequest) -> Selection:
    """Synthesize high-entropy samples, match each to its nearest pool sample.

    A working copy of the mask absorbs matches as they are made, so a
    collision automatically falls through to the next-nearest neighbour.
    """
    t0 = time.perf_counter()
    _require_matching_context(req)
    req.require_pool_capacity()
    batch, queries = _synthesize_and_project(req, req.count)
    work = req.mask.copy()
    chosen = np.empty(req.count, dtype=np.int64)
    for i in range(req.count):
        idx = req.tree.nearest(queries[i], work)
        work.mark(idx)
        chosen[i] = idx
    wall = time.perf_counter() - t0
    return Selection("asal", chosen, batch.final_entropy, wall, queries=queries)


def select_asal_overgenerate(req: SelectionRequest) -> Selection:
    """Over-generate, match everything, keep the most uncertain matches.

    Synthesizes m_gen >= count samples (and optionally retrieves `neighbors`
    matches per synthetic sample), then returns the top-count matched real
    samples by classifier entropy.
    """
    t0 = time.perf_counter()
    _require_matching_context(req)
    req.require_pool_capacity()
    m_gen = req.overgenerate if req.overgenerate is not None else 4 * req.count
    if m_gen < req.count:
        raise ValueError(f"m_gen={m_gen} must be >= count={req.count}")
    if req.neighbors < 1:
        raise ValueError("neighbors must be >= 1")
    batch, queries = _synthesize_and_project(req, m_gen)
    work = req.mask.copy()
    remaining = work.unmasked_count()
    candidates: list[int] = []
    query_of: list[int] = []
    for i in range(m_gen):
        if remaining < req.neighbors:
            break
        if req.neighbors == 1:
            matched = [req.tree.nearest(queries[i], work)]
        else:
            matched = list(req.tree.k_nearest(queries[i], req.neighbors, work))
        for idx in matched:
            work.mark(idx)
            candidates.append(idx)
            query_of.append(i)
        remaining -= len(matched)
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size < req.count:
        raise PoolExhaustedError(f"matched only {cand.size} of {req.count} requested")
    ent = _pool_entropy(req, cand)
    order = np.lexsort((cand, -ent))[:req.count]
    wall = time.perf_counter() - t0
    return Selection("asal_overgen", cand[order], ent[order], wall,
                     queries=queries[np.asarray(query_of)[order]])


def select_coreset(req: SelectionRequest, features: Matrix | None = None) -> Selection:
    """Greedy k-center (farthest-first), seeded with the labeled set as centers."""
    t0 = time.perf_counter()
    req.require_pool_capacity()
    if features is None:
        if req.feature_set is not None:
            features = req.feature_set.matrix
        else:
            # paper-style accounting: extract classifier features every cycle
            features = req.classifier.penultimate(req.pool.x)
    features = np.asarray(features, dtype=np.float64)
    labeled = np.flatnonzero(req.mask.labeled)

    min_d2 = np.full(features.shape[0], np.inf)
    for c in labeled:
        diff = features - features[c]
        np.minimum(min_d2, np.einsum("ij,ij->i", diff, diff), out=min_d2)
    min_d2[req.mask.labeled] = -1.0  # never re-pick a center

    chosen = np.empty(req.count, dtype=np.int64)
    for i in range(req.count):
        pick = int(np.argmax(min_d2))  # argmax takes the lowest index on ties
        chosen[i] = pick
        diff = features - features[pick]
        np.minimum(min_d2, np.einsum("ij,ij->i", diff, diff), out=min_d2)
        min_d2[pick] = -1.0
    wall = time.perf_counter() - t0
    return Selection("coreset", chosen, np.zeros(req.count), wall)


def select_gaal(req: SelectionRequest) -> Selection:
    """Label the synthetic samples themselves; nothing is drawn from the pool."""
    t0 = time.perf_counter()
    if req.generator is None or req.oracle is None:
        raise ConfigError("gaal needs a generator and an oracle")
    cfg = req.synthesis or SynthesisConfig()
    cfg = SynthesisConfig(steps=cfg.steps, learning_rate=cfg.learning_rate,
                          batch_size=req.count)
    batch = synthesize_uncertain(req.generator, req.classifier, cfg, req.rng)
    labels = req.oracle.label_points(batch.samples)
    keep = np.asarray([l is not None for l in labels], dtype=bool)
    kept_labels = np.asarray([l for l in labels if l is not None], dtype=np.int64)
    wall = time.perf_counter() - t0
    return Selection("gaal", None, batch.final_entropy[keep], wall,
                     synthetic=batch.samples[keep], synthetic_labels=kept_labels,
                     skipped=int((~keep).sum()))


STRATEGIES = {
    "random": select_random,
    "max_entropy": select_max_entropy,
    "min_distance": select_min_distance,
    "asal": select_asal,
    "asal_overgen": select_asal_overgenerate,
    "coreset": select_coreset,
    "gaal": select_gaal,
}


def select(name: str, req: SelectionRequest) -> Selection:
    if name not in STRATEGIES:
        raise ConfigError(f"unknown strategy {name!r}; valid: {', '.join(sorted(STRATEGIES))}")
    return STRATEGIES[name](req)
