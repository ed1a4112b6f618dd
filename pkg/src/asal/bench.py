"""Selection-time scaling harness.

Measures how long each strategy takes to pick a fixed number of samples as
the pool grows, with pre-processing cost itemized separately (classifier
training is excluded everywhere, since it is identical across strategies).
Pool-size sweeps replicate and jitter a base pool. Medians over repeats
guard against scheduler noise; all clocks are monotonic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .data import GaussianMixtureSpec, make_gaussian_mixture, mixture_generator
from .features import FeatureExtractor, build_feature_set, fit_pca
from .matching import KdTree, QueryMask
from .models import TrainConfig, train_classifier
from .numerics import Matrix
from .strategies import SelectionRequest, select
from .synthesis import SynthesisConfig


@dataclass
class TimingRecord:
    strategy: str
    pool_size: int
    count: int
    selection_s: float | None           # median over repeats
    repeat_s: list[float] = field(default_factory=list)
    preprocessing_s: dict[str, float] = field(default_factory=dict)
    median_node_visits: float | None = None
    failed: str | None = None


@dataclass
class ScalingReport:
    strategy: str
    count: int
    records: list[TimingRecord]
    loglog_slope: float | None          # least squares; needs >= 4 sizes

    def preprocessing_total(self, size: int) -> float:
        for rec in self.records:
            if rec.pool_size == size:
                return sum(rec.preprocessing_s.values())
        raise KeyError(f"no record for size {size}")

    def selection_at(self, size: int) -> float:
        for rec in self.records:
            if rec.pool_size == size and rec.selection_s is not None:
                return rec.selection_s
        raise KeyError(f"no timing for size {size}")


def replicate_pool(base, size: int, rng: np.random.Generator,
                   jitter_scale: float = 0.25) -> Matrix:
    """Grow a pool to `size` rows by tiling the base with augmentation noise.

    Mixture pools that carry their intrinsic subspace get jittered *along*
    the manifold at a fraction of the within-cluster spread, the way real
    augmentation (crops, flips) perturbs an image at intra-class scale and
    genuinely densifies the data set. Other pools fall back to small
    isotropic noise.
    """
    base_x = base.x if hasattr(base, "x") else np.asarray(base)
    n_base = base_x.shape[0]
    factors = getattr(base, "mixture_factors", None)
    out = np.empty((size, base_x.shape[1]))
    for start in range(0, size, n_base):
        stop = min(start + n_base, size)
        block = base_x[: stop - start]
        if factors is not None:
            embed = factors[0]  # shared subspace: d x r, scaled by sigma
            noise = jitter_scale * rng.standard_normal((block.shape[0], embed.shape[1])) @ embed.T
        else:
            noise = 0.01 * float(np.std(base_x)) * rng.standard_normal(block.shape)
        out[start:stop] = block + noise
    return out


def _default_base(seed: int, dim: int = 60, base_size: int = 20_000):
    # feature-space stand-in: low intrinsic dimension and heavily overlapping
    # clusters, so class boundaries run through dense data. That is the
    # regime the matching step assumes (every synthetic sample has a close
    # real match) and the one where exact tree search pays off.
    spec = GaussianMixtureSpec(num_components=8, dim=dim, pool_size=base_size,
                               test_size=100, overlap=0.5, radius=5.0,
                               intrinsic_dim=6)
    pool, _ = make_gaussian_mixture(spec, seed)
    return pool


def time_selection(strategy: str, sizes: list[int], repeats: int = 3,
                   count: int = 10, seed: int = 0, pca_k: int = 50,
                   labeled: int = 100, base_pool=None,
                   synthesis_steps: int = 100) -> ScalingReport:
    """Median selection time per pool size for one strategy.

    The classifier is trained once on a small labeled subset and reused; its
    training time is not part of any reported number. Each repeat starts
    from a fresh copy of the labeled mask so without-replacement state does
    not leak between repeats.
    """
    if sorted(sizes) != list(sizes):
        raise ValueError("sizes must be ascending")
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    base = base_pool if base_pool is not None else _default_base(seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBE7C]))

    records: list[TimingRecord] = []
    for size in sizes:
        try:
            records.append(_time_one_size(strategy, size, repeats, count, base,
                                          pca_k, labeled, rng, synthesis_steps))
        except MemoryError as exc:
            records.append(TimingRecord(strategy=strategy, pool_size=size,
                                        count=count, selection_s=None,
                                        failed=f"out of memory: {exc}"))
    slope = _loglog_slope([(r.pool_size, r.selection_s) for r in records
                           if r.selection_s is not None])
    return ScalingReport(strategy=strategy, count=count, records=records,
                         loglog_slope=slope)


def _time_one_size(strategy, size, repeats, count, base, pca_k,
                   labeled, rng, synthesis_steps) -> TimingRecord:
    pool_x = replicate_pool(base, size, rng)
    labels = base.label_fn(pool_x[:labeled])
    prep: dict[str, float] = {}

    t0 = time.perf_counter()
    generator = mixture_generator(base, seed=0)
    prep["generator_s"] = time.perf_counter() - t0

    extractor = pca = tree = fs = None
    if strategy in ("asal", "asal_overgen"):
        extractor = FeatureExtractor("raw")
        prep["feature_extraction_s"] = 0.0  # raw features: extraction is the identity
        t0 = time.perf_counter()
        pca = fit_pca(pool_x, min(pca_k, pool_x.shape[1]))
        prep["pca_fit_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        fs = build_feature_set(pool_x, extractor, pca)
        prep["feature_projection_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        tree = KdTree(fs.matrix)
        prep["tree_build_s"] = time.perf_counter() - t0

    # excluded from all reported times, identical for every strategy
    clf = train_classifier(pool_x[:labeled], labels, base.num_classes,
                           cfg=TrainConfig(epochs=30),
                           rng=np.random.default_rng(np.random.SeedSequence([0xC1F])))

    mask = QueryMask(size)
    mask.labeled[:labeled] = True
    pool_view = _BenchPool(pool_x, base.num_classes)
    syn = SynthesisConfig(steps=synthesis_steps, batch_size=count)

    def run(req_seed: int):
        req = SelectionRequest(
            pool=pool_view, mask=mask.copy(), classifier=clf, count=count,
            rng=np.random.default_rng(np.random.SeedSequence([req_seed])),
            generator=generator, extractor=extractor, pca=pca, tree=tree,
            feature_set=fs, synthesis=syn)
        t0 = time.perf_counter()
        sel = select(strategy, req)
        return time.perf_counter() - t0, sel

    run(0)  # warm caches
    times = []
    last_sel = None
    for r in range(repeats):
        dt, last_sel = run(r + 1)
        times.append(dt)

    visits = None
    if tree is not None and last_sel is not None and last_sel.queries is not None:
        counts = []
        work = mask.copy()
        for q in last_sel.queries:
            idx, stats = tree.nearest(q, work, return_stats=True)
            work.mark(idx)
            counts.append(stats["visits"])
        visits = float(np.median(counts))

    return TimingRecord(strategy=strategy, pool_size=size, count=count,
                        selection_s=float(np.median(times)), repeat_s=times,
                        preprocessing_s=prep, median_node_visits=visits)


class _BenchPool:
    """Pool stand-in for timing: samples only, no hidden labels needed."""

    def __init__(self, x: Matrix, num_classes: int):
        self.x = x
        self.num_classes = num_classes

    def __len__(self):
        return self.x.shape[0]


def _loglog_slope(points: list[tuple[int, float]]) -> float | None:
    pts = [(n, t) for n, t in points if t and t > 0]
    if len(pts) < 4:
        return None
    logs = np.log([float(n) for n, _ in pts])
    logt = np.log([t for _, t in pts])
    slope, _ = np.polyfit(logs, logt, 1)
    return float(slope)


def transition_point(preprocessing: float, fast_per_cycle: float,
                     slow_per_cycle: float) -> int | None:
    """Smallest cycle count c with preprocessing + c*fast < c*slow.

    Returns None when the fast method never overtakes (fast >= slow).
    Computed in exact rational arithmetic so the defining inequalities hold
    at every float boundary: c = floor(preprocessing / (slow - fast)) + 1.
    """
    if preprocessing < 0 or fast_per_cycle < 0 or slow_per_cycle < 0:
        raise ValueError("times must be non-negative")
    if fast_per_cycle >= slow_per_cycle:
        return None
    gap = Fraction(slow_per_cycle) - Fraction(fast_per_cycle)
    return int(Fraction(preprocessing) / gap) + 1


def write_scaling_csv(path, reports: list[ScalingReport]) -> None:
    """One row per (strategy, size, repeat) for external plotting."""
    with open(path, "w") as f:
        f.write("strategy,pool_size,count,repeat,selection_s,preprocessing_total_s\n")
        for report in reports:
            for rec in report.records:
                pre = sum(rec.preprocessing_s.values())
                if rec.failed is not None:
                    f.write(f"{rec.strategy},{rec.pool_size},{rec.count},,,{pre:.9f}\n")
                    continue
                for i, t in enumerate(rec.repeat_s):
                    f.write(f"{rec.strategy},{rec.pool_size},{rec.count},{i},{t:.9f},{pre:.9f}\n")
