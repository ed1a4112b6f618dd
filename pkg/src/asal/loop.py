"""Active-learning loop: retrain, select, annotate, extend, evaluate.

One loop implementation serves both oracle backends (simulated ground
truth and a human annotation service). Per-cycle metrics are written as
JSON-lines records with a stable field order so re-runs are comparable
byte for byte (wall-time fields aside).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import data as data_module
from .data import Pool
from .features import FeatureExtractor, FeatureSet, PcaModel, build_feature_set, fit_pca
from .matching import KdTree, PoolExhaustedError, QueryMask
from .models import (
    Classifier,
    ConfigError,
    DecoderGenerator,
    TrainConfig,
    train_autoencoder,
    train_classifier,
    train_critic,
)
from .numerics import entropy
from .strategies import STRATEGIES, Selection, SelectionRequest, select
from .synthesis import SynthesisConfig

CONFIG_VERSION = 1
METRICS_VERSION = 1

# wall-clock fields, excluded when comparing metrics files for determinism
VOLATILE_FIELDS = ("selection_s",)


class Oracle:
    """Label source. Implementations may return None to mark a sample unlabelable."""

    def label_indices(self, indices: np.ndarray) -> list[int | None]:
        raise NotImplementedError

    def label_points(self, points) -> list[int | None]:
        raise NotImplementedError


class SimulatedOracle(Oracle):
    """Answers with hidden ground truth; never refuses."""

    def __init__(self, pool: Pool):
        self.pool = pool

    def label_indices(self, indices):
        labels = self.pool.hidden_labels()
        return [int(labels[i]) for i in np.asarray(indices)]

    def label_points(self, points):
        if self.pool.label_fn is None:
            raise ConfigError("this pool cannot label arbitrary points")
        return [int(v) for v in self.pool.label_fn(points)]


@dataclass
class ExperimentConfig:
    dataset: dict
    strategy: str = "random"
    extractor: str = "raw"
    budget: int = 500
    new_per_cycle: int = 10
    initial: int = 50
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    stratified_init: bool = False
    pca_k: int | None = None
    classifier_hidden: tuple[int, ...] = ()
    classifier_train: dict = field(default_factory=dict)
    autoencoder: dict = field(default_factory=dict)
    critic: dict = field(default_factory=dict)
    synthesis: dict = field(default_factory=dict)
    generator: str = "auto"   # auto | mixture | decoder
    oracle: str = "simulated"
    overgenerate: int | None = None
    neighbors: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; valid: {', '.join(sorted(STRATEGIES))}")
        if self.initial < 1 or self.new_per_cycle < 1:
            raise ConfigError("initial and new_per_cycle must be >= 1")
        if self.budget < self.initial:
            raise ConfigError("budget must be >= initial")
        if (self.budget - self.initial) % self.new_per_cycle != 0:
            raise ConfigError(
                f"budget - initial = {self.budget - self.initial} must be a multiple "
                f"of new_per_cycle = {self.new_per_cycle}")
        self.seeds = tuple(int(s) for s in self.seeds)

    @property
    def planned_cycles(self) -> int:
        return (self.budget - self.initial) // self.new_per_cycle

    def to_json(self) -> dict:
        doc = {
            "version": CONFIG_VERSION,
            "dataset": self.dataset,
            "strategy": self.strategy,
            "extractor": self.extractor,
            "budget": self.budget,
            "new_per_cycle": self.new_per_cycle,
            "initial": self.initial,
            "seeds": list(self.seeds),
            "stratified_init": self.stratified_init,
            "pca_k": self.pca_k,
            "classifier_hidden": list(self.classifier_hidden),
            "classifier_train": self.classifier_train,
            "autoencoder": self.autoencoder,
            "critic": self.critic,
            "synthesis": self.synthesis,
            "generator": self.generator,
            "oracle": self.oracle,
            "overgenerate": self.overgenerate,
            "neighbors": self.neighbors,
        }
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        if doc.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {doc.get('version')}")
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in doc.items() if k in known}
        unknown = set(doc) - known - {"version"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "classifier_hidden" in kwargs:
            kwargs["classifier_hidden"] = tuple(kwargs["classifier_hidden"])
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(kwargs["seeds"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
        return cls.from_json(doc)


@dataclass
class CycleMetrics:
    cycle: int
    labeled: int
    accuracy: float
    new_mean_entropy: float | None
    class_counts: list[int]
    selection_s: float | None
    strategy: str
    seed: int

    def to_json(self) -> dict:
        # stable field order for byte-comparable metrics files
        return {
            "cycle": self.cycle,
            "labeled": self.labeled,
            "accuracy": self.accuracy,
            "new_mean_entropy": self.new_mean_entropy,
            "class_counts": self.class_counts,
            "selection_s": self.selection_s,
            "strategy": self.strategy,
            "seed": self.seed,
        }


@dataclass
class ExperimentResult:
    records: list[CycleMetrics]
    preprocessing_s: dict[str, float]
    status: str           # completed | truncated
    seed: int
    cycles_completed: int
    final_classifier: Classifier | None = None
    labeled_indices: list[int] | None = None  # pool indices; synthetic extras excluded


def evaluate(classifier: Classifier, test_x, test_y) -> float:
    """Fraction of argmax predictions equal to the label."""
    test_x = np.asarray(test_x, dtype=np.float64)
    test_y = np.asarray(test_y)
    if test_x.shape[0] == 0:
        raise ValueError("empty test set")
    return float((classifier.predict(test_x) == test_y).mean())


def build_dataset(spec: dict, seed: int) -> tuple[Pool, Pool]:
    variant = spec.get("variant", "gaussian_mixture")
    try:
        if variant == "gaussian_mixture":
            fields = {k: v for k, v in spec.items() if k != "variant"}
            if "class_map" in fields and fields["class_map"] is not None:
                fields["class_map"] = tuple(fields["class_map"])
            return data_module.make_gaussian_mixture(
                data_module.GaussianMixtureSpec(**fields), seed)
        if variant == "two_moons":
            fields = {k: v for k, v in spec.items() if k != "variant"}
            return data_module.make_two_moons(data_module.TwoMoonsSpec(**fields), seed)
        if variant == "csv":
            pool = data_module.load_csv(spec["path"], spec["label_column"])
            return _split_pool(pool, spec.get("test_size", max(1, len(pool) // 5)), seed)
        if variant == "idx":
            pool = data_module.load_idx(spec["images"], spec["labels"])
            if "test_images" in spec:
                test = data_module.load_idx(spec["test_images"], spec["test_labels"])
                return pool, test
            return _split_pool(pool, spec.get("test_size", max(1, len(pool) // 5)), seed)
    except TypeError as exc:
        raise ConfigError(f"bad {variant} dataset field: {exc}") from exc
    except KeyError as exc:
        raise ConfigError(f"{variant} dataset spec is missing {exc}") from exc
    raise ConfigError(f"unknown dataset variant {variant!r}")


def _split_pool(pool: Pool, test_size: int, seed: int) -> tuple[Pool, Pool]:
    if test_size >= len(pool):
        raise ConfigError("test_size must leave at least one pool sample")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5317]))
    order = rng.permutation(len(pool))
    test_ids, pool_ids = order[:test_size], order[test_size:]
    labels = pool.hidden_labels()
    a = Pool(pool.x[pool_ids], labels[pool_ids], pool.num_classes, pool.label_fn)
    b = Pool(pool.x[test_ids], labels[test_ids], pool.num_classes, pool.label_fn)
    if hasattr(pool, "image_shape"):
        a.image_shape = pool.image_shape
        b.image_shape = pool.image_shape
    return a, b


def _initial_indices(pool: Pool, count: int, stratified: bool,
                     rng: np.random.Generator) -> np.ndarray:
    if count > len(pool):
        raise ConfigError("initial labeled count exceeds pool size")
    if not stratified:
        return rng.choice(len(pool), size=count, replace=False)
    labels = pool.hidden_labels()
    chosen: list[int] = []
    # proportional allocation, largest remainder
    quotas = []
    for c in range(pool.num_classes):
        ids = np.flatnonzero(labels == c)
        share = count * ids.size / len(pool)
        quotas.append((c, ids, int(share), share - int(share)))
    assigned = sum(q[2] for q in quotas)
    quotas.sort(key=lambda q: -q[3])
    extras = count - assigned
    for rank, (c, ids, base, _) in enumerate(quotas):
        take = min(base + (1 if rank < extras else 0), ids.size)
        if take:
            chosen.extend(rng.choice(ids, size=take, replace=False))
    chosen = np.asarray(sorted(chosen), dtype=np.int64)
    if chosen.size < count:  # top up from the remainder if classes ran dry
        left = np.setdiff1d(np.arange(len(pool)), chosen)
        chosen = np.concatenate([chosen, rng.choice(left, size=count - chosen.size,
                                                    replace=False)])
    return chosen


class _Preprocessed:
    """Frozen matching context built once per run (except F_CLS mode)."""

    def __init__(self):
        self.generator = None
        self.extractor: FeatureExtractor | None = None
        self.pca: PcaModel | None = None
        self.feature_set: FeatureSet | None = None
        self.tree: KdTree | None = None
        self.times: dict[str, float] = {}


def _needs_matching(strategy: str) -> bool:
    return strategy in ("asal", "asal_overgen")


def _needs_generator(strategy: str) -> bool:
    return strategy in ("asal", "asal_overgen", "gaal")


def _resolve_pca_k(cfg: ExperimentConfig, feature_dim: int, pool_size: int) -> int:
    if cfg.pca_k is None:
        return min(50, feature_dim, pool_size)
    if cfg.pca_k > min(feature_dim, pool_size):
        raise ConfigError(f"pca_k={cfg.pca_k} exceeds feature dim {feature_dim}")
    return cfg.pca_k


def _prepare(cfg: ExperimentConfig, pool: Pool, seed: int) -> _Preprocessed:
    prep = _Preprocessed()
    strategy = cfg.strategy
    ae = None

    need_ae = cfg.extractor == "autoencoder" and _needs_matching(strategy)
    want_decoder = _needs_generator(strategy) and (
        cfg.generator == "decoder" or
        (cfg.generator == "auto" and not hasattr(pool, "mixture_means")))
    if need_ae or want_decoder:
        t0 = time.perf_counter()
        ae_cfg = dict(cfg.autoencoder)
        code_dim = ae_cfg.pop("code_dim", max(2, min(8, pool.dim - 1)))
        hidden = tuple(ae_cfg.pop("hidden", ()))
        linear = ae_cfg.pop("linear", False)
        ae = train_autoencoder(pool.x, code_dim, hidden, linear,
                               TrainConfig(**ae_cfg) if ae_cfg else TrainConfig(epochs=40),
                               np.random.default_rng(np.random.SeedSequence([seed, 0xAE])))
        prep.times["autoencoder_s"] = time.perf_counter() - t0

    if _needs_generator(strategy):
        t0 = time.perf_counter()
        if want_decoder:
            prep.generator = DecoderGenerator(ae)
        else:
            if not hasattr(pool, "mixture_means"):
                raise ConfigError("mixture generator requires a gaussian-mixture dataset")
            prep.generator = data_module.mixture_generator(pool, seed=seed)
        prep.times["generator_s"] = time.perf_counter() - t0

    if _needs_matching(strategy):
        if cfg.extractor == "raw":
            prep.extractor = FeatureExtractor("raw")
        elif cfg.extractor == "autoencoder":
            prep.extractor = FeatureExtractor("autoencoder", ae)
        elif cfg.extractor == "critic":
            t0 = time.perf_counter()
            critic_cfg = dict(cfg.critic)
            hidden = tuple(critic_cfg.pop("hidden", (32,)))
            critic = train_critic(pool.x, prep.generator,
                                  TrainConfig(**critic_cfg) if critic_cfg else None,
                                  np.random.default_rng(np.random.SeedSequence([seed, 0xC817])),
                                  hidden)
            prep.times["critic_s"] = time.perf_counter() - t0
            prep.extractor = FeatureExtractor("critic", critic)
        elif cfg.extractor == "classifier":
            prep.extractor = None  # rebuilt every cycle with the live classifier
        else:
            raise ConfigError(f"unknown extractor {cfg.extractor!r}")

        if prep.extractor is not None:
            t0 = time.perf_counter()
            feats = prep.extractor.extract(pool.x)
            prep.times["feature_extraction_s"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            prep.pca = fit_pca(feats, _resolve_pca_k(cfg, feats.shape[1], len(pool)))
            prep.times["pca_fit_s"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            prep.feature_set = build_feature_set(pool.x, prep.extractor, prep.pca)
            prep.tree = KdTree(prep.feature_set.matrix)
            prep.times["tree_build_s"] = time.perf_counter() - t0
    return prep


def _fcls_context(cfg: ExperimentConfig, pool: Pool, classifier: Classifier):
    """Per-cycle feature rebuild for the classifier-features mode (O(n) each cycle)."""
    extractor = FeatureExtractor("classifier", classifier)
    feats = extractor.extract(pool.x)
    pca = fit_pca(feats, _resolve_pca_k(cfg, feats.shape[1], len(pool)))
    fs = build_feature_set(pool.x, extractor, pca)
    return extractor, pca, fs, KdTree(fs.matrix)


def run_experiment(cfg: ExperimentConfig, seed: int,
                   oracle_factory=None, on_cycle=None) -> ExperimentResult:
    """Run the full loop for one seed. `on_cycle` sees each record as it is emitted."""
    pool, test = build_dataset(cfg.dataset, seed)
    if cfg.budget > len(pool):
        raise ConfigError(f"budget {cfg.budget} exceeds pool size {len(pool)}")
    oracle = (oracle_factory(pool, test) if oracle_factory is not None
              else SimulatedOracle(pool))
    test_y = test.hidden_labels()

    prep = _prepare(cfg, pool, seed)
    init_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1A17]))
    initial_ids = _initial_indices(pool, cfg.initial, cfg.stratified_init, init_rng)

    mask = QueryMask(len(pool))
    train_ids: list[int] = []
    train_labels: list[int] = []
    for i, lab in zip(initial_ids, oracle.label_indices(initial_ids)):
        if lab is None:
            continue
        mask.mark(int(i))
        train_ids.append(int(i))
        train_labels.append(int(lab))
    extra_x: list[np.ndarray] = []
    extra_y: list[int] = []

    train_cfg = TrainConfig(**cfg.classifier_train) if cfg.classifier_train else TrainConfig(epochs=60)
    syn_cfg = SynthesisConfig(**cfg.synthesis) if cfg.synthesis else SynthesisConfig()

    records: list[CycleMetrics] = []
    status = "completed"
    cycle = 0

    def labeled_count() -> int:
        return len(train_ids) + len(extra_y)

    def emit(rec: CycleMetrics):
        records.append(rec)
        if on_cycle is not None:
            on_cycle(rec)

    while True:
        x_parts = [pool.x[np.asarray(train_ids, dtype=np.int64)]]
        y_parts = [np.asarray(train_labels, dtype=np.int64)]
        if extra_x:
            x_parts.append(np.asarray(extra_x, dtype=np.float64))
            y_parts.append(np.asarray(extra_y, dtype=np.int64))
        x_train = np.vstack(x_parts)
        y_train = np.concatenate(y_parts)

        clf = train_classifier(
            x_train, y_train, pool.num_classes, cfg.classifier_hidden, train_cfg,
            np.random.default_rng(np.random.SeedSequence([seed, cycle, 0xC1F])))
        acc = evaluate(clf, test.x, test_y)

        if labeled_count() >= cfg.budget:
            emit(_make_record(cfg, seed, cycle, labeled_count(), acc, None, None,
                              y_train, pool.num_classes))
            break

        sel_rng = np.random.default_rng(np.random.SeedSequence([seed, cycle, 0x5E1]))
        t_extra = 0.0
        extractor, pca, fs, tree = prep.extractor, prep.pca, prep.feature_set, prep.tree
        if _needs_matching(cfg.strategy) and cfg.extractor == "classifier":
            t0 = time.perf_counter()
            extractor, pca, fs, tree = _fcls_context(cfg, pool, clf)
            t_extra = time.perf_counter() - t0

        req = SelectionRequest(
            pool=pool, mask=mask, classifier=clf, count=cfg.new_per_cycle,
            rng=sel_rng, generator=prep.generator, extractor=extractor, pca=pca,
            tree=tree, feature_set=fs, synthesis=syn_cfg, oracle=oracle,
            overgenerate=cfg.overgenerate, neighbors=cfg.neighbors)
        try:
            selection = select(cfg.strategy, req)
        except PoolExhaustedError:
            status = "truncated"
            emit(_make_record(cfg, seed, cycle, labeled_count(), acc, None, None,
                              y_train, pool.num_classes))
            break

        new_x, added = _annotate_and_extend(
            cfg, pool, oracle, selection, mask, train_ids, train_labels,
            extra_x, extra_y, tree)
        new_entropy = (float(entropy(clf.predict_proba(new_x)).mean())
                       if new_x is not None and len(new_x) else None)
        emit(_make_record(cfg, seed, cycle, labeled_count() - added, acc,
                          new_entropy, selection.wall_time + t_extra,
                          y_train, pool.num_classes))
        if added == 0:
            status = "truncated"
            break
        cycle += 1

    return ExperimentResult(records=records, preprocessing_s=prep.times,
                            status=status, seed=seed,
                            cycles_completed=sum(1 for r in records if r.selection_s is not None),
                            final_classifier=clf, labeled_indices=list(train_ids))


def _make_record(cfg, seed, cycle, labeled, acc, new_entropy, sel_time,
                 y_train, num_classes) -> CycleMetrics:
    counts = np.bincount(y_train, minlength=num_classes).tolist()
    return CycleMetrics(cycle=cycle, labeled=int(labeled), accuracy=acc,
                        new_mean_entropy=new_entropy, class_counts=counts,
                        selection_s=sel_time, strategy=cfg.strategy, seed=seed)


def _annotate_and_extend(cfg, pool, oracle, selection: Selection, mask,
                         train_ids, train_labels, extra_x, extra_y, tree):
    """Oracle annotation with skip handling. Returns (new sample matrix, #added)."""
    if selection.synthetic is not None:
        for row, lab in zip(selection.synthetic, selection.synthetic_labels):
            extra_x.append(np.asarray(row))
            extra_y.append(int(lab))
        n = len(selection.synthetic_labels)
        return (selection.synthetic if n else None), n

    indices = [int(i) for i in selection.indices]
    queries = selection.queries
    added_ids: list[int] = []
    # whole batches go to the oracle at once; skips become a replacement batch
    batch = list(enumerate(indices))
    while batch:
        labels = oracle.label_indices([idx for _, idx in batch])
        replacements: list[tuple[int, int]] = []
        for (pos, idx), label in zip(batch, labels):
            mask.mark(idx)  # consumed either way; idempotent
            if label is not None:
                train_ids.append(idx)
                train_labels.append(int(label))
                added_ids.append(idx)
                continue
            if queries is None or tree is None:
                continue  # skipped, no matching context to replace from
            try:
                # next-nearest unconsumed match takes the skipped sample's place
                nxt = int(tree.nearest(queries[pos], mask))
            except PoolExhaustedError:
                continue
            mask.mark(nxt)  # reserve so later replacements cannot collide
            replacements.append((pos, nxt))
        batch = replacements
    if not added_ids:
        return None, 0
    return pool.x[np.asarray(added_ids, dtype=np.int64)], len(added_ids)


def aggregate_seeds(series: list[list[CycleMetrics]]):
    """Per-checkpoint mean/min/max accuracy across equal-length seed series."""
    if not series:
        raise ValueError("no series to aggregate")
    length = len(series[0])
    for s in series:
        if len(s) != length:
            raise ValueError(f"ragged series: lengths {[len(s) for s in series]}")
    out = []
    for i in range(length):
        labeled = {s[i].labeled for s in series}
        if len(labeled) != 1:
            raise ValueError(f"checkpoint {i} misaligned: labeled counts {sorted(labeled)}")
        accs = [s[i].accuracy for s in series]
        out.append({"labeled": labeled.pop(), "mean": float(np.mean(accs)),
                    "min": float(min(accs)), "max": float(max(accs))})
    return out


def write_metrics(path, records: list[CycleMetrics]) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({"metrics_version": METRICS_VERSION}) + "\n")
        for rec in records:
            f.write(json.dumps(rec.to_json()) + "\n")


def read_metrics(path) -> list[dict]:
    with open(path) as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get("metrics_version") != METRICS_VERSION:
        raise ConfigError(f"unsupported metrics file: {path}")
    return lines[1:]
