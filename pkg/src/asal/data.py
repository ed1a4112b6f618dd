"""Pools and test sets.

Synthetic generators (Gaussian mixture, two moons) for desk-scale
experiments, plus CSV and IDX ingestion for external data. Pool and test
samples are always drawn disjointly, deterministically per seed.

The mixture pool also carries the generative ground truth: a labeling
function for arbitrary points (needed when synthetic samples are labeled
directly) and the component parameters from which an analytic generator
can be built.
"""

from __future__ import annotations

import csv as csv_module
import struct
from dataclasses import dataclass

import numpy as np

from .models import AnalyticMixtureGenerator, ConfigError
from .numerics import Matrix, as_matrix

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class Pool:
    """Fixed collection of unlabeled samples with hidden ground-truth labels.

    Labels are stored privately; the oracle is the only component that
    should read them. `label_fn`, when present, labels arbitrary points in
    sample space (available for generative pools only).
    """

    def __init__(self, samples: Matrix, labels: np.ndarray, num_classes: int,
                 label_fn=None):
        self.x = as_matrix(samples)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (self.x.shape[0],):
            raise ValueError("one label per sample required")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise ValueError("labels out of range")
        self._labels = labels
        self.num_classes = num_classes
        self.label_fn = label_fn

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def hidden_labels(self) -> np.ndarray:
        """Ground truth; for oracle and evaluation use only."""
        return self._labels


@dataclass
class GaussianMixtureSpec:
    """K Gaussian components in `dim` dimensions with controllable overlap.

    `overlap` is the ratio of within-component standard deviation to the
    component spread radius: ~0.1 gives nearly separable classes, ~0.5
    heavily mixed ones. Means are placed deterministically on a sphere of
    radius `radius` unless given explicitly. `class_map` folds components
    onto classes (identity by default).
    """

    num_components: int = 8
    dim: int = 10
    pool_size: int = 10_000
    test_size: int = 2_000
    overlap: float = 0.25
    radius: float = 4.0
    means: np.ndarray | None = None
    class_map: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None
    # when set, the whole mixture (means and spreads) lives in a shared
    # `intrinsic_dim`-dimensional subspace plus a tiny isotropic floor,
    # mimicking feature spaces that concentrate near a low-dim manifold
    intrinsic_dim: int | None = None

    def __post_init__(self):
        if self.num_components < 2:
            raise ConfigError("need at least 2 components")
        if self.overlap < 0:
            raise ConfigError("overlap must be non-negative (0 collapses classes onto their means)")
        if self.intrinsic_dim is not None:
            if not 1 <= self.intrinsic_dim <= self.dim:
                raise ConfigError("intrinsic_dim must be in [1, dim]")
            if self.means is not None:
                raise ConfigError("explicit means cannot be combined with intrinsic_dim")

    @property
    def sigma(self) -> float:
        return self.overlap * self.radius

    @property
    def num_classes(self) -> int:
        if self.class_map is None:
            return self.num_components
        return max(self.class_map) + 1

    def component_means(self, rng: np.random.Generator) -> Matrix:
        if self.means is not None:
            m = as_matrix(self.means)
            if m.shape != (self.num_components, self.dim):
                raise ConfigError("means must be K x dim")
            return m
        # deterministic spread: random directions pushed to the sphere
        raw = rng.standard_normal((self.num_components, self.dim))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if (norms == 0).any():
            raise ConfigError("degenerate mean directions")
        return self.radius * raw / norms

    def component_class(self, k: int) -> int:
        return k if self.class_map is None else self.class_map[k]


def make_gaussian_mixture(spec: GaussianMixtureSpec, seed: int) -> tuple[Pool, Pool]:
    """Draw disjoint (pool, test) sets from the mixture; deterministic per seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDA7A]))
    weights = (np.full(spec.num_components, 1.0 / spec.num_components)
               if spec.weights is None else np.asarray(spec.weights, dtype=np.float64))
    if weights.shape != (spec.num_components,) or not np.isclose(weights.sum(), 1.0):
        raise ConfigError("weights must be a distribution over components")

    total = spec.pool_size + spec.test_size
    comps = rng.choice(spec.num_components, size=total, p=weights)
    factors = None
    if spec.intrinsic_dim is None:
        means = spec.component_means(rng)
        x = means[comps] + spec.sigma * rng.standard_normal((total, spec.dim))
    else:
        # draw the mixture in r dimensions, then embed it in the ambient space
        r = spec.intrinsic_dim
        embed = _random_semi_orthogonal(spec.dim, r, rng)  # d x r
        raw = rng.standard_normal((spec.num_components, r))
        low_means = spec.radius * raw / np.linalg.norm(raw, axis=1, keepdims=True)
        low = low_means[comps] + spec.sigma * rng.standard_normal((total, r))
        means = low_means @ embed.T
        x = low @ embed.T + 0.02 * spec.sigma * rng.standard_normal((total, spec.dim))
        factors = [spec.sigma * embed for _ in range(spec.num_components)]
    labels = np.array([spec.component_class(k) for k in comps], dtype=np.int64)

    def label_fn(points: Matrix) -> np.ndarray:
        # maximum-likelihood component under shared isotropic covariance
        pts = as_matrix(points)
        d2 = ((pts[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        comp = d2.argmin(axis=1)
        return np.array([spec.component_class(k) for k in comp], dtype=np.int64)

    pool = Pool(x[:spec.pool_size], labels[:spec.pool_size], spec.num_classes, label_fn)
    test = Pool(x[spec.pool_size:], labels[spec.pool_size:], spec.num_classes, label_fn)
    pool.mixture_means = means
    pool.mixture_sigma = spec.sigma
    pool.mixture_factors = factors
    return pool, test


def mixture_generator(pool: Pool, latent_dim: int | None = None,
                      temperature: float = 0.25, latent_squash: float | None = 3.0,
                      seed: int = 0) -> AnalyticMixtureGenerator:
    """Analytic generator matching a mixture pool's generative parameters.

    The default latent squash bounds outputs to the populated ~3-sigma
    region, standing in for the saturating output layer of a trained
    decoder; pass None for an unbounded map.
    """
    if not hasattr(pool, "mixture_means"):
        raise ConfigError("pool was not built from a Gaussian mixture")
    means = pool.mixture_means
    k, d = means.shape
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6E9]))
    if getattr(pool, "mixture_factors", None) is not None:
        factors = [f.copy() for f in pool.mixture_factors]
    else:
        n = latent_dim if latent_dim is not None else d
        factor = pool.mixture_sigma * _random_semi_orthogonal(d, n, rng)
        factors = [factor for _ in range(k)]
    return AnalyticMixtureGenerator(means, factors, temperature=temperature,
                                    latent_squash=latent_squash, rng=rng)


def _random_semi_orthogonal(d: int, n: int, rng: np.random.Generator) -> Matrix:
    a = rng.standard_normal((max(d, n), min(d, n)))
    q, _ = np.linalg.qr(a)
    q = q[:, :min(d, n)]
    return q if d >= n else q.T


@dataclass
class TwoMoonsSpec:
    pool_size: int = 2_000
    test_size: int = 500
    noise: float = 0.1
    radius: float = 1.0


def make_two_moons(spec: TwoMoonsSpec, seed: int) -> tuple[Pool, Pool]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x3005]))
    total = spec.pool_size + spec.test_size
    labels = rng.integers(0, 2, size=total)
    t = rng.uniform(0.0, np.pi, size=total)
    x = np.empty((total, 2))
    x[:, 0] = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t)) * spec.radius
    x[:, 1] = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t)) * spec.radius
    x += spec.noise * rng.standard_normal((total, 2))
    pool = Pool(x[:spec.pool_size], labels[:spec.pool_size], 2)
    test = Pool(x[spec.pool_size:], labels[spec.pool_size:], 2)
    return pool, test


# ---------------------------------------------------------------------------
# IDX format (big-endian magic, dimension sizes, unsigned bytes)

def _read_be_u32(f) -> int:
    data = f.read(4)
    if len(data) != 4:
        raise ValueError("truncated IDX file")
    return struct.unpack(">I", data)[0]


def load_idx(images_path, labels_path) -> Pool:
    """Parse an IDX image/label pair into a flat-feature pool, pixels in [0, 1]."""
    with open(images_path, "rb") as f:
        magic = _read_be_u32(f)
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(f"image magic mismatch: got {magic:#010x}, want {IDX_IMAGE_MAGIC:#010x}")
        count = _read_be_u32(f)
        rows = _read_be_u32(f)
        cols = _read_be_u32(f)
        raw = f.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise ValueError("truncated IDX image data")
        images = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
        images = images.reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        magic = _read_be_u32(f)
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(f"label magic mismatch: got {magic:#010x}, want {IDX_LABEL_MAGIC:#010x}")
        label_count = _read_be_u32(f)
        raw = f.read(label_count)
        if len(raw) != label_count:
            raise ValueError("truncated IDX label data")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if label_count != count:
        raise ValueError(f"label count {label_count} != image count {count}")
    num_classes = int(labels.max()) + 1 if labels.size else 1
    pool = Pool(images, labels, max(num_classes, 2))
    pool.image_shape = (rows, cols)
    return pool


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Inverse of load_idx for fixtures and caching; expects pixels in [0, 1]."""
    images = np.asarray(images)
    if images.ndim == 2:
        side = int(round(np.sqrt(images.shape[1])))
        images = images.reshape(images.shape[0], side, side)
    count, rows, cols = images.shape
    pixel_bytes = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, count, rows, cols))
        f.write(pixel_bytes.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, count))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------------------
# CSV ingestion

def load_csv(path, label_column: str | int, num_classes: int | None = None) -> Pool:
    """Numeric CSV to pool; header optional when the label column is an index."""
    with open(path, newline="") as f:
        reader = csv_module.reader(f)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"empty CSV file: {path}")

    header = None
    if isinstance(label_column, str):
        header = rows[0]
        if label_column not in header:
            raise ConfigError(f"label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
        rows = rows[1:]
    else:
        label_idx = label_column
        if _looks_like_header(rows[0]):
            rows = rows[1:]
    if not rows:
        raise ValueError(f"CSV has a header but no data rows: {path}")
    if not 0 <= label_idx < len(rows[0]):
        raise ConfigError(f"label column index {label_idx} out of range")

    features, labels = [], []
    for r, row in enumerate(rows):
        vals = []
        for c, cell in enumerate(row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ValueError(f"non-numeric cell at row {r + 1}, column {c + 1}: {cell!r}")
        labels.append(int(vals.pop(label_idx)))
        features.append(vals)
    labels = np.asarray(labels, dtype=np.int64)
    m = num_classes if num_classes is not None else int(labels.max()) + 1
    return Pool(np.asarray(features, dtype=np.float64), labels, max(m, 2))


def _looks_like_header(row: list[str]) -> bool:
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return True
    return False


# ---------------------------------------------------------------------------
# Pool cache (versioned binary)

POOL_CACHE_VERSION = 1


def save_pool(path, pool: Pool) -> None:
    np.savez(path, version=np.array([POOL_CACHE_VERSION]), x=pool.x,
             labels=pool._labels, num_classes=np.array([pool.num_classes]))


def load_pool(path) -> Pool:
    with np.load(path) as data:
        if int(data["version"][0]) != POOL_CACHE_VERSION:
            raise ConfigError(f"unsupported pool cache version in {path}")
        return Pool(data["x"], data["labels"], int(data["num_classes"][0]))
