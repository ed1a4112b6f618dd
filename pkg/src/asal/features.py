"""Feature extraction and PCA compression for the sample-matching space.

Four extractor variants map samples to a feature space: the identity (raw
values), a trained autoencoder's encoder, the critic's penultimate layer,
and the classifier's penultimate layer. PCA then compresses the features so
nearest-neighbour matching stays fast. The compressed pool features form a
FeatureSet built once, before the learning loop starts.
"""

from __future__ import annotations

import zipfile
from dataclasses import dataclass

import numpy as np

from .models import Autoencoder, Classifier, ConfigError, Critic
from .numerics import Matrix, as_matrix

FEATURESET_VERSION = 1

EXTRACTOR_VARIANTS = ("raw", "autoencoder", "critic", "classifier")


class FeatureExtractor:
    """Fixed map from samples to matching features.

    The "classifier" variant tracks the live classifier, so its features go
    stale on retraining and must be recomputed every cycle; the other
    variants are frozen after pre-processing.
    """

    def __init__(self, variant: str, model=None):
        if variant not in EXTRACTOR_VARIANTS:
            raise ConfigError(f"unknown extractor {variant!r}, expected one of {EXTRACTOR_VARIANTS}")
        if variant == "autoencoder" and not isinstance(model, Autoencoder):
            raise ConfigError("autoencoder variant needs an Autoencoder")
        if variant == "critic" and not isinstance(model, Critic):
            raise ConfigError("critic variant needs a Critic")
        if variant == "classifier" and not isinstance(model, Classifier):
            raise ConfigError("classifier variant needs a Classifier")
        self.variant = variant
        self.model = model

    def extract(self, x: Matrix) -> Matrix:
        x = as_matrix(x)
        if self.variant == "raw":
            return x
        if self.variant == "autoencoder":
            return self.model.encode(x)
        if self.variant == "critic":
            return self.model.features(x)
        return self.model.penultimate(x)

    def rebind(self, model) -> None:
        """Swap the backing model (classifier variant after each retraining)."""
        self.model = model


@dataclass
class PcaModel:
    """Column mean and top-k orthonormal components, descending variance."""

    mean: np.ndarray        # (d,)
    components: Matrix      # k x d, row-orthonormal
    explained_variance: np.ndarray  # (k,)

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def project(self, x: Matrix) -> Matrix:
        return (as_matrix(x) - self.mean) @ self.components.T

    def reconstruct(self, proj: Matrix) -> Matrix:
        return as_matrix(proj) @ self.components + self.mean


def fit_pca(features: Matrix, k: int) -> PcaModel:
    """PCA by eigendecomposition of the covariance matrix.

    Components are ordered by descending eigenvalue; each is sign-fixed so
    its largest-magnitude entry is positive. When k exceeds the data rank
    the eigenbasis still completes the requested k rows orthonormally.
    """
    x = as_matrix(features)
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least 2 samples to fit PCA")
    if k < 1 or k > min(n, d):
        raise ValueError(f"k={k} must be in [1, min(n, d)={min(n, d)}]")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    comps = eigvecs[:, order].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=comps,
                    explained_variance=np.maximum(eigvals[order], 0.0))


@dataclass
class FeatureSet:
    """Compressed pool features, row i aligned to pool index i."""

    matrix: Matrix

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def save(self, path) -> None:
        np.savez(path, version=np.array([FEATURESET_VERSION]), matrix=self.matrix)

    @classmethod
    def load(cls, path) -> "FeatureSet":
        try:
            with np.load(path) as data:
                if "version" not in data or int(data["version"][0]) != FEATURESET_VERSION:
                    raise ConfigError(f"unsupported feature-set version in {path}")
                return cls(matrix=data["matrix"])
        except (zipfile.BadZipFile, KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"not a feature-set file: {path}") from exc


def build_feature_set(pool_x: Matrix, extractor: FeatureExtractor, pca: PcaModel,
                      chunk: int = 65536) -> FeatureSet:
    """Extract + project every pool sample. Pure pre-processing, chunked for memory."""
    pool_x = as_matrix(pool_x)
    n = pool_x.shape[0]
    out = np.empty((n, pca.k))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        out[start:stop] = pca.project(extractor.extract(pool_x[start:stop]))
    return FeatureSet(matrix=out)
