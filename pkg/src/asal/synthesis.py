"""Latent-space entropy maximization.

Gradient *ascent* on the classifier's predictive entropy H(h(G(z))) with
respect to the latent batch z, run as Adam descent on -H. The routine never
touches the pool, so its cost is independent of pool size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import AdamState, Matrix, NumericError, adam_step, as_matrix, entropy, entropy_grad
from .models import Classifier, Generator, sample_latent


@dataclass
class SynthesisConfig:
    steps: int = 100
    learning_rate: float = 0.05
    batch_size: int = 10

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")


@dataclass
class SyntheticBatch:
    latents: Matrix          # final z, batch x n
    samples: Matrix          # G(z) re-evaluated at the final z
    initial_entropy: np.ndarray
    final_entropy: np.ndarray


def entropy_latent_gradient(generator: Generator, classifier: Classifier,
                            z: Matrix) -> Matrix:
    """dH(h(G(z)))/dz per latent row; rows are independent."""
    z = as_matrix(z)
    x = generator.generate(z)
    probs = classifier.mlp.forward(x, cache=True)
    dprobs = entropy_grad(probs)
    _, dx = classifier.mlp.backward(dprobs)
    return generator.vjp(z, dx)


def synthesize_uncertain(generator: Generator, classifier: Classifier,
                         cfg: SynthesisConfig, rng: np.random.Generator) -> SyntheticBatch:
    """Produce a batch of high-entropy synthetic samples.

    All latents of the batch are optimized jointly; per-row gradients do not
    interact. Latents that lose entropy are kept (no rejection).
    """
    if generator.out_dim != classifier.in_dim:
        raise ValueError(
            f"generator output dim {generator.out_dim} != classifier input dim {classifier.in_dim}")
    z = sample_latent(cfg.batch_size, generator.latent_dim, rng)
    initial = entropy(classifier.predict_proba(generator.generate(z)))[:, 0].copy()
    state = AdamState.fresh([z], alpha=cfg.learning_rate)
    for step in range(cfg.steps):
        grad = entropy_latent_gradient(generator, classifier, z)
        if not np.isfinite(grad).all():
            raise NumericError(f"non-finite entropy gradient at step {step}")
        # ascent on H == descent on -H
        z = adam_step([z], [-grad], state)[0]
    samples = generator.generate(z)
    final = entropy(classifier.predict_proba(samples))[:, 0].copy()
    if not np.isfinite(final).all():
        raise NumericError(f"non-finite entropy after {cfg.steps} steps")
    return SyntheticBatch(latents=z, samples=samples,
                          initial_entropy=initial, final_entropy=final)
