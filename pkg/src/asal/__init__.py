"""Active learning by adversarial sample synthesis and sub-linear pool matching.

Synthetic samples are pushed toward maximum classifier entropy in a
generator's latent space, then matched to their nearest real pool samples
in a PCA-compressed feature space indexed by a k-d tree. Baseline
strategies, a simulated/human oracle loop, and a selection-time scaling
harness round out the package.
"""

from .bench import ScalingReport, TimingRecord, time_selection, transition_point
from .data import (
    GaussianMixtureSpec,
    Pool,
    TwoMoonsSpec,
    load_csv,
    load_idx,
    make_gaussian_mixture,
    make_two_moons,
    mixture_generator,
)
from .features import FeatureExtractor, FeatureSet, PcaModel, build_feature_set, fit_pca
from .loop import (
    CycleMetrics,
    ExperimentConfig,
    ExperimentResult,
    Oracle,
    SimulatedOracle,
    aggregate_seeds,
    evaluate,
    run_experiment,
)
from .matching import KdTree, PoolExhaustedError, QueryMask
from .models import (
    AnalyticMixtureGenerator,
    Autoencoder,
    Classifier,
    ConfigError,
    Critic,
    DecoderGenerator,
    Generator,
    load_checkpoint,
    sample_latent,
    save_checkpoint,
    train_autoencoder,
    train_classifier,
    train_critic,
)
from .numerics import (
    AdamState,
    LayerSpec,
    Mlp,
    NumericError,
    adam_step,
    entropy,
    linear_forward,
    softmax,
)
from .strategies import STRATEGIES, Selection, SelectionRequest, select
from .synthesis import SynthesisConfig, SyntheticBatch, entropy_latent_gradient, synthesize_uncertain

__version__ = "0.1.0"
