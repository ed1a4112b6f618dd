"""Trainable actors of the active-learning loop.

Classifier (softmax MLP), Autoencoder (encoder/decoder pair), Critic
(real-vs-generated logistic discriminator with an accessible penultimate
feature layer), and two Generator implementations: an analytic Gaussian
mixture with exact gradients, and a trained autoencoder decoder.

Checkpoints are JSON with hex-encoded float64 parameters so a round trip
is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numerics import (
    AdamState,
    LayerSpec,
    Matrix,
    Mlp,
    adam_step,
    as_matrix,
)

CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Invalid model or training configuration."""


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")


def _minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _train_adam(mlps: list[Mlp], step_grads, n: int, cfg: TrainConfig,
                rng: np.random.Generator) -> list[float]:
    """Minibatch Adam over the joint parameters of `mlps`.

    `step_grads(idx)` runs forward/backward on the batch and must return
    (mean batch loss, flat gradient list aligned with the joint parameters).
    Returns per-epoch mean losses.
    """
    def flat():
        out = []
        for m in mlps:
            out.extend(m.flat_params())
        return out

    def unflat(values):
        pos = 0
        for m in mlps:
            k = 2 * len(m.params)
            m.set_flat_params(values[pos:pos + k])
            pos += k

    state = AdamState.fresh(flat(), alpha=cfg.learning_rate)
    losses = []
    for _ in range(cfg.epochs):
        epoch_loss = 0.0
        for idx in _minibatches(n, cfg.batch_size, rng):
            loss, grads = step_grads(idx)
            unflat(adam_step(flat(), grads, state))
            epoch_loss += loss * len(idx)
        losses.append(epoch_loss / n)
    return losses


# ---------------------------------------------------------------------------
# Classifier

class Classifier:
    """Layer stack ending in softmax over m >= 2 classes."""

    def __init__(self, in_dim: int, num_classes: int, hidden: tuple[int, ...] = (),
                 rng: np.random.Generator | None = None):
        if num_classes < 2:
            raise ConfigError("need at least 2 classes")
        rng = rng if rng is not None else np.random.default_rng(0)
        layers = []
        width = in_dim
        for h in hidden:
            layers.append(LayerSpec("linear", width, h))
            layers.append(LayerSpec("relu"))
            width = h
        layers.append(LayerSpec("linear", width, num_classes))
        layers.append(LayerSpec("softmax"))
        self.mlp = Mlp(layers, rng)
        self.in_dim = in_dim
        self.num_classes = num_classes
        self.hidden = tuple(hidden)

    def predict_proba(self, x: Matrix, cache: bool = False) -> Matrix:
        return self.mlp.forward(as_matrix(x), cache=cache)

    def predict(self, x: Matrix) -> np.ndarray:
        # numpy argmax already breaks ties toward the lowest class index
        return self.predict_proba(x).argmax(axis=1)

    def penultimate(self, x: Matrix) -> Matrix:
        """Activations feeding the final linear layer."""
        last_linear = len(self.mlp.layers) - 2  # [..., linear, softmax]
        return self.mlp.forward(as_matrix(x), cache=False, upto=last_linear)

    @property
    def is_linear_binary(self) -> bool:
        return self.num_classes == 2 and not self.hidden

    def decision_params(self) -> tuple[np.ndarray, float]:
        """(w, b) of the binary margin w.x + b; requires a linear binary model."""
        if not self.is_linear_binary:
            raise ConfigError("decision_params requires a linear binary classifier")
        w, b = self.mlp.params[0]
        return (w[:, 1] - w[:, 0]).copy(), float(b[0, 1] - b[0, 0])


def train_classifier(x: Matrix, y: np.ndarray, num_classes: int,
                     hidden: tuple[int, ...] = (),
                     cfg: TrainConfig | None = None,
                     rng: np.random.Generator | None = None) -> Classifier:
    """Train a fresh classifier with cross-entropy; restarted from scratch each call."""
    x = as_matrix(x)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    if y.min() < 0 or y.max() >= num_classes:
        raise ValueError("labels out of range")
    cfg = cfg or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    clf = Classifier(x.shape[1], num_classes, hidden, rng)

    onehot = np.zeros((x.shape[0], num_classes))
    onehot[np.arange(x.shape[0]), y] = 1.0

    def step(idx):
        probs = clf.mlp.forward(x[idx])
        p_true = np.clip(probs[np.arange(len(idx)), y[idx]], 1e-12, None)
        loss = -np.log(p_true).mean()
        # d(-log p_y)/dprobs, averaged over the batch, fed through softmax backward
        dprobs = np.zeros_like(probs)
        dprobs[np.arange(len(idx)), y[idx]] = -1.0 / (p_true * len(idx))
        grads, _ = clf.mlp.backward(dprobs)
        return loss, _flatten(grads)

    clf.train_losses = _train_adam([clf.mlp], step, x.shape[0], cfg, rng)
    return clf


def _flatten(pairs):
    out = []
    for w, b in pairs:
        out.extend((w, b))
    return out


# ---------------------------------------------------------------------------
# Autoencoder

class Autoencoder:
    """Encoder X -> F and decoder F -> X with code width < input width."""

    def __init__(self, in_dim: int, code_dim: int, hidden: tuple[int, ...] = (),
                 linear: bool = False, rng: np.random.Generator | None = None):
        if code_dim >= in_dim:
            raise ConfigError(f"code_dim {code_dim} must be < input dim {in_dim}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim, self.code_dim = in_dim, code_dim
        self.hidden, self.linear = tuple(hidden), linear
        enc, dec = [], []
        width = in_dim
        for h in hidden:
            enc.append(LayerSpec("linear", width, h))
            if not linear:
                enc.append(LayerSpec("tanh"))
            width = h
        enc.append(LayerSpec("linear", width, code_dim))
        width = code_dim
        for h in reversed(hidden):
            dec.append(LayerSpec("linear", width, h))
            if not linear:
                dec.append(LayerSpec("tanh"))
            width = h
        dec.append(LayerSpec("linear", width, in_dim))
        self.encoder = Mlp(enc, rng)
        self.decoder = Mlp(dec, rng)

    def encode(self, x: Matrix) -> Matrix:
        return self.encoder.forward(as_matrix(x), cache=False)

    def decode(self, f: Matrix) -> Matrix:
        return self.decoder.forward(as_matrix(f), cache=False)

    def reconstruct(self, x: Matrix) -> Matrix:
        return self.decode(self.encode(x))

    def reconstruction_mse(self, x: Matrix) -> float:
        x = as_matrix(x)
        d = self.reconstruct(x) - x
        return float((d * d).sum(axis=1).mean())


def train_autoencoder(x: Matrix, code_dim: int, hidden: tuple[int, ...] = (),
                      linear: bool = False, cfg: TrainConfig | None = None,
                      rng: np.random.Generator | None = None) -> Autoencoder:
    """Minimize mean squared reconstruction error over the pool."""
    x = as_matrix(x)
    if x.shape[0] == 0:
        raise ValueError("empty pool")
    cfg = cfg or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    ae = Autoencoder(x.shape[1], code_dim, hidden, linear, rng)

    def step(idx):
        xb = x[idx]
        code = ae.encoder.forward(xb)
        recon = ae.decoder.forward(code)
        diff = recon - xb
        loss = float((diff * diff).sum(axis=1).mean())
        dout = 2.0 * diff / len(idx)
        dec_grads, dcode = ae.decoder.backward(dout)
        enc_grads, _ = ae.encoder.backward(dcode)
        return loss, _flatten(enc_grads) + _flatten(dec_grads)

    ae.train_losses = _train_adam([ae.encoder, ae.decoder], step, x.shape[0], cfg, rng)
    return ae


# ---------------------------------------------------------------------------
# Critic

class Critic:
    """Logistic real-vs-generated discriminator; penultimate layer is the feature map."""

    def __init__(self, in_dim: int, hidden: tuple[int, ...] = (32,),
                 rng: np.random.Generator | None = None):
        if not hidden:
            raise ConfigError("critic needs at least one hidden layer for features")
        rng = rng if rng is not None else np.random.default_rng(0)
        layers = []
        width = in_dim
        for h in hidden:
            layers.append(LayerSpec("linear", width, h))
            layers.append(LayerSpec("leaky_relu"))
            width = h
        layers.append(LayerSpec("linear", width, 1))
        layers.append(LayerSpec("sigmoid"))
        self.mlp = Mlp(layers, rng)
        self.in_dim = in_dim
        self.feature_dim = hidden[-1]

    def score(self, x: Matrix, cache: bool = False) -> Matrix:
        """P(real) per sample, column vector."""
        return self.mlp.forward(as_matrix(x), cache=cache)

    def features(self, x: Matrix) -> Matrix:
        last_linear = len(self.mlp.layers) - 2
        return self.mlp.forward(as_matrix(x), cache=False, upto=last_linear)


def train_critic(pool_x: Matrix, generator: "Generator",
                 cfg: TrainConfig | None = None,
                 rng: np.random.Generator | None = None,
                 hidden: tuple[int, ...] = (32,)) -> Critic:
    """Binary cross-entropy on real (label 1) vs generated (label 0) samples.

    Experimental caveat: this is a plain logistic discriminator, not an
    adversarially trained critic. Its penultimate features are data-set
    specific, but whether they rank nearest-neighbour matches the same way
    an adversarial critic's would is untested.
    """
    pool_x = as_matrix(pool_x)
    if pool_x.shape[0] == 0:
        raise ValueError("empty pool")
    cfg = cfg or TrainConfig(epochs=50)
    rng = rng if rng is not None else np.random.default_rng(0)
    critic = Critic(pool_x.shape[1], hidden, rng)

    fake = generator.generate(sample_latent(pool_x.shape[0], generator.latent_dim, rng))
    x = np.vstack([pool_x, fake])
    y = np.concatenate([np.ones(pool_x.shape[0]), np.zeros(fake.shape[0])])[:, None]

    def step(idx):
        s = critic.mlp.forward(x[idx])
        s_clip = np.clip(s, 1e-12, 1.0 - 1e-12)
        yb = y[idx]
        loss = float(-(yb * np.log(s_clip) + (1 - yb) * np.log(1 - s_clip)).mean())
        dout = (s_clip - yb) / (s_clip * (1 - s_clip) * len(idx))
        grads, _ = critic.mlp.backward(dout)
        return loss, _flatten(grads)

    critic.train_losses = _train_adam([critic.mlp], step, x.shape[0], cfg, rng)
    return critic


# ---------------------------------------------------------------------------
# Generators

def sample_latent(count: int, n: int, rng: np.random.Generator) -> Matrix:
    """i.i.d. standard normal latents, one row per sample."""
    if count < 1 or n < 1:
        raise ValueError("count and n must be >= 1")
    return rng.standard_normal((count, n))


class Generator:
    """Deterministic map from latent space to sample space with an exact VJP."""

    latent_dim: int
    out_dim: int

    def generate(self, z: Matrix) -> Matrix:
        raise NotImplementedError

    def vjp(self, z: Matrix, upstream: Matrix) -> Matrix:
        """Rows of d(upstream . G)/dz, one per latent row."""
        raise NotImplementedError


class AnalyticMixtureGenerator(Generator):
    """Smooth mixture-of-components generator with closed-form gradients.

    G(z) = sum_k w_k(z) (mu_k + B_k s(z)) where w = softmax(V z / tau) and
    s is the identity or, with `latent_squash` set, a tanh squashing that
    bounds outputs to the populated data region the way a trained decoder's
    saturating output layer does. With a single component and no squashing
    this reduces to mu + B z. No training involved, so its gradients are
    exact and isolate latent-optimization bugs from generator-training bugs.
    """

    def __init__(self, means: Matrix, factors: list[Matrix],
                 directions: Matrix | None = None, temperature: float = 1.0,
                 latent_squash: float | None = None,
                 rng: np.random.Generator | None = None):
        self.means = as_matrix(means)  # K x d
        k, d = self.means.shape
        self.factors = [np.asarray(f, dtype=np.float64) for f in factors]
        if len(self.factors) != k:
            raise ConfigError("one factor matrix per component required")
        n = self.factors[0].shape[1]
        for f in self.factors:
            if f.shape != (d, n):
                raise ConfigError("all factors must be d x n")
        if directions is None:
            if k == 1:
                directions = np.zeros((1, n))
            else:
                rng = rng if rng is not None else np.random.default_rng(0)
                directions = rng.standard_normal((k, n))
                directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        self.directions = as_matrix(directions)  # K x n
        if self.directions.shape != (k, n):
            raise ConfigError("directions must be K x n")
        if temperature <= 0:
            raise ConfigError("temperature must be positive")
        if latent_squash is not None and latent_squash <= 0:
            raise ConfigError("latent_squash must be positive")
        self.temperature = float(temperature)
        self.latent_squash = latent_squash
        self.latent_dim = n
        self.out_dim = d

    def _weights(self, z: Matrix) -> Matrix:
        s = z @ self.directions.T / self.temperature  # b x K
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)

    def _squash(self, z: Matrix) -> tuple[Matrix, Matrix | None]:
        if self.latent_squash is None:
            return z, None
        t = np.tanh(z / self.latent_squash)
        return self.latent_squash * t, 1.0 - t * t

    def generate(self, z: Matrix) -> Matrix:
        z = as_matrix(z)
        if not np.isfinite(z).all():
            raise ValueError("non-finite latent")
        w = self._weights(z)  # b x K
        sz, _ = self._squash(z)
        # components c_k(z) = mu_k + B_k s(z), stacked as b x K x d
        comps = np.stack([self.means[k] + sz @ self.factors[k].T
                          for k in range(self.means.shape[0])], axis=1)
        return (w[:, :, None] * comps).sum(axis=1)

    def vjp(self, z: Matrix, upstream: Matrix) -> Matrix:
        z, u = as_matrix(z), as_matrix(upstream)
        w = self._weights(z)  # b x K
        sz, dsz = self._squash(z)
        comps = np.stack([self.means[k] + sz @ self.factors[k].T
                          for k in range(self.means.shape[0])], axis=1)  # b x K x d
        # offset part: sum_k w_k B_k^T u, chained through the squash
        lin = np.zeros_like(z)
        for k in range(self.means.shape[0]):
            lin += w[:, k:k + 1] * (u @ self.factors[k])
        if dsz is not None:
            lin *= dsz
        # weight part through the softmax over component scores (raw z)
        a = (comps * u[:, None, :]).sum(axis=2)  # b x K, a_k = u . c_k
        dot = (w * a).sum(axis=1, keepdims=True)
        ds = w * (a - dot) / self.temperature  # b x K
        return lin + ds @ self.directions

    @classmethod
    def single(cls, mean: np.ndarray, factor: Matrix) -> "AnalyticMixtureGenerator":
        return cls(as_matrix(mean), [np.asarray(factor, dtype=np.float64)])


class DecoderGenerator(Generator):
    """A trained autoencoder's decoder used as the generator."""

    def __init__(self, autoencoder: Autoencoder):
        self.decoder = autoencoder.decoder
        self.latent_dim = autoencoder.code_dim
        self.out_dim = autoencoder.in_dim

    def generate(self, z: Matrix) -> Matrix:
        z = as_matrix(z)
        if not np.isfinite(z).all():
            raise ValueError("non-finite latent")
        return self.decoder.forward(z, cache=False)

    def vjp(self, z: Matrix, upstream: Matrix) -> Matrix:
        self.decoder.forward(as_matrix(z), cache=True)
        _, dz = self.decoder.backward(as_matrix(upstream))
        return dz


# ---------------------------------------------------------------------------
# Checkpoints: JSON with hex floats, bit-exact round trip

def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "hex": [v.hex() for v in a.ravel().tolist()]}


def _decode_array(d: dict) -> np.ndarray:
    vals = np.array([float.fromhex(h) for h in d["hex"]], dtype=np.float64)
    return vals.reshape(d["shape"])


def _mlp_state(mlp: Mlp) -> dict:
    return {
        "layers": [{"kind": s.kind, "in_dim": s.in_dim, "out_dim": s.out_dim,
                    "slope": s.slope} for s in mlp.layers],
        "params": [[_encode_array(w), _encode_array(b)] for w, b in mlp.params],
    }


def _load_mlp(state: dict) -> Mlp:
    layers = [LayerSpec(d["kind"], d["in_dim"], d["out_dim"], d["slope"])
              for d in state["layers"]]
    mlp = Mlp(layers, np.random.default_rng(0))
    mlp.params = [(_decode_array(w), _decode_array(b)) for w, b in state["params"]]
    return mlp


def save_checkpoint(model, path) -> None:
    if isinstance(model, Classifier):
        doc = {"kind": "classifier", "in_dim": model.in_dim,
               "num_classes": model.num_classes, "hidden": list(model.hidden),
               "mlp": _mlp_state(model.mlp)}
    elif isinstance(model, Autoencoder):
        doc = {"kind": "autoencoder", "in_dim": model.in_dim,
               "code_dim": model.code_dim, "hidden": list(model.hidden),
               "linear": model.linear,
               "encoder": _mlp_state(model.encoder), "decoder": _mlp_state(model.decoder)}
    elif isinstance(model, Critic):
        doc = {"kind": "critic", "in_dim": model.in_dim,
               "feature_dim": model.feature_dim, "mlp": _mlp_state(model.mlp)}
    else:
        raise ConfigError(f"cannot checkpoint {type(model).__name__}")
    doc["version"] = CHECKPOINT_VERSION
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')}")
    kind = doc["kind"]
    if kind == "classifier":
        clf = Classifier(doc["in_dim"], doc["num_classes"], tuple(doc["hidden"]))
        clf.mlp = _load_mlp(doc["mlp"])
        return clf
    if kind == "autoencoder":
        ae = Autoencoder(doc["in_dim"], doc["code_dim"], tuple(doc["hidden"]),
                         doc["linear"])
        ae.encoder = _load_mlp(doc["encoder"])
        ae.decoder = _load_mlp(doc["decoder"])
        return ae
    if kind == "critic":
        critic = Critic.__new__(Critic)
        critic.in_dim = doc["in_dim"]
        critic.feature_dim = doc["feature_dim"]
        critic.mlp = _load_mlp(doc["mlp"])
        return critic
    raise ConfigError(f"unknown checkpoint kind {kind!r}")
