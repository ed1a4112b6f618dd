"""Dense linear algebra, a fixed-layer MLP with reverse-mode gradients, and Adam.

Everything runs on float64 numpy arrays and is deterministic given a seed.
The MLP supports exactly the layer kinds needed by the models in this
package (linear, relu, leaky_relu, sigmoid, tanh, softmax) and exposes the
gradient with respect to its *input*, which latent-space optimization needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Matrix = np.ndarray  # 2-D float64, row-major

LAYER_KINDS = ("linear", "relu", "leaky_relu", "sigmoid", "tanh", "softmax")


class NumericError(RuntimeError):
    """Non-finite value produced where the contract requires finite math."""


class StateError(RuntimeError):
    """Operation called out of order (e.g. backward without a cached forward)."""


def as_matrix(x) -> Matrix:
    """Coerce to a 2-D float64 array; 1-D input becomes a single row."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D array, got ndim={a.ndim}")
    return a


def linear_forward(x: Matrix, w: Matrix, b: Matrix) -> Matrix:
    """Affine map: out[i, j] = sum_k x[i, k] * w[k, j] + b[0, j]."""
    x, w, b = as_matrix(x), as_matrix(w), as_matrix(b)
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"input width {x.shape[1]} != weight rows {w.shape[0]}")
    if b.shape != (1, w.shape[1]):
        raise ValueError(f"bias shape {b.shape} != (1, {w.shape[1]})")
    return x @ w + b


def softmax(logits: Matrix) -> Matrix:
    """Row-wise softmax with max-subtraction so large logits cannot overflow."""
    z = as_matrix(logits)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def entropy(probs: Matrix) -> Matrix:
    """Shannon entropy (natural log) per row; 0*log(0) counts as 0.

    Returns a column vector [b x 1]. Raises on negative probabilities.
    """
    p = as_matrix(probs)
    if (p < 0).any():
        raise ValueError("negative probability")
    logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logp).sum(axis=1, keepdims=True)


def entropy_grad(probs: Matrix) -> Matrix:
    """dH/dp for each row, with the 0*log(0)=0 convention (grad 0 at p=0)."""
    p = as_matrix(probs)
    return np.where(p > 0, -(np.log(np.where(p > 0, p, 1.0)) + 1.0), 0.0)


def init_weights(fan_in: int, fan_out: int, rng: np.random.Generator) -> Matrix:
    """Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out))."""
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


@dataclass(frozen=True)
class LayerSpec:
    """One layer of an MLP. `in_dim`/`out_dim` apply to linear layers only."""

    kind: str
    in_dim: int = 0
    out_dim: int = 0
    slope: float = 0.2  # leaky_relu negative slope

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}, expected one of {LAYER_KINDS}")
        if self.kind == "linear" and (self.in_dim < 1 or self.out_dim < 1):
            raise ValueError("linear layer needs positive in_dim and out_dim")


def _check_widths(layers: list[LayerSpec]) -> None:
    width = None
    for spec in layers:
        if spec.kind == "linear":
            if width is not None and width != spec.in_dim:
                raise ValueError(f"layer width mismatch: {width} feeds linear({spec.in_dim})")
            width = spec.out_dim


class Mlp:
    """Feed-forward stack over LayerSpecs with cached forward and exact backward.

    Parameters live in `self.params`: one (W, b) pair per linear layer, in
    order. `backward` returns gradients aligned with that list plus the
    gradient with respect to the network input.
    """

    def __init__(self, layers: list[LayerSpec], rng: np.random.Generator):
        _check_widths(layers)
        self.layers = list(layers)
        self.params: list[tuple[Matrix, Matrix]] = []
        for spec in self.layers:
            if spec.kind == "linear":
                w = init_weights(spec.in_dim, spec.out_dim, rng)
                b = np.zeros((1, spec.out_dim))
                self.params.append((w, b))
        self._cache: list[Matrix] | None = None

    @property
    def in_dim(self) -> int:
        for spec in self.layers:
            if spec.kind == "linear":
                return spec.in_dim
        raise ValueError("MLP has no linear layer")

    @property
    def out_dim(self) -> int:
        for spec in reversed(self.layers):
            if spec.kind == "linear":
                return spec.out_dim
        raise ValueError("MLP has no linear layer")

    def forward(self, x: Matrix, cache: bool = True, upto: int | None = None) -> Matrix:
        """Run the first `upto` layers (all when None); optionally cache activations."""
        a = as_matrix(x)
        acts = [a]
        p = 0
        for spec in self.layers[:upto]:
            if spec.kind == "linear":
                w, b = self.params[p]
                a = linear_forward(a, w, b)
                p += 1
            elif spec.kind == "relu":
                a = np.maximum(a, 0.0)
            elif spec.kind == "leaky_relu":
                a = np.where(a > 0, a, spec.slope * a)
            elif spec.kind == "sigmoid":
                a = 1.0 / (1.0 + np.exp(-a))
            elif spec.kind == "tanh":
                a = np.tanh(a)
            elif spec.kind == "softmax":
                a = softmax(a)
            acts.append(a)
        if cache and upto is None:
            self._cache = acts
        return a

    def backward(self, upstream: Matrix) -> tuple[list[tuple[Matrix, Matrix]], Matrix]:
        """Reverse-mode pass. Returns ([(dW, db) per linear layer], dInput)."""
        if self._cache is None:
            raise StateError("backward called without a cached forward pass")
        acts = self._cache
        grad = as_matrix(upstream)
        if grad.shape != acts[-1].shape:
            raise ValueError(f"upstream shape {grad.shape} != output shape {acts[-1].shape}")
        param_grads: list[tuple[Matrix, Matrix]] = [None] * len(self.params)
        p = len(self.params)
        for i in range(len(self.layers) - 1, -1, -1):
            spec = self.layers[i]
            x_in, x_out = acts[i], acts[i + 1]
            if spec.kind == "linear":
                p -= 1
                w, _ = self.params[p]
                dw = x_in.T @ grad
                db = grad.sum(axis=0, keepdims=True)
                param_grads[p] = (dw, db)
                grad = grad @ w.T
            elif spec.kind == "relu":
                grad = grad * (x_in > 0)
            elif spec.kind == "leaky_relu":
                grad = grad * np.where(x_in > 0, 1.0, spec.slope)
            elif spec.kind == "sigmoid":
                grad = grad * x_out * (1.0 - x_out)
            elif spec.kind == "tanh":
                grad = grad * (1.0 - x_out * x_out)
            elif spec.kind == "softmax":
                # row-wise Jacobian: dx = p * (dy - sum(dy * p))
                dot = (grad * x_out).sum(axis=1, keepdims=True)
                grad = x_out * (grad - dot)
        return param_grads, grad

    def flat_params(self) -> list[Matrix]:
        out = []
        for w, b in self.params:
            out.extend((w, b))
        return out

    def set_flat_params(self, flat: list[Matrix]) -> None:
        if len(flat) != 2 * len(self.params):
            raise ValueError("parameter count mismatch")
        self.params = [(flat[2 * i], flat[2 * i + 1]) for i in range(len(self.params))]
        self._cache = None


@dataclass
class AdamState:
    """Adam moment buffers and step counter for a list of parameter arrays."""

    m: list[Matrix]
    v: list[Matrix]
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: list[Matrix], alpha: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0, alpha=alpha, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params: list[Matrix], grads: list[Matrix], state: AdamState) -> list[Matrix]:
    """One bias-corrected Adam update. Mutates `state`, returns new parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    for g in grads:
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient passed to adam_step")
    state.t += 1
    t = state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / (1.0 - state.beta1 ** t)
        v_hat = state.v[i] / (1.0 - state.beta2 ** t)
        out.append(p - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps))
    return out
