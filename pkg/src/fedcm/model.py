"""Small classifiers over flat parameter vectors, with closed-form gradients.

Parameters are plain 1-d float64 ``numpy`` arrays. The layout is

* ``LogisticRegression``: ``W`` (num_classes x input_dim, row-major), then ``b``.
* ``MLP1``: ``W1`` (hidden x input_dim), ``b1``, ``W2`` (num_classes x hidden), ``b2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import RngStream


class Architecture(str, Enum):
    LOGISTIC_REGRESSION = "LogisticRegression"
    MLP1 = "MLP1"


class DimensionError(ValueError):
    """Raised when an array does not have the shape a model expects."""

    def __init__(self, what: str, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


@dataclass(frozen=True)
class ModelSpec:
    architecture: Architecture
    input_dim: int
    num_classes: int
    hidden_units: int = 0

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be positive, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.architecture is Architecture.MLP1 and self.hidden_units < 1:
            raise ValueError("MLP1 needs hidden_units >= 1")

    @property
    def parameter_count(self) -> int:
        d, c, h = self.input_dim, self.num_classes, self.hidden_units
        if self.architecture is Architecture.LOGISTIC_REGRESSION:
            return c * d + c
        return h * d + h + c * h + c


@dataclass(frozen=True)
class LocalHyper:
    eta: float = 0.05
    momentum: float = 0.0
    weight_decay: float = 0.0
    prox_mu: float = 0.0
    batch_size: int = 32
    local_epochs: int = 1

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.prox_mu < 0:
            raise ValueError(f"prox_mu must be >= 0, got {self.prox_mu}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.local_epochs < 0:
            raise ValueError(f"local_epochs must be >= 0, got {self.local_epochs}")


def _unpack(params: np.ndarray, spec: ModelSpec):
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != spec.parameter_count:
        raise DimensionError("parameter vector length", spec.parameter_count, params.shape)
    d, c, h = spec.input_dim, spec.num_classes, spec.hidden_units
    if spec.architecture is Architecture.LOGISTIC_REGRESSION:
        return params[: c * d].reshape(c, d), params[c * d :]
    o = 0
    w1 = params[o : o + h * d].reshape(h, d)
    o += h * d
    b1 = params[o : o + h]
    o += h
    w2 = params[o : o + c * h].reshape(c, h)
    o += c * h
    b2 = params[o : o + c]
    return w1, b1, w2, b2


def _check_features(features, spec: ModelSpec) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionError("feature matrix width", spec.input_dim, x.shape)
    return x


def init_params(spec: ModelSpec, rng: RngStream, scale: float = 0.05) -> np.ndarray:
    """Uniform(-scale, scale) initialisation of every parameter."""
    return rng.uniform(-scale, scale, size=spec.parameter_count)


def forward_logits(params: np.ndarray, spec: ModelSpec, features) -> np.ndarray:
    x = _check_features(features, spec)
    if spec.architecture is Architecture.LOGISTIC_REGRESSION:
        w, b = _unpack(params, spec)
        return x @ w.T + b
    w1, b1, w2, b2 = _unpack(params, spec)
    hidden = np.maximum(x @ w1.T + b1, 0.0)
    return hidden @ w2.T + b2


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grad(
    params: np.ndarray,
    spec: ModelSpec,
    batch: tuple,
    prox_center: np.ndarray | None = None,
    prox_mu: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``batch`` and its gradient w.r.t. ``params``.

    With ``prox_mu > 0`` the proximal penalty ``prox_mu/2 * ||params - prox_center||^2``
    is added. Weight decay is left to :func:`sgd_step`.
    """
    features, labels = batch
    x = _check_features(features, spec)
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if y.shape != (n,):
        raise DimensionError("label vector length", n, y.shape)
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise ValueError(f"labels must lie in [0, {spec.num_classes}), got range [{y.min()}, {y.max()}]")
    if prox_mu < 0:
        raise ValueError(f"prox_mu must be >= 0, got {prox_mu}")

    params = np.asarray(params, dtype=np.float64)
    rows = np.arange(n)
    if spec.architecture is Architecture.LOGISTIC_REGRESSION:
        w, b = _unpack(params, spec)
        logp = log_softmax(x @ w.T + b)
        delta = np.exp(logp)
        delta[rows, y] -= 1.0
        delta /= n
        grad = np.concatenate([(delta.T @ x).ravel(), delta.sum(axis=0)])
    else:
        w1, b1, w2, b2 = _unpack(params, spec)
        pre = x @ w1.T + b1
        hidden = np.maximum(pre, 0.0)
        logp = log_softmax(hidden @ w2.T + b2)
        delta = np.exp(logp)
        delta[rows, y] -= 1.0
        delta /= n
        dhidden = (delta @ w2) * (pre > 0)
        grad = np.concatenate(
            [
                (dhidden.T @ x).ravel(),
                dhidden.sum(axis=0),
                (delta.T @ hidden).ravel(),
                delta.sum(axis=0),
            ]
        )
    loss = float(-logp[rows, y].mean())

    if prox_mu > 0:
        if prox_center is None:
            raise ValueError("prox_mu > 0 requires a prox_center")
        center = np.asarray(prox_center, dtype=np.float64)
        if center.shape != params.shape:
            raise DimensionError("prox_center length", params.shape, center.shape)
        diff = params - center
        loss += 0.5 * prox_mu * float(diff @ diff)
        grad = grad + prox_mu * diff
    return loss, grad


def sgd_step(
    params: np.ndarray, grad: np.ndarray, velocity: np.ndarray, hyper: LocalHyper
) -> tuple[np.ndarray, np.ndarray]:
    """Heavy-ball SGD with weight decay folded into the gradient.

    ``v' = momentum*v + grad + weight_decay*params``; ``params' = params - eta*v'``.
    """
    if not (len(params) == len(grad) == len(velocity)):
        raise DimensionError("sgd_step operand lengths", len(params), (len(grad), len(velocity)))
    new_velocity = hyper.momentum * velocity + grad
    if hyper.weight_decay:
        new_velocity = new_velocity + hyper.weight_decay * params
    return params - hyper.eta * new_velocity, new_velocity


def local_update(
    w_global: np.ndarray,
    spec: ModelSpec,
    features: np.ndarray,
    labels: np.ndarray,
    hyper: LocalHyper,
    rng: RngStream,
) -> np.ndarray:
    """Run ``hyper.local_epochs`` shuffled mini-batch passes starting at ``w_global``.

    ``features``/``labels`` are the client's local examples. Indices inside each
    mini-batch are sorted, so a full-batch pass does not depend on the shuffle.
    """
    x = _check_features(features, spec)
    y = np.asarray(labels)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot run a local update on an empty shard")
    w = np.array(w_global, dtype=np.float64, copy=True)
    velocity = np.zeros_like(w)
    center = w_global if hyper.prox_mu > 0 else None
    bs = hyper.batch_size
    for _ in range(hyper.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = np.sort(order[start : start + bs])
            _, grad = loss_and_grad(w, spec, (x[idx], y[idx]), center, hyper.prox_mu)
            w, velocity = sgd_step(w, grad, velocity, hyper)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("local update diverged to a non-finite parameter")
    return w


def accuracy(params: np.ndarray, spec: ModelSpec, features, labels) -> float:
    y = np.asarray(labels)
    if y.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    pred = forward_logits(params, spec, features).argmax(axis=1)
    return float((pred == y).mean())
