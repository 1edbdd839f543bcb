"""Dense feedforward ReLU classifier with exact backpropagation and SGD training."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from .data import Dataset
from .errors import DimensionMismatch

logger = logging.getLogger(__name__)

Mode = Literal["train", "eval"]

DEFAULT_HIDDEN = (64, 32, 16)


@dataclass(frozen=True)
class MlpModel:
    """
    ``z_{i+1} = W_i z_i + b_i`` with ReLU after every hidden layer and softmax
    on the output. ``weights[i]`` has shape ``(layer_dims[i+1], layer_dims[i])``.
    """

    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        dims = tuple(int(v) for v in self.layer_dims)
        if len(dims) < 2:
            raise ValueError("a model needs at least an input and an output layer")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("one weight matrix and bias vector per layer is required")
        weights, biases = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise DimensionMismatch(dims[i + 1], w.shape[0], f"layer {i} weights")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
            weights.append(w)
            biases.append(b)
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "biases", tuple(biases))

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def without_dropout(self) -> "MlpModel":
        return replace(self, dropout_rate=0.0)


@dataclass(frozen=True)
class ParamGrads:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.01
    seed: int = 0
    dropout_enabled: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainResult:
    model: MlpModel
    loss_trace: list[float] = field(default_factory=list)


def init_model(
    input_dim: int,
    num_classes: int = 2,
    hidden: Sequence[int] = DEFAULT_HIDDEN,
    dropout_rate: float = 0.2,
    seed: int = 0,
) -> MlpModel:
    """He-uniform weights, zero biases."""
    dims = (input_dim, *hidden, num_classes)
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
    biases = [np.zeros(n) for n in dims[1:]]
    return MlpModel(dims, tuple(weights), tuple(biases), dropout_rate)


# ── Forward / backward ───────────────────────────────────────────────────


def _check_input(m: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.input_dim:
        raise DimensionMismatch(m.input_dim, x.shape[-1])
    return x


def _forward_cache(
    m: MlpModel, x: np.ndarray, mode: Mode, rng: Optional[np.random.Generator]
) -> tuple[list[np.ndarray], list[np.ndarray], list[Optional[np.ndarray]]]:
    """Return post-activation inputs per layer, pre-activations, and dropout masks."""
    if mode == "train" and m.dropout_rate > 0 and rng is None:
        raise ValueError("train mode with dropout needs an explicit rng")
    activations = [x]
    pre = []
    masks: list[Optional[np.ndarray]] = []
    h = x
    last = m.num_layers - 1
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = h @ w.T + b
        pre.append(z)
        if i == last:
            break
        h = np.maximum(z, 0.0)
        mask = None
        if mode == "train" and m.dropout_rate > 0:
            keep = 1.0 - m.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        masks.append(mask)
        activations.append(h)
    return activations, pre, masks


def forward(
    m: MlpModel,
    x,
    mode: Mode = "eval",
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Logits and class probabilities for one input ``(d,)`` or a batch ``(n, d)``.

    Train mode applies inverted dropout drawn from ``rng``; eval mode is
    deterministic and dropout-free.
    """
    x = _check_input(m, x)
    _, pre, _ = _forward_cache(m, x, mode, rng)
    logits = pre[-1]
    return logits, softmax(logits, axis=-1)


def loss_and_grads(
    m: MlpModel,
    x,
    y,
    mode: Mode = "eval",
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, ParamGrads, np.ndarray]:
    """
    Cross-entropy loss with exact gradients.

    For a batch, the loss and parameter gradients are averaged over samples,
    while ``input_grad`` holds each sample's gradient of its own loss (same
    shape as ``x``). Gradients are exact for the realized dropout mask.
    """
    x = _check_input(m, x)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if yb.shape[0] != xb.shape[0]:
        raise DimensionMismatch(xb.shape[0], yb.shape[0], "labels")
    if np.any(yb < 0) or np.any(yb >= m.num_classes):
        raise ValueError(f"labels must lie in [0, {m.num_classes})")

    n = xb.shape[0]
    activations, pre, masks = _forward_cache(m, xb, mode, rng)
    logp = log_softmax(pre[-1], axis=1)
    per_sample = -logp[np.arange(n), yb]

    # dL_i/dlogits for each sample's own loss
    delta = np.exp(logp)
    delta[np.arange(n), yb] -= 1.0

    w_grads: list[np.ndarray] = [None] * m.num_layers  # type: ignore[list-item]
    b_grads: list[np.ndarray] = [None] * m.num_layers  # type: ignore[list-item]
    for i in reversed(range(m.num_layers)):
        w_grads[i] = delta.T @ activations[i] / n
        b_grads[i] = delta.sum(axis=0) / n
        delta = delta @ m.weights[i]
        if i > 0:
            if masks[i - 1] is not None:
                delta = delta * masks[i - 1]
            delta = delta * (pre[i - 1] > 0)

    input_grad = delta[0] if single else delta
    return float(per_sample.mean()), ParamGrads(tuple(w_grads), tuple(b_grads)), input_grad


def predict(m: MlpModel, x) -> np.ndarray:
    logits, _ = forward(m, x)
    return np.argmax(logits, axis=-1)


def accuracy(m: MlpModel, d: Dataset) -> float:
    return float(np.mean(predict(m, d.features) == d.labels))


# ── Training ─────────────────────────────────────────────────────────────

BatchHook = Callable[[MlpModel, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def training_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent streams for (shuffle + dropout, perturbation subset, attack init)."""
    return tuple(np.random.default_rng([seed, stream]) for stream in range(3))  # type: ignore[return-value]


def _sgd_step(m: MlpModel, grads: ParamGrads, lr: float) -> MlpModel:
    weights = tuple(w - lr * g for w, g in zip(m.weights, grads.weights))
    biases = tuple(b - lr * g for b, g in zip(m.biases, grads.biases))
    return replace(m, weights=weights, biases=biases)


def fit(
    m: MlpModel,
    d: Dataset,
    cfg: TrainConfig,
    before_epoch: Optional[Callable[[int], None]] = None,
    batch_hook: Optional[BatchHook] = None,
) -> TrainResult:
    """
    Plain mini-batch SGD on the mean cross-entropy.

    ``batch_hook(model, index, x, y)`` may replace a batch's inputs before the
    gradient step (adversarial training plugs in here); ``before_epoch`` is
    called with the epoch number before each pass.
    """
    if m.input_dim != d.d:
        raise DimensionMismatch(m.input_dim, d.d, "training data")
    if not cfg.dropout_enabled:
        m = m.without_dropout()
    shuffle_rng, _, _ = training_rngs(cfg.seed)
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        if before_epoch is not None:
            before_epoch(epoch)
        order = shuffle_rng.permutation(d.n)
        epoch_loss = 0.0
        for start in range(0, d.n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = d.features[idx]
            yb = d.labels[idx]
            if batch_hook is not None:
                xb = batch_hook(m, idx, xb, yb)
            loss, grads, _ = loss_and_grads(m, xb, yb, mode="train", rng=shuffle_rng)
            m = _sgd_step(m, grads, cfg.learning_rate)
            epoch_loss += loss * len(idx)
        losses.append(epoch_loss / d.n)
        logger.debug("epoch %d loss %.6f", epoch + 1, losses[-1])
    return TrainResult(m, losses)


def train_clean(m: MlpModel, d: Dataset, cfg: TrainConfig) -> TrainResult:
    """Standard (non-adversarial) training baseline."""
    return fit(m, d, cfg)
