import logging
from dataclasses import dataclass

import numpy as np

from . import mlp as _mlp
from . import rnn as _rnn
from .losses import get_loss

logger = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0
    gradient_clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


class Adam:
    """Adam over a dict of parameter arrays, updated in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    @classmethod
    def from_config(cls, params, cfg):
        return cls(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k not in self.params:
                continue
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            self.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_gradients(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def loss_and_grads(model, inputs, targets, loss, mask=None):
    """Loss and parameter gradients for an MLP batch ``(N, D)`` or RNN batch ``(N, T, D)``."""
    loss_fn = get_loss(loss)
    if isinstance(model, _mlp.MlpModel):
        acts = _mlp.forward_cached(model, inputs)
        value, dz = loss_fn(acts[-1], targets, model.output_activation, mask)
        grads, _ = _mlp.backward(model, acts, dz)
        return value, grads
    if isinstance(model, _rnn.RnnModel):
        xs = np.swapaxes(np.asarray(inputs, dtype=float), 0, 1)
        ys_target = np.swapaxes(np.asarray(targets, dtype=float), 0, 1)
        m = None if mask is None else np.swapaxes(np.asarray(mask, dtype=float), 0, 1)
        hs, ys = _rnn.forward_cached(model, xs)
        value, dz = loss_fn(ys, ys_target, model.output_activation, m)
        return value, _rnn.backward(model, xs, hs, dz)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def evaluate_loss(model, inputs, targets, loss, mask=None):
    loss_fn = get_loss(loss)
    if isinstance(model, _mlp.MlpModel):
        out = _mlp.mlp_forward(model, inputs)
        return loss_fn(out, targets, model.output_activation, mask)[0]
    xs = np.swapaxes(np.asarray(inputs, dtype=float), 0, 1)
    _, ys = _rnn.forward_cached(model, xs)
    m = None if mask is None else np.swapaxes(np.asarray(mask, dtype=float), 0, 1)
    return loss_fn(ys, np.swapaxes(np.asarray(targets, dtype=float), 0, 1), model.output_activation, m)[0]


def _check_finite(value, epoch):
    if not np.isfinite(value):
        raise TrainingDiverged(f"loss became {value} at epoch {epoch}; "
                               "lower the learning rate or enable gradient clipping")


def train(model, inputs, targets, loss, cfg, mask=None):
    """Mini-batch Adam training on a copy of ``model``.

    Returns ``(trained_model, curve)`` where ``curve[0]`` is the loss before any
    update and ``curve[e]`` the full-dataset loss after epoch ``e``.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if targets.shape[0] != n or (mask is not None and np.shape(mask)[0] != n):
        raise ValueError("inputs, targets and mask must have the same number of examples")
    model = model.copy()
    params = model.params()
    opt = Adam.from_config(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    curve = [evaluate_loss(model, inputs, targets, loss, mask)]
    _check_finite(curve[0], 0)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            m = None if mask is None else np.asarray(mask)[idx]
            value, grads = loss_and_grads(model, inputs[idx], targets[idx], loss, m)
            _check_finite(value, epoch)
            if cfg.gradient_clip_norm is not None:
                clip_gradients(grads, cfg.gradient_clip_norm)
            opt.step(grads)
        curve.append(evaluate_loss(model, inputs, targets, loss, mask))
        _check_finite(curve[-1], epoch)
    logger.debug("trained %s: loss %.4g -> %.4g", type(model).__name__, curve[0], curve[-1])
    return model, curve
