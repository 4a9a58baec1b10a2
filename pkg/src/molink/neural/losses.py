"""Losses paired with the gradient at the output pre-activation.

Every function returns ``(loss, dz)`` where ``dz`` has the shape of ``output``.
``mask`` (shape ``output.shape[:-1]``) zeroes rows that must not contribute,
e.g. pilot windows or padding in a batch of unequal sequences.
"""

import numpy as np

from .activations import derivative_from_output

EPS = 1e-12


def _row_mask(output, mask):
    if mask is None:
        return np.ones(output.shape[:-1])
    mask = np.asarray(mask, dtype=float)
    if mask.shape != output.shape[:-1]:
        raise ValueError(f"mask shape {mask.shape} does not match output rows {output.shape[:-1]}")
    return mask


def binary_cross_entropy(output, target, out_act="sigmoid", mask=None):
    if out_act != "sigmoid":
        raise ValueError("binary cross-entropy expects a sigmoid output")
    m = _row_mask(output, mask)[..., None]
    count = max(m.sum() * output.shape[-1], 1.0)
    p = np.clip(output, EPS, 1.0 - EPS)
    loss = -np.sum(m * (target * np.log(p) + (1.0 - target) * np.log(1.0 - p))) / count
    dz = m * (output - target) / count
    return float(loss), dz


def cross_entropy(output, target, out_act="softmax", mask=None):
    if out_act != "softmax":
        raise ValueError("cross-entropy expects a softmax output")
    m = _row_mask(output, mask)[..., None]
    count = max(m.sum(), 1.0)
    loss = -np.sum(m * target * np.log(np.clip(output, EPS, 1.0))) / count
    dz = m * (output - target) / count
    return float(loss), dz


def squared_error(output, target, out_act="identity", mask=None):
    m = _row_mask(output, mask)[..., None]
    count = max(m.sum() * output.shape[-1], 1.0)
    diff = output - target
    loss = np.sum(m * diff * diff) / count
    dz = 2.0 * m * diff / count * derivative_from_output(out_act, output)
    return float(loss), dz


LOSSES = {
    "bce": binary_cross_entropy,
    "ce": cross_entropy,
    "mse": squared_error,
}


def get_loss(name):
    try:
        return LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; expected one of {sorted(LOSSES)}") from None
