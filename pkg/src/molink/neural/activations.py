import numpy as np


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def identity(z):
    return z


ACTIVATIONS = {
    "sigmoid": sigmoid,
    "tanh": np.tanh,
    "softmax": softmax,
    "identity": identity,
}


def activate(name, z):
    try:
        fn = ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None
    return fn(np.asarray(z, dtype=float))


def derivative_from_output(name, a):
    """Elementwise derivative of a hidden activation, written in terms of its output."""
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    if name == "identity":
        return np.ones_like(a)
    raise ValueError(f"activation {name!r} has no elementwise derivative")
