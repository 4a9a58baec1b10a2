from dataclasses import dataclass, field

import numpy as np

from .activations import activate, derivative_from_output


@dataclass
class MlpModel:
    """Fully connected network. ``weights[i]`` has shape ``(fan_out, fan_in)``."""

    weights: list
    biases: list
    hidden_activation: str = "sigmoid"
    output_activation: str = "sigmoid"
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} expects {w.shape[1]} inputs, previous layer emits "
                                 f"{self.weights[i - 1].shape[0]}")

    @property
    def sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_size(self):
        return self.weights[0].shape[1]

    @property
    def output_size(self):
        return self.weights[-1].shape[0]

    def params(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    def copy(self):
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.hidden_activation, self.output_activation, self.seed, dict(self.meta))


def init_mlp(sizes, seed, hidden_activation="sigmoid", output_activation="sigmoid"):
    """Uniform init in +-1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(weights, biases, hidden_activation, output_activation, seed)


def zero_mlp(sizes, hidden_activation="sigmoid", output_activation="sigmoid"):
    return MlpModel([np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                    [np.zeros(o) for o in sizes[1:]], hidden_activation, output_activation)


def _check_input(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_size:
        raise ValueError(f"input has {x.shape[-1]} features, model expects {model.input_size}")
    return x


def forward_cached(model, x):
    """Forward pass over a batch ``x`` of shape ``(..., in)``; returns every layer's output."""
    acts = [_check_input(model, x)]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w.T + b
        acts.append(activate(model.output_activation if i == last else model.hidden_activation, z))
    return acts


def mlp_forward(model, x):
    return forward_cached(model, x)[-1]


def backward(model, acts, dz_out):
    """Backpropagate ``dz_out`` (gradient at the output pre-activation).

    Returns ``(grads, dx)`` with ``grads`` keyed like ``model.params()``.
    """
    grads = {}
    dz = dz_out
    for i in range(len(model.weights) - 1, -1, -1):
        a_in = acts[i]
        flat_a = a_in.reshape(-1, a_in.shape[-1])
        flat_dz = dz.reshape(-1, dz.shape[-1])
        grads[f"W{i}"] = flat_dz.T @ flat_a
        grads[f"b{i}"] = flat_dz.sum(axis=0)
        da = dz @ model.weights[i]
        if i:
            dz = da * derivative_from_output(model.hidden_activation, a_in)
        else:
            dx = da
    return grads, dx
