from dataclasses import dataclass, field

import numpy as np

from .activations import activate, derivative_from_output


@dataclass
class RnnModel:
    """Elman recurrence: h_t = phi(W_xh x_t + W_hh h_{t-1} + b_h), y_t = psi(W_hy h_t + b_y)."""

    W_xh: np.ndarray
    W_hh: np.ndarray
    W_hy: np.ndarray
    b_h: np.ndarray
    b_y: np.ndarray
    hidden_activation: str = "tanh"
    output_activation: str = "sigmoid"
    h0: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        H = self.W_hh.shape[0]
        if self.W_hh.shape != (H, H):
            raise ValueError(f"W_hh must be square, got {self.W_hh.shape}")
        if self.W_xh.shape[0] != H or self.b_h.shape != (H,):
            raise ValueError("W_xh / b_h do not match the hidden size")
        if self.W_hy.shape[1] != H or self.b_y.shape != (self.W_hy.shape[0],):
            raise ValueError("W_hy / b_y do not match the hidden size")
        if self.h0 is None:
            self.h0 = np.zeros(H)
        elif self.h0.shape != (H,):
            raise ValueError("h0 length must equal the hidden size")

    @property
    def input_size(self):
        return self.W_xh.shape[1]

    @property
    def hidden_size(self):
        return self.W_hh.shape[0]

    @property
    def output_size(self):
        return self.W_hy.shape[0]

    def params(self):
        return {"W_xh": self.W_xh, "W_hh": self.W_hh, "W_hy": self.W_hy,
                "b_h": self.b_h, "b_y": self.b_y}

    def copy(self):
        return RnnModel(self.W_xh.copy(), self.W_hh.copy(), self.W_hy.copy(), self.b_h.copy(),
                        self.b_y.copy(), self.hidden_activation, self.output_activation,
                        self.h0.copy(), self.seed, dict(self.meta))


def init_rnn(input_size, hidden_size, output_size, seed,
             hidden_activation="tanh", output_activation="sigmoid"):
    rng = np.random.default_rng(seed)

    def uni(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return RnnModel(
        W_xh=uni((hidden_size, input_size), input_size),
        W_hh=uni((hidden_size, hidden_size), hidden_size),
        W_hy=uni((output_size, hidden_size), hidden_size),
        b_h=uni(hidden_size, input_size),
        b_y=uni(output_size, hidden_size),
        hidden_activation=hidden_activation,
        output_activation=output_activation,
        seed=seed,
    )


def rnn_step(model, h, x):
    h_new = activate(model.hidden_activation, x @ model.W_xh.T + h @ model.W_hh.T + model.b_h)
    y = activate(model.output_activation, h_new @ model.W_hy.T + model.b_y)
    return h_new, y


def forward_cached(model, inputs):
    """Run a batch ``inputs`` of shape ``(T, B, D)``; returns ``(hs, ys)``.

    ``hs`` has ``T + 1`` entries, ``hs[0]`` being the broadcast initial state.
    """
    xs = np.asarray(inputs, dtype=float)
    if xs.ndim != 3:
        raise ValueError("expected inputs shaped (T, B, D)")
    T, B, D = xs.shape
    if T == 0:
        raise ValueError("empty input sequence")
    if D != model.input_size:
        raise ValueError(f"input has {D} features, model expects {model.input_size}")
    H = model.hidden_size
    hs = np.empty((T + 1, B, H))
    hs[0] = model.h0
    # input projection for all steps at once
    pre = xs @ model.W_xh.T + model.b_h
    for t in range(T):
        hs[t + 1] = activate(model.hidden_activation, pre[t] + hs[t] @ model.W_hh.T)
    ys = activate(model.output_activation, hs[1:] @ model.W_hy.T + model.b_y)
    return hs, ys


def rnn_forward(model, inputs):
    """Outputs for one sequence ``(T, D)`` or a batch ``(T, B, D)``."""
    xs = np.asarray(inputs, dtype=float)
    if xs.ndim == 2:
        return forward_cached(model, xs[:, None, :])[1][:, 0, :]
    return forward_cached(model, xs)[1]


def backward(model, xs, hs, dz_y):
    """Backpropagation through time over the full unrolled sequence.

    ``dz_y`` is the gradient at the output pre-activation, shape ``(T, B, O)``.
    """
    T = xs.shape[0]
    H = model.hidden_size
    grads = {k: np.zeros_like(v) for k, v in model.params().items()}
    flat_h = hs[1:].reshape(-1, H)
    flat_dz = dz_y.reshape(-1, dz_y.shape[-1])
    grads["W_hy"] = flat_dz.T @ flat_h
    grads["b_y"] = flat_dz.sum(axis=0)
    dh_from_out = dz_y @ model.W_hy
    dh_next = np.zeros_like(hs[0])
    dpre = np.empty_like(hs[1:])
    for t in range(T - 1, -1, -1):
        dh = dh_from_out[t] + dh_next
        dpre[t] = dh * derivative_from_output(model.hidden_activation, hs[t + 1])
        dh_next = dpre[t] @ model.W_hh
    flat_dpre = dpre.reshape(-1, H)
    grads["W_xh"] = flat_dpre.T @ xs.reshape(-1, xs.shape[-1])
    grads["W_hh"] = flat_dpre.T @ hs[:-1].reshape(-1, H)
    grads["b_h"] = flat_dpre.sum(axis=0)
    return grads
