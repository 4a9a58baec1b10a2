import numpy as np

from .optim import evaluate_loss, loss_and_grads

MAX_PARAMS = 10_000


def gradient_check(model, inputs, target, loss, mask=None, step=1e-5, floor=1e-6):
    """Max relative error between backprop gradients and central differences.

    The denominator is ``max(|analytic|, |numeric|, floor)`` so that exactly-zero
    gradients (all-zero weights, dead units) do not divide by zero.
    """
    params = model.params()
    n_params = sum(p.size for p in params.values())
    if n_params > MAX_PARAMS:
        raise ValueError(f"model has {n_params} parameters; central differences are capped at {MAX_PARAMS}")
    _, analytic = loss_and_grads(model, inputs, target, loss, mask)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        g = analytic[name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            up = evaluate_loss(model, inputs, target, loss, mask)
            flat[i] = saved - step
            down = evaluate_loss(model, inputs, target, loss, mask)
            flat[i] = saved
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(g[i]), abs(numeric), floor)
            worst = max(worst, abs(g[i] - numeric) / denom)
    return worst
