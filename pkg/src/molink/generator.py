"""Virtual response generator: an RNN forward model of the channel, weight-level
augmentation, and symbol-interval scaling of its hidden transition.

The model runs at the sample rate. Its input is the rectangular injection
waveform (1 while a bit-1 is being injected, else 0) and its output one
amplitude per sample.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .channel import DEFAULT_INJECTION, SYMBOL_INTERVALS, ChannelError, Trace, check_bits
from .framing import PILOT
from .neural import RnnModel, TrainConfig, init_rnn, model_from_dict, model_to_dict, train
from .neural.activations import activate

logger = logging.getLogger(__name__)

WARMUP = 16  # zero-input steps before each training sequence, excluded from the loss
DEFAULT_WEIGHT_SIGMA = 0.01
PLAUSIBLE_AUC = 0.95
ROOT_TOL = 1e-8
LEARNED_ROOT_TOL = 1e-3
PARAM_NAMES = ("W_xh", "W_hh", "W_hy", "b_h", "b_y")
# short, gentle fine-tune from the shared fit, so group models keep its hidden coordinates
GROUP_CONFIG = TrainConfig(learning_rate=3e-3, epochs=30, batch_size=8, seed=0, gradient_clip_norm=5.0)


class RootNotFound(ArithmeticError):
    pass


@dataclass(frozen=True)
class ScaledStep:
    """Hidden transition of G_k.

    ``method`` is ``"compose"`` for integer k (the source step applied k times;
    ``W_g``/``b_g`` then hold its linearisation A^k and (I + A + ... + A^{k-1}) c),
    ``"root"`` for the closed-form affine root and ``"learned"`` for the fitted one.
    """

    W_g: np.ndarray
    b_g: np.ndarray
    k: Fraction
    method: str

    def __post_init__(self):
        H = self.W_g.shape[0]
        if self.W_g.shape != (H, H) or self.b_g.shape != (H,):
            raise ValueError("W_g must be square and b_g must match it")
        if self.k <= 0 or (self.k < 1 and self.k.numerator != 1):
            raise ValueError(f"k must be a positive integer or 1/integer, got {self.k}")


@dataclass
class GeneratorModel:
    rnn: RnnModel
    base_t_s: float
    t_w: float | None = None
    f_p: float = 8.0
    step: ScaledStep | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.base_t_s not in SYMBOL_INTERVALS:
            raise ValueError(f"base_t_s must be one of {SYMBOL_INTERVALS}")
        if self.rnn.output_size != 1 or self.rnn.input_size != 1:
            raise ValueError("the forward model maps one input channel to one amplitude")
        if self.t_w is None:
            self.t_w = DEFAULT_INJECTION[self.base_t_s]
        if self.step is not None and self.step.W_g.shape != self.rnn.W_hh.shape:
            raise ValueError("scaled step hidden size differs from the source model")

    @property
    def k(self):
        return Fraction(1) if self.step is None else self.step.k

    @property
    def t_s(self):
        return self.base_t_s * float(self.k)

    @property
    def steps_per_bit(self):
        """Model steps per bit; a scaled step spans k source steps, so this never changes."""
        return int(round(self.f_p * self.base_t_s))

    @property
    def samples_per_bit(self):
        """Output samples per bit at ``f_p``."""
        n = self.f_p * self.t_s
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError(f"f_p * t_s = {n} is not a positive integer")
        return int(round(n))

    def copy(self):
        return GeneratorModel(self.rnn.copy(), self.base_t_s, self.t_w, self.f_p, self.step, dict(self.meta))


# ------------------------------------------------------------------ waveform

def injection_waveform(bits, samples_per_bit, on_samples):
    """Per-sample injection indicator: ``on_samples`` ones at the start of each bit-1 slot."""
    bits = check_bits(bits)
    slot = np.zeros(samples_per_bit)
    slot[:on_samples] = 1.0
    return (bits[:, None] * slot[None, :]).reshape(-1)


def _on_steps(model):
    return max(1, int(round(model.f_p * model.t_w)))


def _resample(y, k, start):
    """Model output at one sample per k/f_p seconds -> one sample per 1/f_p seconds.

    Step i ends at time (i + 1) k / f_p; ``start`` is the output before step 0.
    """
    if k == 1:
        return y
    if k < 1:
        m = k.denominator
        return y[m - 1::m]
    kk = int(k)
    t_coarse = np.arange(y.size + 1) * kk
    t_fine = np.arange(1, y.size * kk + 1)
    return np.interp(t_fine, t_coarse, np.concatenate([[start], y]))


# ------------------------------------------------------------------ dynamics

def _step(model, h, x):
    """One generator step on a batch of states ``h`` ``(B, H)`` and inputs ``x`` ``(B, 1)``."""
    r = model.rnn
    s = model.step
    if s is None or s.method == "compose":
        for _ in range(1 if s is None else int(s.k)):
            h = activate(r.hidden_activation, x @ r.W_xh.T + h @ r.W_hh.T + r.b_h)
        return h
    return activate(r.hidden_activation, x @ r.W_xh.T + h @ s.W_g.T + s.b_g)


def _readout(model, h):
    r = model.rnn
    return activate(r.output_activation, h @ r.W_hy.T + r.b_y)


def rest_state(model, max_iter=2000, tol=1e-12):
    """Zero-input fixed point reached from ``h0`` (``h0`` itself if the iteration does not settle)."""
    h = model.rnn.h0[None, :]
    x = np.zeros((1, 1))
    for _ in range(max_iter):
        nxt = _step(model, h, x)
        if np.max(np.abs(nxt - h)) < tol:
            return nxt[0]
        h = nxt
    logger.debug("zero-input iteration did not settle; starting from h0")
    return model.rnn.h0.copy()


def run(model, waveform, h=None):
    """Amplitudes for an input waveform, starting from the rest state."""
    x = np.asarray(waveform, dtype=float).reshape(-1, 1, 1)
    h = rest_state(model)[None, :] if h is None else np.asarray(h, dtype=float)[None, :]
    out = np.empty(x.shape[0])
    for t in range(x.shape[0]):
        h = _step(model, h, x[t])
        out[t] = _readout(model, h)[0, 0]
    return out


# ------------------------------------------------------------------ fitting

def _dataset_interval(dataset):
    keys = set()
    for _, tr in dataset:
        t_s = tr.meta.get("t_s")
        if t_s is None:
            raise ValueError("trace metadata lacks t_s; pass link= explicitly")
        keys.add((float(t_s), float(tr.meta.get("t_w", DEFAULT_INJECTION[float(t_s)])), tr.f_p))
    if len(keys) != 1:
        raise ValueError(f"dataset mixes symbol intervals / sample rates: {sorted(keys)}")
    return keys.pop()


def training_arrays(dataset, samples_per_bit, on_samples, warmup=WARMUP):
    """Padded ``(N, T, 1)`` inputs and targets plus a ``(N, T)`` loss mask.

    Targets are taken relative to each trace's first sample. Every sequence is
    preceded by ``warmup`` masked zero-input steps so the state can settle.
    """
    rows = []
    for bits, tr in dataset:
        bits = np.asarray(bits, dtype=np.int8)
        origin = tr.origin_sample or 0
        wave = np.zeros(len(tr))
        body = injection_waveform(bits, samples_per_bit, on_samples)
        stop = min(len(tr), origin + body.size)
        wave[origin:stop] = body[: stop - origin]
        rows.append((wave, tr.samples - tr.samples[0]))
    T = warmup + max(len(w) for w, _ in rows)
    x = np.zeros((len(rows), T, 1))
    y = np.zeros((len(rows), T, 1))
    m = np.zeros((len(rows), T))
    for i, (w, t) in enumerate(rows):
        x[i, warmup: warmup + w.size, 0] = w
        y[i, warmup: warmup + t.size, 0] = t
        m[i, warmup: warmup + t.size] = 1.0
    return x, y, m


def fit_forward_model(dataset, hidden_size=16, cfg=None, link=None, init=None):
    """Fit f: injection waveform -> amplitude with a tanh RNN and squared error.

    ``dataset`` is a list of ``(bits, Trace)``; the bits start at each trace's
    ``origin_sample``. The symbol interval comes from the traces' metadata
    unless ``link`` is given. ``init`` (a :class:`GeneratorModel`) warm-starts
    the fit instead of a fresh random RNN.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("fit_forward_model needs at least one trace")
    if link is not None:
        t_s, t_w, f_p = link.t_s, link.t_w, link.f_p
        if any(tr.f_p != f_p or tr.meta.get("t_s", t_s) != t_s for _, tr in dataset):
            raise ValueError("dataset traces disagree with the given link")
    else:
        t_s, t_w, f_p = _dataset_interval(dataset)
    cfg = cfg or TrainConfig(learning_rate=1e-2, epochs=200, batch_size=8, seed=0,
                             gradient_clip_norm=5.0)
    n = int(round(f_p * t_s))
    x, y, m = training_arrays(dataset, n, max(1, int(round(f_p * t_w))))
    if init is None:
        rnn = init_rnn(1, hidden_size, 1, cfg.seed, "tanh", "identity")
    elif init.step is not None or init.base_t_s != t_s:
        raise ValueError("warm start needs an unscaled model at the dataset's symbol interval")
    else:
        rnn = init.rnn
    rnn, curve = train(rnn, x, y, "mse", cfg, mask=m)
    gen = GeneratorModel(rnn, t_s, t_w, f_p, meta={"loss_curve": [float(c) for c in curve]})
    return gen


# ------------------------------------------------------------- augmentation

def augment_weight_noise(model, sigma=DEFAULT_WEIGHT_SIGMA, seed=0):
    """Independent N(0, sigma^2) perturbation of every weight and bias."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    out = model.copy()
    if sigma == 0:
        return out
    rng = np.random.default_rng(seed)
    for name in PARAM_NAMES:
        a = getattr(out.rnn, name)
        a += rng.normal(0.0, sigma, size=a.shape)
    if out.step is not None and out.step.method != "compose":
        out.step = replace(out.step, W_g=out.step.W_g + rng.normal(0.0, sigma, size=out.step.W_g.shape),
                           b_g=out.step.b_g + rng.normal(0.0, sigma, size=out.step.b_g.shape))
    out.meta = {**out.meta, "augmented": {"kind": "weight_noise", "sigma": sigma, "seed": seed}}
    return out


def augment_group_mix(models, seed=0, choices=None):
    """Matrix-level mix: each parameter array is copied whole from one source model.

    ``choices`` maps parameter names to source indices and overrides the seeded
    uniform draw for those names.
    """
    models = list(models)
    if len(models) < 2:
        raise ValueError("group mixing needs at least two models")
    ref = models[0]
    for m in models[1:]:
        same = (m.base_t_s == ref.base_t_s and m.t_w == ref.t_w and m.f_p == ref.f_p
                and m.step is None and ref.step is None
                and m.rnn.hidden_activation == ref.rnn.hidden_activation
                and m.rnn.output_activation == ref.rnn.output_activation
                and all(getattr(m.rnn, p).shape == getattr(ref.rnn, p).shape for p in PARAM_NAMES))
        if not same:
            raise ValueError("group mixing needs unscaled models with identical architecture and base_t_s")
    rng = np.random.default_rng(seed)
    picks = {p: int(rng.integers(len(models))) for p in PARAM_NAMES}
    picks.update(choices or {})
    out = ref.copy()
    for p, i in picks.items():
        if p not in PARAM_NAMES:
            raise ValueError(f"unknown parameter {p!r}")
        setattr(out.rnn, p, getattr(models[i].rnn, p).copy())
    out.meta = {**out.meta, "augmented": {"kind": "group_mix", "sources": picks, "seed": seed}}
    return out


# ---------------------------------------------------------------- scaling

def _as_fraction(k):
    k = Fraction(k).limit_denominator(1000) if not isinstance(k, Fraction) else k
    if k <= 0 or not (k.denominator == 1 or k.numerator == 1):
        raise ValueError(f"k must be a positive integer or 1/integer, got {k}")
    return k


def affine_root(A, c, m):
    """Real ``(W, b)`` with ``W^m = A`` and ``(I + W + ... + W^{m-1}) b = c``.

    Principal root through the eigendecomposition; negative real eigenvalues
    are only admitted for odd ``m``. Raises :class:`RootNotFound` otherwise or
    when the re-composition error exceeds ``ROOT_TOL``.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    lam, V = np.linalg.eig(A)
    mu = np.empty_like(lam, dtype=complex)
    for i, z in enumerate(lam):
        if abs(z.imag) <= 1e-12 * max(1.0, abs(z)):
            r = z.real
            if r < 0 and m % 2 == 0:
                raise RootNotFound(f"eigenvalue {r:.4g} < 0 has no real even root")
            mu[i] = np.sign(r) * abs(r) ** (1.0 / m)
        else:
            mu[i] = z ** (1.0 / m)
    try:
        W = V @ np.diag(mu) @ np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise RootNotFound("A is not diagonalisable") from exc
    if np.max(np.abs(W.imag)) > 1e-9 * max(1.0, np.max(np.abs(W.real))):
        raise RootNotFound("principal root is not real")
    W = W.real
    S = sum(np.linalg.matrix_power(W, i) for i in range(m))
    try:
        b = np.linalg.solve(S, c)
    except np.linalg.LinAlgError as exc:
        raise RootNotFound("bias equation is singular") from exc
    Wc, bc = compose_affine(W, b, m)
    scale = max(1.0, np.max(np.abs(A)), np.max(np.abs(c)) if c.size else 0.0)
    err = max(np.max(np.abs(Wc - A)), np.max(np.abs(bc - c)) if c.size else 0.0) / scale
    if not np.isfinite(err) or err > ROOT_TOL:
        raise RootNotFound(f"re-composition error {err:.3g}")
    return W, b


def compose_affine(W, b, m):
    """The affine map h -> W h + b applied ``m`` times, as ``(W^m, sum_i W^i b)``."""
    Wc = np.eye(W.shape[0])
    bc = np.zeros(W.shape[0])
    for _ in range(m):
        Wc, bc = W @ Wc, W @ bc + b
    return Wc, bc


def learned_affine_root(A, c, m, seed=0, samples=None, restarts=4, max_nfev=100):
    """Least-squares fit of ``G(h) = W h + b`` so that ``G^m(h)`` matches ``A h + c``
    on sampled hidden states; the best of several random starts wins."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    H = A.shape[0]
    samples = samples or H + 8  # an affine map is pinned down by H + 1 generic states
    rng = np.random.default_rng(seed)
    hs = rng.uniform(-1.0, 1.0, size=(samples, H))
    target = hs @ A.T + c

    def unpack(theta):
        return theta[: H * H].reshape(H, H), theta[H * H:]

    def resid(theta):
        W, b = unpack(theta)
        h = hs
        for _ in range(m):
            h = h @ W.T + b
        return (h - target).ravel()

    def jac(theta):
        # forward-mode derivative of the m-fold iterate, J[s, i, p]
        W, b = unpack(theta)
        h = hs
        J = np.zeros((samples, H, H * H + H))
        eye = np.eye(H)
        for _ in range(m):
            J = np.einsum("il,slp->sip", W, J, optimize=True)
            # d(W h)_i / dW[a, c] = delta_ia h_c
            J[:, :, : H * H] += np.einsum("ia,sc->siac", eye, h).reshape(samples, H, H * H)
            J[:, :, H * H:] += eye
            h = h @ W.T + b
        return J.reshape(samples * H, -1)

    # first start: real part of the principal root
    lam, V = np.linalg.eig(A)
    try:
        W0 = (V @ np.diag(lam.astype(complex) ** (1.0 / m)) @ np.linalg.inv(V)).real
        b0 = np.linalg.lstsq(sum(np.linalg.matrix_power(W0, i) for i in range(m)), c, rcond=None)[0]
        starts = [np.concatenate([W0.ravel(), b0])]
    except np.linalg.LinAlgError:
        starts = []
    starts += [rng.normal(0.0, 0.5, size=H * H + H) for _ in range(restarts)]
    best = None
    for theta0 in starts:
        sol = least_squares(resid, theta0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=max_nfev)
        if best is None or sol.cost < best.cost:
            best = sol
        if best.cost < 1e-20:
            break
    W = best.x[: H * H].reshape(H, H)
    b = best.x[H * H:]
    err = float(np.sqrt(np.mean(resid(best.x) ** 2)))
    return W, b, err


def scale_interval(model, k, seed=0):
    """G_k: a generator whose one step spans k source steps; its symbol interval is
    ``base_t_s * k``.

    k = 1 returns an identical copy. Integer k composes the source step k times
    (exact, same activation). For k = 1/m the hidden activation is relaxed to
    the identity, the zero-input affine step ``h -> W_hh h + b_h`` is replaced
    by its real m-th root, and ``W_xh``/``W_hy`` stay frozen; if no real root
    exists the root is fitted instead (``meta["root_error"]`` records the fit).
    """
    if model.step is not None:
        raise ValueError("model is already scaled; scale the source model instead")
    k = _as_fraction(k)
    out = model.copy()
    A, c = model.rnn.W_hh, model.rnn.b_h
    if k == 1:
        return out
    if k.denominator == 1:
        W, b = compose_affine(A, c, int(k))
        out.step = ScaledStep(W, b, k, "compose")
        return out
    m = k.denominator
    try:
        W, b = affine_root(A, c, m)
        out.step = ScaledStep(W, b, k, "root")
    except RootNotFound as exc:
        logger.info("closed-form root unavailable (%s); fitting a learned root", exc)
        W, b, err = learned_affine_root(A, c, m, seed)
        if err > LEARNED_ROOT_TOL:
            logger.warning("learned root residual %.3g exceeds %.0e", err, LEARNED_ROOT_TOL)
        out.step = ScaledStep(W, b, k, "learned")
        out.meta = {**out.meta, "root_error": err, "root_failure": str(exc)}
    return out


# ---------------------------------------------------------------- generation

def generate_response(model, bits, seed=0, noise_std=0.0):
    """Trace of ``samples_per_bit * len(bits)`` samples starting at the rest state.

    The model takes ``steps_per_bit`` steps per bit, each spanning ``k / f_p``
    seconds; the output is decimated (k < 1) or linearly interpolated (k > 1)
    back to ``f_p``. ``noise_std`` adds white output noise (seeded) for non-identical draws.
    """
    bits = check_bits(bits)
    h = rest_state(model)
    y = run(model, injection_waveform(bits, model.steps_per_bit, _on_steps(model)), h)
    y = _resample(y, model.k, float(_readout(model, h[None, :])[0, 0]))
    if noise_std > 0:
        y = y + np.random.default_rng(seed).normal(0.0, noise_std, size=y.size)
    meta = {"t_s": model.t_s, "t_w": model.t_w * float(model.k), "bits": bits.tolist(),
            "generated": True, "k": str(model.k)}
    return Trace(y, model.f_p, 0, meta)


def peak_discrimination(samples, bits, samples_per_bit, origin=0):
    """Probability that a random bit-1 slot rises more than a random bit-0 slot
    (rise = max minus first sample; ties count half). 1.0 when either class is empty."""
    bits = np.asarray(bits, dtype=np.int8)
    y = np.asarray(samples, dtype=float)
    k = min(bits.size, (y.size - origin) // samples_per_bit)
    w = y[origin: origin + k * samples_per_bit].reshape(k, samples_per_bit)
    rise = w.max(axis=1) - w[:, 0]
    ones, zeros = rise[bits[:k] == 1], rise[bits[:k] == 0]
    if not ones.size or not zeros.size:
        return 1.0
    diff = ones[:, None] - zeros[None, :]
    return float(np.mean((diff > 0) + 0.5 * (diff == 0)))


def is_plausible(model, bits, seed=0, threshold=PLAUSIBLE_AUC):
    tr = generate_response(model, bits, seed)
    return peak_discrimination(tr.samples, bits, model.samples_per_bit) >= threshold


def _source_waveform(model, bits, trace):
    wave = np.zeros(len(trace))
    body = injection_waveform(bits, model.steps_per_bit, _on_steps(model))
    o = trace.origin_sample or 0
    stop = min(len(trace), o + body.size)
    wave[o:stop] = body[: stop - o]
    return wave


def background_residuals(model, dataset):
    """Each recorded trace minus the model's noise-free response to its bits.

    What is left is drift, spikes and sensor noise as they actually occurred.
    """
    if model.step is not None:
        raise ValueError("residuals need the unscaled source model")
    out = []
    for bits, tr in dataset:
        pred = run(model, _source_waveform(model, bits, tr))
        out.append(tr.samples - tr.samples[0] - pred)
    return out


def synthesize_dataset(variants, residuals, n_traces, n_bits, seed=0, max_lead=None, pilot=None):
    """Synthetic ``(bits, Trace)`` pairs for decoder training.

    Each trace is one variant's response to random pilot-led bits plus a
    recorded background taken from ``residuals`` at a random offset. A random
    idle lead-in of up to ``max_lead`` samples precedes the pilot.
    """
    pilot = PILOT if pilot is None else tuple(pilot)
    variants = list(variants)
    if not variants or not residuals:
        raise ValueError("need at least one model and one background")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_traces):
        model = variants[i % len(variants)]
        n = model.samples_per_bit
        lead = int(rng.integers(0, (max_lead if max_lead is not None else max(n, 16)) + 1))
        bits = np.array(pilot + tuple(rng.integers(0, 2, n_bits - len(pilot))), dtype=np.int8)
        h = rest_state(model)
        rest = float(_readout(model, h[None, :])[0, 0])
        body = _resample(run(model, injection_waveform(bits, model.steps_per_bit, _on_steps(model)), h),
                         model.k, rest)
        y = np.concatenate([np.full(lead, rest), body])
        bg = residuals[int(rng.integers(len(residuals)))]
        if bg.size >= y.size:
            start = int(rng.integers(0, bg.size - y.size + 1))
            y = y + bg[start: start + y.size]
        else:
            y[: bg.size] += bg
            y[bg.size:] += bg[-1]
        meta = {"t_s": model.t_s, "t_w": model.t_w * float(model.k), "bits": bits.tolist(),
                "generated": True}
        out.append((bits, Trace(y, model.f_p, lead, meta)))
    return out


def augment_dataset(dataset, factor=2.0, hidden_size=16, groups=4, n_variants=4, seed=0):
    """``factor * len(dataset)`` synthetic traces in the style of ``dataset``.

    One forward model is fit on everything and then fine-tuned on each
    interleaved group; the variants are weight-noise copies of the former and
    group mixes of the latter. Variants failing :func:`is_plausible` on a
    random probe are dropped (the shared fit stands in if none survive).
    Synthetic traces match the recorded ones in length.
    """
    dataset = list(dataset)
    n_synth = int(round(factor * len(dataset)))
    if n_synth == 0:
        return []
    if len(dataset) < groups:
        raise ValueError(f"need at least {groups} recorded traces, got {len(dataset)}")
    base = fit_forward_model(dataset, hidden_size)
    parts = [fit_forward_model(dataset[i::groups], hidden_size, GROUP_CONFIG, init=base) for i in range(groups)]
    variants = ([augment_weight_noise(base, DEFAULT_WEIGHT_SIGMA, seed + i) for i in range(n_variants)]
                + [augment_group_mix(parts, seed=seed + i) for i in range(n_variants)])
    n_bits = int(np.median([len(b) for b, _ in dataset]))
    probe = np.array(PILOT + tuple(np.random.default_rng(seed).integers(0, 2, 60)), dtype=np.int8)
    kept = [v for v in variants if is_plausible(v, probe)]
    if len(kept) < len(variants):
        logger.info("dropped %d implausible generator variants", len(variants) - len(kept))
    return synthesize_dataset(kept or [base], background_residuals(base, dataset), n_synth, n_bits, seed=seed)


# ---------------------------------------------------------------- persistence

def generator_to_dict(model):
    d = model_to_dict(model.rnn)
    gen = {"base_t_s": model.base_t_s, "t_w": model.t_w, "f_p": model.f_p, "k": str(model.k),
           "meta": model.meta}
    if model.step is not None:
        gen["step"] = {"method": model.step.method, "W_g": model.step.W_g.tolist(),
                       "b_g": model.step.b_g.tolist()}
    d["meta"] = {**d["meta"], "generator": gen}
    return d


def generator_from_dict(d):
    d = json.loads(json.dumps(d))
    gen = d["meta"].pop("generator", None)
    if gen is None:
        raise ValueError("weight document carries no generator metadata")
    rnn = model_from_dict(d)
    step = None
    if "step" in gen:
        s = gen["step"]
        step = ScaledStep(np.asarray(s["W_g"], float), np.asarray(s["b_g"], float),
                          Fraction(gen["k"]), s["method"])
    return GeneratorModel(rnn, float(gen["base_t_s"]), gen["t_w"], gen["f_p"], step, gen.get("meta") or {})


def save_generator(model, path):
    Path(path).write_text(json.dumps(generator_to_dict(model)))


def load_generator(path):
    try:
        return generator_from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError) as exc:
        raise ChannelError(f"{path}: malformed generator file ({exc})") from exc


__all__ = [
    "GeneratorModel", "RootNotFound", "ScaledStep", "affine_root", "augment_dataset", "augment_group_mix",
    "background_residuals", "synthesize_dataset",
    "augment_weight_noise", "compose_affine", "fit_forward_model", "generate_response",
    "generator_from_dict", "generator_to_dict", "injection_waveform", "is_plausible",
    "learned_affine_root", "load_generator", "peak_discrimination", "rest_state", "run",
    "save_generator", "scale_interval",
]
