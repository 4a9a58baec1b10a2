"""Module-based universal decoder.

Three small learned blocks look at each bit from different angles and a
one-layer merge fuses their bit-1 probabilities in the log domain:

* noise block: MLP over the window, its rise and the thresholding margin;
  emits a probability and a confidence score.
* delay block: Elman RNN stepping over bits, fed the window plus two
  lookahead windows and the count of consecutive 1s decided so far.
* adjacent block: MLP over a pair of neighbouring windows emitting a
  probability for each of the two bits; interior bits get two estimates
  combined by geometric mean.

The merge is ``sigmoid(w * sum(log p) + b)`` with ``w >= 0``.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelError, LinkConfig
from .detectors import PilotCalibration, find_spikes, nst_tune, repair_spikes, window_rise
from .framing import PILOT, PILOT_LEN, detect_origin, window_matrix
from .neural import MlpModel, RnnModel, TrainConfig, init_mlp, init_rnn, model_from_dict, model_to_dict
from .neural.activations import activate, sigmoid
from .neural.mlp import backward as mlp_backward
from .neural.mlp import forward_cached as mlp_cached
from .neural.optim import Adam, TrainingDiverged
from .neural.rnn import backward as rnn_backward
from .neural.rnn import forward_cached as rnn_cached
from .neural.rnn import rnn_step

logger = logging.getLogger(__name__)

EPS = 1e-6
BLOCK_HIDDEN = 10
DELAY_HIDDEN = 16
RUN_CAP = 8
BUNDLE_FORMAT = "molink-universal"
DEFAULT_MERGE_B = 3.0 * math.log(2.0)  # three p=0.5 inputs fuse to exactly 0.5
CONFIDENCE_WEIGHT = 0.2
BLOCK_LOSS_WEIGHT = 0.3  # each block's own cross-entropy, so none can idle at p = 1
# below this many samples per slot a pulse onset looks like a spike, so no repair
REPAIR_MIN_WINDOW = 4
REFINE_MARGIN = 0.3


@dataclass(frozen=True)
class TrainingSwitches:
    noise_on: bool = True
    delay_on: bool = True
    adjacent_on: bool = True

    def __post_init__(self):
        if not (self.noise_on or self.delay_on or self.adjacent_on):
            raise ValueError("at least one block must be switched on")


DEFAULT_SCHEDULE = (TrainingSwitches(True, True, True), TrainingSwitches(True, False, False))


@dataclass
class UniversalModel:
    noise_block: MlpModel
    delay_block: RnnModel
    adjacent_block: MlpModel
    window: int
    eta: float = 0.5
    merge_w: float = 1.0
    merge_b: float = DEFAULT_MERGE_B
    fixed_merge: bool = False
    repair: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.window
        if self.noise_block.input_size != n + 3 or self.noise_block.output_size != 2:
            raise ValueError(f"noise block must map {n + 3} -> 2")
        if self.delay_block.input_size != 3 * n + 2 or self.delay_block.output_size != 1:
            raise ValueError(f"delay block must map {3 * n + 2} -> 1")
        if self.adjacent_block.input_size != 2 * n + 1 or self.adjacent_block.output_size != 2:
            raise ValueError(f"adjacent block must map {2 * n + 1} -> 2")
        if self.merge_w < 0:
            raise ValueError("merge weight must be non-negative")

    def copy(self):
        return UniversalModel(self.noise_block.copy(), self.delay_block.copy(), self.adjacent_block.copy(),
                              self.window, self.eta, self.merge_w, self.merge_b, self.fixed_merge,
                              self.repair, dict(self.meta))


def init_universal(window, seed=0, eta=0.5, fixed_merge=False, repair=False):
    n = window
    return UniversalModel(
        noise_block=init_mlp([n + 3, BLOCK_HIDDEN, BLOCK_HIDDEN, 2], seed, "sigmoid", "sigmoid"),
        delay_block=init_rnn(3 * n + 2, DELAY_HIDDEN, 1, seed + 1, "tanh", "sigmoid"),
        adjacent_block=init_mlp([2 * n + 1, BLOCK_HIDDEN, 2], seed + 2, "sigmoid", "sigmoid"),
        window=n, eta=float(eta), fixed_merge=fixed_merge, repair=repair,
    )


# ------------------------------------------------------------------ features

def _clamp(p):
    return np.clip(p, EPS, 1.0 - EPS)


def _rel(windows, ref, scale):
    return (windows - ref) / scale


def noise_features(windows, cal, eta):
    """Window relative to its first sample, its offset from the pilot base, rise and margin."""
    w = np.asarray(windows, dtype=float)
    rel = _rel(w, w[..., :1], cal.scale)
    ctx = (w[..., :1] - cal.base) / cal.scale
    rise = (window_rise(w) / cal.scale)[..., None]
    return np.concatenate([rel, ctx, rise, rise - eta], axis=-1)


def _padded(windows, extra):
    n = windows.shape[-1]
    return np.concatenate([windows, np.zeros((extra, n))]) if extra else windows


def extended_features(windows, cal):
    """Per-bit (y_t, y_t+1, y_t+2) relative to y_t's first sample; lookahead past the end is zero."""
    w = np.asarray(windows, dtype=float)
    k, n = w.shape
    ref = w[:, :1]
    parts = [_rel(w, ref, cal.scale), (ref - cal.base) / cal.scale]
    for lag in (1, 2):
        ahead = _rel(_padded(w, lag)[lag:], ref, cal.scale)
        ahead[k - lag:] = 0.0
        parts.append(ahead)
    return np.concatenate(parts, axis=1)


def pair_features(windows, cal):
    """Features of every consecutive pair (y_t, y_t+1), both relative to y_t's first sample."""
    w = np.asarray(windows, dtype=float)
    ref = w[:-1, :1]
    return np.concatenate([_rel(w[:-1], ref, cal.scale), _rel(w[1:], ref, cal.scale),
                           (ref - cal.base) / cal.scale], axis=1)


def run_feature(run_length):
    return min(int(run_length), RUN_CAP) / RUN_CAP


def run_lengths(bits):
    """Consecutive 1s immediately before each position."""
    out = np.zeros(len(bits), dtype=int)
    run = 0
    for i, b in enumerate(bits):
        out[i] = run
        run = run + 1 if b else 0
    return out


def combine_adjacent(p_left, p_right):
    """Geometric mean of the two estimates a bit receives."""
    return np.sqrt(_clamp(np.asarray(p_left, float)) * _clamp(np.asarray(p_right, float)))


def _adjacent_log(pairs_p, k):
    """Per-bit log probability from pair outputs ``(k-1, 2)``; also returns estimate counts."""
    logp = np.zeros(k)
    cnt = np.zeros(k)
    if k > 1:
        lp = np.log(_clamp(pairs_p))
        logp[:-1] += lp[:, 0]
        cnt[:-1] += 1
        logp[1:] += lp[:, 1]
        cnt[1:] += 1
    logp = np.where(cnt > 0, logp / np.maximum(cnt, 1), math.log(0.5))
    return logp, cnt


# ------------------------------------------------------------- block inference

def _as_windows(x):
    return np.asarray([getattr(w, "values", w) for w in x] if isinstance(x, (list, tuple)) else
                      getattr(x, "values", x), dtype=float)


def noise_block_infer(window, block, cal=None, eta=0.5):
    """``(probability, confidence)`` for one window (or a stack of windows)."""
    w = _as_windows(window)
    cal = cal or PilotCalibration(0.0, 1.0)
    out = mlp_cached(block, noise_features(w, cal, eta))[-1]
    return out[..., 0], out[..., 1]


def delay_block_infer(extended, prior_run_length, block, h=None):
    """Bit-1 probability for one extended window ``(y_t, y_t+1, y_t+2)`` (already featurised,
    as from :func:`extended_features`) and the run of consecutive 1s before it.

    Returns ``(p, h_new)``; pass ``h_new`` back in to continue a stream.
    """
    x = np.append(np.asarray(extended, dtype=float), run_feature(prior_run_length))
    h = block.h0 if h is None else h
    h_new, y = rnn_step(block, h, x)
    return float(y[0]), h_new


def adjacent_block_infer(pair, block, cal=None):
    """Probabilities ``(p_t, p_t+1)`` for a pair of consecutive windows."""
    w = _as_windows(pair)
    if w.shape[0] != 2:
        raise ValueError("adjacent block takes exactly two windows")
    cal = cal or PilotCalibration(0.0, 1.0)
    p = mlp_cached(block, pair_features(w, cal))[-1][0]
    return float(p[0]), float(p[1])


def merge_decide(p_noise, p_delay, p_adjacent, w=1.0, b=DEFAULT_MERGE_B):
    """``(bit, fused)`` with fused = sigmoid(w * (log p_n + log p_d + log p_a) + b)."""
    s = np.log(_clamp(p_noise)) + np.log(_clamp(p_delay)) + np.log(_clamp(p_adjacent))
    fused = sigmoid(w * s + b)
    return (fused > 0.5).astype(np.int8) if np.ndim(fused) else int(fused > 0.5), fused


# ------------------------------------------------------------------ streams

@dataclass
class Stream:
    """One trace cut into windows from its origin, with per-trace calibration."""

    windows: np.ndarray
    cal: PilotCalibration
    origin: int
    bits: np.ndarray | None = None


def prepare_trace(trace, link, origin=None, repair=True):
    """Repaired trace and its origin (detected when not given)."""
    if origin is None:
        origin = detect_origin(trace, link)
    if repair:
        trace = repair_spikes(trace, find_spikes(trace, link, origin=origin))
    return trace, origin


def make_stream(trace, link, origin, bits=None):
    w = window_matrix(trace, link, origin)
    if w.shape[0] < PILOT_LEN:
        raise ChannelError(f"only {w.shape[0]} windows after the origin; the pilot needs {PILOT_LEN}")
    cal = PilotCalibration.from_windows(w)
    if bits is not None:
        bits = np.asarray(bits, dtype=np.int8)[: w.shape[0]]
    return Stream(w, cal, origin, bits)


# ---------------------------------------------------------------- training

@dataclass
class _Batch:
    xn: np.ndarray     # (B, T, n+3)
    xd: np.ndarray     # (T, B, 3n+2)
    xa: np.ndarray     # (B, T-1, 2n+1)
    y: np.ndarray      # (B, T)
    mask: np.ndarray   # (B, T)
    ok: np.ndarray     # (B, T) thresholding decision correct
    cnt: np.ndarray    # (B, T) adjacent estimates per bit


def _batch(streams, model):
    T = max(len(s.windows) for s in streams)
    B = len(streams)
    n = model.window
    xn = np.zeros((B, T, n + 3))
    xd = np.zeros((T, B, 3 * n + 2))
    xa = np.zeros((B, max(T - 1, 1), 2 * n + 1))
    y = np.zeros((B, T))
    mask = np.zeros((B, T))
    ok = np.zeros((B, T))
    cnt = np.zeros((B, T))
    for i, s in enumerate(streams):
        k = len(s.windows)
        xn[i, :k] = noise_features(s.windows, s.cal, model.eta)
        bits = np.zeros(k, dtype=np.int8)
        m = min(k, len(s.bits))
        bits[:m] = s.bits[:m]
        runs = run_lengths(bits)
        xd[:k, i, :-1] = extended_features(s.windows, s.cal)
        xd[:k, i, -1] = [run_feature(r) for r in runs]
        if k > 1:
            xa[i, : k - 1] = pair_features(s.windows, s.cal)
            cnt[i, : k - 1] += 1
            cnt[i, 1:k] += 1
        y[i, :k] = bits
        mask[i, PILOT_LEN:m] = 1.0
        nst = window_rise(s.windows) > model.eta * s.cal.scale
        ok[i, :k] = nst == bits.astype(bool)
    return _Batch(xn, xd, xa, y, mask, ok, cnt)


def _forward(model, batch):
    an = mlp_cached(model.noise_block, batch.xn)
    hs, yd = rnn_cached(model.delay_block, batch.xd)
    aa = mlp_cached(model.adjacent_block, batch.xa)
    pn, conf = an[-1][..., 0], an[-1][..., 1]
    pd = yd[..., 0].T
    pa_pairs = aa[-1]
    B, T = batch.y.shape
    logpa = np.zeros((B, T))
    if T > 1:
        lp = np.log(_clamp(pa_pairs))
        logpa[:, :-1] += lp[:, : T - 1, 0]
        logpa[:, 1:] += lp[:, : T - 1, 1]
    logpa = np.where(batch.cnt > 0, logpa / np.maximum(batch.cnt, 1), math.log(0.5))
    s = np.log(_clamp(pn)) + np.log(_clamp(pd)) + logpa
    fused = sigmoid(model.merge_w * s + model.merge_b)
    return dict(an=an, hs=hs, aa=aa, pn=pn, conf=conf, pd=pd, pa=pa_pairs, s=s, fused=fused)


def _loss(fwd, batch):
    m = batch.mask
    N = max(m.sum(), 1.0)
    f = _clamp(fwd["fused"])
    c = _clamp(fwd["conf"])
    bce = -(batch.y * np.log(f) + (1 - batch.y) * np.log(1 - f))
    cb = -(batch.ok * np.log(c) + (1 - batch.ok) * np.log(1 - c))
    return float((m * bce).sum() / N), float((m * cb).sum() / N)


def _grads(model, fwd, batch, switches):
    m = batch.mask
    N = max(m.sum(), 1.0)
    du = m * (fwd["fused"] - batch.y) / N          # at the merge pre-activation
    dlog = model.merge_w * du                      # at each block's log-probability
    aux = BLOCK_LOSS_WEIGHT * m / N
    y = batch.y
    grads = {}
    if not model.fixed_merge:
        grads["merge.w"] = np.array([np.sum(du * fwd["s"])])
        grads["merge.b"] = np.array([np.sum(du)])

    def through_sigmoid(p, g):
        return g * (1.0 - p) * ((p > EPS) & (p < 1.0 - EPS))

    if switches.noise_on:
        dz = np.zeros_like(fwd["an"][-1])
        dz[..., 0] = through_sigmoid(fwd["pn"], dlog) + aux * (fwd["pn"] - y)
        dz[..., 1] = CONFIDENCE_WEIGHT * m * (fwd["conf"] - batch.ok) / N
        g, _ = mlp_backward(model.noise_block, fwd["an"], dz)
        grads.update({f"noise.{k}": v for k, v in g.items()})
    if switches.delay_on:
        dz = (through_sigmoid(fwd["pd"], dlog) + aux * (fwd["pd"] - y)).T[..., None]
        g = rnn_backward(model.delay_block, batch.xd, fwd["hs"], dz)
        grads.update({f"delay.{k}": v for k, v in g.items()})
    if switches.adjacent_on:
        T = batch.y.shape[1]
        dz = np.zeros_like(fwd["aa"][-1])
        if T > 1:
            per = dlog / np.maximum(batch.cnt, 1)
            p = fwd["pa"]
            dz[:, : T - 1, 0] = (through_sigmoid(p[:, : T - 1, 0], per[:, :-1])
                                 + aux[:, :-1] * (p[:, : T - 1, 0] - y[:, :-1]))
            dz[:, : T - 1, 1] = (through_sigmoid(p[:, : T - 1, 1], per[:, 1:])
                                 + aux[:, 1:] * (p[:, : T - 1, 1] - y[:, 1:]))
        g, _ = mlp_backward(model.adjacent_block, fwd["aa"], dz)
        grads.update({f"adjacent.{k}": v for k, v in g.items()})
    return grads


def _param_table(model, switches):
    params = {}
    if switches.noise_on:
        params.update({f"noise.{k}": v for k, v in model.noise_block.params().items()})
    if switches.delay_on:
        params.update({f"delay.{k}": v for k, v in model.delay_block.params().items()})
    if switches.adjacent_on:
        params.update({f"adjacent.{k}": v for k, v in model.adjacent_block.params().items()})
    return params


def _ber(fwd, batch):
    m = batch.mask
    return float((m * ((fwd["fused"] > 0.5) != batch.y)).sum() / max(m.sum(), 1.0))


def training_origin(trace, link):
    """Origin used for training: the detector's answer when it lands within half a slot of
    the recorded origin (so the blocks learn the detector's sample-level bias), else the
    recorded origin."""
    known = trace.origin_sample
    if known is None:
        return detect_origin(trace, link)
    try:
        found = detect_origin(trace, link)
    except ChannelError:
        return known
    return found if abs(found - known) <= link.window // 2 else known


def training_streams(dataset, link, repair=False):
    streams = []
    for bits, trace in dataset:
        rt, origin = prepare_trace(trace, link, training_origin(trace, link), repair)
        streams.append(make_stream(rt, link, origin, np.asarray(bits)))
    return streams


def _snapshot(model):
    return model.copy()


def train_universal(dataset, link, schedule=DEFAULT_SCHEDULE, cfg=None, phase_epochs=None,
                    fixed_merge=False, repair=None, patience=15, min_gain=0.005,
                    val_fraction=0.2, model=None):
    """Train all blocks and the merge; returns ``(model, curves)``.

    ``dataset`` is a list of ``(bits, Trace)`` sharing ``link``. Each phase of
    ``schedule`` trains the switched-on blocks (plus the merge) on the binary
    cross-entropy of the fused output plus ``BLOCK_LOSS_WEIGHT`` times each
    block's own cross-entropy; pilot and idle windows carry no loss.
    ``val_fraction`` of the traces is held out for monitoring: a phase ends after
    its epoch budget or once validation BER has improved by less than
    ``min_gain`` over ``patience`` epochs, and the parameters with the lowest
    validation loss are kept. Traces flagged ``generated`` join the first phase
    only. ``curves`` holds the per-epoch training loss of each phase.
    """
    if not dataset:
        raise ValueError("train_universal needs a non-empty dataset")
    schedule = tuple(schedule)
    if not schedule:
        raise ValueError("switch schedule is empty")
    cfg = cfg or TrainConfig(learning_rate=1e-2, epochs=150, batch_size=8, seed=0)
    if phase_epochs is None:
        phase_epochs = [cfg.epochs] + [max(1, cfg.epochs // 3)] * (len(schedule) - 1)
    if repair is None:
        repair = link.window >= REPAIR_MIN_WINDOW
    streams = training_streams(dataset, link, repair)
    rng = np.random.default_rng(cfg.seed)
    # validation and eta come from recorded traces only; generated ones just add fit data
    recorded = [i for i, (_, tr) in enumerate(dataset) if not tr.meta.get("generated")]
    n_val = int(round(val_fraction * len(recorded))) if len(recorded) >= 5 else 0
    held = set(rng.permutation(recorded)[:n_val].tolist())
    val = [streams[i] for i in sorted(held)]
    fit_idx = [i for i in rng.permutation(len(streams)) if i not in held]
    fit = [streams[i] for i in fit_idx]
    tune = [streams[i] for i in fit_idx if i in set(recorded)] or fit
    eta = nst_tune([(s.windows, s.bits) for s in tune])
    if model is None:
        model = init_universal(link.window, cfg.seed, eta, fixed_merge, repair)
    else:
        model = model.copy()
    monitor = _batch(val, model) if val else _batch(fit, model)
    curves = []
    for phase, (sw, epochs) in enumerate(zip(schedule, phase_epochs)):
        # generated traces help the first phase learn; later fine-tunes see recorded data only
        data = fit if phase == 0 else tune
        full = _batch(data, model)
        params = _param_table(model, sw)
        merge = {"merge.w": np.array([model.merge_w]), "merge.b": np.array([model.merge_b])}
        if not model.fixed_merge:
            params.update(merge)
        opt = Adam.from_config(params, cfg)
        curve, history = [], []
        best, best_loss = _snapshot(model), _loss(_forward(model, monitor), monitor)[0]
        for epoch in range(epochs):
            perm = rng.permutation(len(data))
            for start in range(0, len(perm), cfg.batch_size):
                batch = _batch([data[i] for i in perm[start: start + cfg.batch_size]], model)
                fwd = _forward(model, batch)
                grads = _grads(model, fwd, batch, sw)
                if not all(np.all(np.isfinite(g)) for g in grads.values()):
                    raise TrainingDiverged(f"non-finite gradient in phase {phase}, epoch {epoch}")
                opt.step(grads)
                if not model.fixed_merge:
                    merge["merge.w"][0] = max(merge["merge.w"][0], 0.0)
                    model.merge_w = float(merge["merge.w"][0])
                    model.merge_b = float(merge["merge.b"][0])
            loss, _ = _loss(_forward(model, full), full)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} in phase {phase}, epoch {epoch}")
            curve.append(loss)
            mfwd = _forward(model, monitor)
            vloss = _loss(mfwd, monitor)[0]
            history.append(_ber(mfwd, monitor))
            if vloss < best_loss:
                best, best_loss = _snapshot(model), vloss
            if len(history) > patience and history[-patience - 1] - min(history[-patience:]) < min_gain:
                logger.info("phase %d settled after %d epochs", phase, epoch + 1)
                break
        model = best
        curves.append(curve)
    model.meta.update({"t_s": link.t_s, "f_p": link.f_p, "schedule": [asdict(s) for s in schedule],
                       "validation_traces": n_val})
    return model, curves


# ------------------------------------------------------------------- decode

@dataclass
class UniversalDecode:
    origin: int
    bits: np.ndarray
    probabilities: np.ndarray

    @property
    def pilot(self):
        return self.bits[:PILOT_LEN]

    @property
    def payload(self):
        return self.bits[PILOT_LEN:]


def pilot_loglik(trace, link, model, origin):
    """Mean per-slot log-likelihood of the pilot under the fused decoder when the stream
    starts at ``origin``.

    The idle slot just before the origin, when the trace has one, is scored as a 0.
    """
    n = link.window
    span = PILOT_LEN + 2
    lead = 1 if origin >= n else 0
    start = origin - lead * n
    k = min(span + lead, (len(trace) - start) // n)
    w = trace.samples[start: start + k * n].reshape(k, n)
    cal = PilotCalibration.from_windows(w[lead:])
    _, fused = decode_stream(Stream(w, cal, start), model, pilot_offset=lead)
    target = np.asarray((0,) * lead + PILOT, dtype=float)
    p = _clamp(fused[: len(target)])
    return float(np.mean(target * np.log(p) + (1 - target) * np.log(1 - p)))


def refine_origin(trace, link, model, origin, slots=3, margin=REFINE_MARGIN, phase=1):
    """Best origin by :func:`pilot_loglik` among ``origin`` shifted by up to ``slots``
    whole slots and ``phase`` samples either way. A shift must beat the detector's
    answer by ``margin`` nats per slot.

    The detector's sample phase is usually right, so only a one-sample wobble is
    searched; whole-slot placement is where it mostly goes wrong.
    """
    n = link.window
    if origin + PILOT_LEN * n > len(trace):
        return origin
    best, best_ll = origin, pilot_loglik(trace, link, model, origin) + margin
    shifts = sorted(((dk, dp) for dk in range(-slots, slots + 1) for dp in range(-phase, phase + 1)),
                    key=lambda s: (abs(s[0]), abs(s[1])))
    for dk, dp in shifts:
        o = origin + dk * n + dp
        if (dk, dp) == (0, 0) or o < 0 or o + PILOT_LEN * n > len(trace):
            continue
        ll = pilot_loglik(trace, link, model, o)
        if ll > best_ll + 1e-9:
            best, best_ll = o, ll
    return best


def decode_stream(stream, model, pilot_offset=0):
    """Greedy left-to-right decisions; the run length during the pilot (which starts at
    window ``pilot_offset``) comes from the pilot itself."""
    w, cal = stream.windows, stream.cal
    k = len(w)
    pn, _ = noise_block_infer(w, model.noise_block, cal, model.eta)
    pa_pairs = mlp_cached(model.adjacent_block, pair_features(w, cal))[-1] if k > 1 else np.zeros((0, 2))
    logpa, _ = _adjacent_log(pa_pairs, k)
    ext = extended_features(w, cal)
    pre = ext @ model.delay_block.W_xh[:, :-1].T + model.delay_block.b_h
    w_run = model.delay_block.W_xh[:, -1]
    h = model.delay_block.h0
    bits = np.zeros(k, dtype=np.int8)
    fused = np.zeros(k)
    run = 0
    for t in range(k):
        h = activate(model.delay_block.hidden_activation, pre[t] + run_feature(run) * w_run
                     + h @ model.delay_block.W_hh.T)
        pd = activate(model.delay_block.output_activation, h @ model.delay_block.W_hy.T
                      + model.delay_block.b_y)[0]
        s = math.log(_clamp(pn[t])) + math.log(_clamp(pd)) + logpa[t]
        fused[t] = sigmoid(model.merge_w * s + model.merge_b)
        bits[t] = fused[t] > 0.5
        j = t - pilot_offset
        b = PILOT[j] if 0 <= j < PILOT_LEN else bits[t]
        run = run + 1 if b else 0
    return bits, fused


def decode(trace, link, model, origin=None, refine=True):
    """Origin detection, spike repair, then the three blocks and the merge for every window."""
    if link.window != model.window:
        raise ValueError(f"model was trained for {model.window}-sample windows, link has {link.window}")
    if len(trace) < link.window:
        raise ChannelError("trace is shorter than one window")
    rt, origin = prepare_trace(trace, link, origin, model.repair)
    if refine:
        origin = refine_origin(rt, link, model, origin)
    stream = make_stream(rt, link, origin)
    bits, fused = decode_stream(stream, model)
    return UniversalDecode(origin, bits, fused)


# ------------------------------------------------------------- persistence

def universal_to_dict(model):
    return {
        "format": BUNDLE_FORMAT, "version": 1, "window": model.window, "eta": model.eta,
        "merge": {"w": model.merge_w, "b": model.merge_b, "fixed": model.fixed_merge},
        "repair": model.repair, "meta": model.meta,
        "blocks": {"noise": model_to_dict(model.noise_block),
                   "delay": model_to_dict(model.delay_block),
                   "adjacent": model_to_dict(model.adjacent_block)},
    }


def universal_from_dict(d):
    if d.get("format") != BUNDLE_FORMAT:
        raise ValueError(f"not a {BUNDLE_FORMAT} bundle")
    b = d["blocks"]
    return UniversalModel(model_from_dict(b["noise"]), model_from_dict(b["delay"]),
                          model_from_dict(b["adjacent"]), int(d["window"]), float(d["eta"]),
                          float(d["merge"]["w"]), float(d["merge"]["b"]), bool(d["merge"]["fixed"]),
                          bool(d.get("repair", True)), dict(d.get("meta") or {}))


def save_universal(model, path):
    Path(path).write_text(json.dumps(universal_to_dict(model)))


def load_universal(path):
    return universal_from_dict(json.loads(Path(path).read_text()))


def link_for(model):
    """LinkConfig matching a trained model's metadata."""
    return LinkConfig(model.meta["t_s"], f_p=model.meta.get("f_p", 8.0))


__all__ = [
    "DEFAULT_SCHEDULE", "EPS", "Stream", "TrainingSwitches", "UniversalDecode", "UniversalModel",
    "adjacent_block_infer", "combine_adjacent", "decode", "decode_stream", "delay_block_infer",
    "extended_features", "init_universal", "load_universal", "make_stream", "merge_decide",
    "noise_block_infer", "noise_features", "pair_features", "prepare_trace", "refine_origin",
    "run_lengths", "save_universal", "train_universal", "training_streams", "universal_from_dict",
    "universal_to_dict",
]
