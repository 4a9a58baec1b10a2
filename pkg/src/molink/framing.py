"""Pilot handling: origin detection, per-bit windowing and symbol-interval estimation."""

from dataclasses import dataclass

import numpy as np

from .channel import SYMBOL_INTERVALS, ChannelError, LinkConfig, Trace, check_bits, simulate_trace
from .neural import MlpModel, TrainConfig, init_mlp, mlp_forward, model_from_dict, model_to_dict, train

PILOT = (1, 1, 1, 1, 0)
PILOT_LEN = len(PILOT)
SYNC_SPAN_S = 10.0
MEDIAN_TAPS = 3
DEFAULT_MIN_CONFIDENCE = 0.5


class NoPilotFound(ChannelError):
    pass


@dataclass(frozen=True)
class BitSequence:
    bits: tuple
    pilot_len: int = PILOT_LEN

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in check_bits(self.bits)))
        if self.pilot_len and self.bits[: self.pilot_len] != PILOT[: self.pilot_len]:
            raise ChannelError(f"sequence does not start with the pilot {PILOT}")

    @classmethod
    def with_pilot(cls, payload):
        payload = tuple(int(b) for b in payload)
        return cls(PILOT + payload)

    @property
    def payload(self):
        return self.bits[self.pilot_len:]

    def __len__(self):
        return len(self.bits)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.bits, dtype=dtype or np.int8)


@dataclass(frozen=True)
class SymbolWindow:
    values: np.ndarray
    index: int


def _median_filter(y, taps=3):
    h = taps // 2
    padded = np.concatenate([np.repeat(y[:1], h), y, np.repeat(y[-1:], h)])
    return np.median(np.lib.stride_tricks.sliding_window_view(padded, taps), axis=1)


def _early_rises(y, starts, q):
    win = y[starts[:, None] + np.arange(q)[None, :]]
    return win.max(axis=1) - win[:, 0]


def onset_span(link):
    """Samples after a slot start in which a pulse onset is expected to peak."""
    return min(link.window, max(2, int(round(0.5 * link.f_p))))


def slot_phase(y, link):
    """Slot phase in ``[0, window)`` from the mean early rise over every slot of the trace.

    Among equal maxima the phase whose successor scores lower wins, i.e. the
    last sample before the onset ramp begins.
    """
    n = link.window
    q = onset_span(link)
    # every phase averages the same number of slots, so an idle lead-in slot
    # cannot tip the balance between phases
    k = (y.size - (n - 1) - q) // n + 1
    if k < 1:
        raise ChannelError(f"{y.size} samples do not hold one slot at every phase")
    scores = np.array([_early_rises(y, ph + np.arange(k) * n, q).mean() for ph in range(n)])
    top = scores.max()
    tol = 1e-9 * max(1.0, abs(top))
    for ph in range(n):
        if scores[ph] >= top - tol and scores[(ph + 1) % n] < top - tol:
            return ph
    return int(np.argmax(scores))


def _noise_scale(raw):
    # mean |median-3 residual|; 0.563 is its value for unit white noise.
    # (a MAD here collapses to zero on monotone stretches)
    return float(np.mean(np.abs(raw - _median_filter(raw, 3)))) / 0.563


def pilot_score(y, origin, link):
    """Three smallest pilot-1 early rises minus the pilot-0 and pre-pilot rises.

    The slot before the pilot is expected to be idle, so any onset there
    counts against the candidate.
    """
    n = link.window
    q = onset_span(link)
    r = _early_rises(y, origin + np.arange(PILOT_LEN) * n, q)
    pre = 0.0
    if origin >= 2:
        seg = y[max(0, origin - n): origin + 1]
        pre = float(seg.max() - seg[0])
    return float(np.sort(r[:4])[:3].sum() - r[4] - pre)


def detect_origin(trace, link, max_lead=None, min_confidence=DEFAULT_MIN_CONFIDENCE):
    """Sample index of the first pilot slot.

    The trace is median-filtered (3 taps) to suppress narrow spikes. The slot
    phase comes from onset evidence pooled over the whole trace; candidate
    origins are then that phase plus whole slots up to ``max_lead`` (default
    ``max(window, 16)`` samples), scored against the pilot template (earliest
    best wins). :class:`NoPilotFound` is raised when the mean pilot rise is
    below ``min_confidence`` times a white-noise scale (mean absolute
    median-filter residual). The default floor only rejects near-flat traces;
    under strong baseline wander a silent trace can look like a weak pilot.
    """
    raw = trace.samples
    n = link.window
    span = PILOT_LEN * n
    if raw.size < span:
        raise NoPilotFound(f"trace has {raw.size} samples, pilot needs {span}")
    if max_lead is None:
        max_lead = max(n, 16)
    y = _median_filter(raw, MEDIAN_TAPS)
    last = min(max_lead, raw.size - span)
    best, best_score = None, -np.inf
    origin = slot_phase(y, link)
    while origin <= last:
        s = pilot_score(y, origin, link)
        if s > best_score + 1e-12:
            best, best_score = origin, s
        origin += n
    if best is None:
        raise NoPilotFound("no candidate origin within the search span")
    rises = _early_rises(y, best + np.arange(4) * n, onset_span(link))
    noise = _noise_scale(raw)
    mean_rise = float(rises.mean())
    if mean_rise <= 0 or mean_rise < min_confidence * noise:
        raise NoPilotFound(f"best pilot rise {mean_rise:.3g} is below {min_confidence} x noise {noise:.3g}")
    return best


def window_matrix(trace, link, origin):
    """All complete windows from ``origin`` as a ``(k, window)`` array."""
    n = link.window
    size = len(trace)
    if not 0 <= origin < size:
        raise ChannelError(f"origin {origin} outside trace of {size} samples")
    k = (size - origin) // n
    return trace.samples[origin: origin + k * n].reshape(k, n)


def segment(trace, link, origin):
    return [SymbolWindow(w, i) for i, w in enumerate(window_matrix(trace, link, origin))]


# --------------------------------------------------------- interval classifier

def sync_samples(link_f_p=8.0):
    return int(round(SYNC_SPAN_S * link_f_p))


def pilot_features(samples):
    """Offset-, drift- and scale-free view of a pilot span: first difference of the
    median-filtered samples over its largest magnitude."""
    x = np.asarray(samples, dtype=float)
    h = MEDIAN_TAPS // 2
    padded = np.concatenate([np.repeat(x[..., :1], h, -1), x, np.repeat(x[..., -1:], h, -1)], -1)
    y = np.median(np.lib.stride_tricks.sliding_window_view(padded, MEDIAN_TAPS, axis=-1), axis=-1)
    d = np.diff(y, axis=-1, prepend=y[..., :1])
    top = np.abs(d).max(axis=-1, keepdims=True)
    return np.divide(d, top, out=np.zeros_like(d), where=top > 0)


@dataclass
class IntervalClassifier:
    model: MlpModel
    classes: tuple = SYMBOL_INTERVALS

    def predict_proba(self, samples):
        return mlp_forward(self.model, pilot_features(samples))

    def predict(self, samples):
        p = self.predict_proba(samples)
        return np.asarray(self.classes)[np.argmax(p, axis=-1)]

    def to_dict(self):
        return {"classes": list(self.classes), "model": model_to_dict(self.model)}

    @classmethod
    def from_dict(cls, d):
        return cls(model_from_dict(d["model"]), tuple(d["classes"]))


def estimate_symbol_interval(pilot_samples, model, f_p=8.0):
    """Symbol interval from the first 10 s of a transmission (80 samples at 8 Hz)."""
    x = pilot_samples.samples if isinstance(pilot_samples, Trace) else np.asarray(pilot_samples, float)
    need = sync_samples(f_p)
    if x.shape != (need,):
        raise ChannelError(f"interval estimation needs exactly {need} samples, got {x.shape[0]}")
    return float(model.predict(x))


def simulated_pilot_spans(chan, per_class, seed, max_lead=3, classes=SYMBOL_INTERVALS):
    """Noisy 10 s spans starting near the pilot, with random payload after it."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for label, t_s in enumerate(classes):
        link = LinkConfig(t_s)
        need = sync_samples(link.f_p)
        n_bits = int(np.ceil(need / link.window)) + 1
        for _ in range(per_class):
            lead = int(rng.integers(0, max_lead + 1))
            bits = PILOT + tuple(rng.integers(0, 2, n_bits - PILOT_LEN))
            tr = simulate_trace(bits, link, chan, int(rng.integers(2**31)), lead_in=lead)
            xs.append(tr.samples[:need])
            ys.append(label)
    return np.array(xs), np.array(ys)


def train_interval_classifier(spans, labels, cfg=None, hidden=32, classes=SYMBOL_INTERVALS):
    """80 -> 32 sigmoid -> 4 softmax, cross-entropy, Adam."""
    cfg = cfg or TrainConfig(learning_rate=5e-3, epochs=150, batch_size=64, seed=0)
    x = pilot_features(spans)
    y = np.eye(len(classes))[labels]
    model = init_mlp([x.shape[1], hidden, len(classes)], cfg.seed, "sigmoid", "softmax")
    model, _ = train(model, x, y, "ce", cfg)
    return IntervalClassifier(model, tuple(classes))
