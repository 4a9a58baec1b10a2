"""Baseline detectors: successive thresholding, spike repair and a per-window MLP."""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .channel import Trace
from .framing import PILOT_LEN
from .neural import TrainConfig, init_mlp, mlp_forward, train

DEFAULT_ETA_GRID = tuple(round(0.1 + 0.05 * i, 2) for i in range(17))
ANN_HIDDEN = (10, 10, 10)
SPIKE_MAX_WIDTH = 2
SPIKE_FLOOR_RATIO = 0.5


# ------------------------------------------------------- successive thresholding

@dataclass(frozen=True)
class ThresholdState:
    eta: float
    pilot_mean_rise: float

    @property
    def threshold(self):
        return self.eta * self.pilot_mean_rise


def window_rise(window):
    w = np.asarray(window, dtype=float)
    return w.max(axis=-1) - w[..., 0]


def nst_calibrate(pilot_windows, eta):
    w = np.asarray([getattr(x, "values", x) for x in pilot_windows], dtype=float)
    if w.ndim != 2 or w.shape[0] != 4:
        raise ValueError(f"calibration needs exactly 4 pilot windows, got {len(pilot_windows)}")
    if eta <= 0:
        raise ValueError("eta must be positive")
    return ThresholdState(float(eta), float(window_rise(w).mean()))


def nst_detect(window, state):
    return int(window_rise(getattr(window, "values", window)) > state.threshold)


def nst_decode(windows, eta):
    """Decisions for every window of a stream whose first four windows are the pilot 1s."""
    windows = np.asarray(windows, dtype=float)
    state = nst_calibrate(windows[:4], eta)
    return (window_rise(windows) > state.threshold).astype(np.int8)


def nst_tune(training, eta_grid=DEFAULT_ETA_GRID, pilot_len=PILOT_LEN):
    """Grid value with the fewest payload bit errors over ``training``; ties go to the smaller eta.

    ``training`` is a list of ``(windows, bits)`` whose first four windows are pilot 1s.
    """
    if not training or not len(eta_grid):
        raise ValueError("nst_tune needs training data and a non-empty grid")
    prepared = []
    for windows, bits in training:
        windows = np.asarray(windows, dtype=float)
        k = min(len(windows), len(bits))
        prepared.append((window_rise(windows[:k]), windows_pilot_rise(windows),
                         np.asarray(bits[:k]), pilot_len))
    best_eta, best_err = None, None
    for eta in sorted(eta_grid):
        err = 0
        for rises, mean_rise, bits, skip in prepared:
            dec = rises > eta * mean_rise
            err += int(np.sum(dec[skip:] != bits[skip:]))
        if best_err is None or err < best_err:
            best_eta, best_err = float(eta), err
    return best_eta


def windows_pilot_rise(windows):
    return float(window_rise(np.asarray(windows[:4], dtype=float)).mean())


# -------------------------------------------------------------- spike repair

@dataclass(frozen=True)
class SpikeEvent:
    start: int
    end: int
    height: float
    sharpness: float

    def to_dict(self):
        return asdict(self)


def _height(y, i, j):
    return float(y[i + 1: j].max() - max(y[i], y[j]))


def default_spike_floor(trace, link, origin=None):
    """Half the mean pilot rise: a spike must be comparable to a real pulse.

    Falls back to three median absolute deviations of the whole trace when
    fewer than four pilot windows fit.
    """
    o = trace.origin_sample if origin is None else origin
    o = 0 if o is None else o
    n = link.window
    seg = trace.samples[o: o + 4 * n]
    if seg.size == 4 * n:
        return SPIKE_FLOOR_RATIO * windows_pilot_rise(seg.reshape(4, n))
    y = trace.samples
    return 3.0 * float(np.median(np.abs(y - np.median(y))))


def find_spikes(trace, link, height_floor=None, origin=None, max_width=SPIKE_MAX_WIDTH):
    """Greedy left-to-right search for sharp sub-slot excursions.

    An event is a segment ``[i, j]`` with ``j - i < window`` whose interior
    maximum exceeds both endpoints by more than ``height_floor``. For each hit
    the endpoints are re-chosen around the peak to maximise the height (the
    tightest segment wins ties), then scanning resumes at ``j``.
    """
    y = trace.samples if isinstance(trace, Trace) else np.asarray(trace, dtype=float)
    span = min(link.window - 1, max_width)  # max j - i
    if height_floor is None:
        height_floor = default_spike_floor(trace, link, origin) if isinstance(trace, Trace) else 0.0
    events = []
    if y.size < 3 or span < 2:
        return events
    n = y.size
    i = 0
    while i < n - 2:
        best_h, best_j = -np.inf, None
        run_max = -np.inf
        for j in range(i + 2, min(i + span, n - 1) + 1):
            run_max = max(run_max, y[j - 1])
            h = run_max - max(y[i], y[j])
            if h > best_h:
                best_h, best_j = h, j
        if best_j is None or best_h <= height_floor:
            i += 1
            continue
        peak = i + 1 + int(np.argmax(y[i + 1: best_j]))
        lo_start = max(peak - span + 1, 0, i)
        best = (-np.inf, 0, i, best_j)
        for a in range(lo_start, peak):
            for b in range(peak + 1, min(a + span, n - 1) + 1):
                h = y[peak] - max(y[a], y[b])
                width = b - a
                if h > best[0] + 1e-12 or (abs(h - best[0]) <= 1e-12 and width < best[1]):
                    best = (h, width, a, b)
        h, width, a, b = best
        events.append(SpikeEvent(int(a), int(b), float(h), float(2.0 * h / width)))
        i = b
    return events


def repair_spikes(trace, events):
    """Linear interpolation between each event's endpoints; everything else untouched."""
    ordered = sorted(events, key=lambda e: e.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise ValueError(f"spike events overlap: {prev} and {cur}")
    y = trace.samples.copy()
    for e in ordered:
        if not 0 <= e.start < e.end < y.size:
            raise ValueError(f"spike event {e} outside trace of {y.size} samples")
        k = np.arange(e.start + 1, e.end)
        y[k] = y[e.start] + (k - e.start) / (e.end - e.start) * (y[e.end] - y[e.start])
    return Trace(y, trace.f_p, trace.origin_sample, dict(trace.meta))


def spikes_to_json(events):
    return json.dumps([e.to_dict() for e in events])


# ------------------------------------------------------------ per-window MLP

@dataclass(frozen=True)
class PilotCalibration:
    """Per-trace reference level and amplitude scale taken from the pilot slots."""

    base: float
    scale: float

    @classmethod
    def from_windows(cls, windows):
        windows = np.asarray(windows, dtype=float)
        return cls(float(windows[0, 0]), max(windows_pilot_rise(windows), 1e-6))


def ann_features(windows, cal):
    """Each window relative to its first sample, plus that first sample as context."""
    w = np.asarray(windows, dtype=float)
    rel = (w - w[..., :1]) / cal.scale
    ctx = (w[..., :1] - cal.base) / cal.scale
    return np.concatenate([rel, ctx], axis=-1)


def ann_detect(window, model, cal):
    """Probability that ``window`` carries a bit-1."""
    x = ann_features(np.asarray(getattr(window, "values", window), dtype=float), cal)
    return float(mlp_forward(model, x)[..., 0])


def init_ann(window_len, seed=0):
    return init_mlp([window_len + 1, *ANN_HIDDEN, 1], seed, "sigmoid", "sigmoid")


def ann_training_set(streams):
    """Stack ``(windows, bits)`` streams into per-window features and targets."""
    xs, ys = [], []
    for windows, bits in streams:
        windows = np.asarray(windows, dtype=float)
        k = min(len(windows), len(bits))
        cal = PilotCalibration.from_windows(windows)
        xs.append(ann_features(windows[:k], cal))
        ys.append(np.asarray(bits[:k], dtype=float))
    return np.concatenate(xs), np.concatenate(ys)[:, None]


def train_ann(streams, cfg=None):
    cfg = cfg or TrainConfig(learning_rate=5e-3, epochs=150, batch_size=64, seed=0)
    x, y = ann_training_set(streams)
    model = init_ann(x.shape[1] - 1, cfg.seed)
    model, curve = train(model, x, y, "bce", cfg)
    return model, curve


def ann_decode(windows, model):
    windows = np.asarray(windows, dtype=float)
    cal = PilotCalibration.from_windows(windows)
    p = mlp_forward(model, ann_features(windows, cal))[:, 0]
    return (p > 0.5).astype(np.int8), p
