"""Phenomenological receiver-response simulator for the OOK glucose link.

Each bit-1 launches a pulse (linear rise over ``rise_time``, exponential decay
with ``decay_time``) delayed by a non-negative jitter draw. Whatever signal is
still present at a slot boundary survives into the next slot scaled by
``isi_tap``, or by ``isi_tap - wash_gain`` when the slot just ended carried an
injection. Baseline drift, Poisson spikes and white sensor noise are added on
top.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

SYMBOL_INTERVALS = (0.5, 1.0, 2.0, 3.0)
# injection duration paired with each symbol interval in the testbed table
DEFAULT_INJECTION = {0.5: 0.25, 1.0: 0.5, 2.0: 1.0, 3.0: 2.0}
MAX_RISE_TIME = 5.0
# jitter draws are clipped at this many standard deviations
JITTER_CLIP = 3.0


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    t_s: float
    t_w: float | None = None
    v: float = 0.5
    r: float = 2.0
    f_p: float = 8.0

    def __post_init__(self):
        if self.t_s not in SYMBOL_INTERVALS:
            raise ChannelError(f"t_s must be one of {SYMBOL_INTERVALS}, got {self.t_s}")
        if self.t_w is None:
            object.__setattr__(self, "t_w", DEFAULT_INJECTION[self.t_s])
        if not 0 < self.t_w <= self.t_s:
            raise ChannelError(f"t_w must lie in (0, t_s], got {self.t_w}")
        if self.v <= 0 or self.r <= 0 or self.f_p <= 0:
            raise ChannelError("v, r and f_p must be positive")
        n = self.f_p * self.t_s
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ChannelError(f"f_p * t_s = {n} is not a positive integer window length")

    @property
    def window(self):
        """Samples per symbol slot."""
        return int(round(self.f_p * self.t_s))


@dataclass(frozen=True)
class ChannelModel:
    pulse_amplitude: float = 1.0
    rise_time: float = 0.25
    decay_time: float = 0.6
    isi_tap: float = 0.0
    wash_gain: float = 0.0
    drift_slope: float = 0.0
    drift_walk_std: float = 0.0
    spike_rate: float = 0.0
    spike_height_range: tuple = (1.0, 2.0)
    spike_width_range: tuple = (1, 3)
    delay_jitter_std: float = 0.0
    sensor_noise_std: float = 0.0
    baseline: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "spike_height_range", tuple(float(x) for x in self.spike_height_range))
        object.__setattr__(self, "spike_width_range", tuple(int(x) for x in self.spike_width_range))
        if not 0 < self.rise_time <= MAX_RISE_TIME:
            raise ChannelError(f"rise_time must lie in (0, {MAX_RISE_TIME}] s")
        if self.decay_time <= 0:
            raise ChannelError("decay_time must be positive")
        if not 0 <= self.isi_tap < 1:
            raise ChannelError("isi_tap must lie in [0, 1)")
        if not 0 <= self.wash_gain <= self.isi_tap:
            raise ChannelError("wash_gain must lie in [0, isi_tap]")
        for name in ("drift_walk_std", "spike_rate", "delay_jitter_std", "sensor_noise_std"):
            if getattr(self, name) < 0:
                raise ChannelError(f"{name} must be non-negative")
        lo, hi = self.spike_height_range
        wlo, whi = self.spike_width_range
        if not 0 <= lo <= hi or not 1 <= wlo <= whi:
            raise ChannelError("spike ranges must be ordered and non-negative (width >= 1 sample)")

    @property
    def max_jitter(self):
        return JITTER_CLIP * self.delay_jitter_std

    def noiseless(self):
        return replace(self, drift_walk_std=0.0, spike_rate=0.0, delay_jitter_std=0.0,
                       sensor_noise_std=0.0)

    def to_dict(self):
        d = asdict(self)
        d["spike_height_range"] = list(self.spike_height_range)
        d["spike_width_range"] = list(self.spike_width_range)
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ChannelError(f"unknown channel fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Trace:
    samples: np.ndarray
    f_p: float = 8.0
    origin_sample: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ChannelError("trace needs a non-empty 1-D sample array")
        if self.f_p <= 0:
            raise ChannelError("f_p must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ChannelError("trace contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.f_p


def check_bits(bits):
    arr = np.asarray(bits)
    if arr.ndim != 1 or arr.size == 0:
        raise ChannelError("bit sequence must be a non-empty 1-D sequence")
    if not np.all((arr == 0) | (arr == 1)):
        bad = int(np.flatnonzero((arr != 0) & (arr != 1))[0])
        raise ChannelError(f"bit {bad} is {arr[bad]!r}; only 0 and 1 are allowed")
    return arr.astype(np.int8)


def pulse_kernel(t, chan, amplitude=None):
    """Noise-free single-pulse response at times ``t`` (seconds since onset)."""
    a = chan.pulse_amplitude if amplitude is None else amplitude
    t = np.asarray(t, dtype=float)
    rise = np.clip(t / chan.rise_time, 0.0, 1.0)
    decay = np.exp(-np.clip(t - chan.rise_time, 0.0, None) / chan.decay_time)
    return np.where(t < 0, 0.0, a * rise * decay)


def injection_gain(link):
    """Pulse amplitude multiplier from the injected dose relative to a half-slot injection."""
    return math.sqrt(2.0 * link.t_w / link.t_s)


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def _spike_profile(width):
    centre = (width - 1) / 2.0
    k = np.arange(width)
    return 1.0 - np.abs(k - centre) / (width / 2.0 + 0.5)


def _signal(bits, link, chan, delays, lead_in, length):
    """Deterministic pulse + carried-residual component, zero baseline."""
    n = link.window
    f_p = link.f_p
    amp = chan.pulse_amplitude * injection_gain(link)
    out = np.zeros(length)
    n_windows = math.ceil((length - lead_in) / n)
    local_t = np.arange(n) / f_p
    active = []  # [onset_delay_in_window_units, window_of_onset, carry_factor]
    for k in range(n_windows):
        if k > 0:
            prev_bit = bits[k - 1] if k - 1 < bits.size else 0
            tap = chan.isi_tap - chan.wash_gain * prev_bit
            for p in active:
                p[2] *= tap
            active = [p for p in active if p[2] > 1e-15]
        if k < bits.size and bits[k]:
            active.append([delays[k], k, 1.0])
        if not active:
            continue
        start = lead_in + k * n
        stop = min(start + n, length)
        seg = np.zeros(stop - start)
        for delay, onset, carry in active:
            t = local_t[: stop - start] + (k - onset) * link.t_s - delay
            seg += carry * pulse_kernel(t, chan, amp)
        out[start:stop] = seg
        # drop pulses that have fully decayed
        tail = [(k + 1 - p[1]) * link.t_s - p[0] for p in active]
        active = [p for p, tt in zip(active, tail)
                  if p[2] * amp * math.exp(-max(tt - chan.rise_time, 0.0) / chan.decay_time) > 1e-15]
    return out


def simulate_trace(bits, link, chan, seed, lead_in=0, lead_out=0):
    """Receiver trace for ``bits``; a pure function of its arguments.

    The trace holds ``lead_in`` idle samples, one ``link.window``-sample slot per
    bit, then ``lead_out`` idle samples. ``origin_sample`` is set to ``lead_in``.
    """
    bits = check_bits(bits)
    if lead_in < 0 or lead_out < 0:
        raise ChannelError("padding must be non-negative")
    n = link.window
    length = lead_in + math.ceil(link.f_p * link.t_s * bits.size) + lead_out
    r_jit, r_drift, r_spike, r_noise = _streams(seed)

    delays = np.abs(r_jit.normal(0.0, 1.0, size=bits.size)) * chan.delay_jitter_std
    delays = np.minimum(delays, chan.max_jitter)

    t = (np.arange(length) - lead_in) / link.f_p
    baseline = chan.baseline + chan.drift_slope * t
    steps = r_drift.normal(0.0, chan.drift_walk_std / math.sqrt(link.f_p), size=length)
    steps[0] = 0.0
    baseline = baseline + np.cumsum(steps)

    spikes = np.zeros(length)
    count = r_spike.poisson(chan.spike_rate * length / link.f_p) if chan.spike_rate > 0 else 0
    lo, hi = chan.spike_height_range
    wlo, whi = chan.spike_width_range
    for _ in range(count):
        start = int(r_spike.integers(0, length))
        height = r_spike.uniform(lo, hi)
        width = int(r_spike.integers(wlo, whi + 1))
        prof = height * _spike_profile(width)
        stop = min(start + width, length)
        spikes[start:stop] += prof[: stop - start]

    noise = r_noise.normal(0.0, chan.sensor_noise_std, size=length)
    samples = baseline + _signal(bits, link, chan, delays, lead_in, length) + spikes + noise
    meta = {"t_s": link.t_s, "t_w": link.t_w,
            "bits": bits.tolist(), "delays": delays.tolist(), "n_spikes": int(count),
            "idle_windows": int(lead_out // n) if n else 0}
    return Trace(samples, link.f_p, lead_in, meta)


def perfect_trace(bits, link, chan, lead_in=0, lead_out=0):
    """Noise-free reference: every stochastic term of ``chan`` forced to zero."""
    return simulate_trace(bits, link, chan.noiseless(), seed=0, lead_in=lead_in, lead_out=lead_out)


# ---------------------------------------------------------------- presets / IO

def load_preset(name_or_path):
    """Channel preset by bundled name (``paper_like``, ``noiseless``) or JSON path."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        key = str(name_or_path).replace("-", "_")
        try:
            text = resources.files("molink.presets").joinpath(f"{key}.json").read_text()
        except FileNotFoundError:
            raise ChannelError(f"no preset named {name_or_path!r}") from None
    data = json.loads(text)
    data.pop("description", None)
    return ChannelModel.from_dict(data)


def save_trace(trace, path, link=None, chan=None, seed=None):
    """Write ``path`` as CSV and ``path`` + ``.json`` as the metadata sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "amplitude"])
        for i, v in enumerate(trace.samples):
            w.writerow([i, repr(float(v))])
    sidecar = {
        "f_p": trace.f_p,
        "origin_sample": trace.origin_sample,
        "seed": seed,
        "link": asdict(link) if link is not None else None,
        "channel": chan.to_dict() if chan is not None else None,
        "meta": trace.meta,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))


def load_trace(path):
    """Read a trace CSV; returns ``(trace, sidecar_dict_or_None)``."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["sample_index", "amplitude"]:
        raise ChannelError(f"{path}: expected header sample_index,amplitude")
    samples = np.array([float(r[1]) for r in rows[1:]])
    side_path = Path(str(path) + ".json")
    sidecar = json.loads(side_path.read_text()) if side_path.exists() else None
    f_p = sidecar["f_p"] if sidecar else 8.0
    origin = sidecar.get("origin_sample") if sidecar else None
    meta = (sidecar or {}).get("meta") or {}
    return Trace(samples, f_p, origin, meta), sidecar
