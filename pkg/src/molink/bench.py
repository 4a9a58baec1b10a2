"""BER campaigns over the symbol-interval / flow-rate grid and their CSV tables."""

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .channel import SYMBOL_INTERVALS, LinkConfig, load_preset, simulate_trace
from .framing import PILOT, PILOT_LEN
from .pipeline import DECODERS, bit_errors, check_decoder, train_decoder

logger = logging.getLogger(__name__)

FLOW_V = (0.5, 1.0)          # carrier flow, ml/min
FLOW_R = (1.0, 2.0, 4.0)     # injection flow, ml/min
REFERENCE_FLOW = (0.5, 2.0)  # presets are calibrated here
# higher r -> larger pulses, higher v -> faster clearance
AMPLITUDE_BY_R = {1.0: 0.7, 2.0: 1.0, 4.0: 1.4}
DECAY_BY_V = {0.5: 1.0, 1.0: 0.6}
DRIFT_REDRAW = (0.5, 1.5)    # per-trial multiplier range when drift is redrawn
MIN_CELL_BITS = 500

SPLITS = {"train": 0, "eval": 1}
CSV_COLUMNS = ("decoder", "t_s", "v", "r", "trials", "bits", "bit_errors", "ber", "ci_low", "ci_high")


class CampaignError(ValueError):
    pass


def channel_for_flow(chan, v, r):
    """Preset adjusted for a flow-rate pair (identity at the reference pair)."""
    if v not in DECAY_BY_V or r not in AMPLITUDE_BY_R:
        raise CampaignError(f"flow pair ({v}, {r}) is outside the grid v={FLOW_V}, r={FLOW_R}")
    return replace(chan, pulse_amplitude=chan.pulse_amplitude * AMPLITUDE_BY_R[r],
                   decay_time=chan.decay_time * DECAY_BY_V[v])


def wilson_interval(errors, n, confidence=0.95):
    if n <= 0:
        raise CampaignError("interval needs at least one bit")
    ci = binomtest(int(errors), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class ExperimentConfig:
    t_s_grid: tuple = SYMBOL_INTERVALS
    flow_pairs: tuple = (REFERENCE_FLOW,)
    bits_per_trial: int = 100
    trials_per_cell: int = 40
    train_trials: int = 40
    decoders: tuple = DECODERS
    preset: str = "paper_like"
    master_seed: int = 0
    redraw_drift: bool = False

    def __post_init__(self):
        object.__setattr__(self, "t_s_grid", tuple(float(t) for t in self.t_s_grid))
        object.__setattr__(self, "flow_pairs", tuple((float(v), float(r)) for v, r in self.flow_pairs))
        object.__setattr__(self, "decoders", tuple(self.decoders))
        for t in self.t_s_grid:
            if t not in SYMBOL_INTERVALS:
                raise CampaignError(f"t_s {t} is not one of {SYMBOL_INTERVALS}")
        for v, r in self.flow_pairs:
            if v not in FLOW_V or r not in FLOW_R:
                raise CampaignError(f"flow pair ({v}, {r}) is outside v={FLOW_V}, r={FLOW_R}")
        for d in self.decoders:
            check_decoder(d)
        if not self.t_s_grid or not self.flow_pairs or not self.decoders:
            raise CampaignError("grid, flow pairs and decoders must be non-empty")
        if self.trials_per_cell < 1 or self.train_trials < 1:
            raise CampaignError("trials must be >= 1")
        if self.bits_per_trial <= PILOT_LEN:
            raise CampaignError(f"bits_per_trial must exceed the {PILOT_LEN}-bit pilot")
        if self.eval_bits_per_cell < MIN_CELL_BITS:
            raise CampaignError(f"{self.eval_bits_per_cell} payload bits per cell; at least "
                                f"{MIN_CELL_BITS} are needed for a usable BER")

    @property
    def eval_bits_per_cell(self):
        return self.trials_per_cell * (self.bits_per_trial - PILOT_LEN)

    def to_dict(self):
        d = asdict(self)
        d["t_s_grid"] = list(self.t_s_grid)
        d["flow_pairs"] = [list(p) for p in self.flow_pairs]
        d["decoders"] = list(self.decoders)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise CampaignError(f"unknown config keys: {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class BerRow:
    decoder: str
    t_s: float
    v: float
    r: float
    trials: int
    bits: int
    bit_errors: int
    ber: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, decoder, t_s, v, r, trials, bits, errors):
        lo, hi = wilson_interval(errors, bits)
        return cls(decoder, float(t_s), float(v), float(r), int(trials), int(bits), int(errors),
                   errors / bits, lo, hi)


@dataclass
class BerTable:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def get(self, decoder, t_s, v=REFERENCE_FLOW[0], r=REFERENCE_FLOW[1]):
        for row in self.rows:
            if (row.decoder, row.t_s, row.v, row.r) == (decoder, float(t_s), float(v), float(r)):
                return row
        raise KeyError((decoder, t_s, v, r))

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, BerTable) and self.rows == other.rows


def trial_seed(master, cell, split, trial):
    """Independent 32-bit seed for one trial; ``split`` keeps train and eval apart."""
    return int(np.random.SeedSequence([master, cell, SPLITS[split], trial]).generate_state(1)[0])


def trial_data(link, chan, seed, n_bits, redraw=False):
    """One pilot-led random message and its trace, all drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    bits = np.array(PILOT + tuple(rng.integers(0, 2, n_bits - PILOT_LEN)), dtype=np.int8)
    lead = int(rng.integers(0, max(link.window, 16) + 1))
    if redraw:
        lo, hi = DRIFT_REDRAW
        chan = replace(chan, drift_slope=chan.drift_slope * rng.uniform(lo, hi),
                       drift_walk_std=chan.drift_walk_std * rng.uniform(lo, hi))
    return bits, simulate_trace(bits, link, chan, seed, lead_in=lead, lead_out=link.window)


def run_campaign(cfg, progress=None):
    """Train every decoder per cell on the training split and score it on the shared
    evaluation split. The table's ``meta["seeds"]`` records every seed used."""
    base = load_preset(cfg.preset)
    table = BerTable(meta={"config": cfg.to_dict(), "seeds": {}, "seconds": {}})
    cell = 0
    for v, r in cfg.flow_pairs:
        chan = channel_for_flow(base, v, r)
        for t_s in cfg.t_s_grid:
            t0 = time.perf_counter()
            link = LinkConfig(t_s, v=v, r=r)
            train_seeds = [trial_seed(cfg.master_seed, cell, "train", i) for i in range(cfg.train_trials)]
            eval_seeds = [trial_seed(cfg.master_seed, cell, "eval", i) for i in range(cfg.trials_per_cell)]
            if set(train_seeds) & set(eval_seeds):
                raise CampaignError(f"cell {cell}: training and evaluation seeds collide")
            train = [trial_data(link, chan, s, cfg.bits_per_trial, cfg.redraw_drift) for s in train_seeds]
            evals = [trial_data(link, chan, s, cfg.bits_per_trial, cfg.redraw_drift) for s in eval_seeds]
            for name in cfg.decoders:
                dec = train_decoder(name, train, link, seed=cfg.master_seed)
                errors = sum(bit_errors(b, dec.decode(tr, b.size)) for b, tr in evals)
                row = BerRow.from_counts(name, t_s, v, r, len(evals), cfg.eval_bits_per_cell, errors)
                table.rows.append(row)
                logger.info("%s t_s=%g (v=%g, r=%g): BER %.4f", name, t_s, v, r, row.ber)
                if progress:
                    progress(row)
            key = f"{t_s:g}/{v:g}/{r:g}"
            table.meta["seeds"][key] = {"train": train_seeds, "eval": eval_seeds}
            table.meta["seconds"][key] = round(time.perf_counter() - t0, 3)
            cell += 1
    return table


def export_csv(table, path):
    if not table.rows:
        raise CampaignError("cannot export an empty table")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in table.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in astuple_row(row)])
    return path


def astuple_row(row):
    return tuple(getattr(row, c) for c in CSV_COLUMNS)


def load_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise CampaignError(f"{path}: expected header {','.join(CSV_COLUMNS)}")
    out = []
    for r in rows[1:]:
        out.append(BerRow(r[0], float(r[1]), float(r[2]), float(r[3]), int(r[4]), int(r[5]),
                          int(r[6]), float(r[7]), float(r[8]), float(r[9])))
    return BerTable(out)


def separated(low_row, high_row):
    """True when ``low_row``'s interval lies entirely below ``high_row``'s."""
    return low_row.ci_high < high_row.ci_low


__all__ = [
    "BerRow", "BerTable", "CampaignError", "ExperimentConfig", "channel_for_flow", "export_csv",
    "load_csv", "run_campaign", "separated", "trial_data", "trial_seed", "wilson_interval",
]
