import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from molink.bench import (
    CSV_COLUMNS, BerRow, BerTable, CampaignError, ExperimentConfig, channel_for_flow, export_csv, load_csv,
    run_campaign, separated, trial_data, trial_seed, wilson_interval,
)
from molink.channel import LinkConfig, load_preset


def wilson_oracle(k, n, z=1.959963984540054):
    """Wilson score interval written out from its closed form."""
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return centre - half, centre + half


@pytest.fixture(scope="module")
def one_cell():
    cfg = ExperimentConfig(t_s_grid=(1.0,), trials_per_cell=1, bits_per_trial=505, train_trials=6,
                           decoders=("nst",), master_seed=3)
    return cfg, run_campaign(cfg)


def test_wilson_at_five_percent_of_2000():
    lo, hi = wilson_interval(100, 2000)
    want = wilson_oracle(100, 2000)
    assert lo == pytest.approx(want[0], abs=1e-12) and hi == pytest.approx(want[1], abs=1e-12)
    assert lo == pytest.approx(0.0412, abs=1e-4) and hi == pytest.approx(0.0605, abs=1e-4)


@given(st.integers(1, 5000), st.data())
def test_wilson_matches_closed_form_and_contains_ber(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    want = wilson_oracle(k, n)
    assert lo == pytest.approx(max(want[0], 0.0), abs=1e-9)
    assert hi == pytest.approx(min(want[1], 1.0), abs=1e-9)
    assert lo <= k / n <= hi


def test_wilson_needs_bits():
    with pytest.raises(CampaignError):
        wilson_interval(0, 0)


def test_seeds_are_disjoint_and_stable():
    train = {trial_seed(0, c, "train", i) for c in range(4) for i in range(200)}
    evals = {trial_seed(0, c, "eval", i) for c in range(4) for i in range(200)}
    assert len(train) == 800 and len(evals) == 800 and not train & evals
    assert trial_seed(0, 1, "eval", 2) == trial_seed(0, 1, "eval", 2)
    assert trial_seed(0, 1, "eval", 2) != trial_seed(1, 1, "eval", 2)


def test_trial_data_is_seeded():
    link, chan = LinkConfig(1.0), load_preset("paper_like")
    a, ta = trial_data(link, chan, 11, 40)
    b, tb = trial_data(link, chan, 11, 40)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(ta.samples, tb.samples)
    assert 0 <= ta.origin_sample <= 16
    redrawn = trial_data(link, chan, 11, 40, redraw=True)[1]
    assert not np.array_equal(redrawn.samples, ta.samples)


def test_flow_table():
    chan = load_preset("paper_like")
    assert channel_for_flow(chan, 0.5, 2.0) == chan
    fast = channel_for_flow(chan, 1.0, 4.0)
    assert fast.pulse_amplitude > chan.pulse_amplitude and fast.decay_time < chan.decay_time
    with pytest.raises(CampaignError):
        channel_for_flow(chan, 0.7, 2.0)


@pytest.mark.parametrize("kw", [
    dict(t_s_grid=(1.5,)), dict(flow_pairs=((0.5, 3.0),)), dict(trials_per_cell=0),
    dict(trials_per_cell=2), dict(bits_per_trial=5), dict(decoders=("viterbi",)), dict(decoders=()),
])
def test_config_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_config_dict_roundtrip():
    cfg = ExperimentConfig(t_s_grid=(0.5, 2), flow_pairs=[(1, 4)], master_seed=9)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(CampaignError):
        ExperimentConfig.from_dict({"trials": 3})


def test_single_cell_single_trial_gives_one_row(one_cell):
    cfg, table = one_cell
    assert len(table) == 1
    row = table.rows[0]
    assert row.trials == 1 and row.bits == 500
    assert 0 <= row.ber <= 1 and row.ci_low <= row.ber <= row.ci_high
    assert table.get("nst", 1.0) is row


def test_campaign_is_deterministic_and_splits_are_clean(one_cell):
    cfg, table = one_cell
    assert run_campaign(cfg) == table
    seeds = table.meta["seeds"]["1/0.5/2"]
    assert len(seeds["train"]) == 6 and len(seeds["eval"]) == 1
    assert not set(seeds["train"]) & set(seeds["eval"])


def test_csv_roundtrip(tmp_path, one_cell):
    _, table = one_cell
    path = export_csv(table, tmp_path / "ber.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and lines[0] == ",".join(CSV_COLUMNS)
    assert load_csv(path) == table


def test_csv_is_bit_exact(tmp_path):
    row = BerRow.from_counts("ann", 0.5, 1.0, 4.0, 7, 2000, 333)
    table = BerTable([row, BerRow("nst", 3.0, 0.5, 1.0, 1, 3, 1, 1 / 3, 0.1 / 7, 0.9)])
    path = export_csv(table, tmp_path / "t.csv")
    assert load_csv(path) == table


def test_csv_errors(tmp_path):
    with pytest.raises(CampaignError):
        export_csv(BerTable(), tmp_path / "e.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n")
    with pytest.raises(CampaignError):
        load_csv(bad)


def test_separation():
    lo = BerRow.from_counts("universal", 1.0, 0.5, 2.0, 20, 2000, 50)
    hi = BerRow.from_counts("ann", 1.0, 0.5, 2.0, 20, 2000, 300)
    assert separated(lo, hi) and not separated(hi, lo)
    near = BerRow.from_counts("ann", 1.0, 0.5, 2.0, 20, 2000, 55)
    assert not separated(lo, near)


def test_noiseless_campaign_is_error_free():
    cfg = ExperimentConfig(t_s_grid=(0.5, 2.0), trials_per_cell=5, bits_per_trial=105, train_trials=8,
                           preset="noiseless")
    table = run_campaign(cfg)
    assert len(table) == 6
    assert all(row.bit_errors == 0 for row in table.rows)
