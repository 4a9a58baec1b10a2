import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from molink import universal as U
from molink.channel import ChannelError, LinkConfig, Trace, load_preset, perfect_trace
from molink.detectors import PilotCalibration
from molink.framing import PILOT
from molink.neural import TrainConfig, zero_mlp
from molink.neural.activations import sigmoid

probs = st.floats(1e-4, 1 - 1e-4)
LINK = LinkConfig(1.0)


def noiseless_dataset(n, n_bits=40, seed=0):
    chan = load_preset("noiseless")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        bits = np.array(PILOT + tuple(rng.integers(0, 2, n_bits)), dtype=np.int8)
        out.append((bits, perfect_trace(bits, LINK, chan, lead_out=2 * LINK.window)))
    return out


@pytest.fixture(scope="module")
def noiseless_model():
    # validation BER hits zero within a few epochs; run the full budget anyway
    model, _ = U.train_universal(noiseless_dataset(12), LINK, schedule=U.DEFAULT_SCHEDULE[:1],
                                 cfg=TrainConfig(learning_rate=1e-2, epochs=120, batch_size=4),
                                 patience=200)
    return model


def test_zero_noise_block_is_undecided():
    block = zero_mlp([11, 10, 10, 2])
    p, conf = U.noise_block_infer(np.zeros(8), block)
    assert p == pytest.approx(0.5) and conf == pytest.approx(0.5)


def test_adjacent_combination_examples():
    assert U.combine_adjacent(0.81, 0.81) == pytest.approx(0.81)
    assert U.combine_adjacent(1.0, 0.25) == pytest.approx(0.5, abs=1e-6)


@given(probs, probs)
def test_adjacent_combination_is_symmetric(a, b):
    assert U.combine_adjacent(a, b) == U.combine_adjacent(b, a)


def test_end_bits_use_their_single_estimate():
    pairs = np.array([[0.9, 0.2], [0.6, 0.7]])
    logp, cnt = U._adjacent_log(pairs, 3)
    assert cnt.tolist() == [1, 2, 1]
    assert math.exp(logp[0]) == pytest.approx(0.9)
    assert math.exp(logp[2]) == pytest.approx(0.7)
    assert math.exp(logp[1]) == pytest.approx(math.sqrt(0.2 * 0.6))


def test_merge_calibration_point_and_monotonicity():
    bit, fused = U.merge_decide(0.5, 0.5, 0.5)
    assert fused == pytest.approx(0.5) and bit == 0
    assert U.merge_decide(0.9, 0.9, 0.9)[0] == 1
    assert U.merge_decide(0.9, 0.9, 0.1)[1] < U.merge_decide(0.9, 0.9, 0.9)[1]


@given(probs, probs, probs, probs, st.floats(0, 5), st.floats(-5, 5))
def test_merge_is_monotone(a, b, c, bump, w, bias):
    lo = U.merge_decide(a, b, c, w, bias)[1]
    hi = U.merge_decide(max(a, bump), b, c, w, bias)[1]
    assert hi >= lo


@given(probs, probs, probs, st.floats(0, 5), st.floats(-5, 5))
def test_log_sum_equals_log_product(a, b, c, w, bias):
    fused = U.merge_decide(a, b, c, w, bias)[1]
    s = math.log(a) + math.log(b) + math.log(c)
    assert fused == sigmoid(np.float64(w * s + bias))


def test_merge_weight_must_be_non_negative():
    m = U.init_universal(8)
    with pytest.raises(ValueError):
        U.UniversalModel(m.noise_block, m.delay_block, m.adjacent_block, 8, merge_w=-0.1)


def test_run_lengths():
    assert U.run_lengths([1, 1, 0, 1, 1, 1, 0]).tolist() == [0, 1, 2, 0, 1, 2, 3]


def test_lookahead_is_zero_padded():
    w = np.arange(24.0).reshape(3, 8)
    ext = U.extended_features(w, PilotCalibration(0.0, 1.0))
    assert ext.shape == (3, 3 * 8 + 1)
    assert np.all(ext[2, 9:] == 0) and np.all(ext[1, 17:] == 0)
    p, _ = U.delay_block_infer(ext[2], 3, U.init_universal(8).delay_block)
    assert 0 < p < 1


def test_frozen_delay_block_is_untouched():
    init = U.init_universal(LINK.window, seed=3)
    sched = (U.TrainingSwitches(True, False, True),)
    model, _ = U.train_universal(noiseless_dataset(6), LINK, schedule=sched, model=init.copy(),
                                 cfg=TrainConfig(learning_rate=1e-2, epochs=5, batch_size=4))
    for k, v in init.delay_block.params().items():
        np.testing.assert_array_equal(model.delay_block.params()[k], v)
    assert not np.array_equal(model.noise_block.weights[0], init.noise_block.weights[0])


def test_noiseless_training_set_is_learned(noiseless_model):
    for bits, tr in noiseless_dataset(12):
        dec = U.decode(tr, LINK, noiseless_model, origin=0, refine=False)
        np.testing.assert_array_equal(dec.bits[: bits.size], bits)


def test_trained_blocks_read_clean_windows(noiseless_model):
    chan = load_preset("noiseless")
    # five idle slots let the pilot's tail die out before the last pulse
    tr = perfect_trace(PILOT + (0, 0, 0, 0, 1), LINK, chan)
    w = tr.samples.reshape(-1, LINK.window)
    cal = PilotCalibration.from_windows(w)
    p_flat, _ = U.noise_block_infer(w[8], noiseless_model.noise_block, cal, noiseless_model.eta)
    p_pulse, _ = U.noise_block_infer(w[9], noiseless_model.noise_block, cal, noiseless_model.eta)
    assert p_flat < 0.5 and p_pulse > 0.9


def test_held_out_perfect_trace_decodes(noiseless_model):
    bits = np.array(PILOT + tuple(np.random.default_rng(99).integers(0, 2, 20)), dtype=np.int8)
    tr = perfect_trace(bits, LINK, load_preset("noiseless"), lead_out=8)
    dec = U.decode(tr, LINK, noiseless_model)
    assert dec.origin == 0
    np.testing.assert_array_equal(dec.bits[5: bits.size], bits[5:])


def test_short_trace_rejected(noiseless_model):
    with pytest.raises(ChannelError):
        U.decode(Trace(np.zeros(5)), LINK, noiseless_model)


def test_window_mismatch_rejected(noiseless_model):
    with pytest.raises(ValueError):
        U.decode(Trace(np.zeros(200)), LinkConfig(2.0), noiseless_model)


def test_bundle_roundtrip(tmp_path, noiseless_model):
    path = tmp_path / "u.json"
    U.save_universal(noiseless_model, path)
    back = U.load_universal(path)
    tr = noiseless_dataset(1, seed=5)[0][1]
    np.testing.assert_array_equal(U.decode(tr, LINK, back).bits, U.decode(tr, LINK, noiseless_model).bits)
