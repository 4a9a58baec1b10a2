"""Acceptance criteria 1-11.

Each test prints one ``PASS``/``FAIL`` line with its measured numbers (run with
``-s`` to see them) and then asserts the same verdict.
"""

import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from molink import generator as G
from molink.bench import ExperimentConfig, run_campaign, separated, trial_data, trial_seed
from molink.channel import SYMBOL_INTERVALS, LinkConfig, load_preset, perfect_trace, simulate_trace
from molink.detectors import find_spikes, repair_spikes
from molink.framing import PILOT, simulated_pilot_spans, train_interval_classifier
from molink.neural import gradient_check, init_mlp, init_rnn
from molink.pipeline import DECODERS, bit_errors, train_decoder
from molink.textlink import ITA2_LETTERS, ita2_decode, ita2_encode, send_message

pytestmark = pytest.mark.acceptance


def verdict(n, title, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} [{n}] {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def campaign():
    t0 = time.perf_counter()
    table = run_campaign(ExperimentConfig(trials_per_cell=120))
    return table, time.perf_counter() - t0


def test_1_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_mlp = worst_rnn = 0.0
    for i in range(20):
        sizes = [int(rng.integers(2, 6)), int(rng.integers(2, 8)), int(rng.integers(2, 6)), int(rng.integers(1, 4))]
        act = str(rng.choice(["sigmoid", "tanh"]))
        out = "softmax" if sizes[-1] > 1 else "sigmoid"
        m = init_mlp(sizes, seed=i, hidden_activation=act, output_activation=out)
        x = rng.normal(size=(5, sizes[0]))
        if out == "softmax":
            y, loss = np.eye(sizes[-1])[rng.integers(0, sizes[-1], 5)], "ce"
        else:
            y, loss = rng.integers(0, 2, size=(5, 1)).astype(float), "bce"
        worst_mlp = max(worst_mlp, gradient_check(m, x, y, loss))
    for i in range(20):
        d_in, hid = int(rng.integers(1, 4)), int(rng.integers(2, 7))
        r = init_rnn(d_in, hid, 1, seed=100 + i)
        xs = rng.normal(size=(3, int(rng.integers(3, 8)), d_in))
        ys = rng.integers(0, 2, size=xs.shape[:2] + (1,)).astype(float)
        worst_rnn = max(worst_rnn, gradient_check(r, xs, ys, "bce"))
    secs = time.perf_counter() - t0
    ok = worst_mlp < 1e-4 and worst_rnn < 1e-4 and secs < 30
    verdict(1, "gradient correctness", ok,
            f"max rel err MLP {worst_mlp:.2e}, RNN {worst_rnn:.2e}, {secs:.1f} s")


def test_2_noiseless_oracle():
    # training streams match the test length; the preset's drift makes long streams
    # leave the feature range of short ones
    t0 = time.perf_counter()
    chan = load_preset("noiseless")
    errors = {}
    for t_s in SYMBOL_INTERVALS:
        link = LinkConfig(t_s)
        data = [trial_data(link, chan, trial_seed(2, 0, "train", i), 505) for i in range(4)]
        bits = np.array(PILOT + tuple(np.random.default_rng(1).integers(0, 2, 500)), dtype=np.int8)
        trace = perfect_trace(bits, link, chan, lead_in=7, lead_out=link.window)
        for name in DECODERS:
            dec = train_decoder(name, data, link)
            errors[name, t_s] = int(np.sum(dec.decode(trace, bits.size) != bits))
    secs = time.perf_counter() - t0
    ok = not any(errors.values()) and secs < 60
    verdict(2, "noiseless oracle", ok,
            f"{sum(errors.values())} errors over {len(errors)} decoder/t_s pairs of 505 bits, {secs:.1f} s")


def test_3_decoder_ordering(campaign):
    table, secs = campaign
    parts, ok = [], secs < 15 * 60
    for t_s in SYMBOL_INTERVALS:
        u, a, n = (table.get(d, t_s) for d in ("universal", "ann", "nst"))
        sep = separated(u, a) and separated(a, n)
        ok = ok and sep and u.bits >= 2000
        parts.append(f"{t_s:g}s U {u.ber:.3f} < ANN {a.ber:.3f} < nst {n.ber:.3f}{'' if sep else ' (overlap)'}")
    verdict(3, "decoder ordering", ok, "; ".join(parts) + f"; {secs:.0f} s")


def test_4_washing_effect(campaign):
    table, secs = campaign
    assert load_preset("paper_like").wash_gain > 0
    fast, slow = table.get("universal", 0.5), table.get("universal", 1.0)
    ok = separated(fast, slow) and secs < 10 * 60
    verdict(4, "washing effect", ok,
            f"universal BER 1 s {slow.ber:.4f} [{slow.ci_low:.4f}, {slow.ci_high:.4f}] vs "
            f"0.5 s {fast.ber:.4f} [{fast.ci_low:.4f}, {fast.ci_high:.4f}]")


def test_5_naive_band(campaign):
    table, _ = campaign
    bers = {t: table.get("nst", t).ber for t in SYMBOL_INTERVALS}
    strict = all(0.15 <= b <= 0.45 for b in bers.values())
    ok = all(0.10 <= b <= 0.50 for b in bers.values())
    verdict(5, "naive thresholding band", ok,
            ", ".join(f"{t:g}s {b:.3f}" for t, b in bers.items())
            + f" (inside 15-45%: {'yes' if strict else 'no'})")


def test_6_spike_repair():
    t0 = time.perf_counter()
    chan = load_preset("paper_like")
    quiet = replace(chan, spike_rate=0.0)
    cuts = {}
    for t_s in SYMBOL_INTERVALS:
        link = LinkConfig(t_s)
        before = after = 0.0
        for i in range(50):
            seed = trial_seed(6, 0, "eval", i)
            bits = PILOT + tuple(np.random.default_rng(seed).integers(0, 2, 95))
            spiky = simulate_trace(bits, link, chan, seed, lead_in=4)
            clean = simulate_trace(bits, link, quiet, seed, lead_in=4)
            fixed = repair_spikes(spiky, find_spikes(spiky, link))
            before += np.abs(spiky.samples - clean.samples).sum()
            after += np.abs(fixed.samples - clean.samples).sum()
        cuts[t_s] = 1.0 - after / before
    secs = time.perf_counter() - t0
    ok = min(cuts.values()) >= 0.80 and secs < 60
    verdict(6, "spike repair", ok,
            ", ".join(f"{t:g}s -{c:.1%}" for t, c in cuts.items()) + f" deviation, {secs:.1f} s")


def test_7_synchroniser():
    t0 = time.perf_counter()
    chan = load_preset("paper_like")
    clf = train_interval_classifier(*simulated_pilot_spans(chan, 3000, seed=7))
    x, y = simulated_pilot_spans(chan, 500, seed=12345)
    hit = clf.predict(x) == np.asarray(clf.classes)[y]
    per_class = {t: float(hit[y == i].mean()) for i, t in enumerate(clf.classes)}
    secs = time.perf_counter() - t0
    ok = hit.mean() >= 0.95 and secs < 5 * 60
    verdict(7, "synchroniser", ok,
            f"accuracy {hit.mean():.2%} over {y.size} held-out pilots ("
            + ", ".join(f"{t:g}s {a:.1%}" for t, a in per_class.items()) + f"), {secs:.0f} s")


def test_8_generator_laws():
    rng = np.random.default_rng(8)
    rnn = init_rnn(1, 6, 1, seed=8)
    model = G.GeneratorModel(rnn, 1.0)
    probe = np.array(PILOT + tuple(rng.integers(0, 2, 30)), dtype=np.int8)
    same = G.scale_interval(model, 1)
    identity = np.array_equal(G.generate_response(same, probe).samples,
                              G.generate_response(model, probe).samples)

    h = rng.uniform(-1, 1, size=(4, 6))
    x = rng.uniform(0, 1, size=(4, 1))
    compose_err = 0.0
    for k in (2, 3):
        want = h
        for _ in range(k):
            want = np.tanh(x @ rnn.W_xh.T + want @ rnn.W_hh.T + rnn.b_h)
        compose_err = max(compose_err, np.abs(G._step(G.scale_interval(model, k), h, x) - want).max())

    root_err = 0.0
    for m in (2, 3):
        Q = np.linalg.qr(rng.normal(size=(6, 6)))[0]
        A = Q @ np.diag(rng.uniform(0.1, 0.95, 6)) @ Q.T
        c = rng.normal(size=6)
        W, b = G.affine_root(A, c, m)
        Wc, bc = G.compose_affine(W, b, m)
        root_err = max(root_err, max(np.abs(Wc - A).max(), np.abs(bc - c).max())
                       / max(1.0, np.abs(A).max(), np.abs(c).max()))

    neg = init_rnn(1, 2, 1, seed=0)
    neg.W_hh[:] = np.diag([-0.64, -0.64])
    neg.b_h[:] = [0.1, -0.2]
    learned = G.scale_interval(G.GeneratorModel(neg, 1.0), Fraction(1, 2))
    learned_err = learned.meta.get("root_error", np.inf)

    ok = (identity and compose_err <= 1e-15 and root_err < 1e-8
          and learned.step.method == "learned" and learned_err < 1e-3)
    verdict(8, "generator laws", ok,
            f"identity exact {identity}, k=2,3 max dev {compose_err:.1e}, "
            f"root re-composition {root_err:.1e}, learned root {learned_err:.1e}")


def test_9_augmentation_utility():
    t0 = time.perf_counter()
    chan = load_preset("paper_like")
    link = LinkConfig(1.0)
    train = [trial_data(link, chan, trial_seed(0, 0, "train", i), 100) for i in range(40)]
    held = [trial_data(link, chan, trial_seed(0, 0, "eval", i), 100) for i in range(60)]
    synth = G.augment_dataset(train, 2.0, seed=0)
    n_bits = sum(b.size - len(PILOT) for b, _ in held)
    ber = {}
    for label, data in (("real", train), ("augmented", train + synth)):
        runs = []
        for seed in (0, 1, 2):
            dec = train_decoder("universal", data, link, seed=seed)
            runs.append(sum(bit_errors(b, dec.decode(t, b.size)) for b, t in held) / n_bits)
        ber[label] = float(np.mean(runs))
    gain = ber["real"] - ber["augmented"]
    ok = len(synth) == 80 and ber["augmented"] <= ber["real"] + 0.005
    verdict(9, "augmentation utility", ok,
            f"t_s 1 s, mean of 3 seeds: real {ber['real']:.2%}, augmented {ber['augmented']:.2%} "
            f"(gain {gain * 100:+.2f} pp), {time.perf_counter() - t0:.0f} s")


def test_10_htech_end_to_end():
    chan = load_preset("paper_like")
    link = LinkConfig(2.0)
    data = [trial_data(link, chan, trial_seed(0, 0, "train", i), 100) for i in range(40)]
    mean = {}
    for name in ("universal", "nst"):
        dec = train_decoder(name, data, link)
        mean[name] = float(np.mean([send_message("HTECH", link, chan, dec, seed=s).bit_errors
                                    for s in range(100)]))
    flipped = np.array(ita2_encode("E").bits[len(PILOT):])
    flipped[1] ^= 1
    e_to_a = ita2_decode(flipped) == "A"
    ok = mean["universal"] < mean["nst"] and e_to_a
    verdict(10, "HTECH end to end", ok,
            f"mean bit errors over 100 seeds at 2 s: universal {mean['universal']:.2f}, "
            f"nst {mean['nst']:.2f}; E->A flip decodes {'A' if e_to_a else 'wrong'}")


def test_11_ita2():
    roundtrip = all(ita2_decode(ita2_encode(ch).bits[len(PILOT):]) == ch for ch in ITA2_LETTERS)
    alphabet = "".join(ITA2_LETTERS)
    words = ita2_decode(ita2_encode(alphabet).bits[len(PILOT):]) == alphabet
    codes = {ch: np.array(ita2_encode(ch).bits[len(PILOT):]) for ch in ITA2_LETTERS}
    valid = {tuple(v) for v in codes.values()}
    flips = bad = 0
    for ch, code in codes.items():
        for j in range(5):
            got = code.copy()
            got[j] ^= 1
            dec = codes[ita2_decode(got)]
            dist = int(np.sum(dec != got)) if tuple(got) not in valid else int(np.sum(dec != code))
            bad += dist != 1
            flips += 1
    ok = roundtrip and words and not bad
    verdict(11, "ITA2", ok,
            f"{len(ITA2_LETTERS)} letters roundtrip {roundtrip and words}; "
            f"{flips - bad}/{flips} single flips decode one bit away")
