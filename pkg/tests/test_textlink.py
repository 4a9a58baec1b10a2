import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from molink.channel import LinkConfig, load_preset
from molink.framing import PILOT, PILOT_LEN, BitSequence
from molink.pipeline import TrainedDecoder
from molink.textlink import (
    CODEBOOK, ITA2_LETTERS, Ita2Codebook, Ita2Error, build_report, ita2_decode, ita2_encode, send_message,
)

# Letters-case teleprinter table indexed by the 5-bit code read as an integer,
# bit 1 being the least significant (layout of the classic baudot tables).
_LTRS_BY_INDEX = [
    None, "E", None, "A", " ", "S", "I", "U", None, "D", "R", "J", "N", "F", "C", "K",
    "T", "Z", "L", "W", "H", "Y", "P", "Q", "O", "B", "G", None, "M", "X", "V", None,
]
ORACLE = {ch: "".join(str((i >> j) & 1) for j in range(5)) for i, ch in enumerate(_LTRS_BY_INDEX) if ch}

texts = st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ abcxyz", max_size=30)


def hamming(a, b):
    return sum(x != y for x, y in zip(a, b))


def as_str(bits):
    return "".join(map(str, bits))


def test_codebook_matches_published_table():
    assert ITA2_LETTERS == ORACLE
    assert len(CODEBOOK.letters) == 27


def test_encode_examples():
    assert ita2_encode("E").payload == (1, 0, 0, 0, 0)
    assert ita2_encode("").bits == PILOT
    assert len(ita2_encode("HTECH").payload) == 25


def test_unsupported_character_reports_position():
    with pytest.raises(Ita2Error, match="position 2"):
        ita2_encode("AB7")


def test_htech_roundtrip():
    assert ita2_decode(ita2_encode("HTECH")) == "HTECH"


def test_e_to_a_single_flip():
    e = list(ita2_encode("E").payload)
    assert hamming(ORACLE["E"], ORACLE["A"]) == 1
    e[1] ^= 1
    assert as_str(e) == "11000"
    assert ita2_decode(e) == "A"


def test_partial_group_rejected():
    with pytest.raises(Ita2Error):
        ita2_decode([1, 0, 1])


def test_exhaustive_roundtrip():
    for ch in ITA2_LETTERS:
        assert ita2_decode(ita2_encode(ch)) == ch
    alphabet = "".join(ITA2_LETTERS)
    assert ita2_decode(ita2_encode(alphabet)) == alphabet


@given(texts)
def test_roundtrip_property(text):
    assert ita2_decode(ita2_encode(text)) == text.upper()


def test_every_single_flip_lands_one_bit_away():
    codes = set(ITA2_LETTERS.values())
    for ch, code in ITA2_LETTERS.items():
        for j in range(5):
            got = [int(c) for c in code]
            got[j] ^= 1
            letter = ita2_decode(got)
            if as_str(got) in codes:
                assert ITA2_LETTERS[letter] == as_str(got)
            else:
                assert hamming(ITA2_LETTERS[letter], as_str(got)) == 1


def test_nearest_ties_follow_codebook_order():
    # 00000 is one flip from E, space and T; E comes first
    assert CODEBOOK.nearest((0, 0, 0, 0, 0)) == "E"


def test_codebook_must_be_bijective():
    with pytest.raises(Ita2Error):
        Ita2Codebook(("A", "B"), ((1, 1, 0, 0, 0), (1, 1, 0, 0, 0)))
    with pytest.raises(Ita2Error):
        Ita2Codebook(("A",), ((1, 1, 0),))


def test_report_arithmetic():
    seq = ita2_encode("HTECH")
    got = np.array(seq.bits)
    got[PILOT_LEN + 1] ^= 1
    rep = build_report("HTECH", seq.bits, got)
    assert rep.bit_errors == 1 and rep.payload_bits == 25
    assert rep.accuracy == pytest.approx(0.96)
    assert rep.accuracy_with_pilot == pytest.approx(29 / 30)
    assert rep.letter_errors <= len("HTECH")
    assert rep.per_letter[0]["flipped_bits"] == [1]


@given(texts.filter(bool), st.integers(0, 10 ** 6))
def test_report_counts_hamming_distance(text, seed):
    seq = ita2_encode(text)
    rng = np.random.default_rng(seed)
    got = np.array(seq.bits) ^ (rng.random(len(seq)) < 0.2)
    rep = build_report(text, seq.bits, got)
    assert rep.bit_errors == hamming(seq.payload, got[PILOT_LEN:])
    assert rep.ber == rep.bit_errors / (5 * len(text))
    assert 0 <= rep.letter_errors <= len(text)


def test_bit_sequence_decodes_directly():
    assert ita2_decode(BitSequence.with_pilot(ita2_encode("HI").payload)) == "HI"


@pytest.mark.parametrize("t_s", [0.5, 2.0])
def test_noiseless_send_is_error_free(t_s):
    link = LinkConfig(t_s)
    chan = load_preset("noiseless")
    rep = send_message("HTECH", link, chan, TrainedDecoder("nst", link, 0.5), seed=1)
    assert rep.decoded_text == "HTECH" and rep.bit_errors == 0 and rep.accuracy == 1.0
    assert rep.to_dict()["ber"] == 0.0


def test_send_rejects_mismatched_decoder():
    with pytest.raises(ValueError):
        send_message("E", LinkConfig(1.0), load_preset("noiseless"), TrainedDecoder("nst", LinkConfig(2.0), 0.5))
