"""ITA2 (letters case) text codec and end-to-end text transmission over the link."""

from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import ChannelError, simulate_trace
from .framing import PILOT_LEN, BitSequence

CODE_BITS = 5

# ITA2 letters case, bits written 1..5 in transmission order
ITA2_LETTERS = {
    "A": "11000", "B": "10011", "C": "01110", "D": "10010", "E": "10000",
    "F": "10110", "G": "01011", "H": "00101", "I": "01100", "J": "11010",
    "K": "11110", "L": "01001", "M": "00111", "N": "00110", "O": "00011",
    "P": "01101", "Q": "11101", "R": "01010", "S": "10100", "T": "00001",
    "U": "11100", "V": "01111", "W": "11001", "X": "10111", "Y": "10101",
    "Z": "10001", " ": "00100",
}

LEAD_IN_SLOTS = 1
LEAD_OUT_SLOTS = 2


class Ita2Error(ValueError):
    pass


@dataclass(frozen=True)
class Ita2Codebook:
    letters: tuple = tuple(ITA2_LETTERS)
    codes: tuple = tuple(tuple(int(c) for c in v) for v in ITA2_LETTERS.values())

    def __post_init__(self):
        if len(set(self.codes)) != len(self.codes) or len(self.letters) != len(self.codes):
            raise Ita2Error("codebook must be a bijection")
        if any(len(c) != CODE_BITS for c in self.codes):
            raise Ita2Error("every code must have 5 bits")

    def code(self, ch):
        try:
            return self.codes[self.letters.index(ch)]
        except ValueError:
            raise Ita2Error(f"unsupported character {ch!r}") from None

    def nearest(self, group):
        """Exact match if present, else the first codeword at minimum Hamming distance."""
        group = tuple(int(b) for b in group)
        dist = [sum(a != b for a, b in zip(group, c)) for c in self.codes]
        return self.letters[int(np.argmin(dist))]


CODEBOOK = Ita2Codebook()


def normalize_text(text):
    return text.upper()


def ita2_encode(text, codebook=CODEBOOK):
    """Pilot followed by five bits per character (letters case only; lower case is folded)."""
    bits = []
    for pos, ch in enumerate(normalize_text(text)):
        if ch not in codebook.letters:
            raise Ita2Error(f"unsupported character {ch!r} at position {pos}")
        bits.extend(codebook.code(ch))
    return BitSequence.with_pilot(bits)


def ita2_decode(bits, codebook=CODEBOOK):
    """Text from a pilot-led :class:`BitSequence` or a bare payload sequence."""
    payload = bits.payload if isinstance(bits, BitSequence) else tuple(int(b) for b in bits)
    if len(payload) % CODE_BITS:
        raise Ita2Error(f"payload of {len(payload)} bits is not a whole number of 5-bit codes")
    return "".join(codebook.nearest(payload[i: i + CODE_BITS]) for i in range(0, len(payload), CODE_BITS))


@dataclass
class TransmissionReport:
    sent_text: str
    decoded_text: str
    bit_errors: int
    letter_errors: int
    payload_bits: int
    pilot_bit_errors: int = 0
    t_s: float | None = None
    decoder: str | None = None
    seed: int | None = None
    per_letter: list = field(default_factory=list)

    @property
    def ber(self):
        """Bit errors over payload bits (0 for an empty message)."""
        return self.bit_errors / self.payload_bits if self.payload_bits else 0.0

    @property
    def accuracy(self):
        return 1.0 - self.ber

    @property
    def ber_with_pilot(self):
        """Bit errors over pilot plus payload bits."""
        total = self.payload_bits + PILOT_LEN
        return (self.bit_errors + self.pilot_bit_errors) / total

    @property
    def accuracy_with_pilot(self):
        return 1.0 - self.ber_with_pilot

    def to_dict(self):
        d = asdict(self)
        d.update(ber=self.ber, accuracy=self.accuracy, ber_with_pilot=self.ber_with_pilot,
                 accuracy_with_pilot=self.accuracy_with_pilot)
        return d


def build_report(text, sent_bits, decoded_bits, **info):
    sent = np.asarray(sent_bits, dtype=np.int8)
    got = np.asarray(decoded_bits, dtype=np.int8)
    if got.size != sent.size:
        raise ChannelError(f"decoded {got.size} bits for {sent.size} sent")
    decoded_text = ita2_decode(got[PILOT_LEN:])
    text = normalize_text(text)
    per_letter = []
    for i, ch in enumerate(text):
        s = slice(PILOT_LEN + CODE_BITS * i, PILOT_LEN + CODE_BITS * (i + 1))
        flips = [int(j) for j in np.flatnonzero(sent[s] != got[s])]
        per_letter.append({"sent": ch, "decoded": decoded_text[i], "bit_errors": len(flips),
                           "flipped_bits": flips,
                           "bits": "".join(map(str, got[s].tolist()))})
    return TransmissionReport(
        sent_text=text, decoded_text=decoded_text,
        bit_errors=int(np.sum(sent[PILOT_LEN:] != got[PILOT_LEN:])),
        letter_errors=sum(a != b for a, b in zip(text, decoded_text)),
        payload_bits=sent.size - PILOT_LEN,
        pilot_bit_errors=int(np.sum(sent[:PILOT_LEN] != got[:PILOT_LEN])),
        per_letter=per_letter, **info)


def send_message(text, link, chan, decoder, seed=0):
    """Encode, simulate, decode and score one message.

    ``decoder`` is a :class:`molink.pipeline.TrainedDecoder` trained for ``link``.
    """
    if decoder.link.window != link.window:
        raise ValueError(f"decoder was trained for t_s = {decoder.link.t_s}, link has {link.t_s}")
    seq = ita2_encode(text)
    n = link.window
    trace = simulate_trace(seq.bits, link, chan, seed, lead_in=LEAD_IN_SLOTS * n,
                           lead_out=LEAD_OUT_SLOTS * n)
    decoded = decoder.decode(trace, len(seq))
    return build_report(text, seq.bits, decoded, t_s=link.t_s, decoder=decoder.name, seed=seed)


__all__ = ["CODEBOOK", "ITA2_LETTERS", "Ita2Codebook", "Ita2Error", "TransmissionReport",
           "build_report", "ita2_decode", "ita2_encode", "send_message"]
