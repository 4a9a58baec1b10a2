"""Uniform train/decode/persist wrapper around the three bit decoders."""

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import universal
from .channel import LinkConfig
from .detectors import ann_decode, nst_decode, nst_tune, train_ann
from .framing import PILOT_LEN, NoPilotFound, detect_origin, window_matrix
from .neural import TrainConfig, model_from_dict, model_to_dict

DECODERS = ("nst", "ann", "universal")
FORMAT = "molink-decoder"

ANN_CONFIG = TrainConfig(learning_rate=5e-3, epochs=100, batch_size=64, seed=0)
UNIVERSAL_CONFIG = TrainConfig(learning_rate=1e-2, epochs=150, batch_size=8, seed=0)


def check_decoder(name):
    if name not in DECODERS:
        raise ValueError(f"unknown decoder {name!r}; expected one of {DECODERS}")
    return name


def labelled_windows(dataset, link):
    """``(windows, bits)`` per trace at the recorded origin, for the window-level decoders."""
    out = []
    for bits, trace in dataset:
        bits = np.asarray(bits, dtype=np.int8)
        w = window_matrix(trace, link, trace.origin_sample or 0)
        k = min(len(w), bits.size)
        out.append((w[:k], bits[:k]))
    return out


def _fit(decisions, n_bits):
    out = np.zeros(n_bits, dtype=np.int8)
    k = min(n_bits, len(decisions))
    out[:k] = np.asarray(decisions[:k], dtype=np.int8)
    return out


@dataclass
class TrainedDecoder:
    """A decoder ready for one symbol interval. ``params`` is the nst ``eta``, the
    ANN's :class:`MlpModel` or a :class:`universal.UniversalModel`."""

    name: str
    link: LinkConfig
    params: object

    def __post_init__(self):
        check_decoder(self.name)

    def decode(self, trace, n_bits):
        """Hard decisions for the first ``n_bits`` slots (pilot included).

        A trace without a detectable pilot, or one too short to hold it, decodes
        to all zeros so that every transmitted bit is still scored.
        """
        if self.name == "universal":
            try:
                dec = universal.decode(trace, self.link, self.params)
            except NoPilotFound:
                return np.zeros(n_bits, dtype=np.int8)
            return _fit(dec.bits, n_bits)
        try:
            origin = detect_origin(trace, self.link)
        except NoPilotFound:
            return np.zeros(n_bits, dtype=np.int8)
        w = window_matrix(trace, self.link, origin)[:n_bits]
        if len(w) < PILOT_LEN:
            return np.zeros(n_bits, dtype=np.int8)
        if self.name == "nst":
            return _fit(nst_decode(w, self.params), n_bits)
        return _fit(ann_decode(w, self.params)[0], n_bits)

    def to_dict(self):
        d = {"format": FORMAT, "version": 1, "decoder": self.name,
             "link": {"t_s": self.link.t_s, "t_w": self.link.t_w, "v": self.link.v,
                      "r": self.link.r, "f_p": self.link.f_p}}
        if self.name == "nst":
            d["eta"] = self.params
        elif self.name == "ann":
            d["model"] = model_to_dict(self.params)
        else:
            d["model"] = universal.universal_to_dict(self.params)
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT:
            raise ValueError(f"not a {FORMAT} document")
        link = LinkConfig(**d["link"])
        name = check_decoder(d["decoder"])
        if name == "nst":
            params = float(d["eta"])
        elif name == "ann":
            params = model_from_dict(d["model"])
        else:
            params = universal.universal_from_dict(d["model"])
        return cls(name, link, params)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_decoder(name, dataset, link, cfg=None, seed=0):
    """Fit decoder ``name`` on ``(bits, Trace)`` pairs recorded at ``link``."""
    check_decoder(name)
    dataset = list(dataset)
    if not dataset:
        raise ValueError("training needs at least one trace")
    if name == "universal":
        cfg = cfg or replace(UNIVERSAL_CONFIG, seed=seed)
        model, _ = universal.train_universal(dataset, link, cfg=cfg)
        return TrainedDecoder(name, link, model)
    streams = labelled_windows(dataset, link)
    if name == "nst":
        return TrainedDecoder(name, link, nst_tune(streams))
    cfg = cfg or replace(ANN_CONFIG, seed=seed)
    model, _ = train_ann(streams, cfg)
    return TrainedDecoder(name, link, model)


def bit_errors(sent, decoded, skip=PILOT_LEN):
    sent = np.asarray(sent, dtype=np.int8)
    decoded = np.asarray(decoded, dtype=np.int8)
    return int(np.sum(sent[skip:] != decoded[skip: sent.size]))


__all__ = ["DECODERS", "TrainedDecoder", "bit_errors", "check_decoder", "labelled_windows",
           "train_decoder"]
