"""Self-describing JSON weight files.

Layout::

    {"format": "molink-weights", "version": 1, "kind": "mlp" | "rnn",
     "activations": {...}, "seed": int | null, "meta": {...},
     "tensors": {name: {"shape": [...], "data": [... row-major ...]}}}
"""

import json
from pathlib import Path

import numpy as np

from .mlp import MlpModel
from .rnn import RnnModel

FORMAT = "molink-weights"
VERSION = 1


def _tensor(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _array(t):
    return np.asarray(t["data"], dtype=float).reshape(t["shape"])


def model_to_dict(model):
    if isinstance(model, MlpModel):
        tensors = {k: _tensor(v) for k, v in model.params().items()}
        return {"format": FORMAT, "version": VERSION, "kind": "mlp",
                "sizes": model.sizes,
                "activations": {"hidden": model.hidden_activation, "output": model.output_activation},
                "seed": model.seed, "meta": model.meta, "tensors": tensors}
    if isinstance(model, RnnModel):
        tensors = {k: _tensor(v) for k, v in model.params().items()}
        tensors["h0"] = _tensor(model.h0)
        return {"format": FORMAT, "version": VERSION, "kind": "rnn",
                "sizes": [model.input_size, model.hidden_size, model.output_size],
                "activations": {"hidden": model.hidden_activation, "output": model.output_activation},
                "seed": model.seed, "meta": model.meta, "tensors": tensors}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d):
    if d.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} document")
    t = d["tensors"]
    acts = d["activations"]
    if d["kind"] == "mlp":
        n_layers = len(d["sizes"]) - 1
        return MlpModel([_array(t[f"W{i}"]) for i in range(n_layers)],
                        [_array(t[f"b{i}"]) for i in range(n_layers)],
                        acts["hidden"], acts["output"], d.get("seed"), dict(d.get("meta") or {}))
    if d["kind"] == "rnn":
        return RnnModel(_array(t["W_xh"]), _array(t["W_hh"]), _array(t["W_hy"]),
                        _array(t["b_h"]), _array(t["b_y"]), acts["hidden"], acts["output"],
                        _array(t["h0"]), d.get("seed"), dict(d.get("meta") or {}))
    raise ValueError(f"unknown model kind {d['kind']!r}")


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
