"""Command-line batch harness. Every command writes files; any failure exits nonzero.

Relative output paths are placed under ``$MOLINK_OUTPUT_DIR`` (default: the
current directory). ``--config`` takes a JSON object whose keys are option
names (underscored); explicit flags win over the file.
"""

import json
import logging
import os
from pathlib import Path

import click
import numpy as np

from . import bench, generator
from .channel import LinkConfig, load_preset, load_trace, save_trace, simulate_trace
from .framing import PILOT, PILOT_LEN, estimate_symbol_interval, simulated_pilot_spans, sync_samples
from .framing import IntervalClassifier, train_interval_classifier
from .pipeline import DECODERS, TrainedDecoder, bit_errors, train_decoder
from .textlink import send_message

OUTPUT_ENV = "MOLINK_OUTPUT_DIR"

logger = logging.getLogger("molink")


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (click.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except Exception as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc


def output_path(path):
    p = Path(path)
    if not p.is_absolute():
        p = Path(os.environ.get(OUTPUT_ENV, ".")) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def merged(config, **flags):
    """Config file values overridden by every flag that was actually given."""
    opts = {}
    if config:
        data = json.loads(Path(config).read_text())
        if not isinstance(data, dict):
            raise click.BadParameter("config must be a JSON object", param_hint="--config")
        opts.update({k.replace("-", "_"): v for k, v in data.items()})
    opts.update({k: v for k, v in flags.items() if v is not None and v != ()})
    return opts


def _write_json(path, obj):
    p = output_path(path)
    p.write_text(json.dumps(obj, indent=2))
    click.echo(str(p))
    return p


def _parse_bits(text):
    text = str(text).replace(",", "").replace(" ", "")
    if not text or set(text) - {"0", "1"}:
        raise click.BadParameter(f"bits must be a string of 0/1, got {text!r}", param_hint="--bits")
    return [int(c) for c in text]


def _random_message(n_bits, seed):
    rng = np.random.default_rng(seed)
    return list(PILOT) + rng.integers(0, 2, max(0, n_bits - PILOT_LEN)).tolist()


def _simulated_dataset(link, chan, n_traces, n_bits, seed):
    seeds = [bench.trial_seed(seed, 0, "train", i) for i in range(n_traces)]
    return [bench.trial_data(link, chan, s, n_bits) for s in seeds]


def _recorded_dataset(paths):
    out = []
    for path in paths:
        trace, side = load_trace(path)
        bits = trace.meta.get("bits")
        if bits is None or trace.origin_sample is None:
            raise click.UsageError(f"{path}: sidecar must record the sent bits and origin_sample")
        out.append((np.asarray(bits, dtype=np.int8), trace))
    return out


config_option = click.option("--config", type=click.Path(exists=True, dir_okay=False),
                             help="JSON file of option values.")


@click.group(cls=_Group)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.version_option(package_name="molink")
def cli(verbose):
    """Molecular-communication link simulator, decoders and BER harness."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@config_option
@click.option("--preset", help="Channel preset name or JSON path [paper_like].")
@click.option("--t-s", type=float, help="Symbol interval in seconds [1.0].")
@click.option("--t-w", type=float, help="Injection duration (default per t_s).")
@click.option("--bits", "bit_string", help="Exact bits to send, e.g. 1111010110.")
@click.option("--n-bits", type=int, help="Random pilot-led message length [100].")
@click.option("--seed", type=int, help="Noise and message seed [0].")
@click.option("--lead-in", type=int, help="Idle samples before the pilot [0].")
@click.option("--lead-out", type=int, help="Idle samples after the message [0].")
@click.option("--out", help="Trace CSV path [trace.csv].")
def simulate(config, **flags):
    """Simulate one trace and write CSV plus JSON sidecar."""
    o = merged(config, **flags)
    link = LinkConfig(float(o.get("t_s", 1.0)), o.get("t_w"))
    chan = load_preset(o.get("preset", "paper_like"))
    seed = int(o.get("seed", 0))
    bits = _parse_bits(o["bit_string"]) if o.get("bit_string") else _random_message(int(o.get("n_bits", 100)), seed)
    trace = simulate_trace(bits, link, chan, seed, int(o.get("lead_in", 0)), int(o.get("lead_out", 0)))
    path = output_path(o.get("out", "trace.csv"))
    save_trace(trace, path, link, chan, seed)
    click.echo(str(path))


@cli.command()
@config_option
@click.option("--decoder", type=click.Choice(DECODERS), help="Decoder to train [universal].")
@click.option("--t-s", type=float, help="Symbol interval in seconds [1.0].")
@click.option("--preset", help="Channel preset for simulated training data [paper_like].")
@click.option("--traces", type=int, help="Simulated training traces [40].")
@click.option("--bits-per-trace", type=int, help="Bits per simulated trace, pilot included [100].")
@click.option("--trace", "trace_files", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Recorded trace CSV to train on instead (repeatable).")
@click.option("--synthetic-factor", type=float, help="Generator-made traces per recorded trace [0].")
@click.option("--seed", type=int, help="Training seed [0].")
@click.option("--out", help="Model JSON path [<decoder>_<t_s>.json].")
def train(config, **flags):
    """Train a decoder and write it as JSON."""
    o = merged(config, **flags)
    name = o.get("decoder", "universal")
    link = LinkConfig(float(o.get("t_s", 1.0)))
    seed = int(o.get("seed", 0))
    if o.get("trace_files"):
        dataset = _recorded_dataset(o["trace_files"])
    else:
        dataset = _simulated_dataset(link, load_preset(o.get("preset", "paper_like")),
                                     int(o.get("traces", 40)), int(o.get("bits_per_trace", 100)), seed)
    factor = float(o.get("synthetic_factor", 0.0))
    if factor > 0:
        dataset = dataset + generator.augment_dataset(dataset, factor, seed=seed)
    dec = train_decoder(name, dataset, link, seed=seed)
    path = output_path(o.get("out", f"{name}_{link.t_s:g}.json"))
    dec.save(path)
    click.echo(str(path))


@cli.command()
@config_option
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", type=click.Path(exists=True, dir_okay=False), help="Decoder JSON from `train`.")
@click.option("--n-bits", type=int, help="Slots to decode (default: sidecar bits, else all windows).")
@click.option("--out", help="Decisions JSON path [decoded.json].")
def decode(config, trace_file, **flags):
    """Decode a trace CSV with a trained decoder."""
    o = merged(config, **flags)
    if not o.get("model"):
        raise click.UsageError("--model is required")
    dec = TrainedDecoder.load(o["model"])
    trace, _ = load_trace(trace_file)
    sent = trace.meta.get("bits")
    n_bits = int(o.get("n_bits") or (len(sent) if sent else len(trace) // dec.link.window))
    bits = dec.decode(trace, n_bits)
    result = {"decoder": dec.name, "t_s": dec.link.t_s, "bits": bits.tolist()}
    if sent is not None and len(sent) == n_bits:
        errors = bit_errors(sent, bits)
        result.update(payload_bit_errors=errors, payload_ber=errors / max(1, n_bits - PILOT_LEN))
    _write_json(o.get("out", "decoded.json"), result)


@cli.command()
@config_option
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--classifier", type=click.Path(exists=True, dir_okay=False),
              help="Interval classifier JSON (trained from --preset if omitted).")
@click.option("--preset", help="Preset for training a classifier [paper_like].")
@click.option("--per-class", type=int, help="Training pilots per interval [3000].")
@click.option("--seed", type=int, help="Training seed [0].")
@click.option("--save-classifier", help="Also write the trained classifier here.")
@click.option("--out", help="Estimate JSON path [sync.json].")
def sync(config, trace_file, **flags):
    """Estimate the symbol interval from the first 10 s of a trace."""
    o = merged(config, **flags)
    if o.get("classifier"):
        clf = IntervalClassifier.from_dict(json.loads(Path(o["classifier"]).read_text()))
    else:
        spans, labels = simulated_pilot_spans(load_preset(o.get("preset", "paper_like")),
                                              int(o.get("per_class", 3000)), int(o.get("seed", 0)))
        clf = train_interval_classifier(spans, labels)
        if o.get("save_classifier"):
            _write_json(o["save_classifier"], clf.to_dict())
    trace, _ = load_trace(trace_file)
    head = trace.samples[: sync_samples(trace.f_p)]
    t_s = estimate_symbol_interval(head, clf, trace.f_p)
    probs = clf.predict_proba(head).ravel().tolist()
    _write_json(o.get("out", "sync.json"),
                {"t_s": t_s, "probabilities": dict(zip(map(str, clf.classes), probs))})


@cli.command("bench")
@config_option
@click.option("--t-s", "t_s_grid", type=float, multiple=True, help="Symbol interval (repeatable).")
@click.option("--flow", "flow_pairs", type=(float, float), multiple=True, help="(v, r) pair in ml/min (repeatable).")
@click.option("--decoder", "decoders", type=click.Choice(DECODERS), multiple=True, help="Decoder (repeatable).")
@click.option("--trials", "trials_per_cell", type=int, help="Evaluation trials per cell.")
@click.option("--train-trials", type=int, help="Training trials per cell.")
@click.option("--bits-per-trial", type=int, help="Bits per trial, pilot included.")
@click.option("--preset", help="Channel preset.")
@click.option("--seed", "master_seed", type=int, help="Master seed.")
@click.option("--redraw-drift/--no-redraw-drift", default=None, help="Redraw drift per trial.")
@click.option("--out", help="Table CSV path [ber_table.csv].")
def bench_cmd(config, out, **flags):
    """Run a BER campaign and write the table CSV plus a JSON sidecar."""
    o = merged(config, **flags)
    out = o.pop("out", None) or out or "ber_table.csv"
    cfg = bench.ExperimentConfig.from_dict(o)
    table = bench.run_campaign(cfg, progress=lambda r: logger.info("%s", r))
    path = bench.export_csv(table, output_path(out))
    Path(str(path) + ".json").write_text(json.dumps(table.meta, indent=2))
    click.echo(str(path))


@cli.command("send-text")
@config_option
@click.option("--message", help="Text to send (letters and space).")
@click.option("--t-s", type=float, help="Symbol interval in seconds [2.0].")
@click.option("--decoder", type=click.Choice(DECODERS), help="Decoder [universal].")
@click.option("--model", type=click.Path(exists=True, dir_okay=False), help="Trained decoder JSON.")
@click.option("--preset", help="Channel preset [paper_like].")
@click.option("--train-traces", type=int, help="Simulated traces when training on the fly [40].")
@click.option("--seed", type=int, help="Channel seed for the transmission [0].")
@click.option("--report", help="Report JSON path [report.json].")
def send_text(config, **flags):
    """Send a message over the simulated link and write a transmission report."""
    o = merged(config, **flags)
    if not o.get("message"):
        raise click.UsageError("--message is required")
    chan = load_preset(o.get("preset", "paper_like"))
    seed = int(o.get("seed", 0))
    if o.get("model"):
        dec = TrainedDecoder.load(o["model"])
        link = LinkConfig(float(o.get("t_s", dec.link.t_s)))
    else:
        link = LinkConfig(float(o.get("t_s", 2.0)))
        data = _simulated_dataset(link, chan, int(o.get("train_traces", 40)), 100, 0)
        dec = train_decoder(o.get("decoder", "universal"), data, link)
    report = send_message(o["message"], link, chan, dec, seed=seed)
    _write_json(o.get("report", "report.json"), report.to_dict())
    click.echo(f"{report.sent_text!r} -> {report.decoded_text!r} ({report.bit_errors} payload bit errors)")


main = cli

if __name__ == "__main__":
    main()
