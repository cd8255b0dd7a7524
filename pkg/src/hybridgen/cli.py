"""Command-line entry points wiring the library into reproducible runs.

Every command resolves its arguments, runs the owning module, and
writes a ``manifest.json`` next to its outputs recording the command,
resolved configuration, seed, input/output hashes, and duration.
``replay`` reruns a manifest; primary outputs reproduce byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import drc as drc_mod
from .diffusion import uniform_stride_steps
from .generator import GenConfig, complete_batch
from .model import SequenceModel
from .precision import precision_bits, quantize_dataset, required_vocab
from .schema import layout_schema, load_sequences, save_sequences
from .synthgen import (SynthConfig, generate_layouts, layouts_to_sequences,
                       length_stats, sequences_to_layouts)
from .training import TrainConfig, parse_train_config, train

OUT_ENV = "HYBRIDGEN_OUT"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(out) -> Path:
    path = Path(out or os.environ.get(OUT_ENV, "runs"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out_dir: Path, command: str, args: dict, seed: int,
                    inputs: list[Path], outputs: list[Path],
                    started: float) -> Path:
    manifest = {
        "version": 1,
        "command": command,
        "args": {k: (str(v) if isinstance(v, Path) else v)
                 for k, v in args.items()},
        "seed": seed,
        "inputs": {str(Path(p).resolve()): _sha256(Path(p)) for p in inputs},
        "outputs": {Path(p).name: _sha256(Path(p)) for p in outputs},
        "duration_seconds": time.time() - started,
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


@click.group()
def main():
    """Hybrid discrete-continuous sequence generation toolkit."""


# ----------------------------------------------------------------------
@main.command()
@click.option("--count", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--shrink", type=float, default=1.0, show_default=True)
@click.option("--min-devices", type=int, default=20, show_default=True)
@click.option("--ordering", type=click.Choice(["layer-raster", "raster"]),
              default="layer-raster", show_default=True)
@click.option("--out", type=click.Path(), default=None)
def synth(count, seed, shrink, min_devices, ordering, out):
    """Generate rule-satisfying layouts and their unit sequences."""
    started = time.time()
    out_dir = _out_dir(out)
    cfg = SynthConfig(count=count, seed=seed, shrink=shrink,
                      min_devices=min_devices)
    layouts = generate_layouts(cfg)
    seqs = layouts_to_sequences(layouts, ordering=ordering)
    layout_path = out_dir / "layouts.jsonl"
    seq_path = out_dir / "sequences.jsonl"
    drc_mod.save_layouts(layouts, layout_path)
    save_sequences(seqs, seq_path, layout_schema())
    _write_manifest(out_dir, "synth",
                    {"count": count, "shrink": shrink,
                     "min_devices": min_devices, "ordering": ordering},
                    seed, [], [layout_path, seq_path], started)
    click.echo(f"wrote {count} layouts to {layout_path}")


# ----------------------------------------------------------------------
@main.command()
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="key = value training config file")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--embed-dim", type=int, default=64, show_default=True)
@click.option("--layers", type=int, default=4, show_default=True)
@click.option("--heads", type=int, default=4, show_default=True)
@click.option("--max-len", type=int, default=128, show_default=True)
@click.option("--diffusion-steps", type=int, default=100, show_default=True)
@click.option("--max-steps", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def train_cmd(data, config_path, seed, embed_dim, layers, heads, max_len,
              diffusion_steps, max_steps, out):
    """Train a generator on a sequence JSONL file."""
    started = time.time()
    out_dir = _out_dir(out)
    schema = layout_schema()
    seqs = load_sequences(data, schema)
    if config_path:
        cfg = parse_train_config(Path(config_path).read_text())
        if cfg.seed != seed:
            cfg = TrainConfig(**{**cfg.__dict__, "seed": seed})
    else:
        cfg = TrainConfig(seed=seed)
    from .backbone import ModelConfig
    from .diffusion import DiffusionConfig
    model = SequenceModel(schema,
                          ModelConfig(embed_dim=embed_dim, num_layers=layers,
                                      num_heads=heads, max_len=max_len),
                          DiffusionConfig(steps=diffusion_steps),
                          seed=seed)
    ckpt = out_dir / "model.ckpt"
    result = train(model, seqs, cfg, max_steps=max_steps,
                   checkpoint_path=ckpt)
    metrics = out_dir / "metrics.csv"
    result.write_csv(metrics)
    inputs = [Path(data)] + ([Path(config_path)] if config_path else [])
    _write_manifest(out_dir, "train",
                    {"data": str(Path(data).resolve()),
                     "config": str(Path(config_path).resolve()) if config_path
                     else None,
                     "embed_dim": embed_dim, "layers": layers, "heads": heads,
                     "max_len": max_len, "diffusion_steps": diffusion_steps,
                     "max_steps": max_steps},
                    seed, inputs, [ckpt, metrics], started)
    click.echo(f"trained {result.steps} steps; checkpoint at {ckpt}")


main.add_command(train_cmd, name="train")


def _write_generation(results, schema, out_dir: Path):
    seq_path = out_dir / "samples.jsonl"
    ok = [r.sequence for r in results if r.sequence is not None]
    save_sequences(ok, seq_path, schema)
    lengths_path = out_dir / "lengths.csv"
    with open(lengths_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "length", "truncated", "error"])
        for i, r in enumerate(results):
            writer.writerow([i, r.length(schema), int(r.truncated),
                             r.error or ""])
    return seq_path, lengths_path


def _gen_config(model, temperature, sampler, stride, diffusion_steps, seed,
                max_len):
    steps = None
    total = diffusion_steps or model.diffusion.steps
    if stride and stride > 1:
        steps = uniform_stride_steps(model.diffusion.steps, stride)
    elif diffusion_steps and diffusion_steps < model.diffusion.steps:
        stride_from_steps = model.diffusion.steps // diffusion_steps
        steps = uniform_stride_steps(model.diffusion.steps, stride_from_steps)
    return GenConfig(max_len=max_len or model.config.max_len,
                     temperature=temperature, sampler=sampler, steps=steps,
                     seed=seed)


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True),
              required=True)
@click.option("--count", type=int, default=16, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--temperature", type=float, default=1.0, show_default=True)
@click.option("--sampler", type=click.Choice(["ancestral", "ddim"]),
              default="ancestral", show_default=True)
@click.option("--stride", type=int, default=1, show_default=True)
@click.option("--diffusion-steps", type=int, default=None)
@click.option("--max-len", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def generate(model_path, count, seed, temperature, sampler, stride,
             diffusion_steps, max_len, out):
    """Sample sequences unconditionally from a checkpoint."""
    started = time.time()
    out_dir = _out_dir(out)
    model = SequenceModel.load(model_path)
    cfg = _gen_config(model, temperature, sampler, stride, diffusion_steps,
                      seed, max_len)
    results = complete_batch(model, [None] * count, cfg)
    seq_path, lengths_path = _write_generation(results, model.schema, out_dir)
    _write_manifest(out_dir, "generate",
                    {"model": str(Path(model_path).resolve()), "count": count,
                     "temperature": temperature, "sampler": sampler,
                     "stride": stride, "diffusion_steps": diffusion_steps,
                     "max_len": max_len},
                    seed, [Path(model_path)], [seq_path, lengths_path],
                    started)
    click.echo(f"wrote {count} samples to {seq_path}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True),
              required=True)
@click.option("--prefixes", "prefix_path", type=click.Path(exists=True),
              required=True, help="sequence JSONL to take prefixes from")
@click.option("--prefix-frac", type=float, default=0.5, show_default=True)
@click.option("--prefix-len", type=int, default=None,
              help="fixed prefix length in units (overrides --prefix-frac)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--temperature", type=float, default=1.0, show_default=True)
@click.option("--sampler", type=click.Choice(["ancestral", "ddim"]),
              default="ancestral", show_default=True)
@click.option("--stride", type=int, default=1, show_default=True)
@click.option("--diffusion-steps", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def complete(model_path, prefix_path, prefix_frac, prefix_len, seed,
             temperature, sampler, stride, diffusion_steps, out):
    """Complete sequences from prefixes of a reference file."""
    started = time.time()
    out_dir = _out_dir(out)
    model = SequenceModel.load(model_path)
    refs = load_sequences(prefix_path, model.schema)
    from .schema import UnitSequence
    prefixes = []
    for seq in refs:
        units = [u for u in seq.units if u.d != model.schema.eos_id
                 and u.d != model.schema.pad_id]
        if prefix_len is not None:
            keep = 1 + prefix_len
        else:
            keep = 1 + max(1, int((len(units) - 1) * prefix_frac))
        prefixes.append(UnitSequence.of(units[:keep]))
    cfg = _gen_config(model, temperature, sampler, stride, diffusion_steps,
                      seed, None)
    results = complete_batch(model, prefixes, cfg)
    seq_path, lengths_path = _write_generation(results, model.schema, out_dir)
    _write_manifest(out_dir, "complete",
                    {"model": str(Path(model_path).resolve()),
                     "prefixes": str(Path(prefix_path).resolve()),
                     "prefix_frac": prefix_frac, "prefix_len": prefix_len,
                     "temperature": temperature, "sampler": sampler,
                     "stride": stride, "diffusion_steps": diffusion_steps},
                    seed, [Path(model_path), Path(prefix_path)],
                    [seq_path, lengths_path], started)
    click.echo(f"wrote {len(results)} completions to {seq_path}")


# ----------------------------------------------------------------------
@main.command(name="eval-drc")
@click.option("--layouts", "layout_path", type=click.Path(exists=True),
              required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--device-threshold", type=int, default=20, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def eval_drc(layout_path, seed, device_threshold, out):
    """Run the design-rule checks over a layout JSONL file."""
    started = time.time()
    out_dir = _out_dir(out)
    layouts = drc_mod.load_layouts(layout_path)
    summary = drc_mod.evaluate(layouts, drc_mod.DrcConfig(
        device_threshold=device_threshold))
    report_json = out_dir / "report.json"
    report_csv = out_dir / "report.csv"
    drc_mod.write_report_json(summary, report_json)
    drc_mod.write_report_csv(summary, report_csv)
    _write_manifest(out_dir, "eval-drc",
                    {"layouts": str(Path(layout_path).resolve()),
                     "device_threshold": device_threshold},
                    seed, [Path(layout_path)], [report_json, report_csv],
                    started)
    means = summary.means
    click.echo("mean scores: " + " ".join(
        f"{k}={means[k]:.6f}" for k in ("clc", "pdc", "hsc", "vsc")))


@main.command(name="precision")
@click.option("--xmax", type=float, required=True)
@click.option("--dx", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def precision_cmd(xmax, dx, seed, out):
    """Print the precision bits and required vocabulary size."""
    started = time.time()
    out_dir = _out_dir(out)
    bits = precision_bits(xmax, dx)
    vocab = required_vocab(bits)
    result_path = out_dir / "precision.json"
    with open(result_path, "w") as fh:
        json.dump({"x_max": xmax, "dx": dx, "bits": bits,
                   "required_vocab": vocab}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_manifest(out_dir, "precision", {"xmax": xmax, "dx": dx}, seed,
                    [], [result_path], started)
    click.echo(f"precision: {bits:.4f} bits")
    click.echo(f"required vocabulary: {vocab}")


@main.command()
@click.option("--layouts", "layout_path", type=click.Path(exists=True),
              required=True)
@click.option("--bits", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def quantize(layout_path, bits, seed, out):
    """Snap a layout file to a reduced-precision grid."""
    started = time.time()
    out_dir = _out_dir(out)
    layouts = drc_mod.load_layouts(layout_path)
    quantized = quantize_dataset(layouts, bits)
    out_path = out_dir / "quantized.jsonl"
    drc_mod.save_layouts(quantized, out_path)
    _write_manifest(out_dir, "quantize",
                    {"layouts": str(Path(layout_path).resolve()),
                     "bits": bits},
                    seed, [Path(layout_path)], [out_path], started)
    click.echo(f"wrote quantized layouts to {out_path}")


@main.command(name="length-stats")
@click.option("--generated", type=click.Path(exists=True), required=True)
@click.option("--reference", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def length_stats_cmd(generated, reference, seed, out):
    """Gaussian fit of paired length errors between two sequence files."""
    started = time.time()
    out_dir = _out_dir(out)
    schema = layout_schema()
    gen = load_sequences(generated, schema)
    ref = load_sequences(reference, schema)
    stats = length_stats(gen, ref, schema)
    stats_path = out_dir / "length_stats.json"
    with open(stats_path, "w") as fh:
        json.dump({"mu": stats.mu, "sigma": stats.sigma}, fh,
                  sort_keys=True, indent=2)
        fh.write("\n")
    _write_manifest(out_dir, "length-stats",
                    {"generated": str(Path(generated).resolve()),
                     "reference": str(Path(reference).resolve())},
                    seed, [Path(generated), Path(reference)], [stats_path],
                    started)
    click.echo(f"mu={stats.mu:.4f} sigma={stats.sigma:.4f}")


# ----------------------------------------------------------------------
_REPLAY_FLAGS = {
    "synth": {"count": "--count", "shrink": "--shrink",
              "min_devices": "--min-devices", "ordering": "--ordering"},
    "train": {"data": "--data", "config": "--config",
              "embed_dim": "--embed-dim", "layers": "--layers",
              "heads": "--heads", "max_len": "--max-len",
              "diffusion_steps": "--diffusion-steps",
              "max_steps": "--max-steps"},
    "generate": {"model": "--model", "count": "--count",
                 "temperature": "--temperature", "sampler": "--sampler",
                 "stride": "--stride", "diffusion_steps": "--diffusion-steps",
                 "max_len": "--max-len"},
    "complete": {"model": "--model", "prefixes": "--prefixes",
                 "prefix_frac": "--prefix-frac", "prefix_len": "--prefix-len",
                 "temperature": "--temperature", "sampler": "--sampler",
                 "stride": "--stride",
                 "diffusion_steps": "--diffusion-steps"},
    "eval-drc": {"layouts": "--layouts",
                 "device_threshold": "--device-threshold"},
    "precision": {"xmax": "--xmax", "dx": "--dx"},
    "quantize": {"layouts": "--layouts", "bits": "--bits"},
    "length-stats": {"generated": "--generated", "reference": "--reference"},
}


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), required=True)
def replay(manifest, out):
    """Rerun a manifest; primary outputs reproduce byte for byte."""
    spec = json.loads(Path(manifest).read_text())
    command = spec["command"]
    if command not in _REPLAY_FLAGS:
        raise click.ClickException(f"cannot replay command {command!r}")
    argv = [command]
    for key, flag in _REPLAY_FLAGS[command].items():
        value = spec["args"].get(key)
        if value is None:
            continue
        argv.extend([flag, str(value)])
    argv.extend(["--seed", str(spec["seed"]), "--out", out])
    main.main(args=argv, standalone_mode=False)
