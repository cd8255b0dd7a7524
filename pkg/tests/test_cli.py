"""CLI commands, manifests, and byte-identical replay."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from hybridgen.cli import main

runner = CliRunner()


def run_ok(args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def read_manifest(out_dir):
    return json.loads((Path(out_dir) / "manifest.json").read_text())


def test_synth_writes_outputs_and_manifest(tmp_path):
    out = tmp_path / "synth"
    run_ok(["synth", "--count", "4", "--seed", "3", "--shrink", "10",
            "--min-devices", "1", "--out", str(out)])
    assert (out / "layouts.jsonl").exists()
    assert (out / "sequences.jsonl").exists()
    manifest = read_manifest(out)
    assert manifest["command"] == "synth"
    assert manifest["seed"] == 3
    assert set(manifest["outputs"]) == {"layouts.jsonl", "sequences.jsonl"}
    assert manifest["duration_seconds"] >= 0


def test_precision_command_prints_values(tmp_path):
    out = tmp_path / "prec"
    result = run_ok(["precision", "--xmax", "200", "--dx", "1",
                     "--out", str(out)])
    assert "7.6439" in result.output
    assert "257" in result.output or "required vocabulary" in result.output
    payload = json.loads((out / "precision.json").read_text())
    assert payload["bits"] == pytest.approx(7.6439, abs=1e-4)


def test_quantize_and_eval_drc(tmp_path):
    synth_out = tmp_path / "s"
    run_ok(["synth", "--count", "3", "--seed", "1", "--out", str(synth_out)])
    q_out = tmp_path / "q"
    run_ok(["quantize", "--layouts", str(synth_out / "layouts.jsonl"),
            "--bits", "7", "--out", str(q_out)])
    assert (q_out / "quantized.jsonl").exists()

    drc_out = tmp_path / "d"
    result = run_ok(["eval-drc", "--layouts", str(synth_out / "layouts.jsonl"),
                     "--out", str(drc_out)])
    assert "clc=0.000000" in result.output
    report = json.loads((drc_out / "report.json").read_text())
    assert report["means"] == {"clc": 0.0, "pdc": 0.0, "hsc": 0.0, "vsc": 0.0}
    csv_lines = (drc_out / "report.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "sample,clc,pdc,hsc,vsc"
    assert csv_lines[-1].startswith("mean,")


def test_train_generate_complete_and_length_stats(tmp_path):
    synth_out = tmp_path / "s"
    run_ok(["synth", "--count", "6", "--seed", "2", "--shrink", "40",
            "--min-devices", "1", "--out", str(synth_out)])
    train_out = tmp_path / "t"
    run_ok(["train", "--data", str(synth_out / "sequences.jsonl"),
            "--embed-dim", "16", "--layers", "1", "--heads", "2",
            "--max-len", "32", "--diffusion-steps", "4",
            "--max-steps", "3", "--out", str(train_out)])
    ckpt = train_out / "model.ckpt"
    assert ckpt.exists()
    assert (train_out / "metrics.csv").exists()

    gen_out = tmp_path / "g"
    run_ok(["generate", "--model", str(ckpt), "--count", "3",
            "--max-len", "12", "--out", str(gen_out)])
    samples = (gen_out / "samples.jsonl").read_text().strip().splitlines()
    assert len(samples) == 3
    lengths = (gen_out / "lengths.csv").read_text().strip().splitlines()
    assert lengths[0] == "index,length,truncated,error"
    assert len(lengths) == 4

    comp_out = tmp_path / "c"
    run_ok(["complete", "--model", str(ckpt),
            "--prefixes", str(synth_out / "sequences.jsonl"),
            "--prefix-frac", "0.5", "--out", str(comp_out)])
    assert (comp_out / "samples.jsonl").exists()

    stats_out = tmp_path / "ls"
    result = run_ok(["length-stats",
                     "--generated", str(comp_out / "samples.jsonl"),
                     "--reference", str(synth_out / "sequences.jsonl"),
                     "--out", str(stats_out)])
    assert "mu=" in result.output
    payload = json.loads((stats_out / "length_stats.json").read_text())
    assert "mu" in payload and "sigma" in payload


def test_replay_reproduces_bytes(tmp_path):
    first = tmp_path / "first"
    run_ok(["synth", "--count", "4", "--seed", "9", "--shrink", "10",
            "--min-devices", "1", "--out", str(first)])
    second = tmp_path / "second"
    run_ok(["replay", str(first / "manifest.json"), "--out", str(second)])
    for name in ("layouts.jsonl", "sequences.jsonl"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert read_manifest(first)["outputs"] == read_manifest(second)["outputs"]


def test_replay_rejects_unknown_command(tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"command": "mystery", "args": {},
                                    "seed": 0}))
    result = runner.invoke(main, ["replay", str(manifest),
                                  "--out", str(tmp_path / "o")])
    assert result.exit_code != 0


def test_out_dir_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("HYBRIDGEN_OUT", str(tmp_path / "envout"))
    run_ok(["precision", "--xmax", "40000", "--dx", "1"])
    assert (tmp_path / "envout" / "precision.json").exists()


def test_usage_error_on_missing_file(tmp_path):
    result = runner.invoke(main, ["eval-drc", "--layouts",
                                  str(tmp_path / "missing.jsonl"),
                                  "--out", str(tmp_path / "o")])
    assert result.exit_code != 0
