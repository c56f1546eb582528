import json

import numpy as np
import pytest

from patchsr.cli import main
from patchsr.imaging import load_image
from patchsr.runtime import load_trace, read_manifest


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    rc = main(["synth", "--count", "10", "--size", "24", "--seed", "7",
               "--out", str(root)])
    assert rc == 0
    return root / "manifest.csv"


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus):
    out = tmp_path_factory.mktemp("cli_train")
    rc = main([
        "train", "--manifest", str(corpus), "--out", str(out), "--quiet",
        "--patch-size", "12", "--inner-steps", "2", "--outer-steps", "2",
        "--total-episodes", "3", "--warmup-episodes", "1", "--batch", "1",
        "--backbone-channels", "8", "--head-channels", "6",
        "--checkpoint-interval", "2", "--val-interval", "2", "--val-subset", "2",
    ])
    assert rc == 0
    return out / "checkpoint.bin"


def test_synth_writes_manifest(corpus):
    entries = read_manifest(corpus)
    assert len(entries) == 10
    assert entries[0].hr_path.exists()


def test_train_writes_outputs(trained):
    assert trained.exists()
    assert (trained.parent / "metrics.csv").exists()


def test_infer_replay_roundtrip(tmp_path, corpus, trained):
    entries = read_manifest(corpus)
    args_common = [
        "--patch-size", "12", "--inner-steps", "2", "--outer-steps", "2",
        "--backbone-channels", "8", "--head-channels", "6",
    ]
    out_img = tmp_path / "restored.png"
    rc = main(["infer", "--checkpoint", str(trained),
               "--input", str(entries[0].lr_path), "--output", str(out_img),
               "--emit-trace", *args_common])
    assert rc == 0
    assert out_img.exists()
    trace_path = out_img.with_suffix(".trace")
    assert trace_path.exists()
    trace = load_trace(trace_path)
    assert trace.patch_size == 12

    replay_img = tmp_path / "replayed.png"
    rc = main(["replay", "--trace", str(trace_path),
               "--input", str(entries[0].lr_path), "--output", str(replay_img)])
    assert rc == 0
    np.testing.assert_array_equal(load_image(out_img), load_image(replay_img))


def test_eval_runs(tmp_path, corpus, trained, capsys):
    rc = main(["eval", "--checkpoint", str(trained), "--manifest", str(corpus),
               "--split", "test", "--out", str(tmp_path / "eval.csv"),
               "--patch-size", "12", "--inner-steps", "2", "--outer-steps", "2",
               "--backbone-channels", "8", "--head-channels", "6"])
    assert rc == 0
    captured = capsys.readouterr()
    assert "baseline:" in captured.out and "restored:" in captured.out
    assert (tmp_path / "eval.csv").exists()


def test_oracle_runs(corpus, capsys):
    rc = main(["oracle", "--manifest", str(corpus), "--split", "test",
               "--limit", "2", "--patch-size", "12", "--param-levels", "4"])
    assert rc == 0
    assert "mean gain" in capsys.readouterr().out


def test_gradcheck_command(capsys):
    rc = main(["gradcheck", "--entries", "4"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "worker_policy" in out and "FAIL" not in out


def test_config_file_with_flag_override(tmp_path, corpus):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"count": 3, "size": 24}))
    rc = main(["synth", "--config", str(cfg_file), "--count", "4",
               "--size", "24", "--seed", "0", "--out", str(tmp_path / "c")])
    assert rc == 0
    assert len(read_manifest(tmp_path / "c" / "manifest.csv")) == 4


def test_unknown_flag_exits_nonzero(capsys):
    rc = main(["synth", "--nope", "1"])
    assert rc != 0


def test_missing_file_reports_error(tmp_path, capsys):
    rc = main(["replay", "--trace", str(tmp_path / "missing.trace"),
               "--input", str(tmp_path / "x.png"), "--output", str(tmp_path / "y.png")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
