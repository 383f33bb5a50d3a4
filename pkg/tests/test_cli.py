import csv
import json
import subprocess
import sys

import pytest

from hiss.cli import main, parse_lengths
from hiss.errors import ConfigError

from test_train import tiny_model


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def last_json(out):
    return json.loads(out.strip().splitlines()[-1])


def snapshot(d):
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def write_config(path, **over):
    raw = {
        "model": tiny_model().to_dict(),
        "train": {"epochs": 2, "batch_size": 4, "preprocess": {"resting_warmup": 25, "diffs": False}},
        "task": {"n": 10, "duration_s": [9, 10], "waypoints": [3, 4], "pause_s": [0.5, 1.0]},
        "seeds": [0],
    }
    raw.update(over)
    path.write_text(json.dumps(raw))
    return path


def test_parse_lengths():
    assert parse_lengths("256..2048") == [256, 512, 1024, 2048]
    assert parse_lengths("100,300,1000") == [100, 300, 1000]
    assert parse_lengths("256..2048", 10) == [260, 510, 1020, 2050]
    with pytest.raises(ConfigError):
        parse_lengths("10..5")
    with pytest.raises(ConfigError):
        parse_lengths("a,b")


def test_gen_is_byte_identical(tmp_path, capsys):
    args = ["gen", "--n", "4", "--duration", "9", "10", "--seed", "3"]
    c1, out, _ = run_cli(capsys, *args, "--out", str(tmp_path / "a"))
    c2, _, _ = run_cli(capsys, *args, "--out", str(tmp_path / "b"))
    assert c1 == c2 == 0
    summary = last_json(out)
    assert summary["trajectories"] == 4 and summary["train"] + summary["val"] == 4
    assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")
    assert (tmp_path / "a" / "manifest.json").exists()


def test_train_then_eval_matches(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json")
    out = tmp_path / "run"
    code, stdout, err = run_cli(capsys, "train", "--config", str(cfg), "--out", str(out))
    assert code == 0, err
    best = last_json(stdout)["seeds"]["0"]["best_val_mse"]
    for name in ("config.resolved.json", "train.log", "train_summary.json", "train_artifacts.json",
                 "seed-0/checkpoint.json", "seed-0/params.bin", "seed-0/loss_curves.csv",
                 "seed-0/loss_curves.svg"):
        assert (out / name).is_file(), name
    svg = (out / "seed-0" / "loss_curves.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    with open(out / "seed-0" / "loss_curves.csv", newline="") as fh:
        assert len(list(csv.reader(fh))) == 1 + 2

    code, stdout, err = run_cli(capsys, "eval", "--ckpt", str(out / "seed-0"), "--out", str(out))
    assert code == 0, err
    ev = last_json(stdout)
    assert ev["mse"] == best == ev["recorded_val_mse"]
    assert json.loads((out / "eval_val.json").read_text())["mse"] == best

    code, stdout, _ = run_cli(capsys, "inspect", "--ckpt", str(out / "seed-0"))
    info = last_json(stdout)
    assert code == 0 and info["stored"] == info["params"]["total"] == tiny_model().n_params()


def test_frozen_config_rerun_is_bit_identical(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json")
    assert run_cli(capsys, "--no-plots", "train", "--config", str(cfg), "--out", str(tmp_path / "a"))[0] == 0
    frozen = tmp_path / "a" / "config.resolved.json"
    assert run_cli(capsys, "--no-plots", "train", "--config", str(frozen), "--out", str(tmp_path / "b"))[0] == 0
    a, b = snapshot(tmp_path / "a"), snapshot(tmp_path / "b")
    for name in ("seed-0/params.bin", "seed-0/loss_curves.csv", "train_summary.json", "train.log",
                 "config.resolved.json"):
        assert a[name] == b[name], name


def test_inspect_counts_closed_form(tmp_path, capsys):
    model = {"kind": "flat", "stride": 10,
             "stack": {"kind": "dssm", "depth": 2, "width": 64, "d_in": 30, "d_out": 2}}
    cfg = write_config(tmp_path / "c.json", model=model)
    code, stdout, _ = run_cli(capsys, "inspect", "--config", str(cfg))
    W, n = 64, 16
    ssm = 2 * W * n + 2 * W * n + 2 * W * n + W + W  # A(re, im), B, C complex pairs, D, log_dt
    layer = ssm + (W * W + W) + 2 * W  # output projection, layer norm
    assert code == 0
    assert last_json(stdout)["params"]["total"] == (30 * W + W) + 2 * layer + (W * 2 + 2) == 23234


def test_exit_code_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"kind": "flat"}, "train": {}, "bogus": 1}))
    code, _, err = run_cli(capsys, "train", "--config", str(bad))
    assert code == 2
    assert err.startswith("error category=ConfigError exit=2 message=")
    (tmp_path / "nojson.json").write_text("{")
    assert run_cli(capsys, "inspect", "--config", str(tmp_path / "nojson.json"))[0] == 2
    assert run_cli(capsys, "bench", "--model", "gpt")[0] == 2


def test_exit_code_file_errors(tmp_path, capsys):
    code, _, err = run_cli(capsys, "eval", "--ckpt", str(tmp_path / "missing"))
    assert code == 3 and "category=IoError" in err
    code, _, err = run_cli(capsys, "inspect", "--config", str(tmp_path / "nope.json"))
    assert code == 3
    # truncated checkpoint parameters
    cfg = write_config(tmp_path / "run.json")
    assert run_cli(capsys, "--no-plots", "train", "--config", str(cfg), "--out", str(tmp_path / "r"))[0] == 0
    blob = tmp_path / "r" / "seed-0" / "params.bin"
    blob.write_bytes(blob.read_bytes()[:-8])
    code, _, err = run_cli(capsys, "eval", "--ckpt", str(tmp_path / "r" / "seed-0"))
    assert code == 3 and "category=ParseError" in err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_code_numerical(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json",
                       train={"epochs": 5, "lr": 1e5, "batch_size": 4,
                              "preprocess": {"resting_warmup": 25, "diffs": False}})
    code, _, err = run_cli(capsys, "--no-plots", "train", "--config", str(cfg), "--out", str(tmp_path / "x"))
    assert code == 4
    assert "category=DivergenceError" in err or "category=NumericalError" in err


def test_bench_writes_artifacts(tmp_path, capsys):
    code, stdout, err = run_cli(capsys, "bench", "--model", "s4", "--lengths", "32..256", "--width", "4",
                                "--out", str(tmp_path))
    assert code == 0, err
    res = last_json(stdout)
    assert res["lengths"] == [32, 64, 128, 256]
    for ext in ("csv", "json", "svg"):
        assert (tmp_path / f"scaling_s4.{ext}").is_file()
    with open(tmp_path / "scaling_s4.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["length", "median_s", "allocated_floats", "cost"] and len(rows) == 5
    assert json.loads((tmp_path / "bench_artifacts.json").read_text())["files"] == \
        ["scaling_s4.csv", "scaling_s4.json", "scaling_s4.svg"]


def test_ablate_command(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json", ablation={"fractions": [0.5, 1.0]},
                       train={"epochs": 1, "batch_size": 4, "preprocess": {"resting_warmup": 25, "diffs": False}})
    code, stdout, err = run_cli(capsys, "ablate", "--kind", "fraction", "--config", str(cfg),
                                "--out", str(tmp_path / "abl"))
    assert code == 0, err
    out = tmp_path / "abl" / "ablate-fraction"
    for ext in ("csv", "json", "svg"):
        assert (out / f"ablate_fraction.{ext}").is_file()
    assert sorted(r["fraction"] for r in last_json(stdout)["rows"]) == [0.5, 1.0]


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "hiss.cli", "inspect"], capture_output=True, text=True)
    assert res.returncode == 2
    assert res.stderr.startswith("error category=ConfigError exit=2")
