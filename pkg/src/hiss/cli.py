"""Command-line entry point: ``hiss {gen,train,eval,bench,ablate,inspect}``.

Every command prints a JSON summary line on success. Failures print one
line ``error category=<Name> exit=<code> message=<text>`` to stderr and
exit nonzero (2 config, 3 files, 4 numerics).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import RunConfig
from .data import KINDS as TASK_KINDS
from .data import TaskSpec, load, make_dataset, store
from .errors import ConfigError, HissError, IoError
from .evalbench import (ABLATIONS, BENCH_MODELS, describe, evaluate, quadratic_reduction,
                        run_ablation, scaling_bench)
from .layers import parameter_count
from .train import Checkpoint, fit, write_curves


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def _artifact_manifest(out: Path, command: str, files: list[Path]) -> None:
    _write_json(out / f"{command}_artifacts.json",
                {"command": command, "files": sorted(str(Path(f).relative_to(out)) for f in files)})


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def parse_lengths(text: str, multiple: int = 1) -> list[int]:
    """``"256..16384"`` doubles from 256 up to 16384; ``"a,b,c"`` is taken as is."""
    if ".." in text:
        lo, hi = (int(v) for v in text.split("..", 1))
        if lo < 1 or hi <= lo:
            raise ConfigError(f"bad length range '{text}'")
        out, n = [], lo
        while n <= hi:
            out.append(n)
            n *= 2
    else:
        try:
            out = [int(v) for v in text.split(",") if v]
        except ValueError:
            raise ConfigError(f"bad length list '{text}'") from None
    if multiple > 1:
        out = [max(multiple, multiple * round(n / multiple)) for n in out]
    return out


# --- commands --------------------------------------------------------------------------------

def cmd_gen(args) -> dict:
    spec = TaskSpec(kind=args.task, n=args.n, seed=args.seed,
                    duration_s=tuple(args.duration) if args.duration else TaskSpec.duration_s,
                    mixing=args.mixing,
                    noise=TaskSpec.noise if args.noise is None else args.noise,
                    drift=TaskSpec.drift if args.drift is None else args.drift,
                    vibration=TaskSpec.vibration if args.vibration is None else args.vibration)
    out = Path(args.out)
    manifest = make_dataset(spec, out, args.train_fraction)
    return {"command": "gen", "out": str(out), "trajectories": len(manifest.files),
            "train": len(manifest.ids_in("train")), "val": len(manifest.ids_in("val"))}


def _materialize_data(run: RunConfig, out: Path) -> tuple[str, list, list]:
    """Training data as stored files; generated tasks are written under ``out/data``."""
    if run.data_dir is not None:
        train, val = run.dataset()
        return str(Path(run.data_dir).resolve()), train, val
    train, val = run.dataset()
    assignment = {t.id: "train" for t in train}
    assignment.update({t.id: "val" for t in val})
    data_dir = out / "data"
    store(train + val, data_dir, run.task, assignment)
    return str(data_dir.resolve()), train, val


def cmd_train(args) -> dict:
    run = RunConfig.load(args.config)
    out = Path(args.out or run.out)
    out.mkdir(parents=True, exist_ok=True)
    files = [_write_json(out / "config.resolved.json", run.to_dict())]
    data_dir, train, val = _materialize_data(run, out)
    results = {}
    log_lines = []
    for seed in run.seeds:
        cfg = run.with_train(seed=seed).train
        res = fit(run.model, train, val, cfg, log=log_lines.append)
        res.checkpoint.data_dir = data_dir
        ck_dir = out / f"seed-{seed}"
        res.checkpoint.save(ck_dir)
        files += [ck_dir / "checkpoint.json", ck_dir / "params.bin", ck_dir / "loss_curves.csv"]
        if not args.no_plots:
            from .plotting import plot_loss_curves
            files.append(plot_loss_curves(res.history, ck_dir / "loss_curves.svg",
                                          f"{describe(run.model)} seed {seed}"))
        results[str(seed)] = {"best_epoch": res.checkpoint.epoch, "best_val_mse": res.checkpoint.best_val,
                              "baseline_mse": res.baseline_mse, "steps": res.steps}
    (out / "train.log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    files += [out / "train.log", _write_json(out / "train_summary.json", results)]
    _artifact_manifest(out, "train", files)
    return {"command": "train", "out": str(out), "model": describe(run.model), "seeds": results}


def cmd_eval(args) -> dict:
    ckpt = Checkpoint.load(args.ckpt)
    if args.split not in ckpt.split:
        raise ConfigError(f"checkpoint has no '{args.split}' split")
    if ckpt.data_dir is None:
        raise IoError("checkpoint does not record its data directory")
    _, trajs = load(ckpt.data_dir, ckpt.split[args.split])
    mse = evaluate(ckpt, trajs)
    out = {"command": "eval", "split": args.split, "mse": mse, "epoch": ckpt.epoch,
           "recorded_val_mse": ckpt.history[ckpt.epoch - 1]["val_mse"], "model": describe(ckpt.model)}
    if args.out:
        _write_json(Path(args.out) / f"eval_{args.split}.json", out)
    return out


def cmd_bench(args) -> dict:
    if args.model not in BENCH_MODELS:
        raise ConfigError(f"unknown benchmark model '{args.model}' (expected one of {BENCH_MODELS})")
    lengths = parse_lengths(args.lengths, args.k if args.model.startswith("hiss") else 1)
    report = scaling_bench(args.model, lengths, reps=args.reps, width=args.width, k=args.k)
    result = {"command": "bench", **report.to_dict()}
    if args.quadratic:
        result["quadratic_reduction"] = quadratic_reduction(args.quadratic, args.k, args.reps, args.width)
    if args.out:
        out = Path(args.out)
        files = [_write_json(out / f"scaling_{args.model}.json", result)]
        csv_path = out / f"scaling_{args.model}.csv"
        rows = ["length,median_s,allocated_floats,cost"] + [
            f"{n},{t!r},{m},{c!r}" for n, t, m, c in zip(report.lengths, report.medians, report.memory,
                                                       report.cost)]
        csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        files.append(csv_path)
        if not args.no_plots:
            from .plotting import plot_scaling
            files.append(plot_scaling([report], out / f"scaling_{args.model}.svg"))
        _artifact_manifest(out, "bench", files)
    return result


def cmd_ablate(args) -> dict:
    run = RunConfig.load(args.config)
    out = Path(args.out or run.out) / f"ablate-{args.kind}"
    summary = run_ablation(run, args.kind, out, log=None)
    files = [out / f"ablate_{args.kind}.csv", out / f"ablate_{args.kind}.json"]
    if not args.no_plots:
        from .plotting import plot_ablation
        files.append(plot_ablation(summary, out / f"ablate_{args.kind}.svg"))
    files.append(_write_json(out / "config.resolved.json", run.to_dict()))
    _artifact_manifest(out, "ablate", files)
    return {"command": "ablate", "kind": args.kind, "out": str(out), **summary}


def _count(model) -> dict:
    if model.kind == "flat":
        return {"total": model.n_params(), "stack": parameter_count(model.stack)}
    return {"total": model.n_params(), "low": 0 if model.low is None else parameter_count(model.low),
            "high": parameter_count(model.high)}


def cmd_inspect(args) -> dict:
    if bool(args.ckpt) == bool(args.config):
        raise ConfigError("inspect needs exactly one of --ckpt or --config")
    if args.ckpt:
        ckpt = Checkpoint.load(args.ckpt)
        model = ckpt.model
        stored = sum(int(v.size) for v in ckpt.params.values())
        extra = {"stored": stored, "epoch": ckpt.epoch, "best_val_mse": ckpt.best_val}
    else:
        model = RunConfig.load(args.config).model
        extra = {}
    counts = _count(model)
    return {"command": "inspect", "model": describe(model), "params": counts,
            "millions": counts["total"] / 1e6, **extra}


# --- wiring ----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hiss", description=__doc__.splitlines()[0])
    p.add_argument("--no-plots", action="store_true", help="skip SVG rendering")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--task", choices=TASK_KINDS, default="drift-integrator")
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--duration", type=int, nargs=2, metavar=("MIN_S", "MAX_S"))
    g.add_argument("--mixing", choices=("random", "identity"), default="random")
    g.add_argument("--noise", type=float)
    g.add_argument("--drift", type=float)
    g.add_argument("--vibration", type=float)
    g.add_argument("--train-fraction", type=float, default=0.8)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train from a run config")
    t.add_argument("--config", required=True)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--split", choices=("train", "val"), default="val")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="forward-pass scaling benchmark")
    b.add_argument("--model", required=True, help=f"one of {', '.join(BENCH_MODELS)}")
    b.add_argument("--lengths", default="256..16384")
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--width", type=int, default=16)
    b.add_argument("--k", type=int, default=10)
    b.add_argument("--quadratic", type=int, default=0, metavar="N",
                   help="also measure the attention quadratic-term reduction at length N")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("ablate", help="chunk-size, filter, or data-fraction sweep")
    a.add_argument("--kind", choices=ABLATIONS, required=True)
    a.add_argument("--config", required=True)
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)

    i = sub.add_parser("inspect", help="parameter counts of a checkpoint or config")
    i.add_argument("--ckpt")
    i.add_argument("--config")
    i.set_defaults(func=cmd_inspect)
    return p


def _threads():
    raw = os.environ.get("HISS_SEQ_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HISS_SEQ_THREADS must be an integer, got '{raw}'") from None
    if n < 1:
        raise ConfigError("HISS_SEQ_THREADS must be >= 1")
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _threads():
            result = args.func(args)
    except HissError as exc:
        err = exc
    except FileNotFoundError as exc:
        err = IoError(f"file not found: {exc.filename}")
    except OSError as exc:
        err = IoError(str(exc))
    else:
        _emit(result)
        return 0
    message = " ".join(str(err).split())
    print(f"error category={err.category} exit={err.exit_code} message={message}", file=sys.stderr)
    return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
