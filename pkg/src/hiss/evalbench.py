"""Metrics, scaling benchmarks, and ablation runners."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats as sstats
from threadpoolctl import threadpool_limits

from .config import RunConfig
from .data import Trajectory
from .errors import ConfigError
from .hierarchy import ChunkPlan, HissSpec, ModelSpec, cost_model, hiss_forward
from .layers import LayerStackSpec, init_stack, stack_forward
from .ndgrad import allocated_floats, no_grad, reset_allocated_floats
from .train import Checkpoint, constant_mean_mse, fit, prepare, split_mse

# --- evaluation ------------------------------------------------------------------------------


def aggregate(values) -> tuple[float, float]:
    """Mean and population standard deviation."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("nothing to aggregate")
    return float(v.mean()), float(v.std())


@dataclass
class EvalReport:
    task: str
    model: str
    per_seed: dict  # seed -> val MSE
    baseline_mse: float | None = None  # constant-mean predictor

    @property
    def mean(self) -> float:
        return aggregate(list(self.per_seed.values()))[0]

    @property
    def std(self) -> float:
        return aggregate(list(self.per_seed.values()))[1]

    def to_dict(self) -> dict:
        return {"task": self.task, "model": self.model, "per_seed": self.per_seed,
                "mean": self.mean, "std": self.std, "baseline_mse": self.baseline_mse}


def evaluate(ckpt: Checkpoint, trajs: list[Trajectory]) -> float:
    """Deterministic MSE of a checkpoint over trajectories, in normalized label units."""
    data = prepare(trajs, ckpt.config.preprocess, ckpt.norms)
    return split_mse(ckpt.model, ckpt.tensors(), data)


def evaluate_seeds(ckpts: list[Checkpoint], trajs: list[Trajectory], task: str = "") -> EvalReport:
    per_seed = {c.config.seed: evaluate(c, trajs) for c in ckpts}
    baseline = constant_mean_mse(prepare(trajs, ckpts[0].config.preprocess, ckpts[0].norms))
    return EvalReport(task, describe(ckpts[0].model), per_seed, baseline)


def describe(model: ModelSpec) -> str:
    if model.kind == "flat":
        return f"flat-{model.stack.kind}"
    low = "none" if model.low is None else model.low.kind
    return f"hiss-{low}-{model.high.kind}-k{model.k}"


# --- scaling ---------------------------------------------------------------------------------

BENCH_MODELS = ("s4", "mamba", "lstm", "attn", "hiss-ssm", "hiss-attn")
# predicted log-log slope from the cost model's leading order
PREDICTED_SLOPE = {"s4": 1.0, "mamba": 1.0, "lstm": 1.0, "attn": 2.0, "hiss-ssm": 1.0, "hiss-attn": 2.0}
COST_MODE = {"s4": "flat-ssm", "mamba": "flat-ssm", "lstm": "flat-ssm", "attn": "flat-attn",
             "hiss-ssm": "hiss-ssm", "hiss-attn": "hiss-attn-over-ssm"}


@dataclass
class ScalingReport:
    model: str
    lengths: list[int]
    medians: list[float]  # seconds per forward pass
    reps: int
    slope: float
    ci: tuple[float, float]  # 95% interval of the fitted slope
    memory: list[int]  # allocated floats per forward pass
    predicted_slope: float
    cost: list[float] = field(default_factory=list)  # cost_model operation counts

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = list(self.ci)
        return d


def fit_slope(lengths, times) -> tuple[float, tuple[float, float]]:
    """Least-squares slope of log(time) against log(length) with a 95% t interval."""
    x, y = np.log(np.asarray(lengths, float)), np.log(np.asarray(times, float))
    res = sstats.linregress(x, y)
    if len(x) < 3:
        return float(res.slope), (float(res.slope), float(res.slope))
    half = sstats.t.ppf(0.975, len(x) - 2) * res.stderr
    return float(res.slope), (float(res.slope - half), float(res.slope + half))


def bench_forward(model: str, width: int = 16, k: int = 10, d_in: int = 4,
                  seed: int = 0) -> Callable[[np.ndarray], object]:
    """A no-grad forward callable ``x (1, N, d_in) -> y`` for one benchmark model."""
    rng = np.random.default_rng(seed)
    if model in ("s4", "mamba", "lstm", "attn"):
        kind, mode = {"s4": ("dssm", "recurrent"), "mamba": ("selective", "scan"),
                      "lstm": ("lstm", None), "attn": ("attention", None)}[model]
        spec = LayerStackSpec(kind, 1, width, d_in, width, mode=mode)
        params = init_stack(spec, rng)
        return lambda x: stack_forward(spec, params, x)
    if model in ("hiss-ssm", "hiss-attn"):
        low = LayerStackSpec("dssm", 1, width, d_in, width, mode="recurrent")
        high_kind = "dssm" if model == "hiss-ssm" else "attention"
        high = LayerStackSpec(high_kind, 1, width, width, width,
                              mode="recurrent" if high_kind == "dssm" else None)
        spec = HissSpec(low, high, ChunkPlan(k, k))
        params = init_stack(low, rng, prefix="low.")
        params.update(init_stack(high, rng, prefix="high."))
        return lambda x: hiss_forward(spec, params, x)
    raise ConfigError(f"unknown benchmark model '{model}' (expected one of {BENCH_MODELS})")


def time_forward(fn, x, reps: int = 5, warmup: int = 1) -> tuple[float, np.ndarray]:
    with no_grad():
        for _ in range(warmup):
            fn(x)
        samples = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fn(x)
            samples.append(time.perf_counter() - t0)
    return float(np.median(samples)), np.asarray(samples)


def _interleaved(fn, inputs, reps: int) -> list[np.ndarray]:
    """Time every input once per round so slow drifts in machine load hit all lengths alike."""
    with no_grad():
        for x in inputs:
            fn(x)
        out = [[] for _ in inputs]
        for _ in range(reps):
            for j, x in enumerate(inputs):
                t0 = time.perf_counter()
                fn(x)
                out[j].append(time.perf_counter() - t0)
    return [np.asarray(o) for o in out]


def _spread(samples: np.ndarray) -> float:
    q1, q3 = np.percentile(samples, [25, 75])
    return float((q3 - q1) / np.median(samples))


def measure_memory(fn, x) -> int:
    with no_grad():
        reset_allocated_floats()
        fn(x)
        return allocated_floats()


def scaling_bench(model: str, lengths, reps: int = 5, width: int = 16, k: int = 10,
                  max_spread: float = 0.25, max_retries: int = 2, seed: int = 0) -> ScalingReport:
    """Median forward wall clock per length, fitted log-log slope, memory proxy.

    Runs pinned to one BLAS thread, with lengths timed round-robin after a
    discarded warmup pass. If any length's interquartile spread exceeds
    ``max_spread`` of its median, another ``reps`` rounds are added.
    """
    lengths = [int(n) for n in lengths]
    if len(lengths) < 4 or any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ConfigError("need >= 4 strictly increasing lengths")
    if lengths[-1] < 8 * lengths[0]:
        raise ConfigError("lengths must span at least an 8x ratio")
    if reps < 5:
        raise ConfigError("need >= 5 repetitions per length")
    if model.startswith("hiss") and any(n % k for n in lengths):
        raise ConfigError(f"HiSS benchmark lengths must be multiples of k={k}")
    fn = bench_forward(model, width=width, k=k, seed=seed)
    rng = np.random.default_rng(seed + 1)
    inputs = [rng.normal(size=(1, n, 4)) for n in lengths]
    with threadpool_limits(limits=1):
        samples = _interleaved(fn, inputs, reps)
        for _ in range(max_retries):
            if max(_spread(s) for s in samples) <= max_spread:
                break
            extra = _interleaved(fn, inputs, reps)
            samples = [np.concatenate([a, b]) for a, b in zip(samples, extra)]
        memory = [measure_memory(fn, x) for x in inputs]
    medians = [float(np.median(s)) for s in samples]
    reps = len(samples[0])
    slope, ci = fit_slope(lengths, medians)
    mode = COST_MODE[model]
    cost = [cost_model(n, k if model.startswith("hiss") else 1, mode) for n in lengths]
    return ScalingReport(model, lengths, medians, reps, slope, ci, memory, PREDICTED_SLOPE[model], cost)


def quadratic_reduction(n: int = 8192, k: int = 10, reps: int = 5, width: int = 16,
                        seed: int = 0) -> dict:
    """Time of the attention level on ``n`` positions over its time on ``n / k``.

    A flat attention model attends over every sensor step; the HiSS high
    level attends over one feature per chunk. The ratio of the two
    attention-stack timings is the measured quadratic-term reduction
    (ideal value ``k**2``).
    """
    fn = bench_forward("attn", width=width, d_in=width, seed=seed)
    rng = np.random.default_rng(seed + 1)
    with threadpool_limits(limits=1):
        t_full, _ = time_forward(fn, rng.normal(size=(1, n, width)), reps)
        t_chunked, _ = time_forward(fn, rng.normal(size=(1, n // k, width)), reps)
        hiss = bench_forward("hiss-attn", width=width, k=k, seed=seed)
        t_hiss, _ = time_forward(hiss, rng.normal(size=(1, n - n % k, 4)), reps)
    return {"n": n, "k": k, "t_flat_attention": t_full, "t_high_attention": t_chunked,
            "t_hiss_total": t_hiss, "ratio": t_full / t_chunked, "ideal": float(k * k)}


# --- ablations -------------------------------------------------------------------------------

ABLATIONS = ("chunk", "filter", "fraction")
VALUE_COLUMN = {"chunk": "k", "filter": "cutoff_hz", "fraction": "fraction"}


def _cell_config(run: RunConfig, kind: str, value, seed: int) -> tuple[ModelSpec, object]:
    model = run.model
    train = run.train
    if kind == "chunk":
        if model.kind != "hiss":
            raise ConfigError("chunk ablation needs a hiss model")
        model = replace(model, k=int(value))
    elif kind == "filter":
        pre = replace(train.preprocess, filter={"order": int(run.ablation["filter_order"]),
                                                "cutoff_hz": float(value)})
        train = replace(train, preprocess=pre)
    elif kind == "fraction":
        train = replace(train, fraction=float(value))
    else:
        raise ConfigError(f"unknown ablation '{kind}' (expected one of {ABLATIONS})")
    return model, replace(train, seed=int(seed))


def ablation_values(run: RunConfig, kind: str) -> list:
    key = {"chunk": "chunk_sizes", "filter": "cutoffs_hz", "fraction": "fractions"}[kind]
    return list(run.ablation[key])


def run_ablation(run: RunConfig, kind: str, out_dir, values=None, seeds=None, log=None,
                 data: tuple[list, list] | None = None) -> dict:
    """Train one model per (value, seed) cell and tabulate validation MSE.

    Cell results live in ``out_dir/cells``; cells already on disk are read
    back instead of retrained, so an interrupted sweep resumes and a repeat
    run leaves every file unchanged.
    """
    values = ablation_values(run, kind) if values is None else list(values)
    seeds = list(run.seeds if seeds is None else seeds)
    if kind == "chunk" and run.model.stride not in values:
        raise ConfigError(f"chunk sizes {values} must include the stride {run.model.stride}")
    out = Path(out_dir)
    cells = out / "cells"
    cells.mkdir(parents=True, exist_ok=True)
    train = val = None
    if data is not None:
        train, val = data
    rows = []
    for value in values:
        for seed in seeds:
            path = cells / f"{kind}-{value}-seed{seed}.json"
            if path.exists():
                rows.append(json.loads(path.read_text(encoding="utf-8")))
                continue
            if train is None:
                train, val = run.dataset()
            model, cfg = _cell_config(run, kind, value, seed)
            res = fit(model, train, val, cfg)
            row = {VALUE_COLUMN[kind]: value, "seed": seed, "val_mse": res.checkpoint.best_val,
                   "baseline_mse": res.baseline_mse, "best_epoch": res.checkpoint.epoch,
                   "n_params": model.n_params()}
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(row, indent=1) + "\n", encoding="utf-8")
            tmp.replace(path)
            if log is not None:
                log(f"{kind} {value} seed {seed}: val {row['val_mse']:.6g}")
            rows.append(row)
    col = VALUE_COLUMN[kind]
    with open(out / f"ablate_{kind}.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([col, "seed", "val_mse"])
        for r in rows:
            w.writerow([r[col], r["seed"], repr(r["val_mse"])])
    summary = summarize(rows, col)
    if kind == "filter":
        summary["best_cutoff_hz"] = best_setting(summary)
        summary["filter_order"] = int(run.ablation["filter_order"])
    (out / f"ablate_{kind}.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    return summary


def summarize(rows: list[dict], col: str) -> dict:
    by_value: dict = {}
    for r in rows:
        by_value.setdefault(r[col], []).append(r["val_mse"])
    table = []
    for value, mses in by_value.items():
        m, s = aggregate(mses)
        table.append({col: value, "mean": m, "std": s, "median": float(np.median(mses)), "n": len(mses)})
    return {"column": col, "rows": table}


def best_setting(summary: dict) -> float:
    """The setting with the lowest mean validation MSE (first wins ties)."""
    col = summary["column"]
    best = min(summary["rows"], key=lambda r: r["mean"])
    return best[col]


def matched_downsample_model(hiss: ModelSpec, budget: int | None = None) -> ModelSpec:
    """Identity-low HiSS (chunk size 1) whose high stack width is tuned to a parameter budget."""
    budget = hiss.n_params() if budget is None else budget
    d_in = hiss.d_in
    best = None
    for width in range(2, 4 * hiss.high.width + 1):
        high = replace(hiss.high, d_in=d_in, width=width)
        cand = ModelSpec("hiss", hiss.stride, low=None, high=high, k=1)
        gap = abs(cand.n_params() - budget)
        if best is None or gap < best[0]:
            best = (gap, cand)
    return best[1]


__all__ = [
    "aggregate", "EvalReport", "evaluate", "evaluate_seeds", "describe", "BENCH_MODELS",
    "ScalingReport", "fit_slope", "bench_forward", "time_forward", "measure_memory",
    "scaling_bench", "quadratic_reduction", "ABLATIONS", "run_ablation", "summarize",
    "best_setting", "matched_downsample_model", "ablation_values",
]
