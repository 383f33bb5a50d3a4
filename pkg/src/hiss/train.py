"""Objective, optimizer, training loop, and checkpoints."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Trajectory, subsample
from .errors import ConfigError, DivergenceError, IoError, NumericalError, ParseError, ShapeError
from .hierarchy import ModelSpec
from .ndgrad import Tensor, as_tensor, backward, mean, mul, no_grad, sub
from .preprocess import NormStats, PreprocessConfig, fit_stats, normalize, preprocess_sensor

DIVERGENCE_LOSS = 1e6


def mse_seq_loss(pred, target) -> Tensor:
    """Mean squared error over timesteps and label dimensions.

    The Gaussian likelihood's ``1/(2 sigma^2)`` factor is a positive
    constant, so it is left out: it rescales gradients but not the argmin.
    """
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    err = sub(pred, target)
    return mean(mul(err, err))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    clip_norm: float = 1.0
    optimizer: str = "adam"
    fraction: float = 1.0  # share of the training split kept
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)

    def __post_init__(self):
        if isinstance(self.preprocess, dict):
            object.__setattr__(self, "preprocess", PreprocessConfig.from_dict(self.preprocess))
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr >= 0:
            raise ConfigError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if not 0 < self.fraction <= 1:
            raise ConfigError("dataset fraction must lie in (0, 1]")
        if self.optimizer != "adam":
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")
        if not self.clip_norm > 0:
            raise ConfigError("clip norm must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["preprocess"] = self.preprocess.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)


# --- optimizer -------------------------------------------------------------------------------

def clip_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if not math.isfinite(total):
        raise NumericalError("non-finite gradient")
    if total > max_norm:
        scale = max_norm / total
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in sorted(grads):
            g = grads[name]
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name].data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def optimizer_step(params: dict, opt: Adam, clip_norm: float = 1.0) -> float:
    """Clip the gradients held on ``params`` and apply one Adam update; returns the raw norm."""
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    grads, norm = clip_global_norm(grads, clip_norm)
    opt.step(params, grads)
    for p in params.values():
        p.zero_grad()
    return norm


# --- data preparation ------------------------------------------------------------------------

@dataclass
class Prepared:
    """Model-ready arrays for one split: normalized sensor and label per trajectory."""

    ids: list[str]
    x: list[np.ndarray]
    y: list[np.ndarray]

    def batches(self, batch_size: int, rng: np.random.Generator | None = None):
        """Same-length buckets cut into batches; order shuffled by ``rng`` when given."""
        buckets: dict[int, list[int]] = {}
        for i, x in enumerate(self.x):
            buckets.setdefault(x.shape[0], []).append(i)
        out = []
        for length in sorted(buckets):
            members = buckets[length]
            if rng is not None:
                members = [members[j] for j in rng.permutation(len(members))]
            out += [members[j:j + batch_size] for j in range(0, len(members), batch_size)]
        if rng is not None:
            out = [out[j] for j in rng.permutation(len(out))]
        return [(np.stack([self.x[i] for i in b]), np.stack([self.y[i] for i in b])) for b in out]


@dataclass(frozen=True)
class Normalizers:
    sensor: NormStats
    label: NormStats

    def to_dict(self) -> dict:
        return {"sensor": self.sensor.to_dict(), "label": self.label.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizers":
        return cls(NormStats.from_dict(d["sensor"]), NormStats.from_dict(d["label"]))


def fit_normalizers(train: list[Trajectory], cfg: PreprocessConfig) -> Normalizers:
    """Statistics from the training trajectories only."""
    feats = [preprocess_sensor(t.sensor, cfg, t.sensor_hz) for t in train]
    return Normalizers(fit_stats(feats), fit_stats([t.label for t in train]))


def prepare(trajs: list[Trajectory], cfg: PreprocessConfig, norms: Normalizers) -> Prepared:
    xs = [normalize(preprocess_sensor(t.sensor, cfg, t.sensor_hz), norms.sensor) for t in trajs]
    ys = [normalize(t.label, norms.label) for t in trajs]
    return Prepared([t.id for t in trajs], xs, ys)


def predict(model: ModelSpec, params: dict, x: np.ndarray) -> np.ndarray:
    with no_grad():
        return model.forward(params, x[None] if x.ndim == 2 else x).data


def split_mse(model: ModelSpec, params: dict, data: Prepared, batch_size: int = 64) -> float:
    """Mean squared error over every label entry of the split (normalized units)."""
    total, count = 0.0, 0
    for x, y in data.batches(batch_size):
        err = predict(model, params, x) - y
        total += float(np.sum(err * err))
        count += err.size
    return total / count


def constant_mean_mse(data: Prepared) -> float:
    """MSE of predicting the training label mean, which is zero after normalization."""
    y = np.concatenate(data.y)
    return float(np.mean(y * y))


# --- checkpoints -----------------------------------------------------------------------------

@dataclass
class Checkpoint:
    model: ModelSpec
    params: dict  # name -> ndarray
    norms: Normalizers
    config: TrainConfig
    epoch: int
    history: list[dict]  # per epoch: epoch, train_mse, val_mse
    split: dict = field(default_factory=dict)  # "train"/"val" -> ids
    data_dir: str | None = None

    @property
    def best_val(self) -> float:
        return min(h["val_mse"] for h in self.history)

    def tensors(self) -> dict[str, Tensor]:
        return {k: Tensor(v.copy()) for k, v in self.params.items()}

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        index, offset = [], 0
        with open(out / "params.bin.tmp", "wb") as fh:
            for name in sorted(self.params):
                arr = np.ascontiguousarray(self.params[name], dtype="<f8")
                fh.write(arr.tobytes())
                index.append({"name": name, "shape": list(arr.shape), "offset": offset})
                offset += arr.size
        os.replace(out / "params.bin.tmp", out / "params.bin")
        meta = {
            "format": 1, "dtype": "<f8", "tensors": index, "model": self.model.to_dict(),
            "norms": self.norms.to_dict(), "config": self.config.to_dict(), "epoch": self.epoch,
            "history": self.history, "split": self.split, "data_dir": self.data_dir,
        }
        tmp = out / "checkpoint.json.tmp"
        tmp.write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
        os.replace(tmp, out / "checkpoint.json")
        write_curves(self.history, out / "loss_curves.csv")
        return out

    @classmethod
    def load(cls, directory) -> "Checkpoint":
        d = Path(directory)
        if d.is_file():
            d = d.parent
        try:
            meta = json.loads((d / "checkpoint.json").read_text(encoding="utf-8"))
            raw = np.fromfile(d / "params.bin", dtype="<f8")
        except FileNotFoundError as exc:
            raise IoError(f"checkpoint file missing: {exc.filename}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"checkpoint index is not valid JSON: {exc.msg}", d / "checkpoint.json",
                             exc.lineno) from None
        params = {}
        for entry in meta["tensors"]:
            n = int(np.prod(entry["shape"], dtype=int))
            chunk = raw[entry["offset"]:entry["offset"] + n]
            if chunk.size != n:
                raise ParseError(f"payload truncated at tensor {entry['name']}", d / "params.bin")
            params[entry["name"]] = chunk.astype(np.float64).reshape(entry["shape"])
        return cls(ModelSpec.from_dict(meta["model"]), params, Normalizers.from_dict(meta["norms"]),
                   TrainConfig.from_dict(meta["config"]), meta["epoch"], meta["history"],
                   meta.get("split", {}), meta.get("data_dir"))


def write_curves(history: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse"])
        for h in history:
            w.writerow([h["epoch"], repr(h["train_mse"]), repr(h["val_mse"])])


# --- training loop ---------------------------------------------------------------------------

@dataclass
class FitResult:
    checkpoint: Checkpoint
    history: list[dict]
    steps: int
    baseline_mse: float  # constant-mean predictor on validation


def fit(model: ModelSpec, train: list[Trajectory], val: list[Trajectory], cfg: TrainConfig,
        log=None) -> FitResult:
    """Train ``model`` and keep the parameters of the best validation epoch.

    Every random choice (init, batch order, dropout, subsampling) comes
    from ``cfg.seed``, so equal inputs give bit-identical results.
    """
    train_ids = subsample([t.id for t in train], cfg.fraction, cfg.seed)
    keep = set(train_ids)
    train = [t for t in train if t.id in keep]
    if keep & {t.id for t in val}:
        raise ConfigError("training and validation trajectories overlap")
    norms = fit_normalizers(train, cfg.preprocess)
    tr = prepare(train, cfg.preprocess, norms)
    va = prepare(val, cfg.preprocess, norms)
    d_in = tr.x[0].shape[1]
    if d_in != model.d_in or tr.y[0].shape[1] != model.d_out:
        raise ConfigError(f"model expects {model.d_in}->{model.d_out} dims, data has "
                          f"{d_in}->{tr.y[0].shape[1]}")

    params = model.init(np.random.default_rng([cfg.seed, 0]))
    order_rng = np.random.default_rng([cfg.seed, 1])
    drop_rng = np.random.default_rng([cfg.seed, 2])
    opt = Adam(cfg.lr)
    history: list[dict] = []
    best, steps = None, 0
    for epoch in range(1, cfg.epochs + 1):
        total, count = 0.0, 0
        for x, y in tr.batches(cfg.batch_size, order_rng):
            loss = mse_seq_loss(model.forward(params, x, training=True, rng=drop_rng), y)
            value = loss.item()
            if not math.isfinite(value) or value > DIVERGENCE_LOSS:
                raise DivergenceError(f"training loss {value:.3g} at epoch {epoch}")
            backward(loss)
            optimizer_step(params, opt, cfg.clip_norm)
            steps += 1
            total += value * y.size
            count += y.size
        val_mse = split_mse(model, params, va)
        history.append({"epoch": epoch, "train_mse": total / count, "val_mse": val_mse})
        if log is not None:
            log(f"epoch {epoch} train {total / count:.6g} val {val_mse:.6g}")
        if best is None or val_mse < best[1]:
            best = (epoch, val_mse, {k: p.data.copy() for k, p in params.items()})
    ckpt = Checkpoint(model, best[2], norms, cfg, best[0], history,
                      {"train": list(tr.ids), "val": list(va.ids)})
    return FitResult(ckpt, history, steps, constant_mean_mse(va))
