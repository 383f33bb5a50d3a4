"""Trajectory datasets: synthetic task generators, splits, and on-disk format.

A dataset directory holds ``manifest.json`` plus one CSV per trajectory.
Each CSV has a header row (``time``, sensor channels, label channels) and
one row per sensor sample; label cells are filled only on output-tick rows
(every ``stride``-th row, ending each window) and left empty elsewhere.
Floats are written with ``repr`` so a store/load round trip is exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ManifestError, ParseError, SplitError

KINDS = ("drift-integrator", "slip-rotation", "joystick-like")
# (sensor dim, label dim) per generator kind
DIMS = {"drift-integrator": (30, 2), "slip-rotation": (30, 3), "joystick-like": (6, 3)}
MANIFEST = "manifest.json"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "drift-integrator"
    n: int = 200
    duration_s: tuple[int, int] = (9, 60)  # whole seconds, so lengths bucket well
    sensor_hz: float = 50.0
    output_hz: float = 5.0
    waypoints: tuple[int, int] = (8, 12)
    pause_s: tuple[float, float] = (1.0, 4.0)
    mixing: str = "random"  # "random" smooth map or "identity" (tile velocity)
    noise: float = 0.3
    drift: float = 0.05
    vibration: float = 1.0
    vibration_hz: tuple[float, float] = (11.0, 14.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("duration_s", "waypoints", "pause_s", "vibration_hz"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.kind not in KINDS:
            raise ConfigError(f"unknown task kind '{self.kind}' (expected one of {KINDS})")
        if self.n < 1:
            raise ConfigError("trajectory count must be >= 1")
        lo, hi = self.duration_s
        if not 0 < lo <= hi:
            raise ConfigError(f"bad duration range {self.duration_s}")
        if self.waypoints[0] < 2 or self.waypoints[0] > self.waypoints[1]:
            raise ConfigError(f"bad waypoint range {self.waypoints}")
        if self.mixing not in ("random", "identity"):
            raise ConfigError(f"unknown mixing '{self.mixing}'")
        if min(self.noise, self.drift, self.vibration) < 0:
            raise ConfigError("noise, drift and vibration magnitudes must be >= 0")
        ratio = self.sensor_hz / self.output_hz
        if ratio < 1 or not math.isclose(ratio, round(ratio), abs_tol=1e-9):
            raise ConfigError("sensor rate must be an integer multiple of the output rate")

    @property
    def stride(self) -> int:
        return int(round(self.sensor_hz / self.output_hz))

    @property
    def dims(self) -> tuple[int, int]:
        return DIMS[self.kind]

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown task keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Trajectory:
    id: str
    sensor: np.ndarray  # (T_s, d_s) at sensor_hz
    label: np.ndarray   # (T_o, d_o) at output_hz
    sensor_hz: float
    output_hz: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sensor = np.asarray(self.sensor, dtype=float)
        self.label = np.asarray(self.label, dtype=float)
        if self.sensor.shape[0] != self.stride * self.label.shape[0]:
            raise ParseError(f"trajectory {self.id}: {self.sensor.shape[0]} sensor rows is not "
                             f"{self.stride} x {self.label.shape[0]} label rows")
        if not (np.all(np.isfinite(self.sensor)) and np.all(np.isfinite(self.label))):
            raise ParseError(f"trajectory {self.id}: non-finite values")

    @property
    def stride(self) -> int:
        return int(round(self.sensor_hz / self.output_hz))

    def __eq__(self, other):
        return (isinstance(other, Trajectory) and self.id == other.id
                and np.array_equal(self.sensor, other.sensor) and np.array_equal(self.label, other.label)
                and self.sensor_hz == other.sensor_hz and self.output_hz == other.output_hz
                and self.metadata == other.metadata)


# --- generation ---------------------------------------------------------------------------

def _schedule(spec: TaskSpec, rng: np.random.Generator, dim: int):
    """Duration, waypoints, and (start, end, from, to) move segments for one trajectory.

    The path rests at each waypoint, then moves to the next with a
    raised-cosine speed profile. Pauses are shrunk proportionally when
    they would take more than half the duration.
    """
    duration = float(rng.integers(spec.duration_s[0], spec.duration_s[1] + 1))
    n_wp = int(rng.integers(spec.waypoints[0], spec.waypoints[1] + 1))
    points = rng.uniform(-1.0, 1.0, (n_wp, dim))
    pauses = rng.uniform(spec.pause_s[0], spec.pause_s[1], n_wp)
    if pauses.sum() > 0.5 * duration:
        pauses *= 0.5 * duration / pauses.sum()
    pauses[0] = max(pauses[0], 0.6)  # rest at the start so a resting baseline exists
    dist = np.linalg.norm(np.diff(points, axis=0), axis=1)
    moves = (duration - pauses.sum()) * dist / dist.sum()
    segments = []
    t = 0.0
    for j in range(n_wp - 1):
        t += pauses[j]
        segments.append((t, t + moves[j], points[j], points[j + 1]))
        t += moves[j]
    return duration, points, segments


def _velocity(times: np.ndarray, segments, dim: int) -> np.ndarray:
    v = np.zeros((times.size, dim))
    for start, end, p0, p1 in segments:
        inside = (times >= start) & (times < end)
        tau = (times[inside] - start) / (end - start)
        speed = np.pi / (2.0 * (end - start)) * np.sin(np.pi * tau)
        v[inside] = speed[:, None] * (p1 - p0)
    return v


def _mixing(spec: TaskSpec, d_latent: int, d_sensor: int):
    if spec.mixing == "identity":
        cols = np.arange(d_sensor) % d_latent
        return lambda z: z[:, cols]
    rng = np.random.default_rng([spec.seed, 7919])
    W = rng.normal(0.0, 1.5, (d_latent, d_sensor))
    b = rng.normal(0.0, 0.5, d_sensor)
    return lambda z: np.tanh(z @ W + b)


def _latent(spec: TaskSpec, v: np.ndarray) -> np.ndarray:
    """What the sensor physically responds to, per task kind."""
    if spec.kind == "joystick-like":
        pos = np.cumsum(v, axis=0) / spec.sensor_hz
        return np.concatenate([pos, np.linalg.norm(v, axis=1, keepdims=True)], axis=1)
    return v


def generate_one(spec: TaskSpec, index: int) -> Trajectory:
    rng = np.random.default_rng([spec.seed, index])
    d_s, d_o = spec.dims
    dim = d_o
    duration, points, segments = _schedule(spec, rng, dim)
    T_s = int(round(duration * spec.sensor_hz))
    times = np.arange(T_s) / spec.sensor_hz
    v = _velocity(times, segments, dim)
    speed = np.linalg.norm(v, axis=1, keepdims=True)

    sensor = _mixing(spec, dim if spec.kind != "joystick-like" else dim + 1, d_s)(
        _latent(spec, v))
    if spec.drift > 0:
        steps = rng.normal(0.0, 1.0, (T_s, d_s)) * speed * spec.drift / math.sqrt(spec.sensor_hz)
        sensor = sensor + np.cumsum(steps, axis=0)
    if spec.vibration > 0:
        freq = rng.uniform(*spec.vibration_hz, d_s)
        # slow frequency wander keeps the aliased tick samples incoherent
        wander = np.cumsum(rng.normal(0.0, 0.05, (T_s, d_s)), axis=0)
        phase = rng.uniform(0.0, 2 * np.pi, d_s)
        sensor = sensor + spec.vibration * speed * np.sin(2 * np.pi * freq * times[:, None] + phase + wander)
    if spec.noise > 0:
        sensor = sensor + rng.normal(0.0, spec.noise, (T_s, d_s))

    if spec.kind == "joystick-like":
        label = points[0] + np.cumsum(v, axis=0) / spec.sensor_hz
    else:
        label = v
    label = label[spec.stride - 1::spec.stride]
    meta = {"task": spec.kind, "seed": spec.seed, "index": index, "duration_s": duration,
            "waypoints": points.tolist()}
    return Trajectory(f"{spec.kind}-{spec.seed}-{index:05d}", sensor, label, spec.sensor_hz,
                      spec.output_hz, meta)


def generate(spec: TaskSpec) -> list[Trajectory]:
    """Deterministic in ``spec``: each trajectory draws from its own (seed, index) stream."""
    return [generate_one(spec, i) for i in range(spec.n)]


# --- splits ----------------------------------------------------------------------------------

def split(ids, fraction: float = 0.8, seed: int = 0) -> tuple[list[str], list[str]]:
    """Seeded shuffle, then the first ``round(fraction * n)`` ids train."""
    ids = list(ids)
    if not 0 < fraction < 1:
        raise SplitError(f"train fraction {fraction} not in (0, 1)")
    if len(set(ids)) != len(ids):
        raise SplitError("duplicate trajectory ids")
    order = np.random.default_rng([seed, 104729]).permutation(len(ids))
    n_train = int(round(fraction * len(ids)))
    train = [ids[i] for i in order[:n_train]]
    val = [ids[i] for i in order[n_train:]]
    if not train or not val:
        raise SplitError(f"split of {len(ids)} trajectories at {fraction} leaves an empty side")
    return train, val


def subsample(ids, fraction: float, seed: int = 0) -> list[str]:
    """Keep ``ceil(fraction * n)`` ids; fraction 1 returns the list unchanged."""
    ids = list(ids)
    if not 0 < fraction <= 1:
        raise SplitError(f"dataset fraction {fraction} not in (0, 1]")
    if fraction == 1:
        return ids
    keep = max(1, int(math.ceil(fraction * len(ids))))
    order = np.sort(np.random.default_rng([seed, 15485863]).permutation(len(ids))[:keep])
    return [ids[i] for i in order]


# --- storage ---------------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    task: str
    sensor_hz: float
    output_hz: float
    dims: tuple[int, int]
    files: dict  # id -> relative CSV path
    lengths: dict  # id -> sensor rows
    split: dict  # id -> "train" | "val"
    seed: int
    spec: dict | None = None
    metadata: dict = field(default_factory=dict)  # id -> generator metadata
    version: int = FORMAT_VERSION

    def __post_init__(self):
        self.dims = tuple(self.dims)
        if set(self.split) and set(self.split) != set(self.files):
            raise ManifestError("split assignment does not cover exactly the listed files")
        bad = {s for s in self.split.values()} - {"train", "val"}
        if bad:
            raise ManifestError(f"unknown split names {sorted(bad)}")

    @property
    def ids(self) -> list[str]:
        return list(self.files)

    def ids_in(self, name: str) -> list[str]:
        return [i for i in self.files if self.split.get(i) == name]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ManifestError(f"malformed manifest: {exc}") from exc


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv(traj: Trajectory) -> str:
    d_s, d_o = traj.sensor.shape[1], traj.label.shape[1]
    header = ["time"] + [f"s{j}" for j in range(d_s)] + [f"y{j}" for j in range(d_o)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    stride = traj.stride
    blank = [""] * d_o
    for t in range(traj.sensor.shape[0]):
        row = [repr(t / traj.sensor_hz)] + [repr(float(x)) for x in traj.sensor[t]]
        if t % stride == stride - 1:
            row += [repr(float(x)) for x in traj.label[t // stride]]
        else:
            row += blank
        w.writerow(row)
    return buf.getvalue()


def parse_trajectory_csv(path, traj_id: str, sensor_hz: float, output_hz: float,
                         dims: tuple[int, int], expected_rows: int | None = None,
                         metadata: dict | None = None) -> Trajectory:
    path = Path(path)
    d_s, d_o = dims
    stride = int(round(sensor_hz / output_hz))
    want = ["time"] + [f"s{j}" for j in range(d_s)] + [f"y{j}" for j in range(d_o)]
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ManifestError(f"trajectory file missing: {path}") from None
    if text and not text.endswith("\n"):
        raise ParseError("file does not end with a newline (truncated?)", path, text.count("\n") + 1)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != want:
        raise ParseError(f"header does not match expected {len(want)} columns", path, 1)
    sensor, label = [], []
    for n, row in enumerate(rows[1:]):
        line = n + 2
        if len(row) != len(want):
            raise ParseError(f"expected {len(want)} fields, found {len(row)}", path, line)
        try:
            sensor.append([float(x) for x in row[1:1 + d_s]])
            tick = n % stride == stride - 1
            cells = row[1 + d_s:]
            if tick:
                label.append([float(x) for x in cells])
            elif any(cells):
                raise ParseError("label cells must be empty between output ticks", path, line)
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", path, line) from None
    if expected_rows is not None and len(sensor) != expected_rows:
        raise ParseError(f"found {len(sensor)} rows, manifest says {expected_rows}", path, len(rows) + 1)
    if len(sensor) % stride:
        raise ParseError(f"{len(sensor)} rows is not a multiple of stride {stride}", path, len(rows) + 1)
    return Trajectory(traj_id, np.array(sensor).reshape(-1, d_s), np.array(label).reshape(-1, d_o),
                      sensor_hz, output_hz, dict(metadata or {}))


def store(trajs: list[Trajectory], out_dir, spec: TaskSpec | None = None,
          split_map: dict | None = None) -> DatasetManifest:
    if not trajs:
        raise ConfigError("nothing to store")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    first = trajs[0]
    dims = (first.sensor.shape[1], first.label.shape[1])
    files, lengths, meta = {}, {}, {}
    for tr in trajs:
        name = f"{tr.id}.csv"
        _atomic_write(out / name, trajectory_csv(tr))
        files[tr.id] = name
        lengths[tr.id] = int(tr.sensor.shape[0])
        meta[tr.id] = tr.metadata
    manifest = DatasetManifest(
        task=spec.kind if spec else str(first.metadata.get("task", "unknown")),
        sensor_hz=first.sensor_hz, output_hz=first.output_hz, dims=dims, files=files,
        lengths=lengths, split=dict(split_map or {}), seed=spec.seed if spec else 0,
        spec=spec.to_dict() if spec else None, metadata=meta)
    _atomic_write(out / MANIFEST, json.dumps(manifest.to_dict(), indent=1, sort_keys=True) + "\n")
    return manifest


def load_manifest(data_dir) -> DatasetManifest:
    path = Path(data_dir) / MANIFEST
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ManifestError(f"manifest missing: {path}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest is not valid JSON: {exc.msg}", path, exc.lineno) from None
    return DatasetManifest.from_dict(d)


def load(data_dir, ids=None) -> tuple[DatasetManifest, list[Trajectory]]:
    """Load the manifest and the listed trajectories (all by default)."""
    root = Path(data_dir)
    manifest = load_manifest(root)
    ids = manifest.ids if ids is None else list(ids)
    missing = [i for i in ids if not (root / manifest.files.get(i, f"<unlisted {i}>")).is_file()]
    if missing:
        raise ManifestError(f"manifest references missing file(s): "
                            f"{', '.join(manifest.files.get(i, i) for i in missing)}")
    trajs = [parse_trajectory_csv(root / manifest.files[i], i, manifest.sensor_hz, manifest.output_hz,
                                  manifest.dims, manifest.lengths.get(i), manifest.metadata.get(i))
             for i in ids]
    return manifest, trajs


def make_dataset(spec: TaskSpec, out_dir, train_fraction: float = 0.8) -> DatasetManifest:
    trajs = generate(spec)
    train, val = split([t.id for t in trajs], train_fraction, spec.seed)
    assignment = {i: "train" for i in train}
    assignment.update({i: "val" for i in val})
    return store(trajs, out_dir, spec, {t.id: assignment[t.id] for t in trajs})
