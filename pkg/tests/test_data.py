import json

import numpy as np
import pytest

from hiss.data import (DIMS, KINDS, MANIFEST, TaskSpec, Trajectory, generate, generate_one, load,
                       load_manifest, make_dataset, split, store, subsample)
from hiss.errors import ConfigError, ManifestError, ParseError, SplitError

SMALL = dict(n=4, duration_s=(9, 12))


@pytest.mark.parametrize("kind", KINDS)
def test_generated_shapes_and_alignment(kind):
    for t in generate(TaskSpec(kind=kind, **SMALL)):
        assert t.sensor.shape == (10 * t.label.shape[0], DIMS[kind][0])
        assert t.label.shape[1] == DIMS[kind][1]
        assert 450 <= t.sensor.shape[0] <= 600


def test_default_lengths_span_the_stated_range():
    lengths = [generate_one(TaskSpec(seed=s), 0).sensor.shape[0] for s in range(30)]
    assert min(lengths) >= 450 and max(lengths) <= 3000


def test_same_seed_bit_identical_and_different_seed_differs():
    a, b = generate(TaskSpec(seed=5, **SMALL)), generate(TaskSpec(seed=5, **SMALL))
    assert a == b
    c = generate(TaskSpec(seed=6, **SMALL))
    assert not np.array_equal(a[0].sensor[:450], c[0].sensor[:450])


def test_noiseless_identity_mixing_copies_velocity():
    spec = TaskSpec(mixing="identity", noise=0, drift=0, vibration=0, **SMALL)
    for t in generate(spec):
        v = t.sensor[9::10]
        assert np.array_equal(v[:, 0::2][:, :1], t.label[:, :1])
        assert np.array_equal(t.sensor[:, 0], t.sensor[:, 2])


def test_label_velocity_integrates_to_waypoint_displacement():
    quiet = dict(mixing="identity", noise=0, drift=0, vibration=0)
    for t, fine in zip(generate(TaskSpec(**SMALL)), generate(TaskSpec(**SMALL, **quiet))):
        w = np.array(t.metadata["waypoints"])
        v = fine.sensor[:, :2]  # the same latent velocity at the sensor rate
        assert np.array_equal(v[9::10], t.label)
        # a rectangle rule with step h is off by at most h times the total variation
        tv = np.abs(np.diff(v, axis=0)).sum(0)
        for rate, samples in ((t.output_hz, t.label), (t.sensor_hz, v)):
            err = np.abs(samples.sum(0) / rate - (w[-1] - w[0]))
            assert np.all(err <= tv / rate + 1e-12)
        assert np.abs(v.sum(0) / t.sensor_hz - (w[-1] - w[0])).max() < 0.05


def test_vibration_amplitude_tracks_speed():
    quiet = dict(mixing="identity", noise=0, drift=0, **SMALL)
    t = generate_one(TaskSpec(vibration=1.0, **quiet), 0)
    flat = generate_one(TaskSpec(vibration=0, **quiet), 0)
    vib = np.abs(t.sensor - flat.sensor).max(axis=1)
    speed = np.linalg.norm(flat.sensor[:, :2], axis=1)
    assert np.all(vib[speed == 0] == 0)
    assert np.all(vib <= speed + 1e-12)
    assert vib[speed > 0.2].mean() > 0.3 * speed[speed > 0.2].mean()


def test_task_spec_validation():
    with pytest.raises(ConfigError):
        TaskSpec(kind="unknown")
    with pytest.raises(ConfigError):
        TaskSpec(n=0)
    with pytest.raises(ConfigError):
        TaskSpec(duration_s=(0, 5))
    with pytest.raises(ConfigError):
        TaskSpec(sensor_hz=50, output_hz=3)
    with pytest.raises(ConfigError):
        TaskSpec.from_dict({"kind": "drift-integrator", "colour": 1})
    spec = TaskSpec(seed=3)
    assert TaskSpec.from_dict(spec.to_dict()) == spec


def test_split_sizes_and_partition():
    ids = [f"t{i}" for i in range(1000)]
    train, val = split(ids, 0.8, seed=1)
    assert (len(train), len(val)) == (800, 200)
    assert set(train) | set(val) == set(ids) and not set(train) & set(val)
    assert split(ids, 0.8, seed=1) == (train, val)
    assert split(ids, 0.8, seed=2) != (train, val)


def test_split_errors():
    with pytest.raises(SplitError):
        split(["a", "b"], 0.99)
    with pytest.raises(SplitError):
        split(["a", "b"], 1.0)
    with pytest.raises(SplitError):
        split(["a", "a", "b"], 0.5)


def test_subsample_fraction():
    ids = [f"t{i}" for i in range(800)]
    kept = subsample(ids, 0.3, seed=0)
    assert len(kept) == 240 and set(kept) <= set(ids)
    assert subsample(ids, 1.0) == ids
    with pytest.raises(SplitError):
        subsample(ids, 0.0)


def test_store_load_round_trip(tmp_path):
    spec = TaskSpec(**SMALL)
    m = make_dataset(spec, tmp_path / "d")
    manifest, trajs = load(tmp_path / "d")
    assert trajs == generate(spec)
    assert manifest.split == m.split and set(manifest.ids_in("val")) | set(manifest.ids_in("train")) == set(m.ids)
    header = (tmp_path / "d" / m.files[trajs[0].id]).read_text().splitlines()[0]
    assert header.startswith("time,s0,") and header.endswith(",y0,y1")


def test_truncated_file_is_a_parse_error(tmp_path):
    spec = TaskSpec(**SMALL)
    m = make_dataset(spec, tmp_path)
    path = tmp_path / m.files[m.ids[0]]
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:-20]))  # whole rows missing
    with pytest.raises(ParseError, match="manifest says"):
        load(tmp_path)
    path.write_text("".join(lines)[:-7])  # cut mid-row
    with pytest.raises(ParseError):
        load(tmp_path)


def test_malformed_cells_report_line(tmp_path):
    m = make_dataset(TaskSpec(**SMALL), tmp_path)
    path = tmp_path / m.files[m.ids[1]]
    lines = path.read_text().splitlines(keepends=True)
    lines[4] = lines[4].replace(",", ",abc", 1)
    path.write_text("".join(lines))
    with pytest.raises(ParseError) as info:
        load(tmp_path)
    assert info.value.line == 5


def test_missing_file_names_the_file(tmp_path):
    m = make_dataset(TaskSpec(**SMALL), tmp_path)
    victim = m.files[m.ids[2]]
    (tmp_path / victim).unlink()
    with pytest.raises(ManifestError, match=victim):
        load(tmp_path)


def test_manifest_errors(tmp_path):
    with pytest.raises(ManifestError):
        load_manifest(tmp_path)
    (tmp_path / MANIFEST).write_text("{not json")
    with pytest.raises(ParseError):
        load_manifest(tmp_path)
    (tmp_path / MANIFEST).write_text(json.dumps({"task": "x"}))
    with pytest.raises(ManifestError):
        load_manifest(tmp_path)


def test_trajectory_alignment_enforced():
    with pytest.raises(ParseError):
        Trajectory("x", np.zeros((25, 2)), np.zeros((3, 1)), 50.0, 5.0)


def test_store_is_byte_deterministic(tmp_path):
    trajs = generate(TaskSpec(**SMALL))
    store(trajs, tmp_path / "a")
    store(trajs, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
