import math

import numpy as np
import pytest

from realmotion.errors import ConfigInvalid, CorruptFile, FormatVersionMismatch
from realmotion.world import (FORMAT_VERSION, WorldConfig, generate_dataset, generate_scene, list_scenes,
                              read_scene, write_scene)


def test_defaults_match_benchmark_horizons():
    cfg = WorldConfig()
    assert (cfg.T_hist, cfg.T_fut, cfg.q) == (50, 60, 10.0)


def test_deterministic():
    cfg = WorldConfig(seed=1)
    assert generate_scene(cfg, 3) == generate_scene(cfg, 3)
    assert generate_scene(cfg, 3) != generate_scene(cfg, 4)
    assert generate_scene(cfg, 3) != generate_scene(WorldConfig(seed=2), 3)


def test_kinematic_consistency(scenes):
    for sc in scenes:
        for tr in sc.tracks:
            ok = tr.valid[1:] & tr.valid[:-1]
            fd = np.diff(tr.position, axis=0) * sc.q
            assert np.max(np.abs(fd[ok] - tr.velocity[1:][ok]), initial=0) <= 1e-6


def test_physical_sanity(scenes):
    for sc in scenes:
        for tr in sc.tracks:
            v = tr.velocity[tr.valid]
            speed = np.hypot(v[:, 0], v[:, 1])
            assert np.all(speed[np.isfinite(speed)] <= 30.0)
            h = tr.heading[tr.valid]
            fast = speed > 0.5
            dirn = np.arctan2(v[:, 1], v[:, 0])
            diff = np.abs((dirn - h + np.pi) % (2 * np.pi) - np.pi)
            assert np.all(diff[fast] < np.pi / 2)


def test_constant_velocity_second_difference():
    cfg = WorldConfig(seed=4, behavior_mix={"constant_velocity": 1.0})
    for i in range(5):
        sc = generate_scene(cfg, i)
        for tr in sc.tracks:
            p = tr.position[tr.valid]
            idx = np.flatnonzero(tr.valid)
            run = np.diff(idx) == 1
            dd = p[2:] - 2 * p[1:-1] + p[:-2]
            contiguous = run[1:] & run[:-1]
            # per-axis uniform noise, rotated with the scene: |noise| <= sqrt(2) * bound
            bound = 4 * math.sqrt(2) * cfg.noise
            assert np.max(np.linalg.norm(dd[contiguous], axis=-1), initial=0) <= bound + 1e-9


def test_focal_valid_at_current(scenes):
    for sc in scenes:
        for f in sc.focal_ids:
            assert sc.track(f).valid[:sc.T_hist + sc.T_fut].all()


@pytest.mark.parametrize("bad", [
    {"behavior_mix": {"turn": 0.5}},
    {"behavior_mix": {"fly": 1.0}},
    {"T_hist": 20},
    {"n_agents": 0},
    {"unknown": 1},
])
def test_invalid_config(bad):
    with pytest.raises(ConfigInvalid):
        WorldConfig.from_dict(bad)


@pytest.mark.parametrize("binary", [False, True])
def test_round_trip(tmp_path, scenes, binary):
    for i, sc in enumerate(scenes[:4]):
        p = write_scene(sc, tmp_path / (f"s{i}.rms" if binary else f"s{i}.json"))
        assert read_scene(p) == sc


@pytest.mark.parametrize("name", ["s.json", "s.rms"])
def test_truncated_is_corrupt(tmp_path, scenes, name):
    p = write_scene(scenes[0], tmp_path / name)
    raw = p.read_bytes()
    p.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CorruptFile):
        read_scene(p)


def test_flipped_byte_is_corrupt(tmp_path, scenes):
    p = write_scene(scenes[0], tmp_path / "s.rms")
    raw = bytearray(p.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(CorruptFile):
        read_scene(p)


def test_version_mismatch(tmp_path, scenes):
    p = write_scene(scenes[0], tmp_path / "s.json")
    p.write_text(p.read_text().replace(FORMAT_VERSION, "realmotion-scene/99"))
    with pytest.raises(FormatVersionMismatch):
        read_scene(p)


def test_dataset_round_trip_1000(tmp_path):
    cfg = WorldConfig(seed=9)
    paths = generate_dataset(cfg, 1000, tmp_path, binary=True)
    assert list_scenes(tmp_path) == sorted(paths)
    for i in range(0, 1000, 97):
        assert read_scene(paths[i]) == generate_scene(cfg, i)
    for p in paths:
        read_scene(p)  # checksum verified on every file


def test_parallel_generation_identical(tmp_path):
    cfg = WorldConfig(seed=2)
    a = generate_dataset(cfg, 6, tmp_path / "a", jobs=1)
    b = generate_dataset(cfg, 6, tmp_path / "b", jobs=2)
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
