import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from _fd import TOL, directional_check, param_groups
from realmotion.errors import EmptyBank, ShapeMismatch, StaleEntry
from realmotion.geometry import Pose2, Trajectory, transform_trajectory
from realmotion.trajectory_stream import MemoryBank, TrajectoryEmbedding, TrajectoryStream

K, D = 5, 16


def pose(x, y, th, t):
    return torch.tensor([[x, y, th, t]], dtype=torch.float64)


def modes(value=None, seed=0, M=6):
    if value is not None:
        return torch.full((1, M, K, 2), float(value), dtype=torch.float64), torch.full((1, M, D), float(value), dtype=torch.float64)
    g = torch.Generator().manual_seed(seed)
    return (torch.randn(1, M, K, 2, generator=g, dtype=torch.float64) * 5,
            torch.randn(1, M, D, generator=g, dtype=torch.float64))


def empty(capacity=12):
    return MemoryBank.empty(1, K, D, capacity, dtype=torch.float64)


def test_update_empty_bank_insertion_order():
    Y, Fm = modes(seed=1)
    bank = empty().update(Y, Fm, pose(0, 0, 0, 0))
    assert len(bank) == 6
    assert torch.equal(bank.feats[0], Fm[0])


def test_capacity_evicts_oldest_six():
    bank = empty()
    for i in range(3):
        Y, Fm = modes(value=i)
        bank = bank.update(Y, Fm, pose(0, 0, 0, 0))
    assert len(bank) == 12
    assert torch.all(bank.feats[0, :6] == 1) and torch.all(bank.feats[0, 6:] == 2)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=8), st.integers(1, 20))
def test_fifo_property(sizes, capacity):
    bank = empty(capacity)
    inserted = []
    counter = 0
    for n in sizes:
        Fm = torch.arange(counter, counter + n, dtype=torch.float64).view(1, n, 1).expand(1, n, D)
        Y = torch.zeros(1, n, K, 2, dtype=torch.float64)
        bank = bank.update(Y, Fm, pose(0, 0, 0, 0))
        inserted.extend(range(counter, counter + n))
        counter += n
    assert bank.feats[0, :, 0].tolist() == inserted[-capacity:]


def test_no_dedup_multimodality_preserved():
    Y, Fm = modes(value=1.0)  # six identical modes
    bank = empty().update(Y, Fm, pose(0, 0, 0, 0))
    assert len(bank) == 6
    bank = bank.update(Y, Fm, pose(0, 0, 0, 0))
    assert len(bank) == 12


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-math.pi, math.pi), st.floats(0, 10))
def test_update_align_round_trip(x, y, th, t):
    Y, Fm = modes(seed=2)
    p = pose(x, y, th, t)
    bank = empty().update(Y, Fm, p)
    back = bank.align_trajectories(p, 10.0)
    assert torch.max(torch.abs(back - Y)) <= 1e-9


def test_alignment_matches_geometry_oracle():
    rng = np.random.default_rng(4)
    bank = empty(18)
    poses = []
    for i in range(3):
        p = pose(*rng.uniform(-50, 50, 2), rng.uniform(-3, 3), 0.1 * i)
        poses.append(p)
        bank = bank.update(*modes(seed=10 + i), p)
    cur = pose(5.0, -3.0, 1.1, 0.3)
    got = bank.align_trajectories(cur, 10.0)
    cur_p = Pose2.from_array(cur[0].numpy())
    for j, entry in enumerate(bank.entries()):
        dt = cur_p.t - entry.origin_pose.t
        want = transform_trajectory(Trajectory(entry.y), cur_p, dt, 10.0).points[1:]
        np.testing.assert_allclose(got[0, j].numpy(), want, atol=1e-9)


def test_one_second_offset_uses_index_ten():
    bank = MemoryBank.empty(1, 20, D, dtype=torch.float64)
    Y = torch.arange(20, dtype=torch.float64).view(1, 1, 20, 1).expand(1, 1, 20, 2).clone()
    bank = bank.update(Y, torch.zeros(1, 1, D, dtype=torch.float64), pose(0, 0, 0, 0.0))
    out = bank.align_trajectories(pose(0, 0, 0, 1.0), 10.0)
    # point index 10 of the stored (anchor + 20) trajectory is Y[9] = (9, 9)
    torch.testing.assert_close(out[0, 0, 9], torch.zeros(2, dtype=torch.float64))
    torch.testing.assert_close(out[0, 0, 0], torch.full((2,), -9.0, dtype=torch.float64))


def test_empty_and_stale():
    with pytest.raises(EmptyBank):
        empty().align_trajectories(pose(0, 0, 0, 0), 10.0)
    bank = empty().update(*modes(seed=3), pose(0, 0, 0, 0))
    with pytest.raises(StaleEntry):
        bank.align_trajectories(pose(0, 0, 0, K / 10.0), 10.0)
    assert len(bank.evict_stale(pose(0, 0, 0, K / 10.0), 10.0)) == 0
    assert len(bank.evict_stale(pose(0, 0, 0, (K - 1) / 10.0), 10.0)) == 6


def test_relay_identity_at_init():
    torch.manual_seed(0)
    ts = TrajectoryStream(D, K, heads=2).double()
    Y, Fm = modes(seed=4)
    bank = empty().update(*modes(seed=5), pose(1, 2, 0.3, 0.0))
    _, Y2 = ts(Fm, Y, bank, pose(2, 2, 0.4, 0.1), 10.0)
    assert torch.equal(Y2, Y)


def test_empty_bank_skips_relay():
    ts = TrajectoryStream(D, K, heads=2).double()
    Y, Fm = modes(seed=6)
    F2, Y2 = ts(Fm, Y, empty(), pose(0, 0, 0, 0), 10.0)
    assert F2 is Fm and Y2 is Y
    F3, Y3 = ts(Fm, Y, None, pose(0, 0, 0, 0), 10.0)
    assert Y3 is Y


def test_relay_shape_errors():
    ts = TrajectoryStream(D, K, heads=2).double()
    Y, Fm = modes(seed=7)
    with pytest.raises(ShapeMismatch):
        ts.relay(Fm, Y[..., :3, :], Fm, Y)
    with pytest.raises(ShapeMismatch):
        ts.relay(Fm, Y, Fm[:, :2], Y)


def test_trajectory_embedding_is_single_linear():
    te = TrajectoryEmbedding(K, D)
    assert [type(m).__name__ for m in te.modules()] == ["TrajectoryEmbedding", "Linear"]
    assert te.proj.in_features == 2 * K


def test_relay_gradients():
    torch.manual_seed(1)
    ts = TrajectoryStream(D, K, heads=2).double()
    g = torch.Generator().manual_seed(1)
    with torch.no_grad():
        for p in ts.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * 0.3)
    Y, Fm = modes(seed=8)
    Yb, Fb = modes(seed=9, M=4)
    for t in (Y, Fm, Fb, Yb):
        t.requires_grad_(True)
    w = torch.randn(1, 6, K, 2, generator=g, dtype=torch.float64)
    wf = torch.randn(1, 6, D, generator=g, dtype=torch.float64)

    def loss():
        f, y = ts.relay(Fm, Y, Fb, Yb)
        return (y * w).sum() / 10 + (f * wf).sum()

    groups = {k: v for k, v in param_groups(ts).items() if not k.startswith("mln.")}
    groups.update(Y=Y, F_mo=Fm, F_b=Fb, Y_b=Yb)
    worst = directional_check(loss, groups)
    assert max(worst.values()) <= TOL, {k: v for k, v in worst.items() if v > TOL}
