import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from realmotion.errors import ShapeMismatch
from realmotion.metrics import (b_min_fde, evaluate_predictions, min_ade, min_fde, miss_rate, multi_agent_metrics,
                                top_k)


# ---- brute-force oracles: explicit loops, same elementwise formulas

def oracle_rank(probs):
    """rank[i] = number of modes strictly ahead of i (higher prob, or equal prob and lower index)."""
    M = len(probs)
    return [sum(1 for j in range(M) if probs[j] > probs[i] or (probs[j] == probs[i] and j < i)) for i in range(M)]


def oracle_dist(p, g):
    dx, dy = p[0] - g[0], p[1] - g[1]
    return math.sqrt(dx * dx + dy * dy)


def oracle(preds, probs, gt, k):
    rank = oracle_rank(probs)
    best_fde = best_ade = best_b = None
    chosen = [i for i in range(len(probs)) if rank[i] < k]
    fdes = {i: oracle_dist(preds[i][-1], gt[-1]) for i in chosen}
    for i in chosen:
        ade = float(np.mean(np.array([oracle_dist(preds[i][t], gt[t]) for t in range(len(gt))])))
        best_ade = ade if best_ade is None or ade < best_ade else best_ade
    j = min(chosen, key=lambda i: (fdes[i], chosen.index(i)))
    # ties in FDE: first among chosen ordered by rank
    ties = sorted([i for i in chosen if fdes[i] == fdes[j]], key=lambda i: rank[i])
    j = ties[0]
    best_fde = fdes[j]
    best_b = fdes[j] + (1.0 - probs[j]) ** 2
    return best_fde, best_ade, best_b


def random_case(rng):
    M, K = 6, int(rng.integers(1, 8))
    gt = rng.normal(size=(K, 2)) * 5
    preds = gt[None] + rng.normal(size=(M, K, 2)) * rng.uniform(0.1, 5)
    logits = rng.normal(size=M)
    if rng.random() < 0.2:
        logits[rng.integers(M)] = logits[0]  # probability ties
    probs = np.exp(logits) / np.exp(logits).sum()
    return preds, probs, gt


def test_metrics_match_brute_force_1k():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        preds, probs, gt = random_case(rng)
        for k in (1, 6):
            f, a, b = oracle(preds, probs, gt, k)
            assert min_fde(preds, probs, gt, k) == f
            assert min_ade(preds, probs, gt, k) == a
            assert b_min_fde(preds, probs, gt, k) == b


def test_top_k_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        probs = rng.integers(0, 4, size=6) / 4.0
        rank = oracle_rank(list(probs))
        for k in range(1, 7):
            assert sorted(top_k(probs, k).tolist()) == sorted(i for i in range(6) if rank[i] < k)


def test_min_fde_examples():
    gt = np.zeros((3, 2))
    preds = np.zeros((6, 3, 2))
    preds[:, -1, 0] = [1.0, 3.0, 4.0, 5.0, 6.0, 7.0]
    probs = np.array([0.1, 0.5, 0.1, 0.1, 0.1, 0.1])
    assert min_fde(preds, probs, gt, 6) == 1.0
    assert min_fde(preds, probs, gt, 1) == 3.0


def test_min_ade_examples():
    gt = np.random.default_rng(2).normal(size=(10, 2))
    preds = np.repeat(gt[None], 6, axis=0)
    probs = np.full(6, 1 / 6)
    assert min_ade(preds, probs, gt) == 0.0
    shifted = preds + np.array([0.0, 1.0])
    assert min_ade(shifted, probs, gt) == pytest.approx(1.0, abs=1e-12)


def test_miss_rate_examples():
    assert miss_rate([2.5]) == 1.0
    assert miss_rate([2.0]) == 0.0
    vals = [0.5, 2.0, 2.01, 7.0, 1.9]
    assert miss_rate(vals) == sum(v > 2.0 for v in vals) / len(vals)
    assert miss_rate([]) == 0.0


def test_b_min_fde_examples():
    gt = np.zeros((2, 2))
    preds = np.zeros((6, 2, 2))
    preds[:, -1, 0] = [1.0, 5, 5, 5, 5, 5]
    probs = np.array([0.5, 0.1, 0.1, 0.1, 0.1, 0.1])
    assert b_min_fde(preds, probs, gt) == 1.25
    one = np.array([1.0, 0, 0, 0, 0, 0])
    assert b_min_fde(preds, one, gt) == min_fde(preds, one, gt, 6)


def test_multi_agent_examples():
    rng = np.random.default_rng(3)
    p, pr, g = random_case(rng)
    f, a, mr = multi_agent_metrics([[(p, pr, g)]])
    assert f == min_fde(p, pr, g) and a == min_ade(p, pr, g) and mr == miss_rate([f])
    gt = np.zeros((2, 2))
    mk = lambda d: (np.concatenate([np.zeros((6, 1, 2)), np.tile([[[d, 0.0]]], (6, 1, 1))], axis=1), np.full(6, 1 / 6), gt)
    f, _, mr = multi_agent_metrics([[mk(1.0), mk(3.0)]])
    assert f == 2.0 and mr == 0.5


def test_multi_agent_batch_vs_hand():
    rng = np.random.default_rng(4)
    scenes = [[random_case(rng) for _ in range(rng.integers(1, 4))] for _ in range(50)]
    # force equal K inside a scene is not required; each actor is scored alone
    f, a, mr = multi_agent_metrics(scenes)
    per_scene_f = [np.mean([min_fde(*c) for c in s]) for s in scenes]
    per_scene_a = [np.mean([min_ade(*c) for c in s]) for s in scenes]
    all_f = [min_fde(*c) for s in scenes for c in s]
    assert f == float(np.mean(per_scene_f)) and a == float(np.mean(per_scene_a))
    assert mr == float(np.mean(np.array(all_f) > 2.0))


@given(st.floats(-math.pi, math.pi), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 10_000))
def test_rigid_invariance(theta, tx, ty, seed):
    preds, probs, gt = random_case(np.random.default_rng(seed))
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    move = lambda x: x @ R.T + np.array([tx, ty])
    for fn in (min_fde, min_ade, b_min_fde):
        a, b = fn(preds, probs, gt), fn(move(preds), probs, move(gt))
        assert a >= 0 and abs(a - b) <= 1e-9


@given(st.integers(0, 10_000))
def test_min_fde_monotone_in_k(seed):
    preds, probs, gt = random_case(np.random.default_rng(seed))
    assert min_fde(preds, probs, gt, 6) <= min_fde(preds, probs, gt, 1)


def test_report():
    rng = np.random.default_rng(5)
    cases = [random_case(np.random.default_rng(i)) for i in range(20)]
    K = 4
    preds = np.stack([np.resize(c[0], (6, K, 2)) for c in cases])
    probs = np.stack([c[1] for c in cases])
    gts = np.stack([np.resize(c[2], (K, 2)) for c in cases])
    rep = evaluate_predictions(preds, probs, gts)
    assert rep.count == 20 and 0 <= rep.MR_6 <= rep.MR_1 <= 1
    assert rep.minFDE_6 == float(np.mean([min_fde(p, q, g) for p, q, g in zip(preds, probs, gts)]))
    assert '"minFDE_6"' in rep.to_json()


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        min_fde(np.zeros((6, 5, 2)), np.ones(6) / 6, np.zeros((4, 2)))
    with pytest.raises(ShapeMismatch):
        min_fde(np.zeros((6, 5, 2)), np.ones(6) / 6, np.zeros((5, 2)), k=7)
