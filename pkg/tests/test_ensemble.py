import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from realmotion.ensemble import ensemble, kmeans
from realmotion.errors import ShapeMismatch

K = 8


def test_identical_inputs():
    y = np.random.default_rng(0).normal(size=(K, 2))
    out, probs, labels = ensemble(np.repeat(y[None], 36, axis=0))
    assert out.shape == (6, K, 2)
    # a mean of n identical floats can be off by an ulp after rounding the sum
    for t in out:
        np.testing.assert_allclose(t, y, rtol=0, atol=1e-12)
    assert probs.sum() == pytest.approx(1.0)


def test_well_separated_bundles_recover_means():
    rng = np.random.default_rng(1)
    centers = rng.normal(size=(6, K, 2)) * 100
    members = centers[:, None] + rng.normal(size=(6, 6, K, 2)) * 0.1
    bundle = np.repeat(np.arange(6), 6)
    perm = rng.permutation(36)
    X, bundle = members.reshape(36, K, 2)[perm], bundle[perm]
    out, probs, labels = ensemble(X, seed=3)
    want = sorted(X[bundle == b].mean(axis=0).tolist() for b in range(6))
    assert sorted(out.tolist()) == want
    np.testing.assert_array_equal(probs, np.full(6, 1 / 6))


@given(st.integers(0, 10_000), st.integers(6, 40))
def test_outputs_are_exact_member_means(seed, n):
    X = np.random.default_rng(seed).normal(size=(n, K, 2)) * 10
    out, probs, labels = ensemble(X, seed=seed)
    assert set(labels.tolist()) == set(range(6))
    for c in range(6):
        members = X[labels == c]
        np.testing.assert_array_equal(out[c], members.mean(axis=0))
        assert np.all(out[c] >= members.min(axis=0)) and np.all(out[c] <= members.max(axis=0))
        assert probs[c] == pytest.approx(len(members) / n)


def test_deterministic_under_seed():
    X = np.random.default_rng(7).normal(size=(36, K * 2))
    a = kmeans(X, 6, seed=4)
    b = kmeans(X, 6, seed=4)
    np.testing.assert_array_equal(a[0], b[0])


def test_shape_error():
    with pytest.raises(ShapeMismatch):
        ensemble(np.zeros((5, K, 2)))
