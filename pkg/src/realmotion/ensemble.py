"""Merge the modes of several sub-models by k-means over flattened trajectories."""
from __future__ import annotations

from typing import Tuple

import numpy as np

from .errors import ShapeMismatch


def _repair(labels: np.ndarray, dist: np.ndarray, k: int) -> np.ndarray:
    """Give every empty cluster the farthest point of a cluster that can spare one."""
    n = len(labels)
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        own = dist[np.arange(n), labels]
        own = np.where(counts[labels] > 1, own, -np.inf)
        labels[int(np.argmax(own))] = c
    return labels


def kmeans(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 50, tol: float = 1e-6):
    """Lloyd's algorithm with k-means++ seeding.

    An emptied cluster takes the farthest point of any cluster with more than
    one member.
    Returns ``(labels, centroids)`` where each centroid is the plain mean of
    its members.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    rng = np.random.default_rng(seed)
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        i = int(rng.choice(n, p=d2 / total)) if total > 0 else int(rng.integers(n))
        centroids[c] = X[i]
        d2 = np.minimum(d2, np.sum((X - centroids[c]) ** 2, axis=1))
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        dist = np.sum((X[:, None, :] - centroids[None]) ** 2, axis=-1)
        labels = _repair(np.argmin(dist, axis=1), dist, k)
        new = np.stack([X[labels == c].mean(axis=0) for c in range(k)])
        shift = np.max(np.abs(new - centroids))
        centroids = new
        if shift < tol:
            break
    # final assignment and exact member means
    dist = np.sum((X[:, None, :] - centroids[None]) ** 2, axis=-1)
    labels = _repair(np.argmin(dist, axis=1), dist, k)
    centroids = np.stack([X[labels == c].mean(axis=0) for c in range(k)])
    return labels, centroids


def ensemble(predictions: np.ndarray, k: int = 6, seed: int = 0, max_iter: int = 50,
             tol: float = 1e-6) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """predictions (n_models * modes, K, 2) -> (k, K, 2) trajectories, (k,) probs, labels.

    Output trajectories are the member means of each cluster; probabilities
    are proportional to cluster size.
    """
    P = np.asarray(predictions, dtype=np.float64)
    if P.ndim != 3 or P.shape[-1] != 2 or len(P) < k:
        raise ShapeMismatch(f"expected (N>={k}, K, 2) trajectories, got {P.shape}")
    labels, cent = kmeans(P.reshape(len(P), -1), k, seed, max_iter, tol)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    return cent.reshape(k, *P.shape[1:]), counts / counts.sum(), labels
