"""Single- and multi-agent forecasting metrics.

Top-k means the k modes with the highest predicted probability (ties broken
toward the lower mode index).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .errors import ShapeMismatch

MISS_THRESHOLD = 2.0


def _check(preds, probs, gt):
    preds, probs, gt = np.asarray(preds, float), np.asarray(probs, float), np.asarray(gt, float)
    if preds.ndim != 3 or preds.shape[-1] != 2 or gt.shape != preds.shape[1:] or probs.shape != preds.shape[:1]:
        raise ShapeMismatch(f"preds {preds.shape}, probs {probs.shape}, gt {gt.shape}")
    return preds, probs, gt


def top_k(probs: np.ndarray, k: int) -> np.ndarray:
    if not 1 <= k <= len(probs):
        raise ShapeMismatch(f"k={k} with {len(probs)} modes")
    return np.argsort(-probs, kind="stable")[:k]


def displacement(preds: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-mode, per-step L2 error (modes, K)."""
    d = preds - gt[None]
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])


def min_fde(preds, probs, gt, k: int = 6) -> float:
    preds, probs, gt = _check(preds, probs, gt)
    sel = top_k(probs, k)
    return float(displacement(preds[sel], gt)[:, -1].min())


def min_ade(preds, probs, gt, k: int = 6) -> float:
    preds, probs, gt = _check(preds, probs, gt)
    sel = top_k(probs, k)
    return float(np.mean(displacement(preds[sel], gt), axis=-1).min())


def b_min_fde(preds, probs, gt, k: int = 6) -> float:
    """minFDE_k plus (1 - p)^2, p the probability of the mode achieving it."""
    preds, probs, gt = _check(preds, probs, gt)
    sel = top_k(probs, k)
    fde = displacement(preds[sel], gt)[:, -1]
    j = int(np.argmin(fde))
    return float(fde[j] + (1.0 - probs[sel][j]) ** 2)


def miss_rate(min_fdes: Sequence[float], threshold: float = MISS_THRESHOLD) -> float:
    """Fraction of scenes whose minFDE strictly exceeds ``threshold``."""
    v = np.asarray(min_fdes, dtype=float)
    if v.size == 0:
        return 0.0
    return float(np.mean(v > threshold))


@dataclass
class SceneRecord:
    scene: str
    minADE_1: float
    minFDE_1: float
    minADE_6: float
    minFDE_6: float
    b_minFDE_6: float


@dataclass
class MetricReport:
    minADE_1: float
    minFDE_1: float
    MR_1: float
    minADE_6: float
    minFDE_6: float
    MR_6: float
    b_minFDE_6: float
    count: int
    records: List[SceneRecord] = field(default_factory=list)
    meta: Dict[str, object] = field(default_factory=dict)

    def summary(self) -> Dict[str, float]:
        return {k: v for k, v in asdict(self).items() if k not in ("records", "meta")}

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())


def evaluate_predictions(preds: np.ndarray, probs: np.ndarray, gts: np.ndarray,
                         names: Sequence[str] = None) -> MetricReport:
    """Metrics over N scenes: preds (N, modes, K, 2), probs (N, modes), gts (N, K, 2)."""
    names = names or [str(i) for i in range(len(preds))]
    recs = []
    for name, p, pr, g in zip(names, preds, probs, gts):
        k6 = min(6, len(pr))
        recs.append(SceneRecord(name, min_ade(p, pr, g, 1), min_fde(p, pr, g, 1),
                                min_ade(p, pr, g, k6), min_fde(p, pr, g, k6), b_min_fde(p, pr, g, k6)))

    def avg(attr):
        return float(np.mean([getattr(r, attr) for r in recs])) if recs else 0.0

    return MetricReport(
        minADE_1=avg("minADE_1"), minFDE_1=avg("minFDE_1"), MR_1=miss_rate([r.minFDE_1 for r in recs]),
        minADE_6=avg("minADE_6"), minFDE_6=avg("minFDE_6"), MR_6=miss_rate([r.minFDE_6 for r in recs]),
        b_minFDE_6=avg("b_minFDE_6"), count=len(recs), records=recs)


def multi_agent_metrics(scenes, k: int = 6):
    """Average over actors within each scene, then over scenes.

    ``scenes`` is a list of per-scene lists of ``(preds, probs, gt)`` for each
    scored actor. Returns ``(avgMinFDE_k, avgMinADE_k, actorMR_k)``; actorMR
    is the fraction of all scored actors that are missed.
    """
    fdes, ades, all_fde = [], [], []
    for actors in scenes:
        f = [min_fde(p, pr, g, k) for p, pr, g in actors]
        a = [min_ade(p, pr, g, k) for p, pr, g in actors]
        fdes.append(np.mean(f))
        ades.append(np.mean(a))
        all_fde.extend(f)
    return float(np.mean(fdes)), float(np.mean(ades)), miss_rate(all_fde)
