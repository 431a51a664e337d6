"""Online vs offline latency of the final-segment forecast.

Online reuses the stream state cached from earlier segments and processes
only the newest one; offline recomputes the whole sequence from scratch.
"""
from __future__ import annotations

import gc
import platform
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np
import torch

from .model import RealMotion, SegmentBatch


@dataclass
class BenchResult:
    mode: str
    times: List[float]
    prediction: np.ndarray = field(repr=False)

    @property
    def median(self) -> float:
        return float(np.median(self.times))

    @property
    def iqr(self) -> float:
        q1, q3 = np.percentile(self.times, [25, 75])
        return float(q3 - q1)

    def summary(self) -> dict:
        return {"mode": self.mode, "median_ms": 1e3 * self.median, "iqr_ms": 1e3 * self.iqr,
                "rel_iqr": self.iqr / self.median, "repetitions": len(self.times)}


def hardware_descriptor() -> str:
    return (f"{platform.machine()} {platform.processor() or 'cpu'} | {platform.system()} {platform.release()} "
            f"| python {platform.python_version()} | torch {torch.__version__} threads={torch.get_num_threads()}")


@torch.no_grad()
def latency_bench(model: RealMotion, segments: List[SegmentBatch], mode: str = "online",
                  repetitions: int = 100, warmup: int = 10) -> BenchResult:
    if mode not in ("online", "offline"):
        raise ValueError(f"unknown mode {mode!r}")
    model.eval()
    cached = None
    if mode == "online" and len(segments) > 1:
        cached = model.forward_sequence(segments[:-1])[-1].state

    def run():
        if mode == "online":
            return model.forward_segment(segments[-1], cached)
        return model.forward_sequence(segments)[-1]

    for _ in range(warmup):
        run()
    times = []
    out = None
    gc_was = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repetitions):
            t0 = time.perf_counter()
            out = run()
            times.append(time.perf_counter() - t0)
    finally:
        if gc_was:
            gc.enable()
    return BenchResult(mode, times, out.refined.Y_mo.numpy().copy())


def compare(model: RealMotion, segments: List[SegmentBatch], repetitions: int = 100, warmup: int = 10) -> dict:
    """Bench both modes on one sequence and check they agree bit for bit."""
    on = latency_bench(model, segments, "online", repetitions, warmup)
    off = latency_bench(model, segments, "offline", repetitions, warmup)
    return {"online": on, "offline": off, "identical": bool(np.array_equal(on.prediction, off.prediction)),
            "hardware": hardware_descriptor()}
