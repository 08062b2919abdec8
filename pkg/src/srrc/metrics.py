"""Per-timestep confusion counts, mean F1 and run aggregation."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return asdict(self)


def confusion(pred, truth) -> Confusion:
    p = np.asarray(pred).reshape(-1)
    d = np.asarray(truth).reshape(-1)
    if p.size != d.size:
        raise ValueError(f"prediction length {p.size} != truth length {d.size}")
    p = p == 1
    d = d == 1
    return Confusion(
        tp=int(np.sum(p & d)),
        fp=int(np.sum(p & ~d)),
        fn=int(np.sum(~p & d)),
        tn=int(np.sum(~p & ~d)),
    )


def _f1(hits: int, fp: int, fn: int) -> float:
    denom = 2 * hits + fp + fn
    return 0.0 if denom == 0 else 2 * hits / denom


def f1_anomaly(c: Confusion) -> float:
    return _f1(c.tp, c.fp, c.fn)


def f1_normal(c: Confusion) -> float:
    return _f1(c.tn, c.fp, c.fn)


def mean_f1(c: Confusion) -> float:
    """Average of the normal-class and anomaly-class F1; a 0/0 class F1 counts as 0."""
    return 0.5 * (f1_normal(c) + f1_anomaly(c))


@dataclass(frozen=True)
class RunSummary:
    values: tuple
    mean: float
    std: float
    stderr: float

    @property
    def run_count(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict:
        return {"values": list(self.values), "mean": self.mean, "std": self.std,
                "stderr": self.stderr, "run_count": self.run_count}


def aggregate_runs(values) -> RunSummary:
    """Mean, sample std (n-1; 0 for a single run) and standard error."""
    v = [float(x) for x in values]
    if not v:
        raise ValueError("aggregate_runs needs at least one value")
    n = len(v)
    mean = statistics.fmean(v)
    std = statistics.stdev(v) if n > 1 else 0.0
    return RunSummary(tuple(v), mean, std, std / math.sqrt(n))
