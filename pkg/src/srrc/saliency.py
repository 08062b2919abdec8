"""Spectral-residual saliency over sliding, overlapping windows.

Each window is transformed with an unnormalized forward DFT, its
log-amplitude spectrum is flattened by subtracting a local moving average,
and the residual is recombined with the original phase and inverse
transformed (with the 1/L factor). Windows are then stitched back together by
averaging every timestep over the windows that cover it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .series import LabeledSeries


@dataclass(frozen=True)
class SaliencyConfig:
    tau: int = 128
    overlap_ratio: float = 0.5
    q: int = 3
    log_floor: float = 1e-8

    def __post_init__(self):
        if int(self.tau) != self.tau or int(self.q) != self.q:
            raise ValueError("tau and q must be integers")
        if not (self.tau >= self.q >= 1):
            raise ValueError(f"need tau >= q >= 1, got tau={self.tau}, q={self.q}")
        if not (0.0 <= self.overlap_ratio < 1.0):
            raise ValueError(f"overlap_ratio must lie in [0, 1), got {self.overlap_ratio}")
        if self.step < 1:
            raise ValueError(f"tau={self.tau} with overlap {self.overlap_ratio} gives a zero step")
        if not self.log_floor > 0:
            raise ValueError("log_floor must be positive")

    @property
    def step(self) -> int:
        return math.floor(self.tau * (1.0 - self.overlap_ratio))

    def to_dict(self) -> dict:
        return {"tau": self.tau, "overlap_ratio": self.overlap_ratio, "q": self.q, "log_floor": self.log_floor}


@dataclass(frozen=True)
class WindowPlan:
    starts: np.ndarray
    lengths: np.ndarray
    truncations: np.ndarray

    @property
    def count(self) -> int:
        return int(self.starts.size)

    def coverage(self, T: int) -> np.ndarray:
        """Number of windows covering each index."""
        cov = np.zeros(T, dtype=int)
        for t0, L in zip(self.starts, self.lengths):
            cov[t0:t0 + L] += 1
        return cov


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.size


def plan_windows(T: int, cfg: SaliencyConfig) -> WindowPlan:
    if T < 1:
        raise ValueError("series length must be >= 1")
    s, tau = cfg.step, cfg.tau
    K = 1 if T <= tau else math.ceil((T - tau) / s) + 1
    starts = s * np.arange(K)
    ends = np.minimum(starts + tau, T)
    lengths = ends - starts
    return WindowPlan(starts, lengths, tau - lengths)


def _moving_average(x: np.ndarray, q: int) -> np.ndarray:
    """Same-length box filter with edge replication; kernel truncated to len(x)."""
    q = min(q, x.size)
    if q <= 1:
        return x.copy()
    left = (q - 1) // 2
    padded = np.pad(x, (left, q - 1 - left), mode="edge")
    c = np.concatenate(([0.0], np.cumsum(padded)))
    return (c[q:] - c[:-q]) / q


def spectral_residual_window(window, cfg: SaliencyConfig = SaliencyConfig()) -> np.ndarray:
    """Saliency of a single window: |IDFT(exp(R + iP))|."""
    u = np.asarray(window, dtype=float)
    if u.size < 1:
        raise ValueError("window must be non-empty")
    spectrum = np.fft.fft(u)
    log_amp = np.log(np.maximum(np.abs(spectrum), cfg.log_floor))
    residual = log_amp - _moving_average(log_amp, cfg.q)
    phase = np.angle(spectrum)
    return np.abs(np.fft.ifft(np.exp(residual + 1j * phase)))


def build_saliency_map(
    series: Union[LabeledSeries, np.ndarray], cfg: SaliencyConfig = SaliencyConfig()
) -> SaliencyMap:
    u = series.values if isinstance(series, LabeledSeries) else np.asarray(series, dtype=float)
    T = u.size
    plan = plan_windows(T, cfg)
    total = np.zeros(T)
    count = np.zeros(T)
    for t0, L in zip(plan.starts, plan.lengths):
        total[t0:t0 + L] += spectral_residual_window(u[t0:t0 + L], cfg)
        count[t0:t0 + L] += 1
    values = total / count
    values.setflags(write=False)
    return SaliencyMap(values)
