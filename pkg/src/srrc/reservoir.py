"""Leaky echo-state reservoirs driven by the raw series, the saliency map, or both."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .saliency import SaliencyMap
from .series import LabeledSeries, atomic_write_text

MAX_REDRAWS = 100
# Below this the sparsified matrix is treated as nilpotent.
_RADIUS_ZERO = 1e-12


@dataclass(frozen=True)
class ReservoirParams:
    size: int = 100
    leak_rate: float = 0.5
    sparsity: float = 0.1
    spectral_radius: float = 0.9
    input_scale_series: float = 1.0
    input_scale_saliency: float = 1.0
    seed: int = 0
    washout: int = 0

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"reservoir size must be a positive integer, got {self.size}")
        if not 0.0 <= self.leak_rate <= 1.0:
            raise ValueError(f"leak_rate must lie in [0, 1], got {self.leak_rate}")
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError(f"sparsity (density) must lie in (0, 1], got {self.sparsity}")
        if not self.spectral_radius > 0:
            raise ValueError(f"spectral_radius must be positive, got {self.spectral_radius}")
        if self.input_scale_series < 0 or self.input_scale_saliency < 0:
            raise ValueError("input scales must be nonnegative")
        if self.washout < 0:
            raise ValueError("washout must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReservoirWeights:
    W: np.ndarray
    W_in: np.ndarray
    W_S: np.ndarray
    params: Optional[ReservoirParams] = None

    @property
    def size(self) -> int:
        return self.W.shape[0]


def spectral_radius(W: np.ndarray) -> float:
    """Largest eigenvalue modulus (dense LAPACK eigensolver)."""
    W = np.asarray(W, dtype=float)
    if W.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(W))))


def _draw_recurrent(N: int, density: float, rng: np.random.Generator) -> np.ndarray:
    W0 = rng.uniform(-1.0, 1.0, size=(N, N))
    n_zero = math.floor((1.0 - density) * N * N)
    if n_zero:
        flat = W0.reshape(-1)
        flat[rng.permutation(N * N)[:n_zero]] = 0.0
    return W0


def init_weights(params: ReservoirParams) -> ReservoirWeights:
    """Draw W, W_in and W_S for ``params``; fully determined by ``params.seed``.

    W starts as a uniform [-1, 1] matrix, has floor((1 - density) N^2) entries
    zeroed at random positions, and is rescaled to the target spectral radius.
    A nilpotent draw is retried with an advanced seed.
    """
    N = params.size
    for attempt in range(MAX_REDRAWS):
        rng = np.random.default_rng([params.seed, attempt])
        W0 = _draw_recurrent(N, params.sparsity, rng)
        rho = spectral_radius(W0)
        if rho > _RADIUS_ZERO:
            break
    else:
        raise RuntimeError(
            f"could not draw a recurrent matrix with nonzero spectral radius "
            f"in {MAX_REDRAWS} attempts (N={N}, density={params.sparsity})"
        )
    W = W0 * (params.spectral_radius / rho)
    W_in = rng.uniform(-params.input_scale_series, params.input_scale_series, size=N)
    W_S = rng.uniform(-params.input_scale_saliency, params.input_scale_saliency, size=N)
    for a in (W, W_in, W_S):
        a.setflags(write=False)
    return ReservoirWeights(W, W_in, W_S, params)


def _drive(drive: np.ndarray, w: ReservoirWeights, leak: float,
           x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Leaky-tanh recursion given the precomputed (T, N) input term."""
    if not np.all(np.isfinite(drive)):
        raise ValueError("reservoir input contains non-finite values")
    T, N = drive.shape
    if N != w.size:
        raise ValueError(f"input term has width {N}, reservoir has {w.size} units")
    W = np.ascontiguousarray(w.W)
    states = np.empty((T, N))
    x = np.zeros(N) if x0 is None else np.asarray(x0, dtype=float).copy()
    keep = 1.0 - leak
    for t in range(T):
        x = keep * x + leak * np.tanh(drive[t] + W @ x)
        states[t] = x
    return states


def _values(obj) -> np.ndarray:
    if isinstance(obj, (LabeledSeries, SaliencyMap)):
        return obj.values
    return np.asarray(obj, dtype=float).reshape(-1)


def run_rc(series, w: ReservoirWeights, params: ReservoirParams) -> np.ndarray:
    u = _values(series)
    return _drive(np.outer(u, w.W_in), w, params.leak_rate)


def run_sr_rc(saliency, w: ReservoirWeights, params: ReservoirParams) -> np.ndarray:
    s = _values(saliency)
    return _drive(np.outer(s, w.W_S), w, params.leak_rate)


def run_multi_sr_rc(series, saliency, w: ReservoirWeights, params: ReservoirParams) -> np.ndarray:
    u, s = _values(series), _values(saliency)
    if u.size != s.size:
        raise ValueError(f"series length {u.size} != saliency length {s.size}")
    return _drive(np.outer(u, w.W_in) + np.outer(s, w.W_S), w, params.leak_rate)


def save_weights(w: ReservoirWeights, path: Union[str, os.PathLike]) -> None:
    """CSV snapshot: provenance comment lines, then W row-major, W_in, W_S."""
    lines = []
    if w.params is not None:
        lines.append("# params " + json.dumps(w.params.to_dict(), sort_keys=True))
    lines.append(f"# N {w.size}")
    for row in w.W:
        lines.append(",".join(repr(float(v)) for v in row))
    lines.append(",".join(repr(float(v)) for v in w.W_in))
    lines.append(",".join(repr(float(v)) for v in w.W_S))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_weights(path: Union[str, os.PathLike]) -> ReservoirWeights:
    params = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# params "):
            params = ReservoirParams(**json.loads(line[len("# params "):]))
        elif line and not line.startswith("#"):
            rows.append([float(v) for v in line.split(",")])
    N = len(rows) - 2
    if N < 1 or any(len(r) != N for r in rows):
        raise ValueError(f"{path}: malformed weight snapshot")
    return ReservoirWeights(np.array(rows[:N]), np.array(rows[N]), np.array(rows[N + 1]), params)
