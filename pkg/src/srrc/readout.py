"""Logistic readouts for the reservoir variants and the logistic baselines."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .series import atomic_write_text

RIDGE = 1e-8
GRAD_TOL = 1e-6
MAX_ITER = 10_000
# Stop once the loss has moved by less than STALL_RTOL (relative) for STALL_ITERS steps.
STALL_RTOL = 1e-13
STALL_ITERS = 25


class Variant(str, Enum):
    SR_LOGI = "sr_logi"
    MULTI_SR_LOGI = "multi_sr_logi"
    RC = "rc"
    SR_RC = "sr_rc"
    MULTI_SR_RC = "multi_sr_rc"

    @property
    def uses_reservoir(self) -> bool:
        return self in (Variant.RC, Variant.SR_RC, Variant.MULTI_SR_RC)

    @property
    def uses_saliency(self) -> bool:
        return self is not Variant.RC

    @property
    def uses_series(self) -> bool:
        return self in (Variant.MULTI_SR_LOGI, Variant.RC, Variant.MULTI_SR_RC)

    @property
    def label(self) -> str:
        return {
            Variant.SR_LOGI: "SR-Logi",
            Variant.MULTI_SR_LOGI: "Multi-SR-Logi",
            Variant.RC: "RC",
            Variant.SR_RC: "SR-RC",
            Variant.MULTI_SR_RC: "Multi-SR-RC",
        }[self]


class ReadoutError(ValueError):
    pass


@dataclass(frozen=True)
class ClassWeights:
    w1: float
    w0: float
    n1: int
    n0: int


def compute_class_weights(labels) -> ClassWeights:
    """Per-class weights inversely proportional to class frequency."""
    d = np.asarray(labels)
    n1 = int(np.sum(d == 1))
    n0 = int(np.sum(d == 0))
    if n1 < 1 or n0 < 1:
        raise ReadoutError(f"class weighting needs both classes present (n1={n1}, n0={n0})")
    n = n1 + n0
    return ClassWeights(n / (2 * n1), n / (2 * n0), n1, n0)


@dataclass
class ReadoutModel:
    coefficients: np.ndarray
    bias: float
    threshold: float = 0.5
    variant: Optional[str] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(self.coefficients)) and np.isfinite(self.bias)):
            raise ReadoutError("model parameters must be finite")
        if not 0.0 <= self.threshold <= 1.0:
            raise ReadoutError(f"threshold must lie in [0, 1], got {self.threshold}")

    @property
    def dim(self) -> int:
        return self.coefficients.size

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "coefficients": [float(c) for c in self.coefficients],
            "bias": float(self.bias),
            "threshold": float(self.threshold),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReadoutModel":
        return cls(np.array(d["coefficients"], dtype=float), float(d["bias"]),
                   float(d["threshold"]), d.get("variant"), dict(d.get("metadata", {})))

    def save(self, path: Union[str, os.PathLike]) -> None:
        atomic_write_text(Path(path), json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "ReadoutModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _design(features: np.ndarray) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ReadoutError(f"features must be 2-D, got shape {X.shape}")
    return X


def _sample_weights(labels: np.ndarray, weights: Optional[ClassWeights]) -> np.ndarray:
    if weights is None:
        return np.ones(labels.size)
    return np.where(labels == 1, weights.w1, weights.w0)


def logistic_loss(params: np.ndarray, X: np.ndarray, d: np.ndarray,
                  weights: Optional[ClassWeights] = None, ridge: float = 0.0) -> float:
    """Summed (weighted) negative log-likelihood; params = [coefficients..., bias].

    ln y and ln(1 - y) are evaluated as -log(1 + e^-z) and -log(1 + e^z), which
    stays finite without clipping the probabilities.
    """
    z = X @ params[:-1] + params[-1]
    s = _sample_weights(d, weights)
    nll = np.sum(s * (d * np.logaddexp(0.0, -z) + (1 - d) * np.logaddexp(0.0, z)))
    return float(nll + 0.5 * ridge * np.dot(params[:-1], params[:-1]))


def logistic_grad(params: np.ndarray, X: np.ndarray, d: np.ndarray,
                  weights: Optional[ClassWeights] = None, ridge: float = 0.0) -> np.ndarray:
    z = X @ params[:-1] + params[-1]
    r = _sample_weights(d, weights) * (expit(z) - d)
    g = np.empty(params.size)
    g[:-1] = X.T @ r + ridge * params[:-1]
    g[-1] = r.sum()
    return g


def _hessian(params, X, d, weights, ridge):
    z = X @ params[:-1] + params[-1]
    y = expit(z)
    c = _sample_weights(d, weights) * y * (1 - y)
    Xb = np.column_stack([X, np.ones(X.shape[0])])
    H = (Xb * c[:, None]).T @ Xb
    H[np.arange(X.shape[1]), np.arange(X.shape[1])] += ridge
    return H


@dataclass
class FitResult:
    model: ReadoutModel
    converged: bool
    iterations: int
    grad_norm: float
    loss_history: list


def fit_logistic(features, labels, weights: Optional[ClassWeights] = None, *,
                 threshold: float = 0.5, variant: Optional[str] = None,
                 ridge: float = RIDGE, tol: float = GRAD_TOL, max_iter: int = MAX_ITER,
                 return_result: bool = False):
    """Maximum-likelihood logistic fit by damped Newton steps with Armijo backtracking.

    Stops when the gradient infinity-norm drops below ``tol``. A run that hits
    ``max_iter``, or whose loss has stalled at floating-point resolution
    (ill-conditioned, nearly collinear features), still returns its model with
    ``converged=False`` in the metadata. The loss never increases between
    iterations.
    """
    X = _design(features)
    d = np.asarray(labels, dtype=float).reshape(-1)
    if X.shape[0] != d.size:
        raise ReadoutError(f"{X.shape[0]} feature rows but {d.size} labels")
    if not np.all(np.isfinite(X)):
        raise ReadoutError("features contain non-finite values")
    if not np.all((d == 0) | (d == 1)):
        raise ReadoutError("labels must be 0/1")
    if d.min() == d.max():
        raise ReadoutError("training labels contain a single class")

    D = X.shape[1]
    params = np.zeros(D + 1)
    loss = logistic_loss(params, X, d, weights, ridge)
    history = [loss]
    g = logistic_grad(params, X, d, weights, ridge)
    converged = False
    it = 0
    stalled = 0
    while it < max_iter:
        gnorm = float(np.max(np.abs(g)))
        if gnorm < tol:
            converged = True
            break
        it += 1
        H = _hessian(params, X, d, weights, ridge)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, g, rcond=None)[0]
        slope = float(g @ step)
        if not slope < 0:
            step, slope = -g, -float(g @ g)
        t = 1.0
        while True:
            cand = params + t * step
            cand_loss = logistic_loss(cand, X, d, weights, ridge)
            if cand_loss <= loss + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                cand, cand_loss = params, loss
                break
        if cand is params:
            # no further descent representable in floating point
            break
        stalled = stalled + 1 if loss - cand_loss <= STALL_RTOL * max(1.0, abs(loss)) else 0
        params, loss = cand, cand_loss
        history.append(loss)
        g = logistic_grad(params, X, d, weights, ridge)
        if stalled >= STALL_ITERS:
            break
    gnorm = float(np.max(np.abs(g)))
    converged = converged or gnorm < tol

    meta = {
        "converged": bool(converged),
        "iterations": it,
        "grad_norm": gnorm,
        "stalled": stalled >= STALL_ITERS,
        "class_weighted": weights is not None,
        "n_train": int(d.size),
    }
    model = ReadoutModel(params[:-1].copy(), float(params[-1]), threshold, variant, meta)
    if return_result:
        return FitResult(model, bool(converged), it, gnorm, history)
    return model


def predict_proba(model: ReadoutModel, features) -> np.ndarray:
    X = _design(features)
    if X.shape[1] != model.dim:
        raise ReadoutError(f"model expects {model.dim} features, got {X.shape[1]}")
    return expit(X @ model.coefficients + model.bias)


def threshold_predict(probs, threshold: float) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ReadoutError(f"threshold must lie in [0, 1], got {threshold}")
    return (np.asarray(probs) >= threshold).astype(np.int8)


def build_features(variant: Union[Variant, str], series=None, saliency=None,
                   states: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-timestep feature rows for ``variant``.

    SR-Logi uses [S_t], Multi-SR-Logi [S_t, u_t], the reservoir variants x_t.
    """
    variant = Variant(variant)

    def vals(obj):
        return None if obj is None else np.asarray(getattr(obj, "values", obj), dtype=float).reshape(-1)

    u, s = vals(series), vals(saliency)
    if variant.uses_reservoir:
        if states is None:
            raise ReadoutError(f"{variant.label} features need reservoir states")
        return np.asarray(states, dtype=float)
    if s is None:
        raise ReadoutError(f"{variant.label} features need a saliency map")
    if variant is Variant.SR_LOGI:
        return s[:, None]
    if u is None:
        raise ReadoutError(f"{variant.label} features need the original series")
    if u.size != s.size:
        raise ReadoutError("series and saliency lengths differ")
    return np.column_stack([s, u])


def variants_from(names: Sequence[str]) -> list:
    return [Variant(n) for n in names]
