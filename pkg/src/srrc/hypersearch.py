"""Sequential model-based hyperparameter search (GP surrogate + expected improvement).

The objective is maximized. Points are handled internally in the unit cube
and mapped to the search bounds on the way out. Every trial is appended to an
optional JSON-lines log; re-running with the same seed and log resumes by
replaying the logged values instead of re-evaluating them.
"""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .readout import Variant

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dimension:
    name: str
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"dimension {self.name!r}: need low < high, got [{self.low}, {self.high}]")


# Parameter names match ReservoirParams fields; "threshold" is the decision threshold.
SEARCH_BOUNDS = {
    "spectral_radius": (0.01, 3.0),
    "leak_rate": (0.0, 1.0),
    "sparsity": (0.01, 1.0),
    "input_scale_series": (0.01, 5.0),
    "input_scale_saliency": (0.01, 5.0),
    "threshold": (0.01, 1.0),
}

VARIANT_DIMENSIONS = {
    Variant.SR_LOGI: ("threshold",),
    Variant.MULTI_SR_LOGI: ("threshold",),
    Variant.RC: ("input_scale_series", "spectral_radius", "leak_rate", "sparsity"),
    Variant.SR_RC: ("input_scale_saliency", "spectral_radius", "leak_rate", "sparsity"),
    Variant.MULTI_SR_RC: ("input_scale_series", "input_scale_saliency", "spectral_radius",
                          "leak_rate", "sparsity"),
}


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple

    def __post_init__(self):
        if not self.dimensions:
            raise ValueError("search space has no dimensions")
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names in {names}")

    @classmethod
    def for_variant(cls, variant: Union[Variant, str], overrides: Optional[dict] = None) -> "SearchSpace":
        bounds = {**SEARCH_BOUNDS, **(overrides or {})}
        return cls(tuple(Dimension(n, *bounds[n]) for n in VARIANT_DIMENSIONS[Variant(variant)]))

    @property
    def names(self) -> list:
        return [d.name for d in self.dimensions]

    @property
    def ndim(self) -> int:
        return len(self.dimensions)

    def to_point(self, z: np.ndarray) -> dict:
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        return {d.name: float(d.low + zi * (d.high - d.low)) for d, zi in zip(self.dimensions, z)}

    def to_unit(self, point: dict) -> np.ndarray:
        return np.array([(point[d.name] - d.low) / (d.high - d.low) for d in self.dimensions])

    def contains(self, point: dict) -> bool:
        return all(d.low <= point[d.name] <= d.high for d in self.dimensions)


@dataclass
class TrialRecord:
    index: int
    params: dict
    value: Optional[float]
    seed: int
    phase: str
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.value is not None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float, xi: float = 0.01) -> np.ndarray:
    sigma = np.maximum(sigma, 1e-12)
    imp = mu - best - xi
    zscore = imp / sigma
    return imp * norm.cdf(zscore) + sigma * norm.pdf(zscore)


def _fit_gp(Z: np.ndarray, y: np.ndarray, seed: int):
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.gaussian_process import GaussianProcessRegressor
    from sklearn.gaussian_process.kernels import ConstantKernel, Matern, WhiteKernel

    kernel = (ConstantKernel(1.0, (1e-3, 1e3))
              * Matern(length_scale=np.full(Z.shape[1], 0.3), length_scale_bounds=(1e-2, 1e2), nu=2.5)
              + WhiteKernel(1e-4, (1e-8, 1e-1)))
    gp = GaussianProcessRegressor(kernel=kernel, normalize_y=True, n_restarts_optimizer=2,
                                  random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        warnings.simplefilter("ignore", UserWarning)
        gp.fit(Z, y)
    return gp


def _propose(gp, best: float, ndim: int, rng: np.random.Generator, restarts: int = 5,
             n_candidates: int = 2000) -> np.ndarray:
    def neg_ei(z):
        mu, sd = gp.predict(z.reshape(1, -1), return_std=True)
        return -float(expected_improvement(mu, sd, best)[0])

    cands = rng.random((n_candidates, ndim))
    mu, sd = gp.predict(cands, return_std=True)
    ei = expected_improvement(mu, sd, best)
    order = np.argsort(-ei, kind="stable")
    best_z, best_val = cands[order[0]], -float(ei[order[0]])
    for z0 in cands[order[:restarts]]:
        res = minimize(neg_ei, z0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * ndim)
        if res.fun < best_val:
            best_z, best_val = np.clip(res.x, 0.0, 1.0), float(res.fun)
    return best_z


def _load_log(path: Optional[Path]) -> list:
    if path is None or not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def optimize(space: SearchSpace, objective: Callable[[dict], float], budget: int = 50, seed: int = 0,
             strategy: str = "bayes", n_init: Optional[int] = None, restarts: int = 5,
             log_path: Optional[Union[str, os.PathLike]] = None):
    """Maximize ``objective`` over ``space`` within ``budget`` evaluations.

    ``strategy`` is ``"bayes"`` (random initial design, then GP/EI proposals)
    or ``"random"``. Returns ``(best_params, trials)``; an objective that raises
    or returns a non-finite value leaves a failed trial in the log.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if strategy not in ("bayes", "random"):
        raise ValueError(f"unknown strategy {strategy!r}")
    n_init = max(5, budget // 5) if n_init is None else max(1, n_init)
    n_init = min(n_init, budget) if strategy == "bayes" else budget

    path = Path(log_path) if log_path is not None else None
    previous = _load_log(path)
    if path is not None and not previous:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("")

    init_Z = np.random.default_rng([seed, 0]).random((n_init, space.ndim))
    trials: list = []
    for i in range(budget):
        ok = [t for t in trials if t.ok]
        if i < n_init or len(ok) < 2:
            z = init_Z[i] if i < n_init else np.random.default_rng([seed, 2, i]).random(space.ndim)
            phase = "init" if i < n_init else "random"
        else:
            Z = np.array([space.to_unit(t.params) for t in ok])
            y = np.array([t.value for t in ok])
            gp = _fit_gp(Z, y, seed=(seed * 7919 + i) % (2**31))
            z = _propose(gp, float(y.max()), space.ndim, np.random.default_rng([seed, 1, i]), restarts)
            phase = "model"
        point = space.to_point(z)

        if i < len(previous):
            rec = previous[i]
            if any(not math.isclose(rec["params"][k], point[k], rel_tol=1e-9, abs_tol=1e-12) for k in point):
                raise RuntimeError(f"trial log diverges from this search at trial {i}; "
                                   "was it written with a different seed or space?")
            trial = TrialRecord(i, rec["params"], rec["value"], rec["seed"], rec["phase"], rec.get("error"))
        else:
            value, err = None, None
            try:
                v = float(objective(point))
                if math.isfinite(v):
                    value = v
                else:
                    err = f"non-finite objective value {v}"
            except Exception as exc:  # noqa: BLE001 - any objective failure is a failed trial
                err = f"{type(exc).__name__}: {exc}"
            if err:
                log.warning("trial %d failed: %s", i, err)
            trial = TrialRecord(i, point, value, int(seed), phase, err)
            if path is not None:
                with path.open("a") as fh:
                    fh.write(trial.to_json() + "\n")
        trials.append(trial)

    ok = [t for t in trials if t.ok]
    if not ok:
        raise RuntimeError("every trial failed")
    best = max(ok, key=lambda t: t.value)
    return dict(best.params), trials


def best_so_far(trials: Sequence[TrialRecord]) -> list:
    out, cur = [], -math.inf
    for t in trials:
        if t.ok and t.value > cur:
            cur = t.value
        out.append(cur)
    return out
