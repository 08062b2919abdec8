"""Experiment configuration and the end-to-end detection pipeline.

One run: (optional) min-max normalization, saliency map, reservoir states,
logistic readout fitted on the training segment, thresholding, and scoring on
the validation and test segments. Runs are seeded from a master seed so that a
config plus seed determines every reported number.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import yaml

from . import benchgen
from .benchgen import BenchmarkSpec
from .hypersearch import SearchSpace, optimize
from .metrics import aggregate_runs, confusion, f1_anomaly, f1_normal, mean_f1
from .readout import (Variant, build_features, compute_class_weights, fit_logistic,
                      predict_proba, threshold_predict)
from .reservoir import ReservoirParams, init_weights, run_multi_sr_rc, run_rc, run_sr_rc
from .saliency import SaliencyConfig, SaliencyMap, build_saliency_map
from .series import LabeledSeries, atomic_write_text, load_csv, minmax_normalize, split_lengths

log = logging.getLogger(__name__)

PURPOSES = {"reservoir": 1, "benchmark": 2, "optimizer": 3}
RESERVOIR_THRESHOLD = 0.5


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


def derive_seed(master: int, run: int, purpose: str, n: int = 1):
    """Stable per-(run, purpose) seeds from the master seed."""
    state = np.random.SeedSequence([int(master), int(run), PURPOSES[purpose]]).generate_state(n)
    seeds = [int(s) for s in state]
    return seeds[0] if n == 1 else seeds


@dataclass(frozen=True)
class SearchConfig:
    enabled: bool = False
    budget: int = 50
    strategy: str = "bayes"
    tuning_seeds: int = 3
    n_init: Optional[int] = None

    def __post_init__(self):
        if self.budget < 1 or self.tuning_seeds < 1:
            raise ConfigError("search budget and tuning_seeds must be >= 1")
        if self.strategy not in ("bayes", "random"):
            raise ConfigError(f"unknown search strategy {self.strategy!r}")


@dataclass(frozen=True)
class DatasetConfig:
    path: str
    schema: Optional[dict] = None


@dataclass(frozen=True)
class ExperimentConfig:
    variant: Variant = Variant.MULTI_SR_RC
    saliency: SaliencyConfig = field(default_factory=SaliencyConfig)
    reservoir: ReservoirParams = field(default_factory=ReservoirParams)
    threshold: float = 0.5
    benchmark: Optional[BenchmarkSpec] = None
    dataset: Optional[DatasetConfig] = None
    run_count: int = 10
    fractions: tuple = (0.49, 0.21, 0.30)
    normalize: str = "auto"
    class_weighted: Optional[bool] = None
    regenerate_per_run: bool = True
    seed: int = 0
    search: SearchConfig = field(default_factory=SearchConfig)
    name: str = "task"

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        for key, typ in (("saliency", SaliencyConfig), ("reservoir", ReservoirParams),
                         ("dataset", DatasetConfig), ("search", SearchConfig)):
            val = getattr(self, key)
            if isinstance(val, dict):
                object.__setattr__(self, key, typ(**val))
        if isinstance(self.benchmark, dict):
            object.__setattr__(self, "benchmark", BenchmarkSpec.from_dict(self.benchmark))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if self.run_count < 1:
            raise ConfigError("run_count must be >= 1")
        if (self.benchmark is None) == (self.dataset is None):
            raise ConfigError("exactly one of 'benchmark' or 'dataset' must be configured")
        if self.normalize not in ("auto", "none", "full", "train"):
            raise ConfigError(f"normalize must be auto/none/full/train, got {self.normalize!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if len(self.fractions) != 3 or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError("fractions must be three values summing to 1")

    @property
    def normalization(self) -> str:
        if self.normalize != "auto":
            return self.normalize
        return "full" if self.dataset is not None else "none"

    @property
    def weighted(self) -> bool:
        if self.class_weighted is not None:
            return bool(self.class_weighted)
        return self.dataset is not None

    @property
    def decision_threshold(self) -> float:
        return RESERVOIR_THRESHOLD if self.variant.uses_reservoir else self.threshold

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "variant": self.variant.value,
            "saliency": self.saliency.to_dict(),
            "reservoir": self.reservoir.to_dict(),
            "threshold": self.threshold,
            "benchmark": None if self.benchmark is None else self.benchmark.to_dict(),
            "dataset": None if self.dataset is None else asdict(self.dataset),
            "run_count": self.run_count,
            "fractions": list(self.fractions),
            "normalize": self.normalize,
            "class_weighted": self.class_weighted,
            "regenerate_per_run": self.regenerate_per_run,
            "seed": self.seed,
            "search": asdict(self.search),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {"name", "variant", "saliency", "reservoir", "threshold", "benchmark", "dataset",
                 "run_count", "fractions", "normalize", "class_weighted", "regenerate_per_run",
                 "seed", "search", "variants", "tasks", "out"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for k in ("variants", "tasks", "out"):
            d.pop(k, None)
        try:
            if "saliency" in d:
                d["saliency"] = SaliencyConfig(**(d["saliency"] or {}))
            if "reservoir" in d:
                d["reservoir"] = ReservoirParams(**(d["reservoir"] or {}))
            if d.get("benchmark") is not None:
                d["benchmark"] = BenchmarkSpec.from_dict(d["benchmark"])
            if d.get("dataset") is not None:
                d["dataset"] = DatasetConfig(**d["dataset"])
            if "search" in d:
                d["search"] = SearchConfig(**(d["search"] or {}))
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def with_params(self, point: dict) -> "ExperimentConfig":
        """Apply a search point (ReservoirParams field names plus 'threshold')."""
        point = dict(point)
        thr = point.pop("threshold", self.threshold)
        res = replace(self.reservoir, **point) if point else self.reservoir
        return replace(self, reservoir=res, threshold=thr)


def load_config(path: Union[str, os.PathLike]) -> dict:
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a key-value mapping")
    return data


def series_hash(series: LabeledSeries) -> str:
    h = hashlib.sha256(np.ascontiguousarray(series.values, dtype="<f8").tobytes())
    if series.labels is not None:
        h.update(np.ascontiguousarray(series.labels, dtype=np.int8).tobytes())
    return h.hexdigest()


def prepare_series(cfg: ExperimentConfig, run: int) -> LabeledSeries:
    if cfg.dataset is not None:
        series = load_csv(cfg.dataset.path, cfg.dataset.schema)
    else:
        spec = cfg.benchmark
        if cfg.regenerate_per_run:
            b, a = derive_seed(cfg.seed, run, "benchmark", 2)
            spec = spec.reseeded(b, a)
        series = benchgen.generate(spec, name=cfg.name)
    if series.labels is None:
        raise ConfigError("the pipeline needs labeled data")
    mode = cfg.normalization
    if mode == "full":
        series = minmax_normalize(series)
    elif mode == "train":
        n_train = split_lengths(len(series), cfg.fractions)[0]
        series = minmax_normalize(series, series.values[:n_train])
    return series


def _saliency_cache_path(cache_dir: Path, series: LabeledSeries, scfg: SaliencyConfig) -> Path:
    key = hashlib.sha256((series_hash(series) + json.dumps(scfg.to_dict(), sort_keys=True)).encode())
    return cache_dir / f"saliency-{key.hexdigest()[:24]}.npy"


def compute_saliency(series: LabeledSeries, scfg: SaliencyConfig,
                     cache_dir: Optional[Union[str, os.PathLike]] = None) -> SaliencyMap:
    if cache_dir is None:
        return build_saliency_map(series, scfg)
    path = _saliency_cache_path(Path(cache_dir), series, scfg)
    if path.exists():
        return SaliencyMap(np.load(path))
    smap = build_saliency_map(series, scfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.stem + f".tmp{os.getpid()}.npy")
    np.save(tmp, smap.values)
    os.replace(tmp, path)
    return smap


def reservoir_states(variant: Variant, series: LabeledSeries, smap: Optional[SaliencyMap],
                     params: ReservoirParams) -> np.ndarray:
    w = init_weights(params)
    if variant is Variant.RC:
        return run_rc(series, w, params)
    if variant is Variant.SR_RC:
        return run_sr_rc(smap, w, params)
    return run_multi_sr_rc(series, smap, w, params)


@dataclass
class RunOutcome:
    probabilities: np.ndarray
    predictions: np.ndarray
    scores: dict
    model: object


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - tagged and re-raised
        raise StageError(name, exc) from exc


def _segment_scores(pred, truth) -> dict:
    c = confusion(pred, truth)
    return {"confusion": c.to_dict(), "mean_f1": mean_f1(c),
            "f1_normal": f1_normal(c), "f1_anomaly": f1_anomaly(c)}


def features_for(cfg: ExperimentConfig, series: LabeledSeries, reservoir_seed: int,
                 smap: Optional[SaliencyMap] = None, cache_dir=None) -> np.ndarray:
    v = cfg.variant
    if v.uses_saliency and smap is None:
        smap = _stage("saliency", compute_saliency, series, cfg.saliency, cache_dir)
    states = None
    if v.uses_reservoir:
        params = replace(cfg.reservoir, seed=int(reservoir_seed))
        states = _stage("reservoir", reservoir_states, v, series, smap, params)
    return _stage("features", build_features, v, series, smap, states)


def fit_and_score(cfg: ExperimentConfig, series: LabeledSeries, X: np.ndarray) -> RunOutcome:
    n_train, n_val, _ = split_lengths(len(series), cfg.fractions)
    d = series.labels
    start = min(cfg.reservoir.washout, n_train - 1) if cfg.variant.uses_reservoir else 0
    Xtr, dtr = X[start:n_train], d[start:n_train]
    weights = _stage("readout", compute_class_weights, dtr) if cfg.weighted else None
    model = _stage("readout", fit_logistic, Xtr, dtr, weights,
                   threshold=cfg.decision_threshold, variant=cfg.variant.value)
    probs = predict_proba(model, X)
    pred = threshold_predict(probs, model.threshold)
    a, b = n_train, n_train + n_val
    scores = {
        "validation": _segment_scores(pred[a:b], d[a:b]),
        "test": _segment_scores(pred[b:], d[b:]),
        "fit": {k: model.metadata[k] for k in ("converged", "iterations", "grad_norm")},
    }
    return RunOutcome(probs, pred, scores, model)


def run_once(cfg: ExperimentConfig, series: LabeledSeries, reservoir_seed: int,
             smap: Optional[SaliencyMap] = None, cache_dir=None) -> RunOutcome:
    X = features_for(cfg, series, reservoir_seed, smap, cache_dir)
    return fit_and_score(cfg, series, X)


def _run_index(args):
    cfg, i, cache_dir = args
    series = _stage("data", prepare_series, cfg, i)
    rseed = derive_seed(cfg.seed, i, "reservoir")
    out = run_once(cfg, series, rseed, cache_dir=cache_dir)
    return {
        "run": i,
        "seeds": {"reservoir": rseed,
                  "benchmark": (derive_seed(cfg.seed, i, "benchmark", 2)
                                if cfg.benchmark is not None and cfg.regenerate_per_run else None)},
        "dataset_sha256": series_hash(series),
        **out.scores,
    }


def run_experiment(cfg: ExperimentConfig, threads: int = 1, cache_dir=None) -> dict:
    """Execute ``run_count`` seeded runs and assemble the metrics report."""
    jobs = [(cfg, i, cache_dir) for i in range(cfg.run_count)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(_run_index, jobs))
    else:
        runs = [_run_index(j) for j in jobs]
    summary = aggregate_runs([r["test"]["mean_f1"] for r in runs])
    return {
        "variant": cfg.variant.value,
        "config": cfg.to_dict(),
        "runs": runs,
        "summary": summary.to_dict(),
        "summary_f1_anomaly": aggregate_runs([r["test"]["f1_anomaly"] for r in runs]).to_dict(),
    }


def make_objective(cfg: ExperimentConfig, series: Optional[LabeledSeries] = None):
    """Validation mean F1 averaged over ``search.tuning_seeds`` tuning instances.

    Each instance pairs its own reservoir seed with, for regenerated
    benchmarks, its own benchmark draw. All draws come from the optimizer seed
    stream, so they never coincide with the evaluation runs.
    """
    k_seeds = cfg.search.tuning_seeds
    res_seeds = [derive_seed(cfg.seed, 1000 + k, "optimizer") for k in range(k_seeds)]
    if series is not None:
        datasets = [series] * k_seeds
    elif cfg.dataset is not None or not cfg.regenerate_per_run:
        datasets = [prepare_series(cfg, 0)] * k_seeds
    else:
        datasets = []
        for k in range(k_seeds):
            b, a = derive_seed(cfg.seed, 2000 + k, "optimizer", 2)
            fixed = replace(cfg, benchmark=cfg.benchmark.reseeded(b, a), regenerate_per_run=False)
            datasets.append(prepare_series(fixed, 0))
    smaps = [build_saliency_map(x, cfg.saliency) if cfg.variant.uses_saliency else None for x in datasets]
    fixed_X = None
    if not cfg.variant.uses_reservoir:
        fixed_X = [features_for(cfg, x, 0, m) for x, m in zip(datasets, smaps)]

    def objective(point: dict) -> float:
        trial = cfg.with_params(point)
        vals = []
        for k in range(k_seeds):
            if fixed_X is not None:
                if k and datasets[k] is datasets[0]:
                    break  # logistic baselines are deterministic on a shared dataset
                X = fixed_X[k]
            else:
                X = features_for(trial, datasets[k], res_seeds[k], smaps[k])
            vals.append(fit_and_score(trial, datasets[k], X).scores["validation"]["mean_f1"])
        return float(np.mean(vals))

    return objective


def tune(cfg: ExperimentConfig, log_path=None, space: Optional[SearchSpace] = None):
    """Search the variant's hyperparameters; returns (tuned config, best point, trials)."""
    space = space or SearchSpace.for_variant(cfg.variant)
    objective = make_objective(cfg)
    oseed = derive_seed(cfg.seed, 0, "optimizer")
    best, trials = optimize(space, objective, budget=cfg.search.budget, seed=oseed,
                            strategy=cfg.search.strategy, n_init=cfg.search.n_init, log_path=log_path)
    return cfg.with_params(best), best, trials


def variant_configs(base: dict) -> dict:
    """Per-variant configs from a base document with a ``variants`` section."""
    overrides = base.get("variants")
    if not isinstance(overrides, dict):
        raise ConfigError("compare needs a 'variants' mapping with one entry per model variant")
    missing = [v.value for v in Variant if v.value not in overrides]
    if missing:
        raise ConfigError(f"missing variant configs: {', '.join(missing)}")
    extra = sorted(set(overrides) - {v.value for v in Variant})
    if extra:
        raise ConfigError(f"unknown variants in config: {', '.join(extra)}")
    out = {}
    for v in Variant:
        doc = {k: val for k, val in base.items() if k not in ("variants", "tasks", "out")}
        ov = overrides[v.value] or {}
        for key, val in ov.items():
            if isinstance(val, dict) and isinstance(doc.get(key), dict):
                doc[key] = {**doc[key], **val}
            else:
                doc[key] = val
        doc["variant"] = v.value
        out[v] = doc
    return out


def _task_docs(base: dict) -> list:
    tasks = base.get("tasks")
    if not tasks:
        return [dict(base)]
    docs = []
    for t in tasks:
        doc = {k: v for k, v in base.items() if k not in ("tasks", "benchmark", "dataset")}
        doc.update(t)
        docs.append(doc)
    return docs


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.3f}"


def compare(base: dict, threads: int = 1, out_dir: Optional[Union[str, os.PathLike]] = None) -> dict:
    """Run all five variants on each task; one table row per task."""
    rows = []
    for task_doc in _task_docs(base):
        per_variant = variant_configs(task_doc)
        cfgs = {v: ExperimentConfig.from_dict(doc) for v, doc in per_variant.items()}
        cells, hashes, tuned = {}, {}, {}
        for v, cfg in cfgs.items():
            if cfg.search.enabled:
                lp = None if out_dir is None else Path(out_dir) / f"trials-{cfg.name}-{v.value}.jsonl"
                cfg, best, _ = tune(cfg, log_path=lp)
                tuned[v.value] = best
            report = run_experiment(cfg, threads=threads)
            hashes[v.value] = [r["dataset_sha256"] for r in report["runs"]]
            cells[v.value] = report["summary"]
        if len({tuple(h) for h in hashes.values()}) != 1:
            raise ConfigError(f"task {task_doc.get('name', 'task')!r}: variants saw different datasets")
        rounded = {k: round(c["mean"], 3) for k, c in cells.items()}
        top = max(rounded.values())
        best = [] if len(set(rounded.values())) == 1 else [k for k, m in rounded.items() if m == top]
        rows.append({"task": task_doc.get("name", "task"), "cells": cells, "best": best, "tuned": tuned})
    table = {"variants": [v.value for v in Variant], "rows": rows}
    if out_dir is not None:
        write_compare(table, out_dir)
    return table


def write_compare(table: dict, out_dir: Union[str, os.PathLike]) -> None:
    out = Path(out_dir)
    atomic_write_text(out / "compare.json", json.dumps(table, indent=2, sort_keys=True) + "\n")
    header = ["task"] + [Variant(v).label for v in table["variants"]]
    lines = [",".join(header)]
    for row in table["rows"]:
        cells = []
        for v in table["variants"]:
            c = row["cells"][v]
            text = format_cell(c["mean"], c["std"])
            cells.append(f"*{text}*" if v in row["best"] else text)
        lines.append(",".join([row["task"]] + cells))
    atomic_write_text(out / "compare.csv", "\n".join(lines) + "\n")


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
