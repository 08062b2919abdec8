"""Command-line entry point: ``srrc <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import benchgen
from .benchgen import BenchmarkSpec
from .metrics import aggregate_runs, confusion, f1_anomaly, f1_normal, mean_f1
from .pipeline import (ConfigError, DatasetConfig, ExperimentConfig, StageError, compare, derive_seed, dump_report,
                       features_for, load_config, run_experiment, tune)
from .readout import ReadoutModel, Variant, compute_class_weights, fit_logistic, predict_proba, threshold_predict
from .reservoir import ReservoirParams
from .saliency import SaliencyConfig, build_saliency_map
from .series import LabeledSeries, atomic_write_text, load_csv, split_lengths, write_csv

log = logging.getLogger("srrc")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_doc(args) -> dict:
    doc = load_config(args.config) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    return doc


def _experiment(args, **overrides) -> ExperimentConfig:
    doc = _config_doc(args)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(doc)


def _write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_generate(args) -> int:
    if args.spec:
        spec = BenchmarkSpec.from_dict(json.loads(Path(args.spec).read_text()))
    else:
        doc = _config_doc(args).get("benchmark") or {}
        base = dict(doc.get("baseline", {}))
        anom = dict(doc.get("anomaly", {}))
        if args.preset:
            base["preset"] = args.preset
        base.setdefault("preset", "four_sine")
        for key, val in (("length", args.length),):
            if val is not None:
                base[key] = val
        for key, val in (("kind", args.kind), ("rate", args.rate)):
            if val is not None:
                anom[key] = val
        if args.seed is not None:
            base.setdefault("seed", args.seed)
            anom.setdefault("seed", args.seed)
        try:
            spec = BenchmarkSpec.from_dict({"baseline": base, "anomaly": anom})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid benchmark spec: {exc}") from exc
    series = benchgen.generate(spec)
    out = _out_dir(args)
    write_csv(series, out / "benchmark.csv")
    _write_json(out / "benchmark.json", spec.to_dict())
    print(f"wrote {len(series)} rows ({int(series.labels.sum())} anomalous) to {out / 'benchmark.csv'}")
    return 0


def _saliency_cfg(args) -> SaliencyConfig:
    doc = (_config_doc(args).get("saliency") or {}) if args.config else {}
    for key in ("tau", "overlap_ratio", "q", "log_floor"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    return SaliencyConfig(**doc)


def cmd_saliency(args) -> int:
    series = load_csv(args.input)
    smap = build_saliency_map(series, _saliency_cfg(args))
    out = _out_dir(args)
    lines = ["index,saliency"] + [f"{i},{float(v)!r}" for i, v in enumerate(smap.values)]
    atomic_write_text(out / "saliency.csv", "\n".join(lines) + "\n")
    print(f"wrote saliency map of length {len(smap)} to {out / 'saliency.csv'}")
    return 0


def _segment_bounds(n: int, segment: str, fractions) -> tuple:
    n_train, n_val, _ = split_lengths(n, fractions)
    return {
        "all": (0, n),
        "train": (0, n_train),
        "validation": (n_train, n_train + n_val),
        "test": (n_train + n_val, n),
    }[segment]


def _normalize_with(series: LabeledSeries, norm) -> LabeledSeries:
    if norm is None:
        return series
    lo, hi = norm
    if hi == lo:
        return series.with_values(np.zeros(len(series)))
    return series.with_values((series.values - lo) / (hi - lo))


def cmd_train(args) -> int:
    cfg = ExperimentConfig.from_dict({**_config_doc(args), "dataset": {"path": args.input},
                                      "benchmark": None})
    series = load_csv(args.input)
    if series.labels is None:
        raise ConfigError("training data needs a label column")
    a, b = _segment_bounds(len(series), args.segment, cfg.fractions)
    norm = None
    if cfg.normalization == "full":
        norm = (float(series.values.min()), float(series.values.max()))
    elif cfg.normalization == "train":
        n_train = split_lengths(len(series), cfg.fractions)[0]
        norm = (float(series.values[:n_train].min()), float(series.values[:n_train].max()))
    series = _normalize_with(series, norm)
    rseed = derive_seed(cfg.seed, 0, "reservoir")
    X = features_for(cfg, series, rseed)
    d = series.labels
    weights = compute_class_weights(d[a:b]) if cfg.weighted else None
    model = fit_logistic(X[a:b], d[a:b], weights, threshold=cfg.decision_threshold, variant=cfg.variant.value)
    doc = {
        "format": "srrc-model/1",
        "variant": cfg.variant.value,
        "readout": model.to_dict(),
        "saliency": cfg.saliency.to_dict(),
        "reservoir": replace(cfg.reservoir, seed=rseed).to_dict(),
        "normalization": None if norm is None else {"min": norm[0], "max": norm[1]},
        "training": {"input": str(args.input), "segment": args.segment, "rows": [a, b],
                     "class_weighted": cfg.weighted},
    }
    out = _out_dir(args)
    _write_json(out / "model.json", doc)
    print(f"trained {cfg.variant.label} readout ({model.dim} features) -> {out / 'model.json'}")
    return 0


def cmd_predict(args) -> int:
    doc = json.loads(Path(args.model).read_text())
    model = ReadoutModel.from_dict(doc["readout"])
    variant = Variant(doc["variant"])
    series = load_csv(args.input)
    norm = doc.get("normalization")
    series = _normalize_with(series, None if norm is None else (norm["min"], norm["max"]))
    cfg = ExperimentConfig(variant=variant, saliency=SaliencyConfig(**doc["saliency"]),
                           reservoir=ReservoirParams(**doc["reservoir"]),
                           dataset=DatasetConfig(str(args.input)), threshold=model.threshold)
    X = features_for(cfg, series, doc["reservoir"]["seed"])
    probs = predict_proba(model, X)
    pred = threshold_predict(probs, model.threshold)
    lines = ["index,probability,prediction"]
    lines += [f"{i},{float(p)!r},{int(y)}" for i, (p, y) in enumerate(zip(probs, pred))]
    out = _out_dir(args)
    atomic_write_text(out / "predictions.csv", "\n".join(lines) + "\n")
    print(f"wrote {len(pred)} predictions ({int(pred.sum())} anomalous) to {out / 'predictions.csv'}")
    return 0


def _read_predictions(path) -> np.ndarray:
    rows = Path(path).read_text().splitlines()[1:]
    return np.array([int(r.split(",")[2]) for r in rows if r.strip()], dtype=np.int8)


def cmd_evaluate(args) -> int:
    truth = load_csv(args.truth)
    if truth.labels is None:
        raise ConfigError(f"{args.truth} has no label column")
    fractions = (0.49, 0.21, 0.30)
    a, b = _segment_bounds(len(truth), args.segment, fractions)
    runs = []
    for i, path in enumerate(args.predictions):
        pred = _read_predictions(path)
        if pred.size != len(truth):
            raise ConfigError(f"{path}: {pred.size} predictions for {len(truth)} truth rows")
        c = confusion(pred[a:b], truth.labels[a:b])
        runs.append({"run": i, "predictions": str(path), "confusion": c.to_dict(), "mean_f1": mean_f1(c),
                     "f1_normal": f1_normal(c), "f1_anomaly": f1_anomaly(c)})
    models = {}
    if args.model:
        doc = json.loads(Path(args.model).read_text())
        models = {"variant": doc.get("variant"), "reservoir": doc.get("reservoir"),
                  "saliency": doc.get("saliency"), "threshold": doc["readout"]["threshold"]}
    report = {
        "truth": str(args.truth),
        "segment": args.segment,
        "runs": runs,
        "summary": aggregate_runs([r["mean_f1"] for r in runs]).to_dict(),
        "model": models,
    }
    out = _out_dir(args)
    _write_json(out / "evaluation.json", report)
    s = report["summary"]
    print(f"mean F1 {s['mean']:.4f} ± {s['std']:.4f} over {len(runs)} run(s)")
    return 0


def cmd_run(args) -> int:
    cfg = _experiment(args)
    if cfg.search.enabled:
        out = _out_dir(args)
        cfg, best, _ = tune(cfg, log_path=out / f"trials-{cfg.variant.value}.jsonl")
        log.info("tuned %s: %s", cfg.variant.value, best)
    report = run_experiment(cfg, threads=args.threads, cache_dir=args.cache_dir)
    out = _out_dir(args)
    atomic_write_text(out / "report.json", dump_report(report))
    s = report["summary"]
    print(f"{cfg.variant.label}: mean F1 {s['mean']:.4f} ± {s['std']:.4f} "
          f"(stderr {s['stderr']:.4f}, {s['run_count']} runs) -> {out / 'report.json'}")
    return 0


def cmd_compare(args) -> int:
    doc = _config_doc(args)
    out = _out_dir(args)
    table = compare(doc, threads=args.threads, out_dir=out)
    for row in table["rows"]:
        cells = "  ".join(
            f"{Variant(v).label}={row['cells'][v]['mean']:.3f}{'*' if v in row['best'] else ''}"
            for v in table["variants"])
        print(f"{row['task']}: {cells}")
    return 0


def cmd_sweep(args) -> int:
    doc = _config_doc(args)
    search = dict(doc.get("search") or {})
    if args.budget is not None:
        search["budget"] = args.budget
    if args.strategy is not None:
        search["strategy"] = args.strategy
    doc["search"] = search
    cfg = ExperimentConfig.from_dict(doc)
    out = _out_dir(args)
    tuned, best, trials = tune(cfg, log_path=out / f"trials-{cfg.variant.value}.jsonl")
    ok = [t for t in trials if t.ok]
    _write_json(out / f"best-{cfg.variant.value}.json",
                {"variant": cfg.variant.value, "best": best,
                 "validation_mean_f1": max(t.value for t in ok), "trials": len(trials),
                 "failed": len(trials) - len(ok), "config": tuned.to_dict()})
    print(f"best {cfg.variant.label} point after {len(trials)} trials: {best}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment config")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="parallel runs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="srrc", description=__doc__, parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="synthesize a benchmark series")
    g.add_argument("--spec", help="replay a benchmark JSON written by a previous generate")
    g.add_argument("--preset", choices=sorted(benchgen.PRESETS))
    g.add_argument("--kind", choices=benchgen.KINDS)
    g.add_argument("--rate", type=float)
    g.add_argument("--length", type=int)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("saliency", parents=[common], help="export a saliency map")
    s.add_argument("--input", required=True)
    s.add_argument("--tau", type=int)
    s.add_argument("--overlap-ratio", dest="overlap_ratio", type=float)
    s.add_argument("--q", type=int)
    s.add_argument("--log-floor", dest="log_floor", type=float)
    s.set_defaults(func=cmd_saliency)

    t = sub.add_parser("train", parents=[common], help="fit a readout on a labeled CSV")
    t.add_argument("--input", required=True)
    t.add_argument("--segment", choices=["train", "all"], default="train")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", parents=[common], help="score a CSV with a trained model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", parents=[common], help="mean F1 of prediction files")
    e.add_argument("--predictions", nargs="+", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--model")
    e.add_argument("--segment", choices=["all", "train", "validation", "test"], default="test")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("run", parents=[common], help="full seeded pipeline, repeated run_count times")
    r.add_argument("--cache-dir", help="cache saliency maps here")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", parents=[common], help="all five variants, one table row per task")
    c.set_defaults(func=cmd_compare)

    w = sub.add_parser("sweep", parents=[common], help="hyperparameter search for one variant")
    w.add_argument("--budget", type=int)
    w.add_argument("--strategy", choices=["bayes", "random"])
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, StageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
