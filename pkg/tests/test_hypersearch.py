import json
import math

import numpy as np
import pytest

from srrc.hypersearch import (Dimension, SearchSpace, SEARCH_BOUNDS, best_so_far, expected_improvement, optimize)
from srrc.readout import Variant


def _gamma_space():
    return SearchSpace((Dimension("spectral_radius", 0.01, 3.0),))


def test_variant_spaces():
    assert SearchSpace.for_variant("sr_logi").names == ["threshold"]
    assert set(SearchSpace.for_variant(Variant.RC).names) == {
        "input_scale_series", "spectral_radius", "leak_rate", "sparsity"}
    assert SearchSpace.for_variant("multi_sr_rc").ndim == 5
    for name, (lo, hi) in SEARCH_BOUNDS.items():
        assert lo < hi


def test_space_validation():
    with pytest.raises(ValueError):
        Dimension("x", 1.0, 1.0)
    with pytest.raises(ValueError):
        SearchSpace(())
    with pytest.raises(ValueError):
        SearchSpace((Dimension("x", 0, 1), Dimension("x", 0, 2)))


def test_budget_one_returns_the_single_point():
    best, trials = optimize(_gamma_space(), lambda p: -p["spectral_radius"], budget=1, seed=3)
    assert len(trials) == 1 and best == trials[0].params


def test_quadratic_matches_grid_oracle():
    f = lambda p: -(p["spectral_radius"] - 1.5) ** 2  # noqa: E731
    grid = np.linspace(0.01, 3.0, 30001)
    oracle = grid[np.argmax(-(grid - 1.5) ** 2)]
    best, _ = optimize(_gamma_space(), f, budget=40, seed=0)
    assert abs(best["spectral_radius"] - oracle) < 0.15


def test_random_strategy_quadratic():
    f = lambda p: -(p["spectral_radius"] - 1.5) ** 2  # noqa: E731
    best, trials = optimize(_gamma_space(), f, budget=40, seed=1, strategy="random")
    assert all(t.phase == "init" for t in trials)
    assert abs(best["spectral_radius"] - 1.5) < 0.3


def test_determinism_bounds_and_monotone_best():
    space = SearchSpace.for_variant("multi_sr_rc")
    f = lambda p: math.sin(3 * p["leak_rate"]) + p["sparsity"] - 0.1 * p["spectral_radius"]  # noqa: E731
    _, a = optimize(space, f, budget=14, seed=5)
    _, b = optimize(space, f, budget=14, seed=5)
    assert [t.to_json() for t in a] == [t.to_json() for t in b]
    assert all(space.contains(t.params) for t in a)
    bsf = best_so_far(a)
    assert all(x <= y for x, y in zip(bsf, bsf[1:]))
    assert [t.phase for t in a[:5]] == ["init"] * 5 and a[-1].phase == "model"


def test_failed_trials_are_recorded():
    def f(p):
        if p["spectral_radius"] > 2.0:
            raise RuntimeError("boom")
        if p["spectral_radius"] < 0.3:
            return float("nan")
        return p["spectral_radius"]

    best, trials = optimize(_gamma_space(), f, budget=15, seed=2)
    failed = [t for t in trials if not t.ok]
    assert failed and all(t.error for t in failed)
    assert best["spectral_radius"] <= 2.0


def test_log_resume(tmp_path):
    calls = []

    def f(p):
        calls.append(p)
        return -abs(p["spectral_radius"] - 1.0)

    log = tmp_path / "trials.jsonl"
    best_full, full = optimize(_gamma_space(), f, budget=10, seed=4)
    calls.clear()
    optimize(_gamma_space(), f, budget=6, seed=4, log_path=log)
    assert len(calls) == 6 and len(log.read_text().splitlines()) == 6
    calls.clear()
    best, resumed = optimize(_gamma_space(), f, budget=10, seed=4, log_path=log)
    assert len(calls) == 4
    assert [t.to_json() for t in resumed] == [t.to_json() for t in full] and best == best_full
    assert [json.loads(x)["index"] for x in log.read_text().splitlines()] == list(range(10))
    with pytest.raises(RuntimeError, match="diverges"):
        optimize(_gamma_space(), f, budget=10, seed=99, log_path=log)


def test_expected_improvement_properties():
    mu = np.array([0.0, 0.5, 1.0])
    ei = expected_improvement(mu, np.full(3, 0.1), best=0.5)
    assert np.all(ei >= 0) and np.all(np.diff(ei) > 0)
    assert expected_improvement(np.array([1.0]), np.array([0.0]), 0.0, xi=0.0)[0] == pytest.approx(1.0)
