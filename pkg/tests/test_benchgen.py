import json
import math

import numpy as np
import pytest

from srrc.benchgen import (AnomalySpec, BaselineSpec, BenchmarkSpec, Component, a1_standin, gen_baseline, generate,
                           inject_contextual, inject_global, inject_seasonal, inject_shapelet, preset_baseline,
                           sample_anomaly_points, shapelet_values)
from srrc.series import LabeledSeries, split_lengths


def _clean(name, length=3000):
    return gen_baseline(preset_baseline(name, length=length, noise=0.0))


def test_single_sine_closed_forms():
    u = _clean("single_sine").values
    assert u[0] == 0.0
    assert abs(u[25]) < 1e-12
    assert u[50 // 8] == pytest.approx(math.sin(2 * math.pi * 0.04 * 6))


def test_four_sine_t0():
    u0 = _clean("four_sine").values[0]
    assert u0 == pytest.approx(sum(math.sin(p) for p in (0, math.pi / 8, math.pi / 4, math.pi / 2)), abs=1e-12)
    assert u0 == pytest.approx(2.089790, abs=1e-6)


def test_irrational_preset_records_full_precision():
    spec = preset_baseline("four_sine_irrational")
    freqs = [c["frequency"] for c in json.loads(json.dumps(spec.to_dict()))["components"]]
    assert freqs == [math.sqrt(2), math.sqrt(5), math.sqrt(7), math.sqrt(11)]


def test_baseline_with_cosine_term():
    spec = BaselineSpec(length=10, components=(Component(0.0, 2.0, 0.1, 0.0),), noise=0.0)
    np.testing.assert_allclose(gen_baseline(spec).values, 2 * np.cos(2 * np.pi * 0.1 * np.arange(10)), atol=1e-12)


def test_noise_is_variance_by_default():
    u = gen_baseline(BaselineSpec(length=200_000, components=(Component(0.0, 0.0, 0.0, 0.0),))).values
    assert np.std(u) == pytest.approx(math.sqrt(0.05), rel=0.01)
    u = gen_baseline(BaselineSpec(length=200_000, components=(Component(0.0, 0.0, 0.0, 0.0),),
                                  noise_is_variance=False)).values
    assert np.std(u) == pytest.approx(0.05, rel=0.01)


def test_sampling():
    assert sample_anomaly_points(100, 1.0, 0).tolist() == list(range(100))
    np.testing.assert_array_equal(sample_anomaly_points(3000, 0.05, 7), sample_anomaly_points(3000, 0.05, 7))
    counts = np.array([sample_anomaly_points(3000, 0.05, s).size for s in range(1000)])
    se = math.sqrt(3000 * 0.05 * 0.95) / math.sqrt(1000)
    assert abs(counts.mean() - 150) < 3 * se
    with pytest.raises(ValueError):
        sample_anomaly_points(10, 0.0, 0)


def test_global_standardized():
    rng = np.random.default_rng(0)
    x = rng.normal(size=500)
    x = (x - x.mean()) / x.std()
    s = inject_global(LabeledSeries(x), [3, 10, 400], 3.5, seed=1)
    np.testing.assert_allclose(np.abs(s.values[[3, 10, 400]]), 3.5, atol=1e-12)
    assert s.labels.sum() == 3
    mask = np.ones(500, bool)
    mask[[3, 10, 400]] = False
    assert s.values[mask].tobytes() == x[mask].tobytes()


def test_global_edge_cases():
    base = LabeledSeries(np.arange(10.0), np.zeros(10))
    same = inject_global(base, [], 3.5)
    assert same.values.tobytes() == base.values.tobytes() and not same.labels.any()
    const = inject_global(LabeledSeries(np.full(10, 2.0)), [4], 3.5)
    assert const.values[4] == 2.0 and const.labels[4] == 1


def test_contextual_ramp_by_hand():
    x = np.arange(30, dtype=float) * 0.5
    s = inject_contextual(LabeledSeries(x), [15], 3.5, 5, seed=0)
    nb = x[10:21]
    mu = sum(nb) / 11
    sd = math.sqrt(sum((v - mu) ** 2 for v in nb) / 11)
    assert abs(s.values[15] - mu) == pytest.approx(3.5 * sd, abs=1e-12)


def test_contextual_edges_and_flat():
    x = np.arange(20, dtype=float)
    s = inject_contextual(LabeledSeries(x), [0], 2.0, 5, seed=3)
    nb = x[0:6]
    assert abs(s.values[0] - nb.mean()) == pytest.approx(2.0 * nb.std(), abs=1e-12)
    flat = inject_contextual(LabeledSeries(np.full(20, 4.0)), [10], 3.5, 5)
    assert flat.values[10] == 4.0


def test_contextual_uses_pre_injection_neighbors():
    x = np.sin(np.arange(40.0))
    both = inject_contextual(LabeledSeries(x), [20, 22], 3.5, 5, seed=5)
    only = inject_contextual(LabeledSeries(x), [22], 3.5, 5, seed=5)
    nb = x[17:28]
    assert abs(both.values[22] - nb.mean()) == pytest.approx(3.5 * nb.std(), abs=1e-12)
    assert abs(only.values[22] - nb.mean()) == pytest.approx(3.5 * nb.std(), abs=1e-12)


def test_shapelet_closed_forms():
    assert shapelet_values(np.array([0.0]))[0] == 0.0
    expect = sum(math.sin(2 * math.pi * 0.04 * (2 * n + 1) * 5) / (2 * n + 1) for n in range(5))
    assert shapelet_values(np.array([5.0]))[0] == pytest.approx(expect, abs=1e-12)


def test_shapelet_truncated_at_end():
    T = 100
    s = inject_shapelet(LabeledSeries(np.zeros(T)), [T - 5], 20, noise_std=0.0)
    assert s.labels.sum() == 5 and s.labels[T - 5:].all()
    np.testing.assert_allclose(s.values[T - 5:], shapelet_values(np.arange(T - 5, T)), atol=0)


def test_shapelet_segment_covers_k_prime_plus_one():
    s = inject_shapelet(LabeledSeries(np.zeros(100)), [10], 20, noise_std=0.0)
    assert np.flatnonzero(s.labels).tolist() == list(range(10, 31))


def test_seasonal_closed_forms():
    single = preset_baseline("single_sine", length=100, noise=0.0)
    s = inject_seasonal(LabeledSeries(np.ones(100)), [0], 30, 3.5, single)
    assert s.values[0] == 0.0
    assert abs(s.values[25]) < 1e-12
    same = inject_seasonal(LabeledSeries(np.ones(100)), [40], 20, 1.0, single)
    np.testing.assert_allclose(same.values[40:61], gen_baseline(single).values[40:61], atol=1e-12)


def test_overlapping_segments_keep_labels():
    s = inject_shapelet(LabeledSeries(np.zeros(60)), [5, 10], 20, noise_std=0.0)
    assert np.flatnonzero(s.labels).tolist() == list(range(5, 31))


@pytest.mark.parametrize("kind", ["global", "contextual", "shapelet", "seasonal"])
def test_generate_label_soundness(kind):
    spec = BenchmarkSpec(preset_baseline("four_sine", length=800, seed=3), AnomalySpec(kind, 0.03, seed=4))
    base = gen_baseline(spec.baseline)
    s = generate(spec)
    changed = s.values != base.values
    assert np.all(s.labels[changed] == 1)
    assert np.all(changed[s.labels == 0] == False)  # noqa: E712
    again = generate(spec)
    assert again.values.tobytes() == s.values.tobytes()


def test_point_fraction_converges():
    fr = [generate(BenchmarkSpec(preset_baseline("single_sine", seed=s), AnomalySpec("global", 0.05, seed=s)))
          .labels.mean() for s in range(200)]
    se = math.sqrt(0.05 * 0.95 / 3000) / math.sqrt(200)
    assert abs(np.mean(fr) - 0.05) < 4 * se


def test_spec_round_trip_and_validation():
    spec = BenchmarkSpec(preset_baseline("four_sine_irrational", seed=5), AnomalySpec("seasonal", 0.02, seed=6))
    assert BenchmarkSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
    with pytest.raises(ValueError):
        AnomalySpec(rate=0.0)
    with pytest.raises(ValueError):
        AnomalySpec(kind="trend")
    with pytest.raises(ValueError):
        preset_baseline("nope")


def test_a1_standin_layout():
    s = a1_standin(seed=2)
    assert len(s) == 1420 and s.timestamps is not None
    assert 0 < s.labels.mean() < 0.05
    a, b, _ = split_lengths(1420)
    assert s.labels[:a].any() and s.labels[a:a + b].any() and s.labels[a + b:].any()
