import math

import numpy as np
import pytest

from oracles import saliency_map as oracle_map
from oracles import sr_window as oracle_window
from srrc.benchgen import gen_baseline, inject_global, preset_baseline
from srrc.saliency import SaliencyConfig, build_saliency_map, plan_windows, spectral_residual_window


def test_plan_t3000():
    plan = plan_windows(3000, SaliencyConfig())
    assert plan.count == 46
    assert plan.starts[-1] == 2880 and plan.lengths[-1] == 120
    assert plan.truncations[-1] == 8


def test_plan_single_window():
    plan = plan_windows(128, SaliencyConfig())
    assert plan.count == 1 and plan.lengths.tolist() == [128]
    plan = plan_windows(5, SaliencyConfig())
    assert plan.count == 1 and plan.lengths.tolist() == [5]


def test_plan_t200():
    plan = plan_windows(200, SaliencyConfig())
    assert plan.starts.tolist() == [0, 64, 128]
    assert plan.lengths.tolist() == [128, 128, 72]


@pytest.mark.parametrize("T", [1, 2, 63, 64, 65, 127, 128, 129, 191, 192, 193, 1000])
@pytest.mark.parametrize("tau, r", [(128, 0.5), (16, 0.25), (10, 0.0), (7, 0.8)])
def test_plan_covers_everything(T, tau, r):
    cfg = SaliencyConfig(tau=tau, overlap_ratio=r, q=min(3, tau))
    plan = plan_windows(T, cfg)
    cov = plan.coverage(T)
    assert cov.min() >= 1
    assert plan.starts[-1] + plan.lengths[-1] == T
    expected_K = 1 if T <= tau else math.ceil((T - tau) / cfg.step) + 1
    assert plan.count == expected_K


def test_config_validation():
    with pytest.raises(ValueError):
        SaliencyConfig(tau=2, q=3)
    with pytest.raises(ValueError):
        SaliencyConfig(overlap_ratio=1.0)
    with pytest.raises(ValueError):
        SaliencyConfig(tau=4, overlap_ratio=0.9, q=1)  # step floor(0.4) = 0
    with pytest.raises(ValueError):
        SaliencyConfig(log_floor=0)


def test_impulse_window():
    x = np.zeros(8)
    x[0] = 1.0
    out = spectral_residual_window(x)
    np.testing.assert_allclose(out, x, atol=1e-12)
    np.testing.assert_allclose(out, oracle_window(x), atol=1e-12)


@pytest.mark.parametrize("pos", range(8))
def test_impulse_location_preserved(pos):
    x = np.zeros(8)
    x[pos] = 2.5
    out = spectral_residual_window(x)
    assert int(np.argmax(out)) == pos
    np.testing.assert_allclose(out, np.eye(8)[pos], atol=1e-12)


def test_constant_window_is_finite():
    out = spectral_residual_window(np.full(8, 3.0))
    assert np.all(np.isfinite(out)) and np.all(out >= 0)
    # the floored bins carry round-off phases, so only the dominant DC level is pinned down
    np.testing.assert_allclose(out, oracle_window(np.full(8, 3.0)), rtol=1e-2)


def test_zero_window_is_finite():
    out = spectral_residual_window(np.zeros(16))
    assert np.all(np.isfinite(out))


def test_window_shorter_than_q():
    cfg = SaliencyConfig(tau=8, q=5)
    for L in (1, 2, 4):
        x = np.arange(1.0, L + 1)
        np.testing.assert_allclose(spectral_residual_window(x, cfg), oracle_window(x, q=5), atol=1e-9)


def test_sine_window_spike_matches_brute_force():
    t = np.arange(64)
    for spike in (5, 20, 41, 60):
        x = np.sin(2 * np.pi * 0.04 * t)
        x[spike] += 3.5
        fast = spectral_residual_window(x)
        slow = oracle_window(x)
        assert int(np.argmax(fast)) == int(np.argmax(slow))
        assert abs(int(np.argmax(fast)) - spike) <= 1


def test_single_window_map_is_verbatim():
    x = np.random.default_rng(3).normal(size=100)
    np.testing.assert_array_equal(build_saliency_map(x).values, spectral_residual_window(x))


def test_t200_overlap_mean():
    u = np.random.default_rng(4).normal(size=200)
    cfg = SaliencyConfig()
    S = build_saliency_map(u, cfg).values
    w1 = spectral_residual_window(u[0:128], cfg)
    w2 = spectral_residual_window(u[64:192], cfg)
    w3 = spectral_residual_window(u[128:200], cfg)
    np.testing.assert_allclose(S[64:128], (w1[64:128] + w2[0:64]) / 2, rtol=0, atol=1e-15)
    np.testing.assert_allclose(S[:64], w1[:64], atol=0)
    np.testing.assert_allclose(S[128:192], (w2[64:128] + w3[0:64]) / 2, atol=1e-15)
    np.testing.assert_allclose(S[192:], w3[64:], atol=0)
    np.testing.assert_allclose(S, oracle_map(u), atol=1e-9)


def test_spike_at_1500_in_3000():
    base = gen_baseline(preset_baseline("four_sine", seed=7))
    s = inject_global(base, [1500], 3.5, seed=1)
    S = build_saliency_map(s).values
    assert abs(int(np.argmax(S)) - 1500) <= 1


def test_map_nonnegative_and_aligned():
    u = np.random.default_rng(5).normal(size=777)
    S = build_saliency_map(u).values
    assert S.shape == (777,) and np.all(S >= 0) and np.all(np.isfinite(S))


def test_shift_by_step_moves_one_window():
    cfg = SaliencyConfig(tau=32, overlap_ratio=0.5)
    T = 32 * 8
    rng = np.random.default_rng(6)
    base = 0.01 * rng.normal(size=T + cfg.step)
    spike = 40
    a = base[cfg.step:].copy()
    a[spike] += 5
    b = base.copy()
    b[spike + cfg.step] += 5
    Sa = build_saliency_map(a, cfg).values
    Sb = build_saliency_map(b, cfg).values
    # b's windows are a's windows shifted by one; only a's first step samples see one window fewer
    np.testing.assert_allclose(Sb[2 * cfg.step:], Sa[cfg.step:], atol=1e-12)
