"""Synthetic anomaly benchmark: sinusoidal baselines with injected outliers.

Point-wise kinds (global, contextual) replace single samples; pattern-wise
kinds (shapelet, seasonal) replace segments of k'+1 samples starting at each
selected index, truncated at the end of the series. Later segments overwrite
earlier ones where they overlap. Random streams are keyed by (seed, purpose)
so no two purposes share a stream.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .series import LabeledSeries

KINDS = ("global", "contextual", "shapelet", "seasonal")

# stream purposes
_POINTS, _SIGNS, _SHAPELET_NOISE, _BASELINE_NOISE = 1, 2, 3, 4

FOUR_SINE_FREQS = (0.005, 0.015, 0.02, 0.04)
FOUR_SINE_PHASES = (0.0, math.pi / 8, math.pi / 4, math.pi / 2)
IRRATIONAL_FREQS = (math.sqrt(2), math.sqrt(5), math.sqrt(7), math.sqrt(11))


def _rng(seed: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), purpose])


@dataclass(frozen=True)
class Component:
    amplitude: float = 1.0
    cos_amplitude: float = 0.0
    frequency: float = 0.04
    phase: float = 0.0


@dataclass(frozen=True)
class BaselineSpec:
    length: int = 3000
    components: tuple = (Component(),)
    noise: float = 0.05
    noise_is_variance: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("baseline length must be >= 1")
        comps = tuple(c if isinstance(c, Component) else Component(**c) for c in self.components)
        if not comps:
            raise ValueError("baseline needs at least one component")
        object.__setattr__(self, "components", comps)
        if self.noise < 0:
            raise ValueError("noise parameter must be nonnegative")

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.noise) if self.noise_is_variance else self.noise

    def to_dict(self) -> dict:
        d = asdict(self)
        d["components"] = [asdict(c) for c in self.components]
        return d


PRESETS = {
    "single_sine": (Component(1.0, 0.0, 0.04, 0.0),),
    "four_sine": tuple(Component(1.0, 0.0, f, p) for f, p in zip(FOUR_SINE_FREQS, FOUR_SINE_PHASES)),
    "four_sine_irrational": tuple(
        Component(1.0, 0.0, f, p) for f, p in zip(IRRATIONAL_FREQS, FOUR_SINE_PHASES)
    ),
}


def preset_baseline(name: str, length: int = 3000, seed: int = 0, **kw) -> BaselineSpec:
    try:
        comps = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown baseline preset {name!r}; choose from {sorted(PRESETS)}") from None
    return BaselineSpec(length=length, components=comps, seed=seed, **kw)


@dataclass(frozen=True)
class AnomalySpec:
    kind: str = "global"
    rate: float = 0.05
    magnitude: float = 3.5
    neighborhood: int = 5
    segment_length: int = 20
    wave_count: int = 5
    frequency_scale: float = 3.5
    shapelet_noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"anomaly kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 < self.rate <= 1.0:
            raise ValueError(f"anomaly rate must lie in (0, 1], got {self.rate}")
        if self.neighborhood < 1 or self.segment_length < 1 or self.wave_count < 1:
            raise ValueError("neighborhood, segment_length and wave_count must be positive")
        if self.shapelet_noise_std < 0:
            raise ValueError("shapelet_noise_std must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BenchmarkSpec:
    baseline: BaselineSpec = field(default_factory=BaselineSpec)
    anomaly: AnomalySpec = field(default_factory=AnomalySpec)

    def to_dict(self) -> dict:
        return {"baseline": self.baseline.to_dict(), "anomaly": self.anomaly.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkSpec":
        base = dict(d.get("baseline", {}))
        if "preset" in base:
            name = base.pop("preset")
            base = {**preset_baseline(name).to_dict(), **base}
        if "components" in base:
            base["components"] = tuple(Component(**c) for c in base["components"])
        return cls(BaselineSpec(**base), AnomalySpec(**d.get("anomaly", {})))

    def reseeded(self, baseline_seed: int, anomaly_seed: int) -> "BenchmarkSpec":
        return BenchmarkSpec(replace(self.baseline, seed=int(baseline_seed)),
                             replace(self.anomaly, seed=int(anomaly_seed)))


def _clean_baseline(components: Sequence[Component], t: np.ndarray, freq_scale: float = 1.0,
                    with_phase: bool = True) -> np.ndarray:
    out = np.zeros(t.shape, dtype=float)
    for c in components:
        arg = 2 * math.pi * (freq_scale * c.frequency) * t + (c.phase if with_phase else 0.0)
        out += c.amplitude * np.sin(arg) + c.cos_amplitude * np.cos(arg)
    return out


def gen_baseline(spec: BaselineSpec) -> LabeledSeries:
    t = np.arange(spec.length, dtype=float)
    u = _clean_baseline(spec.components, t)
    if spec.noise_std > 0:
        u = u + _rng(spec.seed, _BASELINE_NOISE).normal(0.0, spec.noise_std, spec.length)
    return LabeledSeries(u, np.zeros(spec.length, dtype=np.int8), "baseline")


def sample_anomaly_points(T: int, rate: float, seed: int) -> np.ndarray:
    """Indices selected by independent Bernoulli(rate) trials per timestep."""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"anomaly rate must lie in (0, 1], got {rate}")
    return np.flatnonzero(_rng(seed, _POINTS).random(T) < rate)


def _signs(n: int, seed: int) -> np.ndarray:
    return np.where(_rng(seed, _SIGNS).random(n) < 0.5, -1.0, 1.0)


def _labels_of(series: LabeledSeries) -> np.ndarray:
    if series.labels is None:
        return np.zeros(len(series), dtype=np.int8)
    return series.labels.copy()


def inject_global(series: LabeledSeries, indices, magnitude: float = 3.5, seed: int = 0) -> LabeledSeries:
    """Replace each selected sample by mean +/- magnitude * std of the whole series."""
    idx = np.asarray(indices, dtype=int)
    u = series.values.copy()
    labels = _labels_of(series)
    mu, sigma = float(np.mean(series.values)), float(np.std(series.values))
    u[idx] = mu + _signs(idx.size, seed) * magnitude * sigma
    labels[idx] = 1
    return LabeledSeries(u, labels, series.name, series.timestamps)


def inject_contextual(series: LabeledSeries, indices, magnitude: float = 3.5, neighborhood: int = 5,
                      seed: int = 0) -> LabeledSeries:
    """Replace each selected sample by local mean +/- magnitude * local std.

    The neighborhood is u[i-k .. i+k] clipped to the series, taken from the
    series before any injection.
    """
    idx = np.asarray(indices, dtype=int)
    src = series.values
    u = src.copy()
    labels = _labels_of(series)
    signs = _signs(idx.size, seed)
    T = src.size
    for sgn, i in zip(signs, idx):
        nb = src[max(0, i - neighborhood):min(T, i + neighborhood + 1)]
        u[i] = nb.mean() + sgn * magnitude * nb.std()
    labels[idx] = 1
    return LabeledSeries(u, labels, series.name, series.timestamps)


def _segments(starts, segment_length: int, T: int):
    for j in np.asarray(starts, dtype=int):
        yield np.arange(j, min(j + segment_length, T - 1) + 1)


def shapelet_values(t: np.ndarray, wave_count: int = 5, amplitude: float = 1.0,
                    base_frequency: float = 0.04) -> np.ndarray:
    """Odd-harmonic partial sum of a square wave, evaluated at absolute times ``t``."""
    out = np.zeros(np.shape(t), dtype=float)
    for n in range(wave_count):
        m = 2 * n + 1
        out += (amplitude / m) * np.sin(2 * math.pi * base_frequency * m * np.asarray(t, dtype=float))
    return out


def inject_shapelet(series: LabeledSeries, starts, segment_length: int = 20, wave_count: int = 5,
                    seed: int = 0, noise_std: float = 1.0) -> LabeledSeries:
    u = series.values.copy()
    labels = _labels_of(series)
    rng = _rng(seed, _SHAPELET_NOISE)
    for seg in _segments(starts, segment_length, u.size):
        u[seg] = shapelet_values(seg, wave_count)
        if noise_std > 0:
            u[seg] += rng.normal(0.0, noise_std, seg.size)
        labels[seg] = 1
    return LabeledSeries(u, labels, series.name, series.timestamps)


def inject_seasonal(series: LabeledSeries, starts, segment_length: int = 20, frequency_scale: float = 3.5,
                    baseline: Optional[BaselineSpec] = None, seed: int = 0) -> LabeledSeries:
    """Replace segments by the noise-free baseline waves at frequencies scaled by ``frequency_scale``.

    The replacement waves carry no phase offset. ``seed`` is accepted for a
    uniform injector signature; the replacement is deterministic.
    """
    baseline = baseline or BaselineSpec()
    u = series.values.copy()
    labels = _labels_of(series)
    for seg in _segments(starts, segment_length, u.size):
        u[seg] = _clean_baseline(baseline.components, seg.astype(float), frequency_scale, with_phase=False)
        labels[seg] = 1
    return LabeledSeries(u, labels, series.name, series.timestamps)


def generate(spec: BenchmarkSpec, name: Optional[str] = None) -> LabeledSeries:
    base = gen_baseline(spec.baseline)
    a = spec.anomaly
    idx = sample_anomaly_points(len(base), a.rate, a.seed)
    if a.kind == "global":
        out = inject_global(base, idx, a.magnitude, a.seed)
    elif a.kind == "contextual":
        out = inject_contextual(base, idx, a.magnitude, a.neighborhood, a.seed)
    elif a.kind == "shapelet":
        out = inject_shapelet(base, idx, a.segment_length, a.wave_count, a.seed, a.shapelet_noise_std)
    else:
        out = inject_seasonal(base, idx, a.segment_length, a.frequency_scale, spec.baseline, a.seed)
    return LabeledSeries(out.values, out.labels, name or f"{a.kind}-{a.rate:g}")


def a1_standin(length: int = 1420, anomaly_rate: float = 0.015, seed: int = 0,
               min_per_split: int = 1) -> LabeledSeries:
    """Hourly-traffic-like series with rare labeled spikes and dips, A1 layout.

    Daily and weekly seasonality on a slow trend with heteroscedastic noise.
    Anomalies are resampled until every 49/21/30 hold-out segment holds at
    least ``min_per_split`` of them.
    """
    from .series import split_lengths

    rng = np.random.default_rng([int(seed), 77])
    t = np.arange(length, dtype=float)
    level = 1000 + 0.05 * t
    daily = 300 * np.sin(2 * math.pi * t / 24 - math.pi / 2)
    weekly = 120 * np.sin(2 * math.pi * t / 168)
    u = level + daily + weekly
    u = u + rng.normal(0.0, 25.0 + 0.02 * np.abs(daily), length)

    n_train, n_val, _ = split_lengths(length)
    bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, length)]
    for _ in range(1000):
        mask = rng.random(length) < anomaly_rate
        if all(mask[a:b].sum() >= min_per_split for a, b in bounds):
            break
    idx = np.flatnonzero(mask)
    signs = np.where(rng.random(idx.size) < 0.5, -1.0, 1.0)
    mags = rng.uniform(3.0, 6.0, idx.size) * float(np.std(u))
    u[idx] = u[idx] + signs * mags
    labels = mask.astype(np.int8)
    stamps = (1_416_726_000 + 3600 * np.arange(length)).astype(str)
    return LabeledSeries(u, labels, f"a1-standin-{seed}", stamps)
