"""Stochastic magnetic-field traces and dephasing-time estimates.

A trace is piecewise constant: sample ``k`` holds the field deviation from the
nominal field over ``[t0 + k*dt, t0 + (k+1)*dt)``, evaluated at the interval
midpoint. Every random component draws from its own counter-derived substream,
so a trace is a pure function of ``(spec, duration, dt, master_seed, stream_id)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.signal import lfilter

from .hyperfine import FieldSensitivity


def _check(name, value, positive=False):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if value < 0 or (positive and value == 0):
        raise ValueError(f"{name} must be {'positive' if positive else 'nonnegative'}, got {value}")


@dataclass(frozen=True)
class ConstantOffset:
    offset: float

    def __post_init__(self):
        if not math.isfinite(self.offset):
            raise ValueError("offset must be finite")

    def sample(self, t, dt, rng):
        return np.full(len(t), self.offset)


@dataclass(frozen=True)
class LinearDrift:
    rate: float  # T/s, measured from t = 0

    def __post_init__(self):
        if not math.isfinite(self.rate):
            raise ValueError("rate must be finite")

    def sample(self, t, dt, rng):
        return self.rate * t


@dataclass(frozen=True)
class RandomWalk:
    diffusion: float  # T^2/s, Var[B(t)] = D (t - t0)

    def __post_init__(self):
        _check("diffusion", self.diffusion)

    def sample(self, t, dt, rng):
        steps = rng.standard_normal(len(t)) * math.sqrt(self.diffusion * dt)
        steps[0] *= math.sqrt(0.5)  # first midpoint sits dt/2 after the start
        return np.cumsum(steps)


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    rms: float
    correlation_time: float

    def __post_init__(self):
        _check("rms", self.rms)
        _check("correlation_time", self.correlation_time, positive=True)

    def sample(self, t, dt, rng):
        a = math.exp(-dt / self.correlation_time)
        e = rng.standard_normal(len(t))
        e[1:] *= self.rms * math.sqrt(-math.expm1(-2 * dt / self.correlation_time))
        e[0] *= self.rms  # stationary start
        return lfilter([1.0], [1.0, -a], e)


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        _check("amplitude", self.amplitude)
        _check("frequency", self.frequency)
        if not math.isfinite(self.phase):
            raise ValueError("phase must be finite")

    def sample(self, t, dt, rng):
        return self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)


@dataclass(frozen=True)
class White:
    rms: float  # per sample

    def __post_init__(self):
        _check("rms", self.rms)

    def sample(self, t, dt, rng):
        return self.rms * rng.standard_normal(len(t))


Component = ConstantOffset | LinearDrift | RandomWalk | OrnsteinUhlenbeck | Sinusoid | White


@dataclass(frozen=True)
class NoiseSpec:
    components: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def is_zero(self) -> bool:
        return not self.components


@dataclass(frozen=True)
class FieldTrace:
    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if s.ndim != 1 or len(s) < 1:
            raise ValueError("trace needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("trace samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return len(self.samples)

    @property
    def t_end(self) -> float:
        return self.t0 + len(self.samples) * self.dt

    @property
    def times(self) -> np.ndarray:
        """Interval midpoints."""
        return self.t0 + (np.arange(len(self.samples)) + 0.5) * self.dt

    def cumulative(self, values=None) -> tuple[np.ndarray, np.ndarray]:
        """Knots and running integral of a per-sample quantity (default: the samples).

        The integral of a piecewise-constant function is piecewise linear, so
        ``np.interp`` on the result gives exact integrals between arbitrary times.
        """
        v = self.samples if values is None else np.asarray(values, dtype=float)
        knots = self.t0 + np.arange(len(v) + 1) * self.dt
        return knots, np.concatenate(([0.0], np.cumsum(v) * self.dt))


@dataclass(frozen=True)
class GradientTrace:
    common: FieldTrace
    differential: FieldTrace

    def __post_init__(self):
        a, b = self.common, self.differential
        if (a.t0, a.dt, len(a)) != (b.t0, b.dt, len(b)):
            raise ValueError("common and differential traces must share t0, dt and length")


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (master seed, counter key) pair."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))))


def _key(stream_id) -> tuple[int, ...]:
    if isinstance(stream_id, (int, np.integer)):
        return (int(stream_id),)
    return tuple(int(k) for k in stream_id)


def _grid(duration: float, dt: float, t0: float):
    if not (math.isfinite(duration) and math.isfinite(dt) and math.isfinite(t0)):
        raise ValueError("duration, dt and t0 must be finite")
    if not dt > 0 or duration < dt:
        raise ValueError("need duration >= dt > 0")
    n = int(math.ceil(duration / dt - 1e-9))
    return t0 + (np.arange(n) + 0.5) * dt


def sample_component(spec: NoiseSpec, index: int, duration: float, dt: float,
                     master_seed: int, stream_id=0, t0: float = 0.0) -> np.ndarray:
    t = _grid(duration, dt, t0)
    rng = substream(master_seed, *_key(stream_id), index)
    return spec.components[index].sample(t, dt, rng)


def sample_field_trace(spec: NoiseSpec, duration: float, dt: float, master_seed: int,
                       stream_id=0, t0: float = 0.0) -> FieldTrace:
    """Sum of all component traces; component ``j`` uses substream ``(*stream_id, j)``."""
    t = _grid(duration, dt, t0)
    total = np.zeros(len(t))
    for j in range(len(spec.components)):
        total += sample_component(spec, j, duration, dt, master_seed, stream_id, t0)
    return FieldTrace(t0, dt, total)


def sample_gradient_trace(common_spec: NoiseSpec, differential_spec: NoiseSpec, duration: float,
                          dt: float, master_seed: int, stream_id=0, t0: float = 0.0) -> GradientTrace:
    key = _key(stream_id)
    return GradientTrace(
        common=sample_field_trace(common_spec, duration, dt, master_seed, (*key, 0), t0),
        differential=sample_field_trace(differential_spec, duration, dt, master_seed, (*key, 1), t0),
    )


class TraceStats(NamedTuple):
    mean: float
    rms: float      # rms deviation about the mean
    min: float
    max: float
    n: int


def trace_statistics(trace: FieldTrace | Sequence[float]) -> TraceStats:
    s = trace.samples if isinstance(trace, FieldTrace) else np.asarray(trace, dtype=float)
    if len(s) == 0:
        raise ValueError("empty trace")
    mean = float(np.mean(s))
    return TraceStats(mean, float(np.sqrt(np.mean((s - mean) ** 2))), float(s.min()), float(s.max()), len(s))


def merge_statistics(a: TraceStats, b: TraceStats) -> TraceStats:
    """Statistics of the concatenation of two traces (pairwise update of mean and M2)."""
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * b.n / n
    m2 = a.rms**2 * a.n + b.rms**2 * b.n + delta**2 * a.n * b.n / n
    return TraceStats(mean, math.sqrt(m2 / n), min(a.min, b.min), max(a.max, b.max), n)


def predict_dephasing_time(sensitivity: FieldSensitivity, delta_B: float, phase_threshold: float = 1.0) -> float:
    """Time for a static field error to accumulate ``phase_threshold`` radians.

    Returns ``math.inf`` when the error produces no detuning.
    """
    if not phase_threshold > 0:
        raise ValueError("phase_threshold must be positive")
    dnu = abs(sensitivity.d1 * delta_B + sensitivity.d2 * delta_B**2)
    if dnu == 0:
        return math.inf
    return phase_threshold / (2 * math.pi * dnu)


def write_trace_csv(trace: FieldTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "delta_B_T"])
        for t, b in zip(trace.times, trace.samples):
            w.writerow([repr(float(t)), repr(float(b))])


def ou_phase_variance(slope: float, rms: float, correlation_time: float, T):
    """Variance (rad^2) of ``2 pi slope * integral_0^T x dt`` for a stationary OU process ``x``."""
    T = np.asarray(T, dtype=float)
    tc = correlation_time
    return (2 * np.pi * slope * rms) ** 2 * 2 * tc**2 * (T / tc + np.expm1(-T / tc))


def ou_ramsey_contrast(sensitivity: FieldSensitivity, components: Sequence[OrnsteinUhlenbeck], T,
                       mean_offset: float = 0.0, visibility: float = 1.0):
    """Ensemble Ramsey contrast for Gaussian OU field noise about a static offset.

    The detuning is linearized about ``mean_offset``: slope ``d1 + 2 d2 * mean_offset``.
    Independent components add their phase variances.
    """
    slope = sensitivity.d1 + 2 * sensitivity.d2 * mean_offset
    var = sum(ou_phase_variance(slope, c.rms, c.correlation_time, T) for c in components)
    return visibility * np.exp(-0.5 * np.asarray(var))
