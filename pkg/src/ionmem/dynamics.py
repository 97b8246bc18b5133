"""Single-qubit rotations, free precession under field noise, Ramsey and spin-echo scans.

States are length-2 complex arrays in the (|up>, |down>) basis. Accumulated
phase multiplies the |up> amplitude by ``exp(i*phi_D)``; the local oscillator
is taken as noiseless and pulses as instantaneous.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import TraceRangeError
from .hyperfine import FieldSensitivity
from .noise import FieldTrace, NoiseSpec, sample_field_trace, substream

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

UP = np.array([1, 0], dtype=complex)
DOWN = np.array([0, 1], dtype=complex)

SEQUENTIAL = "sequential-drift"
PER_SHOT = "per-shot"


@dataclass(frozen=True)
class Rotation:
    theta: float
    phi: float = 0.0

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta / 2), math.sin(self.theta / 2)
        return c * IDENTITY - 1j * s * (math.cos(self.phi) * SIGMA_X + math.sin(self.phi) * SIGMA_Y)


def rotate(state, r: Rotation) -> np.ndarray:
    return r.matrix() @ np.asarray(state, dtype=complex)


def apply_phase(state, phi_D: float) -> np.ndarray:
    out = np.array(state, dtype=complex)
    out[0] *= np.exp(1j * phi_D)
    return out


def ramsey_probability(phi_D, phi):
    """Probability of |up> after R(pi/2, 0), phase phi_D, R(pi/2, phi)."""
    return 0.5 * (1.0 - np.cos(np.add(phi_D, phi)))


@dataclass(frozen=True)
class RamseySequence:
    """One Ramsey phase scan.

    ``visibility`` (<= 1) lumps preparation, pulse and detection imperfections
    into the fringe amplitude. ``dead_time`` is the per-shot overhead (cooling,
    detection) that separates consecutive Ramsey windows in sequential-drift mode.
    """

    T_R: float
    analysis_phases: tuple = tuple(np.linspace(0, 2 * np.pi, 16, endpoint=False))
    detuning_offset: float = 0.0
    echo_times: tuple = ()
    shots_per_phase: int = 100
    visibility: float = 1.0
    dead_time: float = 0.0
    mode: str = SEQUENTIAL
    trace_dt: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "analysis_phases", tuple(float(p) for p in self.analysis_phases))
        object.__setattr__(self, "echo_times", tuple(float(e) for e in self.echo_times))
        if not self.T_R >= 0:
            raise ValueError("T_R must be nonnegative")
        if self.shots_per_phase < 1:
            raise ValueError("shots_per_phase must be >= 1")
        if not 0 <= self.visibility <= 1:
            raise ValueError("visibility must lie in [0, 1]")
        if self.mode not in (SEQUENTIAL, PER_SHOT):
            raise ValueError(f"unknown mode {self.mode!r}")
        e = self.echo_times
        if any(x < 0 or x > self.T_R for x in e) or any(b <= a for a, b in zip(e, e[1:])):
            raise ValueError("echo times must be strictly increasing within [0, T_R]")

    @property
    def shot_period(self) -> float:
        return self.T_R + self.dead_time


@dataclass
class PhaseScanRecord:
    phi: np.ndarray
    upcount: np.ndarray
    shots: np.ndarray
    T_R: float = 0.0
    seed: int = 0
    scenario: str = ""
    phi_D_true: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.upcount = np.asarray(self.upcount, dtype=int)
        self.shots = np.asarray(self.shots, dtype=int)
        if np.any(self.upcount < 0) or np.any(self.upcount > self.shots):
            raise ValueError("need 0 <= upcount <= shots")

    @property
    def frequency(self) -> np.ndarray:
        return self.upcount / self.shots

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phi_rad", "upcount", "shots"])
            for p, k, n in zip(self.phi, self.upcount, self.shots):
                w.writerow([repr(float(p)), int(k), int(n)])

    @classmethod
    def read_csv(cls, path: str | Path, **meta) -> "PhaseScanRecord":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1].astype(int), data[:, 2].astype(int), **meta)


def _detuning_integral(sensitivity: FieldSensitivity, trace: FieldTrace, detuning_offset: float):
    """Knots and running integral (cycles) of the instantaneous detuning."""
    nu = detuning_offset + sensitivity.detuning(trace.samples)
    return trace.cumulative(nu)


def _check_interval(trace: FieldTrace, a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    tol = 1e-9 * max(trace.dt, abs(trace.t_end))
    if np.any(a < trace.t0 - tol) or np.any(b > trace.t_end + tol) or np.any(b < a):
        raise TraceRangeError(f"interval outside trace support [{trace.t0}, {trace.t_end}]")


def _toggled_phase(knots, cum, start, end, echo_times):
    """2*pi * sum_k s_k * integral over segment k, s_k = +1, -1, ...; vectorized over start."""
    start = np.asarray(start, float)
    bounds = [start] + [start + e for e in echo_times] + [np.broadcast_to(end, start.shape)]
    vals = [np.interp(b, knots, cum) for b in bounds]
    total = np.zeros_like(start)
    for k in range(len(vals) - 1):
        total += (-1) ** k * (vals[k + 1] - vals[k])
    return 2 * np.pi * total


def free_evolve_phase(sensitivity: FieldSensitivity, trace: FieldTrace, detuning_offset: float,
                      interval) -> float:
    """Accumulated Ramsey phase phi_D over ``interval`` (rad)."""
    return apply_echo_sequence(sensitivity, trace, detuning_offset, interval, ())


def apply_echo_sequence(sensitivity: FieldSensitivity, trace: FieldTrace, detuning_offset: float,
                        interval, echo_times: Sequence[float]) -> float:
    """Net phase with pi-pulses at ``echo_times`` (measured from the interval start).

    Each pi-pulse flips the sign of subsequently accumulated phase (toggling frame).
    """
    a, b = (float(v) for v in interval)
    _check_interval(trace, a, b)
    e = tuple(float(x) for x in echo_times)
    if any(x < 0 or x > b - a for x in e) or any(q <= p for p, q in zip(e, e[1:])):
        raise ValueError("echo times must be strictly increasing within the interval")
    knots, cum = _detuning_integral(sensitivity, trace, detuning_offset)
    return float(_toggled_phase(knots, cum, np.array([a]), np.array([b]), e)[0])


def echo_analysis_phase(phi: float, n_echoes: int) -> float:
    """Physical phase of the final pi/2 pulse realising analysis phase ``phi`` in the toggling frame.

    An odd number of x pi-pulses swaps |up> and |down>, which conjugates the
    fringe; using ``pi - phi`` for the last pulse restores P = (1 - cos(phi_D + phi))/2.
    """
    return phi if n_echoes % 2 == 0 else math.pi - phi


def simulate_sequence(phi_segments: Sequence[float], phi: float) -> np.ndarray:
    """Explicit state evolution: R(pi/2,0), then free segments separated by R(pi,0), then the analysis pulse."""
    psi = rotate(UP, Rotation(math.pi / 2, 0.0))
    for k, seg in enumerate(phi_segments):
        if k:
            psi = rotate(psi, Rotation(math.pi, 0.0))
        psi = apply_phase(psi, seg)
    n_echoes = max(len(phi_segments) - 1, 0)
    return rotate(psi, Rotation(math.pi / 2, echo_analysis_phase(phi, n_echoes)))


def scan_phases(seq: RamseySequence, sensitivity: FieldSensitivity, noise: NoiseSpec,
                master_seed: int, stream_id=()) -> np.ndarray:
    """phi_D for every shot, shape (n_phases, shots_per_phase)."""
    base = (stream_id,) if isinstance(stream_id, int) else tuple(stream_id)
    n_ph, n_sh = len(seq.analysis_phases), seq.shots_per_phase
    if seq.mode == SEQUENTIAL:
        period = seq.shot_period
        total = n_ph * n_sh * period
        if noise.is_zero or total == 0:
            return np.full((n_ph, n_sh), 2 * np.pi * seq.detuning_offset * seq.T_R)
        dt = seq.trace_dt or period
        trace = sample_field_trace(noise, max(total, dt), dt, master_seed, (*base, 0))
        knots, cum = _detuning_integral(sensitivity, trace, seq.detuning_offset)
        starts = np.arange(n_ph * n_sh) * period
        return _toggled_phase(knots, cum, starts, starts + seq.T_R, seq.echo_times).reshape(n_ph, n_sh)
    out = np.empty((n_ph, n_sh))
    dt = seq.trace_dt or max(seq.T_R, 1e-12)
    for i in range(n_ph):
        for j in range(n_sh):
            trace = sample_field_trace(noise, max(seq.T_R, dt), dt, master_seed, (*base, 2, i, j))
            knots, cum = _detuning_integral(sensitivity, trace, seq.detuning_offset)
            out[i, j] = _toggled_phase(knots, cum, np.array([0.0]), np.array([seq.T_R]), seq.echo_times)[0]
    return out


def run_ramsey_phase_scan(seq: RamseySequence, sensitivity: FieldSensitivity, noise: NoiseSpec,
                          master_seed: int, stream_id=(), scenario: str = "") -> PhaseScanRecord:
    """Monte-Carlo phase scan: one Bernoulli outcome per (phase, shot).

    In sequential-drift mode all shots share one continuous noise trace and are
    taken phase by phase in the listed order, so slow drift leaks into the
    fitted fringe-frequency parameter. In per-shot mode every shot gets its own
    noise realization.
    """
    base = (stream_id,) if isinstance(stream_id, int) else tuple(stream_id)
    phi_D = scan_phases(seq, sensitivity, noise, master_seed, base)
    phases = np.asarray(seq.analysis_phases)
    p = 0.5 * (1.0 - seq.visibility * np.cos(phi_D + phases[:, None]))
    rng = substream(master_seed, *base, 1)
    clicks = rng.random(p.shape) < p
    n = np.full(len(phases), seq.shots_per_phase)
    return PhaseScanRecord(phases, clicks.sum(axis=1), n, T_R=seq.T_R, seed=master_seed,
                           scenario=scenario, phi_D_true=phi_D)


def run_contrast_vs_interval(T_R_list: Sequence[float], template: RamseySequence, sensitivity: FieldSensitivity,
                             noise: NoiseSpec, master_seed: int, workers: int = 1,
                             scenario: str = "") -> list[tuple[float, PhaseScanRecord]]:
    """One phase scan per Ramsey interval; interval ``k`` uses substream ``(k,)``."""
    if len(T_R_list) == 0:
        raise ValueError("need at least one Ramsey interval")

    def one(k):
        seq = replace(template, T_R=float(T_R_list[k]))
        return float(T_R_list[k]), run_ramsey_phase_scan(seq, sensitivity, noise, master_seed, (k,), scenario)

    if workers <= 1:
        return [one(k) for k in range(len(T_R_list))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(T_R_list))))


def quasi_static_contrast(sensitivity: FieldSensitivity, T_R, mean: float, rms: float,
                          detuning_offset: float = 0.0, visibility: float = 1.0):
    """Ensemble fringe contrast for a Gaussian field error frozen during each shot.

    With ``dB ~ N(mean, rms^2)`` the phase is ``2 pi T (a dB + c dB^2)``, whose
    characteristic function is closed form; the contrast is its modulus.
    """
    T = np.asarray(T_R, dtype=float)
    a = 2 * np.pi * T * sensitivity.d1
    c = 2 * np.pi * T * sensitivity.d2
    z = 1.0 - 2j * c * rms**2
    expo = -((a + 2 * c * mean) ** 2) * rms**2 / (2 * z)
    return visibility * np.abs(np.exp(expo) / np.sqrt(z))
