"""Two-ion decoherence-free-subspace memory.

Amplitudes are ordered |00>, |01>, |10>, |11>, with |0> = |F=1, m_F=-1> and
|1> = |F=2, m_F=-2>. An ion in |1> is the bright one at detection.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import poisson

from .dynamics import Rotation
from .errors import DetectionWarning, SubspaceError
from .hyperfine import FieldSensitivity
from .noise import NoiseSpec, sample_gradient_trace, substream

_S = 1 / math.sqrt(2)
PSI_PLUS = np.array([0, _S, _S, 0], dtype=complex)
PSI_MINUS = np.array([0, _S, -_S, 0], dtype=complex)
PHI_PLUS = np.array([_S, 0, 0, _S], dtype=complex)
PHI_MINUS = np.array([_S, 0, 0, -_S], dtype=complex)
N_BRIGHT = np.array([0, 1, 1, 2])


def prepare_phi_minus_i() -> np.ndarray:
    """(|00> - i|11>)/sqrt(2), the output of an ideal entangling gate."""
    return np.array([_S, 0, 0, -1j * _S], dtype=complex)


def collective_rotate(state, r: Rotation) -> np.ndarray:
    M = r.matrix()
    return np.kron(M, M) @ np.asarray(state, dtype=complex)


def collective_phase(state, phi_c: float) -> np.ndarray:
    """Equal phase on |1> of both ions, as from a uniform field change."""
    d = np.exp(1j * phi_c * N_BRIGHT)
    return d * np.asarray(state, dtype=complex)


def gradient_evolve(state, delta_phi: float, tol: float = 1e-12) -> np.ndarray:
    """Differential phase between the ions: |01> -> e^{i dphi/2}|01>, |10> -> e^{-i dphi/2}|10>.

    Maps |Psi+> to cos(dphi/2)|Psi+> + i sin(dphi/2)|Psi->.
    """
    psi = np.asarray(state, dtype=complex)
    if abs(psi[0]) > tol or abs(psi[3]) > tol:
        raise SubspaceError("state has support outside span{|01>, |10>}")
    out = psi.copy()
    out[1] *= np.exp(0.5j * delta_phi)
    out[2] *= np.exp(-0.5j * delta_phi)
    return out


def dfs_probabilities(state) -> tuple[float, float, float]:
    """(P(Psi+), P(Psi-), leakage out of the subspace)."""
    psi = np.asarray(state, dtype=complex)
    pp = abs(np.vdot(PSI_PLUS, psi)) ** 2
    pm = abs(np.vdot(PSI_MINUS, psi)) ** 2
    return float(pp), float(pm), float(max(np.vdot(psi, psi).real - pp - pm, 0.0))


def parity(state) -> float:
    """<Z1 Z2> of the state: P(0 or 2 bright) - P(1 bright)."""
    p = np.abs(np.asarray(state)) ** 2
    return float(p[0] + p[3] - p[1] - p[2])


@dataclass(frozen=True)
class DetectionModel:
    """Ideal bright-ion counting, or Poisson photon counts with likelihood thresholds."""

    mode: str = "ideal"
    lambda_bright: float = 30.0
    lambda_bg: float = 2.0
    max_misclassification: float = 0.01

    def __post_init__(self):
        if self.mode not in ("ideal", "poisson"):
            raise ValueError(f"unknown detection mode {self.mode!r}")
        if self.lambda_bright < 0 or self.lambda_bg < 0:
            raise ValueError("Poisson means must be nonnegative")

    def classify(self, counts) -> np.ndarray:
        """Most likely number of bright ions for each photon count (ties go to fewer)."""
        counts = np.asarray(counts)
        ll = np.stack([poisson.logpmf(counts, n * self.lambda_bright + self.lambda_bg) for n in range(3)])
        return np.argmax(ll, axis=0)

    def misclassification(self) -> float:
        """Worst-case probability, over n_bright, of assigning the wrong class."""
        if self.mode == "ideal":
            return 0.0
        top = int(poisson.ppf(1 - 1e-12, 2 * self.lambda_bright + self.lambda_bg)) + 1
        c = np.arange(top + 1)
        cls = self.classify(c)
        worst = 0.0
        for n in range(3):
            pmf = poisson.pmf(c, n * self.lambda_bright + self.lambda_bg)
            worst = max(worst, float(pmf[cls != n].sum()))
        return worst


@dataclass
class ParityRecord:
    """Per-delay tallies of 0/1/2 bright ions."""

    t_D: np.ndarray
    n0: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    shots: np.ndarray
    detection_ok: bool = True

    def __post_init__(self):
        self.t_D = np.asarray(self.t_D, float)
        for k in ("n0", "n1", "n2", "shots"):
            setattr(self, k, np.asarray(getattr(self, k), int))
        if np.any(self.n0 + self.n1 + self.n2 != self.shots):
            raise ValueError("tallies must sum to shots")

    @property
    def p_psi_minus(self) -> np.ndarray:
        return self.n1 / self.shots

    @property
    def sigma(self) -> np.ndarray:
        # Agresti-Coull (z=1) so that p in {0, 1} keeps a finite weight
        n_t = self.shots + 1.0
        p_t = (self.n1 + 0.5) / n_t
        return np.sqrt(p_t * (1 - p_t) / n_t)

    @property
    def parity(self) -> np.ndarray:
        return (self.n0 + self.n2 - self.n1) / self.shots

    def series(self) -> np.ndarray:
        return np.column_stack([self.t_D, self.p_psi_minus, self.sigma])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_D_s", "p_psi_minus", "sigma", "shots"])
            for row in zip(self.t_D, self.p_psi_minus, self.sigma, self.shots):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])

    def write_counts_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_D_s", "n0", "n1", "n2", "shots"])
            for row in zip(self.t_D, self.n0, self.n1, self.n2, self.shots):
                w.writerow([repr(float(row[0]))] + [int(v) for v in row[1:]])


def _final_pulse_outcomes(states: np.ndarray) -> np.ndarray:
    """Bright-ion-number probabilities after the analysis pulse, shape (..., 3)."""
    M = Rotation(math.pi / 2, 0.0).matrix()
    out = np.einsum("ij,...j->...i", np.kron(M, M), states)
    p = np.abs(out) ** 2
    return np.stack([p[..., 0], p[..., 1] + p[..., 2], p[..., 3]], axis=-1)


def measure_parity_counts(state, shots: int, seed: int = 0, detection: DetectionModel = DetectionModel(),
                          stream_id=(), t_D: float = 0.0) -> ParityRecord:
    """Apply R(pi/2, 0) to both ions and tally detected bright ions over ``shots`` repetitions."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    key = (stream_id,) if isinstance(stream_id, int) else tuple(stream_id)
    probs = _final_pulse_outcomes(np.asarray(state, dtype=complex))
    rng = substream(seed, *key, 5)
    truth = rng.choice(3, size=shots, p=probs / probs.sum())
    return _tally([t_D], [truth], detection, rng)


def _tally(t_D, truths, detection: DetectionModel, rng) -> ParityRecord:
    ok = True
    if detection.mode == "poisson":
        bad = detection.misclassification()
        if bad > detection.max_misclassification:
            ok = False
            warnings.warn(f"photon-count thresholds misclassify {bad:.2%} of shots", DetectionWarning, stacklevel=3)
    rows = []
    for truth in truths:
        truth = np.asarray(truth)
        if detection.mode == "poisson":
            counts = rng.poisson(truth * detection.lambda_bright + detection.lambda_bg)
            truth = detection.classify(counts)
        rows.append(np.bincount(truth, minlength=3))
    rows = np.array(rows)
    return ParityRecord(t_D, rows[:, 0], rows[:, 1], rows[:, 2], rows.sum(axis=1), detection_ok=ok)


@dataclass(frozen=True)
class GradientSource:
    """Per-shot field noise at the two ions and the sensitivity that turns it into phase.

    ``differential`` is B(ion 2) - B(ion 1); ``dt`` is the trace resolution.
    """

    common: NoiseSpec
    differential: NoiseSpec
    sensitivity: FieldSensitivity
    dt: float = 1e-3

    def phases(self, t_D: float, master_seed: int, stream_id) -> tuple[float, float]:
        """Phases acquired by |1> of ion 1 and ion 2 during a delay ``t_D``."""
        if t_D == 0:
            return 0.0, 0.0
        dt = min(self.dt, t_D)
        g = sample_gradient_trace(self.common, self.differential, t_D, dt, master_seed, stream_id)
        d1 = self.sensitivity.d1

        def integral(trace):
            knots, cum = trace.cumulative()
            return float(np.interp(t_D, knots, cum))

        common = integral(g.common)
        diff = integral(g.differential) if not self.differential.is_zero else 0.0
        return 2 * np.pi * d1 * common, 2 * np.pi * d1 * (common + diff)


@dataclass
class DFSRun:
    record: ParityRecord
    delta_phi: np.ndarray = field(repr=False)

    @property
    def p_psi_minus(self):
        return self.record.p_psi_minus


def _evolve_shot(phi1: float, phi2: float) -> np.ndarray:
    psi = collective_rotate(prepare_phi_minus_i(), Rotation(math.pi / 2, -math.pi / 4))
    psi = psi * np.exp(1j * np.array([0.0, phi2, phi1, phi1 + phi2]))  # ion 1 is the left factor
    return psi


def run_dfs_lifetime_experiment(delays: Sequence[float], gradient: GradientSource, shots: int,
                                master_seed: int, decay_rate: float = 0.0, initial_contrast: float = 1.0,
                                detection: DetectionModel = DetectionModel(), workers: int = 1) -> DFSRun:
    """Prepare Psi+, wait ``t_D`` under gradient noise, analyse with R(pi/2, 0), count bright ions.

    ``decay_rate`` and ``initial_contrast`` add phenomenological dephasing: with
    probability ``1 - initial_contrast * exp(-decay_rate * t_D)`` a shot's relative
    phase is replaced by a uniformly random one. Delay ``i``, shot ``j`` draws its
    noise from substream ``(i, j)``.
    """
    delays = np.asarray(delays, float)
    if np.any(delays < 0):
        raise ValueError("delays must be nonnegative")
    if shots < 1:
        raise ValueError("shots must be >= 1")

    def one(i):
        t_D = float(delays[i])
        rng = substream(master_seed, i, 1 << 20)
        keep = initial_contrast * math.exp(-decay_rate * t_D)
        states = np.empty((shots, 4), dtype=complex)
        dphi = np.empty(shots)
        for j in range(shots):
            phi1, phi2 = gradient.phases(t_D, master_seed, (i, j))
            if rng.random() >= keep:
                phi2 = phi1 + rng.uniform(0, 2 * np.pi)
            states[j] = _evolve_shot(phi1, phi2)
            dphi[j] = phi2 - phi1
        probs = _final_pulse_outcomes(states)
        u = rng.random(shots)[:, None]
        truth = (u > np.cumsum(probs, axis=1)[:, :2]).sum(axis=1)
        return truth, dphi, rng

    if workers <= 1:
        results = [one(i) for i in range(len(delays))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(len(delays))))
    truths = [r[0] for r in results]
    if detection.mode == "poisson":
        rng = substream(master_seed, 1 << 21)
        record = _tally(delays, truths, detection, rng)
    else:
        record = _tally(delays, truths, detection, None)
    return DFSRun(record, np.array([r[1] for r in results]))


def window_delays(centers: Sequence[float], points: int, spacing: float) -> np.ndarray:
    """Delays in short windows starting at each center, e.g. 300 ms, 1 s and 2 s."""
    offs = np.arange(points) * spacing
    return np.concatenate([c + offs for c in centers])
