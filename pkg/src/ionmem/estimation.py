"""Fitting pipeline: Ramsey fringes, contrast decay, (damped) sinusoids, linear extrapolation.

All nonlinear fits go through one damped Gauss-Newton solver with analytic
Jacobians; reported covariances are ``(J^T W J)^-1`` at the solution, i.e. the
supplied uncertainties are taken at face value (no reduced-chi-square rescaling).
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.signal import lombscargle

from .errors import FitDomainError, FitError, FitWarning, NoOscillationError
from .noise import substream

MAX_ITER = 200
XTOL = 1e-10
D_BOUNDS = (0.5, 1.5)
REWEIGHT_PASSES = 2


def gauss_newton(residuals: Callable, jacobian: Callable, p0, lower=None, upper=None,
                 max_iter: int = MAX_ITER, xtol: float = XTOL):
    """Minimize ``sum(residuals(p)**2)`` by Gauss-Newton with Levenberg damping.

    Returns ``(p, cov, chi2, n_iter)``. Parameters are clipped to the optional
    box after every step. Raises :class:`FitError` if the relative step never
    drops below ``xtol``.
    """
    p = np.array(p0, dtype=float)
    lo = np.full(p.shape, -np.inf) if lower is None else np.asarray(lower, float)
    hi = np.full(p.shape, np.inf) if upper is None else np.asarray(upper, float)
    r = residuals(p)
    chi2 = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        A = J.T @ J
        g = J.T @ r
        scale = np.diag(A).copy()
        scale[scale == 0] = 1.0
        while True:
            try:
                step = -np.linalg.solve(A + lam * np.diag(scale), g)
            except np.linalg.LinAlgError:
                lam *= 10
                if lam > 1e12:
                    raise FitError("singular normal equations", best=p) from None
                continue
            trial = np.clip(p + step, lo, hi)
            r_new = residuals(trial)
            chi2_new = float(r_new @ r_new)
            if chi2_new <= chi2 or lam > 1e12:
                break
            lam *= 10
        moved = trial - p
        if chi2_new <= chi2:
            p, r, chi2 = trial, r_new, chi2_new
            lam = max(lam / 10, 1e-12)
        if np.all(np.abs(moved) <= xtol * (np.abs(p) + xtol)):
            J = jacobian(p)
            return p, _covariance(J), chi2, it
        if lam > 1e12:
            break
    raise FitError(f"no convergence after {max_iter} iterations", best=p)


def _covariance(J):
    A = J.T @ J
    try:
        return np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(A)


def _wrap(phase: float) -> float:
    """Map to (-pi, pi]."""
    w = math.remainder(phase, 2 * math.pi)
    return math.pi if w == -math.pi else w


class _Report:
    """Shared text/CSV rendering; subclasses list ``names`` of their fitted parameters."""

    names: tuple = ()

    def values(self):
        return [getattr(self, n) for n in self.names]

    def sigmas(self):
        return [getattr(self, n + "_sigma") for n in self.names]

    def report(self) -> str:
        lines = [f"# {type(self).__name__}"]
        lines.append(f"{'parameter':<12} {'value':>24} {'sigma':>24}")
        for n, v, s in zip(self.names, self.values(), self.sigmas()):
            lines.append(f"{n:<12} {v!r:>24} {s!r:>24}")
        lines.append("covariance")
        for row in np.atleast_2d(self.cov):
            lines.append("  " + " ".join(f"{x: .16e}" for x in row))
        for k in ("chi2", "dof", "converged"):
            if hasattr(self, k):
                lines.append(f"{k} = {getattr(self, k)!r}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "value", "sigma"] + [f"cov_{n}" for n in self.names])
        cov = np.atleast_2d(self.cov)
        for i, (n, v, s) in enumerate(zip(self.names, self.values(), self.sigmas())):
            w.writerow([n, repr(float(v)), repr(float(s))] + [repr(float(x)) for x in cov[i]])
        return buf.getvalue()

    def write(self, stem: str | Path) -> None:
        stem = Path(stem)
        stem.with_suffix(".txt").write_text(self.report())
        stem.with_suffix(".csv").write_text(self.to_csv())


# ---------------------------------------------------------------- fringe fits

@dataclass
class PhaseScanFit(_Report):
    """``f(phi) = a - (b/2) cos(d*phi + phi_D)``."""

    a: float
    b: float
    d: float
    phi_D: float
    a_sigma: float
    b_sigma: float
    d_sigma: float
    phi_D_sigma: float
    cov: np.ndarray = field(repr=False)
    chi2: float = 0.0
    dof: int = 0
    converged: bool = True
    names = ("a", "b", "d", "phi_D")


def binomial_sigma(upcount, shots):
    """Agresti-Coull (z=1) standard error; never zero, even at p in {0, 1}."""
    k = np.asarray(upcount, float)
    n = np.asarray(shots, float)
    n_t = n + 1.0
    p_t = (k + 0.5) / n_t
    return np.sqrt(p_t * (1 - p_t) / n_t)


def _fringe_model(p, phi):
    a, b, d, ph = p
    arg = d * phi + ph
    c, s = np.cos(arg), np.sin(arg)
    f = a - 0.5 * b * c
    J = np.column_stack([np.ones_like(phi), -0.5 * c, 0.5 * b * s * phi, 0.5 * b * s])
    return f, J


def _fringe_grid_start(phi, y, w):
    """Best (a, b, d, phi_D) over a (d, phi_D) grid, with (a, b) from weighted linear least squares."""
    d, ph = np.meshgrid(np.linspace(0.9, 1.1, 21), np.linspace(0, 2 * np.pi, 72, endpoint=False), indexing="ij")
    x = -0.5 * np.cos(d[..., None] * phi + ph[..., None])  # (21, 72, n)
    w2 = w * w
    S, Sx, Sxx = w2.sum(), (w2 * x).sum(-1), (w2 * x * x).sum(-1)
    Sy, Sxy = (w2 * y).sum(), (w2 * x * y).sum(-1)
    det = S * Sxx - Sx**2
    det = np.where(det > 0, det, np.inf)
    b = (S * Sxy - Sx * Sy) / det
    a = (Sy - b * Sx) / S
    chi2 = (w2 * (a[..., None] + b[..., None] * x - y) ** 2).sum(-1)
    i, j = np.unravel_index(int(np.argmin(chi2)), chi2.shape)
    return [float(a[i, j]), float(b[i, j]), float(d[i, j]), float(ph[i, j])]


def fit_phase_scan(record=None, *, phi=None, upcount=None, shots=None) -> PhaseScanFit:
    """Weighted fringe fit of a Ramsey phase scan.

    Starts from a grid over (phi_D, d in [0.9, 1.1]) with (a, b) solved linearly
    at each node, then refines all four parameters with damped Gauss-Newton.
    Weights start from the observed counts and are then recomputed from the
    fitted probabilities for ``REWEIGHT_PASSES`` refits.
    """
    if record is not None:
        phi, upcount, shots = record.phi, record.upcount, record.shots
    phi = np.asarray(phi, float)
    k = np.asarray(upcount, float)
    n = np.asarray(shots, float)
    y = k / n
    if len(np.unique(phi)) < 5 or np.ptp(phi) <= math.pi:
        raise FitDomainError("need >= 5 distinct phases spanning more than pi")
    sig = binomial_sigma(k, n)
    w = 1.0 / sig

    if np.ptp(y) == 0:
        return _flat_fringe(phi, y, sig)

    p0 = _fringe_grid_start(phi, y, w)
    if p0[1] < 0:
        p0[1], p0[3] = -p0[1], p0[3] + math.pi

    lower = [-np.inf, -np.inf, D_BOUNDS[0], -np.inf]
    upper = [np.inf, np.inf, D_BOUNDS[1], np.inf]
    p = np.asarray(p0, float)
    # iteratively reweighted: binomial variance of the fitted probability, with
    # the same Agresti-Coull floor, avoids rewarding points that fluctuated toward 0 or 1
    for _ in range(REWEIGHT_PASSES + 1):
        res = lambda q, w=w: (_fringe_model(q, phi)[0] - y) * w
        jac = lambda q, w=w: _fringe_model(q, phi)[1] * w[:, None]
        p, cov, chi2, _ = gauss_newton(res, jac, p, lower, upper)
        model = np.clip(_fringe_model(p, phi)[0], 0.0, 1.0)
        w = 1.0 / binomial_sigma(model * n, n)
    a, b, d, ph = p
    if b < 0:
        b, ph = -b, ph + math.pi
    sd = np.sqrt(np.diag(cov))
    return PhaseScanFit(float(a), float(b), float(d), _wrap(ph), *map(float, sd), cov=cov,
                        chi2=chi2, dof=len(phi) - 4)


def _flat_fringe(phi, y, sig):
    # a + u cos(phi) + v sin(phi): zero contrast, uncertainty from the linear model
    w = 1.0 / sig
    X = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    cov3 = np.linalg.inv((X * w[:, None]).T @ (X * w[:, None]))
    a = float(np.mean(y))
    b_sigma = 2 * math.sqrt(0.5 * (cov3[1, 1] + cov3[2, 2]))
    cov = np.diag([cov3[0, 0], b_sigma**2, 0.0, 0.0])
    r = (a - y) * w
    return PhaseScanFit(a, 0.0, 1.0, 0.0, math.sqrt(cov3[0, 0]), b_sigma, 0.0, 0.0, cov=cov,
                        chi2=float(r @ r), dof=len(phi) - 4)


# ---------------------------------------------------------------- decay fits

@dataclass
class DecayFit(_Report):
    """``b(T) = b0 * exp(-T / tau)``; ``tau`` is ``inf`` when no decay is resolved."""

    b0: float
    tau: float
    b0_sigma: float
    tau_sigma: float
    cov: np.ndarray = field(repr=False)
    chi2: float = 0.0
    dof: int = 0
    converged: bool = True
    bootstrap_tau_sigma: float | None = None
    names = ("b0", "tau")

    @property
    def rate(self) -> float:
        return 0.0 if math.isinf(self.tau) else 1.0 / self.tau

    def report(self) -> str:
        text = super().report()
        if self.bootstrap_tau_sigma is not None:
            text += f"bootstrap_tau_sigma = {self.bootstrap_tau_sigma!r}\n"
        return text


def _unpack_points(points, ncol=3):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != ncol:
        raise ValueError(f"expected a list of {ncol}-tuples")
    return arr.T


def fit_exponential_decay(points: Sequence[tuple[float, float, float]]) -> DecayFit:
    """Weighted least-squares fit of contrast vs. interval, ``points = [(T, b, sigma), ...]``."""
    T, y, s = _unpack_points(points)
    if len(T) < 3 or len(np.unique(T)) < 2:
        raise FitDomainError("need >= 3 points at >= 2 distinct intervals")
    if np.any(s <= 0):
        raise FitDomainError("sigmas must be positive")
    pos = y > 0
    if np.count_nonzero(~pos) > len(y) / 2:
        raise FitDomainError("more than half of the contrasts are nonpositive")
    w = 1.0 / s

    # log-linear start on positive points
    X = np.column_stack([np.ones(pos.sum()), -T[pos]])
    wl = y[pos] / s[pos]
    (lnb0, rate0), *_ = np.linalg.lstsq(X * wl[:, None], np.log(y[pos]) * wl, rcond=None)

    def model(p):
        e = np.exp(-p[1] * T)
        return p[0] * e, np.column_stack([e, -p[0] * T * e])

    res = lambda p: (model(p)[0] - y) * w
    jac = lambda p: model(p)[1] * w[:, None]
    p, cov, chi2, _ = gauss_newton(res, jac, [math.exp(lnb0), rate0])
    b0, rate = p
    sd = np.sqrt(np.diag(cov))
    if rate * np.max(T) <= 1e-9:
        warnings.warn("contrast does not decay; lifetime unbounded", FitWarning, stacklevel=2)
        tau, tau_sigma = math.inf, math.inf
    else:
        tau, tau_sigma = 1.0 / rate, sd[1] / rate**2
    # covariance reported in (b0, tau)
    jt = np.diag([1.0, -tau**2 if math.isfinite(tau) else 0.0])
    cov_bt = jt @ cov @ jt.T
    if not math.isfinite(tau):
        cov_bt[1, 1] = math.inf
    return DecayFit(float(b0), float(tau), float(sd[0]), float(tau_sigma), cov=cov_bt,
                    chi2=chi2, dof=len(T) - 2)


def bootstrap_decay(points, n_boot: int = 200, seed: int = 0) -> float:
    """Parametric-bootstrap standard deviation of the fitted lifetime."""
    T, y, s = _unpack_points(points)
    fit = fit_exponential_decay(points)
    truth = fit.b0 * np.exp(-T * fit.rate)
    rng = substream(seed, 7)
    taus = []
    for _ in range(n_boot):
        yb = truth + s * rng.standard_normal(len(T))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FitWarning)
                taus.append(fit_exponential_decay(np.column_stack([T, yb, s])).tau)
        except (FitError, FitDomainError):
            continue
    taus = np.asarray(taus)
    taus = taus[np.isfinite(taus)]
    return float(np.std(taus, ddof=1)) if len(taus) > 1 else math.inf


# ---------------------------------------------------------------- sinusoids

@dataclass
class SinusoidFit(_Report):
    """``offset + amplitude * exp(-t / damping_time) * cos(2 pi frequency t + phase)``."""

    amplitude: float
    frequency: float
    phase: float
    offset: float
    damping_time: float
    amplitude_sigma: float
    frequency_sigma: float
    phase_sigma: float
    offset_sigma: float
    damping_time_sigma: float
    cov: np.ndarray = field(repr=False)
    chi2: float = 0.0
    dof: int = 0
    converged: bool = True
    names = ("amplitude", "frequency", "phase", "offset", "damping_time")

    def __call__(self, t):
        t = np.asarray(t, float)
        env = 1.0 if math.isinf(self.damping_time) else np.exp(-t / self.damping_time)
        return self.offset + self.amplitude * env * np.cos(2 * np.pi * self.frequency * t + self.phase)


def periodogram(t, y, freqs):
    """Lomb-Scargle power of the mean-removed series at ``freqs`` (Hz)."""
    y = np.asarray(y, float)
    return lombscargle(np.asarray(t, float), y - y.mean(), 2 * np.pi * np.asarray(freqs, float))


def _peak_frequency(t, y, oversample=10, max_freqs=400_000):
    span = np.ptp(t)
    dts = np.diff(np.sort(t))
    dts = dts[dts > 0]
    f_max = 0.5 / np.min(dts)
    df = 1.0 / (oversample * span)
    n = int(min(max_freqs, f_max / df))
    freqs = np.linspace(df, f_max, max(n, 16))
    pw = periodogram(t, y, freqs)
    i = int(np.argmax(pw))
    med = float(np.median(pw))
    if not pw[i] > 0 or pw[i] < 3 * med:
        raise NoOscillationError("no significant spectral peak")
    # refine on a fine local grid around the coarse peak
    fine = np.linspace(max(freqs[i] - df, df / 10), freqs[i] + df, 201)
    pf = periodogram(t, y, fine)
    return float(fine[int(np.argmax(pf))])


def fit_sinusoid(series, damped: bool = False, frequency_guess: float | None = None) -> SinusoidFit:
    """Fit ``series = [(t, p, sigma), ...]`` with a periodogram-initialized (damped) cosine."""
    t, y, s = _unpack_points(series)
    if len(t) < 8:
        raise FitDomainError("need >= 8 points")
    if np.any(s <= 0):
        raise FitDomainError("sigmas must be positive")
    if np.ptp(y) == 0:
        raise NoOscillationError("constant series")
    f0 = frequency_guess if frequency_guess is not None else _peak_frequency(t, y)
    if f0 * np.ptp(t) < 1:
        raise FitDomainError("series covers less than one period of the peak frequency")
    w = 1.0 / s
    X = np.column_stack([np.ones_like(t), np.cos(2 * np.pi * f0 * t), np.sin(2 * np.pi * f0 * t)])
    (c0, cc, ss), *_ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
    amp0, ph0 = math.hypot(cc, ss), math.atan2(-ss, cc)

    def model(p):
        off, A, f, ph = p[:4]
        g = p[4] if damped else 0.0
        env = np.exp(-g * t)
        arg = 2 * np.pi * f * t + ph
        c, sn = np.cos(arg), np.sin(arg)
        val = off + A * env * c
        cols = [np.ones_like(t), env * c, -A * env * sn * 2 * np.pi * t, -A * env * sn]
        if damped:
            cols.append(-t * A * env * c)
        return val, np.column_stack(cols)

    p0 = [c0, amp0, f0, ph0] + ([0.0] if damped else [])
    res = lambda p: (model(p)[0] - y) * w
    jac = lambda p: model(p)[1] * w[:, None]
    p, cov, chi2, _ = gauss_newton(res, jac, p0)
    off, A, f, ph = p[:4]
    if A < 0:
        A, ph = -A, ph + math.pi
    if f < 0:
        f, ph = -f, -ph
    sd = np.sqrt(np.diag(cov))
    if damped and p[4] > 0:
        tau = 1.0 / p[4]
        tau_sigma = sd[4] / p[4] ** 2
    else:
        tau, tau_sigma = math.inf, math.inf
    # covariance reported over (amplitude, frequency, phase, offset, damping_time)
    order = [1, 2, 3, 0]
    full = np.full((5, 5), 0.0)
    full[:4, :4] = cov[np.ix_(order, order)]
    if damped:
        jt = -tau**2 if math.isfinite(tau) else 0.0
        full[4, :4] = full[:4, 4] = cov[4, order] * jt
        full[4, 4] = tau_sigma**2
    else:
        full[4, 4] = math.inf
    return SinusoidFit(float(A), float(f), _wrap(ph), float(off), float(tau),
                       float(sd[1]), float(sd[2]), float(sd[3]), float(sd[0]), float(tau_sigma),
                       cov=full, chi2=chi2, dof=len(t) - len(p))


# ---------------------------------------------------------------- linear

@dataclass
class LinearFit(_Report):
    slope: float
    intercept: float
    slope_sigma: float
    intercept_sigma: float
    cov: np.ndarray = field(repr=False)
    chi2: float = 0.0
    dof: int = 0
    names = ("slope", "intercept")

    def value_at(self, x) -> float:
        return self.intercept + self.slope * x

    def sigma_at(self, x) -> float:
        """Standard error of the fitted line at ``x``."""
        g = np.array([x, 1.0])
        return float(math.sqrt(g @ self.cov @ g))


def fit_linear_intercept(points: Sequence[tuple[float, float, float]]) -> LinearFit:
    """Weighted straight-line fit ``y = intercept + slope * x``; the intercept is the zero-drive value."""
    x, y, s = _unpack_points(points)
    if len(np.unique(x)) < 2:
        raise FitDomainError("need at least two distinct x values")
    w = 1.0 / s**2
    S, Sx, Sy = w.sum(), (w * x).sum(), (w * y).sum()
    Sxx, Sxy = (w * x * x).sum(), (w * x * y).sum()
    det = S * Sxx - Sx**2
    slope = (S * Sxy - Sx * Sy) / det
    intercept = (Sxx * Sy - Sx * Sxy) / det
    # covariance of (slope, intercept)
    cov = np.array([[S, -Sx], [-Sx, Sxx]]) / det
    r = (y - intercept - slope * x) / s
    return LinearFit(float(slope), float(intercept), math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1]),
                     cov=cov, chi2=float(r @ r), dof=len(x) - 2)


@dataclass
class ACZeemanResult:
    fits: list
    shifts: np.ndarray
    shift_sigmas: np.ndarray
    injected: float

    @property
    def coverage(self) -> float:
        return float(np.mean(np.abs(self.shifts - self.injected) <= self.shift_sigmas))


def simulate_ac_zeeman(shift: float = 1.81, nu0: float = 0.0, drive=(0.5, 1.0, 1.5, 2.0),
                       sigma: float = 0.022, repetitions: int = 200, seed: int = 0) -> ACZeemanResult:
    """Repeat the RF-drive extrapolation on synthetic data.

    The clock frequency is modelled as ``nu0 + shift * x`` with ``x`` the RF drive
    relative to the operating point (``x = 1``); each repetition adds Gaussian
    noise of ``sigma`` Hz to every point and recovers the shift at ``x = 1`` as
    ``nu(1) - nu(0)`` from the fitted line.
    """
    x = np.asarray(drive, float)
    rng = substream(seed, 11)
    fits, shifts, sig = [], [], []
    for _ in range(repetitions):
        y = nu0 + shift * x + sigma * rng.standard_normal(len(x))
        fit = fit_linear_intercept(np.column_stack([x, y, np.full_like(x, sigma)]))
        fits.append(fit)
        shifts.append(fit.slope)
        sig.append(fit.slope_sigma)
    return ACZeemanResult(fits, np.array(shifts), np.array(sig), shift)


def memory_error_probability(tau: float, t: float) -> float:
    """Probability of a memory error after storage time ``t`` for exponential decay with lifetime ``tau``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(-math.expm1(-t / tau))
