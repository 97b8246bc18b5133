"""Ground-state hyperfine/Zeeman levels of a J=1/2 ion and field-independent points.

Frequencies are in Hz, fields in tesla. Energies are quoted relative to the
hyperfine centroid, so the eight (for I=3/2) levels sum to zero at every field.

Two independent routes to the spectrum are kept side by side: the Breit-Rabi
closed form and exact diagonalization of the full ``(2I+1)(2J+1)`` matrix.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .constants import HyperfineConstants
from .errors import InvalidConstantsError, LabelError, NoRootError, PrecisionWarning

Label = tuple[int, int]

DEFAULT_STEP = 1e-7          # T
CLOCK_D1_TOLERANCE = 1.0     # Hz/T
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ZeemanLevel:
    label: Label
    energy: float
    field: float


@dataclass(frozen=True)
class Transition:
    lower: Label
    upper: Label

    def __iter__(self):
        return iter((self.lower, self.upper))


@dataclass(frozen=True)
class FieldSensitivity:
    """Taylor data of a transition frequency about ``at_field``.

    ``nu(B) ~ f0 + d1*(B - at_field) + d2*(B - at_field)**2``. Note that ``d2`` is
    the quadratic *coefficient*; the second derivative is ``curvature = 2*d2``.
    """

    at_field: float
    f0: float
    d1: float
    d2: float
    step_used: float
    d1_noise: float = 0.0
    d2_noise: float = 0.0
    precision_ok: bool = True
    transition: Transition | None = field(default=None, compare=False)

    @property
    def curvature(self) -> float:
        return 2.0 * self.d2

    def detuning(self, delta_B):
        """Frequency shift (Hz) for a field deviation ``delta_B`` from ``at_field``."""
        return self.d1 * delta_B + self.d2 * np.square(delta_B)


def _check_label(c: HyperfineConstants, label) -> Label:
    try:
        F, m = (int(v) for v in label)
    except (TypeError, ValueError):
        raise LabelError(f"bad level label {label!r}") from None
    if F not in (c.F_upper, c.F_lower) or abs(m) > F or (F, m) != tuple(label):
        raise LabelError(f"no level (F={label[0]}, m_F={label[1]}) for I={c.nuclear_spin_I}")
    return F, m


def _zero_field_energy(c: HyperfineConstants, F: int) -> float:
    # A/2 [F(F+1) - I(I+1) - J(J+1)]
    I = float(c.nuclear_spin_I)
    return 0.5 * c.hyperfine_A * (F * (F + 1) - I * (I + 1) - 0.75)


def _energy_shift(c: HyperfineConstants, label: Label, B):
    """Breit-Rabi energy minus its zero-field value, free of the large constant.

    Written as ``dE/2 * u / (sqrt(1+u) + 1)`` so that the shift keeps full
    relative precision even where it is many orders below the hyperfine splitting.
    """
    F, m = label
    B = np.asarray(B, dtype=float)
    I = float(c.nuclear_spin_I)
    mu = c.bohr_magneton_over_h
    if abs(m) == c.F_upper:
        return math.copysign(1.0, m) * (0.5 * c.g_J + c.g_I * I) * mu * B
    dE = c.hyperfine_A * (I + 0.5)
    x = (c.g_J - c.g_I) * mu * B / dE
    u = 4.0 * m * x / (2 * I + 1) + x * x
    if np.any(1.0 + u <= 0):
        raise InvalidConstantsError("Breit-Rabi square-root argument is nonpositive")
    sign = 1.0 if F == c.F_upper else -1.0
    return c.g_I * mu * m * B + sign * 0.5 * dE * u / (np.sqrt(1.0 + u) + 1.0)


def level_energy(c: HyperfineConstants, label, B):
    """Closed-form energy (Hz) of one adiabatically labelled level; ``B`` may be an array."""
    F, m = _check_label(c, label)
    return _zero_field_energy(c, F) + _energy_shift(c, (F, m), B)


def level_energies_closed_form(c: HyperfineConstants, B: float) -> list[ZeemanLevel]:
    if B < 0:
        raise ValueError("field must be nonnegative")
    return [ZeemanLevel(lab, float(level_energy(c, lab, B)), float(B)) for lab in c.labels()]


def _spin_matrices(j: float):
    dim = int(round(2 * j + 1))
    m = j - np.arange(dim)  # descending m
    jz = np.diag(m)
    jp = np.zeros((dim, dim))
    for k in range(1, dim):
        jp[k - 1, k] = math.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    return jz, jp, jp.T, m


def hamiltonian(c: HyperfineConstants, B: float):
    """Full hyperfine + Zeeman matrix (Hz) in the |m_I, m_J> product basis.

    Returns ``(H, mF)`` with ``mF`` the F_z eigenvalue of each basis vector.
    """
    I = float(c.nuclear_spin_I)
    iz, ip, im, mi = _spin_matrices(I)
    jz, jp, jm, mj = _spin_matrices(0.5)
    one_i, one_j = np.eye(len(mi)), np.eye(2)
    IdotJ = np.kron(iz, jz) + 0.5 * (np.kron(ip, jm) + np.kron(im, jp))
    zeeman = c.g_J * np.kron(one_i, jz) + c.g_I * np.kron(iz, one_j)
    H = c.hyperfine_A * IdotJ + c.bohr_magneton_over_h * B * zeeman
    mF = np.add.outer(mi, mj).ravel()
    return H, mF


def level_energies_diagonalize(c: HyperfineConstants, B: float) -> list[ZeemanLevel]:
    """Exact eigenvalues of :func:`hamiltonian`, labelled by adiabatic continuation.

    The matrix commutes with F_z, so each m_F block is diagonalized on its own;
    within a block the two levels never cross, which fixes the F label from the
    sign of A.
    """
    if B < 0:
        raise ValueError("field must be nonnegative")
    H, mF = hamiltonian(c, B)
    energies: dict[Label, float] = {}
    for m in range(-c.F_upper, c.F_upper + 1):
        idx = np.flatnonzero(np.isclose(mF, m))
        vals = np.linalg.eigvalsh(H[np.ix_(idx, idx)])
        if len(vals) == 1:
            energies[(c.F_upper, m)] = float(vals[0])
            continue
        lo, hi = float(vals[0]), float(vals[1])
        if c.hyperfine_A > 0:
            energies[(c.F_upper, m)], energies[(c.F_lower, m)] = hi, lo
        else:
            energies[(c.F_upper, m)], energies[(c.F_lower, m)] = lo, hi
    return [ZeemanLevel(lab, energies[lab], float(B)) for lab in c.labels()]


def _as_transition(t) -> Transition:
    if isinstance(t, Transition):
        return t
    a, b = t
    return Transition(tuple(a), tuple(b))


def _signed_parts(c: HyperfineConstants, t: Transition, B):
    """Return (constant part, field-dependent part) of E(upper) - E(lower)."""
    lo = _check_label(c, t.lower)
    up = _check_label(c, t.upper)
    const = _zero_field_energy(c, up[0]) - _zero_field_energy(c, lo[0])
    return const, _energy_shift(c, up, B) - _energy_shift(c, lo, B)


def transition_frequency(c: HyperfineConstants, t, B):
    """|E(upper) - E(lower)| in Hz; symmetric in the two labels."""
    const, shift = _signed_parts(c, _as_transition(t), B)
    return np.abs(const + shift) if np.ndim(shift) else abs(float(const + shift))


def _stencils(g, B, h):
    gm2, gm1, g0, gp1, gp2 = (g(B + k * h) for k in (-2, -1, 0, 1, 2))
    d1 = (gm2 - 8.0 * gm1 + 8.0 * gp1 - gp2) / (12.0 * h)
    dd = (-gm2 + 16.0 * gm1 - 30.0 * g0 + 16.0 * gp1 - gp2) / (12.0 * h * h)
    scale = np.maximum.reduce([np.abs(v) for v in (gm2, gm1, g0, gp1, gp2)])
    return d1, dd, scale


def _derivative(c: HyperfineConstants, t: Transition, B, h=DEFAULT_STEP):
    """First derivative of the *frequency* (sign-corrected) by 5-point stencil."""
    const, _ = _signed_parts(c, t, 0.0)
    g = lambda b: _signed_parts(c, t, b)[1]
    d1, _, _ = _stencils(g, B, h)
    sign = np.sign(const + g(B))
    return np.where(sign == 0, 1.0, sign) * d1


def field_sensitivity(c: HyperfineConstants, t, B: float, step: float = DEFAULT_STEP) -> FieldSensitivity:
    """Frequency, slope and quadratic coefficient of a transition at field ``B``.

    Uses 5-point central stencils on the field-dependent part of the transition
    energy, and a second evaluation at ``step/2`` (Richardson check) to estimate
    the truncation part of the error.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if B - step < 0:
        raise ValueError("B - step must be nonnegative")
    t = _as_transition(t)
    const, shift0 = _signed_parts(c, t, B)
    sign = 1.0 if const + shift0 >= 0 else -1.0
    g = lambda b: _signed_parts(c, t, b)[1]
    d1, dd, scale = _stencils(g, B, step)
    d1h, ddh, _ = _stencils(g, B, step / 2)
    # round-off bounds of the two stencils (coefficient sums 18/12 and 64/12)
    round1 = 1.5 * _EPS * scale / step
    round2 = 5.4 * _EPS * scale / step**2
    d1_noise = float(round1 + abs(d1 - d1h))
    d2_noise = float(round2 + abs(dd - ddh)) / 2.0
    # natural curvature scale: the curvature itself, or slope/field for near-linear transitions
    ref = max(abs(dd), abs(d1) / max(B, step))
    ok = bool(ref == 0 or round2 <= 1e-3 * ref)
    if not ok:
        warnings.warn(f"stencil step {step:g} T is dominated by round-off", PrecisionWarning, stacklevel=2)
    return FieldSensitivity(
        at_field=float(B),
        f0=abs(float(const + shift0)),
        d1=sign * float(d1),
        d2=sign * float(dd) / 2.0,
        step_used=float(step),
        d1_noise=d1_noise,
        d2_noise=d2_noise,
        precision_ok=ok,
        transition=t,
    )


def find_clock_field(c: HyperfineConstants, t, bracket, step: float = DEFAULT_STEP,
                     xtol: float = 1e-15) -> float:
    """Field where the transition frequency is stationary, by Brent's method on d1(B)."""
    t = _as_transition(t)
    lo, hi = (float(v) for v in bracket)
    d1 = lambda b: float(_derivative(c, t, b, step))
    f_lo, f_hi = d1(lo), d1(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise NoRootError(f"d1 has no sign change on [{lo}, {hi}] T for {t.lower}<->{t.upper}")
    root = brentq(d1, lo, hi, xtol=xtol, rtol=4 * _EPS, maxiter=200)
    # round-off of the d1 stencil at this field
    _, shift = _signed_parts(c, t, root)
    noise = 1.5 * _EPS * max(abs(shift), 1.0) / step * 4
    resid = abs(d1(root))
    if resid > max(CLOCK_D1_TOLERANCE, noise):
        warnings.warn(
            f"clock field residual |d1| = {resid:.3g} Hz/T exceeds tolerance", PrecisionWarning, stacklevel=2
        )
    return float(root)


def enumerate_clock_fields(c: HyperfineConstants, B_range, grid_step: float = 1e-4) -> list[tuple[Transition, float]]:
    """All field-independent points of all level pairs inside ``B_range``, sorted by field.

    Each pair is scanned for sign changes of the signed slope on a grid and the
    bracket is refined with :func:`find_clock_field`. The transition is oriented
    lower -> upper by energy at the clock field.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    lo, hi = (float(v) for v in B_range)
    if not hi > lo:
        return []
    n = max(int(math.ceil((hi - lo) / grid_step)), 1)
    grid = np.linspace(lo, hi, n + 1)
    found = []
    for a, b in itertools.combinations(c.labels(), 2):
        t = Transition(a, b)
        g = lambda x, t=t: _signed_parts(c, t, x)[1]
        d1, _, _ = _stencils(g, grid, DEFAULT_STEP)
        s = np.sign(d1)
        idx = np.flatnonzero(s[:-1] * s[1:] < 0)
        hits = [float(grid[i]) for i in np.flatnonzero(s == 0)]
        for i in idx:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", PrecisionWarning)
                hits.append(find_clock_field(c, t, (grid[i], grid[i + 1])))
        for B in hits:
            ea, eb = level_energy(c, a, B), level_energy(c, b, B)
            found.append((Transition(a, b) if ea <= eb else Transition(b, a), B))
    found.sort(key=lambda item: item[1])
    return found
