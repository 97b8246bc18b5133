"""Atomic constants for a J=1/2 ground state and their key-value file format."""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .errors import ConfigError, InvalidConstantsError

CONSTANTS_KEYS = (
    "hyperfine_A_hz",
    "g_J",
    "g_I",
    "nuclear_spin_2I",
    "mu_B_over_h_hz_per_t",
)


@dataclass(frozen=True)
class HyperfineConstants:
    """Inputs of the ground-state hyperfine + Zeeman Hamiltonian.

    ``H/h = A I.J + mu_B B (g_J J_z + g_I I_z) / h``; ``g_I`` is in the
    Bohr-magneton convention and carries its sign.
    """

    hyperfine_A: float
    g_J: float
    g_I: float
    nuclear_spin_I: Fraction
    bohr_magneton_over_h: float

    def __post_init__(self):
        I = Fraction(self.nuclear_spin_I)
        object.__setattr__(self, "nuclear_spin_I", I)
        if I.denominator != 2 or I < Fraction(1, 2):
            raise InvalidConstantsError(f"nuclear spin must be half-integer >= 1/2, got {I}")
        for name in ("hyperfine_A", "g_J", "g_I", "bohr_magneton_over_h"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidConstantsError(f"{name} is not finite")
        if self.bohr_magneton_over_h <= 0:
            raise InvalidConstantsError("bohr_magneton_over_h must be positive")
        if self.g_J <= 0:
            raise InvalidConstantsError("g_J must be positive")
        if self.hyperfine_A == 0:
            raise InvalidConstantsError("hyperfine_A must be nonzero")

    @property
    def two_I(self) -> int:
        return int(2 * self.nuclear_spin_I)

    @property
    def F_upper(self) -> int:
        """F = I + 1/2."""
        return int(self.nuclear_spin_I + Fraction(1, 2))

    @property
    def F_lower(self) -> int:
        return int(self.nuclear_spin_I - Fraction(1, 2))

    def labels(self) -> list[tuple[int, int]]:
        """All (F, m_F) labels, upper-F manifold first, m_F ascending."""
        out = [(self.F_upper, m) for m in range(-self.F_upper, self.F_upper + 1)]
        out += [(self.F_lower, m) for m in range(-self.F_lower, self.F_lower + 1)]
        return out


def _parse(text: str, source: str) -> HyperfineConstants:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " "), where=source) from exc
    if "atom" not in cp:
        raise ConfigError("missing [atom] section", where=source)
    sec = cp["atom"]
    unknown = set(sec) - set(CONSTANTS_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", where=f"{source} [atom]")
    missing = [k for k in CONSTANTS_KEYS if k not in sec]
    if missing:
        raise ConfigError(f"missing keys {missing}", where=f"{source} [atom]")
    try:
        two_I = int(sec["nuclear_spin_2I"])
        vals = {k: float(sec[k]) for k in CONSTANTS_KEYS if k != "nuclear_spin_2I"}
    except ValueError as exc:
        raise ConfigError(str(exc), where=f"{source} [atom]") from exc
    if two_I < 1 or two_I % 2 != 1:
        raise ConfigError("nuclear_spin_2I must be an odd positive integer",
                          where=f"{source} [atom] nuclear_spin_2I")
    try:
        return HyperfineConstants(
            hyperfine_A=vals["hyperfine_A_hz"],
            g_J=vals["g_J"],
            g_I=vals["g_I"],
            nuclear_spin_I=Fraction(two_I, 2),
            bohr_magneton_over_h=vals["mu_B_over_h_hz_per_t"],
        )
    except InvalidConstantsError as exc:
        raise ConfigError(str(exc), where=f"{source} [atom]") from exc


def load_constants(path: str | Path) -> HyperfineConstants:
    """Read a constants file. ``"be9"`` loads the shipped defaults."""
    if str(path) == "be9":
        return BE9
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read constants file: {exc}", where=str(p)) from exc
    return _parse(text, str(p))


def dumps_constants(c: HyperfineConstants) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["atom"] = {
        "hyperfine_A_hz": repr(c.hyperfine_A),
        "g_J": repr(c.g_J),
        "g_I": repr(c.g_I),
        "nuclear_spin_2I": str(c.two_I),
        "mu_B_over_h_hz_per_t": repr(c.bohr_magneton_over_h),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _load_default() -> HyperfineConstants:
    text = resources.files("ionmem").joinpath("data/be9.ini").read_text()
    return _parse(text, "be9.ini")


BE9 = _load_default()
