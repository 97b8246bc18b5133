"""Trapped-ion hyperfine qubit memory: spectra, noise, Ramsey and DFS experiments, fits."""

__version__ = "0.1.0"

from .constants import BE9, HyperfineConstants, load_constants  # noqa: E402,F401
from .hyperfine import (  # noqa: E402,F401
    FieldSensitivity,
    Transition,
    enumerate_clock_fields,
    field_sensitivity,
    find_clock_field,
    level_energies_closed_form,
    level_energies_diagonalize,
    transition_frequency,
)
