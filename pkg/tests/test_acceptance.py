"""End-to-end acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict with the measured numbers; the
lines are printed in the pytest terminal summary (see conftest.py), or directly
when this file is run as a script.
"""
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from ionmem import scenario
from ionmem.cli import cmd_clock_scan, cmd_run_dfs, cmd_run_ramsey, main
from ionmem.constants import BE9
from ionmem.dfs import PHI_PLUS, PSI_MINUS, PSI_PLUS, collective_rotate, prepare_phi_minus_i
from ionmem.dynamics import RamseySequence, Rotation, run_ramsey_phase_scan
from ionmem.estimation import fit_phase_scan, memory_error_probability, simulate_ac_zeeman
from ionmem.hyperfine import (
    Transition,
    field_sensitivity,
    find_clock_field,
    level_energies_closed_form,
    level_energies_diagonalize,
    transition_frequency,
)
from ionmem.noise import NoiseSpec, predict_dephasing_time

RESULTS: list[str] = []

CLOCK = Transition((2, 0), (1, 1))
UP_A = Transition((2, 2), (1, 1))


def record(n: int, title: str, ok: bool, detail: str) -> None:
    RESULTS.append(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    assert ok, detail


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def b_star():
    return find_clock_field(BE9, CLOCK, (0.005, 0.02))


def test_criterion_01_clock_points(workdir):
    summary, dt = _timed(cmd_clock_scan, scenario.load("be9-clock-scan"), workdir / "c1")
    fields = {(tuple(lo), tuple(up)): B for lo, up, B in summary["clock_points"]}
    main_B = [B for (lo, up), B in fields.items() if {lo, up} == {(2, 0), (1, 1)}]
    ok_main = len(main_B) == 1 and 0.01184 <= main_B[0] <= 0.01204
    near = {t: min(fields.values(), key=lambda B: abs(B - t)) for t in (0.01196, 0.02231)}
    ok_near = all(abs(B - t) <= 0.01 * t for t, B in near.items())
    detail = (f"B*(2,0<->1,1) = {main_B[0] if main_B else None:.6g} T, "
              f"others {near[0.01196]:.6g} T and {near[0.02231]:.6g} T, runtime {dt:.2f} s")
    record(1, "clock-point reproduction", ok_main and ok_near and dt < 5.0, detail)


def test_criterion_02_sensitivity(b_star):
    t0 = time.perf_counter()
    s = field_sensitivity(BE9, CLOCK, b_star)
    ua = field_sensitivity(BE9, UP_A, b_star)
    fs = field_sensitivity(BE9, ((2, -2), (1, -1)), 1e-6, step=1e-7)
    dt = time.perf_counter() - t0
    d2 = s.d2 * 1e-12            # Hz/uT^2
    k_ua = abs(ua.d1) * 1e-9     # kHz/uT
    k_fs = abs(fs.d1) * 1e-9
    ok = (abs(d2 / 0.305 - 1) <= 0.05 and abs(k_ua / 17.6 - 1) <= 0.02
          and abs(k_fs / 21.0 - 1) <= 0.10 and dt < 1.0)
    record(2, "sensitivity coefficients", ok,
           f"d2 = {d2:.5f} Hz/uT^2, |d1(up-A)| = {k_ua:.4f} kHz/uT, field-sensitive slope = {k_fs:.3f} kHz/uT, "
           f"runtime {dt:.3f} s")


def test_criterion_03_transition_frequencies(b_star):
    nu = transition_frequency(BE9, CLOCK, b_star)
    nu_a = transition_frequency(BE9, UP_A, b_star)
    ok = 1.15e9 <= nu <= 1.30e9 and 0.95e9 <= nu_a <= 1.10e9
    record(3, "transition frequencies", ok, f"nu(up-down) = {nu / 1e9:.6f} GHz, nu(up-A) = {nu_a / 1e9:.6f} GHz")


def test_criterion_04_oracle_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    for B in np.random.default_rng(2024).uniform(0.0, 1.0, 100):
        cf = {lv.label: lv.energy for lv in level_energies_closed_form(BE9, B)}
        for lv in level_energies_diagonalize(BE9, B):
            worst = max(worst, abs(cf[lv.label] - lv.energy) / abs(lv.energy))
    dt = time.perf_counter() - t0
    record(4, "closed form vs diagonalization", worst <= 1e-10 and dt < 1.0,
           f"max relative difference {worst:.2e} over 100 fields, runtime {dt:.3f} s")


def test_criterion_05_dephasing_estimates(b_star):
    from ionmem.hyperfine import FieldSensitivity
    lin = FieldSensitivity(0.0, 1e9, 21e3 / 1e-6, 0.0, 1e-7)
    quad = FieldSensitivity(b_star, 1.2e9, 0.0, 0.305 / 1e-12, 1e-7)
    t1 = predict_dephasing_time(lin, 0.1e-6, 1.0)
    t2 = predict_dephasing_time(quad, 0.1e-6, 1.0)
    ok = abs(t1 / 76e-6 - 1) <= 0.05 and abs(t2 / 52.0 - 1) <= 0.05
    record(5, "dephasing estimates", ok, f"linear case {t1 * 1e6:.2f} us, quadratic case {t2:.2f} s")


def test_criterion_06_single_qubit_pipeline(workdir):
    sc = scenario.load("paper-single-qubit")
    summary, dt = _timed(cmd_run_ramsey, sc, workdir / "c6", workers=1)
    seq = sc.sections["sequence"]
    tau = summary["decay"].tau
    shape_ok = len(seq["T_R_s"]) >= 8 and seq["shots_per_phase"] <= 100 and seq["phases"] == 16
    ok = 13.1 <= tau <= 16.3 and shape_ok and dt < 120
    record(6, "single-qubit pipeline", ok,
           f"tau = {tau:.2f} +- {summary['decay'].tau_sigma:.2f} s (bootstrap "
           f"{summary['decay'].bootstrap_tau_sigma:.2f} s), {len(seq['T_R_s'])} intervals, "
           f"{seq['shots_per_phase']} shots x {seq['phases']} phases, runtime {dt:.1f} s")


def test_criterion_07_fringe_fit(b_star):
    sc = scenario.load("paper-single-qubit")
    sens = field_sensitivity(BE9, CLOCK, b_star)
    g = sc.sections["sequence"]
    phases = tuple(np.linspace(0, 2 * np.pi, 16, endpoint=False))
    seq = RamseySequence(0.004, phases, detuning_offset=g["detuning_offset_hz"], shots_per_phase=1000,
                         visibility=g["visibility"], dead_time=g["dead_time_s"], trace_dt=g["trace_dt_s"])
    fit = fit_phase_scan(run_ramsey_phase_scan(seq, sens, sc.noise("noise"), sc.seed, (0,)))
    zero = RamseySequence(0.004, phases, shots_per_phase=1000)
    zfits = [fit_phase_scan(run_ramsey_phase_scan(zero, sens, NoiseSpec(), s)) for s in range(5)]
    z_ok = all(abs(f.b - 1.0) <= 3 * f.b_sigma for f in zfits)
    ok = abs(fit.b - 0.933) <= 0.014 and z_ok
    record(7, "fringe fit", ok,
           f"4 ms scan b = {fit.b:.4f} +- {fit.b_sigma:.4f} (phi_D = {fit.phi_D:.3f} rad); zero-noise b = "
           + ", ".join(f"{f.b:.4f}+-{f.b_sigma:.4f}" for f in zfits))


def test_criterion_08_dfs_pipeline(workdir):
    summary, dt = _timed(cmd_run_dfs, scenario.load("paper-dfs"), workdir / "c8", workers=1)
    f, life = summary["frequency_hz"], summary["lifetime_s"]
    ok = f is not None and abs(f / 125.0 - 1) <= 0.01 and 5.7 <= life <= 8.9 and dt < 120
    record(8, "DFS pipeline", ok,
           f"frequency {f:.4f} Hz, lifetime {life:.2f} +- {summary['lifetime_sigma_s']:.2f} s, runtime {dt:.1f} s")


def test_criterion_09_exact_states():
    f1 = abs(np.vdot(PSI_PLUS, collective_rotate(prepare_phi_minus_i(), Rotation(math.pi / 2, -math.pi / 4))))
    f2 = abs(np.vdot(PHI_PLUS, collective_rotate(PSI_PLUS, Rotation(math.pi / 2, 0.0))))
    rng = np.random.default_rng(9)
    worst = max(abs(abs(np.vdot(PSI_MINUS, collective_rotate(PSI_MINUS, Rotation(t, p)))) - 1)
                for t, p in zip(rng.uniform(0, 4 * np.pi, 1000), rng.uniform(-np.pi, np.pi, 1000)))
    ok = abs(f1 - 1) <= 1e-12 and abs(f2 - 1) <= 1e-12 and worst <= 1e-12
    record(9, "exact-state properties", ok,
           f"|1-<Psi+|R R|Phi-i>| = {abs(f1 - 1):.1e}, |1-<Phi+|R R|Psi+>| = {abs(f2 - 1):.1e}, "
           f"singlet worst {worst:.1e}")


def test_criterion_10_memory_error():
    p = memory_error_probability(14.7, 200e-6)
    record(10, "memory error", 1.3e-5 <= p <= 1.4e-5, f"p = {p:.4e}")


def test_criterion_11_ac_zeeman():
    r = simulate_ac_zeeman(shift=1.81, repetitions=200, seed=0)
    ok = 0.62 <= r.coverage <= 0.74
    record(11, "AC Zeeman extrapolation", ok,
           f"1-sigma coverage {r.coverage:.3f} over 200 repetitions, mean shift {np.mean(r.shifts):.4f} Hz, "
           f"typical sigma {np.median(r.shift_sigmas):.4f} Hz")


def _tree(out: Path) -> dict:
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


def test_criterion_12_determinism(workdir, monkeypatch):
    kinds = {"paper-single-qubit": "ramsey", "paper-dfs": "dfs", "paper-parabola": "parabola",
             "zero-noise-sanity": "ramsey", "be9-clock-scan": "clock-scan"}
    assert set(kinds) == set(scenario.SHIPPED)
    bad = []
    t0 = time.perf_counter()
    for name, kind in kinds.items():
        trees = []
        for w in (1, 4, 8):
            monkeypatch.setenv("IONMEM_WORKERS", str(w))
            out = workdir / f"c12-{name}-w{w}"
            if out.exists():
                shutil.rmtree(out)
            assert main([kind, "--config", name, "--out", str(out)]) == 0
            trees.append(_tree(out))
        if not trees[0] == trees[1] == trees[2]:
            bad.append(name)
    dt = time.perf_counter() - t0
    record(12, "determinism", not bad,
           f"{len(kinds)} shipped scenarios at workers 1/4/8, "
           f"{'all byte-identical' if not bad else 'differences in ' + ', '.join(bad)} "
           f"(manifest.json excluded: it holds wall time), runtime {dt:.1f} s")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
