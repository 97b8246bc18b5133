"""``ionmem`` command line: clock-scan, ramsey, dfs, parabola.

Each command reads a scenario (file path or shipped name), writes CSV reports,
plot-data sidecars, PNG figures and a ``manifest.json`` into ``--out``.
Exit codes: 0 ok, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .constants import load_constants
from .dfs import DetectionModel, GradientSource, run_dfs_lifetime_experiment, window_delays
from .dynamics import RamseySequence, run_contrast_vs_interval, run_ramsey_phase_scan
from .errors import ConfigError, IonMemError, NoOscillationError
from .estimation import bootstrap_decay, fit_exponential_decay, fit_phase_scan, fit_sinusoid
from .hyperfine import (DEFAULT_STEP, Transition, enumerate_clock_fields, field_sensitivity, find_clock_field,
                        level_energy, transition_frequency)
from .noise import ConstantOffset, NoiseSpec, substream
from .scenario import Scenario, load

log = logging.getLogger("ionmem")

WORKERS_ENV = "IONMEM_WORKERS"


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _resolve_field(sc: Scenario, constants, t: Transition) -> float:
    B = sc.get("transition", "field_T", "clock")
    if B == "clock":
        bracket = sc.get("transition", "clock_bracket_T")
        if not bracket or len(bracket) != 2:
            raise ConfigError("field_T = clock needs clock_bracket_T = lo, hi", where=f"{sc.source} [transition]")
        return find_clock_field(constants, t, bracket)
    return float(B)


def _transition(sc: Scenario) -> Transition:
    try:
        return Transition(tuple(sc.get("transition", "lower")), tuple(sc.get("transition", "upper")))
    except TypeError:
        raise ConfigError("transition needs lower and upper labels", where=f"{sc.source} [transition]") from None


def _setup(sc: Scenario):
    constants = load_constants(sc.get("atom", "constants", "be9"))
    t = _transition(sc)
    B = _resolve_field(sc, constants, t)
    return constants, t, B, field_sensitivity(constants, t, B)


def _finish(out: Path, sc: Scenario, seed: int, started: float, extra=None):
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "scenario": sc.name,
        "scenario_sha256": sc.digest(),
        "code_version": __version__,
        "seed": seed,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "outputs": {str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest() for p in files},
    }
    if extra:
        manifest["summary"] = extra
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _prepare(sc: Scenario, seed: int | None, out: str | Path):
    if seed is not None:
        sc.seed = int(seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.ini").write_text(sc.dumps())
    return out, bool(sc.get("output", "figures", True))


# ---------------------------------------------------------------- clock-scan

def cmd_clock_scan(sc: Scenario, out, seed: int | None = None) -> dict:
    started = time.perf_counter()
    out, figures = _prepare(sc, seed, out)
    c = load_constants(sc.get("atom", "constants", "be9"))
    lo = sc.get("scan", "B_min_T", 0.0)
    hi = sc.get("scan", "B_max_T", 0.03)
    step = sc.get("scan", "grid_step_T", 1e-5)
    points = enumerate_clock_fields(c, (lo, hi), step)
    rows, sens_rows = [], []
    for t, B in points:
        s = _sensitivity_at(c, t, B)
        rows.append((*t.lower, *t.upper, B, s.f0, s.d2))
        for a, b in _all_pairs(c):
            s2 = _sensitivity_at(c, Transition(a, b), B)
            sens_rows.append((B, *a, *b, s2.f0, s2.d1, s2.d2))
    _write_rows(out / "clock_points.csv",
                ["lowerF", "lowerMF", "upperF", "upperMF", "clock_field_T", "f0_hz", "d2_hz_per_t2"], rows)
    _write_rows(out / "sensitivity.csv",
                ["clock_field_T", "lowerF", "lowerMF", "upperF", "upperMF", "f0_hz", "d1_hz_per_t", "d2_hz_per_t2"],
                sens_rows)
    if figures and hi > lo:
        grid = np.linspace(lo, hi, 400)
        energies = {lab: level_energy(c, lab, grid) for lab in c.labels()}
        plotting.plot_levels(grid, energies, [B for _, B in points], out / "fig1_levels.png")
    summary = {"clock_points": [[list(t.lower), list(t.upper), B] for t, B in points]}
    _finish(out, sc, sc.seed, started, summary)
    return summary


def _sensitivity_at(c, t, B):
    # stencil must stay at nonnegative fields
    return field_sensitivity(c, t, B, step=min(DEFAULT_STEP, B) if B > 0 else DEFAULT_STEP) if B > 0 \
        else field_sensitivity(c, t, DEFAULT_STEP)


def _all_pairs(c):
    labels = c.labels()
    return [(a, b) for i, a in enumerate(labels) for b in labels[i + 1:]]


# ---------------------------------------------------------------- ramsey

def cmd_run_ramsey(sc: Scenario, out, seed: int | None = None, workers: int = 1) -> dict:
    started = time.perf_counter()
    out, figures = _prepare(sc, seed, out)
    constants, t, B, sens = _setup(sc)
    g = lambda k, d=None: sc.get("sequence", k, d)
    T_list = g("T_R_s")
    if not T_list:
        raise ConfigError("T_R_s is required", where=f"{sc.source} [sequence]")
    n_ph = g("phases", 16)
    template = RamseySequence(
        T_R=0.0,
        analysis_phases=tuple(np.linspace(0, 2 * np.pi, n_ph, endpoint=False)),
        detuning_offset=g("detuning_offset_hz", 0.0) + g("ac_zeeman_shift_hz", 0.0),
        shots_per_phase=g("shots_per_phase", 100),
        visibility=g("visibility", 1.0),
        dead_time=g("dead_time_s", 0.0),
        mode=g("mode", "sequential-drift"),
        trace_dt=g("trace_dt_s"),
    )
    fractions = g("echo_fractions", ())
    noise = sc.noise("noise")

    if fractions:
        def per_T(T):
            return replace(template, T_R=T, echo_times=tuple(f * T for f in fractions))
        results = [(float(T), run_ramsey_phase_scan(per_T(float(T)), sens, noise, sc.seed, (k,), sc.name))
                   for k, T in enumerate(T_list)]
    else:
        results = run_contrast_vs_interval(T_list, template, sens, noise, sc.seed, workers, sc.name)

    scan_dir = out / "phase_scans"
    scan_dir.mkdir(exist_ok=True)
    fits, contrast = [], []
    for k, (T, rec) in enumerate(results):
        rec.write_csv(scan_dir / f"scan_{k:02d}_TR_{T:g}s.csv")
        f = fit_phase_scan(rec)
        fits.append(f)
        contrast.append((T, f.b, f.b_sigma))
    _write_rows(out / "phase_fits.csv",
                ["T_R_s", "a", "a_sigma", "b", "b_sigma", "d", "d_sigma", "phi_D", "phi_D_sigma", "chi2"],
                [(T, f.a, f.a_sigma, f.b, f.b_sigma, f.d, f.d_sigma, f.phi_D, f.phi_D_sigma, f.chi2)
                 for (T, _), f in zip(results, fits)])
    _write_rows(out / "contrast.csv", ["T_R_s", "contrast", "contrast_sigma"], contrast)

    decay = None
    if len(contrast) >= 3 and len({c[0] for c in contrast}) >= 2:
        decay = fit_exponential_decay(contrast)
        n_boot = g("bootstrap", 0)
        if n_boot and math.isfinite(decay.tau):
            decay.bootstrap_tau_sigma = bootstrap_decay(contrast, n_boot, sc.seed)
        decay.write(out / "decay_fit")

    # plot data: first scan and the one closest to 4 s
    pick = sorted({0, int(np.argmin([abs(T - 4.0) for T, _ in results]))})
    fig3a = []
    for i in pick:
        T, rec = results[i]
        f = fits[i]
        for p, k, n in zip(rec.phi, rec.upcount, rec.shots):
            fig3a.append((T, p, k / n, math.sqrt(max(k / n * (1 - k / n), 0.25 / n) / n)))
    _write_rows(out / "plot_fig3a.csv", ["T_R_s", "x", "y", "sigma"], fig3a)
    _write_rows(out / "plot_fig3b.csv", ["x", "y", "sigma"], contrast)
    if figures:
        scans = []
        for i in pick:
            T, rec = results[i]
            f = fits[i]
            p = rec.upcount / rec.shots
            model = lambda x, f=f: f.a - 0.5 * f.b * np.cos(f.d * x + f.phi_D)
            scans.append((f"T_R = {T:g} s", rec.phi, p, np.sqrt(np.maximum(p * (1 - p), 0.25 / rec.shots) / rec.shots), model))
        plotting.plot_phase_scans(scans, out / "fig3a_phase_scans.png")
        T, b, s = np.array(contrast).T
        plotting.plot_contrast(T, b, s, out / "fig3b_contrast.png",
                               decay.b0 if decay else None, decay.tau if decay else None)

    summary = {
        "clock_field_T": B,
        "contrast": [[T, b, s] for T, b, s in contrast],
        "tau_s": None if decay is None else decay.tau,
        "tau_sigma_s": None if decay is None else decay.tau_sigma,
        "b0": None if decay is None else decay.b0,
    }
    _finish(out, sc, sc.seed, started, summary)
    summary["fits"] = fits
    summary["decay"] = decay
    return summary


# ---------------------------------------------------------------- dfs

def cmd_run_dfs(sc: Scenario, out, seed: int | None = None, workers: int = 1) -> dict:
    started = time.perf_counter()
    out, figures = _prepare(sc, seed, out)
    constants, t, B, sens = _setup(sc)
    g = lambda k, d=None: sc.get("dfs", k, d)
    if sens.d1 == 0:
        raise ConfigError("DFS transition has zero field slope", where=f"{sc.source} [transition]")
    to_tesla = 1.0 / sens.d1
    rate = g("static_rate_hz", 0.0)
    diff = sc.noise("differential_noise", scale=to_tesla)
    comps = ((ConstantOffset(rate * to_tesla),) if rate else ()) + diff.components
    source = GradientSource(sc.noise("common_noise"), NoiseSpec(comps), sens, dt=g("trace_dt_s", 1e-3))
    centers = g("window_centers_s", (0.3, 1.0, 2.0))
    delays = window_delays(centers, g("window_points", 20), g("window_spacing_s", 5e-4))
    detection = DetectionModel(g("detection", "ideal"), g("lambda_bright", 30.0), g("lambda_bg", 2.0))
    run = run_dfs_lifetime_experiment(delays, source, g("shots", 200), sc.seed,
                                      decay_rate=g("decay_rate_per_s", 0.0),
                                      initial_contrast=g("initial_contrast", 1.0),
                                      detection=detection, workers=workers)
    rec = run.record
    rec.write_csv(out / "lifetime.csv")
    rec.write_counts_csv(out / "parity_counts.csv")
    _write_rows(out / "plot_fig4.csv", ["x", "y", "sigma"], rec.series())
    fit = None
    try:
        fit = fit_sinusoid(rec.series(), damped=True)
        fit.write(out / "sinusoid_fit")
    except NoOscillationError:
        (out / "sinusoid_fit.txt").write_text("# SinusoidFit\nno significant oscillation\n")
    if figures:
        plotting.plot_dfs_windows(rec.t_D, rec.p_psi_minus, rec.sigma, centers, out / "fig4_dfs.png", fit)
    summary = {
        "field_T": B,
        "detection_ok": rec.detection_ok,
        "frequency_hz": None if fit is None else fit.frequency,
        "frequency_sigma_hz": None if fit is None else fit.frequency_sigma,
        "lifetime_s": None if fit is None else fit.damping_time,
        "lifetime_sigma_s": None if fit is None else fit.damping_time_sigma,
        "max_p_psi_minus": float(rec.p_psi_minus.max()),
    }
    _finish(out, sc, sc.seed, started, summary)
    summary["fit"] = fit
    summary["record"] = rec
    return summary


# ---------------------------------------------------------------- parabola

def cmd_parabola(sc: Scenario, out, seed: int | None = None) -> dict:
    started = time.perf_counter()
    out, figures = _prepare(sc, seed, out)
    constants, t, B0, sens = _setup(sc)
    g = lambda k, d=None: sc.get("parabola", k, d)
    if g("B_list_T"):
        Bs = np.array(g("B_list_T"), float)
    else:
        n = g("points", 121)
        Bs = B0 + np.linspace(-1, 1, n) * g("half_width_T", 3e-4) if n > 1 else np.array([B0])
    nu = transition_frequency(constants, t, Bs)
    _write_rows(out / "parabola.csv", ["B_T", "nu_hz"], zip(Bs.astype(float), np.atleast_1d(nu).astype(float)))
    measured = None
    m = g("measured_points", 0)
    if m:
        rng = substream(sc.seed, 0)
        true_B = B0 + np.linspace(-1, 1, m) * g("half_width_T", 3e-4) * 0.9
        sB, snu = g("sigma_B_T", 3e-9), g("sigma_nu_hz", 0.3)
        mB = true_B + sB * rng.standard_normal(m)
        mnu = transition_frequency(constants, t, true_B) + snu * rng.standard_normal(m)
        measured = (mB, np.full(m, sB), mnu, np.full(m, snu))
        _write_rows(out / "measured.csv", ["B_T", "sigma_B_T", "nu_hz", "sigma_nu_hz"], zip(*measured))
    summary = {"clock_field_T": B0, "f0_hz": sens.f0, "d2_hz_per_t2": sens.d2}
    if len(Bs) >= 3:
        coef = np.polyfit(Bs - B0, np.atleast_1d(nu) - sens.f0, 2)
        summary["quadratic_fit_hz_per_t2"] = float(coef[0])
    if figures:
        plotting.plot_parabola(Bs, np.atleast_1d(nu), out / "fig2_parabola.png", measured, B0)
    _finish(out, sc, sc.seed, started, summary)
    return summary


COMMANDS = {
    "clock-scan": ("clock-scan", cmd_clock_scan),
    "ramsey": ("ramsey", cmd_run_ramsey),
    "dfs": ("dfs", cmd_run_dfs),
    "parabola": ("parabola", cmd_parabola),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ionmem", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario file, or a shipped scenario name")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the scenario)")
        p.add_argument("--out", required=True, help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    kind, fn = COMMANDS[args.command]
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        sc = load(args.config)
        if sc.kind != kind:
            raise ConfigError(f"scenario kind is {sc.kind!r}, command needs {kind!r}", where=sc.source)
        kwargs = {"workers": _workers()} if kind in ("ramsey", "dfs") else {}
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            fn(sc, args.out, args.seed, **kwargs)
    except ConfigError as exc:
        print(f"ionmem: config error: {exc}", file=sys.stderr)
        return 2
    except (IonMemError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"ionmem: error: {exc}", file=sys.stderr)
        return 1
    manifest = json.loads((Path(args.out) / "manifest.json").read_text())
    print(json.dumps(manifest.get("summary", {}), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
