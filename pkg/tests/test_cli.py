import csv
import json
from pathlib import Path

import pytest

from ionmem import scenario
from ionmem.cli import main
from ionmem.constants import BE9, dumps_constants, load_constants
from ionmem.errors import ConfigError

SMALL_RAMSEY = """
[scenario]
name = small-ramsey
kind = ramsey
seed = 99

[transition]
lower = 2, 0
upper = 1, 1
field_T = clock
clock_bracket_T = 0.005, 0.02

[noise]
offset = 0.7e-6
ou = 0.1e-6, 1.0

[sequence]
T_R_s = 0.004, 1, 2, 4
phases = 12
shots_per_phase = 30
dead_time_s = 0.005
trace_dt_s = 0.05

[output]
figures = no
"""

SMALL_DFS = """
[scenario]
name = small-dfs
kind = dfs
seed = 5

[transition]
lower = 1, -1
upper = 2, -2
field_T = 0.0013

[common_noise]
ou = 0.1e-6, 0.1

[differential_noise]
ou = 0.589, 0.01

[dfs]
static_rate_hz = 125.0
window_centers_s = 0.0, 0.3
window_points = 10
window_spacing_s = 0.0005
shots = 20

[output]
figures = no
"""


def _tree(out: Path) -> dict:
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


@pytest.mark.parametrize("name", scenario.SHIPPED)
def test_shipped_scenarios_round_trip(name):
    sc = scenario.load(name)
    again = scenario.loads(sc.dumps())
    assert again == sc
    assert again.dumps() == sc.dumps()


def test_constants_round_trip(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(dumps_constants(BE9))
    assert load_constants(p) == BE9


def test_unknown_keys_are_errors():
    bad = SMALL_RAMSEY.replace("phases = 12", "phasess = 12")
    with pytest.raises(ConfigError, match="phasess"):
        scenario.loads(bad)
    with pytest.raises(ConfigError):
        scenario.loads(SMALL_RAMSEY.replace("[output]", "[outputs]"))
    with pytest.raises(ConfigError):
        scenario.loads(SMALL_RAMSEY.replace("ou = 0.1e-6, 1.0", "pink = 1.0"))
    with pytest.raises(ConfigError):
        scenario.loads(SMALL_RAMSEY.replace("seed = 99", "seed = -1"))


def test_unknown_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(SMALL_RAMSEY.replace("shots_per_phase", "shots_per_phse"))
    assert main(["ramsey", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "shots_per_phse" in capsys.readouterr().err


def test_malformed_constants_exit_code(tmp_path, capsys):
    consts = tmp_path / "atom.ini"
    consts.write_text("[atom]\nhyperfine_A_hz = -6.25e8\ng_J = two\n")
    cfg = tmp_path / "scan.ini"
    cfg.write_text(f"[scenario]\nkind = clock-scan\n[atom]\nconstants = {consts}\n[scan]\nB_max_T = 0.02\n")
    assert main(["clock-scan", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "atom.ini" in capsys.readouterr().err


def test_wrong_kind_exit_code(tmp_path):
    assert main(["dfs", "--config", "paper-single-qubit", "--out", str(tmp_path)]) == 2


def test_clock_scan_report(tmp_path, capsys):
    assert main(["clock-scan", "--config", "be9-clock-scan", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "clock_points.csv")))
    assert list(rows[0]) == ["lowerF", "lowerMF", "upperF", "upperMF", "clock_field_T", "f0_hz", "d2_hz_per_t2"]
    fields = [float(r["clock_field_T"]) for r in rows]
    assert any(abs(B - 0.01194) < 1e-4 for B in fields)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest) >= {"scenario_sha256", "code_version", "seed", "wall_time_s", "outputs"}
    assert "fig1_levels.png" in manifest["outputs"]
    assert json.loads(capsys.readouterr().out)["clock_points"]


def test_empty_range_gives_empty_report(tmp_path):
    cfg = tmp_path / "e.ini"
    cfg.write_text("[scenario]\nkind = clock-scan\n[scan]\nB_min_T = 0.01\nB_max_T = 0.01\n")
    assert main(["clock-scan", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "clock_points.csv").read_text().splitlines()
    assert len(lines) == 1


def test_parabola_outputs(tmp_path):
    assert main(["parabola", "--config", "paper-parabola", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "manifest.json").read_text())["summary"]
    assert summary["quadratic_fit_hz_per_t2"] == pytest.approx(summary["d2_hz_per_t2"], rel=0.01)
    assert (tmp_path / "parabola.csv").read_text().startswith("B_T,nu_hz\n")
    assert (tmp_path / "fig2_parabola.png").stat().st_size > 0


def test_parabola_single_point(tmp_path):
    text = scenario.load("paper-parabola").dumps().replace("points = 121", "points = 1")
    cfg = tmp_path / "one.ini"
    cfg.write_text(text.replace("measured_points = 15", "measured_points = 0"))
    assert main(["parabola", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "parabola.csv").read_text().splitlines()) == 2


def test_zero_noise_ramsey_has_unit_contrast(tmp_path):
    assert main(["ramsey", "--config", "zero-noise-sanity", "--out", str(tmp_path)]) == 0
    for row in csv.DictReader(open(tmp_path / "contrast.csv")):
        assert abs(float(row["contrast"]) - 1.0) <= 3 * float(row["contrast_sigma"])


def test_zero_gradient_dfs(tmp_path):
    cfg = tmp_path / "z.ini"
    cfg.write_text(SMALL_DFS.replace("static_rate_hz = 125.0", "static_rate_hz = 0.0")
                   .replace("ou = 0.589, 0.01", ""))
    assert main(["dfs", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    for row in csv.DictReader(open(tmp_path / "o" / "lifetime.csv")):
        assert float(row["p_psi_minus"]) == 0.0
    assert "no significant oscillation" in (tmp_path / "o" / "sinusoid_fit.txt").read_text()


@pytest.mark.parametrize("kind,text", [("ramsey", SMALL_RAMSEY), ("dfs", SMALL_DFS)], ids=["ramsey", "dfs"])
def test_determinism_across_workers(tmp_path, monkeypatch, kind, text):
    cfg = tmp_path / "s.ini"
    cfg.write_text(text.replace("figures = no", "figures = yes"))
    trees = []
    for workers in (1, 4, 8):
        monkeypatch.setenv("IONMEM_WORKERS", str(workers))
        out = tmp_path / f"w{workers}"
        assert main([kind, "--config", str(cfg), "--out", str(out)]) == 0
        trees.append(_tree(out))
    assert trees[0] == trees[1] == trees[2]
    assert any(k.endswith(".png") for k in trees[0])


def test_seed_override_changes_output(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(SMALL_RAMSEY)
    main(["ramsey", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["ramsey", "--config", str(cfg), "--seed", "100", "--out", str(tmp_path / "b")])
    assert _tree(tmp_path / "a")["contrast.csv"] != _tree(tmp_path / "b")["contrast.csv"]
    assert "seed = 100" in (tmp_path / "b" / "scenario.ini").read_text()


def test_serialized_scenario_reproduces_run(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(SMALL_RAMSEY)
    main(["ramsey", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["ramsey", "--config", str(tmp_path / "a" / "scenario.ini"), "--out", str(tmp_path / "b")])
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
