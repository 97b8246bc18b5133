"""Scenario files: sectioned key-value text, strictly validated.

A scenario names its ``kind`` (clock-scan, ramsey, dfs, parabola) and the
sections that kind accepts. Unknown sections or keys are errors. Noise
sections list one component per key, ``<kind>[.<tag>] = p1, p2, ...``, summed
in file order.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .noise import ConstantOffset, LinearDrift, NoiseSpec, OrnsteinUhlenbeck, RandomWalk, Sinusoid, White

KINDS = ("clock-scan", "ramsey", "dfs", "parabola")
SHIPPED = ("paper-single-qubit", "paper-dfs", "paper-parabola", "zero-noise-sanity", "be9-clock-scan")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _label(text: str) -> tuple[int, int]:
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 2:
        raise ValueError("a level label is 'F, m_F'")
    return parts[0], parts[1]


def _field(text: str):
    return "clock" if text.strip() == "clock" else float(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("yes", "true", "on", "1"):
        return True
    if t in ("no", "false", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text: str) -> str:
    return text.strip()


# key -> parser; a "noise" entry marks a component-list section
_TRANSITION = {"lower": _label, "upper": _label, "field_T": _field, "clock_bracket_T": _floats}
_OUTPUT = {"figures": _bool}
SCHEMA = {
    "clock-scan": {
        "atom": {"constants": _str},
        "scan": {"B_min_T": float, "B_max_T": float, "grid_step_T": float},
        "output": _OUTPUT,
    },
    "ramsey": {
        "atom": {"constants": _str},
        "transition": _TRANSITION,
        "noise": "noise",
        "sequence": {
            "T_R_s": _floats, "phases": int, "shots_per_phase": int, "echo_fractions": _floats,
            "detuning_offset_hz": float, "ac_zeeman_shift_hz": float, "visibility": float,
            "dead_time_s": float, "trace_dt_s": float, "mode": _str, "bootstrap": int,
        },
        "output": _OUTPUT,
    },
    "dfs": {
        "atom": {"constants": _str},
        "transition": _TRANSITION,
        "common_noise": "noise",
        "differential_noise": "noise",
        "dfs": {
            "static_rate_hz": float, "window_centers_s": _floats, "window_points": int,
            "window_spacing_s": float, "shots": int, "decay_rate_per_s": float,
            "initial_contrast": float, "detection": _str, "lambda_bright": float,
            "lambda_bg": float, "trace_dt_s": float,
        },
        "output": _OUTPUT,
    },
    "parabola": {
        "atom": {"constants": _str},
        "transition": _TRANSITION,
        "parabola": {
            "half_width_T": float, "points": int, "measured_points": int,
            "sigma_B_T": float, "sigma_nu_hz": float, "B_list_T": _floats,
        },
        "output": _OUTPUT,
    },
}

_NOISE_KINDS = {
    "offset": (ConstantOffset, 1),
    "drift": (LinearDrift, 1),
    "random_walk": (RandomWalk, 1),
    "ou": (OrnsteinUhlenbeck, 2),
    "sinusoid": (Sinusoid, (2, 3)),
    "white": (White, 1),
}


def _noise_entry(key: str, text: str):
    kind = key.split(".", 1)[0]
    if kind not in _NOISE_KINDS:
        raise ValueError(f"unknown noise component {kind!r}; expected one of {sorted(_NOISE_KINDS)}")
    cls, nargs = _NOISE_KINDS[kind]
    args = _floats(text)
    ok = len(args) in nargs if isinstance(nargs, tuple) else len(args) == nargs
    if not ok:
        raise ValueError(f"{kind} takes {nargs} parameters, got {len(args)}")
    cls(*args)  # validate ranges now
    return args


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass
class Scenario:
    name: str
    kind: str
    seed: int
    sections: dict = field(default_factory=dict)
    source: str = "<string>"

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def noise(self, section: str, scale: float = 1.0) -> NoiseSpec:
        """Build a NoiseSpec; ``scale`` multiplies every amplitude-like parameter."""
        comps = []
        for key, args in self.sections.get(section, {}).items():
            cls, _ = _NOISE_KINDS[key.split(".", 1)[0]]
            if cls is OrnsteinUhlenbeck:
                comps.append(cls(args[0] * abs(scale), args[1]))
            elif cls is Sinusoid:
                comps.append(cls(args[0] * abs(scale), *args[1:]))
            elif cls is RandomWalk:
                comps.append(cls(args[0] * scale**2))
            elif cls is White:
                comps.append(cls(args[0] * abs(scale)))
            else:
                comps.append(cls(args[0] * scale))
        return NoiseSpec(comps)

    def dumps(self) -> str:
        lines = ["[scenario]", f"name = {self.name}", f"kind = {self.kind}", f"seed = {self.seed}", ""]
        for sec, items in self.sections.items():
            lines.append(f"[{sec}]")
            for k, v in items.items():
                lines.append(f"{k} = {_fmt(v)}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.name, self.kind, self.seed, self.sections) == (other.name, other.kind, other.seed, other.sections)


def loads(text: str, source: str = "<string>") -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " "), where=source) from exc
    if "scenario" not in cp:
        raise ConfigError("missing [scenario] section", where=source)
    head = dict(cp["scenario"])
    extra = set(head) - {"name", "kind", "seed"}
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", where=f"{source} [scenario]")
    kind = head.get("kind", "").strip()
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}", where=f"{source} [scenario] kind")
    try:
        seed = int(head.get("seed", "0"))
    except ValueError:
        raise ConfigError("seed must be an integer", where=f"{source} [scenario] seed") from None
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer", where=f"{source} [scenario] seed")
    schema = SCHEMA[kind]
    sections: dict = {}
    for sec in cp.sections():
        if sec == "scenario":
            continue
        if sec not in schema:
            raise ConfigError(f"unknown section for kind {kind!r}", where=f"{source} [{sec}]")
        spec = schema[sec]
        items = {}
        for key, raw in cp[sec].items():
            where = f"{source} [{sec}] {key}"
            try:
                if spec == "noise":
                    items[key] = _noise_entry(key, raw)
                elif key not in spec:
                    raise ConfigError(f"unknown key (allowed: {sorted(spec)})", where=where)
                else:
                    items[key] = spec[key](raw)
            except ConfigError:
                raise
            except (ValueError, TypeError) as exc:
                raise ConfigError(str(exc), where=where) from exc
        sections[sec] = items
    return Scenario(head.get("name", "").strip() or Path(source).stem, kind, seed, sections, source)


def load(path_or_name: str | Path) -> Scenario:
    """Read a scenario file, or a shipped scenario by name."""
    name = str(path_or_name)
    if name in SHIPPED:
        text = resources.files("ionmem").joinpath(f"data/{name}.ini").read_text()
        return loads(text, f"{name}.ini")
    p = Path(path_or_name)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", where=str(p)) from exc
    return loads(text, str(p))
