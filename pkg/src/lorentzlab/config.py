"""Scenario configuration: a small sectioned key-value format.

Explicitness over convenience: every key must belong to the schema below,
values are decimal numbers (exponent notation allowed), integers, booleans
or bare strings, and there are no environment-variable overrides.  The
parse -> dump -> parse round trip is the identity.
"""

from __future__ import annotations

import re

# section -> key -> type tag ("float", "int", "str", "bool")
SCHEMA = {
    "scenario": {
        "metric": "str",
        "seed": "int",
        "family_count": "int",
        "family_radius": "float",
        "s_minus": "float",
        "s_plus": "float",
        "t0_max": "float",
    },
    "metric_params": {
        "amplitude": "float",
        "width": "float",
        "base": "str",
    },
    "interaction": {
        "a": "int",
        "a_oracle": "int",
        "hierarchy_n": "int",
        "rho1": "float",
        "rho2": "float",
        "rho3": "float",
        "rho4": "float",
        "tau_max": "float",
    },
    "adaptive": {
        "n_frames": "int",
        "input_scale": "float",
    },
    "reconstruction": {
        "delta": "float",
        "score_tolerance": "float",
        "n_stage_points": "int",
        "n_dirs": "int",
        "n_grid": "int",
        "seed_count": "int",
    },
    "output": {
        "directory": "str",
    },
    "diff": {
        "default_tolerance": "float",
    },
}

DEFAULTS = {
    "scenario": {"metric": "minkowski", "seed": 7, "family_count": 16,
                 "family_radius": 0.08, "s_minus": -0.12, "s_plus": 0.12,
                 "t0_max": 0.05},
    "metric_params": {},
    "interaction": {"a": 6, "a_oracle": 2, "hierarchy_n": 100, "rho1": 0.45,
                    "rho2": 0.4, "rho3": 0.35, "rho4": 0.3, "tau_max": 2000.0},
    "adaptive": {"n_frames": 25, "input_scale": 1e-4},
    "reconstruction": {"delta": 0.05, "score_tolerance": 1e-4,
                       "n_stage_points": 20, "n_dirs": 24, "n_grid": 12,
                       "seed_count": 200},
    "output": {"directory": "out"},
    "diff": {"default_tolerance": 1e-12},
}

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


class ConfigError(ValueError):
    """Parse or validation failure with line information."""


def _convert(section, key, raw, line_no):
    kind = SCHEMA[section][key]
    if kind == "str":
        return raw
    if kind == "bool":
        if raw in ("true", "false"):
            return raw == "true"
        raise ConfigError(f"line {line_no}: {key} expects true/false")
    if not _NUMBER.match(raw):
        raise ConfigError(f"line {line_no}: {key} expects a decimal number, "
                          f"got {raw!r}")
    if kind == "int":
        val = float(raw)
        if val != int(val):
            raise ConfigError(f"line {line_no}: {key} expects an integer")
        return int(val)
    return float(raw)


def parse(text):
    """Parse config text into {section: {key: value}} with defaults filled."""
    out = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    section = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"line {line_no}: unknown section "
                                  f"[{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected key = value")
        if section is None:
            raise ConfigError(f"line {line_no}: key outside any section")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"line {line_no}: unknown key {key!r} in "
                              f"[{section}]")
        out[section][key] = _convert(section, key, raw, line_no)
    return out


def parse_file(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse(f.read())


def dumps(cfg):
    """Canonical text form; parse(dumps(cfg)) == cfg."""
    lines = []
    for section in SCHEMA:
        vals = cfg.get(section, {})
        if not vals:
            continue
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            if key in vals:
                v = vals[key]
                if isinstance(v, bool):
                    v = "true" if v else "false"
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)
