"""Sweep configuration files.

Grammar: INI sections with ``key = value`` lines (``#`` or ``;`` comments).

    [experiment]  name, n_atoms, chi, seed
    [grid]        gamma, window, t1, t2, t2_points, t2_span, theta, measure_angle
    [noise]       strength, step, pulse_frequency, area_rel_sd, separation_rel_sd,
                  phase_sd, correlation, trials
    [output]      dir, formats

Numeric grids accept ``start:step:stop`` (inclusive), comma lists, or a
single number.  Values given on the command line as ``section.key=value``
override the file.
"""

from __future__ import annotations

import configparser
import io
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import ConfigError
from .spin import MAX_ATOMS

EXPERIMENTS = ("sweep-qfi", "sweep-theta", "gain-map", "noise-robustness", "floquet-mc",
               "echo-run", "ops-check")
THETA_POLICIES = ("theta_r", "theta_p", "theta_qfi", "theta_mf")
FORMATS = ("csv", "json", "svg")


def parse_grid(text: str) -> np.ndarray:
    """``a:step:b`` (inclusive of b within 1e-9 step), ``a, b, c`` or ``a``."""
    text = text.strip()
    if not text:
        return np.array([])
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range {text!r} must be start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("range step must be positive")
        if stop < start:
            raise ValueError("range stop is below start")
        n = int(math.floor((stop - start) / step + 1e-9))
        return np.round(start + step * np.arange(n + 1), 12)
    return np.array([float(p) for p in text.split(",") if p.strip()])


def _float(text):
    return float(text)


def _int(text):
    val = float(text)
    if val != int(val):
        raise ValueError(f"{text!r} is not an integer")
    return int(val)


def _pair(text):
    vals = [float(p) for p in text.split(",")]
    if len(vals) != 2:
        raise ValueError("expected two comma-separated numbers")
    return tuple(vals)


def _float_or(word):
    def parse(text):
        if text.strip().lower() == word:
            return word
        return float(text)

    return parse


def _theta_list(text):
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        if tok in THETA_POLICIES:
            out.append(tok)
        else:
            try:
                out.append(float(tok))
            except ValueError:
                raise ValueError(
                    f"theta entry {tok!r} is neither a number nor one of {', '.join(THETA_POLICIES)}"
                ) from None
    return out


def _formats(text):
    out = [t.strip() for t in text.split(",") if t.strip()]
    bad = [f for f in out if f not in FORMATS]
    if bad:
        raise ValueError(f"unknown format(s) {bad}; choose from {', '.join(FORMATS)}")
    return out


def _str(text):
    return text.strip()


# (parser, default)
SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "experiment": {
        "name": (_str, None),
        "n_atoms": (_int, 100),
        "chi": (_float, 1.0),
        "seed": (_int, None),
    },
    "grid": {
        "gamma": (parse_grid, "0:0.02:0.5"),
        "window": (_pair, "0.25, 3.0"),
        "t1": (_float_or("optimal"), "optimal"),
        "t2": (_float_or("t1"), "t1"),
        "t2_points": (_int, 200),
        "t2_span": (_float, 2.0),
        "theta": (_theta_list, "theta_r, theta_p"),
        "measure_angle": (_float_or("optimal"), "optimal"),
    },
    "noise": {
        "strength": (_float, 0.1),
        "step": (_float, 0.01),
        "pulse_frequency": (_float, 500.0),
        "area_rel_sd": (_float, 0.0),
        "separation_rel_sd": (_float, 0.0),
        "phase_sd": (_float, 0.0),
        "correlation": (_str, "pulse"),
        "trials": (_int, 100),
    },
    "output": {
        "dir": (_str, "out"),
        "formats": (_formats, "csv,json"),
    },
}


@dataclass
class SweepConfig:
    experiment: str
    values: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    source: Optional[str] = None

    def __getitem__(self, dotted: str):
        return self.values[dotted]

    def get(self, dotted, default=None):
        return self.values.get(dotted, default)

    @property
    def stochastic(self) -> bool:
        return self.experiment == "floquet-mc" and any(
            self.values[f"noise.{k}"] > 0 for k in ("area_rel_sd", "separation_rel_sd", "phase_sd")
        )

    def to_ini(self) -> str:
        """Effective configuration, parseable by :func:`load_config`."""
        cp = configparser.ConfigParser(interpolation=None)
        for section, keys in SCHEMA.items():
            cp.add_section(section)
            for key in keys:
                if (section, key) == ("experiment", "name"):
                    cp.set(section, key, self.experiment)
                    continue
                val = self.raw.get(f"{section}.{key}")
                if val is not None:
                    cp.set(section, key, str(val))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, plus section header lines."""
    index = {}
    section = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            index.setdefault((section, None), n)
            continue
        m = re.match(r"^([A-Za-z0-9_\-]+)\s*[=:]", s)
        if m and section is not None:
            index.setdefault((section, m.group(1).lower()), n)
    return index


def _where(source, lines, section, key):
    line = lines.get((section, key))
    loc = f"{source}:{line}" if line else (source or "<config>")
    name = f"{section}.{key}" if key else f"[{section}]"
    return f"{loc}: {name}"


def _parse(text: str, source: str, experiment: Optional[str], overrides) -> tuple[SweepConfig, list]:
    diags = []
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        return None, [f"{source}: {str(exc).splitlines()[0]}"]

    raw = {}
    for section in cp.sections():
        sec = section.lower()
        if sec not in SCHEMA:
            diags.append(f"{_where(source, lines, sec, None)}: unknown section "
                         f"(expected one of {', '.join(SCHEMA)})")
            continue
        for key, val in cp.items(section):
            if key not in SCHEMA[sec]:
                diags.append(f"{_where(source, lines, sec, key)}: unknown key")
                continue
            raw[f"{sec}.{key}"] = val

    for item in overrides or ():
        key, sep, val = item.partition("=")
        key = key.strip().lower()
        if not sep:
            diags.append(f"--set {item!r}: expected key=value")
            continue
        if "." not in key:
            owners = [s for s, keys in SCHEMA.items() if key in keys]
            if len(owners) != 1:
                diags.append(f"--set {item!r}: key is unknown or ambiguous; use section.key")
                continue
            key = f"{owners[0]}.{key}"
        sec, _, k = key.partition(".")
        if sec not in SCHEMA or k not in SCHEMA[sec]:
            diags.append(f"--set {item!r}: unknown key {key}")
            continue
        raw[key] = val.strip()
        lines[(sec, k)] = None

    name = raw.get("experiment.name")
    if experiment is None:
        experiment = name
    elif name is not None and name != experiment:
        diags.append(f"{_where(source, lines, 'experiment', 'name')}: file is for {name!r} "
                     f"but {experiment!r} was requested")
    if experiment not in EXPERIMENTS:
        diags.append(f"{_where(source, lines, 'experiment', 'name')}: experiment must be one of "
                     f"{', '.join(EXPERIMENTS)} (got {experiment!r})")

    values = {}
    for sec, keys in SCHEMA.items():
        for key, (parse, default) in keys.items():
            dotted = f"{sec}.{key}"
            if dotted == "experiment.name":
                continue
            text_val = raw.get(dotted, default)
            if text_val is None:
                values[dotted] = None
                continue
            if dotted not in raw:
                raw[dotted] = text_val
            try:
                values[dotted] = parse(str(text_val))
            except (ValueError, TypeError) as exc:
                diags.append(f"{_where(source, lines, sec, key)}: {exc}")
                values[dotted] = None
    cfg = SweepConfig(experiment=experiment, values=values, raw=raw, source=source)
    diags += _check_ranges(cfg, source, lines)
    return cfg, diags


def _check_ranges(cfg: SweepConfig, source, lines) -> list:
    out = []
    v = cfg.values

    def bad(dotted, msg):
        sec, key = dotted.split(".")
        out.append(f"{_where(source, lines, sec, key)}: {msg}")

    n = v.get("experiment.n_atoms")
    if n is not None and not (1 <= n <= MAX_ATOMS):
        bad("experiment.n_atoms", f"must satisfy 1 <= n_atoms <= {MAX_ATOMS}")
    chi = v.get("experiment.chi")
    if chi is not None and (chi <= 0 or not math.isfinite(chi)):
        bad("experiment.chi", "must be a positive finite number (time is measured in 1/chi)")
    seed = v.get("experiment.seed")
    if seed is not None and not (0 <= seed < 2 ** 64):
        bad("experiment.seed", "must be a 64-bit unsigned integer")
    gam = v.get("grid.gamma")
    if gam is not None:
        if len(gam) == 0:
            bad("grid.gamma", "grid is empty")
        elif np.any((gam < 0) | (gam > 0.5)):
            bad("grid.gamma", f"values must satisfy 0 <= gamma <= 0.5 (got {gam.min():g}..{gam.max():g})")
    win = v.get("grid.window")
    if win is not None and not (0 <= win[0] < win[1]):
        bad("grid.window", "window factors must satisfy 0 <= lo < hi")
    for key in ("grid.t1", "grid.t2"):
        val = v.get(key)
        if isinstance(val, float) and not (val >= 0 and math.isfinite(val)):
            bad(key, "time must be >= 0")
    if isinstance(v.get("grid.t1"), float) and v["grid.t1"] == 0 and cfg.experiment in (
            "sweep-theta", "gain-map", "noise-robustness", "floquet-mc"):
        bad("grid.t1", "t1 must be positive for this experiment")
    if v.get("grid.t2_points") is not None and v["grid.t2_points"] < 3:
        bad("grid.t2_points", "need at least 3 points")
    if v.get("grid.t2_span") is not None and v["grid.t2_span"] <= 0:
        bad("grid.t2_span", "must be positive")
    if v.get("grid.theta") is not None and len(v["grid.theta"]) == 0:
        bad("grid.theta", "list is empty")
    s, h = v.get("noise.strength"), v.get("noise.step")
    if s is not None and not (0 <= s < 1):
        bad("noise.strength", "must satisfy 0 <= N < 1")
    if s is not None and h is not None and cfg.experiment == "noise-robustness":
        if not (h > 0 and s - h > 0 and s + h < 1):
            bad("noise.step", f"need 0 < strength - step and strength + step < 1 (strength={s}, step={h})")
    f = v.get("noise.pulse_frequency")
    if f is not None and f <= 0:
        bad("noise.pulse_frequency", "must be positive")
    for key in ("noise.area_rel_sd", "noise.separation_rel_sd", "noise.phase_sd"):
        if v.get(key) is not None and v[key] < 0:
            bad(key, "standard deviation must be >= 0")
    if v.get("noise.correlation") not in (None, "pulse", "trial"):
        bad("noise.correlation", "must be 'pulse' or 'trial'")
    if v.get("noise.trials") is not None and v["noise.trials"] < 1:
        bad("noise.trials", "must be >= 1")
    if not out and cfg.experiment in EXPERIMENTS and cfg.stochastic and seed is None:
        bad("experiment.seed", "a seed is required when pulse noise is enabled")
    return out


def read_text(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"]) from None


def validate(path, experiment: Optional[str] = None, overrides=()) -> list:
    """All diagnostics for a config file; empty when it is valid.  No side effects."""
    _, diags = _parse(read_text(path), str(path), experiment, overrides)
    return diags


def load_config(path=None, experiment: Optional[str] = None, overrides=(), text=None) -> SweepConfig:
    if text is None:
        text = read_text(path) if path is not None else ""
    cfg, diags = _parse(text, str(path) if path else "<config>", experiment, overrides)
    if diags:
        raise ConfigError(diags)
    return cfg
