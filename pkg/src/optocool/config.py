"""Flat key-value parameter files.

Sections ``[physical]``, ``[effective]``, ``[sweep]`` and ``[solver]``. Values
are numbers or comma-separated lists, optionally followed by one unit token::

    [physical]
    omega    = 125.66370614359172e6, 125.66370614359172e6  rad/s
    omega_c  = 500e12                                      Hz
    P1       = 4                                           uW

    [effective]
    kappa1   = 20      w1
    phi      = 0.5     pi
    Lambda   = 0.1, 0.05

    [sweep]
    preset   = fig5
    axis1    = Lambda[2]
    axis1_relative_to = Lambda[1]
    axis1_range = 0.2, 0.8, 101

Physical frequencies are stored in rad/s and accept ``rad/s`` or ``Hz``
(multiplied by 2 pi). Effective frequencies are in units of omega_1 (``w1``,
the default). See ``docs/config_schema.md`` for every key.
"""

import configparser
import math

import numpy as np

from .meanfield import MeanFieldSolverConfig
from .model import HBAR, EffectiveParams, PhysicalParams, ValidationError
from .sweep import Axis, SweepSpec, grid, preset

__all__ = ["read_config", "parse_value", "physical_from_section",
           "effective_from_section", "solver_from_section", "sweep_from_config",
           "parse_override"]

_UNITS = {
    "rad/s": 1.0,
    "hz": 2.0 * math.pi,
    "khz": 2.0e3 * math.pi,
    "mhz": 2.0e6 * math.pi,
    "ghz": 2.0e9 * math.pi,
    "thz": 2.0e12 * math.pi,
    "w": 1.0,
    "mw": 1e-3,
    "uw": 1e-6,
    "nw": 1e-9,
    "j*s": 1.0,
    "js": 1.0,
    "w1": 1.0,
    "rad": 1.0,
    "pi": math.pi,
    "1": 1.0,
}

_PHYS_KIND = {
    "omega": "freq", "gamma": "freq", "g1": "freq", "g2": "freq", "eta": "freq",
    "omega_c": "freq", "omega_L": "freq", "kappa1": "freq", "kappa2": "freq",
    "chi0": "freq", "delta_c": "freq", "delta_c_prime": "freq",
    "P1": "power", "P2": "power", "hbar": "action",
}
_EFF_KIND = {
    "omega": "w1", "gamma": "w1", "G1": "w1", "Lambda": "w1", "kappa1": "w1",
    "delta_c": "w1", "chi_mag": "w1", "phi": "angle", "n_th": "1",
}
_ALLOWED = {
    "freq": {"rad/s", "hz", "khz", "mhz", "ghz", "thz"},
    "power": {"w", "mw", "uw", "nw"},
    "action": {"j*s", "js"},
    "w1": {"w1"},
    "angle": {"rad", "pi"},
    "1": {"1"},
}
_DEFAULT_UNIT = {"freq": "rad/s", "power": "w", "action": "j*s", "w1": "w1",
                 "angle": "rad", "1": "1"}


def parse_value(text, kind=None, key="value"):
    """Parse ``"1, 2, 3 unit"`` into a float or a list of floats, unit applied."""
    parts = [t.strip() for t in text.strip().split(",")]
    unit = None
    last = parts[-1].split()
    if len(last) == 2:
        parts[-1], unit = last[0], last[1].lower()
    elif len(last) > 2:
        raise ValidationError(key, f"cannot parse {text!r}")
    if unit is None:
        unit = _DEFAULT_UNIT[kind] if kind else "1"
    if unit not in _UNITS:
        raise ValidationError(key, f"unknown unit {unit!r}")
    if kind and unit not in _ALLOWED[kind]:
        raise ValidationError(key, f"unit {unit!r} not allowed here; use one of "
                              f"{sorted(_ALLOWED[kind])}")
    nums = [t for t in parts if t]
    if not nums:
        raise ValidationError(key, "empty value")
    try:
        vals = [float(v) * _UNITS[unit] for v in nums]
    except ValueError as exc:
        raise ValidationError(key, f"cannot parse {text!r}") from exc
    return vals[0] if len(parts) == 1 else vals


def read_config(path_or_text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                   interpolation=None)
    cp.optionxform = str  # keep case: Lambda, P1
    if "\n" in path_or_text or "[" in path_or_text:
        cp.read_string(path_or_text)
    else:
        with open(path_or_text, encoding="utf-8") as fh:
            cp.read_file(fh)
    return cp


def _section(cp, name, kinds):
    out = {}
    if not cp.has_section(name):
        return out
    for key, raw in cp.items(name):
        if key not in kinds:
            raise ValidationError(key, f"unknown key in [{name}]")
        out[key] = parse_value(raw, kinds[key], key)
    return out


def physical_from_section(cp, base=None):
    vals = _section(cp, "physical", _PHYS_KIND)
    if base is not None:
        kw = {k: getattr(base, k) for k in _PHYS_KIND}
        kw.update(vals)
    else:
        kw = vals
        kw.setdefault("hbar", HBAR)
    missing = [k for k in _PHYS_KIND if k not in kw]
    if missing:
        raise ValidationError(missing[0], "missing from [physical]")
    return PhysicalParams(**kw)


def effective_values(cp):
    """Parsed ``[effective]`` entries as a ``{key: value}`` dict."""
    return _section(cp, "effective", _EFF_KIND)


def effective_from_section(cp, base=None):
    vals = effective_values(cp)
    if base is not None:
        return base.__class__(**{**base.to_dict(), **vals})
    required = ("omega", "gamma", "G1", "Lambda", "kappa1", "delta_c")
    for k in required:
        if k not in vals:
            raise ValidationError(k, "missing from [effective]")
    return EffectiveParams(**vals)


def solver_from_section(cp):
    if not cp.has_section("solver"):
        return MeanFieldSolverConfig()
    kw = {}
    for key, raw in cp.items("solver"):
        if key in ("tolerance", "time_step_init", "relaxation_tolerance", "blowup"):
            kw[key] = float(raw)
        elif key == "max_iterations":
            kw[key] = int(raw)
        elif key == "strategy":
            kw[key] = raw.strip()
        else:
            raise ValidationError(key, "unknown key in [solver]")
    return MeanFieldSolverConfig(**kw)


def _axis(sec, name):
    path = sec.get(name)
    if path is None:
        return None
    rel = sec.get(f"{name}_relative_to")
    if f"{name}_values" in sec:
        values = np.array(parse_value(sec[f"{name}_values"]), dtype=float).reshape(-1)
    elif f"{name}_range" in sec:
        lo, hi, n = parse_value(sec[f"{name}_range"])
        values = grid(lo, hi, int(n))
    else:
        raise ValidationError(name, f"needs {name}_values or {name}_range")
    return Axis(path.strip(), values, rel.strip() if rel else None)


def sweep_from_config(cp, grid_points=None):
    """SweepSpec from ``[sweep]`` (optionally seeded by a preset) and ``[effective]``."""
    sec = dict(cp.items("sweep")) if cp.has_section("sweep") else {}
    pid = sec.get("preset")
    if pid:
        spec = preset(pid.strip(), grid_points)
        if cp.has_section("effective"):
            spec = spec.resolve(effective_values(cp))
    else:
        spec = SweepSpec(base=effective_from_section(cp),
                         axis1=Axis("kappa1", [1.0]))
    ax1 = _axis(sec, "axis1")
    ax2 = _axis(sec, "axis2")
    if ax1 is not None:
        spec.axis1 = ax1
    elif not pid:
        raise ValidationError("axis1", "missing from [sweep]")
    if ax2 is not None:
        spec.axis2 = ax2
    if "outputs" in sec:
        spec.outputs = tuple(o.strip() for o in sec["outputs"].split(",") if o.strip())
    return spec


def parse_override(text, level="effective"):
    """``"path=value"`` -> ``(path, value)`` with units applied for ``level``.

    ``level`` is ``"effective"`` (frequencies in units of omega_1) or
    ``"physical"`` (SI).
    """
    if "=" not in text:
        raise ValidationError(text, "override must look like path=value")
    path, raw = text.split("=", 1)
    path = path.strip()
    kinds = _EFF_KIND if level == "effective" else _PHYS_KIND
    kind = kinds.get(path.split("[")[0])
    if kind is None:
        raise ValidationError(path, f"unknown {level} parameter")
    return path, parse_value(raw, kind, path)
