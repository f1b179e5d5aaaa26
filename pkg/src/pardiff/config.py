"""Typed loading of TOML run configurations.

Sections: ``[model]`` (``name`` plus constructor parameters), ``[sphere]``,
``[rho_grid]``, ``[grid]``, ``[sim]`` and ``[lyapunov]``. Unknown sections or
keys are rejected so that typos surface as configuration errors.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigParseError
from .models import MODEL_REGISTRY, PressureLaw, TransportCoeffs, build_model
from .symbols import SymbolicSystem

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA: dict[str, dict[str, type | tuple]] = {
    "model": {"name": str, "d": int, "mu": float, "lambda": float, "pressure_coefficient": float,
              "pressure_exponent": float, "rho_ref": float, "velocity_ref": list, "s1": list,
              "k": float, "sigma": float, "mu0": float, "state_ref": list, "n2": int, "diffusivity": float},
    "sphere": {"count": int},
    "rho_grid": {"min": float, "max": float, "points": int, "omega": list},
    "grid": {"n": int, "box_length": float},
    "sim": {"data": str, "times": list, "t_end": float, "n_times": int, "width": float, "amplitudes": list,
            "amplitude": float, "component": int, "wavevector": list, "kmin": float, "kmax": float,
            "seed": int, "fit": bool, "nonlinear": bool, "dt": float, "octaves": int, "split_j": int,
            "write_fields": bool, "fit_points": int},
    "lyapunov": {"kappa": float, "eps0": float, "delta": float, "directions": int, "certify": bool},
}


@dataclass
class RunConfig:
    """Validated configuration document."""

    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    path: str = ""

    def section(self, name: str) -> dict[str, Any]:
        return self.sections.get(name, {})

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)


def _check_type(section: str, key: str, value, expected) -> Any:
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is int and isinstance(value, bool):
        raise ConfigParseError(f"[{section}] {key}: expected integer, got boolean")
    if not isinstance(value, expected):
        raise ConfigParseError(f"[{section}] {key}: expected {expected.__name__}, got {type(value).__name__}")
    return value


def parse_config(text: str, path: str = "<string>") -> RunConfig:
    """Parse and validate a TOML document.

    Raises:
        ConfigParseError: malformed TOML (with line and column), unknown
            sections or keys, or values of the wrong type.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ConfigParseError(f"{path}: {msg}", line, col) from exc
    sections = {}
    for name, body in raw.items():
        if name not in SCHEMA:
            raise ConfigParseError(f"{path}: unknown section [{name}]")
        if not isinstance(body, dict):
            raise ConfigParseError(f"{path}: [{name}] must be a table")
        checked = {}
        for key, value in body.items():
            if key not in SCHEMA[name]:
                raise ConfigParseError(f"{path}: unknown key '{key}' in [{name}]")
            checked[key] = _check_type(name, key, value, SCHEMA[name][key])
        sections[name] = checked
    if "model" not in sections or "name" not in sections["model"]:
        raise ConfigParseError(f"{path}: [model] name is required")
    return RunConfig(sections, path)


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(path))


def build_system(cfg: RunConfig) -> SymbolicSystem:
    """Construct the system named in ``[model]``.

    Raises:
        ModelUnknown: the name is not registered.
        ConfigParseError: a parameter does not apply to the model.
    """
    m = dict(cfg.section("model"))
    name = m.pop("name")
    if name not in MODEL_REGISTRY:
        build_model(name)
    kwargs: dict[str, Any] = {}
    allowed: dict[str, set] = {
        "toy1d": {"s1"},
        "ns-baro": {"d", "mu", "lambda", "pressure_coefficient", "pressure_exponent", "rho_ref", "velocity_ref"},
        "mhd": {"mu", "lambda", "k", "sigma", "mu0", "state_ref"},
        "heat": {"d", "n2", "diffusivity"},
    }
    extra = set(m) - allowed.get(name, set())
    if extra:
        raise ConfigParseError(f"[model] keys {sorted(extra)} do not apply to '{name}'")
    if name == "toy1d" and "s1" in m:
        kwargs["s1"] = m["s1"]
    elif name == "ns-baro":
        for key, arg in (("d", "d"), ("mu", "mu"), ("lambda", "lam"), ("rho_ref", "rho_ref"),
                         ("velocity_ref", "velocity_ref")):
            if key in m:
                kwargs[arg] = m[key]
        if "pressure_coefficient" in m or "pressure_exponent" in m:
            kwargs["pressure_law"] = PressureLaw(m.get("pressure_coefficient", 1.0), m.get("pressure_exponent", 2.0))
    elif name == "mhd":
        tr = {arg: m[key] for key, arg in (("mu", "mu"), ("lambda", "lam"), ("k", "k"), ("sigma", "sigma"),
                                            ("mu0", "mu0")) if key in m}
        kwargs["transport_coeffs"] = TransportCoeffs(**tr)
        if "state_ref" in m:
            kwargs["state_ref"] = m["state_ref"]
    elif name == "heat":
        kwargs.update(m)
    return build_model(name, **kwargs)


def rho_grid(cfg: RunConfig) -> np.ndarray:
    sec = cfg.section("rho_grid")
    lo, hi, pts = sec.get("min", 1e-3), sec.get("max", 1e3), sec.get("points", 61)
    if lo <= 0 or hi < lo or pts < 1:
        raise ConfigParseError("[rho_grid] needs 0 < min <= max and points >= 1")
    return np.logspace(np.log10(lo), np.log10(hi), pts)
