"""Run configuration: JSON parsing, validation and the built-in example presets."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .frac import OustaloupSettings, ReferenceModelSpec
from .poly_tf import RationalTF
from .tuning import PARAMETER_NAMES, ControllerSpec, PsoSettings, SearchBounds

_SCHEMA = {
    "t_s": float,
    "oustaloup": {"order": int, "omega_b": float, "omega_h": float},
    "reference": {"phi_m": float, "omega_c": float},
    "controller": {"structure": str, "theta0": list, "lower": list, "upper": list, "tau": float},
    "pso": {"swarm_size": int, "max_iters": int, "inertia": float, "cognitive": float,
            "social": float, "seed": int, "stall_tol": float, "stall_iters": int},
    "j_threshold": float,
    "plant": {"num": list, "den": list},
    "experiment": {"horizon": float, "amplitude": float},
    "validation": {"gains": list},
    "baselines": dict,
    "paths": {"data": str, "out": str},
    "description": str,
}
_REQUIRED = ("t_s", "reference", "controller")


def _check(node, schema, path):
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected an object")
    for key, value in node.items():
        where = f"{path}.{key}"
        if key not in schema:
            raise ConfigError(f"{where}: unknown key")
        kind = schema[key]
        if value is None:
            continue
        if isinstance(kind, dict):
            _check(value, kind, where)
        elif kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{where}: expected a finite number")
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where}: expected an integer")
        elif not isinstance(value, kind):
            raise ConfigError(f"{where}: expected {kind.__name__}")


def _vector(value, where, n=None):
    try:
        v = tuple(float(x) for x in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a list of numbers") from None
    if n is not None and len(v) != n:
        raise ConfigError(f"{where}: expected {n} entries, got {len(v)}")
    if not all(math.isfinite(x) for x in v):
        raise ConfigError(f"{where}: entries must be finite")
    return v


@dataclass
class TuneConfig:
    """Validated run configuration (``raw`` keeps the normalized JSON form for echoing)."""

    raw: dict
    t_s: float
    oust: OustaloupSettings
    reference: ReferenceModelSpec
    controller: ControllerSpec
    bounds: SearchBounds
    pso: PsoSettings
    j_threshold: float | None = None
    plant: RationalTF | None = None
    horizon: float | None = None
    amplitude: float = 1.0
    gains: tuple = (0.5, 1.0, 1.5)
    baselines: dict = field(default_factory=dict)
    data_path: str | None = None
    out_dir: str | None = None

    @property
    def structure(self):
        return self.controller.structure

    @property
    def parameter_names(self):
        return PARAMETER_NAMES[self.structure]

    def samples(self):
        """Horizon length ``N`` (the record has ``N + 1`` samples)."""
        if self.horizon is None:
            raise ConfigError("config.experiment.horizon: required for this command")
        n = int(round(self.horizon / self.t_s))
        if n < 1:
            raise ConfigError("config.experiment.horizon: horizon must span at least one sample")
        return n

    def with_seed(self, seed):
        raw = copy.deepcopy(self.raw)
        raw.setdefault("pso", {})["seed"] = int(seed)
        return parse_config(raw)


def parse_config(raw: dict) -> TuneConfig:
    _check(raw, _SCHEMA, "config")
    for key in _REQUIRED:
        if raw.get(key) is None:
            raise ConfigError(f"config.{key}: required")
    raw = copy.deepcopy(raw)
    t_s = float(raw["t_s"])
    if t_s <= 0:
        raise ConfigError("config.t_s: must be positive")
    try:
        oust = OustaloupSettings(**(raw.get("oustaloup") or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config.oustaloup: {exc}") from None
    ref = raw["reference"]
    try:
        reference = ReferenceModelSpec(float(ref["phi_m"]), float(ref["omega_c"]), t_s, oust)
    except KeyError as exc:
        raise ConfigError(f"config.reference.{exc.args[0]}: required") from None
    except ValueError as exc:
        raise ConfigError(f"config.reference: {exc}") from None

    ctrl = raw["controller"]
    structure = str(ctrl.get("structure", "")).upper()
    if structure not in PARAMETER_NAMES:
        raise ConfigError(f"config.controller.structure: expected one of {sorted(PARAMETER_NAMES)}")
    dim = len(PARAMETER_NAMES[structure])
    for key in ("theta0", "lower", "upper"):
        if ctrl.get(key) is None:
            raise ConfigError(f"config.controller.{key}: required")
    theta0 = _vector(ctrl["theta0"], "config.controller.theta0", dim)
    try:
        controller = ControllerSpec(structure, theta0, t_s, oust, ctrl.get("tau"))
        bounds = SearchBounds(_vector(ctrl["lower"], "config.controller.lower", dim),
                              _vector(ctrl["upper"], "config.controller.upper", dim))
    except ValueError as exc:
        raise ConfigError(f"config.controller: {exc}") from None
    try:
        pso = PsoSettings(**(raw.get("pso") or {}))
    except ValueError as exc:
        raise ConfigError(f"config.pso: {exc}") from None

    plant = None
    if raw.get("plant") is not None:
        p = raw["plant"]
        try:
            plant = RationalTF(_vector(p.get("num"), "config.plant.num"),
                               _vector(p.get("den"), "config.plant.den"))
        except (ValueError, ZeroDivisionError, TypeError) as exc:
            raise ConfigError(f"config.plant: {exc}") from None
        if not plant.is_proper:
            raise ConfigError("config.plant: plant must be proper")

    exp = raw.get("experiment") or {}
    horizon = exp.get("horizon")
    if horizon is not None and horizon <= 0:
        raise ConfigError("config.experiment.horizon: must be positive")
    amplitude = float(exp.get("amplitude", 1.0) or 1.0)

    gains = (raw.get("validation") or {}).get("gains") or [0.5, 1.0, 1.5]
    gains = _vector(gains, "config.validation.gains")
    baselines = {}
    for name, theta in (raw.get("baselines") or {}).items():
        baselines[name] = _vector(theta, f"config.baselines.{name}", dim)

    paths = raw.get("paths") or {}
    jt = raw.get("j_threshold")
    if jt is not None and jt <= 0:
        raise ConfigError("config.j_threshold: must be positive")
    return TuneConfig(raw, t_s, oust, reference, controller, bounds, pso,
                      None if jt is None else float(jt), plant,
                      None if horizon is None else float(horizon), amplitude, gains, baselines,
                      paths.get("data"), paths.get("out"))


def load_config(path) -> TuneConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(raw)


# -- presets -------------------------------------------------------------------
_EX1_PLANT = {"num": [9.0], "den": np.polymul([1.0, 1.0], [1.0, 2.0, 9.0]).tolist()}
_EX1_COMMON = {
    "t_s": 0.01,
    "oustaloup": {"order": 5, "omega_b": 1e-4, "omega_h": 1e4},
    "reference": {"phi_m": 80.0, "omega_c": 1.0},
    "plant": _EX1_PLANT,
    "experiment": {"horizon": 40.0, "amplitude": 1.0},
    "validation": {"gains": [0.5, 1.0, 1.5]},
}

PRESETS = {
    "example1-fo": {
        "description": "third-order process 9/((s+1)(s^2+2s+9)), FO-PID, 80 deg at 1 rad/s",
        **copy.deepcopy(_EX1_COMMON),
        "controller": {"structure": "FOPID", "theta0": [1, 0, 1, 0, 1],
                       "lower": [0, 0, 0, 0, 0], "upper": [5, 5, 2, 5, 2]},
        "baselines": {"benchmark": [1.3239, 1.0370, 1.1010, 0.23253, 1.5465]},
    },
    "example1-io": {
        "description": "third-order process 9/((s+1)(s^2+2s+9)), IO-PID, 80 deg at 1 rad/s",
        **copy.deepcopy(_EX1_COMMON),
        "controller": {"structure": "IOPID", "theta0": [1, 0, 0],
                       "lower": [0, 0, 0], "upper": [5, 5, 5]},
        "baselines": {"benchmark": [0.80397, 1.2125, 0.33528]},
    },
    "example2": {
        "description": "soft-robot model, FO-PI, 60 deg at 12 rad/s",
        "t_s": 0.01,
        "oustaloup": {"order": 7, "omega_b": 1e-3, "omega_h": 1e6},
        "reference": {"phi_m": 60.0, "omega_c": 12.0},
        "plant": {"num": [6 * 54.893316, 6 * 2048.6337],
                  "den": [1.0, 67.066887, 2048.7922, 0.0]},
        "experiment": {"horizon": 2.0, "amplitude": 1.0},
        "validation": {"gains": [0.5, 1.0, 1.5]},
        "controller": {"structure": "FOPI", "theta0": [1, 0, 1],
                       "lower": [0, 0, 0], "upper": [15, 15, 2]},
        "baselines": {"benchmark": [0.88086, 3.8808, 0.47498],
                      "iso-m": [1.76, 4.7872, 0.81]},
    },
}


def preset(name) -> TuneConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return parse_config(copy.deepcopy(PRESETS[name]))
