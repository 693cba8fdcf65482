"""Experiment configuration files (YAML or JSON).

The file is validated against a JSON schema before anything is computed;
errors name the offending key path.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import yaml

from . import potential as pt
from . import solver as sv
from .field import Grid

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_INT = {"type": "integer"}

_CIRCLE = {
    "type": "object",
    "properties": {"center": _VEC, "radius": {"type": "number", "minimum": 0},
                   "inside": {"type": "integer", "minimum": 0}, "outside": {"type": "integer", "minimum": 0}},
    "required": ["center", "radius"],
    "additionalProperties": False,
}

_WINDOW = {
    "type": "object",
    "properties": {"center": _VEC, "radius": {"type": "number", "exclusiveMinimum": 0},
                   "smoothness": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
    "required": ["center", "radius"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "potential": {
            "oneOf": [
                {"type": "string", "enum": sorted(pt.BUILTINS)},
                {
                    "type": "object",
                    "properties": {
                        "polynomial": {
                            "type": "object",
                            "properties": {
                                "terms": {"type": "array", "minItems": 1, "items": {
                                    "type": "object",
                                    "properties": {"coef": _NUM, "exponents": {"type": "array", "items": _INT}},
                                    "required": ["coef", "exponents"], "additionalProperties": False}},
                                "wells": {"type": "array", "minItems": 2, "items": _VEC},
                                "growth_exponent": _NUM, "growth_radius": _NUM, "growth_lower": _NUM,
                                "growth_upper": _NUM, "pert_hessian_bound": _NUM, "split_center": _VEC,
                                "name": {"type": "string"},
                            },
                            "required": ["terms", "wells", "growth_exponent", "growth_radius", "growth_lower",
                                         "growth_upper", "pert_hessian_bound"],
                            "additionalProperties": False,
                        }
                    },
                    "required": ["polynomial"],
                    "additionalProperties": False,
                },
            ]
        },
        "grid": {
            "type": "object",
            "properties": {"d": {"type": "integer", "enum": [1, 2, 3]}, "n": {"type": "integer", "minimum": 8},
                           "lambda": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["d", "n"],
            "additionalProperties": False,
        },
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "scheme": {"type": "string", "enum": list(sv.SCHEMES)},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "t_end": {"type": "number", "minimum": 0},
        "variant": {"type": "string", "enum": list(sv.VARIANTS)},
        "forcing": {
            "type": "object",
            "properties": {
                "constant": _VEC,
                "plane_wave": {
                    "type": "object",
                    "properties": {"amplitude": _VEC, "mode": {"type": "array", "items": _INT},
                                   "omega": _NUM, "phase": _NUM},
                    "required": ["amplitude", "mode"],
                    "additionalProperties": False,
                },
            },
            "minProperties": 1,
            "maxProperties": 1,
            "additionalProperties": False,
        },
        "geometry": {
            "type": "object",
            "properties": {
                "circle": _CIRCLE,
                "stripe": {
                    "type": "object",
                    "properties": {"axis": {"type": "integer", "minimum": 0}, "width": _NUM, "center": _NUM,
                                   "inside": {"type": "integer", "minimum": 0},
                                   "outside": {"type": "integer", "minimum": 0}},
                    "required": ["axis", "width"],
                    "additionalProperties": False,
                },
                "tripod": {
                    "type": "object",
                    "properties": {"center": _VEC, "phases": {"type": "array", "items": _INT,
                                                               "minItems": 3, "maxItems": 3}},
                    "required": ["center"],
                    "additionalProperties": False,
                },
                "circles": {"type": "array", "items": _CIRCLE, "minItems": 1},
            },
            "minProperties": 1,
            "maxProperties": 1,
            "additionalProperties": False,
        },
        "mm": {
            "type": "object",
            "properties": {"inner_tol": {"type": "number", "exclusiveMinimum": 0},
                           "iter_cap": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "observe": {
            "type": "object",
            "properties": {
                "stride": {"type": "integer", "minimum": 1},
                "snapshot_stride": {"type": "integer", "minimum": 1},
                "mesh": {"type": "boolean"},
                "window": _WINDOW,
                "tilt": {
                    "type": "object",
                    "properties": {"phase": {"type": "integer", "minimum": 0}, "direction": _VEC, "window": _WINDOW},
                    "required": ["phase", "direction", "window"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "output": {"type": "string"},
        "seed": {"type": "integer"},
        "allow_underresolved": {"type": "boolean"},
        "sweep": {
            "type": "object",
            "properties": {
                "epsilon": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "n": {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 1},
                "dt": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            },
            "additionalProperties": False,
        },
    },
    "required": ["potential", "grid", "epsilon", "dt", "t_end", "geometry"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Schema or consistency violation; ``path`` is the offending key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


@dataclass
class ExperimentConfig:
    raw: dict
    potential: pt.Potential
    grid: Grid
    epsilon: float
    stepper: sv.StepperConfig
    t_end: float
    dynamics: sv.Dynamics
    geometry: object
    stride: int | None = None
    snapshot_stride: int | None = None
    mesh: bool = True
    window: dict | None = None
    tilt: dict | None = None
    output: str = "out"
    seed: int = 0
    sweep: dict = field(default_factory=dict)

    def sweep_points(self) -> list[dict]:
        axes = {k: self.sweep.get(k, [v]) for k, v in
                (("epsilon", self.epsilon), ("n", self.grid.n), ("dt", self.stepper.dt))}
        return [dict(zip(axes, combo)) for combo in itertools.product(*axes.values())]

    def with_point(self, point: dict) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw.pop("sweep", None)
        raw["epsilon"] = point["epsilon"]
        raw["grid"]["n"] = point["n"]
        raw["dt"] = point["dt"]
        return from_dict(raw)


def _path(error) -> str:
    return ".".join(str(p) for p in error.absolute_path)


def _potential(spec) -> pt.Potential:
    if isinstance(spec, str):
        return pt.builtin(spec)
    p = spec["polynomial"]
    return pt.polynomial_potential(
        [(t["coef"], t["exponents"]) for t in p["terms"]],
        p["wells"],
        name=p.get("name", "polynomial"),
        growth_exponent=p["growth_exponent"],
        growth_radius=p["growth_radius"],
        growth_lower=p["growth_lower"],
        growth_upper=p["growth_upper"],
        pert_hessian_bound=p["pert_hessian_bound"],
        split_center=p.get("split_center"),
    )


def _geometry(spec: dict):
    kind, g = next(iter(spec.items()))
    if kind == "circle":
        return sv.Circle(tuple(g["center"]), g["radius"], g.get("inside", 1), g.get("outside", 0))
    if kind == "stripe":
        return sv.Stripe(g["axis"], g["width"], g.get("center"), g.get("inside", 1), g.get("outside", 0))
    if kind == "tripod":
        return sv.Tripod(tuple(g["center"]), tuple(g.get("phases", (0, 1, 2))))
    return sv.Circles(tuple(sv.Circle(tuple(c["center"]), c["radius"], c.get("inside", 1), c.get("outside", 0))
                            for c in g))


def from_dict(raw: dict) -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(_path(e), e.message)
    pot = _potential(raw["potential"])
    g = raw["grid"]
    try:
        grid = Grid(g["d"], g["n"], g.get("lambda", 1.0))
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    eps = raw["epsilon"]
    sweep = raw.get("sweep", {})
    allow = raw.get("allow_underresolved", False)
    for e_val in sweep.get("epsilon", [eps]):
        for n_val in sweep.get("n", [g["n"]]):
            if e_val < 2 * grid.length / n_val and not allow:
                raise ConfigError("epsilon", f"epsilon={e_val} < 2 Lambda / n for n={n_val}; "
                                  "set allow_underresolved: true to override")
    variant = raw.get("variant", sv.PLAIN)
    forcing = None
    if "forcing" in raw:
        kind, f = next(iter(raw["forcing"].items()))
        if kind == "constant":
            forcing = sv.ConstantForce(tuple(f))
        else:
            forcing = sv.PlaneWaveForce(tuple(f["amplitude"]), tuple(f["mode"]), f.get("omega", 0.0),
                                        f.get("phase", 0.0))
        if len(forcing.value if kind == "constant" else forcing.amplitude) != pot.dim_state:
            raise ConfigError(f"forcing.{kind}", "force dimension does not match the potential")
    try:
        dyn = sv.Dynamics(pot, variant, forcing)
    except ValueError as exc:
        raise ConfigError("variant", str(exc)) from None
    scheme = raw.get("scheme", sv.SEMI_IMPLICIT)
    if scheme == sv.MINIMIZING_MOVEMENT and variant != sv.PLAIN:
        raise ConfigError("scheme", "minimizing movements support the plain variant only")
    mm = raw.get("mm", {})
    stepper = sv.StepperConfig(scheme, raw["dt"], mm.get("inner_tol", 1e-9), mm.get("iter_cap", 10_000))
    obs = raw.get("observe", {})
    geom = _geometry(raw["geometry"])
    return ExperimentConfig(
        raw=raw,
        potential=pot,
        grid=grid,
        epsilon=eps,
        stepper=stepper,
        t_end=raw["t_end"],
        dynamics=dyn,
        geometry=geom,
        stride=obs.get("stride"),
        snapshot_stride=obs.get("snapshot_stride"),
        mesh=obs.get("mesh", grid.dim < 3),
        window=obs.get("window"),
        tilt=obs.get("tilt"),
        output=raw.get("output", "out"),
        seed=raw.get("seed", 0),
        sweep=sweep,
    )


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be a mapping")
    return from_dict(raw)
