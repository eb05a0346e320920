"""JSON run configurations: schema validation, typed parsing and echo.

A config has a model block (``params`` plus ``variant``), a ``grid`` block, a
``run`` block and optional command blocks (``eigen``, ``steady``, ``sweep``,
``initial``, ``scenarios``). ``params`` may name a preset and override some
of its values. Unknown keys anywhere are rejected. ``Config.to_dict`` writes
explicit values only, so an echoed config parses back to an equal Config.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Union

import jsonschema

from .errors import EcoEpiError
from .grid import Grid
from .model import PRESETS, Parameters
from .simulate import VARIANTS, PreyPredatorParams
from .verify import INITS, SWEEP_AXES, Scenario


class ConfigError(EcoEpiError, ValueError):
    pass


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_FIELD = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}

_PARAMS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": sorted(PRESETS)},
        **{k: _NUM for k in ("a", "b", "c", "k", "ell", "theta", "rho", "d", "D", "gamma", "sigma", "h")},
    },
}
_GRID = {
    "type": "object",
    "additionalProperties": False,
    "required": ["length", "n", "bc"],
    "properties": {
        "length": _POS,
        "n": {"type": "integer", "minimum": 3},
        "bc": {"enum": ["neumann", "dirichlet"]},
    },
}
_RUN = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "T": _POS,
        "dt": _POS,
        "sample_every": {"type": "integer", "minimum": 1},
        "tol": _POS,
        "seed": {"type": "integer", "minimum": 0},
        "init": {"enum": list(INITS)},
        "window": {"type": "integer", "minimum": 1},
        "escapes": {"type": "boolean"},
    },
}
_SCENARIO = {
    "type": "object",
    "additionalProperties": False,
    "required": ["params"],
    "properties": {"name": {"type": "string"}, "params": _PARAMS, "grid": _GRID, "run": _RUN},
}
SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "variant": {"enum": list(VARIANTS)},
        "params": _PARAMS,
        "grid": _GRID,
        "run": _RUN,
        "eigen": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"d": _POS, "q": _FIELD},
        },
        "steady": {
            "type": "object",
            "additionalProperties": False,
            "required": ["target"],
            "properties": {"target": {"enum": ["Sstar", "SI", "preypred", "full"]}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axis", "values"],
            "properties": {"axis": {"enum": list(SWEEP_AXES)}, "values": {"type": "array", "items": _NUM}},
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _FIELD for k in ("S", "I", "P", "u", "v")},
        },
        "scenarios": {"type": "array", "items": _SCENARIO},
    },
}


@dataclass(frozen=True)
class RunConfig:
    T: float = 200.0
    dt: float = 1e-3
    sample_every: int = 100
    tol: float = 1e-3
    seed: int = 0
    init: str = "perturbed"
    window: int = 5
    escapes: bool = False


def _freeze(value):
    return tuple(value) if isinstance(value, list) else value


def _thaw(value):
    return list(value) if isinstance(value, tuple) else value


@dataclass(frozen=True)
class Config:
    variant: str = "full3"
    params: Optional[Union[Parameters, PreyPredatorParams]] = None
    grid: Optional[Grid] = None
    run: RunConfig = field(default_factory=RunConfig)
    eigen: Optional[dict] = None
    steady_target: Optional[str] = None
    sweep_axis: Optional[str] = None
    sweep_values: Optional[tuple] = None
    initial: Optional[tuple] = None
    """Sorted ``(field, value)`` pairs; values are numbers or tuples."""
    scenarios: tuple = ()

    def to_dict(self) -> dict:
        out = {"variant": self.variant, "run": asdict(self.run)}
        if self.params is not None:
            out["params"] = _params_dict(self.params)
        if self.grid is not None:
            out["grid"] = _grid_dict(self.grid)
        if self.eigen is not None:
            out["eigen"] = {k: _thaw(v) for k, v in self.eigen.items()}
        if self.steady_target is not None:
            out["steady"] = {"target": self.steady_target}
        if self.sweep_axis is not None:
            out["sweep"] = {"axis": self.sweep_axis, "values": list(self.sweep_values)}
        if self.initial is not None:
            out["initial"] = {k: _thaw(v) for k, v in self.initial}
        if self.scenarios:
            out["scenarios"] = [_scenario_dict(s) for s in self.scenarios]
        return out

    def scenario(self, **overrides) -> Scenario:
        if self.params is None or self.grid is None:
            raise ConfigError("params and grid blocks are required")
        return Scenario(self.params, self.grid, **{**asdict(self.run), **overrides})


def _params_dict(p) -> dict:
    return p.to_dict()


def _grid_dict(g: Grid) -> dict:
    return {"length": g.length, "n": g.n, "bc": g.bc.value}


def _scenario_dict(s: Scenario) -> dict:
    run = {f.name: getattr(s, f.name) for f in fields(RunConfig)}
    return {"name": s.name, "params": _params_dict(s.p), "grid": _grid_dict(s.grid), "run": run}


def _build_params(block: dict, variant: str):
    block = dict(block)
    preset = block.pop("preset", None)
    try:
        if variant == "prey_predator2":
            if preset is not None:
                raise ConfigError("presets describe the three-species model")
            return PreyPredatorParams(**block)
        if "h" in block:
            raise ConfigError("'h' belongs to the two-species variant")
        if preset is not None:
            return PRESETS[preset].replace(**block)
        return Parameters(**block)
    except TypeError as exc:
        raise ConfigError(f"incomplete params block: {exc}") from exc


def _build_run(block: Optional[dict], base: RunConfig = RunConfig()) -> RunConfig:
    values = asdict(base)
    values.update(block or {})
    return RunConfig(**values)


def parse_config(data: dict) -> Config:
    """Validate a decoded JSON object and build the typed config.

    Raises ConfigError (or a ValueError subclass from the model classes) for
    any schema or invariant violation.
    """
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    variant = data.get("variant", "full3")
    params = _build_params(data["params"], variant) if "params" in data else None
    grid = Grid(**data["grid"]) if "grid" in data else None
    run = _build_run(data.get("run"))
    eigen = None
    if "eigen" in data:
        eigen = {k: _freeze(v) for k, v in sorted(data["eigen"].items())}
    initial = None
    if "initial" in data:
        initial = tuple(sorted((k, _freeze(v)) for k, v in data["initial"].items()))
    sweep = data.get("sweep")
    scenarios = []
    for i, block in enumerate(data.get("scenarios", [])):
        if variant != "full3":
            raise ConfigError("scenarios use the three-species model")
        g = Grid(**block["grid"]) if "grid" in block else grid
        if g is None:
            raise ConfigError(f"scenarios/{i}: no grid block and no top-level grid")
        sc_run = _build_run(block.get("run"), run)
        scenarios.append(Scenario(
            _build_params(block["params"], "full3"), g, name=block.get("name", f"scenario{i}"),
            **asdict(sc_run),
        ))
    if sweep is not None and sorted(sweep["values"]) != list(sweep["values"]):
        raise ConfigError("sweep/values must be sorted")
    return Config(
        variant=variant,
        params=params,
        grid=grid,
        run=run,
        eigen=eigen,
        steady_target=data["steady"]["target"] if "steady" in data else None,
        sweep_axis=None if sweep is None else sweep["axis"],
        sweep_values=None if sweep is None else tuple(float(v) for v in sweep["values"]),
        initial=initial,
        scenarios=tuple(scenarios),
    )


def load_config(path) -> Config:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data)
