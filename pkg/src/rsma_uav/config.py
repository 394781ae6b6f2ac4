"""Experiment configuration: YAML text, embedded presets, validation.

A config file is a YAML mapping with ``preset``, ``scenario``, ``sweep``,
``solver`` and ``output_dir`` sections. A preset fills every field it pins;
keys given in the file override the preset. Unknown keys are rejected and
every validation error carries the line of the offending key.
"""
from __future__ import annotations

import copy
import math
from enum import Enum
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .channel import RicianParams
from .joint import JointParams
from .placement import PlacementParams
from .precoder import InitStrategy, PrecoderOptParams, Scheme
from .scenario import PlacementBox, Scenario


class ConfigError(ValueError):
    """Config text that does not parse or validate."""


class Preset(str, Enum):
    FIG1_CONVERGENCE = "fig1_convergence"
    FIG2_TRAJECTORY = "fig2_trajectory"
    FIG3_SNR_LOS = "fig3_snr_los"
    FIG4_SNR_RICIAN = "fig4_snr_rician"
    CUSTOM = "custom"


class Method(str, Enum):
    JOINT = "joint"
    AVG_LOCATION = "avg_location"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BoxConfig(_Strict):
    x: tuple[float, float] = (0.0, 300.0)
    y: tuple[float, float] = (0.0, 300.0)
    z: tuple[float, float] = (80.0, 120.0)

    @model_validator(mode="after")
    def _ordered(self):
        for name in ("x", "y", "z"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name}: lower bound must be below upper bound")
        if self.z[0] <= 0:
            raise ValueError("z: minimum altitude must be positive")
        return self

    def to_box(self) -> PlacementBox:
        return PlacementBox(*self.x, *self.y, *self.z)


class RicianConfig(_Strict):
    a1: float = Field(10 ** 0.5, gt=0)
    b1: float = Field(10 ** 1.5, gt=0)


class ScenarioConfig(_Strict):
    n_users: int = Field(2, ge=1)
    n_t: int = Field(2, ge=1)
    users: list[tuple[float, float, float]] | None = None
    weights: list[float] | None = None
    noise_power: float = Field(1.0, gt=0)
    bandwidth_hz: float = Field(20e6, gt=0)
    rate_threshold_bps: float = Field(0.0, ge=0)
    path_loss_exponent: float = Field(2.0, gt=0)
    area: tuple[float, float] = (300.0, 300.0)
    box: BoxConfig = BoxConfig()
    channel: Literal["los", "rician"] = "los"
    rician: RicianConfig = RicianConfig()

    @model_validator(mode="after")
    def _lengths(self):
        if self.users is not None and len(self.users) != self.n_users:
            raise ValueError(f"users lists {len(self.users)} positions but n_users is {self.n_users}")
        if self.weights is not None:
            if len(self.weights) != self.n_users:
                raise ValueError(f"weights has {len(self.weights)} entries but n_users is {self.n_users}")
            if any(w < 0 for w in self.weights):
                raise ValueError("weights must be nonnegative")
        if any(a <= 0 for a in self.area):
            raise ValueError("area sides must be positive")
        return self


class SweepConfig(_Strict):
    snr_db: list[float] = [20.0]
    schemes: list[Scheme] = [Scheme.RSMA, Scheme.SDMA, Scheme.NOMA]
    methods: list[Method] = [Method.JOINT]
    seeds: list[int] = list(range(10))
    monte_carlo_drops: int = Field(1, ge=1)

    @field_validator("snr_db")
    @classmethod
    def _finite(cls, v):
        if not v:
            raise ValueError("at least one SNR point is required")
        if not all(math.isfinite(x) for x in v):
            raise ValueError("SNR values must be finite")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v:
            raise ValueError("seeds must not be empty")
        if len(set(v)) != len(v):
            raise ValueError("seeds must be distinct")
        return v

    @field_validator("schemes", "methods")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("must not be empty")
        return list(dict.fromkeys(v))


class SolverConfig(_Strict):
    epsilon: float = Field(1e-4, gt=0)
    max_outer_iterations: int = Field(30, ge=1)
    max_precoder_iterations: int = Field(200, ge=1)
    max_sca_iterations: int = Field(50, ge=1)
    solver_tol: float = Field(1e-7, gt=0)
    solver_max_newton_steps: int = Field(200, ge=1)
    init_strategy: InitStrategy = InitStrategy.MATCHED_FILTER_SPLIT

    def joint_params(self, seed: int = 0) -> JointParams:
        return JointParams(
            epsilon=self.epsilon,
            max_outer_iterations=self.max_outer_iterations,
            precoder=PrecoderOptParams(self.epsilon, self.max_precoder_iterations, self.init_strategy,
                                       seed, self.solver_tol, self.solver_max_newton_steps),
            placement=PlacementParams(self.epsilon, self.max_sca_iterations, self.solver_tol,
                                      self.solver_max_newton_steps),
        )


class ExperimentConfig(_Strict):
    preset: Preset = Preset.CUSTOM
    scenario: ScenarioConfig = ScenarioConfig()
    sweep: SweepConfig = SweepConfig()
    solver: SolverConfig = SolverConfig()
    output_dir: str = "runs"

    def scenario_for(self, snr_db: float, users: np.ndarray) -> Scenario:
        """Problem instance at one SNR point (``P_t = snr * noise_power``)."""
        sc = self.scenario
        power = 10.0 ** (snr_db / 10.0) * sc.noise_power
        weights = np.ones(sc.n_users) if sc.weights is None else np.asarray(sc.weights)
        rician = None
        if sc.channel == "rician":
            rician = RicianParams(sc.rician.a1, sc.rician.b1, sc.path_loss_exponent)
        return Scenario(users, weights, power, sc.noise_power, sc.bandwidth_hz,
                        np.full(sc.n_users, sc.rate_threshold_bps), sc.box.to_box(), sc.n_t,
                        rician, sc.path_loss_exponent)


FIG3_USERS = [[0.0, 0.0, 0.0], [0.0, 100.0, 0.0], [150.0, 150.0, 0.0], [200.0, 50.0, 0.0]]

_SHARED = {
    "noise_power": 1.0,
    "bandwidth_hz": 20e6,
    "rate_threshold_bps": 0.0,
    "area": [300.0, 300.0],
    "box": {"x": [0.0, 300.0], "y": [0.0, 300.0], "z": [80.0, 120.0]},
}

PRESETS: dict[Preset, dict] = {
    Preset.FIG1_CONVERGENCE: {
        "scenario": {**_SHARED, "n_users": 2, "n_t": 2, "channel": "los"},
        "sweep": {"snr_db": [20.0], "schemes": ["rsma", "sdma", "noma"], "methods": ["joint"],
                  "seeds": list(range(10))},
    },
    Preset.FIG2_TRAJECTORY: {
        "scenario": {**_SHARED, "n_users": 2, "n_t": 2, "channel": "los"},
        "sweep": {"snr_db": [20.0], "schemes": ["rsma", "sdma", "noma"], "methods": ["joint"],
                  "seeds": list(range(10))},
    },
    Preset.FIG3_SNR_LOS: {
        "scenario": {**_SHARED, "n_users": 4, "n_t": 4, "users": FIG3_USERS, "channel": "los"},
        "sweep": {"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
                  "schemes": ["rsma", "sdma", "noma"], "methods": ["joint", "avg_location"],
                  "seeds": list(range(10))},
    },
    Preset.FIG4_SNR_RICIAN: {
        "scenario": {**_SHARED, "n_users": 4, "n_t": 4, "users": FIG3_USERS, "channel": "rician",
                     "rician": {"a1": 10 ** 0.5, "b1": 10 ** 1.5}},
        "sweep": {"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
                  "schemes": ["rsma", "sdma", "noma"], "methods": ["joint"],
                  "seeds": list(range(10))},
    },
    Preset.CUSTOM: {},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _key_lines(node, path=()) -> dict[tuple, int]:
    """Map every key path in a composed YAML tree to its 1-based line."""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = (*path, key_node.value)
            lines[key] = key_node.start_mark.line + 1
            lines.update(_key_lines(value_node, key))
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            key = (*path, i)
            lines[key] = item.start_mark.line + 1
            lines.update(_key_lines(item, key))
    return lines


def _line_for(loc: tuple, lines: dict[tuple, int]) -> int | None:
    loc = tuple(str(p) if not isinstance(p, int) else p for p in loc)
    while loc:
        if loc in lines:
            return lines[loc]
        loc = loc[:-1]
    return None


def parse_config(text: str, preset: str | Preset | None = None) -> ExperimentConfig:
    """Parse and validate config text; ``preset`` overrides the file's choice."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{where}malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data, root = {}, None
    if not isinstance(data, dict):
        raise ConfigError("line 1: top level must be a mapping of sections")
    lines = _key_lines(root) if root is not None else {}
    name = preset if preset is not None else data.get("preset", Preset.CUSTOM.value)
    try:
        chosen = Preset(name)
    except ValueError:
        where = _line_for(("preset",), lines)
        prefix = f"line {where}: " if where else ""
        options = ", ".join(p.value for p in Preset)
        raise ConfigError(f"{prefix}unknown preset {name!r} (choose from {options})") from None
    merged = _merge(PRESETS[chosen], data)
    merged["preset"] = chosen.value
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as exc:
        messages = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            where = _line_for(loc, lines)
            field_path = ".".join(str(p) for p in loc) or "<root>"
            prefix = f"line {where}: " if where else ""
            messages.append(f"{prefix}{field_path}: {err['msg']}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(messages)) from None


def load_config(path, preset: str | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), preset)
