"""Experiment configuration (strict JSON schema) and its resolution to objects."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError, model_validator

from ..dispatch import PondParams
from ..fluid_lp import FluidProblem, theorem_params
from ..instance import (ConstraintSpec, Instance, InstanceError, ValidationReport, build_constraint,
                        model_from_json, validate_instance)


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ConstraintConfig(_Strict):
    kind: Literal["capacity", "fairness", "resource", "custom"]
    name: str = ""
    service: Optional[list[Any]] = None
    fractions: Optional[list[float]] = None
    weights: Optional[list[list[Any]]] = None
    requirements: Optional[list[Any]] = None
    sign: Optional[Literal["nonnegative", "nonpositive"]] = None

    def build(self, n_types: int) -> ConstraintSpec:
        params = {k: v for k, v in self.model_dump().items() if k not in ("kind", "name") and v is not None}
        return build_constraint(self.kind, n_types, name=self.name, **params)


class InstanceConfig(_Strict):
    arrivals: list[Any]
    reward_means: Optional[list[list[float]]] = None
    rewards: Optional[list[list[Any]]] = None
    constraints: list[ConstraintConfig] = Field(default_factory=list)
    c_lambda: float
    c_u: float

    @model_validator(mode="after")
    def _one_reward_spec(self):
        if (self.reward_means is None) == (self.rewards is None):
            raise ValueError("give exactly one of 'reward_means' (Bernoulli) or 'rewards' (models)")
        return self

    def build(self) -> Instance:
        arrivals = [model_from_json(a) for a in self.arrivals]
        cons = [c.build(len(arrivals)) for c in self.constraints]
        if self.reward_means is not None:
            return Instance.from_means(arrivals, self.reward_means, cons, self.c_lambda, self.c_u)
        rewards = [[model_from_json(r) for r in row] for row in self.rewards]
        return Instance(tuple(arrivals), tuple(map(tuple, rewards)), tuple(cons), self.c_lambda, self.c_u)


class AlgorithmConfig(_Strict):
    name: Literal["pond", "etc"]
    learner: Literal["ucb", "moss"] = "ucb"

    @property
    def label(self) -> str:
        return "etc" if self.name == "etc" else f"pond-{self.learner}"


class EpsilonMode(_Strict):
    mode: Literal["zero", "over_sqrt_t", "theorem", "fixed"]
    c: Optional[float] = None
    value: Optional[float] = None

    @model_validator(mode="after")
    def _params(self):
        if self.mode == "over_sqrt_t" and (self.c is None or self.c < 0):
            raise ValueError("over_sqrt_t needs a non-negative 'c'")
        if self.mode == "fixed" and (self.value is None or self.value < 0):
            raise ValueError("fixed epsilon needs a non-negative 'value'")
        return self

    @property
    def label(self) -> str:
        if self.mode == "over_sqrt_t":
            return f"{self.c:g}/sqrtT"
        if self.mode == "fixed":
            return f"fixed={self.value:g}"
        return self.mode


class VMode(_Strict):
    mode: Literal["two_sqrt_t", "theorem", "fixed"] = "two_sqrt_t"
    value: Optional[float] = None

    @model_validator(mode="after")
    def _params(self):
        if self.mode == "fixed" and (self.value is None or self.value <= 0):
            raise ValueError("fixed V needs a positive 'value'")
        return self


class ReplayConfig(_Strict):
    horizon: PositiveInt
    trials: PositiveInt = 1
    max_draws_per_slot: PositiveInt = 1000


class ExperimentConfig(_Strict):
    master_seed: int = Field(0, ge=0, lt=2**64)
    trials: PositiveInt
    horizons: list[PositiveInt] = Field(min_length=1)
    algorithms: list[AlgorithmConfig] = Field(min_length=1)
    epsilon_modes: list[EpsilonMode] = Field(default_factory=lambda: [EpsilonMode(mode="zero")])
    v_mode: VMode = Field(default_factory=VMode)
    instance: InstanceConfig
    output_dir: str = "out"
    write_trials: bool = False
    threads: PositiveInt = 1
    replay: Optional[ReplayConfig] = None

    def build_instance(self) -> Instance:
        return self.instance.build()


def resolve_params(cfg: ExperimentConfig, inst: Instance, eps_mode: EpsilonMode, horizon: int,
                   learner: str = "ucb") -> PondParams:
    """Concrete V and epsilon for one (epsilon mode, horizon) cell."""
    thm = None
    if eps_mode.mode == "theorem" or cfg.v_mode.mode == "theorem":
        thm = theorem_params(FluidProblem.from_instance(inst), horizon, inst.c_lambda, inst.c_u)
    eps = {"zero": lambda: 0.0,
           "over_sqrt_t": lambda: eps_mode.c / math.sqrt(horizon),
           "fixed": lambda: eps_mode.value,
           "theorem": lambda: thm.epsilon}[eps_mode.mode]()
    v = {"two_sqrt_t": lambda: 2.0 * math.sqrt(horizon),
         "fixed": lambda: cfg.v_mode.value,
         "theorem": lambda: thm.v}[cfg.v_mode.mode]()
    return PondParams(v=v, epsilon=eps, learner=learner)


def parse_config(data: dict) -> tuple[ExperimentConfig, Instance, ValidationReport]:
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        lines = [f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("invalid config: " + "; ".join(lines)) from None
    try:
        inst = cfg.build_instance()
        report = validate_instance(inst)
    except (InstanceError, ValueError) as exc:
        raise ConfigError(f"invalid instance: {exc}") from None
    return cfg, inst, report


def load_config(path: str | Path) -> tuple[ExperimentConfig, Instance, ValidationReport]:
    """Read, schema-check and validate an experiment config file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(data)
