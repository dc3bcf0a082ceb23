"""Problem data model for constrained online dispatching.

An :class:`Instance` describes N job types, M servers and K constraint
families. Every stochastic quantity is given by a small distribution model
(``Deterministic``, ``Bernoulli``, ``Geometric``, ``NegatedArrivalFraction``,
``Empirical``) that knows its mean, its support bound, and how to draw
samples from a numpy ``Generator``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


class InstanceError(ValueError):
    """Structural problem with an instance (shape, parameter range, role)."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# --------------------------------------------------------------------------
# distribution models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Deterministic:
    value: float

    tag = "deterministic"

    def mean(self, arrival_means: np.ndarray | None = None) -> float:
        return float(self.value)

    def bound(self) -> float:
        return abs(float(self.value))

    def support(self) -> tuple[float, float]:
        return float(self.value), float(self.value)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return np.full(size if size is not None else (), float(self.value))

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return np.full(np.shape(u), float(self.value))


@dataclass(frozen=True)
class Bernoulli:
    p: float

    tag = "bernoulli"

    def mean(self, arrival_means: np.ndarray | None = None) -> float:
        return float(self.p)

    def bound(self) -> float:
        return 1.0

    def support(self) -> tuple[float, float]:
        return 0.0, 1.0

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return self.from_uniform(rng.random(size))

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return (np.asarray(u) < self.p).astype(float)


@dataclass(frozen=True)
class Geometric:
    """Geometric count with the given mean.

    ``support_start=0`` (default) counts failures before the first success:
    support {0, 1, ...}, success probability ``1 / (1 + mean)``.
    ``support_start=1`` counts trials: support {1, 2, ...}, success
    probability ``1 / mean`` (needs mean >= 1); this is numpy's convention.
    """

    mu: float
    support_start: int = 0

    tag = "geometric"

    @property
    def success_prob(self) -> float:
        return 1.0 / self.mu if self.support_start == 1 else 1.0 / (1.0 + self.mu)

    def mean(self, arrival_means: np.ndarray | None = None) -> float:
        return float(self.mu)

    def bound(self) -> float:
        return math.inf

    def support(self) -> tuple[float, float]:
        return float(self.support_start), math.inf

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        # numpy's geometric counts trials (support starts at 1)
        draws = rng.geometric(self.success_prob, size)
        return draws if self.support_start == 1 else draws - 1


@dataclass(frozen=True)
class NegatedArrivalFraction:
    """Requirement ``-d * sum_i Lambda_i(t)`` for fairness constraints."""

    d: float

    tag = "negated_arrival_fraction"

    def mean(self, arrival_means: np.ndarray | None = None) -> float:
        if arrival_means is None:
            raise ValueError("NegatedArrivalFraction mean needs the arrival means")
        return -self.d * float(np.sum(arrival_means))

    def bound_given(self, arrival_bound: float) -> float:
        return self.d * arrival_bound

    def support(self) -> tuple[float, float]:
        return -math.inf, 0.0

    def realize(self, arrivals: np.ndarray) -> np.ndarray:
        return -self.d * np.asarray(arrivals, dtype=float).sum(axis=-1)


@dataclass(frozen=True)
class Empirical:
    """Uniform draw from a finite list of values."""

    values: tuple[float, ...]

    tag = "empirical"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def mean(self, arrival_means: np.ndarray | None = None) -> float:
        return float(np.mean(self.values))

    def bound(self) -> float:
        return float(np.max(np.abs(self.values)))

    def support(self) -> tuple[float, float]:
        return float(min(self.values)), float(max(self.values))

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return self.from_uniform(rng.random(size))

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.values)
        idx = np.minimum((np.asarray(u) * len(vals)).astype(np.int64), len(vals) - 1)
        return vals[idx]


Model = Deterministic | Bernoulli | Geometric | NegatedArrivalFraction | Empirical

_MODEL_TAGS = {
    "deterministic": (Deterministic, "value"),
    "bernoulli": (Bernoulli, "p"),
    "geometric": (Geometric, "mu"),
    "negated_arrival_fraction": (NegatedArrivalFraction, "d"),
}


def model_from_json(obj: Any) -> Model:
    """Build a model from ``{"dist": tag, ...}``; bare numbers are deterministic."""
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return Deterministic(float(obj))
    if not isinstance(obj, dict) or "dist" not in obj:
        raise ValueError(f"cannot parse distribution model from {obj!r}")
    tag = obj["dist"]
    if tag == "empirical":
        if set(obj) != {"dist", "values"} or not obj["values"]:
            raise ValueError(f"empirical model needs a non-empty 'values' list: {obj!r}")
        return Empirical(tuple(obj["values"]))
    if tag not in _MODEL_TAGS:
        raise ValueError(f"unknown distribution tag {tag!r}")
    cls, _ = _MODEL_TAGS[tag]
    if tag == "geometric" and set(obj) == {"dist", "mean", "support_start"}:
        return Geometric(float(obj["mean"]), int(obj["support_start"]))
    if set(obj) != {"dist", "mean"}:
        raise ValueError(f"{tag} model takes exactly 'dist' and 'mean': {obj!r}")
    return cls(float(obj["mean"]))


def model_to_json(model: Model) -> dict:
    if isinstance(model, Empirical):
        return {"dist": "empirical", "values": list(model.values)}
    _, attr = _MODEL_TAGS[model.tag]
    out = {"dist": model.tag, "mean": getattr(model, attr)}
    if isinstance(model, Geometric) and model.support_start:
        out["support_start"] = model.support_start
    return out


# --------------------------------------------------------------------------
# constraints and instances
# --------------------------------------------------------------------------


class ConstraintKind(str, enum.Enum):
    CAPACITY = "capacity"
    FAIRNESS = "fairness"
    RESOURCE = "resource"
    CUSTOM = "custom"


class Sign(str, enum.Enum):
    NON_NEGATIVE = "nonnegative"
    NON_POSITIVE = "nonpositive"


@dataclass(frozen=True)
class ConstraintSpec:
    """One constraint family: per-pair weight models and per-server requirements."""

    kind: ConstraintKind
    weight_models: tuple[tuple[Model, ...], ...]
    requirement_models: tuple[Model, ...]
    sign: Sign
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "weight_models", tuple(tuple(r) for r in self.weight_models))
        object.__setattr__(self, "requirement_models", tuple(self.requirement_models))
        if not self.name:
            object.__setattr__(self, "name", ConstraintKind(self.kind).value)

    def weight_means(self) -> np.ndarray:
        return np.array([[m.mean() for m in row] for row in self.weight_models], dtype=float)

    def requirement_means(self, arrival_means: np.ndarray) -> np.ndarray:
        return np.array([m.mean(arrival_means) for m in self.requirement_models], dtype=float)

    @property
    def arrival_dependent(self) -> bool:
        return any(isinstance(m, NegatedArrivalFraction) for m in self.requirement_models)


def _as_model(x) -> Model:
    if isinstance(x, (Deterministic, Bernoulli, Geometric, NegatedArrivalFraction, Empirical)):
        return x
    return model_from_json(x)


def _infer_sign(weight_models) -> Sign:
    lo = min(m.support()[0] for row in weight_models for m in row)
    hi = max(m.support()[1] for row in weight_models for m in row)
    if lo >= 0:
        return Sign.NON_NEGATIVE
    if hi <= 0:
        return Sign.NON_POSITIVE
    raise InstanceError(["resource weights mix positive and negative values"])


def build_constraint(kind: ConstraintKind | str, n_types: int, *, name: str = "", **params) -> ConstraintSpec:
    """Construct a constraint family from its natural parameters.

    ``capacity`` takes ``service`` (per-server models or numbers), ``fairness``
    takes ``fractions`` (the d_j vector), ``resource`` takes ``weights`` (N x M)
    and ``requirements`` (M), ``custom`` additionally takes ``sign``.
    """
    kind = ConstraintKind(kind)
    if kind is ConstraintKind.CAPACITY:
        if "service" not in params:
            raise InstanceError(["capacity constraint needs per-server 'service' models"])
        reqs = tuple(_as_model(m) for m in params["service"])
        weights = tuple(tuple(Deterministic(1.0) for _ in reqs) for _ in range(n_types))
        return ConstraintSpec(kind, weights, reqs, Sign.NON_NEGATIVE, name)
    if kind is ConstraintKind.FAIRNESS:
        if "fractions" not in params:
            raise InstanceError(["fairness constraint needs the 'fractions' vector"])
        d = [float(v) for v in params["fractions"]]
        bad = [f"fairness fraction d[{j}]={v} outside [0,1]" for j, v in enumerate(d) if not 0 <= v <= 1]
        if bad:
            raise InstanceError(bad)
        weights = tuple(tuple(Deterministic(-1.0) for _ in d) for _ in range(n_types))
        return ConstraintSpec(kind, weights, tuple(NegatedArrivalFraction(v) for v in d), Sign.NON_POSITIVE, name)
    if "weights" not in params or "requirements" not in params:
        raise InstanceError([f"{kind.value} constraint needs 'weights' and 'requirements'"])
    weights = tuple(tuple(_as_model(m) for m in row) for row in params["weights"])
    reqs = tuple(_as_model(m) for m in params["requirements"])
    if kind is ConstraintKind.RESOURCE:
        sign = _infer_sign(weights)
    else:
        if "sign" not in params:
            raise InstanceError(["custom constraint needs an explicit 'sign'"])
        sign = Sign(params["sign"])
    return ConstraintSpec(kind, weights, reqs, sign, name)


@dataclass(frozen=True)
class Instance:
    arrival_models: tuple[Model, ...]
    reward_models: tuple[tuple[Model, ...], ...]
    constraints: tuple[ConstraintSpec, ...] = ()
    c_lambda: float = 1.0
    c_u: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "arrival_models", tuple(self.arrival_models))
        object.__setattr__(self, "reward_models", tuple(tuple(r) for r in self.reward_models))
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def n_types(self) -> int:
        return len(self.arrival_models)

    @property
    def n_servers(self) -> int:
        return len(self.reward_models[0]) if self.reward_models else 0

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def arrival_means(self) -> np.ndarray:
        return np.array([m.mean() for m in self.arrival_models], dtype=float)

    @property
    def reward_means(self) -> np.ndarray:
        return np.array([[m.mean() for m in row] for row in self.reward_models], dtype=float)

    @property
    def family_names(self) -> list[str]:
        return [c.name for c in self.constraints]

    @classmethod
    def from_means(cls, arrivals: Sequence[Model], reward_means, constraints=(), c_lambda=1.0, c_u=1.0):
        """Instance with Bernoulli rewards of the given means."""
        rewards = tuple(tuple(Bernoulli(float(r)) for r in row) for row in np.asarray(reward_means, float))
        return cls(tuple(arrivals), rewards, tuple(constraints), c_lambda, c_u)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


class Status(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    NOT_CHECKABLE = "NOT-CHECKABLE"


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    status: Status
    note: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[AssumptionCheck, ...] = field(default_factory=tuple)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def ok(self) -> bool:
        return all(c.status is not Status.FAIL for c in self.checks)

    def lines(self) -> list[str]:
        return [f"{c.name}: {c.status.value}" + (f" ({c.note})" if c.note else "") for c in self.checks]


def _structural_problems(inst: Instance) -> list[str]:
    problems: list[str] = []
    n, m = inst.n_types, inst.n_servers
    if n < 1:
        problems.append("need at least one job type")
    if m < 1:
        problems.append("need at least one server")
    if len(inst.reward_models) != n:
        problems.append(f"reward matrix has {len(inst.reward_models)} rows, expected {n}")
    if not (inst.c_lambda > 0 and inst.c_u > 0):
        problems.append("c_lambda and c_u must be positive")

    for i, a in enumerate(inst.arrival_models):
        bad = ""
        if isinstance(a, Geometric):
            if a.support_start not in (0, 1):
                bad = f"geometric support_start {a.support_start} must be 0 or 1"
            elif not a.mu > 0 or a.support_start == 1 and a.mu < 1:
                bad = f"geometric mean {a.mu} must be > 0 (>= 1 when support starts at 1)"
        elif isinstance(a, Deterministic):
            if a.value < 0 or a.value != int(a.value):
                bad = f"deterministic count {a.value} must be a non-negative integer"
        elif isinstance(a, Bernoulli):
            if not 0 <= a.p <= 1:
                bad = f"bernoulli mean {a.p} outside [0,1]"
        elif isinstance(a, Empirical):
            if any(v < 0 or v != int(v) for v in a.values):
                bad = "empirical counts must be non-negative integers"
        else:
            bad = f"{a.tag} is not an arrival model"
        if not bad:
            lam = a.mean()
            if not lam > 0:
                bad = f"mean {lam} must be > 0"
            elif lam > inst.c_lambda:
                bad = f"mean {lam} exceeds c_lambda={inst.c_lambda}"
        if bad:
            problems.append(f"arrival[{i}]: {bad}")

    for i, row in enumerate(inst.reward_models):
        if len(row) != m:
            problems.append(f"reward row {i} has {len(row)} entries, expected {m}")
            continue
        for j, r in enumerate(row):
            if isinstance(r, (Geometric, NegatedArrivalFraction)):
                problems.append(f"reward[{i},{j}]: {r.tag} is not a reward model")
                continue
            lo, hi = r.support()
            if isinstance(r, Bernoulli):
                lo = hi = r.p
            if lo < 0 or hi > 1:
                problems.append(f"reward[{i},{j}]: mean/support {r} outside [0,1]")

    seen = set()
    for k, c in enumerate(inst.constraints):
        if c.name in seen:
            problems.append(f"constraint[{k}]: duplicate family name {c.name!r}")
        seen.add(c.name)
        if len(c.weight_models) != n or any(len(row) != m for row in c.weight_models):
            problems.append(f"constraint[{k}] ({c.name}): weight matrix must be {n}x{m}")
            continue
        if len(c.requirement_models) != m:
            problems.append(f"constraint[{k}] ({c.name}): requirement vector must have length {m}")
            continue
        for i, row in enumerate(c.weight_models):
            for j, w in enumerate(row):
                if isinstance(w, (Geometric, NegatedArrivalFraction)):
                    problems.append(f"constraint[{k}] weight[{i},{j}]: {w.tag} is not a weight model")
                    continue
                if isinstance(w, Bernoulli) and not 0 <= w.p <= 1:
                    problems.append(f"constraint[{k}] weight[{i},{j}]: bernoulli mean {w.p} outside [0,1]")
                lo, hi = w.support()
                if c.sign is Sign.NON_NEGATIVE and lo < 0 or c.sign is Sign.NON_POSITIVE and hi > 0:
                    problems.append(f"constraint[{k}] weight[{i},{j}]: {w} violates sign {c.sign.value}")
        for j, r in enumerate(c.requirement_models):
            if isinstance(r, Geometric):
                problems.append(f"constraint[{k}] requirement[{j}]: geometric is arrivals-only")
            elif isinstance(r, NegatedArrivalFraction) and not 0 <= r.d <= 1:
                problems.append(f"constraint[{k}] requirement[{j}]: fraction {r.d} outside [0,1]")
            elif isinstance(r, Bernoulli) and not 0 <= r.p <= 1:
                problems.append(f"constraint[{k}] requirement[{j}]: bernoulli mean {r.p} outside [0,1]")
    return problems


def _arrival_bound(a: Model) -> float:
    if isinstance(a, Geometric):
        return math.inf
    return a.support()[1]


def validate_instance(inst: Instance, check_slater: bool = True) -> ValidationReport:
    """Check an instance's structure and the modelling assumptions.

    Structural errors raise :class:`InstanceError` listing every offending
    entry. Assumption checks come back as PASS / FAIL / NOT-CHECKABLE; models
    with unbounded support make the corresponding bound NOT-CHECKABLE.
    """
    problems = _structural_problems(inst)
    if problems:
        raise InstanceError(problems)

    checks = [AssumptionCheck("rewards_in_unit_interval", Status.PASS)]

    bounds = [_arrival_bound(a) for a in inst.arrival_models]
    unbounded = [i for i, b in enumerate(bounds) if math.isinf(b)]
    if unbounded:
        checks.append(AssumptionCheck(
            "bounded_arrivals", Status.NOT_CHECKABLE,
            f"arrival models {unbounded} have unbounded support; means are still <= c_lambda"))
    else:
        over = [i for i, b in enumerate(bounds) if b > inst.c_lambda]
        checks.append(AssumptionCheck(
            "bounded_arrivals", Status.FAIL if over else Status.PASS,
            f"arrival support exceeds c_lambda for types {over}" if over else ""))

    total_arrival_bound = float(sum(bounds))
    over, skipped = [], []
    for k, c in enumerate(inst.constraints):
        for i, row in enumerate(c.weight_models):
            for j, w in enumerate(row):
                if w.bound() > inst.c_u:
                    over.append(f"w[{k}][{i},{j}]")
        for j, r in enumerate(c.requirement_models):
            b = r.bound_given(total_arrival_bound) if isinstance(r, NegatedArrivalFraction) else r.bound()
            if math.isinf(b):
                skipped.append(f"rho[{k}][{j}]")
            elif b > inst.c_u:
                over.append(f"rho[{k}][{j}]")
    if over:
        checks.append(AssumptionCheck("bounded_constraints", Status.FAIL,
                                      "exceed c_u: " + ", ".join(over)))
    elif skipped:
        checks.append(AssumptionCheck("bounded_constraints", Status.NOT_CHECKABLE,
                                      "unbounded requirement models excluded: " + ", ".join(skipped)))
    else:
        checks.append(AssumptionCheck("bounded_constraints", Status.PASS))

    if check_slater:
        from .fluid_lp import FluidProblem, LpStatus, slater_margin

        res = slater_margin(FluidProblem.from_instance(inst))
        if res.status is not LpStatus.OPTIMAL:
            checks.append(AssumptionCheck("slater", Status.FAIL, "fluid problem infeasible"))
        elif res.delta > 0:
            checks.append(AssumptionCheck("slater", Status.PASS, f"delta={res.delta:.6g}"))
        else:
            checks.append(AssumptionCheck("slater", Status.FAIL, "feasible set has no interior"))
    return ValidationReport(tuple(checks))


# --------------------------------------------------------------------------
# instances used in the experiments
# --------------------------------------------------------------------------


def synthetic_instance(support_start: int = 1) -> Instance:
    """Two job types, four servers; capacity, fairness and resource families.

    Arrivals are geometric on {1, 2, ...} by default (numpy's convention);
    ``support_start=0`` gives the zero-inflated variant with the same means.
    """
    n = 2
    cons = (
        build_constraint("capacity", n, service=[0.85, 0.85, 0.8, 0.8]),
        build_constraint("fairness", n, fractions=[0.25, 0.25, 0.20, 0.20]),
        build_constraint("resource", n, weights=[[2, 2, 2, 2], [4, 4, 4, 3.5]], requirements=[3, 3, 2.5, 2.5]),
    )
    r = [[0.5, 0.6, 0.1, 0.2], [0.2, 0.6, 0.5, 0.2]]
    return Instance.from_means([Geometric(1.0, support_start), Geometric(2.0, support_start)], r, cons, c_lambda=2.0, c_u=4.0)


def tutoring_constraints(n_types: int = 2) -> tuple[ConstraintSpec, ...]:
    """Constraint set of the online tutoring replay (three servers)."""
    return (
        build_constraint("capacity", n_types, service=[1 / 3, 0.4, 1 / 3]),
        build_constraint("fairness", n_types, fractions=[0.3, 0.3, 0.3]),
        build_constraint("resource", n_types, weights=[[1, 1, 1.5], [1.5, 1, 1]], requirements=[0.5, 0.35, 1 / 3]),
    )
