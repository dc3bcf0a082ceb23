"""Regret, constraint violation and scaling fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dispatch import TrialRecord


@dataclass
class TrialMetrics:
    """Trajectories of one trial; index t holds the value after slot t."""

    expected_reward: np.ndarray    # (T,) cumulative true-mean reward
    regret: np.ndarray             # (T,)
    violation_signed: np.ndarray   # (T, M, K) cumulative
    realized_reward: np.ndarray    # (T,) cumulative realized reward
    family_names: tuple[str, ...] = ()
    labels: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.regret.shape[0]

    def regret_at(self, t: int) -> float:
        return 0.0 if t == 0 else float(self.regret[t - 1])

    @property
    def final_regret(self) -> float:
        return self.regret_at(self.horizon)

    @property
    def final_violation(self) -> np.ndarray:
        """Signed cumulative violation at the horizon, (M, K)."""
        return self.violation_signed[-1]

    @property
    def violation_positive_part(self) -> np.ndarray:
        return np.maximum(self.final_violation, 0.0)


def compute_metrics(trial: TrialRecord, true_r: np.ndarray, lp_opt_per_slot: float,
                    family_names: Sequence[str] = (), labels: dict | None = None) -> TrialMetrics:
    true_r = np.asarray(true_r, dtype=float)
    if true_r.shape != trial.allocations.shape[1:]:
        raise ValueError(f"reward means {true_r.shape} do not match allocations {trial.allocations.shape[1:]}")
    per_slot = np.einsum("tnm,nm->t", trial.allocations, true_r)
    expected = np.cumsum(per_slot)
    t = np.arange(1, trial.horizon + 1)
    regret = t * lp_opt_per_slot - expected
    load = np.einsum("tknm,tnm->tmk", trial.weights, trial.allocations)
    excess = load - np.transpose(trial.requirements, (0, 2, 1))
    names = tuple(family_names) or tuple(f"family{k}" for k in range(trial.weights.shape[1]))
    return TrialMetrics(
        expected_reward=expected,
        regret=regret,
        violation_signed=np.cumsum(excess, axis=0),
        realized_reward=np.cumsum(trial.reward_sums.sum(axis=(1, 2))),
        family_names=names,
        labels=dict(labels or {}),
    )


def _sem(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def summarize(trials: Sequence[TrialMetrics]) -> dict:
    """Summary of one cell of trials sharing instance and horizon."""
    if not trials:
        raise ValueError("cannot aggregate an empty list of trials")
    regrets = np.array([m.final_regret for m in trials])
    viol = np.mean([m.final_violation for m in trials], axis=0)  # (M, K)
    row = {
        "n_trials": len(trials),
        "regret_mean": float(regrets.mean()),
        "regret_sem": _sem(regrets),
    }
    for k, name in enumerate(trials[0].family_names):
        row[f"{name}_violation_max_signed"] = float(viol[:, k].max())
        row[f"{name}_violation_pospart"] = float(np.maximum(viol[:, k], 0.0).sum())
    return row


def aggregate(trials: Iterable[TrialMetrics], grouping: Sequence[str] = ("algorithm", "epsilon_mode", "T")) -> list[dict]:
    """One summary row per distinct value of the grouping labels, sorted by key."""
    groups: dict[tuple, list[TrialMetrics]] = {}
    for m in trials:
        key = tuple(m.labels.get(g) for g in grouping)
        groups.setdefault(key, []).append(m)
    if not groups:
        raise ValueError("cannot aggregate an empty list of trials")
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(x) if not isinstance(x, (int, float)) else x for x in k)):
        row = dict(zip(grouping, key))
        row.update(summarize(groups[key]))
        rows.append(row)
    return rows


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    constant_fit: bool = False


def fit_scaling(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares line of value against sqrt(T)."""
    T = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.unique(T).size < 3:
        raise ValueError("need at least three distinct horizons")
    s = np.sqrt(T)
    A = np.column_stack([s, np.ones_like(s)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return ScalingFit(0.0, float(y.mean()), 0.0, constant_fit=True)
    ss_res = float(np.sum((y - A @ np.array([slope, intercept])) ** 2))
    return ScalingFit(float(slope), float(intercept), 1.0 - ss_res / ss_tot)
