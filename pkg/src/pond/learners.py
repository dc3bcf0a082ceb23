"""Optimistic reward indices and per-arm empirical statistics.

An arm is a (job type, server) pair. Unpulled arms get an index of
``math.inf`` (IEEE infinity, never a large finite sentinel).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Learner(str, enum.Enum):
    UCB = "ucb"
    MOSS = "moss"


def ucb_index(mean: float, pulls: int, horizon: int) -> float:
    if pulls == 0:
        return math.inf
    return mean + math.sqrt(math.log(horizon) / pulls)


def moss_index(mean: float, pulls: int, horizon: int, n_servers: int) -> float:
    # log+ keeps the radicand non-negative once pulls > horizon / n_servers
    if pulls == 0:
        return math.inf
    return mean + math.sqrt(2.0 / pulls * max(math.log(horizon / (n_servers * pulls)), 0.0))


def index_matrix(stats: "ArmStats", horizon: int, learner: Learner = Learner.UCB) -> np.ndarray:
    """Vectorized index over all arms, +inf where pulls == 0."""
    pulls = stats.pulls.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if Learner(learner) is Learner.UCB:
            bonus = np.sqrt(math.log(horizon) / pulls)
        else:
            m = stats.pulls.shape[1]
            bonus = np.sqrt(2.0 / pulls * np.maximum(np.log(horizon / (m * pulls)), 0.0))
    return np.where(stats.pulls == 0, np.inf, stats.mean + bonus)


class StatsError(ValueError):
    pass


@dataclass
class ArmStats:
    pulls: np.ndarray  # (N, M) int
    mean: np.ndarray   # (N, M) float, 0 where unpulled

    @classmethod
    def zeros(cls, n_types: int, n_servers: int) -> "ArmStats":
        return cls(np.zeros((n_types, n_servers), dtype=np.int64), np.zeros((n_types, n_servers)))

    def copy(self) -> "ArmStats":
        return ArmStats(self.pulls.copy(), self.mean.copy())


def update_stats(stats: ArmStats, i: int, j: int, batch_count: int, batch_reward_sum: float) -> ArmStats:
    """Fold one batch of rewards for arm (i, j) into a new ArmStats."""
    if batch_count < 0:
        raise StatsError(f"negative batch count {batch_count}")
    if not 0 <= batch_reward_sum <= batch_count:
        raise StatsError(f"reward sum {batch_reward_sum} outside [0, {batch_count}] for arm ({i},{j})")
    out = stats.copy()
    if batch_count == 0:
        return out
    n_old = int(stats.pulls[i, j])
    n_new = n_old + int(batch_count)
    out.pulls[i, j] = n_new
    out.mean[i, j] = (stats.mean[i, j] * n_old + batch_reward_sum) / n_new
    return out
