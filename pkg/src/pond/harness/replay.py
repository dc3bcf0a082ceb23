"""Offline evaluation on uniformly logged data by reject sampling.

Records are drawn with replacement (bootstrap). Each draw presents one job of
the record's context type; the policy proposes a server and the record only
counts when the proposal equals the logged server. Accepted records advance
the slot clock; rejected ones are discarded. Requirements are realized for a
single arrival per slot and drawn up front for all slots, since they do
not depend on which records get accepted.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..baselines import exploration_length, routing_probabilities
from ..dispatch import PondParams, TrialRecord, compute_weights, update_queues
from ..fluid_lp import FluidProblem, LpStatus, solve_fluid_lp
from ..instance import Instance
from ..learners import ArmStats, Learner, index_matrix, update_stats
from ..stochastic import StreamSeed, sample_constraint_realization


class ReplayError(ValueError):
    pass


@dataclass(frozen=True)
class LoggedDataset:
    contexts: np.ndarray  # (R,) int job type
    arms: np.ndarray      # (R,) int logged server
    rewards: np.ndarray   # (R,) float in [0, 1]
    n_types: int
    n_servers: int
    logging_policy: str = "uniform"

    def __post_init__(self):
        problems = []
        if self.contexts.size == 0:
            problems.append("dataset is empty")
        if not (self.contexts.shape == self.arms.shape == self.rewards.shape):
            problems.append("column lengths differ")
        elif self.contexts.size:
            if self.contexts.min() < 0 or self.contexts.max() >= self.n_types:
                problems.append(f"context_type outside [0, {self.n_types})")
            if self.arms.min() < 0 or self.arms.max() >= self.n_servers:
                problems.append(f"logged_arm outside [0, {self.n_servers})")
            if self.rewards.min() < 0 or self.rewards.max() > 1:
                problems.append("reward outside [0, 1]")
        if self.logging_policy != "uniform":
            problems.append(f"reject-sampling replay needs uniform logging, got {self.logging_policy!r}")
        if problems:
            raise ReplayError("; ".join(problems))

    def __len__(self) -> int:
        return int(self.contexts.size)

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())


def load_logged_csv(path: str | Path, n_types: int, n_servers: int, logging_policy: str = "uniform") -> LoggedDataset:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["context_type", "logged_arm", "reward"]:
            raise ReplayError(f"{path}: header must be context_type,logged_arm,reward, got {reader.fieldnames}")
        rows = list(reader)
    try:
        ctx = np.array([int(r["context_type"]) for r in rows], dtype=np.int64)
        arm = np.array([int(r["logged_arm"]) for r in rows], dtype=np.int64)
        rew = np.array([float(r["reward"]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise ReplayError(f"{path}: malformed row: {exc}") from None
    return LoggedDataset(ctx, arm, rew, n_types, n_servers, logging_policy)


def write_logged_csv(ds: LoggedDataset, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["context_type", "logged_arm", "reward"])
        for c, a, r in zip(ds.contexts, ds.arms, ds.rewards):
            w.writerow([int(c), int(a), repr(float(r))])


def synthesize_logged_dataset(reward_means, context_probs, n_records: int, rng: np.random.Generator) -> LoggedDataset:
    """Uniformly logged Bernoulli-reward records from known means."""
    r = np.asarray(reward_means, dtype=float)
    n, m = r.shape
    ctx = rng.choice(n, size=n_records, p=np.asarray(context_probs, dtype=float))
    arm = rng.integers(m, size=n_records)
    rew = (rng.random(n_records) < r[ctx, arm]).astype(float)
    return LoggedDataset(ctx, arm, rew, n, m)


# --------------------------------------------------------------------------
# policies
# --------------------------------------------------------------------------


class UniformPolicy:
    name = "uniform"

    def __init__(self, n_types: int, n_servers: int):
        self.stats = ArmStats.zeros(n_types, n_servers)

    def propose(self, i: int, W: np.ndarray, q: np.ndarray, u: float) -> int:
        m = self.stats.pulls.shape[1]
        return min(int(u * m), m - 1)

    def observe(self, i, j, reward, W, rho) -> None:
        self.stats = update_stats(self.stats, i, j, 1, reward)


def _argmax_tie(row: np.ndarray, u: float) -> int:
    top = np.flatnonzero(row == row.max())
    return int(top[min(int(u * top.size), top.size - 1)])


class PondPolicy:
    name = "pond"

    def __init__(self, n_types: int, n_servers: int, params: PondParams, horizon: int):
        self.params = params
        self.horizon = max(horizon, 2)
        self.stats = ArmStats.zeros(n_types, n_servers)

    def propose(self, i: int, W: np.ndarray, q: np.ndarray, u: float) -> int:
        r_hat = index_matrix(self.stats, self.horizon, self.params.learner)
        eta = compute_weights(r_hat, q, W, self.params.v)
        return _argmax_tie(eta[i], u)

    def observe(self, i, j, reward, W, rho) -> None:
        self.stats = update_stats(self.stats, i, j, 1, reward)


class EtcPolicy:
    name = "etc"

    def __init__(self, n_types: int, n_servers: int, horizon: int):
        self.n, self.m = n_types, n_servers
        self.horizon = max(horizon, 2)
        self.explore = exploration_length(n_types, n_servers, horizon)
        self.stats = ArmStats.zeros(n_types, n_servers)
        self.seen = 0
        self.ctx_counts = np.zeros(n_types)
        self.w_sum = None
        self.rho_sum = None
        self.P = None
        self.flags: list[str] = []

    def propose(self, i: int, W: np.ndarray, q: np.ndarray, u: float) -> int:
        if self.P is None:
            return _argmax_tie(index_matrix(self.stats, self.horizon, Learner.UCB)[i], u)
        return min(int(np.searchsorted(np.cumsum(self.P[i]), u, side="right")), self.m - 1)

    def observe(self, i, j, reward, W, rho) -> None:
        self.stats = update_stats(self.stats, i, j, 1, reward)
        if self.P is not None:
            return
        self.seen += 1
        self.ctx_counts[i] += 1
        self.w_sum = W.copy() if self.w_sum is None else self.w_sum + W
        self.rho_sum = rho.copy() if self.rho_sum is None else self.rho_sum + rho
        if self.seen >= self.explore:
            lam_hat = self.ctx_counts / self.seen
            est = FluidProblem(lam_hat, self.stats.mean.copy(), self.w_sum / self.seen, self.rho_sum / self.seen)
            sol = solve_fluid_lp(est)
            if sol.status is LpStatus.OPTIMAL:
                self.P, self.flags = routing_probabilities(sol.x_star, lam_hat)
            else:
                self.P = np.full((self.n, self.m), 1.0 / self.m)
                self.flags.append("estimated_lp_infeasible_uniform_routing")


def make_policy(name: str, inst: Instance, horizon: int, params: PondParams | None = None):
    n, m = inst.n_types, inst.n_servers
    if name == "uniform":
        return UniformPolicy(n, m)
    if name == "etc":
        return EtcPolicy(n, m, horizon)
    if name == "pond":
        if params is None:
            raise ValueError("POND replay needs PondParams")
        return PondPolicy(n, m, params, horizon)
    raise ValueError(f"unknown replay policy {name!r}")


# --------------------------------------------------------------------------
# replay loop
# --------------------------------------------------------------------------


@dataclass
class ReplayResult:
    record: TrialRecord
    n_draws: int
    n_accepted: int
    avg_reward: float
    avg_reward_sem: float
    flags: tuple[str, ...] = ()

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_draws

    @property
    def acceptance_sem(self) -> float:
        p = self.acceptance_rate
        return math.sqrt(p * (1 - p) / self.n_draws)

    def to_json(self) -> dict:
        return {
            "algorithm": self.record.algorithm,
            "n_draws": self.n_draws,
            "n_accepted": self.n_accepted,
            "acceptance_rate": self.acceptance_rate,
            "acceptance_sem": self.acceptance_sem,
            "avg_reward": self.avg_reward,
            "avg_reward_sem": self.avg_reward_sem,
            "flags": list(self.flags),
        }


def replay_logged(dataset: LoggedDataset, inst: Instance, algorithm: str, horizon: int, seed: StreamSeed,
                  params: PondParams | None = None, max_draws_per_slot: int = 1000) -> ReplayResult:
    """Reject-sampling replay of one policy for ``horizon`` accepted slots.

    ``inst`` supplies the job/server counts and the constraint models; its
    arrival and reward models are not used.
    """
    n, m, k = inst.n_types, inst.n_servers, inst.n_constraints
    if (dataset.n_types, dataset.n_servers) != (n, m):
        raise ReplayError(f"dataset is {dataset.n_types}x{dataset.n_servers}, instance is {n}x{m}")
    policy = make_policy(algorithm, inst, horizon, params)
    eps = params.epsilon if (algorithm == "pond" and params is not None) else 0.0

    boot = seed.child("bootstrap").stream()
    ties = seed.child("ties").stream()
    one_arrival = np.zeros((horizon, n), dtype=np.int64)
    one_arrival[:, 0] = 1  # requirements only see the total arrival count
    W_all = np.zeros((horizon, k, n, m))
    rho_all = np.zeros((horizon, k, m))
    for kk, spec in enumerate(inst.constraints):
        W_all[:, kk], rho_all[:, kk] = sample_constraint_realization(
            spec, one_arrival, seed.child("constraints", kk).stream(), kk)

    arrivals = np.zeros((horizon, n), dtype=np.int64)
    x_all = np.zeros((horizon, n, m), dtype=np.int64)
    rsum = np.zeros((horizon, n, m))
    qpath = np.zeros((horizon, m, k))
    q = np.zeros((m, k))

    draws, t = 0, 0
    max_draws = max_draws_per_slot * horizon
    while t < horizon:
        if draws >= max_draws:
            raise ReplayError(f"only {t} of {horizon} slots accepted after {draws} draws")
        r = int(boot.integers(len(dataset)))
        draws += 1
        i = int(dataset.contexts[r])
        j = policy.propose(i, W_all[t], q, float(ties.random()))
        if j != dataset.arms[r]:
            continue
        reward = float(dataset.rewards[r])
        arrivals[t, i] = 1
        x_all[t, i, j] = 1
        rsum[t, i, j] = reward
        q = update_queues(q, x_all[t], W_all[t], rho_all[t], eps)
        qpath[t] = q
        policy.observe(i, j, reward, W_all[t], rho_all[t])
        t += 1

    per_slot = rsum.sum(axis=(1, 2))
    sem = float(per_slot.std(ddof=1) / math.sqrt(horizon)) if horizon > 1 else 0.0
    rec = TrialRecord(algorithm=policy.name, arrivals=arrivals, allocations=x_all, weights=W_all,
                      requirements=rho_all, reward_sums=rsum, queues=qpath, stats=policy.stats,
                      params={} if params is None else {"v": params.v, "epsilon": params.epsilon},
                      flags=tuple(getattr(policy, "flags", ())))
    return ReplayResult(rec, draws, horizon, float(per_slot.mean()), sem, rec.flags)
