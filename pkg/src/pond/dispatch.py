"""POND: optimistic rewards, pessimistic virtual queues, MaxWeight dispatch.

Per slot t the dispatcher

1. builds optimistic reward indices from the statistics of slots < t,
2. observes this slot's arrivals and constraint weights,
3. sends every type-i job to one server maximizing
   ``eta_ij = V * r_hat_ij - sum_k W^k_ij Q^k_j``,
4. observes requirements and rewards, updates queues and statistics.

The public per-slot functions operate on numpy arrays; ``run_pond_trial``
drives them through a compiled loop (``engine="jit"``) or a plain Python
loop built from those same functions (``engine="python"``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .instance import Instance
from .learners import ArmStats, Learner, index_matrix, update_stats
from .stochastic import (RandomStream, StreamSeed, sample_arrivals, sample_constraint_realization,
                         sample_rewards)


@dataclass(frozen=True)
class PondParams:
    v: float
    epsilon: float = 0.0
    learner: Learner = Learner.UCB

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError(f"V must be positive, got {self.v}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        object.__setattr__(self, "learner", Learner(self.learner))


@dataclass(frozen=True)
class SlotOutcome:
    arrivals: np.ndarray      # (N,)
    allocation: np.ndarray    # (N, M)
    weights: np.ndarray       # (K, N, M)
    requirements: np.ndarray  # (K, M)
    reward_sums: np.ndarray   # (N, M)
    queues: np.ndarray        # (M, K), after this slot's update


@dataclass
class TrialRecord:
    """Per-slot trace of one episode, plus final learner and queue state."""

    algorithm: str
    arrivals: np.ndarray      # (T, N) int
    allocations: np.ndarray   # (T, N, M) int
    weights: np.ndarray       # (T, K, N, M)
    requirements: np.ndarray  # (T, K, M)
    reward_sums: np.ndarray   # (T, N, M)
    queues: np.ndarray        # (T, M, K)
    stats: ArmStats
    params: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    @property
    def horizon(self) -> int:
        return self.arrivals.shape[0]

    @property
    def final_queues(self) -> np.ndarray:
        return self.queues[-1] if self.horizon else np.zeros(self.queues.shape[1:])

    def slot(self, t: int) -> SlotOutcome:
        return SlotOutcome(self.arrivals[t], self.allocations[t], self.weights[t],
                           self.requirements[t], self.reward_sums[t], self.queues[t])


# --------------------------------------------------------------------------
# per-slot operations
# --------------------------------------------------------------------------


def compute_weights(r_hat: np.ndarray, q: np.ndarray, W: np.ndarray, v: float) -> np.ndarray:
    """MaxWeight scores (N, M); +inf wherever the reward index is +inf.

    ``q`` is the (M, K) queue matrix and ``W`` the (K, N, M) realized weights.
    """
    pressure = np.zeros(r_hat.shape)
    for k in range(W.shape[0]):
        pressure = pressure + W[k] * q[:, k]
    with np.errstate(invalid="ignore"):
        eta = v * r_hat - pressure
    return np.where(np.isposinf(r_hat), np.inf, eta)


def _pick(row: np.ndarray, u: float) -> int:
    top = np.flatnonzero(row == row.max())
    return int(top[min(int(u * top.size), top.size - 1)])


def max_weight_allocate(eta: np.ndarray, arrivals: np.ndarray, tie_stream: RandomStream) -> np.ndarray:
    """Send all type-i jobs to one argmax server of row i, ties uniform.

    One uniform is drawn per job type every call, tie or not, so the tie
    stream advances identically regardless of the scores.
    """
    n, m = eta.shape
    u = tie_stream.random(n)
    x = np.zeros((n, m), dtype=np.int64)
    for i in range(n):
        x[i, _pick(eta[i], u[i])] = arrivals[i]
    return x


def update_queues(q: np.ndarray, x: np.ndarray, W: np.ndarray, rho: np.ndarray, epsilon: float) -> np.ndarray:
    """Virtual queue step, returns the new (M, K) matrix."""
    n, m = x.shape
    out = np.empty_like(q, dtype=float)
    for k in range(W.shape[0]):
        load = np.zeros(m)
        for i in range(n):
            load = load + W[k, i] * x[i]
        out[:, k] = np.maximum(q[:, k] + load - rho[k] + epsilon, 0.0)
    return out


# --------------------------------------------------------------------------
# exogenous randomness of one trial
# --------------------------------------------------------------------------


@dataclass
class Exogenous:
    """Everything the environment draws independently of the algorithm."""

    arrivals: np.ndarray      # (T, N)
    weights: np.ndarray       # (T, K, N, M)
    requirements: np.ndarray  # (T, K, M)
    ties: np.ndarray          # (T, N) uniforms


def draw_exogenous(inst: Instance, horizon: int, seed: StreamSeed) -> Exogenous:
    n, m, k = inst.n_types, inst.n_servers, inst.n_constraints
    arrivals = sample_arrivals(inst.arrival_models, seed.child("arrivals").stream(), horizon)
    W = np.empty((horizon, k, n, m))
    rho = np.empty((horizon, k, m))
    for kk, spec in enumerate(inst.constraints):
        W[:, kk], rho[:, kk] = sample_constraint_realization(
            spec, arrivals, seed.child("constraints", kk).stream(), kk)
    ties = seed.child("ties").stream().random((horizon, n))
    return Exogenous(arrivals, W, rho, ties)


def reward_streams(inst: Instance, seed: StreamSeed) -> list[list[RandomStream]]:
    m = inst.n_servers
    return [[seed.child("rewards", i * m + j).stream() for j in range(m)] for i in range(inst.n_types)]


def reward_buffers(inst: Instance, arrivals: np.ndarray, seed: StreamSeed) -> np.ndarray:
    """Per-arm reward sequences long enough for any allocation, (N, M, L).

    Arm (i, j) consumes its buffer front to back; since the buffer is a
    prefix of the arm's own stream this equals drawing rewards lazily.
    """
    n, m = inst.n_types, inst.n_servers
    totals = arrivals.sum(axis=0)
    L = int(totals.max(initial=0))
    buf = np.zeros((n, m, max(L, 1)))
    streams = reward_streams(inst, seed)
    for i in range(n):
        for j in range(m):
            buf[i, j, :totals[i]] = sample_rewards(inst.reward_models[i][j], int(totals[i]), streams[i][j])
    return buf


# --------------------------------------------------------------------------
# compiled slot loop
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _maxweight_loop(arrivals, W, rho, ties, rewards, ptr, pulls, means, q,
                    x_out, rsum_out, q_out, t_start, t_end,
                    log_horizon, horizon, v, eps, moss, use_queues):
    n, m = pulls.shape
    k_fam = q.shape[1]
    eta = np.empty(m)
    for t in range(t_start, t_end):
        for i in range(n):
            best = -np.inf
            for j in range(m):
                cnt = pulls[i, j]
                if cnt == 0:
                    e = np.inf
                else:
                    if moss:
                        lg = math.log(horizon / (m * cnt))
                        if lg < 0.0:
                            lg = 0.0
                        idx = means[i, j] + math.sqrt(2.0 / cnt * lg)
                    else:
                        idx = means[i, j] + math.sqrt(log_horizon / cnt)
                    press = 0.0
                    if use_queues:
                        for k in range(k_fam):
                            press = press + W[t, k, i, j] * q[j, k]
                    e = v * idx - press
                eta[j] = e
                if e > best:
                    best = e
            n_top = 0
            for j in range(m):
                if eta[j] == best:
                    n_top += 1
            pos = int(ties[t, i] * n_top)
            if pos > n_top - 1:
                pos = n_top - 1
            chosen = 0
            seen = 0
            for j in range(m):
                if eta[j] == best:
                    if seen == pos:
                        chosen = j
                        break
                    seen += 1
            x_out[t, i, chosen] = arrivals[t, i]

        for k in range(k_fam):
            for j in range(m):
                load = 0.0
                for i in range(n):
                    load = load + W[t, k, i, j] * x_out[t, i, j]
                val = q[j, k] + load - rho[t, k, j] + eps
                q[j, k] = val if val > 0.0 else 0.0
                q_out[t, j, k] = q[j, k]

        for i in range(n):
            for j in range(m):
                c = x_out[t, i, j]
                if c == 0:
                    continue
                s = 0.0
                p0 = ptr[i, j]
                for s_idx in range(p0, p0 + c):
                    s = s + rewards[i, j, s_idx]
                ptr[i, j] = p0 + c
                rsum_out[t, i, j] = s
                n_old = pulls[i, j]
                n_new = n_old + c
                pulls[i, j] = n_new
                means[i, j] = (means[i, j] * n_old + s) / n_new


@numba.njit(cache=True)
def queue_path(x, W, rho, eps, q):
    """Queue trajectory (T, M, K) for a fixed allocation sequence; updates ``q``."""
    horizon, n, m = x.shape
    k_fam = q.shape[1]
    out = np.empty((horizon, m, k_fam))
    for t in range(horizon):
        for k in range(k_fam):
            for j in range(m):
                load = 0.0
                for i in range(n):
                    load = load + W[t, k, i, j] * x[t, i, j]
                val = q[j, k] + load - rho[t, k, j] + eps
                q[j, k] = val if val > 0.0 else 0.0
                out[t, j, k] = q[j, k]
    return out


class LoopState:
    """Mutable learner/queue state shared by consecutive loop segments."""

    def __init__(self, inst: Instance, exo: Exogenous, rewards: np.ndarray):
        n, m, k = inst.n_types, inst.n_servers, inst.n_constraints
        horizon = exo.arrivals.shape[0]
        self.exo = exo
        self.rewards = rewards
        self.ptr = np.zeros((n, m), dtype=np.int64)
        self.pulls = np.zeros((n, m), dtype=np.int64)
        self.means = np.zeros((n, m))
        self.q = np.zeros((m, k))
        self.x = np.zeros((horizon, n, m), dtype=np.int64)
        self.rsum = np.zeros((horizon, n, m))
        self.qpath = np.zeros((horizon, m, k))

    def run(self, t_start: int, t_end: int, index_horizon: int, v: float, eps: float,
            learner: Learner, use_queues: bool) -> None:
        e = self.exo
        _maxweight_loop(e.arrivals, e.weights, e.requirements, e.ties, self.rewards, self.ptr,
                        self.pulls, self.means, self.q, self.x, self.rsum, self.qpath,
                        t_start, t_end, math.log(index_horizon), float(index_horizon),
                        float(v), float(eps), Learner(learner) is Learner.MOSS, use_queues)


def _check_horizon(horizon: int) -> None:
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")


def run_pond_trial(inst: Instance, params: PondParams, horizon: int, trial_seed: StreamSeed,
                   engine: str = "jit") -> TrialRecord:
    """Simulate POND for ``horizon`` slots.

    Reward indices use ``max(horizon, 2)`` inside the logarithm so a
    one-slot run is well defined.
    """
    _check_horizon(horizon)
    exo = draw_exogenous(inst, horizon, trial_seed)
    index_horizon = max(horizon, 2)
    if engine == "python":
        return _run_pond_python(inst, params, horizon, trial_seed, exo, index_horizon)
    state = LoopState(inst, exo, reward_buffers(inst, exo.arrivals, trial_seed))
    state.run(0, horizon, index_horizon, params.v, params.epsilon, params.learner, True)
    return TrialRecord(
        algorithm="pond", arrivals=exo.arrivals, allocations=state.x, weights=exo.weights,
        requirements=exo.requirements, reward_sums=state.rsum, queues=state.qpath,
        stats=ArmStats(state.pulls, state.means),
        params={"v": params.v, "epsilon": params.epsilon, "learner": params.learner.value},
    )


class _ReplayTies:
    """Feeds pre-drawn tie uniforms to ``max_weight_allocate`` slot by slot."""

    def __init__(self, ties: np.ndarray):
        self._ties = ties
        self.t = 0

    def random(self, n: int) -> np.ndarray:
        out = self._ties[self.t, :n]
        self.t += 1
        return out


def _run_pond_python(inst, params, horizon, seed, exo, index_horizon) -> TrialRecord:
    n, m, k = inst.n_types, inst.n_servers, inst.n_constraints
    stats = ArmStats.zeros(n, m)
    q = np.zeros((m, k))
    streams = reward_streams(inst, seed)
    ties = _ReplayTies(exo.ties)
    x_all = np.zeros((horizon, n, m), dtype=np.int64)
    rsum = np.zeros((horizon, n, m))
    qpath = np.zeros((horizon, m, k))
    for t in range(horizon):
        r_hat = index_matrix(stats, index_horizon, params.learner)
        eta = compute_weights(r_hat, q, exo.weights[t], params.v)
        x = max_weight_allocate(eta, exo.arrivals[t], ties)
        q = update_queues(q, x, exo.weights[t], exo.requirements[t], params.epsilon)
        for i in range(n):
            for j in range(m):
                if x[i, j]:
                    draws = sample_rewards(inst.reward_models[i][j], int(x[i, j]), streams[i][j])
                    s = 0.0
                    for d in draws:
                        s = s + d
                    rsum[t, i, j] = s
                    stats = update_stats(stats, i, j, int(x[i, j]), s)
        x_all[t] = x
        qpath[t] = q
    return TrialRecord(
        algorithm="pond", arrivals=exo.arrivals, allocations=x_all, weights=exo.weights,
        requirements=exo.requirements, reward_sums=rsum, queues=qpath, stats=stats,
        params={"v": params.v, "epsilon": params.epsilon, "learner": params.learner.value},
    )
