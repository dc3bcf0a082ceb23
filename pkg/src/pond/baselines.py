"""Explore-Then-Commit baseline.

Explores with the plain UCB index (no queue terms) for ceil(N*M*ln T)
slots, then solves the fluid LP on the estimated parameters once and routes
each later job of type i to server j with probability x_hat_ij / lambda_hat_i.
"""
from __future__ import annotations

import math

import numpy as np

from .dispatch import LoopState, TrialRecord, _check_horizon, draw_exogenous, queue_path, reward_buffers
from .fluid_lp import FluidProblem, LpStatus, solve_fluid_lp
from .instance import Instance
from .learners import ArmStats, Learner
from .stochastic import StreamSeed


def exploration_length(n_types: int, n_servers: int, horizon: int) -> int:
    return min(horizon, math.ceil(n_types * n_servers * math.log(max(horizon, 2))))


def routing_probabilities(x_hat: np.ndarray, lam_hat: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Per-type routing distribution from an estimated fluid solution.

    Rows of ``x_hat / lam_hat`` that overshoot 1 are normalized; any
    shortfall goes to the server with the largest LP share. Types with no
    observed arrivals route uniformly and are flagged.
    """
    n, m = x_hat.shape
    flags: list[str] = []
    P = np.empty((n, m))
    for i in range(n):
        if lam_hat[i] <= 0:
            P[i] = 1.0 / m
            flags.append(f"uniform_type_{i}_no_arrivals")
            continue
        row = np.maximum(x_hat[i], 0.0) / lam_hat[i]
        total = row.sum()
        if total > 1.0:
            row = row / total
        elif total < 1.0:
            row[int(np.argmax(x_hat[i]))] += 1.0 - total
        P[i] = row
    return P, flags


def run_etc_trial(inst: Instance, horizon: int, trial_seed: StreamSeed) -> TrialRecord:
    """Simulate ETC; shares arrival, reward and constraint streams with POND."""
    _check_horizon(horizon)
    n, m = inst.n_types, inst.n_servers
    exo = draw_exogenous(inst, horizon, trial_seed)
    state = LoopState(inst, exo, reward_buffers(inst, exo.arrivals, trial_seed))
    L = exploration_length(n, m, horizon)
    state.run(0, L, max(horizon, 2), 1.0, 0.0, Learner.UCB, False)

    flags: list[str] = []
    P = None
    if L < horizon:
        lam_hat = exo.arrivals[:L].mean(axis=0)
        est = FluidProblem(lam_hat, state.means.copy(), exo.weights[:L].mean(axis=0),
                           exo.requirements[:L].mean(axis=0))
        sol = solve_fluid_lp(est)
        if sol.status is LpStatus.OPTIMAL:
            P, flags = routing_probabilities(sol.x_star, lam_hat)
        else:
            P = np.full((n, m), 1.0 / m)
            flags.append("estimated_lp_infeasible_uniform_routing")

        rng = trial_seed.child("routing").stream()
        tail = exo.arrivals[L:]
        for i in range(n):
            state.x[L:, i, :] = rng.multinomial(tail[:, i], P[i])

        for i in range(n):
            for j in range(m):
                counts = state.x[L:, i, j]
                cs = np.concatenate([[0.0], np.cumsum(state.rewards[i, j])])
                ends = state.ptr[i, j] + np.cumsum(counts)
                state.rsum[L:, i, j] = cs[ends] - cs[ends - counts]
                total = int(counts.sum())
                if total:
                    n_old = state.pulls[i, j]
                    s = float(cs[ends[-1]] - cs[state.ptr[i, j]])
                    state.pulls[i, j] = n_old + total
                    state.means[i, j] = (state.means[i, j] * n_old + s) / (n_old + total)
                    state.ptr[i, j] = ends[-1]
        state.qpath[L:] = queue_path(state.x[L:], exo.weights[L:], exo.requirements[L:], 0.0, state.q)

    return TrialRecord(
        algorithm="etc", arrivals=exo.arrivals, allocations=state.x, weights=exo.weights,
        requirements=exo.requirements, reward_sums=state.rsum, queues=state.qpath,
        stats=ArmStats(state.pulls, state.means),
        params={"exploration_slots": L, "routing": None if P is None else P.tolist()}, flags=tuple(flags),
    )
