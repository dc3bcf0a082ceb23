import numpy as np
import pytest

from pond.baselines import exploration_length, routing_probabilities, run_etc_trial
from pond.dispatch import PondParams, run_pond_trial
from pond.instance import Deterministic, Instance, build_constraint
from pond.stochastic import StreamSeed


def test_exploration_length_two_by_four():
    assert exploration_length(2, 4, 10000) == 74


def test_exploration_capped_by_horizon():
    assert exploration_length(2, 4, 20) == 20


def deterministic_instance():
    cap = build_constraint("capacity", 1, service=[0.5, 1.0])
    return Instance((Deterministic(1.0),), ((Deterministic(0.9), Deterministic(0.1)),), (cap,), 1.0, 1.0)


def test_exact_estimates_route_by_fluid_solution():
    rec = run_etc_trial(deterministic_instance(), 2000, StreamSeed(5, (("trial", 0),)))
    np.testing.assert_allclose(rec.params["routing"], [[0.5, 0.5]], atol=1e-12)
    assert rec.flags == ()
    L = rec.params["exploration_slots"]
    share = rec.allocations[L:, 0, 0].mean()
    assert abs(share - 0.5) < 0.05


def test_routing_rows_sum_to_one():
    P, flags = routing_probabilities(np.array([[0.3, 0.5], [0.2, 0.1], [0.0, 0.0]]), np.array([0.7, 0.3, 0.0]))
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    np.testing.assert_allclose(P[0], [0.375, 0.625])
    np.testing.assert_allclose(P[1], [2 / 3, 1 / 3])
    np.testing.assert_allclose(P[2], [0.5, 0.5])
    assert flags == ["uniform_type_2_no_arrivals"]


def test_routing_shortfall_to_lp_preferred():
    P, _ = routing_probabilities(np.array([[0.2, 0.6]]), np.array([1.0]))
    np.testing.assert_allclose(P, [[0.2, 0.8]])


def test_infeasible_estimate_falls_back_uniform():
    cap = build_constraint("capacity", 1, service=[0.2, 0.2])
    inst = Instance((Deterministic(1.0),), ((Deterministic(0.9), Deterministic(0.1)),), (cap,), 1.0, 1.0)
    rec = run_etc_trial(inst, 500, StreamSeed(1, (("trial", 0),)))
    assert "estimated_lp_infeasible_uniform_routing" in rec.flags
    np.testing.assert_allclose(rec.params["routing"], [[0.5, 0.5]])


def test_etc_conservation(synthetic_inst):
    rec = run_etc_trial(synthetic_inst, 3000, StreamSeed(2, (("trial", 0),)))
    np.testing.assert_array_equal(rec.allocations.sum(axis=2), rec.arrivals)
    assert rec.queues.min() >= 0


def test_etc_and_pond_share_exogenous_streams(synthetic_inst):
    seed = StreamSeed(11, (("trial", 0),))
    a = run_etc_trial(synthetic_inst, 500, seed)
    b = run_pond_trial(synthetic_inst, PondParams(v=10.0), 500, seed)
    np.testing.assert_array_equal(a.arrivals, b.arrivals)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.requirements, b.requirements)


def test_etc_reward_sums_bounded(synthetic_inst):
    rec = run_etc_trial(synthetic_inst, 2000, StreamSeed(4, (("trial", 0),)))
    assert np.all(rec.reward_sums <= rec.allocations + 1e-12)
    assert np.all(rec.reward_sums >= 0)
    assert rec.stats.pulls.sum() == rec.arrivals.sum()
