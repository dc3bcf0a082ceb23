import math

import numpy as np
import pytest

from pond.dispatch import PondParams, compute_weights, max_weight_allocate, run_pond_trial, update_queues
from pond.instance import Deterministic, Instance, build_constraint
from pond.stochastic import StreamSeed, derive_stream

from gen import random_instance


def test_weights_zero_queue_is_index():
    r_hat = np.array([[0.3, 0.9], [0.1, 0.2]])
    np.testing.assert_array_equal(compute_weights(r_hat, np.zeros((2, 1)), np.ones((1, 2, 2)), 1.0), r_hat)


def test_weights_arithmetic():
    eta = compute_weights(np.array([[0.5]]), np.array([[3.0]]), np.ones((1, 1, 1)), 2.0)
    assert eta[0, 0] == -2.0


def test_weights_inf_dominates():
    eta = compute_weights(np.array([[math.inf, 0.5]]), np.array([[1e9], [0.0]]), np.ones((1, 1, 2)), 1.0)
    assert eta[0, 0] == math.inf
    eta = compute_weights(np.array([[math.inf]]), np.array([[1.0]]), np.full((1, 1, 1), -math.inf), 1.0)
    assert eta[0, 0] == math.inf


def test_allocate_strict_argmax():
    x = max_weight_allocate(np.array([[3.0, 1.0], [2.0, 5.0]]), np.array([2, 4]), derive_stream(0, [("t", 0)]))
    np.testing.assert_array_equal(x, [[2, 0], [0, 4]])


def test_allocate_empty_slot():
    x = max_weight_allocate(np.array([[3.0, 1.0], [2.0, 5.0]]), np.array([0, 0]), derive_stream(0, [("t", 0)]))
    assert not x.any()


def test_allocate_ties_uniform():
    s = derive_stream(9, [("t", 0)])
    eta = np.array([[5.0, 5.0]])
    hits = sum(max_weight_allocate(eta, np.array([1]), s)[0, 0] for _ in range(10**5))
    assert abs(hits / 1e5 - 0.5) < 0.01


def test_allocate_scale_invariance():
    eta = np.array([[1.0, 3.0, 3.0, -2.0]])
    a = [max_weight_allocate(eta, np.array([1]), derive_stream(s, [("t", 0)])) for s in range(50)]
    b = [max_weight_allocate(7.5 * eta, np.array([1]), derive_stream(s, [("t", 0)])) for s in range(50)]
    assert all(np.array_equal(p, q) for p, q in zip(a, b))


def test_queue_clamp():
    q = update_queues(np.zeros((1, 1)), np.array([[0]]), np.ones((1, 1, 1)), np.array([[1.0]]), 0.0)
    assert q[0, 0] == 0.0


def test_queue_arithmetic():
    q = update_queues(np.array([[2.0]]), np.array([[3]]), np.full((1, 1, 1), 0.5), np.array([[1.0]]), 0.1)
    assert q[0, 0] == pytest.approx(2.6)


def test_queue_fixed_point():
    q0 = np.array([[1.5, 0.2], [0.0, 4.0]])
    q = update_queues(q0, np.zeros((1, 2), dtype=int), np.ones((2, 1, 2)), np.zeros((2, 2)), 0.0)
    np.testing.assert_array_equal(q, q0)


def test_params_validation():
    with pytest.raises(ValueError):
        PondParams(v=0.0)
    with pytest.raises(ValueError):
        PondParams(v=1.0, epsilon=-0.1)


def test_one_slot_cold_start_is_uniform():
    inst = Instance.from_means([Deterministic(1)], [[0.1, 0.9, 0.5]], c_lambda=1, c_u=1)
    counts = np.zeros(3)
    for s in range(3000):
        rec = run_pond_trial(inst, PondParams(v=1.0), 1, StreamSeed(s, (("trial", 0),)))
        assert rec.allocations[0].sum() == 1
        counts += rec.allocations[0, 0]
    assert np.all(np.abs(counts / 3000 - 1 / 3) < 0.04)


def test_slack_constraint_never_queues():
    cap = build_constraint("capacity", 1, service=[2.0])
    inst = Instance.from_means([Deterministic(1)], [[0.7]], [cap], c_lambda=1, c_u=2)
    rec = run_pond_trial(inst, PondParams(v=5.0), 200, StreamSeed(3, (("trial", 0),)))
    assert np.all(rec.queues == 0)
    assert float(np.einsum("tnm,nm->", rec.allocations, inst.reward_means)) == pytest.approx(0.7 * 200)


@pytest.mark.parametrize("seed", range(6))
def test_jit_matches_python_reference(seed):
    inst = random_instance(np.random.default_rng(seed))
    params = PondParams(v=3.0, epsilon=0.05, learner="moss" if seed % 2 else "ucb")
    a = run_pond_trial(inst, params, 150, StreamSeed(seed, (("trial", 0),)))
    b = run_pond_trial(inst, params, 150, StreamSeed(seed, (("trial", 0),)), engine="python")
    np.testing.assert_array_equal(a.allocations, b.allocations)
    np.testing.assert_array_equal(a.reward_sums, b.reward_sums)
    np.testing.assert_array_equal(a.queues, b.queues)
    np.testing.assert_array_equal(a.stats.pulls, b.stats.pulls)
    np.testing.assert_allclose(a.stats.mean, b.stats.mean, rtol=1e-12, atol=1e-12)


def test_weights_seen_before_decision():
    # a weight that flips every slot; POND with a huge queue must avoid the heavy server in the same slot
    from pond.instance import Empirical
    res = build_constraint("custom", 1, weights=[[Empirical((0.0, 10.0)), Deterministic(0.0)]],
                           requirements=[0.0, 1.0], sign="nonnegative")
    inst = Instance.from_means([Deterministic(1)], [[0.9, 0.1]], [res], c_lambda=1, c_u=10)
    rec = run_pond_trial(inst, PondParams(v=1.0), 400, StreamSeed(1, (("trial", 0),)))
    late = slice(50, None)
    heavy = rec.weights[late, 0, 0, 0] > 0
    chose0 = rec.allocations[late, 0, 0] == 1
    assert heavy.any() and (~heavy).any()
    assert chose0[~heavy].mean() > 0.95
    assert chose0[heavy].mean() < 0.5
