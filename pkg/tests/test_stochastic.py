import numpy as np
import pytest

from pond.instance import Bernoulli, Deterministic, Geometric, build_constraint
from pond.stochastic import (SignViolation, StreamSeed, derive_stream, sample_arrivals,
                             sample_constraint_realization, sample_rewards)


def test_derive_stream_deterministic():
    a = derive_stream(42, [("trial", 0)]).random(1000)
    b = derive_stream(42, [("trial", 0)]).random(1000)
    np.testing.assert_array_equal(a, b)


def test_derive_stream_distinct():
    a = derive_stream(42, [("trial", 0)]).random(1000)
    b = derive_stream(42, [("trial", 1)]).random(1000)
    assert not np.array_equal(a, b)


def test_label_separation():
    arr = derive_stream(42, [("trial", 0), ("arrivals", 0)]).random(10_000)
    rew = derive_stream(42, [("trial", 0), ("rewards", 3)]).random(10_000)
    assert abs(np.corrcoef(arr, rew)[0, 1]) < 0.05
    assert not np.array_equal(arr[:10], rew[:10])


def test_empty_labels_rejected():
    with pytest.raises(ValueError):
        derive_stream(1, [])


def test_stream_seed_child_matches_derive():
    s = StreamSeed(7, (("trial", 2),)).child("rewards", 3)
    np.testing.assert_array_equal(s.stream().random(5), derive_stream(7, [("trial", 2), ("rewards", 3)]).random(5))


def test_deterministic_arrivals():
    x = sample_arrivals([Deterministic(2)], derive_stream(0, [("a", 0)]), n_slots=100)
    assert x.dtype == np.int64 and np.all(x == 2)


def test_geometric_mean_one():
    x = sample_arrivals([Geometric(1.0)], derive_stream(1, [("a", 0)]), n_slots=10**6)
    assert abs(x.mean() - 1.0) < 0.01
    assert x.min() >= 0


def test_geometric_two_zero_probability():
    x = sample_arrivals([Geometric(2.0)], derive_stream(2, [("a", 0)]), n_slots=10**6)
    assert abs(np.mean(x == 0) - 1 / 3) < 0.005


def test_geometric_support_from_one():
    x = sample_arrivals([Geometric(2.0, support_start=1)], derive_stream(3, [("a", 0)]), n_slots=10**6)
    assert x.min() == 1
    assert abs(x.mean() - 2.0) < 0.01


def test_sample_rewards_examples():
    s = derive_stream(5, [("r", 0)])
    assert sample_rewards(Bernoulli(0.5), 0, s).size == 0
    np.testing.assert_array_equal(sample_rewards(Bernoulli(1.0), 5, s), np.ones(5))
    assert abs(sample_rewards(Bernoulli(0.6), 10**6, s).mean() - 0.6) < 0.002


def test_capacity_realization():
    spec = build_constraint("capacity", 2, service=[0.85, 0.85, 0.8, 0.8])
    W, rho = sample_constraint_realization(spec, np.array([1, 2]), derive_stream(0, [("c", 0)]))
    np.testing.assert_array_equal(W, np.ones((2, 4)))
    np.testing.assert_allclose(rho, [0.85, 0.85, 0.8, 0.8])


def test_fairness_realization():
    spec = build_constraint("fairness", 2, fractions=[0.25, 0.25, 0.2, 0.2])
    W, rho = sample_constraint_realization(spec, np.array([1, 2]), derive_stream(0, [("c", 0)]))
    np.testing.assert_array_equal(W, -np.ones((2, 4)))
    assert rho[0] == -0.75


def test_fairness_realization_block_tracks_arrivals():
    spec = build_constraint("fairness", 2, fractions=[0.3])
    arr = np.array([[0, 0], [1, 2], [4, 1]])
    _, rho = sample_constraint_realization(spec, arr, derive_stream(0, [("c", 0)]))
    np.testing.assert_allclose(rho[:, 0], [-0.0, -0.9, -1.5])


def test_resource_constants_every_slot():
    spec = build_constraint("resource", 2, weights=[[2, 2, 2, 2], [4, 4, 4, 3.5]], requirements=[3, 3, 2.5, 2.5])
    W, rho = sample_constraint_realization(spec, np.ones((50, 2), dtype=int), derive_stream(0, [("c", 0)]))
    assert np.all(W == np.array([[2, 2, 2, 2], [4, 4, 4, 3.5]]))
    assert np.all(rho == np.array([3, 3, 2.5, 2.5]))


def test_custom_sign_violation_names_cell():
    spec = build_constraint("custom", 1, weights=[[Bernoulli(0.5), Deterministic(-1.0)]],
                            requirements=[1, 1], sign="nonnegative")
    with pytest.raises(SignViolation, match=r"constraint 2 .*\(0,1\)"):
        sample_constraint_realization(spec, np.array([1]), derive_stream(0, [("c", 0)]), family_index=2)
