import numpy as np
import pytest

from pond.instance import (Bernoulli, ConstraintKind, Deterministic, Empirical, Geometric, Instance,
                           InstanceError, NegatedArrivalFraction, Sign, Status, build_constraint,
                           model_from_json, model_to_json, synthetic_instance, tutoring_constraints,
                           validate_instance)


def test_synthetic_instance_structure_and_flags(synthetic_inst):
    rep = validate_instance(synthetic_inst)
    assert rep.ok
    assert rep["rewards_in_unit_interval"].status is Status.PASS
    a2 = rep["bounded_arrivals"]
    assert a2.status is Status.NOT_CHECKABLE and "unbounded" in a2.note
    assert rep["slater"].status is Status.PASS
    assert synthetic_inst.family_names == ["capacity", "fairness", "resource"]
    np.testing.assert_allclose(synthetic_inst.arrival_means, [1.0, 2.0])


def test_reward_mean_out_of_range_names_cell():
    with pytest.raises(InstanceError, match=r"reward\[0,0\]"):
        validate_instance(Instance.from_means([Deterministic(1)], [[1.2, 0.5]], c_lambda=1, c_u=1))


def test_negative_mean_is_structural():
    with pytest.raises(InstanceError):
        validate_instance(Instance.from_means([Deterministic(-1)], [[0.5]], c_lambda=1, c_u=1))


def test_shape_mismatch_is_structural():
    cap = build_constraint("capacity", 1, service=[0.5, 0.5, 0.5])
    with pytest.raises(InstanceError):
        validate_instance(Instance.from_means([Deterministic(1)], [[0.5, 0.5]], [cap], 1, 1))


def test_constant_capacity_passes_assumption3():
    cap = build_constraint("capacity", 1, service=[0.85, 0.85])
    inst = Instance.from_means([Deterministic(1)], [[0.5, 0.4]], [cap], c_lambda=1, c_u=1)
    rep = validate_instance(inst)
    assert rep["bounded_constraints"].status is Status.PASS
    assert rep["bounded_arrivals"].status is Status.PASS


def test_validation_is_pure(synthetic_inst):
    assert validate_instance(synthetic_inst) == validate_instance(synthetic_inst)


def test_build_capacity():
    spec = build_constraint("capacity", 2, service=[0.85, 0.85, 0.8, 0.8])
    assert spec.kind is ConstraintKind.CAPACITY and spec.sign is Sign.NON_NEGATIVE
    np.testing.assert_array_equal(spec.weight_means(), np.ones((2, 4)))
    np.testing.assert_allclose(spec.requirement_means(np.array([1.0, 2.0])), [0.85, 0.85, 0.8, 0.8])


def test_build_fairness():
    spec = build_constraint("fairness", 2, fractions=[0.25, 0.25, 0.2, 0.2])
    assert spec.sign is Sign.NON_POSITIVE
    np.testing.assert_array_equal(spec.weight_means(), -np.ones((2, 4)))
    assert isinstance(spec.requirement_models[0], NegatedArrivalFraction)
    np.testing.assert_allclose(spec.requirement_means(np.array([1.0, 2.0])), [-0.75, -0.75, -0.6, -0.6])
    assert spec.arrival_dependent


@pytest.mark.parametrize("bad", [-0.1, 1.5])
def test_fairness_fraction_range(bad):
    with pytest.raises(InstanceError, match="outside"):
        build_constraint("fairness", 1, fractions=[0.2, bad])


def test_build_resource_passthrough():
    spec = build_constraint("resource", 2, weights=[[2, 2, 2, 2], [4, 4, 4, 3.5]], requirements=[3, 3, 2.5, 2.5])
    assert spec.sign is Sign.NON_NEGATIVE
    np.testing.assert_allclose(spec.weight_means(), [[2, 2, 2, 2], [4, 4, 4, 3.5]])


def test_resource_mixed_signs_rejected():
    with pytest.raises(InstanceError):
        build_constraint("resource", 1, weights=[[1, -1]], requirements=[1, 1])


def test_missing_models():
    with pytest.raises(InstanceError):
        build_constraint("capacity", 1)
    with pytest.raises(InstanceError):
        build_constraint("custom", 1, weights=[[1]], requirements=[1])


def test_geometric_conventions():
    assert Geometric(2.0).success_prob == pytest.approx(1 / 3)
    assert Geometric(2.0, support_start=1).success_prob == pytest.approx(0.5)
    assert Geometric(2.0).mean() == Geometric(2.0, support_start=1).mean() == 2.0


def test_model_json_roundtrip():
    for m in [Deterministic(2.0), Bernoulli(0.3), Geometric(1.5), Geometric(2.0, support_start=1),
              Empirical((0.1, 0.4))]:
        assert model_from_json(model_to_json(m)) == m
    assert model_from_json(0.85) == Deterministic(0.85)


def test_tutoring_constraints_values():
    cap, fair, res = tutoring_constraints()
    np.testing.assert_allclose(cap.requirement_means(np.ones(2)), [1 / 3, 0.4, 1 / 3])
    np.testing.assert_allclose(fair.requirement_means(np.array([0.5, 0.5])), [-0.3] * 3)
    np.testing.assert_allclose(res.weight_means(), [[1, 1, 1.5], [1.5, 1, 1]])
    np.testing.assert_allclose(res.requirement_means(np.ones(2)), [0.5, 0.35, 1 / 3])


def test_synthetic_instance_default_support():
    assert synthetic_instance().arrival_models[0].support_start == 1
    assert synthetic_instance(support_start=0).arrival_models[1].success_prob == pytest.approx(1 / 3)
