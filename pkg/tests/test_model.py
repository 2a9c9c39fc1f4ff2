import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aimdnet.model import (ClassParams, DomainError, LossRateSpec, ModelWarning, NetworkModel,
                           NodeLossTerm, binary_tree, check_model, custom_model, eval_beta,
                           linear_model, ring_full, ring_mixed, ring_two, route_of, tree_model,
                           validate)


def codes(model, **kw):
    return {v.code for v in validate(model, **kw)}


def test_r_equal_one_is_a_violation():
    m = ring_two(3, [ClassParams(r=1.0), ClassParams(), ClassParams()])
    found = [v for v in validate(m) if v.code == "r_range"]
    assert len(found) == 1 and found[0].index == 0


def test_ring_constructor_is_valid():
    assert [v for v in validate(ring_two(4, ClassParams(p=0.25)))] == []


def test_additive_term_off_route():
    A = [[1.0, 0.0], [0.0, 1.0]]
    loss = [LossRateSpec.additive(1.0, terms={0: NodeLossTerm(), 1: NodeLossTerm()}),
            LossRateSpec.constant(1.0)]
    m = custom_model(A, ClassParams(p=0.5), loss)
    assert "loss_off_route" in codes(m)


@pytest.mark.parametrize("bad, code", [
    (dict(a=0.0), "a_nonpositive"),
    (dict(p=-1.0), "p_nonpositive"),
    (dict(r=-0.1), "r_range"),
])
def test_class_parameter_violations(bad, code):
    m = custom_model([[1.0]], ClassParams(**bad), LossRateSpec.constant(1.0))
    assert code in codes(m)
    with pytest.raises(ValueError):
        check_model(m)


def test_zero_column_and_negative_entries():
    m = custom_model([[1.0, 0.0], [1.0, 0.0]], ClassParams(p=0.5), LossRateSpec.constant(1.0))
    assert "zero_column" in codes(m)
    m = custom_model([[1.0, -1.0]], ClassParams(p=0.5), LossRateSpec.constant(1.0))
    assert "matrix_negative" in codes(m)


def test_weight_sum_is_only_a_warning():
    m = ring_two(3)
    found = [v for v in validate(m) if v.code == "p_sum"]
    assert found and found[0].severity == "warning"
    with pytest.warns(ModelWarning):
        check_model(m)


def test_zero_base_rate_error_only_for_generic():
    m = ring_two(3, ClassParams(p=1 / 3), LossRateSpec.route_sum(0.0))
    zero = [v for v in validate(m) if v.code == "delta_zero"]
    assert zero and zero[0].severity == "warning"
    zero = [v for v in validate(m, for_generic=True) if v.code == "delta_zero"]
    assert zero[0].severity == "error"


def test_constant_zero_rate_rejected():
    m = custom_model([[1.0]], ClassParams(), LossRateSpec.constant(0.0))
    assert "beta_zero" in codes(m)


def test_routesum_nodes_must_match_route():
    A = [[1.0], [1.0]]
    spec = LossRateSpec.route_sum().on_route([0])
    m = NetworkModel(np.array(A), (ClassParams(),), (spec,))
    assert "loss_route_mismatch" in codes(m)


def test_topology_tag_checked():
    m = ring_two(3)
    wrong = NetworkModel(m.A, m.classes, m.loss, "ring2+full", routes=m.routes)
    assert "topology" in codes(wrong)


def test_eval_beta_examples():
    m = custom_model([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], ClassParams(p=0.5),
                     [LossRateSpec.constant(2.0), LossRateSpec.constant(2.0)])
    assert eval_beta(m, 0, [5.0, 6.0, 7.0]) == 2.0

    A = [[1.0], [1.0], [0.0]]
    m = custom_model(A, ClassParams(), LossRateSpec.additive(1.0))
    assert eval_beta(m, 0, [3.0, 4.0, 9.0]) == 8.0

    m = custom_model(A, ClassParams(), LossRateSpec.route_sum(0.5, 1.0, 2.0))
    assert eval_beta(m, 0, [1.0, 2.0, 9.0]) == pytest.approx(9.5, abs=1e-15)


def test_eval_beta_rejects_negative_load():
    m = ring_two(3)
    with pytest.raises(DomainError):
        eval_beta(m, 0, [-1.0, 0.0, 0.0])


def test_routes_in_topology_order():
    # indices are 0-based: node j here is node j+1 in one-based numbering
    assert route_of(linear_model(3), 0) == [0, 1, 2]
    assert route_of(ring_two(4), 2) == [2, 3]
    assert route_of(ring_two(4), 3) == [3, 0]
    assert route_of(tree_model([-1]), 0) == [0]
    assert route_of(binary_tree(3), 6) == [0, 2, 6]
    assert route_of(ring_full(4), 0) == [0, 1, 2, 3]
    assert route_of(ring_mixed(3), 4) == [1]


@pytest.mark.parametrize("model", [binary_tree(3), linear_model(3), ring_two(5), ring_mixed(4),
                                   ring_full(3)])
def test_routes_equal_column_support(model):
    for k in range(model.K):
        assert set(route_of(model, k)) == set(np.flatnonzero(model.A[:, k] > 0))


def test_structure_shapes():
    assert linear_model(3).A.shape == (3, 4)
    assert ring_mixed(3).A.shape == (3, 6)
    assert ring_full(4).A.shape == (4, 5)
    assert binary_tree(3).A.shape == (7, 7)


def test_model_is_read_only():
    m = ring_two(3)
    with pytest.raises(ValueError):
        m.A[0, 0] = 5.0


def test_ring_needs_two_nodes():
    with pytest.raises(ValueError):
        ring_two(1)


def test_bad_parent_array():
    with pytest.raises(ValueError):
        tree_model([-1, -1])


@pytest.mark.parametrize("spec", [
    LossRateSpec.constant(2.0),
    LossRateSpec.route_sum(0.5, 2.0, 1.5),
    LossRateSpec.additive(1.0, terms={2: NodeLossTerm(1.0, 2.0), 0: NodeLossTerm(3.0, 1.0)}),
    LossRateSpec.additive(1.0).on_route([3, 0]),
])
def test_loss_spec_round_trip(spec):
    assert LossRateSpec.from_dict(spec.to_dict()) == spec


def test_as_route_sum():
    assert LossRateSpec.constant(1.0).as_route_sum().coeff == 0.0
    assert LossRateSpec.additive(1.0).on_route([0, 1]).as_route_sum() == NodeLossTerm()
    squares = LossRateSpec.additive(1.0, 1.0, 2.0).on_route([0, 1])
    assert squares.as_route_sum() is None


loads = st.lists(st.floats(0.0, 50.0), min_size=4, max_size=4)
bumps = st.lists(st.floats(0.0, 10.0), min_size=4, max_size=4)


@settings(max_examples=60, deadline=None)
@given(loads, bumps, st.sampled_from(["additive", "routesum"]), st.floats(0.5, 3.0))
def test_beta_monotone_and_bounded_below(u, du, kind, exponent):
    spec = (LossRateSpec.additive(0.7, 1.3, exponent) if kind == "additive"
            else LossRateSpec.route_sum(0.7, 1.3, exponent))
    m = ring_two(4, ClassParams(p=0.25), spec)
    hi = np.add(u, du)
    for k in range(m.K):
        b = eval_beta(m, k, u)
        assert b >= 0.7
        assert eval_beta(m, k, hi) >= b - 1e-12 * b
