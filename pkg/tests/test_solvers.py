import math

import numpy as np
import pytest

import oracles
from aimdnet.equilibrium import alpha, load_map, loads, residual, stationary_mean
from aimdnet.model import (ClassParams, LossRateSpec, binary_tree, custom_model, linear_model,
                           ring_full, ring_mixed, ring_two, tree_model)
from aimdnet.solvers import (PreconditionError, SolverOptions, estimate_contraction,
                             scan_multistability, solve, solve_bracket, solve_damped,
                             solve_linear, solve_ring_full, solve_ring_mixed, solve_ring_two,
                             solve_tree)

C = oracles.C_HALF
pytestmark = pytest.mark.filterwarnings("ignore::aimdnet.model.ModelWarning")


def single_node(spec=LossRateSpec.route_sum()):
    return custom_model([[1.0]], ClassParams(), spec)


def constant_net():
    A = [[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]]
    classes = [ClassParams(1.0, 0.5, 0.3), ClassParams(2.0, 0.3, 0.3), ClassParams(0.5, 0.7, 0.4)]
    return custom_model(A, classes, [LossRateSpec.constant(d) for d in (1.0, 2.0, 0.5)])


def closed_form(model):
    return np.array([c.p * stationary_mean(c.r, c.a / s.delta)
                     for c, s in zip(model.classes, model.loss)])


def sup(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


# generic solvers ---------------------------------------------------------

def test_bracket_constant_two_iterations():
    m = constant_net()
    res = solve_bracket(m)
    assert res.converged and res.iterations == 2
    assert sup(res.z_star, closed_form(m)) < 1e-15


def test_bracket_single_node_oracle():
    res = solve_bracket(single_node())
    assert res.u_star[0] == pytest.approx(oracles.single_node_u(), abs=1e-10)
    assert res.u_star[0] == pytest.approx(0.9403, abs=1e-4)
    assert res.unique_certified and res.residual <= 1e-10


def test_bracket_iterates_sandwich():
    m = ring_full(4, ClassParams(a=1.5))
    res = solve_bracket(m, record=True)
    h = res.aux["history"]
    assert res.aux["sandwich_violations"] == 0
    for n in range(0, len(h) - 3, 2):
        slack = 1e-12
        assert np.all(h[n] <= h[n + 2] + slack)
        assert np.all(h[n + 2] <= h[n + 3] + slack)
        assert np.all(h[n + 3] <= h[n + 1] + slack)
    lo, hi = res.bracket
    assert np.all(lo <= res.z_star) and np.all(res.z_star <= hi)


def test_bracket_needs_positive_base_rate():
    with pytest.raises(PreconditionError):
        solve_bracket(ring_two(3, loss=LossRateSpec.route_sum(0.0)))


def test_bracket_reports_uncollapsed_bracket():
    res = solve_bracket(ring_two(3), SolverOptions(max_iter=3))
    assert not res.converged and not res.unique_certified
    assert res.bracket is not None


def test_bracket_custom_start():
    m = single_node()
    res = solve_bracket(m, z0=[0.2])
    assert res.u_star[0] == pytest.approx(oracles.single_node_u(), abs=1e-10)
    with pytest.raises(PreconditionError):
        solve_bracket(m, z0=[5.0])


def test_damped_constant_and_single_node():
    m = constant_net()
    assert sup(solve_damped(m, [7.0, 0.1, 3.0]).z_star, solve_bracket(m).z_star) < 1e-10
    res = solve_damped(single_node(), [10.0])
    assert res.converged and not res.unique_certified and res.bracket is None
    assert res.u_star[0] == pytest.approx(oracles.single_node_u(), abs=1e-9)


def test_damping_iteration_counts():
    m = single_node()
    half = solve_damped(m, [10.0], SolverOptions(damping=0.5))
    full = solve_damped(m, [10.0], SolverOptions(damping=1.0))
    # recorded only; no claim on which is faster
    print(f"damping 0.5: {half.iterations} iterations, damping 1: {full.iterations}")
    assert half.converged


def test_damped_gives_up_cleanly():
    res = solve_damped(ring_two(3), np.ones(3), SolverOptions(max_iter=2))
    assert not res.converged and res.message


# tree --------------------------------------------------------------------

def test_tree_single_root():
    res = solve_tree(tree_model([-1]))
    assert res.u_star[0] == pytest.approx(oracles.single_node_u(), abs=1e-10)


def test_tree_symmetric_leaves():
    res = solve_tree(tree_model([-1, 0, 0], ClassParams(p=1 / 3)))
    assert res.u_star[1] == pytest.approx(res.u_star[2], abs=1e-13)


@pytest.mark.parametrize("loss", [LossRateSpec.additive(), LossRateSpec.route_sum(),
                                  LossRateSpec.additive(0.5, 2.0, 1.5)])
def test_tree_matches_bracket(loss):
    m = binary_tree(3, ClassParams(p=1 / 7), loss)
    res = solve_tree(m)
    assert sup(res.u_star, solve_bracket(m).u_star) < 1e-8
    assert res.unique_certified and residual(m, res.u_star) <= 1e-10


def test_tree_sibling_swap():
    classes = [ClassParams(p=0.25), ClassParams(a=2.0, p=0.25), ClassParams(p=0.25),
               ClassParams(p=0.25)]
    swapped = [classes[0], classes[2], classes[1], classes[3]]
    a = solve_tree(tree_model([-1, 0, 0, 1], classes)).u_star
    b = solve_tree(tree_model([-1, 0, 0, 2], swapped)).u_star
    assert sup(a[[0, 1, 2, 3]], b[[0, 2, 1, 3]]) < 1e-10


def test_tree_rejects_other_topologies():
    with pytest.raises(PreconditionError):
        solve_tree(ring_two(3))


# line ------------------------------------------------------------------------

def test_linear_constant_single_node():
    m = linear_model(1, ClassParams(p=0.5), [LossRateSpec.constant(1.0), LossRateSpec.constant(2.0)])
    res = solve_linear(m)
    z = closed_form(m)
    assert res.u_star[0] == pytest.approx(z[0] + z[1], abs=1e-12)


def test_linear_symmetric():
    m = linear_model(3, ClassParams(p=0.25),
                     [LossRateSpec.route_sum()] + [LossRateSpec.additive()] * 3)
    res = solve_linear(m)
    assert sup(res.u_star, solve_bracket(m).u_star) < 1e-8
    assert np.allclose(res.u_star, oracles.linear_sym_u(3, 0.25), atol=1e-10)
    assert res.unique_certified


def test_linear_monotone_response():
    m = linear_model(2, [ClassParams(p=1 / 3), ClassParams(p=1 / 3), ClassParams(a=2.0, p=1 / 3)])
    res = solve_linear(m)
    assert sup(res.u_star, solve_bracket(m).u_star) < 1e-8
    assert res.u_star[1] > res.u_star[0]


# rings -----------------------------------------------------------------------

def test_ring_two_symmetric_oracle():
    res = solve_ring_two(ring_two(3))
    y = oracles.ring_two_y()
    assert np.allclose(res.aux["ring"].y, y, atol=1e-10)
    assert np.allclose(res.u_star, 2 * y, atol=1e-10)
    assert res.u_star[0] == pytest.approx(1.3592, abs=1e-3)
    assert res.unique_certified


def test_ring_two_constant_one_pass():
    m = ring_two(4, [ClassParams(a=1 + k) for k in range(4)],
                 [LossRateSpec.constant(1 + 0.5 * k) for k in range(4)])
    res = solve_ring_two(m)
    assert res.iterations <= 2
    assert sup(res.z_star, closed_form(m)) < 1e-12


def test_ring_two_asymmetric_matches_bracket():
    classes = [ClassParams(a=2.0 if k == 2 else 1.0, p=0.2) for k in range(5)]
    m = ring_two(5, classes)
    assert sup(solve_ring_two(m).u_star, solve_bracket(m).u_star) < 1e-8


def test_ring_rotation_equivariance():
    def with_fast(k):
        return ring_two(5, [ClassParams(a=2.0 if i == k else 1.0, p=0.2) for i in range(5)])

    a = solve_ring_two(with_fast(0)).u_star
    b = solve_ring_two(with_fast(2)).u_star
    assert sup(np.roll(a, 2), b) < 1e-10


def test_ring_two_y_u_consistency():
    m = ring_two(4, [ClassParams(a=1.0 + 0.3 * k, p=0.25) for k in range(4)])
    res = solve_ring_two(m)
    y = res.aux["ring"].y
    assert sup(res.u_star, np.roll(y, 1) + y) < 1e-14
    s = np.roll(y, 1) + 2 * y + np.roll(y, -1)
    assert sup(y, alpha(m) / np.sqrt(1.0 + s)) < 1e-10


def test_ring_mixed_symmetric_oracle():
    res = solve_ring_mixed(ring_mixed(3))
    y, y0 = oracles.ring_mixed_sym()
    ring = res.aux["ring"]
    assert np.allclose(ring.y, y, atol=1e-10)
    assert np.allclose(ring.y0j, y0, atol=1e-10)
    assert np.allclose(res.u_star, 2 * y + y0, atol=1e-10)
    assert sup(res.u_star, solve_bracket(ring_mixed(3)).u_star) < 1e-8


def test_ring_mixed_heavy_single_node_classes():
    J = 4
    loss = [LossRateSpec.route_sum()] * J + [LossRateSpec.route_sum(1e6)] * J
    res = solve_ring_mixed(ring_mixed(J, ClassParams(), loss))
    assert np.all(res.aux["ring"].y0j < 2e-3)
    assert sup(res.u_star, solve_ring_two(ring_two(J)).u_star) < 1e-3


def test_ring_mixed_constant():
    J = 3
    classes = [ClassParams(a=1 + 0.2 * k) for k in range(2 * J)]
    m = ring_mixed(J, classes, [LossRateSpec.constant(1.0 + k) for k in range(2 * J)])
    assert sup(solve_ring_mixed(m).z_star, closed_form(m)) < 1e-12


def test_ring_mixed_needs_route_sum_rates():
    m = ring_mixed(3, loss=LossRateSpec.additive(1.0, 1.0, 2.0))
    with pytest.raises(PreconditionError):
        solve_ring_mixed(m)


def test_ring_full_symmetric_oracle():
    res = solve_ring_full(ring_full(4))
    y, y0 = oracles.ring_full_sym(4)
    assert res.aux["ring"].y0 == pytest.approx(y0, abs=1e-10)
    assert np.allclose(res.aux["ring"].y, y, atol=1e-10)
    assert res.unique_certified


def test_ring_full_constant_complete_route():
    J = 4
    delta0 = 2.0
    m = ring_full(J, ClassParams(), [LossRateSpec.constant(delta0)] + [LossRateSpec.route_sum()] * J)
    res = solve_ring_full(m)
    y0 = C / math.sqrt(delta0)
    assert res.aux["ring"].y0 == pytest.approx(y0, abs=1e-12)
    # each node also carries y0, so the two-node classes see a shifted base rate
    shifted = solve_ring_two(ring_two(J, ClassParams(), LossRateSpec.route_sum(1.0 + 2 * y0)))
    assert sup(res.aux["ring"].y, shifted.aux["ring"].y) < 1e-8


def test_ring_full_constant():
    m = ring_full(3, [ClassParams(a=1 + k) for k in range(4)],
                  [LossRateSpec.constant(1.0 + k) for k in range(4)])
    res = solve_ring_full(m)
    assert sup(res.z_star, closed_form(m)) < 1e-14 and res.iterations <= 2


# dispatch, scan, contraction ----------------------------------------------

@pytest.mark.parametrize("model", [binary_tree(3, ClassParams(p=1 / 7)),
                                   linear_model(3, ClassParams(p=0.25)), ring_two(4),
                                   ring_mixed(3), ring_full(3)])
def test_dispatch_and_recheck(model):
    res = solve(model)
    assert res.method != "bracket"
    assert residual(model, loads(model, res.z_star)) <= 1e-10
    assert sup(res.u_star, model.A @ res.z_star) == 0.0
    assert sup(res.z_star, load_map(model, res.z_star)) < 1e-9
    assert solve(model, method="generic").method == "bracket"


def test_scan_constant_one_cluster():
    rep = scan_multistability(constant_net(), n_starts=16, seed=1)
    assert rep.n_clusters == 1 and rep.n_failed == 0


def test_scan_ring_matches_solver():
    m = ring_two(3)
    rep = scan_multistability(m, n_starts=32, seed=0)
    assert rep.n_clusters == 1
    assert sup(rep.clusters[0], solve_ring_two(m).z_star) < 1e-8


def test_scan_tree_one_cluster():
    rep = scan_multistability(binary_tree(3, ClassParams(p=1 / 7)), n_starts=32, seed=0)
    assert rep.n_clusters == 1


def test_scan_is_deterministic():
    a = scan_multistability(ring_two(3), n_starts=4, seed=9)
    b = scan_multistability(ring_two(3), n_starts=4, seed=9)
    assert np.array_equal(a.starts, b.starts)
    assert a.to_dict() == b.to_dict()


def test_contraction_constant_is_zero():
    m = ring_two(3, ClassParams(), LossRateSpec.constant(1.0))
    assert estimate_contraction(m) == 0.0


def test_contraction_symmetric_below_one():
    est, grid = estimate_contraction(ring_two(3), return_grid=True)
    assert 0.0 <= est < 1.0
    assert grid.shape == (3, 8, 8) and np.all(grid >= 0)
