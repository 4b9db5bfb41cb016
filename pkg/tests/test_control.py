import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import ConvergenceWarning

from rpduality import plq
from rpduality.control import (
    ControlProblem, SingularControlSolver, adjoint_dynamics, bk_conditions_check, build_bk_instance,
    build_ls_instance, capped_quadratic_utility, default_bk_instance, default_tree, dual_objective,
    forward_dynamics, hamiltonian, hamiltonian_argmin, kkt_check, linear_response, ls_cost, make_dual,
    make_primal, pairing_identity_check, primal_objective, projected_adjoint, random_instance, solve,
    solve_dual, solve_primal, zero_control_trajectory,
)
from rpduality.plq import PLQFunction
from rpduality.tree import ScenarioTree, optional_projection

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_controls(rng, prob):
    shape = (prob.tree.n_nodes, prob.d)
    s = rng.normal(size=shape) * (rng.random(shape) < 0.4)
    return rng.normal(size=shape), s


def random_duals(rng, prob):
    return rng.normal(size=(prob.tree.n_nodes, prob.d)), rng.normal(size=(prob.tree.n_leaves, prob.d))


def hand_trajectory(prob, u, s):
    """Node-by-node recursion written out independently of the library."""
    tree, A, B = prob.tree, np.atleast_2d(prob.A), np.atleast_2d(prob.B)
    n, d = tree.n_nodes, prob.d
    c = np.zeros((n, d))
    z = np.zeros((n, d))
    zdot = np.zeros((n, d))
    for node in range(n):
        par = tree.parent[node]
        c_prev = c[par] if par >= 0 else 0.0
        z[node] = z[par] + tree.mu[par] * zdot[par] if par >= 0 else 0.0
        c[node] = c_prev + u[node] * tree.mu[node] + s[node]
        zdot[node] = A @ z[node] + B @ c[node] + prob.W[node]
    return z, zdot, c


# ---------------------------------------------------------------- dynamics
def test_forward_dynamics_examples():
    tree = ScenarioTree.from_branching([1], mu=1.0)
    zero = PLQFunction.zero()
    prob = ControlProblem(tree, [[0.0]], [[1.0]], np.zeros((2, 1)), zero, zero, zero)
    traj = forward_dynamics(prob, np.zeros((2, 1)), np.zeros((2, 1)))
    assert not traj.z.any() and not traj.zdot.any()
    traj = forward_dynamics(prob, np.array([[2.0], [0.0]]), np.zeros((2, 1)))
    assert traj.c[0, 0] == 2.0 and traj.z[1, 0] == 2.0


def test_ls_trajectory_matches_hand_recursion():
    prob = build_ls_instance(1.0, 2.0, A=0.3)
    rng = np.random.default_rng(4)
    u, s = random_controls(rng, prob)
    traj = forward_dynamics(prob, u, s)
    z, zdot, c = hand_trajectory(prob, u, s)
    assert np.allclose(traj.z, z, atol=1e-13)
    assert np.allclose(traj.zdot, zdot, atol=1e-13)
    assert np.allclose(traj.c, c, atol=1e-13)


def test_zero_control_trajectory_examples():
    prob = build_ls_instance(1.0, 2.0, W=np.zeros((15, 1)))
    a, adot = zero_control_trajectory(prob)
    assert not a.any() and not adot.any()
    prob = build_ls_instance(1.0, 2.0)
    _, adot = zero_control_trajectory(prob)
    assert np.array_equal(adot, prob.W)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_superposition(seed):
    rng = np.random.default_rng(seed)
    prob = random_instance(rng)
    u1, s1 = random_controls(rng, prob)
    u2, s2 = random_controls(rng, prob)
    _, adot = zero_control_trajectory(prob)
    lin = linear_response(prob, u1, s1)
    assert np.allclose(forward_dynamics(prob, u1, s1).zdot - adot, lin, atol=1e-12)
    both = linear_response(prob, u1 + 2 * u2, s1 + 2 * s2)
    assert np.allclose(both, lin + 2 * linear_response(prob, u2, s2), atol=1e-12)


# ----------------------------------------------------------------- adjoint
def test_adjoint_zero():
    prob = build_ls_instance(1.0, 2.0)
    adj = adjoint_dynamics(prob, np.zeros((15, 1)), np.zeros((8, 1)))
    assert not adj.p.any() and not adj.op.any()


def test_adjoint_one_period_by_hand():
    tree = ScenarioTree.from_branching([2], mu=0.5)
    zero = PLQFunction.zero()
    prob = ControlProblem(tree, [[0.0]], [[1.0]], np.zeros((3, 1)), zero, zero, zero)
    w = np.array([[1.0], [2.0], [-4.0]])
    eta = np.array([[0.5], [1.0]])
    adj = adjoint_dynamics(prob, w, eta)
    p1 = -eta[:, 0] - 0.5 * w[1:, 0]
    p0 = p1 - 0.5 * w[0, 0]
    assert adj.p[:, 1, 0] == pytest.approx(p1)
    assert adj.p[:, 0, 0] == pytest.approx(p0)
    assert adj.op[0, 0] == pytest.approx(p0.mean())


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_projected_adjoint_matches_pathwise(seed):
    rng = np.random.default_rng(seed)
    prob = random_instance(rng)
    w, eta = random_duals(rng, prob)
    adj = adjoint_dynamics(prob, w, eta)
    assert np.allclose(optional_projection(prob.tree, adj.p), adj.op, atol=1e-12)
    assert np.allclose(projected_adjoint(prob, w, eta), adj.op, atol=1e-12)


def test_pairing_zero_inputs():
    prob = build_ls_instance(1.0, 2.0)
    z = np.zeros((15, 1))
    assert pairing_identity_check(prob, z, z, z, np.zeros((8, 1))) == 0.0


def test_pairing_atom_control_against_density_dual():
    tree = ScenarioTree.from_branching([1], mu=1.0)
    zero = PLQFunction.zero()
    prob = ControlProblem(tree, [[0.0]], [[1.0]], np.zeros((2, 1)), zero, zero, zero)
    s = np.array([[1.0], [0.0]])
    w = np.array([[0.7], [-0.2]])
    # both sides equal w0 + w1
    lin = linear_response(prob, np.zeros((2, 1)), s)
    assert float((w * lin).sum()) == pytest.approx(0.5)
    q = adjoint_dynamics(prob, w, np.zeros((1, 1))).q
    assert -q[0, 0] * 1.0 == pytest.approx(0.5)
    assert pairing_identity_check(prob, np.zeros((2, 1)), s, w, np.zeros((1, 1))) <= 1e-15


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_pairing_identity_random(seed):
    rng = np.random.default_rng(seed)
    prob = random_instance(rng)
    assert pairing_identity_check(prob, *random_controls(rng, prob), *random_duals(rng, prob)) <= 1e-10


# ------------------------------------------------------------- hamiltonian
def test_hamiltonian_argmin_examples():
    prob = build_ls_instance(1.0, 2.0)
    c, ok = hamiltonian_argmin(prob, 0, np.array([2.0]))
    assert ok and c[0] == pytest.approx(1.0)
    c, ok = hamiltonian_argmin(prob, 0, np.array([0.0]))
    assert ok and c[0] == 0.0
    _, ok = hamiltonian_argmin(prob, 0, np.array([3.0]))
    assert not ok


def test_hamiltonian_value():
    prob = build_ls_instance(1.0, 2.0)
    ev = hamiltonian(prob, 0, np.zeros(1), np.ones(1), np.ones(1))
    # g(0) + h*(1) - 1 * (0 + 1 + W_0)
    assert ev.value == pytest.approx(0.0)
    assert ev.argmin_density[0] == pytest.approx(0.5)
    assert hamiltonian(prob, 0, np.zeros(1), np.ones(1), np.full(1, 3.0)).feasible is False


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_hamiltonian_argmin_against_grid(seed):
    rng = np.random.default_rng(seed)
    prob = random_instance(rng, d=1)
    node = int(rng.integers(prob.tree.n_nodes))
    lo, hi = prob.box[0][node, 0], prob.box[1][node, 0]
    q = np.array([rng.uniform(lo, hi)])
    c, ok = hamiltonian_argmin(prob, node, q)
    assert ok
    f = prob.h_star[node].coords[0]
    cs = np.linspace(-30, 30, 600001)
    vals = f(cs) - q[0] * cs
    assert f.value(c[0]) - q[0] * c[0] <= vals.min() + 1e-6


# ------------------------------------------------------------------ solver
def test_zero_problem():
    tree = ScenarioTree.from_branching([2], mu=0.5)
    zero = PLQFunction.zero()
    prob = ControlProblem(tree, [[0.0]], [[1.0]], np.zeros((3, 1)), zero, zero, zero)
    res = solve(prob)
    assert res.primal.value == 0.0 and res.dual.value == 0.0
    assert not res.primal.c.any()
    assert max(kkt_check(prob, res.primal, res.dual).maxima()) == 0.0


def test_ls_instance_builder():
    prob = build_ls_instance(1.0, 2.0)
    assert (prob.h[0].coords[0].domain_lo, prob.h[0].coords[0].domain_hi) == (-2.0, 2.0)
    assert plq.max_probe_difference(prob.h_star[0].coords[0], ls_cost(2.0)) <= 1e-12
    with pytest.warns(UserWarning):
        build_ls_instance(1.0, 0.0)
    flat = build_ls_instance(0.0, 2.0)
    assert plq.max_probe_difference(flat.g[0].coords[0], PLQFunction.zero()) == 0.0


def ls_cvxpy_value(prob):
    cp = pytest.importorskip("cvxpy")
    tree = prob.tree
    n = tree.n_nodes
    anc = np.zeros((n, n))
    for j in range(n):
        k = j
        while k >= 0:
            anc[j, k] = 1.0
            k = tree.parent[k]
    u, s = cp.Variable(n), cp.Variable(n)
    zdot = anc @ (cp.multiply(tree.mu, u) + s) + prob.W[:, 0]
    k = prob.h[0].coords[0].domain_hi
    # ls_cost(k) is cvxpy's huber with threshold k/2
    running = 0.5 * cp.square(zdot) + cp.huber(u, k / 2)
    obj = tree.prob @ cp.multiply(tree.mu, running) + k * tree.prob @ cp.abs(s)
    return cp.Problem(cp.Minimize(obj)).solve()


def test_ls_matches_independent_conic_solver():
    prob = build_ls_instance(1.0, 2.0)
    res = solve(prob)
    assert res.converged
    assert res.primal.value == pytest.approx(ls_cvxpy_value(prob), rel=1e-5)


def test_one_node_against_grid():
    tree = ScenarioTree.from_branching([], mu=1.0)
    prob = ControlProblem(tree, [[0.0]], [[1.0]], np.array([[1.5]]), PLQFunction.quadratic(0.5),
                          PLQFunction.zero(), plq.conjugate(ls_cost(1.0)))
    res = solve(prob)
    us = np.linspace(-3, 3, 1201)
    best = min(primal_objective(prob, np.array([[u]]), np.array([[s]])) for u, s in itertools.product(us, us[::4]))
    assert res.primal.value <= best + 1e-12
    assert best - res.primal.value <= 1e-3


def test_ls_optimum_properties():
    prob = build_ls_instance(1.0, 2.0)
    res = solve(prob)
    assert abs(res.primal.value + res.dual.value) <= 1e-5 * (1 + abs(res.primal.value))
    assert max(kkt_check(prob, res.primal, res.dual).maxima()) <= 1e-5
    q = np.abs(res.dual.q[:, 0])
    assert np.all(q <= 2.0 + 1e-8)
    atoms = np.abs(res.primal.s[:, 0]) > 1e-12
    assert atoms.any() and np.all(q[atoms] >= 2.0 - 1e-5)
    assert primal_objective(prob, res.primal.u, res.primal.s) == pytest.approx(res.primal.value)
    assert dual_objective(prob, res.dual.w_star, res.dual.eta_star) == pytest.approx(res.dual.value)


def test_kkt_detects_perturbation():
    prob = build_ls_instance(1.0, 2.0)
    res = solve(prob)
    u = res.primal.u.copy()
    u[5, 0] += 0.1
    bad = make_primal(prob, u, res.primal.s)
    rep = kkt_check(prob, bad, res.dual)
    assert rep.density[5] > 0
    assert primal_objective(prob, u, res.primal.s) > res.primal.value


def test_solve_primal_and_dual():
    prob = build_ls_instance(1.0, 2.0)
    p, d = solve_primal(prob), solve_dual(prob)
    assert p.value == pytest.approx(-d.value, abs=1e-8)


def test_estimator_api():
    est = SingularControlSolver(tol_gap=1e-6)
    assert est.get_params()["tol_gap"] == 1e-6
    twin = clone(est)
    assert twin is not est and twin.get_params() == est.get_params()
    assert est.fit(build_ls_instance(1.0, 2.0)) is est
    assert est.converged_ and est.result_.primal is est.primal_
    assert est.n_iter_ >= 0


def test_nonconvergence_warns():
    prob = random_instance(np.random.default_rng(1))
    est = SingularControlSolver(max_iter=1, check_every=1, polish=False, tol_gap=1e-14, tol_kkt=1e-14)
    with pytest.warns(ConvergenceWarning):
        est.fit(prob)
    assert not est.converged_ and "not converged" in est.result_.message


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_random_instances_zero_gap(seed):
    rng = np.random.default_rng(seed)
    prob = random_instance(rng)
    res = solve(prob)
    assert res.converged
    assert abs(res.primal.value + res.dual.value) <= 1e-5 * (1 + abs(res.primal.value))
    assert max(kkt_check(prob, res.primal, res.dual).maxima()) <= 1e-5


def test_make_dual_roundtrip():
    prob = build_ls_instance(1.0, 2.0)
    res = solve(prob)
    again = make_dual(prob, res.dual.w_star, res.dual.eta_star)
    assert np.array_equal(again.q, res.dual.q)


# ---------------------------------------------------------------------- BK
def test_bk_optimum_conditions():
    prob = default_bk_instance()
    res = solve(prob)
    checks = bk_conditions_check(prob, res.primal, res.dual)
    assert checks["feasibility"] <= 1e-6
    assert checks["monotonicity"] == 0.0 and np.all(res.primal.dc >= -1e-12)
    assert checks["complementarity"] <= 1e-6
    assert checks["representation"] <= 1e-6


def test_bk_deterministic_price():
    tree = default_tree(2)
    D = np.full((tree.n_nodes, 1), 0.5)
    prob = build_bk_instance(capped_quadratic_utility(1.0), capped_quadratic_utility(1.0, 0.5), D, tree)
    res = solve(prob)
    assert all(v <= 1e-6 for v in bk_conditions_check(prob, res.primal, res.dual).values())


def test_bk_trivial_and_forced_violations():
    prob = default_bk_instance()
    n, L = prob.tree.n_nodes, prob.tree.n_leaves
    zero_p = make_primal(prob, np.zeros((n, 1)), np.zeros((n, 1)))
    zero_d = make_dual(prob, np.zeros((n, 1)), np.zeros((L, 1)))
    assert bk_conditions_check(prob, zero_p, zero_d)["complementarity"] == 0.0
    res = solve(prob)
    op = res.dual.op.copy()
    op[3, 0] = prob.box[1][3, 0] + 0.2
    forced = dataclasses.replace(res.dual, op=op)
    assert bk_conditions_check(prob, res.primal, forced)["feasibility"] == pytest.approx(0.2)
    s = res.primal.s.copy()
    s[2, 0] -= 5.0
    dropped = make_primal(prob, res.primal.u, s)
    assert bk_conditions_check(prob, dropped, res.dual)["monotonicity"] > 0


def test_bk_rejects_negative_price():
    tree = default_tree(1)
    with pytest.raises(ValueError):
        build_bk_instance(PLQFunction.zero(), PLQFunction.zero(), -np.ones((3, 1)), tree)


def test_problem_rejects_h_unbounded_below():
    tree = default_tree(1)
    zero = PLQFunction.zero()
    with pytest.raises(ValueError):
        ControlProblem(tree, [[0.0]], [[1.0]], np.zeros((3, 1)), zero, zero, PLQFunction.linear(1.0, 0.0))
