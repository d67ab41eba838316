import cvxpy as cp
import numpy as np
import pytest

from drsmpc.errors import StageInfeasible
from drsmpc.linalg import CostSpec, SystemModel, synthesize
from drsmpc.ocp import (
    INFEASIBLE,
    OPTIMAL,
    OcpBuilder,
    build_condensed,
    build_program,
    evaluate_cost,
    nominal_cost,
    solve_program,
    trace_constant,
)
from drsmpc.scenarios import buck_boost
from drsmpc.tightening import INPUT, STATE, TwoSidedConstraint, constraint_variance, stage_radii

from conftest import random_instance, scalar_scenario


def _builder(sc, method="dr", form=None):
    return OcpBuilder(sc.model, sc.cost, sc.constraints, sc.synthesize(), method, form, sc.input_tightening)


def _dp_cost(model, cost, S, x0):
    # backward Riccati recursion for the unconstrained finite-horizon problem
    A, B, Q, R = model.A, model.B, cost.Q, cost.R
    P = S
    for _ in range(cost.N):
        G = R + B.T @ P @ B
        P = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(G, B.T @ P @ A)
    return float(x0 @ P @ x0)


def test_unconstrained_program_matches_dynamic_programming(rng):
    # [DERIVED] with inactive constraints both forms reduce to finite-horizon LQR
    for _ in range(5):
        model, cost, _, x0 = random_instance(rng)
        cons = (TwoSidedConstraint(np.eye(model.n_x)[0], 1e4, 0.2, STATE),)
        art = synthesize(model, cost)
        for form in ("conic", "condensed"):
            sol = OcpBuilder(model, cost, cons, art, "dr", form).solve(x0)
            assert sol.status == OPTIMAL
            assert sol.nominal_cost == pytest.approx(_dp_cost(model, cost, art.S, x0), rel=1e-6, abs=1e-8)


def test_single_stage_closed_form():
    # [DERIVED] N = 1: u* = -(R + B'SB)^{-1} B'S A x0
    sc = scalar_scenario(N=1, x0=0.3)
    b = _builder(sc)
    sol = b.solve(sc.x0)
    A, B, R, S = sc.model.A, sc.model.B, sc.cost.R, b.artifacts.S
    u = -np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A @ sc.x0)
    np.testing.assert_allclose(sol.nominalInputs[0], u, atol=1e-7)
    np.testing.assert_allclose(sol.nominalStates[1], A @ sc.x0 + B @ u, atol=1e-7)


def test_conic_program_against_cvxpy_model():
    # [DERIVED] the same two-sided SOC program written directly in cvxpy and
    # solved by SCS (an independent first-order solver)
    sc = buck_boost()
    art = sc.synthesize()
    x0 = np.array([1.0, 2.0])
    N, A, B = sc.cost.N, sc.model.A, sc.model.B
    Sig = art.Sigma
    x = cp.Variable((N + 1, 2))
    u = cp.Variable((N, 1))
    cons = [x[0] == x0]
    obj = 0
    for l in range(N):
        cons.append(x[l + 1] == A @ x[l] + B @ u[l])
        obj += cp.quad_form(x[l], sc.cost.Q) + cp.quad_form(u[l], sc.cost.R)
    obj += cp.quad_form(x[N], art.S)

    def soc(expr, var, b, p):
        y, lam = cp.Variable(), cp.Variable()
        return [cp.abs(expr) <= y + lam, y >= 0, lam >= 0, lam <= b,
                cp.norm(cp.hstack([y, np.sqrt(var)])) <= np.sqrt(p) * (b - lam)]

    for l in range(N + 1):
        for con in sc.constraints:
            if con.kind == STATE:
                v = art.SigmaBar if l == N else Sig[l]
                cons += soc(con.direction @ x[l], con.direction @ v @ con.direction, con.bound, con.epsilon)
            elif l < N:
                var = constraint_variance(con, Sig[l], art.K, sc.input_tightening)
                cons += soc(con.direction @ u[l], var, con.bound, con.epsilon)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="SCS", eps=1e-9, max_iters=200_000)
    sol = _builder(sc).solve(x0)
    assert sol.status == OPTIMAL
    assert sol.nominal_cost == pytest.approx(prob.value, rel=1e-4)
    np.testing.assert_allclose(sol.nominalInputs, u.value, atol=2e-3)


def test_conic_and_condensed_agree_on_random_instances(rng):
    agree = 0
    for _ in range(40):
        model, cost, cons, x0 = random_instance(rng)
        art = synthesize(model, cost)
        a = OcpBuilder(model, cost, cons, art, "dr", "conic").solve(x0)
        b = OcpBuilder(model, cost, cons, art, "dr", "condensed").solve(x0)
        assert a.status == b.status
        if a.feasible:
            assert a.cost == pytest.approx(b.cost, rel=1e-5, abs=1e-8)
            agree += 1
    assert agree > 5


def test_conic_solution_certifies_radius():
    # the auxiliaries returned by the conic form satisfy the SOC set and the
    # resulting |d'v| never exceeds the closed-form radius
    sc = buck_boost()
    b = _builder(sc)
    prog = b.program(np.array([1.0, 2.0]))
    sol = solve_program(prog, b)
    radii = prog.checks["radii"]
    for k, (i, l, _) in enumerate(b._rows):
        con = sc.constraints[i]
        v = sol.nominalStates[-1] if l == "terminal" else (
            sol.nominalStates[l] if con.kind == STATE else sol.nominalInputs[l])
        assert abs(con.direction @ v) <= radii[k] + 1e-6


def test_cost_decomposition():
    sc = buck_boost()
    b = _builder(sc)
    Sigma0 = np.diag([0.02, 0.01])
    sol = b.solve(np.array([0.5, 1.0]), Sigma0)
    Sig = b.covariances(Sigma0)
    # [DERIVED] trace constant summed directly
    K, Q, R, S = b.artifacts.K, sc.cost.Q, sc.cost.R, b.artifacts.S
    direct = sum(np.trace((Q + K.T @ R @ K) @ Sig[l]) for l in range(sc.cost.N)) + np.trace(S @ Sig[-1])
    assert sol.trace_constant == pytest.approx(direct, rel=1e-12)
    assert trace_constant(sc.cost, b.artifacts, Sig) == pytest.approx(direct, rel=1e-12)
    assert sol.cost == pytest.approx(sol.nominal_cost + sol.trace_constant, rel=1e-12)
    assert evaluate_cost(sol, b.artifacts, Sig, sc.cost) == pytest.approx(sol.cost, rel=1e-12)
    assert nominal_cost(sc.cost, S, sol.nominalStates, sol.nominalInputs) == pytest.approx(sol.nominal_cost)


def test_hessian_positive_semidefinite_and_upper_triangular():
    sc = buck_boost()
    for form in ("conic", "condensed"):
        prog = _builder(sc, "dr", form).program(sc.x0)
        assert prog.hessian_min_eig() >= -1e-12
        P = prog.P.toarray()
        assert np.all(np.tril(P, -1) == 0)


def test_only_the_right_hand_side_changes():
    sc = buck_boost()
    b = _builder(sc)
    p1 = b.program(np.array([1.0, 2.0]))
    p2 = b.program(np.array([-0.5, 0.3]), 0.01 * np.eye(2))
    assert (p1.A != p2.A).nnz == 0 and (p1.P != p2.P).nnz == 0
    assert not np.array_equal(p1.b, p2.b)


def test_infeasible_initial_state_detected():
    # [DERIVED] stage 0 has zero variance so its radius is the bound itself
    sc = buck_boost()
    for form in ("conic", "condensed"):
        sol = _builder(sc, "dr", form).solve(np.array([2.5, 0.0]))
        assert sol.status == INFEASIBLE
        assert sol.nominalInputs is None


def test_zero_radius_hyperplane():
    # a constraint with variance eps*b^2 at stage 1 collapses to d'x = 0
    model = SystemModel([[0.0]], [[1.0]], [[0.2]])
    cost = CostSpec([[1.0]], [[1.0]], 2)
    art = synthesize(model, cost)
    cons = (TwoSidedConstraint([1.0], 1.0, 0.2, STATE),)
    radii = stage_radii(cons, art, method="dr")
    assert radii.stage[1, 0] == pytest.approx(0.0, abs=1e-12)
    sol = OcpBuilder(model, cost, cons, art).solve(np.array([0.5]))
    assert sol.feasible
    assert abs(sol.nominalStates[1, 0]) <= 1e-6


def test_empty_tightening_reported_without_solving():
    sc = buck_boost()
    b = OcpBuilder(sc.model, sc.cost, sc.constraints, sc.synthesize(), "dr", "conic", "feedback")
    with pytest.raises(StageInfeasible):
        b.program(sc.x0)
    sol = b.solve(sc.x0)
    assert sol.status == INFEASIBLE and "stage 1" in sol.detail


def test_builder_argument_checks():
    sc = buck_boost()
    art = sc.synthesize()
    with pytest.raises(ValueError):
        OcpBuilder(sc.model, sc.cost, sc.constraints, art, "gauss", "conic")
    with pytest.raises(ValueError):
        OcpBuilder(sc.model, sc.cost, sc.constraints, art, "dr", "dense")
    with pytest.raises(ValueError):
        OcpBuilder(sc.model, sc.cost, (TwoSidedConstraint([1.0, 0.0], 1.0, 0.1, INPUT),), art)
    with pytest.raises(ValueError):
        OcpBuilder(sc.model, sc.cost, sc.constraints, art).program(np.zeros(3))


def test_module_level_builders():
    sc = buck_boost()
    art = sc.synthesize()
    p = build_program(sc.model, sc.cost, sc.constraints, art, sc.x0, input_tightening="nominal")
    q = build_condensed(sc.model, sc.cost, sc.constraints, art, sc.x0, method="cantelli",
                        input_tightening="nominal")
    assert p.form == "conic" and q.form == "condensed"
    a, b = solve_program(p), solve_program(q)
    assert a.feasible and b.feasible
    # the Cantelli slabs are tighter, so its optimum cannot be cheaper
    assert b.cost >= a.cost - 1e-6


def test_method_ordering_of_optimal_cost(rng):
    # nested feasible sets: cantelli subset of dr subset of gauss (in radius)
    sc = buck_boost()
    costs = {m: _builder(sc, m).solve(np.array([1.0, 2.0])).cost for m in ("gauss", "dr", "cantelli")}
    assert costs["gauss"] <= costs["dr"] + 1e-6 <= costs["cantelli"] + 2e-6


def test_feasibility_lp_agrees_with_solver(rng):
    seen = set()
    for _ in range(40):
        model, cost, cons, x0 = random_instance(rng)
        art = synthesize(model, cost)
        for form in ("conic", "condensed"):
            b = OcpBuilder(model, cost, cons, art, "dr", form)
            try:
                prog = b.program(x0)
            except StageInfeasible:
                continue
            sol = solve_program(prog, b)
            lp = b.feasibility_lp(prog)
            assert (lp == 0) == sol.feasible
            seen.add(sol.feasible)
    assert seen == {True, False}


def test_presolve_flags_fixed_rows():
    sc = buck_boost()
    b = _builder(sc)
    assert b.presolve(b.program(np.array([1.0, 2.0]))) is None
    assert b.presolve(b.program(np.array([1.0, 3.5]))) == 1
