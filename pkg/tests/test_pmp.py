import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svocontrol.gradcheck import random_problem, relative_errors
from svocontrol.objective import ObjectiveParams, running_cost
from svocontrol.pmp import (
    ExogenousTrajectory,
    PairProblem,
    SolverConfig,
    StopReason,
    adjoint_gradient,
    adjoint_rhs,
    backward_integrate,
    cost_gradient,
    dynamics_jacobian,
    finite_difference_gradient,
    forward_integrate,
    hamiltonian,
    hamiltonian_gradient,
    objective_value,
    project_control,
    solve,
    system_dynamics,
)
from svocontrol.vehicle_models import (
    CollisionError,
    ControlBounds,
    IdmParams,
    OvrvParams,
    idm_equilibrium_gap,
    ovrv_equilibrium_gap,
)

OVRV, IDM = OvrvParams(), IdmParams()

# a state with positive gaps everywhere, and a predecessor sample (x_p, v_p, l_p)
states = st.tuples(
    st.floats(-40.0, 0.0), st.floats(2.0, 25.0), st.floats(-110.0, -60.0), st.floats(2.0, 25.0)
)
samples = st.tuples(st.floats(20.0, 60.0), st.floats(0.0, 25.0), st.just(5.0))
controls = st.floats(-0.6, 0.6)
objectives = st.builds(
    ObjectiveParams,
    phi=st.floats(0.0, math.pi / 2),
    lam=st.floats(0.0, 0.1),
    s_d=st.floats(5.0, 40.0),
    follower_payoff=st.sampled_from(["DesiredSpeed", "MaxSpeed", "Smoothness"]),
)


def _partial(f, x, i, h=1e-6):
    up, down = list(x), list(x)
    up[i] += h
    down[i] -= h
    return (f(up) - f(down)) / (2 * h)


def cruise_problem(v=15.0, n=50, dt=0.1, phi=0.5):
    """Everyone at ``v`` and at equilibrium spacing behind a constant-speed predecessor."""
    t = dt * np.arange(n + 1)
    x_av = -5.0 - ovrv_equilibrium_gap(OVRV, v)
    x_f = x_av - 5.0 - idm_equilibrium_gap(IDM, v)
    return PairProblem((x_av, v, x_f, v), ExogenousTrajectory(v * t, np.full(n + 1, v)), ObjectiveParams(phi=phi), dt=dt)


def test_system_dynamics_hand_values():
    y = (0.0, 10.0, -30.0, 12.0)
    g = system_dynamics(y, 0.2, (40.0, 12.0, 5.0), OVRV, IDM)
    assert g[0] == 10.0 and g[2] == 12.0
    assert g[1] == pytest.approx(0.1 * (35.0 - 21.51 - 17.1) + 0.6 * 2.0 + 0.2)
    s_star = 2.0 + 1.5 * 12.0 - 12.0 * (10.0 - 12.0) / (2.0 * math.sqrt(1.5))
    assert g[3] == pytest.approx(1.0 - (12.0 / 30.0) ** 4 - (s_star / 25.0) ** 2)


def test_clamp_stops_braking_at_standstill():
    y = (0.0, 0.0, -6.5, 0.0)
    sample = (10.0, 0.0, 5.0)  # both gaps below their standstill distances
    clamped = system_dynamics(y, -0.6, sample, OVRV, IDM)
    free = system_dynamics(y, -0.6, sample, OVRV, IDM, clamp=False)
    assert free[1] < 0 and free[3] < 0
    assert clamped[1] == 0.0 and clamped[3] == 0.0


def test_system_dynamics_detects_contact():
    with pytest.raises(CollisionError):
        system_dynamics((0.0, 5.0, -5.0, 5.0), 0.0, (30.0, 5.0, 5.0), OVRV, IDM)


@settings(max_examples=40)
@given(states, samples, controls)
def test_jacobian_matches_central_differences(y, sample, u):
    jac = dynamics_jacobian(y, sample, OVRV, IDM)
    for i in range(4):
        column = [_partial(lambda z: system_dynamics(z, u, sample, OVRV, IDM, clamp=False)[r], y, i) for r in range(4)]
        np.testing.assert_allclose(jac[:, i], column, rtol=1e-5, atol=1e-6)


@settings(max_examples=40)
@given(states, samples, controls, objectives)
def test_cost_gradient_matches_central_differences(y, sample, u, params):
    grad = cost_gradient(y, u, sample, params, OVRV)
    fd = [_partial(lambda z: running_cost(z, u, sample, params, OVRV), y, i, h=1e-5) for i in range(4)]
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5)


@settings(max_examples=40)
@given(states, samples, controls, objectives, st.tuples(*[st.floats(-50.0, 50.0)] * 4))
def test_adjoint_rhs_is_minus_h_y(y, sample, u, params, psi):
    rhs = adjoint_rhs(y, u, psi, sample, params, OVRV, IDM)
    fd = [-_partial(lambda z: hamiltonian(z, u, psi, sample, params, OVRV, IDM), y, i, h=1e-5) for i in range(4)]
    np.testing.assert_allclose(rhs, fd, rtol=1e-5, atol=1e-4)


@settings(max_examples=40)
@given(states, samples, controls, objectives, st.floats(-50.0, 50.0))
def test_hamiltonian_gradient_is_h_u(y, sample, u, params, psi2):
    psi = (0.3, psi2, -0.7, 1.1)
    h = 1e-6
    fd = (hamiltonian(y, u + h, psi, sample, params, OVRV, IDM) - hamiltonian(y, u - h, psi, sample, params, OVRV, IDM)) / (2 * h)
    assert hamiltonian_gradient(y, u, psi2, sample, params.phi, OVRV) == pytest.approx(fd, rel=1e-6, abs=1e-5)


@given(states, samples, controls, st.floats(-50.0, 50.0))
def test_altruistic_h_u_is_exactly_psi2(y, sample, u, psi2):
    assert hamiltonian_gradient(y, u, psi2, sample, math.pi / 2, OVRV) == psi2


def test_equilibrium_is_preserved_by_forward_integration():
    p = cruise_problem()
    out = forward_integrate(p, np.zeros(p.n_steps))
    np.testing.assert_allclose(out[:, 1], 15.0, atol=1e-9)
    np.testing.assert_allclose(out[:, 3], 15.0, atol=1e-9)


def test_forward_integration_is_fourth_order_with_linear_predecessor():
    def final_state(dt):
        # constant control keeps the right-hand side smooth in time
        p = cruise_problem(n=int(round(4.0 / dt)), dt=dt)
        return forward_integrate(p, np.full(p.n_steps, 0.25))[-1]

    ref = final_state(0.0125)
    e1 = np.abs(final_state(0.2) - ref).max()
    e2 = np.abs(final_state(0.1) - ref).max()
    assert e1 / e2 > 12.0


def test_forward_integration_clamps_speed_at_zero():
    # predecessor parked just ahead: the pair brakes to a stop and must never reverse
    n, dt = 200, 0.1
    exo = ExogenousTrajectory(np.full(n + 1, 40.0), np.zeros(n + 1))
    p = PairProblem((0.0, 6.0, -40.0, 6.0), exo, ObjectiveParams(), dt=dt)
    out = forward_integrate(p, np.full(n, -0.6))
    assert out[:, 1].min() >= 0.0 and out[:, 3].min() >= 0.0
    assert out[-1, 1] == 0.0


def test_forward_integrate_checks_control_length():
    p = cruise_problem()
    with pytest.raises(ValueError):
        forward_integrate(p, np.zeros(p.n_steps + 1))


def test_terminal_costate_is_zero():
    p = random_problem(np.random.default_rng(1))
    u = np.zeros(p.n_steps)
    psi, _ = backward_integrate(p, forward_integrate(p, u), u)
    assert np.all(psi[-1] == 0.0)
    assert psi.shape == (p.n_steps + 1, 4)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_discrete_adjoint_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n_steps=15)
    u = rng.uniform(-0.6, 0.6, p.n_steps)
    err = relative_errors(adjoint_gradient(p, u), finite_difference_gradient(p, u))
    assert err.max() < 1e-3


def test_finite_difference_reference_is_step_insensitive():
    rng = np.random.default_rng(11)
    p = random_problem(rng, n_steps=20)
    u = rng.uniform(-0.6, 0.6, p.n_steps)
    adj = adjoint_gradient(p, u)
    coarse = relative_errors(adj, finite_difference_gradient(p, u, 1e-3)).max()
    fine = relative_errors(adj, finite_difference_gradient(p, u, 5e-4)).max()
    assert coarse < 1e-4 and fine < 1e-4
    with pytest.raises(ValueError):
        finite_difference_gradient(p, u, 0.0)


def test_interpolated_costate_converges_to_discrete_at_second_order():
    def gap(dt):
        n = int(round(4.0 / dt))
        t = dt * np.arange(n + 1)
        exo = ExogenousTrajectory(64.0 + 12.0 * t - 4.0 * np.cos(0.5 * t), 12.0 + 2.0 * np.sin(0.5 * t))
        p = PairProblem((20.0, 12.0, -10.0, 11.0), exo, ObjectiveParams(phi=0.8), dt=dt)
        u = 0.3 * np.sin(dt * (np.arange(n) + 0.5))
        s = forward_integrate(p, u)
        g_exact = backward_integrate(p, s, u)[1]
        g_interp = backward_integrate(p, s, u, scheme="interpolated")[1]
        return np.abs(g_exact - g_interp).max() / np.abs(g_exact).max()

    coarse, fine = gap(0.2), gap(0.1)
    assert fine < coarse / 3.5
    with pytest.raises(ValueError):
        p = cruise_problem()
        u = np.zeros(p.n_steps)
        backward_integrate(p, forward_integrate(p, u), u, scheme="euler")


def test_project_control_clips():
    np.testing.assert_array_equal(project_control([-1.0, 0.1, 2.0], ControlBounds()), [-0.6, 0.1, 0.6])


def test_zero_width_bounds_stop_after_one_iteration():
    p = random_problem(np.random.default_rng(5))
    p.bounds = ControlBounds(0.0, 0.0)
    sol = solve(p, SolverConfig())
    assert sol.report.iterations == 1
    assert sol.report.stop_reason is StopReason.GRADIENT_SMALL
    assert np.all(sol.controls == 0.0)


def test_solve_returns_best_iterate_within_bounds():
    p = random_problem(np.random.default_rng(2), n_steps=30)
    sol = solve(p, SolverConfig(epsilon=0.05, n_max=60))
    r = sol.report
    assert sol.objective == min(r.history)
    assert r.history[r.best_iteration - 1] == sol.objective
    assert sol.objective <= r.history[0]
    assert np.all(np.abs(sol.controls) <= 0.6)
    assert sol.objective == pytest.approx(objective_value(p, sol.controls), rel=1e-12)
    assert r.to_dict()["stop_reason"] == r.stop_reason.value
    assert len(r.grad_norm_sq) == r.iterations


def test_max_iterations_reported():
    p = random_problem(np.random.default_rng(2), n_steps=30)
    sol = solve(p, SolverConfig(epsilon=0.001, n_max=3, upsilon=1e-12, delta=1e-12))
    assert sol.report.iterations == 3
    assert sol.report.stop_reason is StopReason.MAX_ITERATIONS
    assert not sol.report.converged


def test_solve_validates_initial_control():
    p = cruise_problem()
    with pytest.raises(ValueError):
        solve(p, u_init=np.zeros(3))
    with pytest.raises(ValueError):
        solve(p, u_init=np.full(p.n_steps, 0.9))


@pytest.mark.parametrize("kwargs", [{"epsilon": 0.0}, {"epsilon": 1.0}, {"n_max": 0}, {"upsilon": 0.0}, {"delta": -1.0}, {"dt": 0.0}])
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_pair_problem_validation():
    exo = ExogenousTrajectory(np.array([10.0, 11.0]), np.array([10.0, 10.0]))
    with pytest.raises(ValueError):
        PairProblem((8.0, 10.0, -30.0, 10.0), exo, ObjectiveParams())
    with pytest.raises(CollisionError):
        PairProblem((0.0, 10.0, -4.0, 10.0), exo, ObjectiveParams())
    with pytest.raises(ValueError):
        ExogenousTrajectory(np.zeros(3), np.zeros(4))


@pytest.mark.parametrize("seed", range(6))
def test_small_enough_step_descends(seed):
    rng = np.random.default_rng(100 + seed)
    p = random_problem(rng, n_steps=30)
    u = np.zeros(p.n_steps)
    j0 = objective_value(p, u)
    h_u = adjoint_gradient(p, u) / p.dt
    eps = 0.01
    while eps > 1e-8:
        if objective_value(p, project_control(u - eps * h_u, p.bounds)) < j0:
            break
        eps /= 2
    assert eps > 1e-8
