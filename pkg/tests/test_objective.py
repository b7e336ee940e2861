import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svocontrol.objective import (
    FollowerPayoff,
    Horizon,
    ObjectiveParams,
    evaluate_objective,
    follower_penalty,
    follower_penalty_grad,
    payoff_follower,
    payoff_self,
    running_cost,
    running_cost_series,
    svo_utility,
    svo_weights,
    trapezoid,
)
from svocontrol.vehicle_models import OvrvParams

OVRV = OvrvParams()
phis = st.floats(0.0, math.pi / 2)
speeds = st.floats(0.0, 35.0)


def test_svo_weights_at_the_ends_are_exact():
    assert svo_weights(0.0) == (1.0, 0.0)
    assert svo_weights(math.pi / 2) == (0.0, 1.0)
    c, s = svo_weights(math.pi / 4)
    assert c == pytest.approx(math.sqrt(0.5)) and s == pytest.approx(math.sqrt(0.5))


@given(phis)
def test_svo_weights_lie_on_the_unit_circle(phi):
    c, s = svo_weights(phi)
    assert c >= 0 and s >= 0
    assert c * c + s * s == pytest.approx(1.0)


def test_svo_utility_blends_payoffs():
    assert svo_utility(0.0, -3.0, -7.0) == -3.0
    assert svo_utility(math.pi / 2, -3.0, -7.0) == -7.0


def test_trapezoid_is_exact_for_linear_data():
    t = np.linspace(0.0, 2.0, 21)
    assert trapezoid(3.0 * t + 1.0, 0.1) == pytest.approx(8.0, abs=1e-12)
    assert trapezoid([5.0], 0.1) == 0.0


def test_payoff_self_quadrature_converges_at_second_order():
    # -int_0^1 1/2 (e^t)^2 dt = -(e^2 - 1) / 4
    exact = -(math.e ** 2 - 1.0) / 4.0
    errors = []
    for n in (20, 40, 80):
        t = np.linspace(0.0, 1.0, n + 1)
        errors.append(abs(payoff_self(np.exp(t), 1.0 / n) - exact))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.01)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.01)


def test_payoff_self_constant_accel():
    assert payoff_self(np.full(11, 0.4), 0.1) == pytest.approx(-0.5 * 0.16 * 1.0)


def test_payoff_follower_variants():
    v = np.full(11, 20.0)
    v_self = np.full(11, 18.0)
    desired = ObjectiveParams()
    assert payoff_follower(v, v_self, desired, 0.1) == pytest.approx(-0.5 * 100.0)
    maxspeed = ObjectiveParams(follower_payoff="MaxSpeed")
    assert payoff_follower(v, v_self, maxspeed, 0.1) == pytest.approx(0.5 * 400.0)
    smooth = ObjectiveParams(follower_payoff=FollowerPayoff.SMOOTHNESS)
    assert payoff_follower(v, v_self, smooth, 0.1) == pytest.approx(-0.5 * 4.0)


@settings(max_examples=50)
@given(st.sampled_from(list(FollowerPayoff)), speeds, speeds)
def test_follower_penalty_grad_matches_differences(kind, v_self, v_follow):
    p = ObjectiveParams(follower_payoff=kind)
    h = 1e-6
    g_self, g_follow = follower_penalty_grad(v_self, v_follow, p)
    fd_self = (follower_penalty(v_self + h, v_follow, p) - follower_penalty(v_self - h, v_follow, p)) / (4 * h)
    fd_follow = (follower_penalty(v_self, v_follow + h, p) - follower_penalty(v_self, v_follow - h, p)) / (4 * h)
    assert g_self == pytest.approx(fd_self, abs=1e-5)
    assert g_follow == pytest.approx(fd_follow, abs=1e-5)


def test_max_speed_penalty_rewards_speed():
    # minimizing the cost must push the follower faster, so the penalty falls with speed
    p = ObjectiveParams(phi=math.pi / 2, lam=0.0, follower_payoff="MaxSpeed")
    y_slow, y_fast = (0.0, 10.0, -30.0, 10.0), (0.0, 10.0, -30.0, 12.0)
    exo = (40.0, 10.0, 5.0)
    assert running_cost(y_fast, 0.0, exo, p, OVRV) < running_cost(y_slow, 0.0, exo, p, OVRV)


def test_running_cost_hand_value():
    p = ObjectiveParams(phi=math.pi / 4, lam=0.02, s_d=10.0)
    y = (0.0, 10.0, -30.0, 12.0)
    exo = (40.0, 12.0, 5.0)  # gap 35 m
    acc = 0.1 * (35.0 - 21.51 - 17.1) + 0.6 * 2.0 + 0.3
    c = s = math.sqrt(0.5)
    expected = 0.5 * (c * acc ** 2 + s * (12.0 - 30.0) ** 2 + 0.02 * 25.0 ** 2)
    assert running_cost(y, 0.3, exo, p, OVRV) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=30)
@given(phis, st.sampled_from(list(FollowerPayoff)), st.integers(0, 2 ** 32 - 1))
def test_series_matches_pointwise(phi, kind, seed):
    rng = np.random.default_rng(seed)
    n = 7
    states = np.column_stack([rng.uniform(-50, 0, n), rng.uniform(0, 25, n), rng.uniform(-120, -60, n), rng.uniform(0, 25, n)])
    exo = np.column_stack([rng.uniform(10, 60, n), rng.uniform(0, 25, n), np.full(n, 5.0)])
    u = rng.uniform(-0.6, 0.6, n)
    p = ObjectiveParams(phi=phi, follower_payoff=kind)
    series = running_cost_series(states, u, exo, p, OVRV)
    pointwise = [running_cost(states[k], u[k], exo[k], p, OVRV) for k in range(n)]
    np.testing.assert_allclose(series, pointwise, rtol=1e-12, atol=1e-12)


def _loop_objective(states, u, exo, p, dt):
    total = 0.0
    for k in range(len(u)):
        total += 0.5 * dt * (running_cost(states[k], u[k], exo[k], p, OVRV) + running_cost(states[k + 1], u[k], exo[k + 1], p, OVRV))
    return total


def test_evaluate_objective_holds_each_control_over_its_interval():
    rng = np.random.default_rng(3)
    states = np.column_stack([np.linspace(-40, 0, 4), [10, 11, 12, 11], np.linspace(-90, -50, 4), [9, 10, 10, 12]])
    exo = np.column_stack([np.linspace(0, 40, 4), [12, 12, 11, 10], np.full(4, 5.0)])
    u = rng.uniform(-0.6, 0.6, 3)
    p = ObjectiveParams(phi=0.7)
    j = evaluate_objective(states, u, exo, p, OVRV, 1.0)
    assert j == pytest.approx(_loop_objective(states, u, exo, p, 1.0), rel=1e-13)
    # a node series carries one extra entry that is ignored
    assert evaluate_objective(states, np.append(u, 99.0), exo, p, OVRV, 1.0) == j
    with pytest.raises(ValueError):
        evaluate_objective(states, u[:2], exo, p, OVRV, 1.0)
    with pytest.raises(ValueError):
        evaluate_objective(states, u, exo[:3], p, OVRV, 1.0)


def test_objective_params_validation():
    with pytest.raises(ValueError):
        ObjectiveParams(phi=-0.1)
    with pytest.raises(ValueError):
        ObjectiveParams(phi=2.0)
    with pytest.raises(ValueError):
        ObjectiveParams(lam=-1.0)
    with pytest.raises(ValueError):
        ObjectiveParams(follower_payoff="Fastest")


def test_horizon_grid():
    h = Horizon()
    assert h.n_steps == 1200 and h.n_nodes == 1201
    assert h.times[-1] == pytest.approx(120.0)
    with pytest.raises(ValueError):
        Horizon(tf=1.05, dt=0.1)
    with pytest.raises(ValueError):
        Horizon(dt=0.0)
