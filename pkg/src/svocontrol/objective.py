"""SVO-weighted payoffs and the augmented running cost minimized by the solver.

The running cost for the AV ``i`` and its follower ``i+1`` is

    l(y, u) = 1/2 * [cos(phi) * (f_AV + u)^2
                     + sin(phi) * follower_penalty(y)
                     + lam * (s_i - s_d)^2]

with ``s_i = x_p - y1 - l_p`` the AV's gap to its predecessor.  All time
integrals use the trapezoidal rule on the simulation grid.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .vehicle_models import OvrvParams

HALF_PI = 0.5 * math.pi
_SNAP = 1e-15


class FollowerPayoff(str, enum.Enum):
    DESIRED_SPEED = "DesiredSpeed"
    MAX_SPEED = "MaxSpeed"
    SMOOTHNESS = "Smoothness"


@dataclass(frozen=True)
class ObjectiveParams:
    phi: float = 0.1
    lam: float = 0.01
    s_d: float = 10.0
    v0: float = 30.0
    follower_payoff: FollowerPayoff = FollowerPayoff.DESIRED_SPEED

    def __post_init__(self):
        object.__setattr__(self, "follower_payoff", FollowerPayoff(self.follower_payoff))
        if not 0.0 <= self.phi <= HALF_PI + 1e-12:
            raise ValueError(f"SVO angle must lie in [0, pi/2], got {self.phi!r}")
        if not self.lam >= 0:
            raise ValueError("soft-constraint weight must be non-negative")
        if not self.s_d > 0:
            raise ValueError("desired spacing must be positive")

    @property
    def weights(self) -> tuple[float, float]:
        return svo_weights(self.phi)


@dataclass(frozen=True)
class Horizon:
    t0: float = 0.0
    tf: float = 120.0
    dt: float = 0.1
    n_steps: int = field(init=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tf > self.t0:
            raise ValueError("tf must exceed t0")
        steps = (self.tf - self.t0) / self.dt
        n = int(round(steps))
        if n < 1 or abs(steps - n) > 1e-9 * max(1.0, steps):
            raise ValueError(f"horizon length {self.tf - self.t0} is not a whole number of dt={self.dt} steps")
        object.__setattr__(self, "n_steps", n)

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_nodes)


def svo_weights(phi: float) -> tuple[float, float]:
    """(self weight, other weight) = (cos phi, sin phi).

    Values within rounding of zero are snapped so that phi=pi/2 gives an exact
    zero self weight (``math.cos(math.pi / 2)`` is 6e-17, not 0).
    """
    c, s = math.cos(phi), math.sin(phi)
    if abs(c) < _SNAP:
        c = 0.0
    if abs(s) < _SNAP:
        s = 0.0
    return c, s


def svo_utility(phi: float, u_self: float, u_other: float) -> float:
    w_self, w_other = svo_weights(phi)
    return w_self * u_self + w_other * u_other


def trapezoid(values, dt: float) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))


def payoff_self(accel, dt: float) -> float:
    """Eco-driving payoff of the AV: ``-int 1/2 a(t)^2 dt``."""
    accel = np.asarray(accel, dtype=float)
    return -trapezoid(0.5 * accel ** 2, dt)


def payoff_follower(speed, self_speed, params: ObjectiveParams, dt: float) -> float:
    speed = np.asarray(speed, dtype=float)
    kind = params.follower_payoff
    if kind is FollowerPayoff.DESIRED_SPEED:
        return -trapezoid(0.5 * (speed - params.v0) ** 2, dt)
    if kind is FollowerPayoff.MAX_SPEED:
        return trapezoid(0.5 * speed ** 2, dt)
    self_speed = np.asarray(self_speed, dtype=float)
    return -trapezoid(0.5 * (speed - self_speed) ** 2, dt)


def follower_penalty(v_self: float, v_follow: float, params: ObjectiveParams) -> float:
    """Integrand of ``-U_follower`` (before the 1/2 factor)."""
    kind = params.follower_payoff
    if kind is FollowerPayoff.DESIRED_SPEED:
        d = v_follow - params.v0
        return d * d
    if kind is FollowerPayoff.MAX_SPEED:
        return -v_follow * v_follow
    d = v_follow - v_self
    return d * d


def follower_penalty_grad(v_self: float, v_follow: float, params: ObjectiveParams) -> tuple[float, float]:
    """Derivatives of ``follower_penalty / 2`` w.r.t. (v_self, v_follow)."""
    kind = params.follower_payoff
    if kind is FollowerPayoff.DESIRED_SPEED:
        return 0.0, v_follow - params.v0
    if kind is FollowerPayoff.MAX_SPEED:
        return 0.0, -v_follow
    d = v_follow - v_self
    return -d, d


def av_accel(y, exo, ovrv: OvrvParams) -> float:
    """OVRV response of the AV (without the additive control)."""
    x_p, v_p, l_p = exo
    return ovrv.k1 * (x_p - y[0] - l_p - ovrv.eta - ovrv.tau2 * y[1]) + ovrv.k2 * (v_p - y[1])


def running_cost(y, u: float, exo, params: ObjectiveParams, ovrv: OvrvParams) -> float:
    """Integrand of J3 at one instant.

    ``y`` is ``(x_av, v_av, x_follower, v_follower)``, ``exo`` is the
    predecessor sample ``(x_p, v_p, l_p)``.
    """
    w_self, w_other = params.weights
    acc = av_accel(y, exo, ovrv) + u
    gap = exo[0] - y[0] - exo[2]
    return 0.5 * (
        w_self * acc * acc
        + w_other * follower_penalty(y[1], y[3], params)
        + params.lam * (gap - params.s_d) ** 2
    )


def running_cost_series(states: np.ndarray, controls: np.ndarray, exo: np.ndarray,
                        params: ObjectiveParams, ovrv: OvrvParams) -> np.ndarray:
    """Vectorized running cost; ``states`` (n, 4), ``controls`` (n,), ``exo`` (n, 3)."""
    w_self, w_other = params.weights
    y1, y2, y4 = states[:, 0], states[:, 1], states[:, 3]
    x_p, v_p, l_p = exo[:, 0], exo[:, 1], exo[:, 2]
    acc = ovrv.k1 * (x_p - y1 - l_p - ovrv.eta - ovrv.tau2 * y2) + ovrv.k2 * (v_p - y2) + controls
    kind = params.follower_payoff
    if kind is FollowerPayoff.DESIRED_SPEED:
        follow = (y4 - params.v0) ** 2
    elif kind is FollowerPayoff.MAX_SPEED:
        follow = -(y4 ** 2)
    else:
        follow = (y4 - y2) ** 2
    gap = x_p - y1 - l_p
    return 0.5 * (w_self * acc ** 2 + w_other * follow + params.lam * (gap - params.s_d) ** 2)


def evaluate_objective(states, controls, exo, params: ObjectiveParams, ovrv: OvrvParams, dt: float) -> float:
    """J3 by the trapezoidal rule.

    ``controls`` holds one value per interval and is held over the interval,
    so interval ``k`` contributes ``dt/2 * (l(y_k, u_k) + l(y_{k+1}, u_k))``.
    A per-node control series (one more entry than intervals) is accepted
    too, in which case its last entry is ignored.
    """
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    exo = np.asarray(exo, dtype=float)
    n_nodes = states.shape[0]
    if exo.shape[0] != n_nodes:
        raise ValueError(f"exogenous trajectory has {exo.shape[0]} nodes, states have {n_nodes}")
    if controls.shape[0] == n_nodes:
        controls = controls[:-1]
    if controls.shape[0] != n_nodes - 1:
        raise ValueError(f"expected {n_nodes - 1} interval controls, got {controls.shape[0]}")
    left = running_cost_series(states[:-1], controls, exo[:-1], params, ovrv)
    right = running_cost_series(states[1:], controls, exo[1:], params, ovrv)
    return float(0.5 * dt * (left.sum() + right.sum()))
