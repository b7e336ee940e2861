"""Forward-backward sweep for the AV/follower optimal control problem.

State ``y = (x_av, v_av, x_f, v_f)``; the AV's predecessor is an exogenous,
known signal sampled on the grid.  Each iteration integrates the state
forward (RK4), the costate ``psi' = -g_y^T psi - l_y`` backward from
``psi(tf) = 0``, and takes a projected step along ``-H_u`` where

    H_u = psi_2 + cos(phi) * (f_AV(y) + u).

The control is piecewise constant: one value per grid interval.  By default
the costate is the exact adjoint of the discrete RK4 map and trapezoid cost,
so the per-interval gradient is the true derivative of the computed J3.  A
classical continuous-costate sweep is kept as ``scheme="interpolated"``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .objective import (
    ObjectiveParams,
    evaluate_objective,
    follower_penalty,
    follower_penalty_grad,
    svo_weights,
)
from .vehicle_models import (
    DEFAULT_LENGTH,
    CollisionError,
    ControlBounds,
    IdmParams,
    OvrvParams,
    idm_partials,
)

logger = logging.getLogger(__name__)


@dataclass
class ExogenousTrajectory:
    """Predecessor positions/speeds on the grid nodes plus its (constant) length."""

    x: np.ndarray
    v: np.ndarray
    length: float = DEFAULT_LENGTH

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.x.shape != self.v.shape or self.x.ndim != 1:
            raise ValueError("exogenous positions and speeds must be 1-D arrays of equal length")

    def __len__(self):
        return self.x.shape[0]

    def as_array(self) -> np.ndarray:
        """(n, 3) array of ``(x_p, v_p, l_p)`` rows."""
        return np.column_stack([self.x, self.v, np.full_like(self.x, self.length)])


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.01
    n_max: int = 300
    upsilon: float = 1e-4
    delta: float = 1e-6
    dt: float = 0.1

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("step size epsilon must lie in (0, 1)")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not self.upsilon > 0 or not self.delta > 0:
            raise ValueError("stopping thresholds must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


class StopReason(str, enum.Enum):
    GRADIENT_SMALL = "GradientSmall"
    OBJECTIVE_STALLED = "ObjectiveStalled"
    MAX_ITERATIONS = "MaxIterations"


@dataclass
class SolveReport:
    iterations: int
    history: list[float]
    converged: bool
    stop_reason: StopReason
    best_iteration: int
    grad_norm_sq: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason.value,
            "best_iteration": self.best_iteration,
            "history": list(self.history),
        }


@dataclass
class PairProblem:
    """Everything the sweep needs about one AV and the HV behind it."""

    y_init: tuple[float, float, float, float]
    exo: ExogenousTrajectory
    objective: ObjectiveParams
    ovrv: OvrvParams = OvrvParams()
    idm: IdmParams = IdmParams()
    av_length: float = DEFAULT_LENGTH
    bounds: ControlBounds = ControlBounds()
    dt: float = 0.1

    def __post_init__(self):
        self.y_init = tuple(float(c) for c in self.y_init)
        if len(self.exo) < 2:
            raise ValueError("horizon needs at least one interval")
        if not self.exo.x[0] - self.exo.length > self.y_init[0]:
            raise ValueError("predecessor must start ahead of the AV")
        if not self.y_init[0] - self.y_init[2] - self.av_length > 0:
            raise CollisionError("follower starts with a non-positive gap", time=0.0)

    @property
    def n_steps(self) -> int:
        return len(self.exo) - 1


# ---------------------------------------------------------------------------
# pointwise quantities
# ---------------------------------------------------------------------------

def _exo_at(exo: ExogenousTrajectory, k: int, half: bool = False):
    if half:
        return (0.5 * (exo.x[k] + exo.x[k + 1]), 0.5 * (exo.v[k] + exo.v[k + 1]), exo.length)
    return (exo.x[k], exo.v[k], exo.length)


def system_dynamics(y, u: float, exo_sample, ovrv: OvrvParams, idm: IdmParams,
                    av_length: float = DEFAULT_LENGTH, clamp: bool = True) -> tuple[float, float, float, float]:
    """Right-hand side ``g(y, u)`` of the pair dynamics.

    With ``clamp`` set, a vehicle at or below zero speed cannot decelerate
    further.
    """
    y1, y2, y3, y4 = y
    x_p, v_p, l_p = exo_sample
    acc_av = ovrv.k1 * (x_p - y1 - l_p - ovrv.eta - ovrv.tau2 * y2) + ovrv.k2 * (v_p - y2) + u
    gap = y1 - y3 - av_length
    if not gap > 0:
        raise CollisionError(f"follower gap {gap:.6g} m is not positive")
    s_star = idm.s0 + idm.tau1 * y4 - y4 * (y2 - y4) / (2.0 * idm.sqrt_ab)
    acc_f = idm.a * (1.0 - (y4 / idm.v0) ** 4 - (s_star / gap) ** 2)
    if clamp:
        if y2 <= 0.0 and acc_av < 0.0:
            acc_av = 0.0
        if y4 <= 0.0 and acc_f < 0.0:
            acc_f = 0.0
    return (y2, acc_av, y4, acc_f)


def dynamics_jacobian(y, exo_sample, ovrv: OvrvParams, idm: IdmParams,
                      av_length: float = DEFAULT_LENGTH) -> np.ndarray:
    """4x4 Jacobian ``g_y`` (unclamped dynamics)."""
    y1, y2, y3, y4 = y
    gap = y1 - y3 - av_length
    if not gap > 0:
        raise CollisionError(f"follower gap {gap:.6g} m is not positive")
    d_gap, d_dv, d_v = idm_partials(idm, gap, y4, y2 - y4)
    return np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-ovrv.k1, -ovrv.k1 * ovrv.tau2 - ovrv.k2, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [d_gap, d_dv, -d_gap, d_v - d_dv],
    ])


def cost_gradient(y, u: float, exo_sample, params: ObjectiveParams, ovrv: OvrvParams) -> np.ndarray:
    """``l_y``: gradient of the running cost w.r.t. the state."""
    y1, y2, y3, y4 = y
    x_p, v_p, l_p = exo_sample
    w_self, w_other = params.weights
    acc = ovrv.k1 * (x_p - y1 - l_p - ovrv.eta - ovrv.tau2 * y2) + ovrv.k2 * (v_p - y2) + u
    gap = x_p - y1 - l_p
    d_vs, d_vf = follower_penalty_grad(y2, y4, params)
    return np.array([
        -w_self * acc * ovrv.k1 - params.lam * (gap - params.s_d),
        w_self * acc * (-ovrv.k1 * ovrv.tau2 - ovrv.k2) + w_other * d_vs,
        0.0,
        w_other * d_vf,
    ])


def hamiltonian(y, u: float, psi, exo_sample, params: ObjectiveParams, ovrv: OvrvParams,
                idm: IdmParams, av_length: float = DEFAULT_LENGTH) -> float:
    """``H = <g, psi> + l`` (unclamped dynamics)."""
    g = system_dynamics(y, u, exo_sample, ovrv, idm, av_length, clamp=False)
    w_self, w_other = params.weights
    x_p, v_p, l_p = exo_sample
    acc = g[1]
    gap = x_p - y[0] - l_p
    cost = 0.5 * (w_self * acc * acc + w_other * follower_penalty(y[1], y[3], params)
                  + params.lam * (gap - params.s_d) ** 2)
    return sum(gi * pi for gi, pi in zip(g, psi)) + cost


def adjoint_rhs(y, u: float, psi, exo_sample, params: ObjectiveParams, ovrv: OvrvParams,
                idm: IdmParams, av_length: float = DEFAULT_LENGTH) -> np.ndarray:
    """``psi' = -g_y^T psi - l_y``."""
    jac = dynamics_jacobian(y, exo_sample, ovrv, idm, av_length)
    return -jac.T @ np.asarray(psi, dtype=float) - cost_gradient(y, u, exo_sample, params, ovrv)


def hamiltonian_gradient(y, u: float, psi2: float, exo_sample, phi: float, ovrv: OvrvParams) -> float:
    """``H_u = psi_2 + cos(phi) * (f_AV + u)``."""
    w_self, _ = svo_weights(phi)
    x_p, v_p, l_p = exo_sample
    f_av = ovrv.k1 * (x_p - y[0] - l_p - ovrv.eta - ovrv.tau2 * y[1]) + ovrv.k2 * (v_p - y[1])
    return psi2 + w_self * (f_av + u)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def forward_integrate(problem: PairProblem, controls) -> np.ndarray:
    """RK4 trajectory of the pair under piecewise-constant ``controls``.

    Returns an ``(n_steps + 1, 4)`` array.  Speeds are clamped at zero after
    every step.
    """
    controls = np.asarray(controls, dtype=float)
    n = problem.n_steps
    if controls.shape != (n,):
        raise ValueError(f"expected {n} interval controls, got shape {controls.shape}")
    ovrv, idm, l_av, dt = problem.ovrv, problem.idm, problem.av_length, problem.dt
    ex, ev, l_p = problem.exo.x, problem.exo.v, problem.exo.length
    out = np.empty((n + 1, 4))
    y = problem.y_init
    out[0] = y
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for k in range(n):
        u = float(controls[k])
        e0 = (ex[k], ev[k], l_p)
        e1 = (ex[k + 1], ev[k + 1], l_p)
        em = (0.5 * (e0[0] + e1[0]), 0.5 * (e0[1] + e1[1]), l_p)
        try:
            k1 = system_dynamics(y, u, e0, ovrv, idm, l_av)
            k2 = system_dynamics(tuple(a + h2 * b for a, b in zip(y, k1)), u, em, ovrv, idm, l_av)
            k3 = system_dynamics(tuple(a + h2 * b for a, b in zip(y, k2)), u, em, ovrv, idm, l_av)
            k4 = system_dynamics(tuple(a + dt * b for a, b in zip(y, k3)), u, e1, ovrv, idm, l_av)
        except CollisionError as err:
            t = k * dt
            raise CollisionError(f"collision between AV and follower near t={t:.3f} s: {err}", time=t) from None
        y1, y2, y3, y4 = (y[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(4))
        y = (y1, max(y2, 0.0), y3, max(y4, 0.0))
        out[k + 1] = y
    if not np.all(out[:, 0] - out[:, 2] - l_av > 0):
        k = int(np.argmax(out[:, 0] - out[:, 2] - l_av <= 0))
        raise CollisionError(f"collision between AV and follower at t={k * dt:.3f} s", time=k * dt)
    return out


def _adjoint_rate(y, u, psi, e, ovrv, idm, l_av, w_self, w_other, params):
    y1, y2, y3, y4 = y
    p1, p2, p3, p4 = psi
    x_p, v_p, l_p = e
    acc = ovrv.k1 * (x_p - y1 - l_p - ovrv.eta - ovrv.tau2 * y2) + ovrv.k2 * (v_p - y2) + u
    gap = y1 - y3 - l_av
    d_gap, d_dv, d_v = idm_partials(idm, gap, y4, y2 - y4)
    c_av = -ovrv.k1 * ovrv.tau2 - ovrv.k2
    # clamped rows of g contribute nothing
    if y2 <= 0.0 and acc < 0.0:
        a1, a2 = 0.0, 0.0
    else:
        a1, a2 = -ovrv.k1, c_av
    if y4 <= 0.0:
        s_star = idm.s0 + idm.tau1 * y4 - y4 * (y2 - y4) / (2.0 * idm.sqrt_ab)
        if idm.a * (1.0 - (y4 / idm.v0) ** 4 - (s_star / gap) ** 2) < 0.0:
            d_gap = d_dv = d_v = 0.0
    d_vs, d_vf = follower_penalty_grad(y2, y4, params)
    ly1 = -w_self * acc * ovrv.k1 - params.lam * ((x_p - y1 - l_p) - params.s_d)
    ly2 = w_self * acc * c_av + w_other * d_vs
    ly4 = w_other * d_vf
    return (
        -(a1 * p2 + d_gap * p4) - ly1,
        -(p1 + a2 * p2 + d_dv * p4) - ly2,
        d_gap * p4,
        -(p3 + (d_v - d_dv) * p4) - ly4,
    )


def _stage_partials(y, u, e, ovrv: OvrvParams, idm: IdmParams, l_av: float):
    """Nonzero entries of ``g_y`` and ``g_u`` at one RK stage, honouring the speed clamp.

    Returns ``(a21, a22, g_u, a41, a42, a44)``; row 4 of ``g_y`` is
    ``(a41, a42, -a41, a44)``.
    """
    y1, y2, y3, y4 = y
    x_p, v_p, l_p = e
    gap = y1 - y3 - l_av
    if not gap > 0:
        raise CollisionError(f"follower gap {gap:.6g} m is not positive")
    if y2 <= 0.0 and ovrv.k1 * (x_p - y1 - l_p - ovrv.eta - ovrv.tau2 * y2) + ovrv.k2 * (v_p - y2) + u < 0.0:
        a21 = a22 = g_u = 0.0
    else:
        a21, a22, g_u = -ovrv.k1, -ovrv.k1 * ovrv.tau2 - ovrv.k2, 1.0
    d_gap, d_dv, d_v = idm_partials(idm, gap, y4, y2 - y4)
    if y4 <= 0.0:
        s_star = idm.s0 + idm.tau1 * y4 - y4 * (y2 - y4) / (2.0 * idm.sqrt_ab)
        if 1.0 - (y4 / idm.v0) ** 4 - (s_star / gap) ** 2 < 0.0:
            d_gap = d_dv = d_v = 0.0
    return a21, a22, g_u, d_gap, d_dv, d_v - d_dv


def _cost_partials(y, u, e, ovrv: OvrvParams, params: ObjectiveParams, w_self: float, w_other: float):
    """``(l_y1, l_y2, l_y4, l_u)``; ``l_y3`` is identically zero."""
    y1, y2, y3, y4 = y
    x_p, v_p, l_p = e
    acc = ovrv.k1 * (x_p - y1 - l_p - ovrv.eta - ovrv.tau2 * y2) + ovrv.k2 * (v_p - y2) + u
    d_vs, d_vf = follower_penalty_grad(y2, y4, params)
    return (
        -w_self * acc * ovrv.k1 - params.lam * ((x_p - y1 - l_p) - params.s_d),
        w_self * acc * (-ovrv.k1 * ovrv.tau2 - ovrv.k2) + w_other * d_vs,
        w_other * d_vf,
        w_self * acc,
    )


def _pullback(p, b):
    """``A^T b`` for the sparse stage Jacobian ``p`` from :func:`_stage_partials`."""
    a21, a22, _, a41, a42, a44 = p
    return (a21 * b[1] + a41 * b[3], b[0] + a22 * b[1] + a42 * b[3], -a41 * b[3], b[2] + a44 * b[3])


def backward_integrate(problem: PairProblem, states: np.ndarray, controls,
                       scheme: str = "discrete") -> tuple[np.ndarray, np.ndarray]:
    """Costate sweep from ``psi(tf) = 0`` back to ``t0``.

    Returns ``(psi, grad)`` where ``psi`` is ``(n_steps + 1, 4)`` and ``grad[k]``
    is the sensitivity of J3 to the control held on interval ``k``.

    ``scheme="discrete"`` (default) runs the exact adjoint of the forward RK4
    step and of the trapezoidal cost, so ``psi[k]`` is the gradient of the
    cost-to-go from ``t_k`` and ``grad`` is the exact derivative of the
    discrete J3.  It is a consistent RK4 integration of
    ``psi' = -g_y^T psi - l_y`` with stage states taken from the forward step.

    ``scheme="interpolated"`` integrates the same costate equation with
    classical RK4, using stored states interpolated linearly at half steps,
    and integrates ``H_u`` over each interval with Simpson's rule.  Its
    gradient is only ``O(dt^2)`` accurate; it is kept as a cross-check.
    """
    if scheme == "interpolated":
        return _backward_interpolated(problem, states, controls)
    if scheme != "discrete":
        raise ValueError(f"unknown adjoint scheme {scheme!r}")
    controls = np.asarray(controls, dtype=float)
    n = problem.n_steps
    ovrv, idm, l_av, dt = problem.ovrv, problem.idm, problem.av_length, problem.dt
    params = problem.objective
    w_self, w_other = params.weights
    ex, ev, l_p = problem.exo.x, problem.exo.v, problem.exo.length
    psi_out = np.zeros((n + 1, 4))
    grad = np.zeros(n)
    psi = (0.0, 0.0, 0.0, 0.0)
    h2, h3, h6 = 0.5 * dt, dt / 3.0, dt / 6.0
    for k in range(n - 1, -1, -1):
        u = float(controls[k])
        y = tuple(states[k])
        y_next = tuple(states[k + 1])
        e0 = (ex[k], ev[k], l_p)
        e1 = (ex[k + 1], ev[k + 1], l_p)
        em = (0.5 * (e0[0] + e1[0]), 0.5 * (e0[1] + e1[1]), l_p)

        # replay the forward step to recover stage states and clamp flags
        k1 = system_dynamics(y, u, e0, ovrv, idm, l_av)
        y2s = tuple(a + h2 * b for a, b in zip(y, k1))
        k2 = system_dynamics(y2s, u, em, ovrv, idm, l_av)
        y3s = tuple(a + h2 * b for a, b in zip(y, k2))
        k3 = system_dynamics(y3s, u, em, ovrv, idm, l_av)
        y4s = tuple(a + dt * b for a, b in zip(y, k3))
        k4 = system_dynamics(y4s, u, e1, ovrv, idm, l_av)
        raw_v_av = y[1] + h6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        raw_v_f = y[3] + h6 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])

        # sensitivity to y_{k+1} of everything from interval k's right end on
        c1, c2, c4, cu_hi = _cost_partials(y_next, u, e1, ovrv, params, w_self, w_other)
        mu = [psi[0] + h2 * c1, psi[1] + h2 * c2, psi[2], psi[3] + h2 * c4]
        if raw_v_av < 0.0:
            mu[1] = 0.0
        if raw_v_f < 0.0:
            mu[3] = 0.0

        p1 = _stage_partials(y, u, e0, ovrv, idm, l_av)
        p2 = _stage_partials(y2s, u, em, ovrv, idm, l_av)
        p3 = _stage_partials(y3s, u, em, ovrv, idm, l_av)
        p4 = _stage_partials(y4s, u, e1, ovrv, idm, l_av)

        b4 = tuple(h6 * m for m in mu)
        z4 = _pullback(p4, b4)
        b3 = tuple(h3 * m + dt * z for m, z in zip(mu, z4))
        z3 = _pullback(p3, b3)
        b2 = tuple(h3 * m + h2 * z for m, z in zip(mu, z3))
        z2 = _pullback(p2, b2)
        b1 = tuple(h6 * m + h2 * z for m, z in zip(mu, z2))
        z1 = _pullback(p1, b1)

        d1, d2, d4, cu_lo = _cost_partials(y, u, e0, ovrv, params, w_self, w_other)
        grad[k] = h2 * (cu_lo + cu_hi) + p1[2] * b1[1] + p2[2] * b2[1] + p3[2] * b3[1] + p4[2] * b4[1]
        psi = (
            mu[0] + z1[0] + z2[0] + z3[0] + z4[0] + h2 * d1,
            mu[1] + z1[1] + z2[1] + z3[1] + z4[1] + h2 * d2,
            mu[2] + z1[2] + z2[2] + z3[2] + z4[2],
            mu[3] + z1[3] + z2[3] + z3[3] + z4[3] + h2 * d4,
        )
        psi_out[k] = psi
    return psi_out, grad


def _backward_interpolated(problem: PairProblem, states: np.ndarray, controls) -> tuple[np.ndarray, np.ndarray]:
    controls = np.asarray(controls, dtype=float)
    n = problem.n_steps
    ovrv, idm, l_av, dt = problem.ovrv, problem.idm, problem.av_length, problem.dt
    params = problem.objective
    exo = problem.exo
    psi_out = np.zeros((n + 1, 4))
    grad = np.zeros(n)
    psi = np.zeros(4)
    for k in range(n - 1, -1, -1):
        u = float(controls[k])
        y_hi, y_lo = states[k + 1], states[k]
        y_mid = 0.5 * (y_lo + y_hi)
        e_hi, e_lo, e_mid = _exo_at(exo, k + 1), _exo_at(exo, k), _exo_at(exo, k, half=True)
        r1 = adjoint_rhs(y_hi, u, psi, e_hi, params, ovrv, idm, l_av)
        r2 = adjoint_rhs(y_mid, u, psi - 0.5 * dt * r1, e_mid, params, ovrv, idm, l_av)
        r3 = adjoint_rhs(y_mid, u, psi - 0.5 * dt * r2, e_mid, params, ovrv, idm, l_av)
        r4 = adjoint_rhs(y_lo, u, psi - dt * r3, e_lo, params, ovrv, idm, l_av)
        psi_new = psi - dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
        phi = params.phi
        h_lo = hamiltonian_gradient(y_lo, u, psi_new[1], e_lo, phi, ovrv)
        h_mid = hamiltonian_gradient(y_mid, u, 0.5 * (psi_new[1] + psi[1]), e_mid, phi, ovrv)
        h_hi = hamiltonian_gradient(y_hi, u, psi[1], e_hi, phi, ovrv)
        grad[k] = dt * (h_lo + 4.0 * h_mid + h_hi) / 6.0
        psi = psi_new
        psi_out[k] = psi
    return psi_out, grad


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

def project_control(values, bounds: ControlBounds) -> np.ndarray:
    return np.clip(np.asarray(values, dtype=float), bounds.u_min, bounds.u_max)


def objective_value(problem: PairProblem, controls, states: np.ndarray | None = None) -> float:
    if states is None:
        states = forward_integrate(problem, controls)
    return evaluate_objective(states, controls, problem.exo.as_array(), problem.objective,
                              problem.ovrv, problem.dt)


def adjoint_gradient(problem: PairProblem, controls) -> np.ndarray:
    """dJ3/du_k for every interval via one forward and one backward sweep."""
    states = forward_integrate(problem, controls)
    return backward_integrate(problem, states, controls)[1]


def finite_difference_gradient(problem: PairProblem, controls, step: float = 1e-4) -> np.ndarray:
    """Central differences of J3 under per-interval control perturbations."""
    if not step > 0:
        raise ValueError("finite-difference step must be positive")
    controls = np.asarray(controls, dtype=float)
    grad = np.empty_like(controls)
    for k in range(controls.shape[0]):
        up = controls.copy()
        up[k] += step
        down = controls.copy()
        down[k] -= step
        grad[k] = (objective_value(problem, up) - objective_value(problem, down)) / (2.0 * step)
    return grad


@dataclass
class Solution:
    controls: np.ndarray
    states: np.ndarray
    costate: np.ndarray
    objective: float
    report: SolveReport


def solve(problem: PairProblem, config: SolverConfig | None = None, u_init=None) -> Solution:
    """Projected-gradient forward-backward sweep.

    Iterates ``u <- clip(u - epsilon * H_u)`` where ``H_u`` is the
    interval-averaged control derivative of the Hamiltonian.  Stops when the
    squared L2 norm of the projected gradient drops below ``delta`` or the
    change in J3 between iterations is at most ``upsilon``; otherwise runs
    ``n_max`` iterations.  The iterate with the lowest J3 is returned.
    """
    config = config or SolverConfig(dt=problem.dt)
    n, dt, bounds = problem.n_steps, problem.dt, problem.bounds
    u = np.zeros(n) if u_init is None else np.asarray(u_init, dtype=float).copy()
    if u.shape != (n,):
        raise ValueError(f"initial control must have {n} entries")
    if np.any(u < bounds.u_min) or np.any(u > bounds.u_max):
        raise ValueError("initial control violates the control bounds")

    history: list[float] = []
    norms: list[float] = []
    best = None
    best_it = 0
    reason = StopReason.MAX_ITERATIONS
    for it in range(1, config.n_max + 1):
        states = forward_integrate(problem, u)
        j3 = objective_value(problem, u, states)
        if not math.isfinite(j3):
            raise FloatingPointError(f"objective is not finite at iteration {it}")
        psi, grad = backward_integrate(problem, states, u)
        history.append(j3)
        if best is None or j3 < best.objective:
            best = Solution(u.copy(), states, psi, j3, None)
            best_it = it
        h_u = grad / dt
        u_next = project_control(u - config.epsilon * h_u, bounds)
        # only the part of H_u a feasible step can act on counts as residual
        proj = (u - u_next) / config.epsilon
        norm_sq = float(dt * np.dot(proj, proj))
        norms.append(norm_sq)
        logger.debug("iteration %d: J3=%.10g |H_u|^2=%.3g", it, j3, norm_sq)
        if norm_sq < config.delta:
            reason = StopReason.GRADIENT_SMALL
            break
        if it > 1 and abs(j3 - history[-2]) <= config.upsilon:
            reason = StopReason.OBJECTIVE_STALLED
            break
        if it == config.n_max:
            break
        u = u_next

    report = SolveReport(
        iterations=len(history),
        history=history,
        converged=reason is not StopReason.MAX_ITERATIONS,
        stop_reason=reason,
        best_iteration=best_it,
        grad_norm_sq=norms,
    )
    best.report = report
    return best
