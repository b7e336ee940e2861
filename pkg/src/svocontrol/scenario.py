"""Platoon experiments: lead profiles, initial conditions, solve and replay.

A scenario is a single lane of vehicles, lead first.  The lead drives a
prescribed speed profile; exactly one vehicle is an AV, and the vehicle
right behind it must be human-driven.  ``run_scenario`` solves the optimal
control problem for that AV/HV pair and replays the whole platoon with the
optimal additive control applied.

Vehicles never react to anything behind them, so the platoon is integrated
front to back: each vehicle sees its predecessor's node trajectory as a known
signal, sampled at half steps by linear interpolation (the same rule the
solver uses for the AV's predecessor).
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional, TextIO, Union

import numpy as np

from .objective import Horizon, ObjectiveParams, evaluate_objective
from .pmp import (
    ExogenousTrajectory,
    PairProblem,
    SolveReport,
    SolverConfig,
    forward_integrate,
    solve,
)
from .vehicle_models import (
    CollisionError,
    ControlBounds,
    VehicleKind,
    VehicleSpec,
    VehicleState,
    equilibrium_gap,
    idm_accel,
    ovrv_accel,
)

logger = logging.getLogger(__name__)

# (time s, speed m/s) knots of the built-in lead profile: 15 m/s cruise and
# two signal stops, the first inside the default [30, 60] s analysis window.
SYNTHETIC_KNOTS = (
    (0.0, 15.0), (25.0, 15.0), (37.0, 0.0), (45.0, 0.0), (57.0, 15.0),
    (75.0, 15.0), (87.0, 0.0), (93.0, 0.0), (105.0, 15.0), (120.0, 15.0),
)


class ProfileError(ValueError):
    """Malformed lead-profile input; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class LeadProfile:
    times: np.ndarray
    speeds: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        speeds = np.asarray(self.speeds, dtype=float)
        if times.ndim != 1 or times.shape != speeds.shape:
            raise ProfileError("times and speeds must be 1-D and of equal length")
        if times.size == 0:
            raise ProfileError("lead profile is empty")
        if np.any(np.diff(times) <= 0):
            raise ProfileError("profile times must be strictly increasing")
        if np.any(speeds < 0) or not np.all(np.isfinite(speeds)):
            raise ProfileError("profile speeds must be finite and non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "speeds", speeds)

    def __len__(self):
        return self.times.size


def synthetic_profile() -> LeadProfile:
    t, v = zip(*SYNTHETIC_KNOTS)
    return LeadProfile(np.array(t), np.array(v))


def load_lead_profile(source: Union[str, os.PathLike, TextIO]) -> LeadProfile:
    """Parse a ``t,v`` CSV (header required) from a path or open text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_lead_profile(fh)
    reader = csv.reader(source)
    times, speeds = [], []
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if not header_seen:
            if [c.strip().lower() for c in row] != ["t", "v"]:
                raise ProfileError(f"expected header 't,v', got {','.join(row)!r}", lineno)
            header_seen = True
            continue
        if len(row) != 2:
            raise ProfileError(f"expected 2 fields, got {len(row)}", lineno)
        try:
            t, v = float(row[0]), float(row[1])
        except ValueError:
            raise ProfileError(f"non-numeric value in {','.join(row)!r}", lineno) from None
        if not (math.isfinite(t) and math.isfinite(v)):
            raise ProfileError("non-finite value", lineno)
        if times and t <= times[-1]:
            raise ProfileError(f"time {t} does not increase", lineno)
        if v < 0:
            raise ProfileError(f"negative speed {v}", lineno)
        times.append(t)
        speeds.append(v)
    if not header_seen or not times:
        raise ProfileError("lead profile is empty")
    return LeadProfile(np.array(times), np.array(speeds))


def resample_profile(profile: LeadProfile, horizon: Horizon) -> np.ndarray:
    """Speeds on the horizon grid by linear interpolation."""
    grid = horizon.times
    tol = 1e-9 * max(1.0, abs(horizon.tf))
    if grid[0] < profile.times[0] - tol or grid[-1] > profile.times[-1] + tol:
        raise ValueError(
            f"horizon [{horizon.t0}, {horizon.tf}] exceeds profile span "
            f"[{profile.times[0]}, {profile.times[-1]}]"
        )
    return np.interp(grid, profile.times, profile.speeds)


def integrate_lead(speeds, x0: float, dt: float, length: float = 5.0) -> ExogenousTrajectory:
    speeds = np.asarray(speeds, dtype=float)
    steps = 0.5 * dt * (speeds[1:] + speeds[:-1])
    x = x0 + np.concatenate([[0.0], np.cumsum(steps)])
    return ExogenousTrajectory(x, speeds, length)


@dataclass(frozen=True)
class Scenario:
    platoon: tuple[VehicleSpec, ...]
    lead_profile: LeadProfile = field(default_factory=synthetic_profile)
    horizon: Horizon = Horizon()
    objective: ObjectiveParams = ObjectiveParams()
    bounds: ControlBounds = ControlBounds()
    solver: SolverConfig = SolverConfig()
    initial_speed: Optional[float] = None
    initial_gaps: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        platoon = tuple(self.platoon)
        object.__setattr__(self, "platoon", platoon)
        if len(platoon) < 3:
            raise ValueError("a platoon needs at least 3 vehicles")
        avs = [i for i, spec in enumerate(platoon) if spec.is_autonomous]
        if len(avs) != 1:
            raise ValueError(f"exactly one autonomous vehicle required, found {len(avs)}")
        av = avs[0]
        if av == 0:
            raise ValueError("the autonomous vehicle cannot lead the platoon")
        if av == len(platoon) - 1 or platoon[av + 1].is_autonomous:
            raise ValueError("the autonomous vehicle must be followed by a human-driven vehicle")
        if not math.isclose(self.solver.dt, self.horizon.dt, rel_tol=0, abs_tol=1e-12):
            object.__setattr__(self, "solver", replace(self.solver, dt=self.horizon.dt))
        if self.initial_gaps is not None:
            gaps = tuple(float(g) for g in self.initial_gaps)
            if len(gaps) != len(platoon) - 1:
                raise ValueError(f"need {len(platoon) - 1} initial gaps, got {len(gaps)}")
            if any(not g > 0 for g in gaps):
                raise ValueError("initial gaps must be positive")
            object.__setattr__(self, "initial_gaps", gaps)

    @property
    def av_index(self) -> int:
        return next(i for i, spec in enumerate(self.platoon) if spec.is_autonomous)

    def with_phi(self, phi: float) -> "Scenario":
        return replace(self, objective=replace(self.objective, phi=phi))


def five_vehicle_preset(phi: float = 0.1, **overrides) -> Scenario:
    """Lead HV, the AV, then three HV followers behind the synthetic profile."""
    hv = VehicleSpec(VehicleKind.HUMAN)
    av = VehicleSpec(VehicleKind.AUTONOMOUS)
    return Scenario(platoon=(hv, av, hv, hv, hv), objective=ObjectiveParams(phi=phi), **overrides)


def init_platoon(scenario: Scenario) -> list[VehicleState]:
    """Initial states: all at the lead's speed, spaced at each follower's equilibrium gap.

    The lead's front bumper starts at x = 0.
    """
    v_lead = scenario.initial_speed
    if v_lead is None:
        v_lead = float(np.interp(scenario.horizon.t0, scenario.lead_profile.times, scenario.lead_profile.speeds))
    states = [VehicleState(0.0, v_lead)]
    for i, spec in enumerate(scenario.platoon[1:], start=1):
        if scenario.initial_gaps is not None:
            gap = scenario.initial_gaps[i - 1]
        else:
            try:
                gap = equilibrium_gap(spec, v_lead)
            except ValueError as err:
                raise ValueError(f"vehicle {i + 1}: {err}") from None
        ahead = states[-1]
        states.append(VehicleState(ahead.x - scenario.platoon[i - 1].length - gap, v_lead))
    return states


def follow_trajectory(pred: ExogenousTrajectory, spec: VehicleSpec, start: VehicleState,
                      dt: float, controls=None, vehicle: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """RK4 trajectory of one vehicle behind a known predecessor trajectory."""
    n = len(pred) - 1
    px, pv, pl = pred.x, pred.v, pred.length
    params = spec.params
    if spec.is_autonomous:
        u_seq = np.zeros(n) if controls is None else np.asarray(controls, dtype=float)

        def accel(x, v, xp, vp, u):
            return ovrv_accel(params, xp - x - pl, v, vp) + u
    else:
        u_seq = np.zeros(n)

        def accel(x, v, xp, vp, u):
            return idm_accel(params, xp - x - pl, v, vp - v)

    def rate(x, v, xp, vp, u):
        a = accel(x, v, xp, vp, u)
        if v <= 0.0 and a < 0.0:
            a = 0.0
        return v, a

    xs = np.empty(n + 1)
    vs = np.empty(n + 1)
    x, v = start.x, start.v
    xs[0], vs[0] = x, v
    h2, h6 = 0.5 * dt, dt / 6.0
    for k in range(n):
        u = float(u_seq[k])
        xm, vm = 0.5 * (px[k] + px[k + 1]), 0.5 * (pv[k] + pv[k + 1])
        try:
            a1 = rate(x, v, px[k], pv[k], u)
            a2 = rate(x + h2 * a1[0], v + h2 * a1[1], xm, vm, u)
            a3 = rate(x + h2 * a2[0], v + h2 * a2[1], xm, vm, u)
            a4 = rate(x + dt * a3[0], v + dt * a3[1], px[k + 1], pv[k + 1], u)
        except CollisionError:
            raise CollisionError(f"vehicle {vehicle} collided with its predecessor near t={k * dt:.3f} s",
                                 time=k * dt, vehicle=vehicle) from None
        x = x + h6 * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        v = max(v + h6 * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1]), 0.0)
        xs[k + 1], vs[k + 1] = x, v
    gaps = px - xs - pl
    if np.any(gaps <= 0):
        k = int(np.argmax(gaps <= 0))
        raise CollisionError(f"vehicle {vehicle} collided with its predecessor at t={k * dt:.3f} s",
                             time=k * dt, vehicle=vehicle)
    return xs, vs


@dataclass
class SimResult:
    """Node series for every vehicle (lead first) plus the AV's additive control.

    ``controls`` is per node; the value at node ``k < N`` is the control held
    on interval ``k`` and the last node repeats the final interval's value.
    """

    times: np.ndarray
    positions: np.ndarray
    speeds: np.ndarray
    accels: np.ndarray
    controls: np.ndarray
    av_index: int
    objective: float
    report: Optional[SolveReport]
    baseline: bool
    phi: float
    pair_states: np.ndarray = field(repr=False, default=None)

    @property
    def n_vehicles(self) -> int:
        return self.positions.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def interval_controls(self) -> np.ndarray:
        return self.controls[:-1]


def _vehicles_ahead(scenario: Scenario, starts: list[VehicleState]) -> list[ExogenousTrajectory]:
    h = scenario.horizon
    lead_speeds = resample_profile(scenario.lead_profile, h)
    trajs = [integrate_lead(lead_speeds, starts[0].x, h.dt, scenario.platoon[0].length)]
    for i in range(1, scenario.av_index):
        xs, vs = follow_trajectory(trajs[-1], scenario.platoon[i], starts[i], h.dt, vehicle=i + 1)
        trajs.append(ExogenousTrajectory(xs, vs, scenario.platoon[i].length))
    return trajs


def pair_problem(scenario: Scenario, starts: list[VehicleState] | None = None,
                 predecessor: ExogenousTrajectory | None = None) -> PairProblem:
    """The optimal control problem for the AV and the vehicle behind it."""
    starts = starts or init_platoon(scenario)
    if predecessor is None:
        predecessor = _vehicles_ahead(scenario, starts)[-1]
    i = scenario.av_index
    av, follower = scenario.platoon[i], scenario.platoon[i + 1]
    return PairProblem(
        y_init=(starts[i].x, starts[i].v, starts[i + 1].x, starts[i + 1].v),
        exo=predecessor,
        objective=scenario.objective,
        ovrv=av.params,
        idm=follower.params,
        av_length=av.length,
        bounds=scenario.bounds,
        dt=scenario.horizon.dt,
    )


def _replay(scenario: Scenario, controls: np.ndarray, report: Optional[SolveReport], baseline: bool) -> SimResult:
    h = scenario.horizon
    starts = init_platoon(scenario)
    ahead = _vehicles_ahead(scenario, starts)
    problem = pair_problem(scenario, starts, ahead[-1])
    i = scenario.av_index
    try:
        pair = forward_integrate(problem, controls)
    except CollisionError as err:
        raise CollisionError(f"vehicle {i + 2} collided with the AV (vehicle {i + 1}) near t={err.time:.3f} s",
                             time=err.time, vehicle=i + 2) from None
    # the AV itself can hit its predecessor; the pair integrator only guards the follower
    gaps = problem.exo.x - pair[:, 0] - problem.exo.length
    if np.any(gaps <= 0):
        k = int(np.argmax(gaps <= 0))
        raise CollisionError(f"vehicle {i + 1} (AV) collided with its predecessor at t={k * h.dt:.3f} s",
                             time=k * h.dt, vehicle=i + 1)
    trajs = list(ahead)
    trajs.append(ExogenousTrajectory(pair[:, 0], pair[:, 1], scenario.platoon[i].length))
    trajs.append(ExogenousTrajectory(pair[:, 2], pair[:, 3], scenario.platoon[i + 1].length))
    for j in range(i + 2, len(scenario.platoon)):
        xs, vs = follow_trajectory(trajs[-1], scenario.platoon[j], starts[j], h.dt, vehicle=j + 1)
        trajs.append(ExogenousTrajectory(xs, vs, scenario.platoon[j].length))

    positions = np.column_stack([t.x for t in trajs])
    speeds = np.column_stack([t.v for t in trajs])
    node_u = np.append(controls, controls[-1])
    accels = _node_accels(scenario, positions, speeds, node_u)
    j3 = evaluate_objective(pair, controls, problem.exo.as_array(), scenario.objective, problem.ovrv, h.dt)
    return SimResult(
        times=h.times,
        positions=positions,
        speeds=speeds,
        accels=accels,
        controls=node_u,
        av_index=i,
        objective=j3,
        report=report,
        baseline=baseline,
        phi=scenario.objective.phi,
        pair_states=pair,
    )


def _node_accels(scenario: Scenario, positions, speeds, node_u) -> np.ndarray:
    """Model accelerations at the nodes (finite differences for the lead)."""
    n_nodes, n_veh = speeds.shape
    acc = np.empty_like(speeds)
    acc[:, 0] = np.gradient(speeds[:, 0], scenario.horizon.dt)
    for j in range(1, n_veh):
        spec = scenario.platoon[j]
        lead_len = scenario.platoon[j - 1].length
        for k in range(n_nodes):
            gap = positions[k, j - 1] - positions[k, j] - lead_len
            v, vp = speeds[k, j], speeds[k, j - 1]
            if spec.is_autonomous:
                a = ovrv_accel(spec.params, gap, v, vp) + node_u[k]
            else:
                a = idm_accel(spec.params, gap, v, vp - v)
            if v <= 0.0 and a < 0.0:
                a = 0.0
            acc[k, j] = a
    return acc


def run_scenario(scenario: Scenario, u_init=None) -> SimResult:
    """Solve for the AV's control, then replay the whole platoon with it applied."""
    problem = pair_problem(scenario)
    solution = solve(problem, scenario.solver, u_init=u_init)
    logger.info("phi=%.4f: %d iterations, J3=%.6g (%s)", scenario.objective.phi,
                solution.report.iterations, solution.objective, solution.report.stop_reason.value)
    return _replay(scenario, solution.controls, solution.report, baseline=False)


def run_baseline(scenario: Scenario) -> SimResult:
    """Same pipeline with the additive control held at zero."""
    return _replay(scenario, np.zeros(scenario.horizon.n_steps), None, baseline=True)
