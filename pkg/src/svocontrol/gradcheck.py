"""Randomized adjoint-vs-finite-difference gradient checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objective import ObjectiveParams
from .pmp import ExogenousTrajectory, PairProblem, adjoint_gradient, finite_difference_gradient
from .vehicle_models import ControlBounds

RTOL = 1e-3
ATOL = 1e-6


def random_problem(rng: np.random.Generator, n_steps: int = 40, dt: float = 0.1) -> PairProblem:
    """A feasible AV/follower problem behind a smoothly varying predecessor."""
    t = dt * np.arange(n_steps + 1)
    v_mean = rng.uniform(5.0, 20.0)
    v_p = np.maximum(v_mean + rng.uniform(0.5, 3.0) * np.sin(rng.uniform(0.1, 0.6) * t + rng.uniform(0, 2 * np.pi)), 0.0)
    x_p = 200.0 + np.concatenate([[0.0], np.cumsum(0.5 * dt * (v_p[1:] + v_p[:-1]))])
    x_av = 200.0 - 5.0 - rng.uniform(15.0, 60.0)
    x_f = x_av - 5.0 - rng.uniform(10.0, 50.0)
    objective = ObjectiveParams(
        phi=rng.uniform(0.0, 0.5 * math.pi),
        lam=rng.uniform(0.0, 0.05),
        s_d=rng.uniform(5.0, 30.0),
    )
    y0 = (x_av, rng.uniform(3.0, 20.0), x_f, rng.uniform(3.0, 20.0))
    return PairProblem(y0, ExogenousTrajectory(x_p, v_p), objective, bounds=ControlBounds(), dt=dt)


def relative_errors(adjoint: np.ndarray, reference: np.ndarray, rtol: float = RTOL, atol: float = ATOL) -> np.ndarray:
    """``|a - f| / max(|f|, atol / rtol)``; a value <= rtol means ``|a - f| <= max(rtol |f|, atol)``."""
    floor = atol / rtol
    return np.abs(adjoint - reference) / np.maximum(np.abs(reference), floor)


@dataclass
class GradCheck:
    seed: int
    n_scenarios: int
    max_rel_error: float
    per_scenario: list[float]

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= RTOL


def run_gradcheck(seed: int = 7, n_scenarios: int = 20, n_steps: int = 40, step: float = 1e-4) -> GradCheck:
    rng = np.random.default_rng(seed)
    worst = []
    for _ in range(n_scenarios):
        problem = random_problem(rng, n_steps)
        b = problem.bounds
        u = rng.uniform(b.u_min, b.u_max, problem.n_steps)
        adj = adjoint_gradient(problem, u)
        fd = finite_difference_gradient(problem, u, step)
        worst.append(float(relative_errors(adj, fd).max()))
    return GradCheck(seed, n_scenarios, max(worst), worst)
