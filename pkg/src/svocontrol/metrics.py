"""Evaluation metrics, SVO sweeps and trajectory export.

Vehicles are numbered from 1 (the lead), matching the trajectory CSV columns.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .objective import payoff_self
from .scenario import Scenario, SimResult, run_scenario

DEFAULT_WINDOW = (30.0, 60.0)


def _check_window(times: np.ndarray, window) -> tuple[float, float]:
    a, b = (float(w) for w in window)
    tol = 1e-9 * max(1.0, abs(times[-1]))
    if not b > a:
        raise ValueError(f"window end must exceed its start, got [{a}, {b}]")
    if a < times[0] - tol or b > times[-1] + tol:
        raise ValueError(f"window [{a}, {b}] lies outside the horizon [{times[0]}, {times[-1]}]")
    return a, b


def _window_samples(times: np.ndarray, values: np.ndarray, a: float, b: float):
    """Nodes inside [a, b] plus linearly interpolated end points."""
    inside = (times > a) & (times < b)
    t = np.concatenate([[a], times[inside], [b]])
    y = np.concatenate([[np.interp(a, times, values)], values[inside], [np.interp(b, times, values)]])
    return t, y


def _integral(times: np.ndarray, values: np.ndarray, window=None) -> float:
    if window is None:
        return float(np.trapezoid(values, times))
    a, b = _check_window(times, window)
    t, y = _window_samples(times, values, a, b)
    return float(np.trapezoid(y, t))


def abs_payoff_self(result: SimResult, window=None) -> float:
    """``|U_AV|`` from the AV's total realized acceleration (OVRV response plus control)."""
    acc = result.accels[:, result.av_index]
    if window is None:
        return abs(payoff_self(acc, result.dt))
    return abs(0.5 * _integral(result.times, acc ** 2, window))


def average_speed(result: SimResult, vehicle: int, window=None) -> float:
    """Time-averaged speed of ``vehicle`` (1-based) over ``window`` or the whole horizon."""
    if not 1 <= vehicle <= result.n_vehicles:
        raise IndexError(f"vehicle number {vehicle} outside 1..{result.n_vehicles}")
    times = result.times
    speed = result.speeds[:, vehicle - 1]
    if window is None:
        return _integral(times, speed) / float(times[-1] - times[0])
    a, b = _check_window(times, window)
    return _integral(times, speed, (a, b)) / (b - a)


def percent_change(value: float, base: float) -> float:
    if base == 0:
        raise ZeroDivisionError("percent change against a zero base")
    return 100.0 * (value - base) / base


@dataclass
class MetricsReport:
    phi: float
    window: tuple[float, float]
    abs_payoff_self: float
    abs_payoff_self_window: float
    avg_speed: dict[int, float]
    avg_speed_window: dict[int, float]
    solver: Optional[dict] = None
    objective: float = math.nan
    percent_change: dict = field(default_factory=dict)

    def compare_to(self, base: "MetricsReport") -> None:
        """Fill ``percent_change`` relative to ``base``."""
        pc = {
            "abs_payoff_self": percent_change(self.abs_payoff_self, base.abs_payoff_self),
            "abs_payoff_self_window": percent_change(self.abs_payoff_self_window, base.abs_payoff_self_window),
            "avg_speed": {k: percent_change(v, base.avg_speed[k]) for k, v in self.avg_speed.items()},
            "avg_speed_window": {k: percent_change(v, base.avg_speed_window[k])
                                 for k, v in self.avg_speed_window.items()},
        }
        self.percent_change = pc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["avg_speed"] = {str(k): v for k, v in self.avg_speed.items()}
        d["avg_speed_window"] = {str(k): v for k, v in self.avg_speed_window.items()}
        if self.percent_change:
            pc = dict(self.percent_change)
            pc["avg_speed"] = {str(k): v for k, v in pc["avg_speed"].items()}
            pc["avg_speed_window"] = {str(k): v for k, v in pc["avg_speed_window"].items()}
            d["percent_change"] = pc
        return d


def compute_metrics(result: SimResult, window=DEFAULT_WINDOW) -> MetricsReport:
    window = _check_window(result.times, window)
    followers = range(result.av_index + 2, result.n_vehicles + 1)
    solver = None
    if result.report is not None:
        r = result.report
        solver = {"iterations": r.iterations, "converged": r.converged, "stop_reason": r.stop_reason.value}
    return MetricsReport(
        phi=result.phi,
        window=window,
        abs_payoff_self=abs_payoff_self(result),
        abs_payoff_self_window=abs_payoff_self(result, window),
        avg_speed={v: average_speed(result, v) for v in followers},
        avg_speed_window={v: average_speed(result, v, window) for v in followers},
        solver=solver,
        objective=result.objective,
    )


@dataclass
class SweepEntry:
    phi: float
    metrics: MetricsReport
    result: SimResult


@dataclass
class SweepResult:
    entries: list[SweepEntry]
    base_phi: float

    @property
    def base(self) -> SweepEntry:
        return self.entry(self.base_phi)

    def entry(self, phi: float) -> SweepEntry:
        for e in self.entries:
            if math.isclose(e.phi, phi, rel_tol=0, abs_tol=1e-12):
                return e
        raise KeyError(phi)

    def table(self) -> str:
        """Plain-text comparison: full-horizon values, then windowed percent changes."""
        followers = sorted(self.base.metrics.avg_speed)
        head = "metric".ljust(34) + "".join(f"phi={e.phi:<10.4f}" for e in self.entries)
        lines = [head, "-" * len(head)]
        lines.append("|U_AV|".ljust(34) + "".join(f"{e.metrics.abs_payoff_self:<14.4f}" for e in self.entries))
        for v in followers:
            lines.append(f"avg speed #{v} (m/s)".ljust(34)
                         + "".join(f"{e.metrics.avg_speed[v]:<14.4f}" for e in self.entries))
        w = self.base.metrics.window
        lines.append("")
        lines.append(f"window [{w[0]:g}, {w[1]:g}] s, % change vs phi={self.base_phi:.4f}")
        lines.append("|U_AV|".ljust(34) + "".join(
            f"{e.metrics.percent_change['abs_payoff_self_window']:<+14.2f}" for e in self.entries))
        for v in followers:
            lines.append(f"avg speed #{v}".ljust(34) + "".join(
                f"{e.metrics.percent_change['avg_speed_window'][v]:<+14.2f}" for e in self.entries))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"base_phi": self.base_phi, "entries": [e.metrics.to_dict() for e in self.entries]}


class SweepError(RuntimeError):
    def __init__(self, phi: float, cause: Exception):
        super().__init__(f"scenario with phi={phi:.6g} failed: {cause}")
        self.phi = phi


def _run_one(args):
    scenario, phi = args
    return run_scenario(scenario.with_phi(phi))


def sweep_svo(template: Scenario, phis: Sequence[float], base_phi: float,
              window=DEFAULT_WINDOW, workers: int = 1) -> SweepResult:
    """Solve ``template`` once per SVO angle and compare every run against ``base_phi``."""
    phis = [float(p) for p in phis]
    if not phis:
        raise ValueError("at least one SVO angle is required")
    if len({round(p, 12) for p in phis}) != len(phis):
        raise ValueError("SVO angles must be distinct")
    if not any(math.isclose(p, base_phi, rel_tol=0, abs_tol=1e-12) for p in phis):
        raise ValueError(f"base angle {base_phi} is not among the swept angles")

    jobs = [(template, p) for p in phis]
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, job) for job in jobs]
            for phi, fut in zip(phis, futures):
                try:
                    results.append(fut.result())
                except Exception as err:
                    raise SweepError(phi, err) from err
    else:
        for job in jobs:
            try:
                results.append(_run_one(job))
            except Exception as err:
                raise SweepError(job[1], err) from err

    entries = [SweepEntry(p, compute_metrics(r, window), r) for p, r in zip(phis, results)]
    sweep = SweepResult(entries, base_phi)
    base = sweep.base.metrics
    for e in entries:
        e.metrics.compare_to(base)
    return sweep


def trajectory_header(result: SimResult) -> list[str]:
    cols = ["t"]
    for j in range(result.n_vehicles):
        n = j + 1
        cols += [f"x{n}", f"v{n}", f"a{n}"]
        if j == result.av_index:
            cols.append(f"u{n}")
    return cols


def export_trajectories(result: SimResult, destination) -> str:
    """Write the node series as CSV; floats are written with ``repr`` so they read back exactly."""
    path = os.fspath(destination)
    header = trajectory_header(result)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for k in range(result.times.size):
                row = [result.times[k]]
                for j in range(result.n_vehicles):
                    row += [result.positions[k, j], result.speeds[k, j], result.accels[k, j]]
                    if j == result.av_index:
                        row.append(result.controls[k])
                writer.writerow([repr(float(x)) for x in row])
    except OSError as err:
        raise OSError(f"cannot write trajectories to {path}: {err}") from err
    return path


def read_trajectories(source) -> dict[str, np.ndarray]:
    """Column name -> array, for files written by :func:`export_trajectories`."""
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
