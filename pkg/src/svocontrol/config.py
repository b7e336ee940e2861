"""JSON scenario configuration.

Every section is optional; omitted values fall back to the five-vehicle
preset (lead HV, AV, three HVs) behind the built-in two-stop lead profile::

    {
      "platoon": ["HV", "AV", "HV", "HV", "HV"],
      "lead_profile": {"synthetic": true} | {"csv": "lead.csv"} | {"samples": [[0, 15], [1, 15]]},
      "horizon": {"t0": 0, "tf": 120, "dt": 0.1},
      "objective": {"phi": 0.1, "lam": 0.01, "s_d": 10, "v0": 30, "follower_payoff": "DesiredSpeed"},
      "bounds": {"u_min": -0.6, "u_max": 0.6},
      "solver": {"epsilon": 0.01, "n_max": 300, "upsilon": 1e-4, "delta": 1e-6},
      "initial": {"speed": null, "gaps": null},
      "window": [30, 60]
    }

Platoon entries may also be objects
``{"kind": "HV", "length": 5.0, "params": {"v0": 28.0}}``; parameters not
given keep their calibrated defaults.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .objective import Horizon, ObjectiveParams
from .pmp import SolverConfig
from .scenario import LeadProfile, Scenario, load_lead_profile, synthetic_profile
from .vehicle_models import (
    DEFAULT_LENGTH,
    ControlBounds,
    IdmParams,
    OvrvParams,
    VehicleKind,
    VehicleSpec,
)

DEFAULT_PLATOON = ("HV", "AV", "HV", "HV", "HV")
_KINDS = {
    "hv": VehicleKind.HUMAN, "humandriven": VehicleKind.HUMAN, "human": VehicleKind.HUMAN,
    "av": VehicleKind.AUTONOMOUS, "autonomous": VehicleKind.AUTONOMOUS,
}


class ConfigError(ValueError):
    pass


def _kind(name) -> VehicleKind:
    try:
        return _KINDS[str(name).replace("_", "").replace("-", "").lower()]
    except KeyError:
        raise ConfigError(f"unknown vehicle kind {name!r}") from None


def _section(cls, data, name):
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    try:
        return cls(**data)
    except TypeError as err:
        raise ConfigError(f"section {name!r}: {err}") from None


def _vehicle(entry) -> VehicleSpec:
    if isinstance(entry, str):
        return VehicleSpec(_kind(entry))
    if not isinstance(entry, dict):
        raise ConfigError(f"platoon entry must be a string or object, got {entry!r}")
    kind = _kind(entry.get("kind", "HV"))
    cls = IdmParams if kind is VehicleKind.HUMAN else OvrvParams
    params = _section(cls, entry.get("params"), "params")
    return VehicleSpec(kind, float(entry.get("length", DEFAULT_LENGTH)), params)


def _lead_profile(data, base_dir: Path) -> LeadProfile:
    data = data or {"synthetic": True}
    if "csv" in data:
        path = Path(data["csv"])
        if not path.is_absolute():
            path = base_dir / path
        return load_lead_profile(path)
    if "samples" in data:
        samples = np.asarray(data["samples"], dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 2:
            raise ConfigError("lead_profile.samples must be a list of [t, v] pairs")
        return LeadProfile(samples[:, 0], samples[:, 1])
    if data.get("synthetic", False):
        return synthetic_profile()
    raise ConfigError("lead_profile needs one of 'synthetic', 'csv' or 'samples'")


def scenario_from_dict(data: dict, base_dir=".", dt: float | None = None) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario config must be a JSON object")
    base_dir = Path(base_dir)
    horizon_data = dict(data.get("horizon") or {})
    if dt is not None:
        horizon_data["dt"] = dt
    horizon = _section(Horizon, horizon_data, "horizon")
    solver_data = dict(data.get("solver") or {})
    solver_data["dt"] = horizon.dt
    initial = data.get("initial") or {}
    gaps = initial.get("gaps")
    try:
        return Scenario(
            platoon=tuple(_vehicle(e) for e in data.get("platoon", DEFAULT_PLATOON)),
            lead_profile=_lead_profile(data.get("lead_profile"), base_dir),
            horizon=horizon,
            objective=_section(ObjectiveParams, data.get("objective"), "objective"),
            bounds=_section(ControlBounds, data.get("bounds"), "bounds"),
            solver=_section(SolverConfig, solver_data, "solver"),
            initial_speed=initial.get("speed"),
            initial_gaps=tuple(gaps) if gaps is not None else None,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def window_from_dict(data: dict, default=(30.0, 60.0)) -> tuple[float, float]:
    w = data.get("window", default) if isinstance(data, dict) else default
    if len(w) != 2:
        raise ConfigError("window must be [start, end]")
    return float(w[0]), float(w[1])


def load_config(path, dt: float | None = None) -> tuple[Scenario, tuple[float, float]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {os.fspath(path)}: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from None
    return scenario_from_dict(data, path.parent, dt=dt), window_from_dict(data)
