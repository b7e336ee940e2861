"""Car-following laws for human-driven (IDM) and autonomous (OVRV) vehicles.

Defaults are the calibrated values used throughout the package:

    IDM:  v0=30.0 m/s, tau1=1.5 s, s0=2.0 m, a=1.0 m/s^2, b=1.5 m/s^2
    OVRV: k1=0.1 1/s^2, k2=0.6 1/s, eta=21.51 m, tau2=1.71 s
    vehicle length l=5.0 m

Gaps are bumper-to-bumper: ``s_i = x_{i-1} - x_i - l_{i-1}``.  Relative
speed is ``leader - follower`` (positive when the gap is opening).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

DEFAULT_LENGTH = 5.0


class CollisionError(RuntimeError):
    """Raised when a follower's gap to its leader is no longer positive."""

    def __init__(self, message: str, time: float | None = None, vehicle: int | None = None):
        super().__init__(message)
        self.time = time
        self.vehicle = vehicle


@dataclass(frozen=True)
class IdmParams:
    v0: float = 30.0
    tau1: float = 1.5
    s0: float = 2.0
    a: float = 1.0
    b: float = 1.5

    def __post_init__(self):
        for name in ("v0", "tau1", "s0", "a", "b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IdmParams.{name} must be positive, got {getattr(self, name)!r}")

    @property
    def sqrt_ab(self) -> float:
        return math.sqrt(self.a * self.b)


@dataclass(frozen=True)
class OvrvParams:
    k1: float = 0.1
    k2: float = 0.6
    eta: float = 21.51
    tau2: float = 1.71

    def __post_init__(self):
        if not self.k1 > 0 or not self.k2 > 0:
            raise ValueError("OVRV gains k1, k2 must be positive")
        if not self.eta >= 0:
            raise ValueError("OVRV jam distance eta must be non-negative")
        if not self.tau2 > 0:
            raise ValueError("OVRV time gap tau2 must be positive")


@dataclass(frozen=True)
class VehicleState:
    x: float
    v: float


class VehicleKind(str, enum.Enum):
    HUMAN = "HumanDriven"
    AUTONOMOUS = "Autonomous"


@dataclass(frozen=True)
class VehicleSpec:
    """One vehicle in a platoon: its kind, length and car-following parameters."""

    kind: VehicleKind = VehicleKind.HUMAN
    length: float = DEFAULT_LENGTH
    params: Union[IdmParams, OvrvParams, None] = field(default=None)

    def __post_init__(self):
        kind = VehicleKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not self.length > 0:
            raise ValueError(f"vehicle length must be positive, got {self.length!r}")
        if self.params is None:
            default = IdmParams() if kind is VehicleKind.HUMAN else OvrvParams()
            object.__setattr__(self, "params", default)
        expected = IdmParams if kind is VehicleKind.HUMAN else OvrvParams
        if not isinstance(self.params, expected):
            raise TypeError(f"{kind.value} vehicle needs {expected.__name__}, got {type(self.params).__name__}")

    @property
    def is_autonomous(self) -> bool:
        return self.kind is VehicleKind.AUTONOMOUS


@dataclass(frozen=True)
class ControlBounds:
    u_min: float = -0.6
    u_max: float = 0.6

    def __post_init__(self):
        if not self.u_min <= 0 <= self.u_max:
            raise ValueError(f"control bounds must satisfy u_min <= 0 <= u_max, got [{self.u_min}, {self.u_max}]")


def relative_speed(leader_v: float, follower_v: float) -> float:
    return leader_v - follower_v


def idm_desired_gap(params: IdmParams, v: float, dv: float) -> float:
    """Dynamic desired gap s*(v, dv); may be negative when closing fast from behind."""
    return params.s0 + params.tau1 * v - v * dv / (2.0 * params.sqrt_ab)


def idm_accel(params: IdmParams, gap: float, v: float, dv: float) -> float:
    if not gap > 0:
        raise CollisionError(f"non-positive gap {gap!r} in IDM")
    s_star = idm_desired_gap(params, v, dv)
    return params.a * (1.0 - (v / params.v0) ** 4 - (s_star / gap) ** 2)


def idm_partials(params: IdmParams, gap: float, v: float, dv: float) -> tuple[float, float, float]:
    """Partial derivatives (df/ds, df/d(dv), df/dv) of the IDM acceleration."""
    a = params.a
    s_star = idm_desired_gap(params, v, dv)
    gap2 = gap * gap
    d_gap = 2.0 * a * s_star * s_star / (gap2 * gap)
    d_dv = a * s_star * v / (gap2 * params.sqrt_ab)
    d_v = -4.0 * a * v ** 3 / params.v0 ** 4 - (2.0 * a * s_star / gap2) * (params.tau1 - dv / (2.0 * params.sqrt_ab))
    return d_gap, d_dv, d_v


def ovrv_accel(params: OvrvParams, gap: float, v: float, leader_v: float) -> float:
    return params.k1 * (gap - params.eta - params.tau2 * v) + params.k2 * (leader_v - v)


def idm_equilibrium_gap(params: IdmParams, v: float) -> float:
    """Gap at which a follower matching its leader's speed ``v`` neither accelerates nor brakes."""
    if v < 0 or v >= params.v0:
        raise ValueError(f"IDM equilibrium gap needs 0 <= v < v0={params.v0}, got {v!r}")
    return idm_desired_gap(params, v, 0.0) / math.sqrt(1.0 - (v / params.v0) ** 4)


def ovrv_equilibrium_gap(params: OvrvParams, v: float) -> float:
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v!r}")
    return params.eta + params.tau2 * v


def equilibrium_gap(spec: VehicleSpec, v: float) -> float:
    if spec.is_autonomous:
        return ovrv_equilibrium_gap(spec.params, v)
    return idm_equilibrium_gap(spec.params, v)
