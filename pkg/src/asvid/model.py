"""Core vessel-model types: frames, operating regions, thrust maps and the
velocity input gains they induce.

Conventions used throughout the package:

* body velocities ``nu = [u, v, r]`` (surge m/s, sway m/s, yaw rate rad/s),
* normalized PWM commands ``delta_l, delta_r`` in [-1, 1], usually handled
  as the mean ``(delta_l + delta_r) / 2`` and difference ``delta_l - delta_r``,
* headings in radians, stored unwrapped (continuous) wherever they are
  differentiated.

All functions here are pure and all types are immutable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RegionError

__all__ = [
    "OperatingRegion",
    "BodyVelocity",
    "Pose",
    "PwmFrame",
    "ThrustStaticParams",
    "ThrustDynamicParams",
    "StaticSurgeParams",
    "StaticSwayYawParams",
    "DynamicSurgeParams",
    "DynamicSwayYawParams",
    "InertiaLayout",
    "rotation_matrix",
    "rotation2",
    "classify_region",
    "thrust_static",
    "thrust_dynamic_step",
    "force_torque_from_thrusts",
    "surge_thrust_monomials",
    "swayyaw_thrust_columns",
    "input_gain_static_u",
    "input_gain_static_p",
    "input_gain_dynamic_step",
]


class OperatingRegion(enum.IntEnum):
    """Sign pattern of the two propellers: forward/reverse of left, then right.

    ``delta == 0`` counts as forward, so both propellers idle is FF.
    """

    FF = 0
    FR = 1
    RF = 2
    RR = 3


def _require_finite(name: str, *values: float) -> None:
    for value in values:
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class BodyVelocity:
    """Body-frame velocity: surge u (m/s), sway v (m/s), yaw rate r (rad/s)."""

    u: float
    v: float
    r: float

    def __post_init__(self) -> None:
        _require_finite("BodyVelocity", self.u, self.v, self.r)

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.r])


@dataclass(frozen=True)
class Pose:
    """Planar pose: north x (m), east y (m), heading psi (rad, unwrapped)."""

    x: float
    y: float
    psi: float

    def __post_init__(self) -> None:
        _require_finite("Pose", self.x, self.y, self.psi)


@dataclass(frozen=True)
class PwmFrame:
    """One synchronized pair of normalized PWM commands.

    ``delta_mean``/``delta_diff`` and ``region`` are derived at construction
    and kept consistent with ``delta_l``/``delta_r`` by the constructors.
    """

    delta_l: float
    delta_r: float
    delta_mean: float = field(init=False)
    delta_diff: float = field(init=False)
    region: OperatingRegion = field(init=False)

    def __post_init__(self) -> None:
        region = classify_region(self.delta_l, self.delta_r)
        object.__setattr__(self, "delta_mean", (self.delta_l + self.delta_r) / 2.0)
        object.__setattr__(self, "delta_diff", self.delta_l - self.delta_r)
        object.__setattr__(self, "region", region)

    @classmethod
    def from_mean_diff(cls, mean: float, diff: float) -> "PwmFrame":
        return cls(delta_l=mean + diff / 2.0, delta_r=mean - diff / 2.0)


@dataclass(frozen=True)
class ThrustStaticParams:
    """Piecewise-quadratic thrust vs normalized PWM.

    Forward branch ``a_f*d^2 + b_f*d`` for d >= 0, reverse branch with
    ``a_r, b_r`` for d < 0.  The optional dead zone replaces the map with
    shifted quadratics outside (``dead_zone_reverse``, ``dead_zone_forward``)
    and zero inside; both limits must be given together.
    """

    a_f: float
    b_f: float
    a_r: float
    b_r: float
    dead_zone_forward: float | None = None
    dead_zone_reverse: float | None = None

    def __post_init__(self) -> None:
        _require_finite("ThrustStaticParams", self.a_f, self.b_f, self.a_r, self.b_r)
        if (self.dead_zone_forward is None) != (self.dead_zone_reverse is None):
            raise ValueError("dead zone needs both forward and reverse limits")
        if self.dead_zone_forward is not None:
            if not self.dead_zone_forward > 0:
                raise ValueError("dead_zone_forward must be > 0")
            if not self.dead_zone_reverse < 0:
                raise ValueError("dead_zone_reverse must be < 0")

    @property
    def has_dead_zone(self) -> bool:
        return self.dead_zone_forward is not None


@dataclass(frozen=True)
class ThrustDynamicParams:
    """First-order thrust lag ``T(k) = alpha*T(k-1) + beta*T_st(delta(k-1))``."""

    alpha: float
    beta: float
    static_part: ThrustStaticParams

    def __post_init__(self) -> None:
        _require_finite("ThrustDynamicParams", self.alpha, self.beta)

    @property
    def stable(self) -> bool:
        return self.alpha < 1.0


class _ParamVector:
    """Base for fixed-length lumped-coefficient vectors."""

    LENGTH = 0

    def __init__(self, x) -> None:
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.size != self.LENGTH:
            raise ValueError(
                f"{type(self).__name__} needs exactly {self.LENGTH} entries, got {arr.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{type(self).__name__} entries must be finite")
        arr.flags.writeable = False
        self.x = arr

    def __len__(self) -> int:
        return self.LENGTH

    def __getitem__(self, i):
        return self.x[i]

    def __eq__(self, other) -> bool:
        return type(other) is type(self) and bool(np.array_equal(self.x, other.x))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.x.tolist()})"


class StaticSurgeParams(_ParamVector):
    """7-entry surge vector for the static propeller model.

    Index table (1-based as reported in parameter files):
      1..5  lumped disturbance terms (u|u|, v*r, r^2, u, bias),
      6     thrust quadratic gain, pairs with (mean^2 + diff^2/4),
      7     thrust linear gain, pairs with mean.
    """

    LENGTH = 7


class StaticSwayYawParams(_ParamVector):
    """13-entry sway or yaw vector for the static propeller model.

    Index table (1-based):
      1..9   lumped disturbance terms (v|v|, v|r|, r|v|, r|r|, u*v, u*r, v, r, bias),
      10..13 thrust-coupled terms; 10 and 12 carry region-dependent signs and
             vanish structurally in forward-forward operation.
    """

    LENGTH = 13


class DynamicSurgeParams(_ParamVector):
    """11-entry surge vector for the first-order propeller model.

    Entries 1 and 5 jointly encode the shared pole; 10..11 are the
    thrust-coupled terms driven by the previous step's PWM.
    """

    LENGTH = 11


class DynamicSwayYawParams(_ParamVector):
    """21-entry sway or yaw vector for the first-order propeller model.

    Canonical ordering with thrust-coupled terms at 18..21 (the layout the
    dynamic input-gain recursion indexes); the pole pairs are entries (1, 8)
    for sway and (1, 9) for yaw.
    """

    LENGTH = 21


@dataclass(frozen=True)
class InertiaLayout:
    """The three inverse-inertia entries the input gains need, plus geometry.

    ``m11_inv`` (1/kg), ``m23_inv`` (1/(kg*m)), ``m33_inv`` (1/(kg*m^2)),
    propeller separation ``d`` (m) and sampling period ``h`` (s).
    """

    m11_inv: float
    m23_inv: float
    m33_inv: float
    d: float
    h: float = 0.2

    def __post_init__(self) -> None:
        _require_finite("InertiaLayout", self.m11_inv, self.m23_inv, self.m33_inv, self.d, self.h)
        if not self.h > 0:
            raise ValueError("sampling period h must be > 0")
        if not self.d > 0:
            raise ValueError("propeller separation d must be > 0")


def rotation2(psi: float) -> np.ndarray:
    """2x2 body-to-inertial rotation for heading psi (rad)."""
    if not math.isfinite(psi):
        raise ValueError("psi must be finite")
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s], [s, c]])


def rotation_matrix(psi: float) -> np.ndarray:
    """3x3 planar rotation [[R2(psi), 0], [0, 1]] linking body and NED frames."""
    out = np.eye(3)
    out[:2, :2] = rotation2(psi)
    return out


def classify_region(delta_l: float, delta_r: float) -> OperatingRegion:
    """Operating region from the signs of the two normalized PWM commands.

    Zero counts as forward, so the boundary cases land in the forward
    branches (both thrust branches agree at zero anyway).
    """
    _require_finite("classify_region", delta_l, delta_r)
    if abs(delta_l) > 1.0 or abs(delta_r) > 1.0:
        raise ValueError(f"normalized PWM out of [-1, 1]: ({delta_l}, {delta_r})")
    if delta_l >= 0.0:
        return OperatingRegion.FF if delta_r >= 0.0 else OperatingRegion.FR
    return OperatingRegion.RF if delta_r >= 0.0 else OperatingRegion.RR


def thrust_static(delta: float, p: ThrustStaticParams) -> float:
    """Static thrust map: piecewise quadratic in the normalized PWM command."""
    _require_finite("thrust_static", delta)
    if abs(delta) > 1.0:
        raise ValueError(f"normalized PWM out of [-1, 1]: {delta}")
    if p.has_dead_zone:
        if delta >= p.dead_zone_forward:
            shifted = delta - p.dead_zone_forward
            return p.a_f * shifted * shifted + p.b_f * shifted
        if delta <= p.dead_zone_reverse:
            shifted = delta - p.dead_zone_reverse
            return p.a_r * shifted * shifted + p.b_r * shifted
        return 0.0
    if delta >= 0.0:
        return p.a_f * delta * delta + p.b_f * delta
    return p.a_r * delta * delta + p.b_r * delta


def thrust_dynamic_step(t_prev: float, delta_prev: float, p: ThrustDynamicParams) -> float:
    """One step of the first-order thrust lag driven by the static map."""
    _require_finite("thrust_dynamic_step", t_prev, delta_prev)
    return p.alpha * t_prev + p.beta * thrust_static(delta_prev, p.static_part)


def force_torque_from_thrusts(t_l: float, t_r: float, d: float) -> tuple[float, float]:
    """Surge force and yaw torque produced by left/right thrusts separated by d (m)."""
    _require_finite("force_torque_from_thrusts", t_l, t_r, d)
    return t_l + t_r, 0.5 * d * (t_l - t_r)


def surge_thrust_monomials(frame: PwmFrame) -> tuple[float, float]:
    """PWM monomials driving the surge thrust terms: (mean^2 + diff^2/4, mean)."""
    m = frame.delta_mean
    dd = frame.delta_diff
    return m * m + 0.25 * dd * dd, m


# Sign applied to the two asymmetric thrust columns per region: forward-forward
# cancels them (identical propellers on the same branch), and swapping which
# propeller reverses flips their sign.
_ASYM_SIGN = {OperatingRegion.FF: 0.0, OperatingRegion.FR: 1.0, OperatingRegion.RF: -1.0}


def swayyaw_thrust_columns(frame: PwmFrame) -> np.ndarray:
    """The four thrust-coupled regressor columns for sway/yaw at one step.

    Ordered [mean^2 + diff^2/4, mean*diff, mean, diff/2] with the first and
    third entries carrying the region sign (zeroed in FF, negated in RF).
    Reverse-reverse operation is outside the identified model.
    """
    if frame.region is OperatingRegion.RR:
        raise RegionError("sway/yaw thrust columns are undefined in reverse-reverse")
    s = _ASYM_SIGN[frame.region]
    m1, mean = surge_thrust_monomials(frame)
    dd = frame.delta_diff
    return np.array([s * m1, mean * dd, s * mean, 0.5 * dd])


def input_gain_static_u(frame: PwmFrame, p: StaticSurgeParams) -> float:
    """Surge input gain under the static propeller model (forward-forward only)."""
    if frame.region is not OperatingRegion.FF:
        raise RegionError(
            f"surge input gain is only identified in forward-forward, got {frame.region.name}"
        )
    m1, mean = surge_thrust_monomials(frame)
    return p.x[5] * m1 + p.x[6] * mean


def input_gain_static_p(frame: PwmFrame, p: StaticSwayYawParams) -> float:
    """Sway or yaw input gain under the static propeller model.

    Region-switched: FF uses only the symmetric terms (11, 13), FR uses all
    four thrust terms, RF negates terms 10 and 12.
    """
    cols = swayyaw_thrust_columns(frame)
    return float(cols @ p.x[9:13])


def input_gain_dynamic_step(
    g_prev: float,
    frame_prev: PwmFrame,
    alpha: float,
    p: DynamicSurgeParams | DynamicSwayYawParams,
) -> float:
    """One step of the first-order input-gain recursion.

    ``g(k) = alpha * g(k-1) + <thrust columns at k-1> . <thrust entries of p>``
    with the same region conventions as the static gains.  Affine in
    ``g_prev`` with slope exactly ``alpha``.
    """
    _require_finite("input_gain_dynamic_step", g_prev, alpha)
    if isinstance(p, DynamicSurgeParams):
        if frame_prev.region is not OperatingRegion.FF:
            raise RegionError(
                "dynamic surge input gain needs forward-forward operation, "
                f"got {frame_prev.region.name}"
            )
        m1, mean = surge_thrust_monomials(frame_prev)
        return alpha * g_prev + p.x[9] * m1 + p.x[10] * mean
    if isinstance(p, DynamicSwayYawParams):
        cols = swayyaw_thrust_columns(frame_prev)
        return alpha * g_prev + float(cols @ p.x[17:21])
    raise TypeError(f"unsupported parameter vector {type(p).__name__}")
