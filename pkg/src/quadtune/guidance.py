"""Straight-line waypoint guidance with trapezoidal speed profiles.

Each leg accelerates at the configured limit, optionally cruises at the
maximum speed, and decelerates to rest at the target.  When the leg is too
short to reach cruise speed the profile degenerates to a symmetric
accelerate/decelerate triangle with peak speed sqrt(d * a_max).  A scalar
version of the same profile drives azimuth (heading) legs along the shortest
signed angular path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

Vec3 = tuple[float, float, float]

__all__ = [
    "GuidanceLimits",
    "ProfileShape",
    "GuidanceProfile",
    "AzimuthProfile",
    "plan_leg",
    "distance_at",
    "speed_at",
    "setpoint_at",
    "plan_turn",
    "azimuth_setpoint_at",
    "wrap_angle",
]


@dataclass(frozen=True)
class GuidanceLimits:
    """Kinematic limits for translation and azimuth profiles."""

    v_max: float
    a_max: float
    psi_rate_max: float = 2.0
    psi_accel_max: float = 0.5

    def __post_init__(self) -> None:
        for name in ("v_max", "a_max", "psi_rate_max", "psi_accel_max"):
            if not (getattr(self, name) > 0.0):
                raise ValueError(f"{name} must be strictly positive")


class ProfileShape(enum.Enum):
    TRAPEZOID = "trapezoid"
    TRIANGLE = "triangle"


@dataclass(frozen=True)
class GuidanceProfile:
    """Precomputed timing of one straight-line leg.

    ``t_accel`` is the end of the acceleration phase, ``t_decel`` the start
    of the deceleration phase (equal to ``t_accel`` for triangles), and
    ``t_final`` the total leg time.  ``v_peak`` is the speed actually
    reached (v_max, or sqrt(d * a_max) for short legs).
    """

    start: Vec3
    end: Vec3
    distance: float
    shape: ProfileShape
    t_accel: float
    t_decel: float
    t_final: float
    v_peak: float
    a_max: float


def _trapezoid(d: float, v_max: float, a_max: float) -> tuple[float, float, float, float]:
    t1 = v_max / a_max
    t2 = d / v_max
    return t1, t2, t1 + t2, v_max


def _triangle(d: float, a_max: float) -> tuple[float, float, float, float]:
    t1 = math.sqrt(d / a_max)
    return t1, t1, 2.0 * t1, math.sqrt(d * a_max)


def plan_leg(r_c: Vec3, r_d: Vec3, limits: GuidanceLimits) -> GuidanceProfile:
    """Plan a straight leg from r_c to r_d under the given limits.

    The leg cruises iff its length is at least v_max**2 / a_max (twice the
    acceleration distance); a zero-length leg yields t_final = 0.
    """
    if not all(math.isfinite(c) for c in (*r_c, *r_d)):
        raise ValueError("waypoints must be finite")
    d = math.dist(r_c, r_d)
    if d >= limits.v_max * limits.v_max / limits.a_max:
        t1, t2, tf, v_peak = _trapezoid(d, limits.v_max, limits.a_max)
        shape = ProfileShape.TRAPEZOID
    else:
        t1, t2, tf, v_peak = _triangle(d, limits.a_max)
        shape = ProfileShape.TRIANGLE
    return GuidanceProfile(
        start=tuple(r_c),
        end=tuple(r_d),
        distance=d,
        shape=shape,
        t_accel=t1,
        t_decel=t2,
        t_final=tf,
        v_peak=v_peak,
        a_max=limits.a_max,
    )


def distance_at(profile: GuidanceProfile, t: float) -> float:
    """Distance traveled along the leg at time t; clamps to d beyond t_final."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    if t >= profile.t_final:
        return profile.distance
    a = profile.a_max
    if t < profile.t_accel:
        return 0.5 * a * t * t
    q1 = 0.5 * a * profile.t_accel * profile.t_accel
    if t < profile.t_decel:  # cruise (trapezoid only)
        return q1 + profile.v_peak * (t - profile.t_accel)
    q2 = q1 + profile.v_peak * (profile.t_decel - profile.t_accel)
    dt = t - profile.t_decel
    return q2 + profile.v_peak * dt - 0.5 * a * dt * dt


def speed_at(profile: GuidanceProfile, t: float) -> float:
    """Analytic derivative of :func:`distance_at`."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    if t >= profile.t_final:
        return 0.0
    if t < profile.t_accel:
        return profile.a_max * t
    if t < profile.t_decel:
        return profile.v_peak
    return profile.v_peak - profile.a_max * (t - profile.t_decel)


def setpoint_at(profile: GuidanceProfile, t: float) -> tuple[Vec3, Vec3]:
    """Position and velocity setpoints along the leg at time t."""
    if profile.distance == 0.0:
        return profile.start, (0.0, 0.0, 0.0)
    q = distance_at(profile, t)
    qdot = speed_at(profile, t)
    f = q / profile.distance
    g = qdot / profile.distance
    sx, sy, sz = profile.start
    ex, ey, ez = profile.end
    dx, dy, dz = ex - sx, ey - sy, ez - sz
    return (
        (sx + dx * f, sy + dy * f, sz + dz * f),
        (dx * g, dy * g, dz * g),
    )


def wrap_angle(angle: float) -> float:
    """Wrap to [-pi, pi], preserving the sign at exactly +/-pi so that a
    half-turn request keeps its commanded direction."""
    return math.remainder(angle, math.tau)


@dataclass(frozen=True)
class AzimuthProfile:
    """Scalar heading leg: start angle plus a signed shortest-path delta."""

    psi_start: float
    delta: float
    profile: GuidanceProfile


def plan_turn(psi_c: float, psi_d: float, limits: GuidanceLimits) -> AzimuthProfile:
    delta = wrap_angle(psi_d - psi_c)
    scalar_limits = GuidanceLimits(
        v_max=limits.psi_rate_max,
        a_max=limits.psi_accel_max,
    )
    leg = plan_leg((0.0, 0.0, 0.0), (abs(delta), 0.0, 0.0), scalar_limits)
    return AzimuthProfile(psi_start=psi_c, delta=delta, profile=leg)


def _azimuth_at(turn: AzimuthProfile, t: float) -> tuple[float, float]:
    if turn.delta == 0.0:
        return turn.psi_start, 0.0
    sign = math.copysign(1.0, turn.delta)
    q = distance_at(turn.profile, t)
    qdot = speed_at(turn.profile, t)
    return wrap_angle(turn.psi_start + sign * q), sign * qdot


def azimuth_setpoint_at(
    psi_c: float, psi_d: float, limits: GuidanceLimits, t: float
) -> tuple[float, float]:
    """Azimuth and azimuth-rate setpoints t seconds into a heading leg."""
    return _azimuth_at(plan_turn(psi_c, psi_d, limits), t)
