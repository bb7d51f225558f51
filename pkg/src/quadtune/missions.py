"""Mission definitions and waypoint sequencing.

Two built-in missions: a 13-waypoint learning trajectory that excites every
axis (climb/descend, out-and-back along y and x, three heading turns, land)
and a Hilbert-curve survey pattern used as the tracking benchmark.  The
tracker plans one guidance leg at a time, always from the previous leg's
terminal setpoint so the reference trajectory is identical no matter how
well the vehicle tracks it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, MissionAbort
from .guidance import (
    AzimuthProfile,
    GuidanceLimits,
    GuidanceProfile,
    _azimuth_at,
    plan_leg,
    plan_turn,
    setpoint_at,
)

Vec3 = tuple[float, float, float]

__all__ = [
    "Waypoint",
    "MissionPlan",
    "GuidanceSetpoint",
    "MissionTracker",
    "learning_mission",
    "hilbert_vertices",
    "hilbert_mission",
]


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    z: float
    psi: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z, self.psi)):
            raise ConfigError(f"waypoint coordinates must be finite: {self}")
        if self.z < 0.0:
            raise ConfigError(f"waypoint altitude must be nonnegative: {self}")

    @property
    def position(self) -> Vec3:
        return (self.x, self.y, self.z)


@dataclass
class MissionPlan:
    waypoints: list[Waypoint]
    limits: GuidanceLimits
    acceptance_radius: float = 0.3
    hold_time: float = 2.0
    name: str = "mission"

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise ConfigError("a mission needs at least two waypoints")

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "acceptance_radius": self.acceptance_radius,
            "hold_time": self.hold_time,
            "limits": {
                "v_max": self.limits.v_max,
                "a_max": self.limits.a_max,
                "psi_rate_max": self.limits.psi_rate_max,
                "psi_accel_max": self.limits.psi_accel_max,
            },
            "waypoints": [
                {"x": w.x, "y": w.y, "z": w.z, "psi": w.psi} for w in self.waypoints
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MissionPlan":
        try:
            limits = GuidanceLimits(**doc["limits"])
            waypoints = [Waypoint(**w) for w in doc["waypoints"]]
            return cls(
                waypoints=waypoints,
                limits=limits,
                acceptance_radius=float(doc.get("acceptance_radius", 0.3)),
                hold_time=float(doc.get("hold_time", 2.0)),
                name=doc.get("name", "mission"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed mission document: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "MissionPlan":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"mission file not found: {path}")
        try:
            return cls.from_json_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"mission file {path} is not valid JSON: {exc}") from exc


def learning_mission(
    z_hov: float,
    x_inc: float,
    y_inc: float,
    z_inc: float,
    limits: GuidanceLimits,
    acceptance_radius: float = 0.3,
    hold_time: float = 2.0,
) -> MissionPlan:
    """The 13-waypoint gain-learning trajectory.

    Take off to the hover point, move out and back along each translational
    axis, turn the heading a quarter, half, and back to zero, then land.
    Every control channel sees persistent excitation somewhere along it.
    """
    if min(z_hov, x_inc, y_inc, z_inc) <= 0.0:
        raise ConfigError("learning mission increments must be positive")
    wp = [
        Waypoint(0.0, 0.0, z_hov, 0.0),            # take-off
        Waypoint(0.0, 0.0, z_hov + z_inc, 0.0),    # +z
        Waypoint(0.0, 0.0, z_hov, 0.0),            # -z
        Waypoint(0.0, y_inc, z_hov, 0.0),          # +y
        Waypoint(0.0, -y_inc, z_hov, 0.0),         # -y
        Waypoint(0.0, 0.0, z_hov, 0.0),            # back to hover
        Waypoint(x_inc, 0.0, z_hov, 0.0),          # +x
        Waypoint(-x_inc, 0.0, z_hov, 0.0),         # -x
        Waypoint(0.0, 0.0, z_hov, 0.0),            # back to hover
        Waypoint(0.0, 0.0, z_hov, math.pi / 2.0),  # quarter turn ccw
        Waypoint(0.0, 0.0, z_hov, math.pi),        # half turn ccw
        Waypoint(0.0, 0.0, z_hov, 0.0),            # turn back cw
        Waypoint(0.0, 0.0, 0.0, 0.0),              # land
    ]
    return MissionPlan(
        waypoints=wp,
        limits=limits,
        acceptance_radius=acceptance_radius,
        hold_time=hold_time,
        name="learning",
    )


def hilbert_vertices(order: int) -> list[tuple[int, int]]:
    """Vertices of the Hilbert curve of the given order on a 2^n x 2^n grid."""
    if order < 1:
        raise ConfigError("hilbert order must be >= 1")
    n = 2**order
    points = []
    for d in range(n * n):
        t = d
        x = y = 0
        s = 1
        while s < n:
            rx = 1 & (t // 2)
            ry = 1 & (t ^ rx)
            if ry == 0:
                if rx == 1:
                    x = s - 1 - x
                    y = s - 1 - y
                x, y = y, x
            x += s * rx
            y += s * ry
            t //= 4
            s *= 2
        points.append((x, y))
    return points


def hilbert_mission(
    order: int,
    side: float,
    z_alt: float,
    limits: GuidanceLimits,
    acceptance_radius: float = 0.3,
    hold_time: float = 2.0,
) -> MissionPlan:
    """Hilbert-curve test trajectory over a centered square at fixed altitude.

    Consecutive curve vertices are axis-aligned and side/(2^order - 1) apart.
    A take-off waypoint above the first vertex is prepended and a landing
    waypoint below the last vertex appended; heading stays at zero.
    """
    if side <= 0.0 or z_alt <= 0.0:
        raise ConfigError("hilbert mission needs positive side and altitude")
    cells = 2**order
    spacing = side / (cells - 1)
    half = side / 2.0
    vertices = [
        Waypoint(ix * spacing - half, iy * spacing - half, z_alt, 0.0)
        for ix, iy in hilbert_vertices(order)
    ]
    first, last = vertices[0], vertices[-1]
    wp = [Waypoint(first.x, first.y, z_alt, 0.0), *vertices,
          Waypoint(last.x, last.y, 0.0, 0.0)]
    return MissionPlan(
        waypoints=wp,
        limits=limits,
        acceptance_radius=acceptance_radius,
        hold_time=hold_time,
        name=f"hilbert{order}",
    )


@dataclass(frozen=True)
class GuidanceSetpoint:
    position_sp: Vec3
    velocity_sp: Vec3
    azimuth_sp: float
    azimuth_rate_sp: float


@dataclass
class _Leg:
    target: Waypoint
    translation: GuidanceProfile
    turn: AzimuthProfile
    start_time: float

    @property
    def duration(self) -> float:
        return max(self.translation.t_final, self.turn.profile.t_final)


class MissionTracker:
    """Advances a mission leg by leg and produces guidance setpoints.

    A leg is planned from the previous leg's terminal setpoint (never from
    the measured position) when it becomes active.  Once both of its
    profiles have completed, the tracker advances as soon as the vehicle is
    within the acceptance radius, or after ``hold_time`` of terminal hover
    as a stall guard so a sloppy-but-flying vehicle still progresses.  A
    position error beyond ``error_limit`` aborts the mission: that is the
    divergence detector for autotune flights.
    """

    def __init__(self, mission: MissionPlan, error_limit: float = 25.0):
        self.mission = mission
        self.error_limit = error_limit
        first = mission.waypoints[0]
        self._setpoint_pose: tuple[Vec3, float] = ((first.x, first.y, 0.0), first.psi)
        self._index = 0
        self._leg: _Leg | None = None
        self.legs_completed = 0
        self.complete = False
        self.completion_time: float | None = None

    @property
    def active_waypoint(self) -> Waypoint | None:
        if self.complete:
            return None
        return self.mission.waypoints[self._index]

    def _plan_current(self, t: float) -> None:
        target = self.mission.waypoints[self._index]
        origin, psi0 = self._setpoint_pose
        self._leg = _Leg(
            target=target,
            translation=plan_leg(origin, target.position, self.mission.limits),
            turn=plan_turn(psi0, target.psi, self.mission.limits),
            start_time=t,
        )

    def update(self, t: float, position: Vec3) -> GuidanceSetpoint:
        """Setpoints at time t; advances legs and detects completion/divergence."""
        if self.complete:
            return self._terminal_setpoint()
        if self._leg is None:
            self._plan_current(t)
        leg = self._leg
        assert leg is not None

        t_leg = t - leg.start_time
        pos_sp, vel_sp = setpoint_at(leg.translation, t_leg)
        psi_sp, psi_rate_sp = _azimuth_at(leg.turn, t_leg)

        error = math.dist(position, pos_sp)
        if error > self.error_limit:
            raise MissionAbort(
                f"mission {self.mission.name!r} diverged on leg {self._index}: "
                f"position error {error:.1f} m exceeds {self.error_limit:.1f} m "
                f"at t={t:.2f} s"
            )

        if t_leg >= leg.duration:
            target_error = math.dist(position, leg.target.position)
            reached = target_error < self.mission.acceptance_radius
            stalled = t_leg >= leg.duration + self.mission.hold_time
            if reached or stalled:
                self._setpoint_pose = (leg.target.position, leg.target.psi)
                self.legs_completed += 1
                self._index += 1
                if self._index >= len(self.mission.waypoints):
                    self.complete = True
                    self.completion_time = t
                    self._leg = None
                else:
                    self._plan_current(t)
        return GuidanceSetpoint(pos_sp, vel_sp, psi_sp, psi_rate_sp)

    def _terminal_setpoint(self) -> GuidanceSetpoint:
        pos, psi = self._setpoint_pose
        return GuidanceSetpoint(pos, (0.0, 0.0, 0.0), psi, 0.0)
