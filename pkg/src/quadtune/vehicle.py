"""Rigid-body quadcopter simulator.

Newton-Euler six-degree-of-freedom dynamics of a quad-X frame in the ENU
world frame: rotor thrust/reaction-torque model with first-order rotor lag,
linear aerodynamic drag, quaternion attitude kinematics, and a ground
contact clamp.  Integration is a single classical fourth-order Runge-Kutta
step at the simulation rate.  All hot-path math runs on plain floats; the
1 kHz loop never touches numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import quat
from .errors import ConfigError, NumericalAbort

Vec3 = tuple[float, float, float]

G0 = 9.80665  # standard gravity, m/s^2

__all__ = [
    "G0",
    "VehicleParameters",
    "VehicleState",
    "MeasurementNoise",
    "Measurement",
    "rotor_layout",
    "derivatives",
    "integrate_step",
    "measure",
]


@dataclass(frozen=True)
class VehicleParameters:
    """Physical model of the vehicle.

    ``mass_scale`` multiplies the mass (weight and translational inertia)
    only; it is the knob the sensitivity sweep turns while the autopilot
    keeps assuming the nominal mass.
    """

    mass: float = 2.0  # kg
    inertia: Vec3 = (0.021, 0.021, 0.042)  # kg m^2, body-diagonal
    arm_length: float = 0.25  # m, center to rotor
    thrust_coeff: float = 1.2e-5  # N s^2/rad^2
    torque_coeff: float = 1.9e-7  # N m s^2/rad^2
    rotor_time_constant: float = 0.02  # s
    rotor_speed_max: float = 1000.0  # rad/s
    drag_coeff: float = 0.08  # N s/m, linear
    mass_scale: float = 1.0

    def __post_init__(self) -> None:
        positive = {
            "mass": self.mass,
            "arm_length": self.arm_length,
            "thrust_coeff": self.thrust_coeff,
            "torque_coeff": self.torque_coeff,
            "rotor_time_constant": self.rotor_time_constant,
            "rotor_speed_max": self.rotor_speed_max,
            "mass_scale": self.mass_scale,
        }
        for name, value in positive.items():
            if not (value > 0.0):
                raise ConfigError(f"vehicle parameter {name} must be positive, got {value}")
        if any(i <= 0.0 for i in self.inertia):
            raise ConfigError(f"inertia entries must be positive, got {self.inertia}")
        if self.drag_coeff < 0.0:
            raise ConfigError(f"drag_coeff must be nonnegative, got {self.drag_coeff}")

    @property
    def effective_mass(self) -> float:
        return self.mass * self.mass_scale

    @property
    def weight(self) -> float:
        return self.effective_mass * G0

    @property
    def max_thrust(self) -> float:
        return 4.0 * self.thrust_coeff * self.rotor_speed_max**2

    def hover_rotor_speed(self) -> float:
        """Rotor speed at which four equal rotors balance the (scaled) weight."""
        return math.sqrt(self.weight / (4.0 * self.thrust_coeff))

    def moment_limits(self) -> Vec3:
        """Conservative per-axis moment envelope implied by the rotor limits."""
        k = self.arm_length / math.sqrt(2.0)
        tilt = k * self.thrust_coeff * self.rotor_speed_max**2
        yaw = 2.0 * self.torque_coeff * self.rotor_speed_max**2
        return (tilt, tilt, yaw)

    def scaled(self, alpha: float) -> "VehicleParameters":
        return replace(self, mass_scale=alpha)

    def to_file(self, path: str | Path) -> None:
        path = Path(path)
        ix, iy, iz = self.inertia
        path.write_text(
            "# quadtune vehicle model (quad-X). Units in comments.\n"
            f"mass = {self.mass!r}                # kg\n"
            f"inertia_xx = {ix!r}           # kg m^2\n"
            f"inertia_yy = {iy!r}           # kg m^2\n"
            f"inertia_zz = {iz!r}           # kg m^2\n"
            f"arm_length = {self.arm_length!r}            # m\n"
            f"thrust_coeff = {self.thrust_coeff!r}         # N s^2/rad^2\n"
            f"torque_coeff = {self.torque_coeff!r}         # N m s^2/rad^2\n"
            f"rotor_time_constant = {self.rotor_time_constant!r}    # s\n"
            f"rotor_speed_max = {self.rotor_speed_max!r}     # rad/s\n"
            f"drag_coeff = {self.drag_coeff!r}            # N s/m\n"
            f"mass_scale = {self.mass_scale!r}             # dimensionless\n"
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "VehicleParameters":
        values = _read_keyvalue_file(path)
        try:
            inertia = (
                float(values.pop("inertia_xx")),
                float(values.pop("inertia_yy")),
                float(values.pop("inertia_zz")),
            )
            kwargs = {name: float(v) for name, v in values.items()}
            return cls(inertia=inertia, **kwargs)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad vehicle file {path}: {exc}") from exc


def _read_keyvalue_file(path: str | Path) -> dict[str, str]:
    """Parse 'key = value  # comment' lines; blank lines and comments skipped."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def rotor_layout(params: VehicleParameters) -> list[tuple[float, float, float]]:
    """Rotor (x, y, reaction_sign) in the body frame.

    Diagonal pairs spin in the same sense; ``reaction_sign`` is the sign of
    the yaw reaction torque each rotor applies to the airframe.  The mixer
    and the dynamics share this single definition.
    """
    k = params.arm_length / math.sqrt(2.0)
    return [
        (k, k, -1.0),
        (-k, -k, -1.0),
        (k, -k, 1.0),
        (-k, k, 1.0),
    ]


@dataclass(frozen=True)
class VehicleState:
    position: Vec3 = (0.0, 0.0, 0.0)  # m, ENU
    velocity: Vec3 = (0.0, 0.0, 0.0)  # m/s, ENU
    attitude: quat.Quat = quat.IDENTITY  # body -> ENU
    angular_rate: Vec3 = (0.0, 0.0, 0.0)  # rad/s, body
    rotor_speeds: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)  # rad/s

    @classmethod
    def at_rest(cls, x: float = 0.0, y: float = 0.0, psi: float = 0.0) -> "VehicleState":
        return cls(
            position=(x, y, 0.0),
            attitude=quat.from_axis_angle((0.0, 0.0, 1.0), psi),
        )

    def _flat(self) -> tuple[float, ...]:
        return (*self.position, *self.velocity, *self.attitude, *self.angular_rate, *self.rotor_speeds)

    @classmethod
    def _from_flat(cls, s: tuple[float, ...]) -> "VehicleState":
        return cls(
            position=s[0:3],
            velocity=s[3:6],
            attitude=s[6:10],
            angular_rate=s[10:13],
            rotor_speeds=s[13:17],
        )


def _flat_derivative(
    s: tuple[float, ...],
    commanded: tuple[float, float, float, float],
    params: VehicleParameters,
    geometry: list[tuple[float, float, float]],
) -> tuple[float, ...]:
    vx, vy, vz = s[3], s[4], s[5]
    qw, qx, qy, qz = s[6], s[7], s[8], s[9]
    wx, wy, wz = s[10], s[11], s[12]
    w0, w1, w2, w3 = s[13], s[14], s[15], s[16]

    ct = params.thrust_coeff
    cq = params.torque_coeff
    f0, f1, f2, f3 = ct * w0 * w0, ct * w1 * w1, ct * w2 * w2, ct * w3 * w3
    thrust = f0 + f1 + f2 + f3

    # Thrust acts along body z; rotate to ENU and add gravity plus drag.
    m = params.effective_mass
    tx, ty, tz = quat.rotate((qw, qx, qy, qz), (0.0, 0.0, thrust))
    kd = params.drag_coeff
    ax = (tx - kd * vx) / m
    ay = (ty - kd * vy) / m
    az = (tz - kd * vz) / m - G0

    # Rotor torques from the shared layout, plus the yaw reaction couple.
    forces = (f0, f1, f2, f3)
    taux = tauy = tauz = 0.0
    for (rx, ry, sign), f, w in zip(geometry, forces, (w0, w1, w2, w3)):
        taux += ry * f
        tauy -= rx * f
        tauz += sign * cq * w * w
    ix, iy, iz = params.inertia
    dwx = (taux - (wy * iz * wz - wz * iy * wy)) / ix
    dwy = (tauy - (wz * ix * wx - wx * iz * wz)) / iy
    dwz = (tauz - (wx * iy * wy - wy * ix * wx)) / iz

    # Quaternion kinematics: qdot = 0.5 * q (x) (0, omega_body).
    dqw = 0.5 * (-qx * wx - qy * wy - qz * wz)
    dqx = 0.5 * (qw * wx + qy * wz - qz * wy)
    dqy = 0.5 * (qw * wy - qx * wz + qz * wx)
    dqz = 0.5 * (qw * wz + qx * wy - qy * wx)

    inv_tau = 1.0 / params.rotor_time_constant
    return (
        vx, vy, vz,
        ax, ay, az,
        dqw, dqx, dqy, dqz,
        dwx, dwy, dwz,
        (commanded[0] - w0) * inv_tau,
        (commanded[1] - w1) * inv_tau,
        (commanded[2] - w2) * inv_tau,
        (commanded[3] - w3) * inv_tau,
    )


def derivatives(
    state: VehicleState,
    commanded_rotor_speeds: tuple[float, float, float, float],
    params: VehicleParameters,
) -> VehicleState:
    """Time derivative of every state field (returned in a VehicleState shell)."""
    d = _flat_derivative(state._flat(), commanded_rotor_speeds, params, rotor_layout(params))
    return VehicleState._from_flat(d)


def integrate_step(
    state: VehicleState,
    commanded_rotor_speeds: tuple[float, float, float, float],
    params: VehicleParameters,
    dt: float,
) -> VehicleState:
    """One RK4 step, quaternion renormalization, and ground-contact clamp."""
    if not (0.0 < dt <= 2e-3):
        raise ValueError(f"dt must be in (0, 2 ms], got {dt}")
    geometry = rotor_layout(params)
    s0 = state._flat()

    k1 = _flat_derivative(s0, commanded_rotor_speeds, params, geometry)
    s1 = tuple(a + 0.5 * dt * b for a, b in zip(s0, k1))
    k2 = _flat_derivative(s1, commanded_rotor_speeds, params, geometry)
    s2 = tuple(a + 0.5 * dt * b for a, b in zip(s0, k2))
    k3 = _flat_derivative(s2, commanded_rotor_speeds, params, geometry)
    s3 = tuple(a + dt * b for a, b in zip(s0, k3))
    k4 = _flat_derivative(s3, commanded_rotor_speeds, params, geometry)

    sixth = dt / 6.0
    out = list(
        a + sixth * (b + 2.0 * (c + d) + e)
        for a, b, c, d, e in zip(s0, k1, k2, k3, k4)
    )

    qn = math.sqrt(out[6] ** 2 + out[7] ** 2 + out[8] ** 2 + out[9] ** 2)
    if qn == 0.0 or not math.isfinite(qn):
        raise NumericalAbort("integrator", "attitude quaternion degenerated")
    out[6] /= qn
    out[7] /= qn
    out[8] /= qn
    out[9] /= qn

    # Ground contact: hold altitude at zero and kill downward velocity.
    if out[2] <= 0.0:
        out[2] = 0.0
        if out[5] < 0.0:
            out[5] = 0.0

    if not all(math.isfinite(v) for v in out):
        raise NumericalAbort("integrator", "state contains non-finite values")
    return VehicleState._from_flat(tuple(out))


@dataclass(frozen=True)
class MeasurementNoise:
    """Zero-mean Gaussian measurement noise; disabled by default."""

    enabled: bool = False
    position_std: float = 0.0
    velocity_std: float = 0.0
    attitude_std: float = 0.0  # rad, small-angle rotation perturbation
    rate_std: float = 0.0


@dataclass(frozen=True)
class Measurement:
    position: Vec3
    velocity: Vec3
    attitude: quat.Quat
    angular_rate: Vec3


def measure(
    state: VehicleState,
    noise: MeasurementNoise | None = None,
    rng: np.random.Generator | None = None,
) -> Measurement:
    """Sensor bundle: ground truth, optionally perturbed by Gaussian noise.

    With a fixed-seed generator the stream is reproducible; with noise off
    the measurement is exactly the state.
    """
    if noise is None or not noise.enabled:
        return Measurement(state.position, state.velocity, state.attitude, state.angular_rate)
    if rng is None:
        raise ValueError("noise enabled but no random generator supplied")
    pos = tuple(p + rng.normal(0.0, noise.position_std) for p in state.position)
    vel = tuple(v + rng.normal(0.0, noise.velocity_std) for v in state.velocity)
    rate = tuple(w + rng.normal(0.0, noise.rate_std) for w in state.angular_rate)
    rot = rng.normal(0.0, noise.attitude_std, 3)
    angle = float(np.linalg.norm(rot))
    att = state.attitude
    if angle > 0.0:
        att = quat.normalize(
            quat.multiply(state.attitude, quat.from_axis_angle(tuple(rot), angle))
        )
    return Measurement(pos, vel, att, rate)
