"""Cascaded quadcopter autopilot with fixed or adaptive gains.

Control chain (PX4-style), all loops decoupled per axis:

    position P (50 Hz) -> velocity PID (50 Hz) -> thrust vector setpoint
      -> attitude setpoint (quaternion) -> attitude P (250 Hz)
      -> body-rate PID+FF (1 kHz) -> moment setpoint -> mixer -> rotors

There are 27 scalar gains: 3 position, 9 velocity, 3 attitude, 12 rate.
Every scalar is one SISO channel that can either hold a fixed gain or be
tuned online by the retrospective-cost law; both modes run the exact same
channel arithmetic, so tracking comparisons between them are fair.

Sign convention: each channel consumes the *negated* loop error
(measurement minus setpoint) and, for the rate loop, the negated rate
setpoint as its feedforward regressor entry.  With that wiring the
control-to-error transfer seen by every channel has positive sign, which is
what the adaptation law's sigma = +1 convention requires; stable gains come
out negative.  The stateless helpers (:func:`position_loop`,
:func:`attitude_loop`) keep the conventional setpoint-minus-measurement
form with positive gains; the sign lives in the wiring, not the algebra.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import quat
from .errors import ConfigError, NumericalAbort
from .rcac import (
    AdaptiveGainState,
    ControllerStructure,
    Normalization,
    RcacHyperparameters,
    build_regressor,
    compute_control,
    initial_state,
    rcac_update,
    record_step,
)
from .vehicle import G0, Measurement, VehicleParameters, rotor_layout

Vec3 = tuple[float, float, float]

__all__ = [
    "BLOCKS",
    "AXES",
    "DEFAULT_HYPER_TABLE",
    "GainSet",
    "GainChannel",
    "SetpointBundle",
    "ActuatorCommand",
    "Mixer",
    "Autopilot",
    "position_loop",
    "attitude_error_vector",
    "attitude_loop",
    "attitude_setpoint",
    "default_gains",
    "zero_gains",
]

# Controller blocks: name -> (structure, error normalization).
BLOCKS: dict[str, tuple[ControllerStructure, Normalization]] = {
    "gr": (ControllerStructure.P, Normalization.IDENTITY),
    "gv": (ControllerStructure.PID, Normalization.SCALED_ERF),
    "gq": (ControllerStructure.P, Normalization.IDENTITY),
    "gw": (ControllerStructure.PID_FF, Normalization.SCALED_ERF),
}
AXES = ("x", "y", "z")

# Adaptation hyperparameters per block (sigma = rz = 1 everywhere).
DEFAULT_HYPER_TABLE: dict[str, RcacHyperparameters] = {
    "gr": RcacHyperparameters(p0=0.01, ru=0.01, normalization=Normalization.IDENTITY),
    "gv": RcacHyperparameters(p0=0.1, ru=0.01, normalization=Normalization.SCALED_ERF),
    "gq": RcacHyperparameters(p0=1.0, ru=0.001, normalization=Normalization.IDENTITY),
    "gw": RcacHyperparameters(p0=0.0001, ru=0.1, normalization=Normalization.SCALED_ERF),
}

_DATA_DIR = Path(__file__).parent / "data"


@dataclass
class GainSet:
    """The 27 autopilot gains, grouped by controller block.

    Gains are stored in the channel sign convention described in the module
    docstring (stable values are negative).  ``steps`` carries the per
    channel update counts when the set is an adaptation snapshot.
    """

    gr: tuple[float, float, float]
    gv: tuple[tuple[float, float, float], ...]
    gq: tuple[float, float, float]
    gw: tuple[tuple[float, float, float, float], ...]
    mode: str = "fixed_default"
    steps: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in ("fixed_default", "adaptive"):
            raise ConfigError(f"unknown gain mode {self.mode!r}")
        self.gr = tuple(float(v) for v in self.gr)
        self.gq = tuple(float(v) for v in self.gq)
        self.gv = tuple(tuple(float(v) for v in row) for row in self.gv)
        self.gw = tuple(tuple(float(v) for v in row) for row in self.gw)
        if len(self.gr) != 3 or len(self.gq) != 3:
            raise ConfigError("gr and gq must hold 3 gains each")
        if len(self.gv) != 3 or any(len(r) != 3 for r in self.gv):
            raise ConfigError("gv must hold 3 axes of 3 gains")
        if len(self.gw) != 3 or any(len(r) != 4 for r in self.gw):
            raise ConfigError("gw must hold 3 axes of 4 gains")

    def block(self, name: str, axis: int) -> tuple[float, ...]:
        values = getattr(self, name)[axis]
        return (values,) if isinstance(values, float) else tuple(values)

    def flat(self) -> list[float]:
        """All 27 gains in canonical order: gr, gv, gq, gw (axis-major)."""
        out: list[float] = list(self.gr)
        for row in self.gv:
            out.extend(row)
        out.extend(self.gq)
        for row in self.gw:
            out.extend(row)
        return out

    def to_json_dict(self) -> dict:
        controllers = []
        for name, (structure, _) in BLOCKS.items():
            for axis in range(3):
                controllers.append(
                    {
                        "controller": name,
                        "axis": AXES[axis],
                        "structure": structure.name,
                        "theta": list(self.block(name, axis)),
                        "steps": self.steps.get(f"{name}_{AXES[axis]}", 0),
                    }
                )
        return {"mode": self.mode, "controllers": controllers}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GainSet":
        try:
            rows: dict[str, dict[int, list[float]]] = {n: {} for n in BLOCKS}
            steps: dict[str, int] = {}
            for rec in doc["controllers"]:
                name = rec["controller"]
                axis = AXES.index(rec["axis"])
                expected = BLOCKS[name][0]
                if rec.get("structure", expected.name) != expected.name:
                    raise ConfigError(
                        f"controller {name} expects structure {expected.name}, "
                        f"got {rec.get('structure')}"
                    )
                theta = [float(v) for v in rec["theta"]]
                if len(theta) != expected.gain_count:
                    raise ConfigError(
                        f"controller {name} expects {expected.gain_count} gains, got {len(theta)}"
                    )
                rows[name][axis] = theta
                steps[f"{name}_{rec['axis']}"] = int(rec.get("steps", 0))
            return cls(
                gr=tuple(rows["gr"][a][0] for a in range(3)),
                gv=tuple(tuple(rows["gv"][a]) for a in range(3)),
                gq=tuple(rows["gq"][a][0] for a in range(3)),
                gw=tuple(tuple(rows["gw"][a]) for a in range(3)),
                mode=doc.get("mode", "fixed_default"),
                steps=steps,
            )
        except (KeyError, IndexError, ValueError) as exc:
            raise ConfigError(f"malformed gain document: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GainSet":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"gain file not found: {path}")
        try:
            return cls.from_json_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"gain file {path} is not valid JSON: {exc}") from exc


def zero_gains(mode: str = "adaptive") -> GainSet:
    """All-zero gain set: the starting point of every autotune flight."""
    return GainSet(
        gr=(0.0,) * 3,
        gv=((0.0,) * 3,) * 3,
        gq=(0.0,) * 3,
        gw=((0.0,) * 4,) * 3,
        mode=mode,
    )


def default_gains() -> GainSet:
    """Fixed default gain set shipped with the package."""
    return GainSet.load(_DATA_DIR / "default_gains.json")


class GainChannel:
    """One SISO control channel: one gain vector, one error input.

    In fixed mode the gain vector never changes; in adaptive mode every step
    first refreshes the gains with the retrospective-cost update, then
    computes the control with the refreshed gains.  Output clamping is done
    inside the channel so that the stored applied control (which the next
    update pairs with the resulting error) matches what the plant received,
    and so the integrator can freeze while saturated.
    """

    __slots__ = ("name", "adaptive", "hyper", "state", "lo", "hi")

    def __init__(
        self,
        name: str,
        structure: ControllerStructure,
        hyper: RcacHyperparameters,
        theta0=None,
        adaptive: bool = False,
        lo: float = -math.inf,
        hi: float = math.inf,
    ):
        self.name = name
        self.adaptive = adaptive
        self.hyper = hyper
        self.state: AdaptiveGainState = initial_state(structure, hyper, theta0)
        self.lo = lo
        self.hi = hi

    @property
    def theta(self) -> np.ndarray:
        return self.state.theta

    def step(self, z: float, feedforward: float = 0.0) -> float:
        phi = build_regressor(self.state, feedforward)
        if self.adaptive and self.state.step >= 1:
            self.state = rcac_update(self.state, z, self.hyper, feedforward)
        u = compute_control(self.state, phi)
        u_applied = min(max(u, self.lo), self.hi)
        self.state = record_step(
            self.state, z, phi, u_applied, self.hyper,
            freeze_integrator=(u_applied != u),
        )
        return u_applied


# ---------------------------------------------------------------------------
# Stateless loop helpers (conventional sign: error = setpoint - measurement).


def position_loop(
    position_error: Vec3,
    gains: Vec3,
    velocity_ff: Vec3 = (0.0, 0.0, 0.0),
) -> Vec3:
    """Per-axis proportional velocity command plus the guidance feedforward."""
    return tuple(g * e + f for g, e, f in zip(gains, position_error, velocity_ff))


def attitude_error_vector(attitude_sp: quat.Quat, attitude: quat.Quat) -> Vec3:
    """Twice the vector part of the shortest-path error quaternion.

    The sign factor on the scalar part picks the short way around, making
    the result invariant under quaternion sign flips; for small errors each
    component approximates the rotation angle about that body axis.
    """
    qe = quat.multiply(quat.conjugate(attitude), attitude_sp)
    s = 1.0 if qe[0] >= 0.0 else -1.0
    return (2.0 * s * qe[1], 2.0 * s * qe[2], 2.0 * s * qe[3])


def attitude_loop(attitude_sp: quat.Quat, attitude: quat.Quat, gains: Vec3) -> Vec3:
    """Proportional body-rate setpoint from the quaternion attitude error."""
    err = attitude_error_vector(attitude_sp, attitude)
    return (gains[0] * err[0], gains[1] * err[1], gains[2] * err[2])


def attitude_setpoint(
    thrust_vector_sp: Vec3,
    azimuth_sp: float,
    previous: quat.Quat = quat.IDENTITY,
    min_thrust: float = 1e-6,
) -> tuple[quat.Quat, float, bool]:
    """Attitude quaternion and collective thrust from a world-frame thrust vector.

    The desired body z axis is the thrust direction and the body x axis is
    chosen so its horizontal projection points along ``azimuth_sp``.  A
    near-zero thrust request holds the previous setpoint and reports the
    fallback in the third return value.
    """
    tx, ty, tz = thrust_vector_sp
    n = math.sqrt(tx * tx + ty * ty + tz * tz)
    if n < min_thrust:
        return previous, 0.0, True
    zb = (tx / n, ty / n, tz / n)
    xc = (math.cos(azimuth_sp), math.sin(azimuth_sp), 0.0)
    yb = (
        zb[1] * xc[2] - zb[2] * xc[1],
        zb[2] * xc[0] - zb[0] * xc[2],
        zb[0] * xc[1] - zb[1] * xc[0],
    )
    yn = math.sqrt(yb[0] ** 2 + yb[1] ** 2 + yb[2] ** 2)
    if yn < 1e-8:
        # Thrust parallel to the heading: fall back to the heading's y axis.
        yb = (-math.sin(azimuth_sp), math.cos(azimuth_sp), 0.0)
        yn = 1.0
    yb = (yb[0] / yn, yb[1] / yn, yb[2] / yn)
    xb = (
        yb[1] * zb[2] - yb[2] * zb[1],
        yb[2] * zb[0] - yb[0] * zb[2],
        yb[0] * zb[1] - yb[1] * zb[0],
    )
    r = [
        [xb[0], yb[0], zb[0]],
        [xb[1], yb[1], zb[1]],
        [xb[2], yb[2], zb[2]],
    ]
    return quat.from_rotation_matrix(r), n, False


@dataclass(frozen=True)
class ActuatorCommand:
    rotor_speeds: tuple[float, float, float, float]  # rad/s
    saturated: tuple[bool, bool, bool, bool]


class Mixer:
    """Quad-X control allocation with thrust-priority desaturation.

    Solves thrust plus three moments for the four squared rotor speeds; when
    a request leaves the actuator envelope the moment vector is scaled down
    uniformly before collective thrust is touched.
    """

    def __init__(self, params: VehicleParameters):
        geometry = rotor_layout(params)
        ct = params.thrust_coeff
        cq = params.torque_coeff
        a = np.zeros((4, 4))
        for i, (rx, ry, sign) in enumerate(geometry):
            a[0, i] = ct
            a[1, i] = ry * ct
            a[2, i] = -rx * ct
            a[3, i] = sign * cq
        self.allocation = a
        self._inv = np.linalg.inv(a)
        self._ct = ct
        self._u_max = params.rotor_speed_max**2

    def forward(self, rotor_speeds) -> tuple[float, Vec3]:
        """Thrust and moment produced by the given rotor speeds."""
        u = np.square(np.asarray(rotor_speeds, dtype=float))
        t, mx, my, mz = self.allocation @ u
        return float(t), (float(mx), float(my), float(mz))

    def mix(self, thrust: float, moment_sp: Vec3) -> ActuatorCommand:
        if thrust < 0.0:
            thrust = 0.0
        u = self._inv @ np.array([thrust, *moment_sp])
        base_raw = thrust / (4.0 * self._ct)  # per-rotor share of pure thrust
        saturated = [bool(ui < -1e-9 or ui > self._u_max + 1e-9) for ui in u]

        base = base_raw
        thrust_clipped = base_raw > self._u_max
        if thrust_clipped:
            base = self._u_max
            saturated = [True, True, True, True]

        # Uniformly scale the moment contribution until all rotors fit.
        scale = 1.0
        for ui in u:
            delta = float(ui) - base_raw
            if delta > 1e-12:
                scale = min(scale, (self._u_max - base) / delta)
            elif delta < -1e-12:
                scale = min(scale, base / -delta)
        scale = max(0.0, min(1.0, scale))

        if scale < 1.0 or thrust_clipped:
            u = base + scale * (u - base_raw)
        speeds = tuple(math.sqrt(max(0.0, float(ui))) for ui in u)
        return ActuatorCommand(rotor_speeds=speeds, saturated=tuple(saturated))


@dataclass
class SetpointBundle:
    """Every setpoint flowing between loops, refreshed at each loop's rate."""

    position_sp: Vec3 = (0.0, 0.0, 0.0)
    velocity_sp: Vec3 = (0.0, 0.0, 0.0)
    azimuth_sp: float = 0.0
    azimuth_rate_sp: float = 0.0
    thrust_vector_sp: Vec3 = (0.0, 0.0, 0.0)
    collective_thrust: float = 0.0
    attitude_sp: quat.Quat = quat.IDENTITY
    rate_sp: Vec3 = (0.0, 0.0, 0.0)
    moment_sp: Vec3 = (0.0, 0.0, 0.0)
    attitude_fallback: bool = False


class Autopilot:
    """Multirate cascaded controller driving one simulated vehicle.

    Position and velocity loops run at the base rate divided by
    ``position_divisor`` (50 Hz at a 1 kHz base), the attitude loop at the
    base rate divided by ``attitude_divisor`` (250 Hz), and the rate loop
    every tick.  Outputs are held between executions.  In adaptive mode the
    twelve channels update their gains at their own loop's rate.
    """

    def __init__(
        self,
        params: VehicleParameters,
        gains: GainSet,
        hyper_table: dict[str, RcacHyperparameters] | None = None,
        position_divisor: int = 20,
        attitude_divisor: int = 4,
        velocity_sp_limit: float = 10.0,
        rate_sp_limit: float = 5.0,
    ):
        self.params = params
        self.adaptive = gains.mode == "adaptive"
        self.hyper = dict(DEFAULT_HYPER_TABLE if hyper_table is None else hyper_table)
        self.position_divisor = position_divisor
        self.attitude_divisor = attitude_divisor
        self.mixer = Mixer(params)

        # Channel output scaling: velocity channels command thrust as a
        # fraction of nominal hover thrust, rate channels command moment as a
        # fraction of the per-axis envelope.  The hover feedforward always
        # uses the nominal mass, so mass-scale mismatch lands on the channels.
        self.thrust_scale = params.mass * G0
        self.moment_scale = params.moment_limits()
        max_norm = params.max_thrust / self.thrust_scale

        def make(block: str, axis: int, lo: float, hi: float) -> GainChannel:
            structure, _ = BLOCKS[block]
            return GainChannel(
                name=f"{block}_{AXES[axis]}",
                structure=structure,
                hyper=self.hyper[block],
                theta0=gains.block(block, axis),
                adaptive=self.adaptive,
                lo=lo,
                hi=hi,
            )

        self.gr = [make("gr", i, -velocity_sp_limit, velocity_sp_limit) for i in range(3)]
        self.gv = [
            make("gv", 0, -0.5 * max_norm, 0.5 * max_norm),
            make("gv", 1, -0.5 * max_norm, 0.5 * max_norm),
            make("gv", 2, -1.0, max_norm - 1.0),
        ]
        self.gq = [make("gq", i, -rate_sp_limit, rate_sp_limit) for i in range(3)]
        self.gw = [make("gw", i, -1.0, 1.0) for i in range(3)]

        self.setpoints = SetpointBundle(
            thrust_vector_sp=(0.0, 0.0, self.thrust_scale),
            collective_thrust=self.thrust_scale,
        )
        self.position_error: Vec3 = (0.0, 0.0, 0.0)
        self.velocity_error: Vec3 = (0.0, 0.0, 0.0)
        self.tick = 0

    def _channels(self) -> list[GainChannel]:
        return [*self.gr, *self.gv, *self.gq, *self.gw]

    def gain_values(self) -> list[float]:
        """Current 27 gains in the canonical gr, gv, gq, gw order."""
        out: list[float] = [float(c.theta[0]) for c in self.gr]
        for c in self.gv:
            out.extend(float(v) for v in c.theta)
        out.extend(float(c.theta[0]) for c in self.gq)
        for c in self.gw:
            out.extend(float(v) for v in c.theta)
        return out

    def snapshot(self, mode: str = "fixed_default") -> GainSet:
        """Freeze the current gains (with step counts) into a GainSet."""
        steps = {c.name: c.state.step for c in self._channels()}
        return GainSet(
            gr=tuple(float(c.theta[0]) for c in self.gr),
            gv=tuple(tuple(float(v) for v in c.theta) for c in self.gv),
            gq=tuple(float(c.theta[0]) for c in self.gq),
            gw=tuple(tuple(float(v) for v in c.theta) for c in self.gw),
            mode=mode,
            steps=steps,
        )

    @staticmethod
    def _check(block: str, values) -> None:
        for v in values:
            if not math.isfinite(v):
                raise NumericalAbort(block)

    def step(
        self,
        meas: Measurement,
        position_sp: Vec3,
        velocity_ff: Vec3,
        azimuth_sp: float,
        azimuth_rate_sp: float,
    ) -> ActuatorCommand:
        sp = self.setpoints

        if self.tick % self.position_divisor == 0:
            sp.position_sp = position_sp
            sp.azimuth_sp = azimuth_sp
            self.position_error = tuple(
                s - m for s, m in zip(position_sp, meas.position)
            )
            v_cmd = tuple(
                ch.step(m - s)  # channel frame: measurement - setpoint
                for ch, s, m in zip(self.gr, position_sp, meas.position)
            )
            self._check("position_loop", v_cmd)
            sp.velocity_sp = tuple(v + f for v, f in zip(v_cmd, velocity_ff))

            self.velocity_error = tuple(
                s - m for s, m in zip(sp.velocity_sp, meas.velocity)
            )
            u = tuple(
                ch.step(m - s)
                for ch, s, m in zip(self.gv, sp.velocity_sp, meas.velocity)
            )
            self._check("velocity_loop", u)
            sp.thrust_vector_sp = (
                self.thrust_scale * u[0],
                self.thrust_scale * u[1],
                self.thrust_scale * (u[2] + 1.0),
            )

            q_sp, collective, fallback = attitude_setpoint(
                sp.thrust_vector_sp, azimuth_sp, previous=sp.attitude_sp
            )
            self._check("attitude_setpoint", q_sp)
            sp.attitude_sp = q_sp
            sp.collective_thrust = collective
            sp.attitude_fallback = fallback

        if self.tick % self.attitude_divisor == 0:
            sp.azimuth_rate_sp = azimuth_rate_sp
            err = attitude_error_vector(sp.attitude_sp, meas.attitude)
            w_cmd = tuple(ch.step(-e) for ch, e in zip(self.gq, err))
            self._check("attitude_loop", w_cmd)
            sp.rate_sp = (w_cmd[0], w_cmd[1], w_cmd[2] + azimuth_rate_sp)

        m_norm = tuple(
            ch.step(m - s, -s)
            for ch, s, m in zip(self.gw, sp.rate_sp, meas.angular_rate)
        )
        self._check("rate_loop", m_norm)
        sp.moment_sp = tuple(s * m for s, m in zip(self.moment_scale, m_norm))

        command = self.mixer.mix(sp.collective_thrust, sp.moment_sp)
        self._check("mixer", command.rotor_speeds)
        self.tick += 1
        return command
