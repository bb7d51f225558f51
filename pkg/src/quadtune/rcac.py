"""Retrospective-cost gain adaptation for SISO PID-family controllers.

A single adaptive instance tunes the gain vector ``theta`` of one scalar
control channel

    u_k = Kp * g(z_{k-1}) + Ki * gamma_{k-1} + Kd * (g(z_{k-1}) - g(z_{k-2}))
        + Kff * r_k
        = phi_k . theta_k

where ``z`` is the channel error, ``r`` a feedforward signal, ``g`` an
error-normalization function and ``gamma`` the running sum of normalized
errors.  The update recursively minimizes a retrospective cost: at every
step the candidate gains are scored by the error that *would* have resulted
had they produced the past controls, plus a control penalty and a
regularization toward the initial gains.  The recursion is an exact
recursive-least-squares solution of that cost, so the covariance matrix
contracts monotonically and the gain iterate equals the batch minimizer at
every step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ControllerStructure",
    "Normalization",
    "RcacHyperparameters",
    "AdaptiveGainState",
    "NumericalConditioningError",
    "normalize_error",
    "initial_state",
    "build_regressor",
    "compute_control",
    "rcac_update",
    "record_step",
    "retrospective_cost",
]

# Slope of the scaled error function: d/dz erf(ERF_SCALE * z) at z=0 is 1.
ERF_SCALE = math.sqrt(math.pi) / 2.0


class ControllerStructure(enum.Enum):
    """Which entries of the full [P, I, D, FF] parameterization are active."""

    P = 1
    PID = 3
    PID_FF = 4

    @property
    def gain_count(self) -> int:
        return self.value


class Normalization(enum.Enum):
    IDENTITY = "identity"
    SCALED_ERF = "scaled_erf"


class NumericalConditioningError(RuntimeError):
    """Covariance update hit a singular or non-finite innovation matrix."""


def normalize_error(z: float, normalization: Normalization) -> float:
    """Apply the channel error normalization.

    ``IDENTITY`` returns ``z`` unchanged; ``SCALED_ERF`` returns
    ``erf(sqrt(pi)/2 * z)``, an odd, strictly increasing squashing with unit
    slope at the origin and range (-1, 1).
    """
    if not math.isfinite(z):
        raise ValueError(f"error input must be finite, got {z!r}")
    if normalization is Normalization.IDENTITY:
        return z
    return math.erf(ERF_SCALE * z)


@dataclass(frozen=True)
class RcacHyperparameters:
    """Tuning constants of one adaptive instance.

    ``p0`` scales the initial covariance (P0 * I), ``ru`` weights the control
    penalty, ``rz`` the performance penalty, and ``sigma`` (+1 or -1) must
    match the sign of the control-to-error transfer of the channel.
    """

    p0: float
    ru: float
    rz: float = 1.0
    sigma: float = 1.0
    normalization: Normalization = Normalization.IDENTITY

    def __post_init__(self) -> None:
        if not (self.p0 > 0.0):
            raise ValueError(f"p0 must be positive, got {self.p0}")
        if not (self.rz > 0.0):
            raise ValueError(f"rz must be positive, got {self.rz}")
        if self.ru < 0.0:
            raise ValueError(f"ru must be nonnegative, got {self.ru}")
        if self.sigma not in (-1.0, 1.0):
            raise ValueError(f"sigma must be +1 or -1, got {self.sigma}")


@dataclass
class AdaptiveGainState:
    """Mutable state of one adaptive instance at step k.

    ``gamma`` holds the integrator sum of g(z) through step k-1, and
    ``g_prev``/``g_prev2`` hold g(z_{k-1}) and g(z_{k-2}), i.e. exactly the
    quantities the step-k regressor needs.  ``prev_regressor`` and
    ``prev_control`` are the regressor and the control actually applied at
    step k-1, which the retrospective update pairs with the fresh error.
    """

    structure: ControllerStructure
    theta: np.ndarray
    covariance: np.ndarray
    gamma: float = 0.0
    g_prev: float = 0.0
    g_prev2: float = 0.0
    prev_regressor: np.ndarray = field(default=None)  # type: ignore[assignment]
    prev_control: float = 0.0
    step: int = 0

    def __post_init__(self) -> None:
        n = self.structure.gain_count
        self.theta = np.asarray(self.theta, dtype=float).reshape(n)
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(n, n)
        if self.prev_regressor is None:
            self.prev_regressor = np.zeros(n)


def initial_state(
    structure: ControllerStructure,
    hyper: RcacHyperparameters,
    theta0: np.ndarray | None = None,
) -> AdaptiveGainState:
    """Fresh instance state: theta = theta0 (zero in autotune mode), P = P0*I."""
    n = structure.gain_count
    theta = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    return AdaptiveGainState(
        structure=structure,
        theta=theta,
        covariance=hyper.p0 * np.eye(n),
    )


def build_regressor(state: AdaptiveGainState, feedforward: float = 0.0) -> np.ndarray:
    """Regressor phi_k = [g(z_{k-1}), gamma_{k-1}, g(z_{k-1})-g(z_{k-2}), r_k],
    truncated to the structure's active entries."""
    n = state.structure.gain_count
    full = (
        state.g_prev,
        state.gamma,
        state.g_prev - state.g_prev2,
        feedforward,
    )
    if not all(math.isfinite(v) for v in full[:n]):
        raise ValueError("regressor entries must be finite")
    return np.array(full[:n])


def compute_control(state: AdaptiveGainState, regressor: np.ndarray) -> float:
    """Control u_k = phi_k . theta_k."""
    phi = np.asarray(regressor, dtype=float)
    if phi.shape != state.theta.shape:
        raise ValueError(
            f"regressor length {phi.shape} does not match gain count {state.theta.shape}"
        )
    return float(phi @ state.theta)


def _invert_innovation(s: np.ndarray) -> np.ndarray:
    """Invert the (at most 2x2) innovation matrix with an explicit
    conditioning check so a degenerate update raises instead of emitting NaN."""
    if not np.all(np.isfinite(s)):
        raise NumericalConditioningError("innovation matrix is not finite")
    if s.shape == (1, 1):
        det = s[0, 0]
        if det <= 0.0:
            raise NumericalConditioningError(f"innovation not positive definite: {det}")
        return np.array([[1.0 / det]])
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    if det <= 0.0 or s[0, 0] <= 0.0:
        raise NumericalConditioningError(f"innovation not positive definite: det={det}")
    return np.array([[s[1, 1], -s[0, 1]], [-s[1, 0], s[0, 0]]]) / det


def rcac_update(
    state: AdaptiveGainState,
    z: float,
    hyper: RcacHyperparameters,
    feedforward: float = 0.0,
) -> AdaptiveGainState:
    """One retrospective-cost update of (theta, covariance).

    Pairs the fresh error ``z`` with the stored step k-1 regressor and
    control, stacks the performance row ``sigma*phi_{k-1}`` (weight rz) with
    the control-penalty row ``phi_k`` (weight ru), and performs the exact
    recursive-least-squares step.  With ``ru == 0`` the control row is
    dropped, which is the exact ru -> 0 limit.  The update is skipped at
    step 0, before a previous regressor and control exist.

    History fields (gamma, error memory, previous regressor/control) are not
    advanced here; see :func:`record_step`.
    """
    if state.step < 1:
        return state

    g_z = normalize_error(z, hyper.normalization)
    phi = build_regressor(state, feedforward)
    phi_prev = state.prev_regressor
    p = state.covariance
    sigma = hyper.sigma

    if hyper.ru > 0.0:
        big_phi = np.vstack((sigma * phi_prev, phi))
        rbar_inv = np.diag([1.0 / hyper.rz, 1.0 / hyper.ru])
    else:
        big_phi = (sigma * phi_prev)[np.newaxis, :]
        rbar_inv = np.array([[1.0 / hyper.rz]])

    pphit = p @ big_phi.T
    innovation = rbar_inv + big_phi @ pphit
    gain = pphit @ _invert_innovation(innovation)
    p_new = p - gain @ pphit.T
    p_new = 0.5 * (p_new + p_new.T)

    zhat = g_z + sigma * (float(phi_prev @ state.theta) - state.prev_control)
    theta_new = state.theta - sigma * hyper.rz * zhat * (p_new @ phi_prev)
    if hyper.ru > 0.0:
        theta_new = theta_new - hyper.ru * float(phi @ state.theta) * (p_new @ phi)

    if not (np.all(np.isfinite(theta_new)) and np.all(np.isfinite(p_new))):
        raise NumericalConditioningError("gain update produced non-finite values")

    return replace(state, theta=theta_new, covariance=p_new)


def record_step(
    state: AdaptiveGainState,
    z: float,
    regressor: np.ndarray,
    control: float,
    hyper: RcacHyperparameters,
    freeze_integrator: bool = False,
) -> AdaptiveGainState:
    """Advance the channel history after a control has been applied.

    Pushes g(z) into the error memory, accumulates the integrator (unless
    frozen for anti-windup while the channel output is saturated), and stores
    the applied regressor/control for the next retrospective update.
    """
    g_z = normalize_error(z, hyper.normalization)
    return replace(
        state,
        gamma=state.gamma if freeze_integrator else state.gamma + g_z,
        g_prev2=state.g_prev,
        g_prev=g_z,
        prev_regressor=np.asarray(regressor, dtype=float),
        prev_control=float(control),
        step=state.step + 1,
    )


def retrospective_cost(
    theta: np.ndarray,
    history: list[tuple[np.ndarray, float, float]],
    hyper: RcacHyperparameters,
    theta0: np.ndarray | None = None,
) -> float:
    """Retrospective cost of candidate gains over a recorded transcript.

    ``history`` holds one ``(phi_i, u_i, g_z_i)`` record per step, where
    ``phi_i``/``u_i`` are the regressor and applied control and ``g_z_i`` the
    normalized error measured at step i.  Step i >= 1 contributes

        rz * (g_z_i + sigma * (phi_{i-1} . theta - u_{i-1}))**2
        + ru * (phi_i . theta)**2

    and the total includes the regularizer (theta-theta0)' P0^{-1} (theta-theta0).
    Step 0 only seeds the predecessor pair, mirroring the startup skip of
    :func:`rcac_update`.  This function is the independent scoring rule used
    to validate the recursive update; it is not called by it.
    """
    theta = np.asarray(theta, dtype=float)
    theta0 = np.zeros_like(theta) if theta0 is None else np.asarray(theta0, dtype=float)

    delta = theta - theta0
    cost = float(delta @ delta) / hyper.p0
    for i in range(1, len(history)):
        phi_prev, u_prev, _ = history[i - 1]
        phi_i, _, g_z_i = history[i]
        zhat = g_z_i + hyper.sigma * (float(np.dot(phi_prev, theta)) - u_prev)
        cost += hyper.rz * zhat * zhat
        cost += hyper.ru * float(np.dot(phi_i, theta)) ** 2
    return cost
