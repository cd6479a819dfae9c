"""Two-DoF rigid footplate integrated in ankle (roll, pitch) space.

Motors are ideal torque sources; their torques reach the plant only as
``tau_ankle = J^T tau_p``, computed by the caller. Gravity is a small-angle
model ``g(chi) = stiffness * chi + bias``; the bias stands for the constant
load the foot carries and is what makes an unactuated ankle sag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged
from .geometry import AnklePose

MAX_RATE = 50.0  # rad/s


@dataclass(frozen=True)
class GravityTorque:
    stiffness: tuple[float, float] = (2.0, 2.5)  # N m / rad
    bias: tuple[float, float] = (0.2, 0.6)  # N m

    def __call__(self, chi) -> np.ndarray:
        return np.asarray(self.stiffness) * chi + np.asarray(self.bias)

    @classmethod
    def off(cls) -> "GravityTorque":
        return cls((0.0, 0.0), (0.0, 0.0))


@dataclass(frozen=True)
class PlantParams:
    """Physical and timing constants of the simulated ankle.

    Attributes:
        inertia: diagonal inertia about roll and pitch, kg m^2.
        damping: viscous joint damping, N m s / rad.
        gravity_torque: pose-dependent load torque.
        dt_physics: integration step, s.
        dt_control: policy period, s (100 Hz by default).
    """

    inertia: tuple[float, float] = (0.02, 0.03)
    damping: tuple[float, float] = (0.05, 0.05)
    gravity_torque: GravityTorque = field(default_factory=GravityTorque)
    dt_physics: float = 1e-3
    dt_control: float = 0.01

    def __post_init__(self):
        if not all(np.isfinite(self.inertia)) or min(self.inertia) <= 0:
            raise ValueError(f"inertia must be positive, got {self.inertia}")
        if min(self.damping) < 0:
            raise ValueError(f"damping must be non-negative, got {self.damping}")
        if not 0 < self.dt_physics <= self.dt_control:
            raise ValueError(f"need 0 < dt_physics <= dt_control, got {self.dt_physics}, {self.dt_control}")

    @property
    def substeps(self) -> int:
        """Physics steps per control tick."""
        n = int(round(self.dt_control / self.dt_physics))
        if n < 1 or abs(n * self.dt_physics - self.dt_control) > 1e-9 * self.dt_control:
            raise ValueError("dt_control must be an integer multiple of dt_physics")
        return n


@dataclass(frozen=True)
class PlantState:
    pose: AnklePose
    chi_dot: np.ndarray
    t: float = 0.0

    @classmethod
    def at_rest(cls, chi=(0.0, 0.0), t: float = 0.0) -> "PlantState":
        return cls(AnklePose(float(chi[0]), float(chi[1])), np.zeros(2), t)


def plant_step_batch(chi, chi_dot, params: PlantParams, tau_ankle):
    """One semi-implicit Euler step on arrays shaped (..., 2).

    Returns ``(chi, chi_dot, diverged)``; ``diverged`` flags entries whose
    rate magnitude exceeds 50 rad/s after the step.
    """
    inertia = np.asarray(params.inertia)
    damping = np.asarray(params.damping)
    chi_ddot = (tau_ankle - damping * chi_dot - params.gravity_torque(chi)) / inertia
    chi_dot = chi_dot + chi_ddot * params.dt_physics
    chi = chi + chi_dot * params.dt_physics
    diverged = ~np.all(np.abs(chi_dot) <= MAX_RATE, axis=-1)
    return chi, chi_dot, diverged


def plant_step(state: PlantState, params: PlantParams, tau_ankle) -> PlantState:
    """Advance the footplate by ``dt_physics`` under ankle torque ``tau_ankle``.

    Raises:
        Diverged: a rate component exceeds 50 rad/s.
    """
    tau = np.asarray(tau_ankle, dtype=float).reshape(2)
    if not np.all(np.isfinite(tau)):
        raise ValueError(f"non-finite ankle torque {tau}")
    chi, chi_dot, diverged = plant_step_batch(
        state.pose.as_array()[None, :], np.asarray(state.chi_dot, dtype=float)[None, :], params, tau[None, :]
    )
    if diverged[0]:
        raise Diverged(f"ankle rate {chi_dot[0]} exceeds {MAX_RATE} rad/s at t={state.t + params.dt_physics:.4f}")
    return PlantState(AnklePose.from_array(chi[0]), chi_dot[0], state.t + params.dt_physics)


def plant_energy(state: PlantState, params: PlantParams) -> float:
    """Kinetic plus spring energy of the restoring part of the gravity model."""
    chi = state.pose.as_array()
    k = np.asarray(params.gravity_torque.stiffness)
    return float(0.5 * np.sum(np.asarray(params.inertia) * state.chi_dot**2) + 0.5 * np.sum(k * chi**2))


def inject_encoder_noise(q, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise of standard deviation ``sigma``.

    ``sigma = 0`` returns ``q`` unchanged and draws nothing from ``rng``.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    q = np.asarray(q, dtype=float)
    if sigma == 0:
        return q.copy()
    return q + rng.normal(0.0, sigma, size=q.shape)
