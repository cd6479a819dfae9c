"""Conversions between the serial (ankle roll/pitch) and parallel (motor) views.

Torques map by virtual work: ``tau_s = J^T tau_p`` whenever ``q_dot = J chi_dot``.
Going the other way needs ``J^-T`` and therefore a non-singular ``J``.
States map through the analytic inverse solution in one direction and the
Newton forward solution in the other.

Sign conventions: a positive motor torque drives ``q_i`` positive; ankle
torques are ordered (roll, pitch) like ``chi = (phi, theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SingularConfiguration
from .geometry import AnkleGeometry, AnklePose
from .kinematics import (
    NEAR_SINGULAR_DET,
    MotorState,
    _check_denominators,
    _det2,
    _matTvec2,
    _solve2,
    fk_position,
    jacobian_batch,
    motor_state,
)


@dataclass(frozen=True)
class SerialAnkleCmd:
    """Ankle-space command: torque about (roll, pitch), or a pose target."""

    tau_s: Optional[np.ndarray] = None
    chi_des: Optional[np.ndarray] = None
    chi_dot_des: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ParallelAnkleCmd:
    """Motor-space command.

    ``ok`` is False when the mapping that produced it failed and ``tau_p`` is a
    fallback value.
    """

    tau_p: np.ndarray
    q_des: Optional[np.ndarray] = None
    q_dot_des: Optional[np.ndarray] = None
    ok: bool = True


def serial_torque_from_parallel(J, tau_p) -> np.ndarray:
    """``tau_s = J^T tau_p``; works on stacks of (..., 2, 2) / (..., 2)."""
    return _matTvec2(np.asarray(J, dtype=float), np.asarray(tau_p, dtype=float))


def _transpose(J):
    return np.swapaxes(J, -1, -2)


def parallel_torque_batch(J, tau_s):
    """``tau_p = J^-T tau_s`` with a per-entry guard; returns ``(tau_p, ok)``.

    Entries with ``|det J| <= 1e-8`` get ``tau_p = 0`` and ``ok = False``.
    """
    J = np.asarray(J, dtype=float)
    tau_s = np.asarray(tau_s, dtype=float)
    ok = np.abs(_det2(J)) > NEAR_SINGULAR_DET
    with np.errstate(divide="ignore", invalid="ignore"):
        tau_p = _solve2(_transpose(J), tau_s)
    return np.where(ok[..., None], tau_p, 0.0), ok


def parallel_torque_from_serial(J, tau_s) -> np.ndarray:
    """``tau_p = J^-T tau_s``, the torque-equivalence route.

    Raises:
        SingularConfiguration: ``|det J| <= 1e-8``; no motor torque realises
            the requested ankle torque.
    """
    J = np.asarray(J, dtype=float).reshape(2, 2)
    det = _det2(J)
    if not abs(det) > NEAR_SINGULAR_DET:
        raise SingularConfiguration(f"|det J| = {abs(det):.3e} is too small to invert the torque map")
    tau_p, _ = parallel_torque_batch(J[None], np.asarray(tau_s, dtype=float).reshape(1, 2))
    return tau_p[0]


def state_serial_to_parallel(geom: AnkleGeometry, pose, rates, prev: Optional[MotorState] = None) -> MotorState:
    """Motor position, rate and acceleration for an ankle state (position equivalence)."""
    return motor_state(geom, pose, rates, prev)


def state_parallel_to_serial(geom: AnkleGeometry, q, q_dot, guess=None) -> tuple[AnklePose, np.ndarray]:
    """Ankle pose and rate from measured motor state: ``chi = fk(q)``, ``chi_dot = J^-1 q_dot``.

    Raises:
        NoConvergence: forward kinematics failed.
        SingularConfiguration: ``J`` cannot be inverted at the recovered pose.
    """
    q = np.asarray(q, dtype=float).reshape(2)
    pose = fk_position(geom, q, guess)
    chi = pose.as_array()
    J, denom = jacobian_batch(geom, chi[None, :], q[None, :])
    _check_denominators(denom[0], chi)
    det = _det2(J[0])
    if not abs(det) > NEAR_SINGULAR_DET:
        raise SingularConfiguration(f"|det J| = {abs(det):.3e} at chi=({chi[0]:.6g}, {chi[1]:.6g})")
    chi_dot = _solve2(J, np.asarray(q_dot, dtype=float).reshape(1, 2))[0]
    return pose, chi_dot
