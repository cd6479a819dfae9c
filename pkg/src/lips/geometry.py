"""Frames, rotations and linkage constants of one parallel ankle.

Everything is expressed in the shank-fixed frame: origin at the footplate
centre, x forward, y left, z up. The footplate orientation relative to the
shank is ``R = R_Y(theta) @ R_X(phi)`` with ``chi = (phi, theta)`` (roll, pitch).

Side 1 is the +y drive, side 2 the -y drive. Each drive arm of length ``L1``
pivots about a y-parallel shaft at ``B_i = (0, +-r1, a_i)``; its tip ``C_i`` is
joined to the footplate hinge ``P_i`` by a rod of length ``L2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InfeasibleWorkspace, InvalidGeometry, SchemaError

SIDE_SIGNS = np.array([1.0, -1.0])

GEOMETRY_KEYS = ("L1", "L2", "r1", "a1", "a2", "p1_neutral", "p2_neutral", "q_limits", "chi_limits")


@dataclass(frozen=True)
class AnklePose:
    """Footplate posture ``chi = (phi, theta)`` in rad."""

    phi: float = 0.0
    theta: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.theta], dtype=float)

    @classmethod
    def from_array(cls, chi) -> "AnklePose":
        chi = np.asarray(chi, dtype=float).reshape(2)
        return cls(float(chi[0]), float(chi[1]))


@dataclass(frozen=True)
class AnkleRates:
    chi_dot: tuple[float, float] = (0.0, 0.0)
    chi_ddot: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        vals = (*self.chi_dot, *self.chi_ddot)
        if len(vals) != 4 or not all(math.isfinite(v) for v in vals):
            raise ValueError(f"rates must be two finite 2-vectors, got {self.chi_dot}, {self.chi_ddot}")


@dataclass(frozen=True)
class AnkleGeometry:
    """Linkage constants of one parallel ankle (SI units).

    Attributes:
        L1: Active arm length.
        L2: Passive rod length.
        r1: Lateral offset of both drive shafts from the shank plane.
        a1, a2: Drive shaft heights above the footplate centre.
        p1_neutral, p2_neutral: Footplate hinge points at ``chi = 0``.
        q_limits: Allowed motor angle interval, shared by both motors.
        chi_limits: ``((phi_lo, phi_hi), (theta_lo, theta_hi))`` workspace box.
    """

    L1: float
    L2: float
    r1: float
    a1: float
    a2: float
    p1_neutral: tuple[float, float, float]
    p2_neutral: tuple[float, float, float]
    q_limits: tuple[float, float] = (-1.2, 1.2)
    chi_limits: tuple[tuple[float, float], tuple[float, float]] = ((-0.4, 0.4), (-0.7, 0.35))
    # Cached arrays for the vectorised kernels; not part of equality.
    _heights: np.ndarray = field(init=False, repr=False, compare=False)
    _neutral: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "p1_neutral", tuple(float(v) for v in self.p1_neutral))
        object.__setattr__(self, "p2_neutral", tuple(float(v) for v in self.p2_neutral))
        object.__setattr__(self, "q_limits", tuple(float(v) for v in self.q_limits))
        object.__setattr__(self, "chi_limits", tuple(tuple(float(v) for v in lim) for lim in self.chi_limits))
        object.__setattr__(self, "_heights", np.array([self.a1, self.a2], dtype=float))
        object.__setattr__(self, "_neutral", np.array([self.p1_neutral, self.p2_neutral], dtype=float))

    @property
    def heights(self) -> np.ndarray:
        """Drive shaft heights ``(a1, a2)``, shape (2,)."""
        return self._heights

    @property
    def neutral_points(self) -> np.ndarray:
        """Hinge points at ``chi = 0``, shape (2, 3), side-major."""
        return self._neutral

    def in_workspace(self, chi, tol: float = 0.0) -> np.ndarray:
        chi = np.asarray(chi, dtype=float)
        (plo, phi_), (tlo, thi) = self.chi_limits
        return (
            (chi[..., 0] >= plo - tol)
            & (chi[..., 0] <= phi_ + tol)
            & (chi[..., 1] >= tlo - tol)
            & (chi[..., 1] <= thi + tol)
        )

    def to_dict(self) -> dict:
        return {
            "L1": self.L1,
            "L2": self.L2,
            "r1": self.r1,
            "a1": self.a1,
            "a2": self.a2,
            "p1_neutral": list(self.p1_neutral),
            "p2_neutral": list(self.p2_neutral),
            "q_limits": list(self.q_limits),
            "chi_limits": [list(lim) for lim in self.chi_limits],
        }


def closure_rod_length(L1: float, r1: float, a1: float, p1_neutral: Sequence[float]) -> float:
    """Rod length that closes side 1 at ``chi = 0, q = 0``: ``|C_1(0) - P_1(0)|``."""
    c = np.array([L1, r1, a1], dtype=float)
    return float(np.linalg.norm(c - np.asarray(p1_neutral, dtype=float)))


def geometry_from_mapping(data: Mapping) -> AnkleGeometry:
    """Build a geometry from the JSON config schema.

    ``L2`` may be the string ``"auto"``, resolved by loop closure at
    ``chi = 0, q = 0``. Unknown or missing keys raise ``SchemaError``.
    Scalar invariants are checked here; the workspace sweep is left to
    :func:`validate_geometry`.
    """
    if not isinstance(data, Mapping):
        raise SchemaError("linkage config must be a JSON object")
    unknown = sorted(set(data) - set(GEOMETRY_KEYS))
    if unknown:
        raise SchemaError(f"unknown key(s) in linkage config: {', '.join(unknown)}")
    for key in GEOMETRY_KEYS:
        if key not in data:
            raise SchemaError(f"linkage config is missing required key '{key}'")

    def scalar(key):
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"'{key}' must be a number, got {v!r}")
        return float(v)

    L1, r1, a1, a2 = scalar("L1"), scalar("r1"), scalar("a1"), scalar("a2")
    p1, p2 = _numbers(data["p1_neutral"], "p1_neutral", 3), _numbers(data["p2_neutral"], "p2_neutral", 3)
    q_limits = _numbers(data["q_limits"], "q_limits", 2)
    chi = data["chi_limits"]
    if not isinstance(chi, (list, tuple)) or len(chi) != 2:
        raise SchemaError("'chi_limits' must be [[phi_lo, phi_hi], [theta_lo, theta_hi]]")
    chi_limits = tuple(_numbers(chi[i], "chi_limits", 2) for i in range(2))
    if data["L2"] == "auto":
        L2 = closure_rod_length(L1, r1, a1, p1)
    else:
        L2 = scalar("L2")
    geom = AnkleGeometry(L1, L2, r1, a1, a2, p1, p2, q_limits, chi_limits)
    check_scalars(geom)
    return geom


def _numbers(v, key, n):
    if not isinstance(v, (list, tuple)) or len(v) != n or any(
        isinstance(x, bool) or not isinstance(x, (int, float)) for x in v
    ):
        raise SchemaError(f"'{key}' must be a list of {n} numbers, got {v!r}")
    return tuple(float(x) for x in v)


def fixture_geometry() -> AnkleGeometry:
    """The shipped reference ankle; ``L2`` closes the loop at ``chi = 0, q = 0``."""
    L1, r1, a = 0.05, 0.045, 0.30
    p1 = (0.055, 0.045, 0.04)
    p2 = (0.055, -0.045, 0.04)
    return AnkleGeometry(
        L1=L1,
        L2=closure_rod_length(L1, r1, a, p1),
        r1=r1,
        a1=a,
        a2=a,
        p1_neutral=p1,
        p2_neutral=p2,
        q_limits=(-1.2, 1.2),
        chi_limits=((-0.4, 0.4), (-0.7, 0.35)),
    )


# -- rotations ------------------------------------------------------------------


def basic_rotation(axis: str, angle: float) -> np.ndarray:
    """Elementary rotation about the x or y axis."""
    c, s = math.cos(angle), math.sin(angle)
    axis = axis.upper()
    if axis == "X":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == "Y":
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    raise ValueError(f"axis must be 'X' or 'Y', got {axis!r}")


def footplate_rotation(pose) -> np.ndarray:
    chi = _chi(pose)
    return basic_rotation("Y", chi[1]) @ basic_rotation("X", chi[0])


def _chi(pose) -> np.ndarray:
    if isinstance(pose, AnklePose):
        return pose.as_array()
    return np.asarray(pose, dtype=float)


def rotate_points(chi, points) -> np.ndarray:
    """Apply ``R_Y(theta) R_X(phi)`` to ``points``.

    ``chi`` has shape (..., 2) and ``points`` shape (..., 3) (broadcast). Written
    component-wise so that batched and single evaluations round identically.
    """
    chi = np.asarray(chi, dtype=float)
    points = np.asarray(points, dtype=float)
    cf, sf = np.cos(chi[..., 0]), np.sin(chi[..., 0])
    ct, st = np.cos(chi[..., 1]), np.sin(chi[..., 1])
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    y1 = cf * y - sf * z
    z1 = sf * y + cf * z
    return np.stack([ct * x + st * z1, y1, -st * x + ct * z1], axis=-1)


def hinge_points(geom: AnkleGeometry, chi) -> np.ndarray:
    """Both hinge points for poses ``chi`` (..., 2); returns (..., 2, 3)."""
    chi = np.asarray(chi, dtype=float)
    return rotate_points(chi[..., None, :], geom.neutral_points)


def hinge_point(geom: AnkleGeometry, side: int, pose) -> np.ndarray:
    """``o'P_i = R_Y(theta) R_X(phi) o'P'_i`` for ``side`` 1 or 2."""
    _check_side(side)
    return rotate_points(_chi(pose), geom.neutral_points[side - 1])


def angular_velocity_projection(pose) -> np.ndarray:
    """3x2 matrix ``R_w`` with footplate angular velocity ``w = R_w @ chi_dot``.

    For ``R = R_Y(theta) R_X(phi)`` the roll rate acts about the pitched x axis
    ``R_Y(theta) e_x`` and the pitch rate about the shank y axis.
    """
    chi = _chi(pose)
    return _omega_matrix(chi)


def _omega_matrix(chi) -> np.ndarray:
    chi = np.asarray(chi, dtype=float)
    ct, st = np.cos(chi[..., 1]), np.sin(chi[..., 1])
    zero, one = np.zeros_like(ct), np.ones_like(ct)
    # columns: R_Y(theta) e_x, e_y
    return np.stack(
        [np.stack([ct, zero], -1), np.stack([zero, one], -1), np.stack([-st, zero], -1)],
        axis=-2,
    )


def _omega_matrix_dot(chi, chi_dot) -> np.ndarray:
    chi = np.asarray(chi, dtype=float)
    chi_dot = np.asarray(chi_dot, dtype=float)
    ct, st = np.cos(chi[..., 1]), np.sin(chi[..., 1])
    td = chi_dot[..., 1]
    zero = np.zeros_like(ct)
    return np.stack(
        [np.stack([-st * td, zero], -1), np.stack([zero, zero], -1), np.stack([-ct * td, zero], -1)],
        axis=-2,
    )


def drive_base_point(geom: AnkleGeometry, side: int) -> np.ndarray:
    """Drive shaft point ``B_i = (0, +-r1, a_i)``."""
    _check_side(side)
    return np.array([0.0, SIDE_SIGNS[side - 1] * geom.r1, geom.heights[side - 1]])


def _check_side(side: int) -> None:
    if side not in (1, 2):
        raise ValueError(f"side must be 1 or 2, got {side!r}")


# -- validation -----------------------------------------------------------------


def check_scalars(geom: AnkleGeometry) -> None:
    scalars = {"L1": geom.L1, "L2": geom.L2, "r1": geom.r1, "a1": geom.a1, "a2": geom.a2}
    for name, v in scalars.items():
        if not math.isfinite(v):
            raise InvalidGeometry(f"{name} must be finite, got {v}")
    if geom.L1 <= 0:
        raise InvalidGeometry(f"L1 must be positive, got {geom.L1}")
    if geom.L2 <= 0:
        raise InvalidGeometry(f"L2 must be positive, got {geom.L2}")
    if geom.r1 < 0:
        raise InvalidGeometry(f"r1 must be non-negative, got {geom.r1}")
    for name, p in (("p1_neutral", geom.p1_neutral), ("p2_neutral", geom.p2_neutral)):
        if not all(math.isfinite(v) for v in p):
            raise InvalidGeometry(f"{name} must be finite, got {p}")
    lo, hi = geom.q_limits
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise InvalidGeometry(f"q_limits must be a non-degenerate interval, got {geom.q_limits}")
    for name, (lo, hi) in zip(("phi", "theta"), geom.chi_limits):
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise InvalidGeometry(f"chi_limits for {name} must be a non-degenerate interval, got {(lo, hi)}")


def validate_geometry(geom: AnkleGeometry, grid: int = 21) -> None:
    """Check scalar invariants, then sweep a ``grid x grid`` lattice over
    ``chi_limits`` and require a loop-closing root inside ``q_limits`` on both
    sides at every node.

    Raises:
        InvalidGeometry: a scalar invariant fails.
        InfeasibleWorkspace: first offending node, attached as ``err.chi``.
    """
    from .kinematics import ik_position_batch

    check_scalars(geom)
    (plo, phi_), (tlo, thi) = geom.chi_limits
    phis, thetas = np.meshgrid(np.linspace(plo, phi_, grid), np.linspace(tlo, thi, grid), indexing="ij")
    chi = np.stack([phis.ravel(), thetas.ravel()], axis=-1)
    sol = ik_position_batch(geom, chi)
    bad = np.flatnonzero(~sol.ok)
    if bad.size:
        k = int(bad[0])
        reason = "loop cannot close" if np.any(sol.status[k] == 1) else "no root inside q_limits"
        raise InfeasibleWorkspace(
            f"workspace infeasible at chi=({chi[k, 0]:.6g}, {chi[k, 1]:.6g}): {reason}",
            chi=tuple(float(v) for v in chi[k]),
        )
