"""Closed-chain kinematics of the parallel ankle.

Inverse maps are analytic: the loop-closure condition ``|C_i(q_i) - P_i(chi)| = L2``
reduces per side to ``a cos q + b sin q = c``. Velocities and accelerations
follow from equating the projections of the rod end-point velocities (and
accelerations) on the rod direction. Forward kinematics has no closed form and
is solved by Newton iteration on the two loop-closure residuals.

All kernels are vectorised over leading axes and written component-wise, so a
batched call and a single call produce bit-identical values. Single-pose
functions raise on failure; ``*_batch`` functions return status masks instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import Infeasible, LimitError, NoConvergence, SingularConfiguration, WorkspaceError
from .geometry import (
    SIDE_SIGNS,
    AnkleGeometry,
    AnklePose,
    AnkleRates,
    _omega_matrix,
    _omega_matrix_dot,
    hinge_points,
)

SINGULAR_DENOMINATOR = 1e-10
NEAR_SINGULAR_DET = 1e-8
FK_TOL = 1e-10
FK_MAX_ITER = 50

# ik status codes
OK, WORKSPACE, LIMIT = 0, 1, 2


@dataclass(frozen=True)
class TrigEquation:
    """``a cos q + b sin q = c``."""

    a: float
    b: float
    c: float

    @property
    def discriminant(self) -> float:
        return self.a * self.a + self.b * self.b - self.c * self.c


@dataclass(frozen=True)
class MotorState:
    q: np.ndarray
    q_dot: np.ndarray
    q_ddot: np.ndarray
    tau: Optional[np.ndarray] = None


@dataclass(frozen=True)
class IkSolution:
    q: np.ndarray
    branch: tuple[str, str]
    residual: float


@dataclass(frozen=True)
class JacobianPair:
    J: np.ndarray
    J_dot: np.ndarray

    @property
    def near_singular(self) -> bool:
        return bool(abs(_det2(self.J)) < NEAR_SINGULAR_DET)


class IkBatch(NamedTuple):
    q: np.ndarray  # (..., 2)
    branch: np.ndarray  # (..., 2) of +1 / -1
    residual: np.ndarray  # (...,)
    status: np.ndarray  # (..., 2) int, OK / WORKSPACE / LIMIT per side

    @property
    def ok(self) -> np.ndarray:
        return np.all(self.status == OK, axis=-1)


class FkBatch(NamedTuple):
    chi: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    converged: np.ndarray


# -- small component-wise helpers ----------------------------------------------


def _dot3(u, v):
    return u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1] + u[..., 2] * v[..., 2]


def _cross(u, v):
    return np.stack(
        [
            u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1],
            u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2],
            u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0],
        ],
        axis=-1,
    )


def _det2(m):
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def _matvec2(m, v):
    return np.stack(
        [m[..., 0, 0] * v[..., 0] + m[..., 0, 1] * v[..., 1], m[..., 1, 0] * v[..., 0] + m[..., 1, 1] * v[..., 1]],
        axis=-1,
    )


def _matTvec2(m, v):
    return np.stack(
        [m[..., 0, 0] * v[..., 0] + m[..., 1, 0] * v[..., 1], m[..., 0, 1] * v[..., 0] + m[..., 1, 1] * v[..., 1]],
        axis=-1,
    )


def _solve2(m, v):
    """Closed-form ``m^-1 v``; caller guards the determinant."""
    det = _det2(m)
    return np.stack(
        [(m[..., 1, 1] * v[..., 0] - m[..., 0, 1] * v[..., 1]) / det, (m[..., 0, 0] * v[..., 1] - m[..., 1, 0] * v[..., 0]) / det],
        axis=-1,
    )


def _wrap(q):
    """Wrap to (-pi, pi]."""
    w = np.mod(q + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)



def _chi_of(pose) -> np.ndarray:
    if isinstance(pose, AnklePose):
        return pose.as_array()
    return np.asarray(pose, dtype=float).reshape(2)


def _rates_of(rates) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(rates, AnkleRates):
        return np.asarray(rates.chi_dot, dtype=float), np.asarray(rates.chi_ddot, dtype=float)
    chi_dot = np.asarray(rates, dtype=float).reshape(2)
    return chi_dot, np.zeros(2)


# -- trigonometric solve -------------------------------------------------------------


def solve_trig(eq: TrigEquation) -> tuple[float, ...]:
    """All ``q`` in (-pi, pi] with ``a cos q + b sin q = c``.

    Returns one root for a zero discriminant, two otherwise (ordered: the
    ``gamma - delta`` branch first).

    Raises:
        Infeasible: ``a^2 + b^2 - c^2 < 0``.
    """
    q_minus, q_plus, disc = _trig_roots(np.array([eq.a]), np.array([eq.b]), np.array([eq.c]))
    if not disc[0] >= 0.0:
        raise Infeasible(f"a^2 + b^2 - c^2 = {disc[0]:.3e} < 0 for (a, b, c) = ({eq.a}, {eq.b}, {eq.c})")
    if disc[0] == 0.0 or q_minus[0] == q_plus[0]:
        return (float(q_minus[0]),)
    return float(q_minus[0]), float(q_plus[0])


def _trig_roots(a, b, c):
    disc = a * a + b * b - c * c
    rho = np.sqrt(a * a + b * b)
    gamma = np.arctan2(b, a)
    ratio = np.clip(np.divide(c, rho, out=np.zeros_like(c), where=rho > 0), -1.0, 1.0)
    delta = np.arccos(ratio)
    return _wrap(gamma - delta), _wrap(gamma + delta), disc


def loop_equations(geom: AnkleGeometry, points: np.ndarray):
    """Coefficients ``(a, b, c)`` of both loop equations, each shaped (..., 2)."""
    px, py, pz = points[..., 0], points[..., 1], points[..., 2]
    dz = pz - geom.heights
    dy = py - SIDE_SIGNS * geom.r1
    L1 = geom.L1
    a = 2.0 * px * L1
    b = -2.0 * dz * L1
    c = px * px + dy * dy + dz * dz + L1 * L1 - geom.L2 * geom.L2
    return a, b, c


def trig_equations(geom: AnkleGeometry, pose) -> tuple[TrigEquation, TrigEquation]:
    a, b, c = loop_equations(geom, hinge_points(geom, _chi_of(pose)[None, :]))
    return tuple(TrigEquation(float(a[0, i]), float(b[0, i]), float(c[0, i])) for i in range(2))


# -- position --------------------------------------------------------------------------


def arm_tips(geom: AnkleGeometry, q) -> np.ndarray:
    """``C_i = (L1 cos q_i, +-r1, a_i - L1 sin q_i)`` for q (..., 2); returns (..., 2, 3)."""
    q = np.asarray(q, dtype=float)
    cq, sq = np.cos(q), np.sin(q)
    return np.stack(
        [geom.L1 * cq, np.broadcast_to(SIDE_SIGNS * geom.r1, q.shape), geom.heights - geom.L1 * sq], axis=-1
    )


def arm_tip(geom: AnkleGeometry, side: int, q_i: float) -> np.ndarray:
    if side not in (1, 2):
        raise ValueError(f"side must be 1 or 2, got {side!r}")
    q = np.zeros((1, 2))
    q[0, side - 1] = q_i
    return arm_tips(geom, q)[0, side - 1]


def rod_residuals(geom: AnkleGeometry, chi, q) -> np.ndarray:
    """``|C_i - P_i| - L2`` per side, shape (..., 2)."""
    d = arm_tips(geom, q) - hinge_points(geom, chi)
    return np.sqrt(_dot3(d, d)) - geom.L2


def ik_position_batch(geom: AnkleGeometry, chi, prev_q=None) -> IkBatch:
    """Vectorised position inverse solution.

    Per side: feasibility, then motor limits, then the root nearest to
    ``prev_q`` (nearest to zero when absent). Infeasible entries carry NaN q.
    """
    chi = np.asarray(chi, dtype=float)
    points = hinge_points(geom, chi)
    a, b, c = loop_equations(geom, points)
    q_minus, q_plus, disc = _trig_roots(a, b, c)
    lo, hi = geom.q_limits
    ref = np.zeros_like(q_minus) if prev_q is None else np.broadcast_to(np.asarray(prev_q, dtype=float), q_minus.shape)
    feasible = disc >= 0.0
    in_m = (q_minus >= lo) & (q_minus <= hi)
    in_p = (q_plus >= lo) & (q_plus <= hi)
    # ties go to the minus branch so the choice is deterministic
    take_plus = in_p & (~in_m | (np.abs(q_plus - ref) < np.abs(q_minus - ref)))
    q = np.where(take_plus, q_plus, q_minus)
    branch = np.where(take_plus, 1, -1)
    status = np.where(~feasible, WORKSPACE, np.where(in_m | in_p, OK, LIMIT))
    q = np.where(status == OK, q, np.nan)
    diff = arm_tips(geom, q) - points
    rod = np.abs(np.sqrt(_dot3(diff, diff)) - geom.L2)
    return IkBatch(q, branch, np.max(rod, axis=-1), status)


def ik_position(geom: AnkleGeometry, pose, prev: Optional[MotorState] = None) -> IkSolution:
    """Motor angles closing both loops at ``pose``.

    Raises:
        WorkspaceError: pose outside ``chi_limits`` or a loop cannot close.
        LimitError: no loop-closing root inside ``q_limits``.
    """
    chi = _chi_of(pose)
    if not np.all(np.isfinite(chi)):
        raise WorkspaceError(f"non-finite pose {chi}")
    if not geom.in_workspace(chi):
        raise WorkspaceError(f"pose ({chi[0]:.6g}, {chi[1]:.6g}) is outside chi_limits {geom.chi_limits}")
    prev_q = None if prev is None else np.asarray(prev.q if isinstance(prev, MotorState) else prev, dtype=float)[None, :]
    sol = ik_position_batch(geom, chi[None, :], prev_q)
    status = sol.status[0]
    if np.any(status == WORKSPACE):
        side = int(np.flatnonzero(status == WORKSPACE)[0]) + 1
        raise WorkspaceError(f"loop {side} cannot close at chi=({chi[0]:.6g}, {chi[1]:.6g})")
    if np.any(status == LIMIT):
        side = int(np.flatnonzero(status == LIMIT)[0]) + 1
        raise LimitError(f"motor {side} has no root inside q_limits {geom.q_limits} at chi=({chi[0]:.6g}, {chi[1]:.6g})")
    branch = tuple("+" if s > 0 else "-" for s in sol.branch[0])
    return IkSolution(q=sol.q[0].copy(), branch=branch, residual=float(sol.residual[0]))


# -- velocity ---------------------------------------------------------------------------


class LoopFrame(NamedTuple):
    """Per-side vectors of one configuration; arrays shaped (..., 2, 3) unless noted."""

    P: np.ndarray
    C: np.ndarray
    BC: np.ndarray
    CP: np.ndarray
    denom: np.ndarray  # (..., 2): (B_iC_i x C_iP_i)_y
    R_w: np.ndarray  # (..., 3, 2)
    R_P: np.ndarray  # (..., 2, 3, 2)


def loop_frame(geom: AnkleGeometry, chi, q) -> LoopFrame:
    chi = np.asarray(chi, dtype=float)
    q = np.asarray(q, dtype=float)
    P = hinge_points(geom, chi)
    cq, sq = np.cos(q), np.sin(q)
    zero = np.zeros_like(cq)
    BC = np.stack([geom.L1 * cq, zero, -geom.L1 * sq], axis=-1)
    C = np.stack([geom.L1 * cq, np.broadcast_to(SIDE_SIGNS * geom.r1, q.shape), geom.heights - geom.L1 * sq], axis=-1)
    CP = P - C
    denom = BC[..., 2] * CP[..., 0] - BC[..., 0] * CP[..., 2]
    R_w = _omega_matrix(chi)
    R_P = _hinge_rate(R_w, P)
    return LoopFrame(P, C, BC, CP, denom, R_w, R_P)


def _hinge_rate(R_w, P):
    """``[-P]x R_w``: column j is ``R_w[:, j] x P``; shape (..., 2, 3, 2)."""
    cols = [_cross(R_w[..., None, :, j], P) for j in range(2)]
    return np.stack(cols, axis=-1)


def hinge_rate_matrix_entrywise(P, R_xy) -> np.ndarray:
    """The entry-by-entry 3x2 expansion of ``[-P]x R_w`` in which the first
    column is ``e_x x P`` and the second is ``R_xy[:, 1] x P``.

    This closed form presumes a roll-outermost composition
    ``R_xy = R_X(phi) R_Y(theta)``; it is kept for cross-checking.
    """
    P = np.asarray(P, dtype=float)
    R = np.asarray(R_xy, dtype=float)
    px, py, pz = P
    return np.array(
        [
            [0.0, R[1, 1] * pz - R[2, 1] * py],
            [-pz, -R[0, 1] * pz + R[2, 1] * px],
            [py, R[0, 1] * py - R[1, 1] * px],
        ]
    )


def _row_times(vec3, mat32):
    """``vec3^T @ mat32`` per side: (..., 2, 3) x (..., 2, 3, 2) -> (..., 2, 2)."""
    return np.stack([_dot3(vec3, mat32[..., j]) for j in range(2)], axis=-1)


def jacobian_batch(geom: AnkleGeometry, chi, q):
    """Returns ``(J, denom)``; rows with ``|denom| <= 1e-10`` are singular."""
    f = loop_frame(geom, chi, q)
    # singular rows come out inf/nan and are reported through denom
    with np.errstate(divide="ignore", invalid="ignore"):
        J = _row_times(f.CP, f.R_P) / f.denom[..., None]
    return J, f.denom


def _check_denominators(denom, chi) -> None:
    small = np.abs(denom) <= SINGULAR_DENOMINATOR
    if np.any(small):
        side = int(np.flatnonzero(small)[0]) + 1
        raise SingularConfiguration(
            f"rod {side} is aligned with its drive arm at chi=({chi[0]:.6g}, {chi[1]:.6g}) "
            f"(|(BC x CP)_y| = {abs(denom[side - 1]):.3e})"
        )


def jacobian(geom: AnkleGeometry, pose, q) -> np.ndarray:
    """Inverse Jacobian ``J`` (``q_dot = J chi_dot``) at a loop-closing ``(pose, q)``.

    Row ``i`` is ``C_iP_i^T R_P_i / (B_iC_i x C_iP_i)_y``.

    Raises:
        SingularConfiguration: a denominator is at most 1e-10 in magnitude.
    """
    chi = _chi_of(pose)
    q = np.asarray(q.q if isinstance(q, IkSolution) else q, dtype=float).reshape(2)
    J, denom = jacobian_batch(geom, chi[None, :], q[None, :])
    _check_denominators(denom[0], chi)
    return J[0]


def ik_velocity(J, chi_dot) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    return _matvec2(J, np.asarray(chi_dot, dtype=float))


# -- acceleration -----------------------------------------------------------------------


class RateTerms(NamedTuple):
    J: np.ndarray  # (..., 2, 2)
    J_dot: np.ndarray  # (..., 2, 2)
    R_P: np.ndarray  # (..., 2, 3, 2)
    R_P_dot: np.ndarray
    R_C: np.ndarray
    R_C_dot: np.ndarray
    denom: np.ndarray  # (..., 2)


def rate_terms_batch(geom: AnkleGeometry, chi, chi_dot, q) -> RateTerms:
    """All velocity/acceleration matrices of both loops at once.

    ``q_dot`` is implied by ``J chi_dot``; ``q`` must close the loops at ``chi``.
    """
    chi_dot = np.asarray(chi_dot, dtype=float)
    f = loop_frame(geom, chi, q)
    denom = f.denom
    with np.errstate(divide="ignore", invalid="ignore"):
        J = _row_times(f.CP, f.R_P) / denom[..., None]
    # hinge velocity and the time derivative of R_P
    cd = chi_dot[..., None, None, :]
    V_P = _rowdot(f.R_P, cd)  # (..., 2, 3)
    R_w_dot = _omega_matrix_dot(chi, chi_dot)
    R_P_dot = np.stack(
        [
            _cross(R_w_dot[..., None, :, j], f.P) + _cross(f.R_w[..., None, :, j], V_P)
            for j in range(2)
        ],
        axis=-1,
    )
    # C_i velocity map: W_1i x B_iC_i = n_i q_dot_i with n_i = (BC_z, 0, -BC_x)
    zero = np.zeros_like(denom)
    n = np.stack([f.BC[..., 2], zero, -f.BC[..., 0]], axis=-1)
    R_C = n[..., :, None] * J[..., None, :]
    q_dot = _rowdot(J, chi_dot[..., None, :])  # (..., 2)
    rel = f.R_P - R_C  # (..., 2, 3, 2)
    rel_v = _rowdot(rel, cd)  # relative rod-end velocity, (..., 2, 3)
    cp_bc = _dot3(f.CP, f.BC)
    bracket = (
        _row_times(f.CP, R_P_dot)
        + (cp_bc * q_dot)[..., None] * J
        + _row_times(rel_v, rel)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        J_dot = bracket / denom[..., None]
    R_C_dot = n[..., :, None] * J_dot[..., None, :] - (f.BC * q_dot[..., None])[..., :, None] * J[..., None, :]
    return RateTerms(J, J_dot, f.R_P, R_P_dot, R_C, R_C_dot, denom)


def _rowdot(row2, vec2):
    return row2[..., 0] * vec2[..., 0] + row2[..., 1] * vec2[..., 1]


def point_rate_matrices(geom: AnkleGeometry, side: int, pose, rates, q, q_dot=None) -> dict:
    """``R_P``, ``R_P_dot``, ``R_C``, ``R_C_dot`` (each 3x2) of one loop.

    ``q_dot`` is accepted for interface symmetry; it is recomputed as
    ``J chi_dot`` so the returned terms are always mutually consistent.

    Raises:
        SingularConfiguration: the loop's denominator vanishes.
    """
    if side not in (1, 2):
        raise ValueError(f"side must be 1 or 2, got {side!r}")
    chi = _chi_of(pose)
    chi_dot, _ = _rates_of(rates)
    q = np.asarray(q.q if isinstance(q, IkSolution) else q, dtype=float).reshape(2)
    t = rate_terms_batch(geom, chi[None, :], chi_dot[None, :], q[None, :])
    _check_denominators(t.denom[0], chi)
    i = side - 1
    return {"R_P": t.R_P[0, i], "R_P_dot": t.R_P_dot[0, i], "R_C": t.R_C[0, i], "R_C_dot": t.R_C_dot[0, i]}


def jacobian_dot(geom: AnkleGeometry, pose, rates, q, q_dot=None) -> np.ndarray:
    """Time derivative of ``J`` along ``chi_dot``.

    Row ``i`` is ``[C_iP_i^T (R_P_dot + B_iC_i chi_dot^T J_i^T J_i)
    + chi_dot^T (R_P - R_C)^T (R_P - R_C)] / (B_iC_i x C_iP_i)_y``.
    """
    chi = _chi_of(pose)
    chi_dot, _ = _rates_of(rates)
    q = np.asarray(q.q if isinstance(q, IkSolution) else q, dtype=float).reshape(2)
    t = rate_terms_batch(geom, chi[None, :], chi_dot[None, :], q[None, :])
    _check_denominators(t.denom[0], chi)
    return t.J_dot[0]


def jacobian_pair(geom: AnkleGeometry, pose, rates, q) -> JacobianPair:
    chi = _chi_of(pose)
    chi_dot, _ = _rates_of(rates)
    q = np.asarray(q.q if isinstance(q, IkSolution) else q, dtype=float).reshape(2)
    t = rate_terms_batch(geom, chi[None, :], chi_dot[None, :], q[None, :])
    _check_denominators(t.denom[0], chi)
    return JacobianPair(t.J[0], t.J_dot[0])


def ik_acceleration(J, J_dot, rates) -> np.ndarray:
    """``q_ddot = J chi_ddot + J_dot chi_dot``."""
    chi_dot, chi_ddot = _rates_of(rates)
    return _matvec2(np.asarray(J, dtype=float), chi_ddot) + _matvec2(np.asarray(J_dot, dtype=float), chi_dot)


# -- forward position -----------------------------------------------------------------


def fk_position_batch(geom: AnkleGeometry, q, guess=None, tol: float = FK_TOL, max_iter: int = FK_MAX_ITER) -> FkBatch:
    """Vectorised Newton solve of ``|C_i(q_i) - P_i(chi)| = L2`` for ``chi``.

    The residual ``r_i = (|C_iP_i|^2 - L2^2) / 2`` has gradient
    ``C_iP_i^T R_P_i`` (``J`` scaled row-wise by ``denom_i``); ``r_i / denom_i`` estimates the motor-angle error and
    is the convergence measure. Converged entries are frozen, so each entry
    sees exactly the iterations a single-pose call would.
    """
    q = np.asarray(q, dtype=float)
    chi = np.zeros_like(q) if guess is None else np.array(np.broadcast_to(np.asarray(guess, dtype=float), q.shape))
    shape = q.shape[:-1]
    iterations = np.zeros(shape, dtype=int)
    converged = np.zeros(shape, dtype=bool)
    active = np.ones(shape, dtype=bool)
    residual = np.full(shape, np.inf)
    best = chi.copy()
    best_res = np.full(shape, np.inf)
    half_L2sq = 0.5 * geom.L2 * geom.L2
    for _ in range(max_iter + 1):
        f = loop_frame(geom, chi, q)
        r = 0.5 * _dot3(f.CP, f.CP) - half_L2sq
        with np.errstate(divide="ignore", invalid="ignore"):
            err = np.max(np.abs(r / f.denom), axis=-1)
        err = np.where(np.isfinite(err), err, np.inf)
        residual = np.where(active, err, residual)
        improve = active & (err < best_res)
        best = np.where(improve[..., None], chi, best)
        best_res = np.where(improve, err, best_res)
        done = active & (err < tol)
        converged |= done
        active &= ~done
        if not np.any(active):
            break
        M = _row_times(f.CP, f.R_P)
        det = _det2(M)
        stuck = active & ~(np.abs(det) > 0.0)
        active &= ~stuck
        with np.errstate(divide="ignore", invalid="ignore"):
            step = _solve2(M, r)
        runaway = active & ~np.all(np.isfinite(step), axis=-1)
        active &= ~runaway
        chi = np.where(active[..., None], chi - step, chi)
        iterations = np.where(active, iterations + 1, iterations)
        # iterates wandering far off the linkage's range never come back
        lost = active & np.any(np.abs(chi) > np.pi, axis=-1)
        active &= ~lost
        if not np.any(active):
            break
    chi_out = np.where(converged[..., None], chi, best)
    return FkBatch(chi_out, iterations, np.where(converged, residual, best_res), converged)


def fk_position(geom: AnkleGeometry, q, guess=None) -> AnklePose:
    """Footplate pose reached by motor angles ``q``.

    Raises:
        NoConvergence: not converged within 50 iterations; carries the best
            iterate and its residual.
        SingularConfiguration: converged onto a pose where ``J`` is undefined.
    """
    q = np.asarray(q.q if isinstance(q, MotorState) else q, dtype=float).reshape(2)
    g = None if guess is None else _chi_of(guess)[None, :]
    res = fk_position_batch(geom, q[None, :], g)
    chi = res.chi[0]
    if not res.converged[0]:
        raise NoConvergence(
            f"forward kinematics did not converge for q=({q[0]:.6g}, {q[1]:.6g}); "
            f"best residual {res.residual[0]:.3e} rad at chi=({chi[0]:.6g}, {chi[1]:.6g})",
            best=AnklePose.from_array(chi),
            residual=float(res.residual[0]),
            iterations=int(res.iterations[0]),
        )
    _, denom = jacobian_batch(geom, chi[None, :], q[None, :])
    _check_denominators(denom[0], chi)
    return AnklePose.from_array(chi)


def fk_iterations(geom: AnkleGeometry, q, guess=None) -> int:
    res = fk_position_batch(geom, np.asarray(q, dtype=float).reshape(1, 2), guess)
    return int(res.iterations[0])


def motor_state(geom: AnkleGeometry, pose, rates, prev: Optional[MotorState] = None) -> MotorState:
    """``q``, ``q_dot = J chi_dot``, ``q_ddot = J chi_ddot + J_dot chi_dot``."""
    sol = ik_position(geom, pose, prev)
    chi_dot, chi_ddot = _rates_of(rates)
    pair = jacobian_pair(geom, pose, chi_dot, sol.q)
    q_dot = ik_velocity(pair.J, chi_dot)
    q_ddot = ik_acceleration(pair.J, pair.J_dot, AnkleRates(tuple(chi_dot), tuple(chi_ddot)))
    return MotorState(sol.q, q_dot, q_ddot)

