"""PD control, the parallel-in-the-loop training and deployment steps, and the
serial-to-parallel baselines.

Policies are plain callables ``policy(obs) -> action``. Only scripted policies
ship: a pure reference-through-IK policy and two model-based stand-ins for
trained networks (one trained against the parallel model, one against the
serial model). Every step function is written on arrays shaped (..., 2), so
the batch runner and single-episode calls share one code path.

Kinematic solves done on the deployment side are tallied in a
:class:`SolveCounter`; policy internals are treated as a black box and not
counted.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import Diverged, KinematicsError, SingularConfiguration, WorkspaceError
from .geometry import AnkleGeometry, AnklePose
from .kinematics import (
    _det2,
    _matvec2,
    _solve2,
    fk_position_batch,
    ik_position_batch,
    jacobian_batch,
    NEAR_SINGULAR_DET,
    SINGULAR_DENOMINATOR,
)
from .mapping import ParallelAnkleCmd, SerialAnkleCmd, parallel_torque_batch, serial_torque_from_parallel
from .plant import PlantParams, PlantState, plant_step

TORQUE_COST = 0.01


class Method(str, enum.Enum):
    LIPS = "lips"
    S2P_TORQUE = "s2p-torque"
    S2P_POSITION = "s2p-position"
    PASSIVE = "passive"


@dataclass(frozen=True)
class PdGains:
    kp: tuple[float, float] = (30.0, 30.0)
    kd: tuple[float, float] = (1.5, 1.5)
    tau_limit: float = 60.0

    def __post_init__(self):
        kp = tuple(float(v) for v in np.broadcast_to(np.asarray(self.kp, dtype=float), (2,)))
        kd = tuple(float(v) for v in np.broadcast_to(np.asarray(self.kd, dtype=float), (2,)))
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "kd", kd)
        if min(kp) < 0 or min(kd) < 0:
            raise ValueError(f"gains must be non-negative, got kp={kp}, kd={kd}")
        if not self.tau_limit > 0:
            raise ValueError(f"tau_limit must be positive, got {self.tau_limit}")

    @classmethod
    def passive(cls, kd: float = 10.0, tau_limit: float = 60.0) -> "PdGains":
        return cls((0.0, 0.0), (kd, kd), tau_limit)


class SolveCounter:
    """Running tally of analytic kinematic solves (IK, FK, Jacobian)."""

    def __init__(self):
        self.count = 0

    def add(self, n=1):
        self.count += int(n)


def _count(counter, n):
    if counter is not None:
        counter.add(n)


def pd_torque(gains: PdGains, q_des, q_dot_des, q_meas, q_dot_meas) -> np.ndarray:
    """``kp (q_des - q) + kd (q_dot_des - q_dot)``, clamped to ``+-tau_limit``."""
    tau = np.asarray(gains.kp) * (np.asarray(q_des) - q_meas) + np.asarray(gains.kd) * (
        np.asarray(q_dot_des) - q_dot_meas
    )
    return np.clip(tau, -gains.tau_limit, gains.tau_limit)


def reward(chi, chi_ref, tau) -> np.ndarray:
    """Negative squared tracking error plus a small torque penalty."""
    e = np.asarray(chi) - chi_ref
    tau = np.asarray(tau)
    return -(np.sum(e * e, axis=-1) + TORQUE_COST * np.sum(tau * tau, axis=-1))


# -- references and observations ----------------------------------------------


@dataclass(frozen=True)
class ReferenceSpec:
    """Ankle-space reference ``offset + amplitude * sin(phase(t))``.

    ``kind`` is ``"sine"`` (constant ``frequency``), ``"chirp"`` (linear sweep
    from ``frequency`` to ``frequency_end`` over ``sweep`` seconds, constant
    afterwards) or ``"zero"``.
    """

    kind: str = "sine"
    amplitude: tuple[float, float] = (0.15, 0.25)
    offset: tuple[float, float] = (0.0, -0.15)
    frequency: float = 1.0
    frequency_end: float = 3.0
    sweep: float = 5.0
    phase: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("sine", "chirp", "zero"):
            raise ValueError(f"unknown reference kind {self.kind!r}")

    @classmethod
    def zero(cls) -> "ReferenceSpec":
        return cls(kind="zero", amplitude=(0.0, 0.0), offset=(0.0, 0.0))

    def sample(self, t):
        """``(chi, chi_dot, chi_ddot)`` at time(s) ``t``; arrays shaped ``t.shape + (2,)``."""
        t = np.asarray(t, dtype=float)[..., None]
        A = np.asarray(self.amplitude, dtype=float)
        off = np.asarray(self.offset, dtype=float)
        if self.kind == "zero":
            z = np.zeros(t.shape[:-1] + (2,))
            return z, z.copy(), z.copy()
        w0 = 2.0 * np.pi * self.frequency
        if self.kind == "sine":
            psi = w0 * t + np.asarray(self.phase)
            dpsi = np.full_like(psi, w0)
            ddpsi = np.zeros_like(psi)
        else:
            rate = 2.0 * np.pi * (self.frequency_end - self.frequency) / self.sweep
            ts = np.minimum(t, self.sweep)
            psi = w0 * ts + 0.5 * rate * ts * ts + (w0 + rate * self.sweep) * (t - ts) + np.asarray(self.phase)
            dpsi = w0 + rate * ts
            ddpsi = np.where(t < self.sweep, rate, 0.0) + 0.0 * psi
        s, c = np.sin(psi), np.cos(psi)
        return off + A * s, A * c * dpsi, A * (c * ddpsi - s * dpsi * dpsi)


@dataclass(frozen=True)
class Observation:
    """Serial-space observation. Arrays are (2,) or (n, 2) for a batch."""

    t: float
    chi: np.ndarray
    chi_dot: np.ndarray
    chi_ref: np.ndarray
    chi_dot_ref: np.ndarray
    last_action: np.ndarray


@dataclass(frozen=True)
class PolicyIO:
    """One training transition ``(s_t, a_t, r_t, s_{t+1})``.

    ``tau_p`` and ``J`` are those of the last physics substep, so
    ``tau_s == J^T tau_p`` holds for the returned torque.
    """

    s_t: Observation
    a_t: np.ndarray
    r_t: float
    s_next: Observation
    tau_p: np.ndarray
    J: np.ndarray


def clamp_action(geom: AnkleGeometry, a) -> np.ndarray:
    lo, hi = geom.q_limits
    return np.clip(a, lo, hi)


def scripted_policy(t, reference: ReferenceSpec, geom: AnkleGeometry) -> np.ndarray:
    """Reference pose mapped to motor targets by the inverse solution.

    ``t`` may be a scalar or an array of times.

    Raises:
        WorkspaceError: the reference leaves the workspace.
    """
    chi, _, _ = reference.sample(t)
    sol = ik_position_batch(geom, chi)
    inside = _inside(geom, chi)
    if not np.all(sol.ok & inside):
        raise WorkspaceError(f"reference leaves the workspace at t={t}")
    return clamp_action(geom, sol.q)


def _inside(geom: AnkleGeometry, chi) -> np.ndarray:
    (plo, phi), (tlo, thi) = geom.chi_limits
    return (chi[..., 0] >= plo) & (chi[..., 0] <= phi) & (chi[..., 1] >= tlo) & (chi[..., 1] <= thi)


class ScriptedPolicy:
    """Open-loop policy: ``a_t = ik(chi_ref(t))``."""

    def __init__(self, reference: ReferenceSpec, geom: AnkleGeometry):
        self.reference = reference
        self.geom = geom

    def __call__(self, obs: Observation) -> np.ndarray:
        a = scripted_policy(obs.t, self.reference, self.geom)
        return np.broadcast_to(a, np.shape(obs.chi)).copy()


def _inverse_dynamics(params: PlantParams, chi, chi_dot, chi_ddot):
    """Ankle torque that produces ``chi_ddot`` on the plant model."""
    return (
        np.asarray(params.inertia) * chi_ddot
        + np.asarray(params.damping) * chi_dot
        + params.gravity_torque(chi)
    )


class ParallelModelPolicy:
    """Stand-in for a policy trained with the parallel torque map in the loop.

    Emits motor position targets that, through the motor PD law with
    ``q_dot_des = 0``, reproduce the torque the parallel model needs to follow
    the reference. It reads the reference half a control period ahead to
    offset the zero-order hold.
    """

    def __init__(self, geom, reference: ReferenceSpec, params: PlantParams, gains: PdGains, lookahead=None):
        if min(gains.kp) <= 0:
            raise ValueError("a position policy needs kp > 0")
        self.geom, self.reference, self.params, self.gains = geom, reference, params, gains
        self.lookahead = 0.5 * params.dt_control if lookahead is None else lookahead

    def __call__(self, obs: Observation) -> np.ndarray:
        chi, chi_dot, chi_ddot = self.reference.sample(obs.t + self.lookahead)
        sol = ik_position_batch(self.geom, chi)
        J, _ = jacobian_batch(self.geom, chi, sol.q)
        tau_p, _ = parallel_torque_batch(J, _inverse_dynamics(self.params, chi, chi_dot, chi_ddot))
        a = sol.q + (tau_p + np.asarray(self.gains.kd) * _matvec2(J, chi_dot)) / np.asarray(self.gains.kp)
        a = clamp_action(self.geom, a)
        return np.broadcast_to(a, np.shape(obs.chi)).copy()


def serial_gains(geom: AnkleGeometry, gains: PdGains) -> PdGains:
    """Diagonal ankle-joint gains matching the motor gains at the neutral pose:
    ``diag(J0^T K J0)`` and ``diag(J0^T D J0)``."""
    J0, _ = jacobian_batch(geom, np.zeros((1, 2)), np.zeros((1, 2)))
    J0 = J0[0]
    kp = np.einsum("ij,i,ij->j", J0, np.asarray(gains.kp), J0)
    kd = np.einsum("ij,i,ij->j", J0, np.asarray(gains.kd), J0)
    return PdGains(tuple(kp), tuple(kd), gains.tau_limit)


def position_equivalent_gains(s_gains: PdGains) -> PdGains:
    """Serial joint gains carried over to the motors by averaging across the
    two ankle axes (each motor drives both)."""
    kp = float(np.mean(s_gains.kp))
    kd = float(np.mean(s_gains.kd))
    return PdGains((kp, kp), (kd, kd), s_gains.tau_limit)


class SerialModelPolicy:
    """Stand-in for a policy trained on the serial ankle model with joint PD
    gains ``s_gains``. Emits an ankle pose target ``chi_des``."""

    def __init__(self, reference: ReferenceSpec, params: PlantParams, s_gains: PdGains, lookahead=None):
        if min(s_gains.kp) <= 0:
            raise ValueError("a position policy needs kp > 0")
        self.reference, self.params, self.gains = reference, params, s_gains
        self.lookahead = 0.5 * params.dt_control if lookahead is None else lookahead

    def __call__(self, obs: Observation) -> np.ndarray:
        chi, chi_dot, chi_ddot = self.reference.sample(obs.t + self.lookahead)
        tau = _inverse_dynamics(self.params, chi, chi_dot, chi_ddot) + np.asarray(self.gains.kd) * chi_dot
        chi_des = chi + tau / np.asarray(self.gains.kp)
        return np.broadcast_to(chi_des, np.shape(obs.chi)).copy()


# -- deployment steps ---------------------------------------------------------------


def lips_deploy_step(a_t, q_meas, q_dot_meas, gains: PdGains, counter: Optional[SolveCounter] = None) -> np.ndarray:
    """Motor torque straight from the parallel action; no kinematic solve."""
    _count(counter, 0)
    return pd_torque(gains, a_t, 0.0, np.asarray(q_meas, dtype=float), np.asarray(q_dot_meas, dtype=float))


SerialOut = Union[SerialAnkleCmd, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _serial_torque(serial_out: SerialOut, gains: Optional[PdGains], chi, chi_dot):
    if callable(serial_out):
        return np.asarray(serial_out(chi, chi_dot), dtype=float)
    if serial_out.tau_s is not None:
        return np.broadcast_to(np.asarray(serial_out.tau_s, dtype=float), np.shape(chi))
    if serial_out.chi_des is None or gains is None:
        raise ValueError("serial command needs tau_s, or chi_des together with gains")
    chi_dot_des = 0.0 if serial_out.chi_dot_des is None else serial_out.chi_dot_des
    return pd_torque(gains, serial_out.chi_des, chi_dot_des, chi, chi_dot)


def s2p_torque_batch(serial_out: SerialOut, geom, q_meas, q_dot_meas, gains=None, guess=None):
    """Torque-equivalence route on arrays (..., 2).

    Returns ``(tau_p, ok, chi_obs, chi_dot_obs)``. Failed entries
    (no FK convergence, singular ``J``) get ``tau_p = 0``.
    """
    fk = fk_position_batch(geom, q_meas, guess)
    chi = fk.chi
    J, denom = jacobian_batch(geom, chi, q_meas)
    det = _det2(J)
    ok = fk.converged & np.all(np.abs(denom) > SINGULAR_DENOMINATOR, axis=-1) & (np.abs(det) > NEAR_SINGULAR_DET)
    with np.errstate(divide="ignore", invalid="ignore"):
        chi_dot = _solve2(J, q_dot_meas)
    chi_dot = np.where(ok[..., None], chi_dot, 0.0)
    tau_s = _serial_torque(serial_out, gains, chi, chi_dot)
    tau_p, inv_ok = parallel_torque_batch(J, tau_s)
    ok = ok & inv_ok & np.all(np.isfinite(tau_p), axis=-1)
    return np.where(ok[..., None], tau_p, 0.0), ok, chi, chi_dot


def s2p_torque_step(
    serial_policy_out: SerialOut,
    geom: AnkleGeometry,
    q_meas,
    q_dot_meas,
    gains: Optional[PdGains] = None,
    counter: Optional[SolveCounter] = None,
    guess=None,
) -> ParallelAnkleCmd:
    """Serial torque mapped to the motors by ``J^-T``, with ``J`` rebuilt from
    forward kinematics of the measured motor angles.

    ``serial_policy_out`` is either a callable ``(chi, chi_dot) -> tau_s``
    evaluated on the recovered serial state, or a :class:`SerialAnkleCmd`
    carrying ``tau_s`` or a pose target for a serial PD law with ``gains``.
    Each call costs two solves (FK and ``J``). On failure the command carries
    ``tau_p = 0`` and ``ok = False``.
    """
    q = np.asarray(q_meas, dtype=float).reshape(1, 2)
    qd = np.asarray(q_dot_meas, dtype=float).reshape(1, 2)
    g = None if guess is None else np.asarray(guess, dtype=float).reshape(1, 2)
    _count(counter, 2)
    tau_p, ok, _, _ = s2p_torque_batch(serial_policy_out, geom, q, qd, gains, g)
    return ParallelAnkleCmd(tau_p=tau_p[0], ok=bool(ok[0]))


def s2p_position_target(geom: AnkleGeometry, chi_des, prev_q_des=None):
    """``q_des = ik(chi_des)`` on arrays; entries outside the workspace keep
    ``prev_q_des``. Returns ``(q_des, ok)``."""
    chi_des = np.asarray(chi_des, dtype=float)
    sol = ik_position_batch(geom, chi_des, prev_q_des)
    ok = sol.ok & _inside(geom, chi_des)
    if prev_q_des is None:
        prev_q_des = np.zeros_like(chi_des)
    return np.where(ok[..., None], sol.q, prev_q_des), ok


def average_pitch_torque(tau_p, chi_des) -> np.ndarray:
    """Equal motor torques (their mean) wherever the commanded roll is zero."""
    pure_pitch = np.asarray(chi_des)[..., 0] == 0.0
    mean = 0.5 * (tau_p[..., 0] + tau_p[..., 1])
    return np.where(pure_pitch[..., None], mean[..., None], tau_p)


def s2p_position_step(
    serial_policy_out: SerialAnkleCmd,
    geom: AnkleGeometry,
    q_meas,
    q_dot_meas,
    gains: PdGains,
    prev_q_des=None,
    counter: Optional[SolveCounter] = None,
    average_force: bool = False,
) -> ParallelAnkleCmd:
    """Position-equivalence route: ``q_des = ik(chi_des)`` then motor PD on the
    measured angles. One solve per call. If ``chi_des`` is unreachable the
    previous ``q_des`` is reused (``ok = False``).
    """
    if serial_policy_out.chi_des is None:
        raise ValueError("position route needs chi_des")
    chi_des = np.asarray(serial_policy_out.chi_des, dtype=float).reshape(1, 2)
    prev = None if prev_q_des is None else np.asarray(prev_q_des, dtype=float).reshape(1, 2)
    _count(counter, 1)
    q_des, ok = s2p_position_target(geom, chi_des, prev)
    tau = pd_torque(gains, q_des[0], 0.0, np.asarray(q_meas, dtype=float), np.asarray(q_dot_meas, dtype=float))
    if average_force:
        tau = average_pitch_torque(tau, chi_des[0])
    return ParallelAnkleCmd(tau_p=tau, q_des=q_des[0], q_dot_des=np.zeros(2), ok=bool(ok[0]))


def passive_step(q_dot_meas, gains: PdGains = PdGains.passive()) -> np.ndarray:
    """Pure motor damping ``-kd q_dot``."""
    if any(gains.kp):
        raise ValueError("passive ankle requires kp = 0")
    q_dot = np.asarray(q_dot_meas, dtype=float)
    return pd_torque(gains, 0.0, 0.0, 0.0 * q_dot, q_dot)


# -- training side --------------------------------------------------------------------


def mapped_parallel_state(geom: AnkleGeometry, chi, chi_dot, prev_q=None):
    """Motor angles, rates and ``J`` of the true ankle state (arrays (..., 2)).

    Returns ``(q, q_dot, J, ok)``; ``ok`` is False outside the workspace or at
    a singular rod alignment.
    """
    sol = ik_position_batch(geom, chi, prev_q)
    J, denom = jacobian_batch(geom, chi, sol.q)
    ok = sol.ok & _inside(geom, chi) & np.all(np.abs(denom) > SINGULAR_DENOMINATOR, axis=-1)
    return sol.q, _matvec2(J, chi_dot), J, ok


def lips_torque(geom, a_t, chi, chi_dot, gains: PdGains, noise=None, prev_q=None):
    """Motor PD against the mapped parallel state, then ``tau_s = J^T tau_p``.

    Returns ``(tau_s, tau_p, J, q, ok)`` with ``q`` the noise-free motor angles.
    """
    q, q_dot, J, ok = mapped_parallel_state(geom, chi, chi_dot, prev_q)
    q_meas = q if noise is None else q + noise
    tau_p = lips_deploy_step(a_t, q_meas, q_dot, gains)
    return serial_torque_from_parallel(J, tau_p), tau_p, J, q, ok


def _observe(geom, state: PlantState, reference: Optional[ReferenceSpec], last_action) -> Observation:
    ref = reference if reference is not None else ReferenceSpec.zero()
    chi_ref, chi_dot_ref, _ = ref.sample(state.t)
    return Observation(
        state.t, state.pose.as_array(), np.asarray(state.chi_dot, dtype=float), chi_ref, chi_dot_ref,
        np.asarray(last_action, dtype=float),
    )


def lips_sim_step(
    policy,
    geom: AnkleGeometry,
    plant_state: PlantState,
    gains: PdGains = PdGains(),
    params: PlantParams = PlantParams(),
    reference: Optional[ReferenceSpec] = None,
    last_action=None,
    noise=None,
):
    """One training iteration: observe, act, then run the control period's
    physics substeps with ``tau_s = J^T PD(a_t)`` applied to the plant.

    ``noise`` optionally holds one encoder-noise row per substep.

    Returns:
        ``(tau_s, io, next_state)`` where ``tau_s`` is the last applied ankle
        torque and ``io`` the logged transition.

    Raises:
        WorkspaceError, SingularConfiguration: the plant left the region where
            the parallel state is defined; the episode should terminate.
        Diverged: the plant became unstable.
    """
    if last_action is None:
        last_action = np.zeros(2)
    obs = _observe(geom, plant_state, reference, last_action)
    a_t = clamp_action(geom, np.asarray(policy(obs), dtype=float).reshape(2))
    state = plant_state
    prev_q = None
    for k in range(params.substeps):
        chi = state.pose.as_array()
        nk = None if noise is None else np.asarray(noise[k], dtype=float)
        tau_s, tau_p, J, q, ok = lips_torque(geom, a_t, chi, state.chi_dot, gains, nk, prev_q)
        if not ok:
            if np.all(np.isfinite(q)) and geom.in_workspace(chi):
                raise SingularConfiguration(f"singular rod alignment at chi=({chi[0]:.6g}, {chi[1]:.6g})")
            raise WorkspaceError(f"plant left the workspace at chi=({chi[0]:.6g}, {chi[1]:.6g}), t={state.t:.4f}")
        prev_q = q
        state = plant_step(state, params, tau_s)
    s_next = _observe(geom, state, reference, a_t)
    r_t = float(reward(s_next.chi, s_next.chi_ref, tau_p))
    return tau_s, PolicyIO(obs, a_t, r_t, s_next, tau_p, J), state


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)
    terminated: bool = False
    reason: str = ""

    def columns(self) -> dict:
        """Per-step arrays: time, pose, reference, tracking error, reward, action."""
        s = [r.s_next for r in self.records]
        chi = np.array([o.chi for o in s]).reshape(-1, 2)
        ref = np.array([o.chi_ref for o in s]).reshape(-1, 2)
        a = np.array([r.a_t for r in self.records]).reshape(-1, 2)
        return {
            "t": np.array([o.t for o in s]),
            "phi": chi[:, 0],
            "theta": chi[:, 1],
            "phi_ref": ref[:, 0],
            "theta_ref": ref[:, 1],
            "error": np.linalg.norm(chi - ref, axis=-1),
            "reward": np.array([r.r_t for r in self.records]),
            "a1": a[:, 0],
            "a2": a[:, 1],
        }


def run_training(
    policy,
    geom: AnkleGeometry,
    reference: ReferenceSpec,
    steps: int = 1000,
    gains: PdGains = PdGains(),
    params: PlantParams = PlantParams(),
    start=None,
) -> TrainingLog:
    """Roll out ``steps`` training iterations; kinematic or stability failures
    end the rollout and are recorded instead of raised."""
    if start is None:
        chi0, chi_dot0, _ = reference.sample(0.0)
        start = PlantState(AnklePose.from_array(chi0), chi_dot0, 0.0)
    log = TrainingLog()
    state, last = start, np.zeros(2)
    for _ in range(steps):
        try:
            _, io, state = lips_sim_step(policy, geom, state, gains, params, reference, last)
        except (KinematicsError, Diverged) as exc:
            log.terminated, log.reason = True, f"{type(exc).__name__}: {exc}"
            break
        log.records.append(io)
        last = io.a_t
    return log
