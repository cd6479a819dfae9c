"""Episode and batch runners for comparing deployment methods on the plant.

Environments run in lockstep on arrays shaped (n_envs, 2). Physics runs at
``dt_physics``; the policy runs every ``dt_control`` and its output is held
between ticks. The motor-side controller runs at the physics rate against
encoder readings of the true motor angles (plus noise) and true motor rates.
Each environment draws its noise from its own seed, so results do not depend
on batch size or ordering.

An environment that leaves the workspace, hits a singular configuration,
fails its torque mapping or diverges is frozen and flagged
``terminated_early``; nothing is raised.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .control import (
    Method,
    Observation,
    ParallelModelPolicy,
    PdGains,
    ReferenceSpec,
    SerialModelPolicy,
    _inside,
    average_pitch_torque,
    clamp_action,
    mapped_parallel_state,
    pd_torque,
    position_equivalent_gains,
    s2p_position_target,
    s2p_torque_batch,
    serial_gains,
)
from .geometry import AnkleGeometry, fixture_geometry
from .kinematics import _matvec2, ik_position_batch, jacobian_batch
from .mapping import serial_torque_from_parallel
from .plant import PlantParams, plant_step_batch

WAVEFORM_COLUMNS = (
    "t", "phi", "theta", "phi_ref", "theta_ref", "q1", "q2", "q1_dot", "q2_dot", "tau1", "tau2", "solve_count",
)


@dataclass(frozen=True)
class EpisodeConfig:
    method: Method = Method.LIPS
    geometry: AnkleGeometry = field(default_factory=fixture_geometry)
    plant: PlantParams = field(default_factory=PlantParams)
    gains: PdGains = field(default_factory=PdGains)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    noise_sigma: float = 0.0
    seed: int = 0
    duration: float = 2.0
    average_force: bool = False
    passive_kd: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def ticks(self) -> int:
        return int(round(self.duration / self.plant.dt_control))


@dataclass(frozen=True)
class Metrics:
    """Episode (or batch-aggregate) summary.

    ``torque_jitter`` is the mean absolute change of motor torque between
    consecutive control ticks, averaged over both motors. ``solve_count`` is
    the total number of deployment-side kinematic solves; ``min_solves_per_tick``
    the smallest per-tick count. ``throughput`` counts plant-side kinematic
    state evaluations (inverse solution, ``J`` and torque map) per second.
    """

    rms_tracking_error: float
    max_error: float
    torque_jitter: float
    solve_count: int
    min_solves_per_tick: int
    terminated_early: bool
    throughput: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("throughput")
        return d


@dataclass
class Waveform:
    """Per-tick log of one environment, columns as in :data:`WAVEFORM_COLUMNS`."""

    columns: dict

    def __len__(self):
        return len(self.columns["t"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(WAVEFORM_COLUMNS)
        n = len(self)
        for k in range(n):
            row = []
            for name in WAVEFORM_COLUMNS:
                v = self.columns[name][k]
                row.append(str(int(v)) if name == "solve_count" else repr(float(v)))
            w.writerow(row)
        return buf.getvalue()


@dataclass
class BatchResult:
    """Raw lockstep output: per-tick arrays shaped (ticks, n_envs, ...)."""

    t: np.ndarray
    chi: np.ndarray
    chi_ref: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray
    tau_p: np.ndarray
    solves: np.ndarray
    alive: np.ndarray  # env was alive at the start of the tick
    terminated: np.ndarray
    evaluations: int
    wall_time: float

    def waveform(self, env: int = 0) -> Waveform:
        n = int(np.sum(self.alive[:, env]))
        cols = {
            "t": self.t[:n],
            "phi": self.chi[:n, env, 0],
            "theta": self.chi[:n, env, 1],
            "phi_ref": self.chi_ref[:n, 0],
            "theta_ref": self.chi_ref[:n, 1],
            "q1": self.q[:n, env, 0],
            "q2": self.q[:n, env, 1],
            "q1_dot": self.q_dot[:n, env, 0],
            "q2_dot": self.q_dot[:n, env, 1],
            "tau1": self.tau_p[:n, env, 0],
            "tau2": self.tau_p[:n, env, 1],
            "solve_count": self.solves[:n, env],
        }
        return Waveform(cols)

    def metrics(self, env: int) -> Metrics:
        n = int(np.sum(self.alive[:, env]))
        e = self.chi[:n, env] - self.chi_ref[:n]
        err = np.sqrt(np.sum(e * e, axis=-1))
        tau = self.tau_p[:n, env]
        jitter = float(np.mean(np.abs(np.diff(tau, axis=0)))) if n > 1 else 0.0
        rate = self.evaluations / self.wall_time if self.wall_time > 0 else 0.0
        return Metrics(
            rms_tracking_error=math.sqrt(math.fsum(err * err) / n) if n else 0.0,
            max_error=float(np.max(err)) if n else 0.0,
            torque_jitter=jitter,
            solve_count=int(np.sum(self.solves[:n, env])),
            min_solves_per_tick=int(np.min(self.solves[:n, env])) if n else 0,
            terminated_early=bool(self.terminated[env]),
            throughput=rate,
        )


# -- per-method controllers ----------------------------------------------------------
#
# ``tick(obs)`` runs once per control period and returns the deployment solves
# it spent per env; ``torque(q_meas, q_dot_meas)`` runs every physics step and
# returns ``(tau_p, ok, solves)``.


class _Lips:
    def __init__(self, cfg: EpisodeConfig):
        self.geom, self.gains = cfg.geometry, cfg.gains
        self.policy = ParallelModelPolicy(cfg.geometry, cfg.reference, cfg.plant, cfg.gains)

    def tick(self, obs):
        self.a = clamp_action(self.geom, self.policy(obs))
        return 0

    def torque(self, q_meas, q_dot_meas):
        return pd_torque(self.gains, self.a, 0.0, q_meas, q_dot_meas), True, 0


class _S2PTorque:
    """Serial torque policy deployed through ``fk`` and ``J^-T``.

    The serial policy here is the exact serial image of the parallel-model
    policy, ``tau_s = J^T PD(a, ik(chi), J chi_dot)``, so with perfect
    measurements it commands the same physics as the parallel route and any
    difference comes from the deployment mapping itself.
    """

    def __init__(self, cfg: EpisodeConfig):
        self.geom, self.gains = cfg.geometry, cfg.gains
        self.policy = ParallelModelPolicy(cfg.geometry, cfg.reference, cfg.plant, cfg.gains)
        self.guess = None

    def tick(self, obs):
        self.a = clamp_action(self.geom, self.policy(obs))
        if self.guess is None:
            self.guess = np.zeros_like(obs.chi)
        return 0

    def _serial_head(self, chi, chi_dot):
        q = ik_position_batch(self.geom, chi).q
        J, _ = jacobian_batch(self.geom, chi, q)
        tau_p = pd_torque(self.gains, self.a, 0.0, q, _matvec2(J, chi_dot))
        return serial_torque_from_parallel(J, tau_p)

    def torque(self, q_meas, q_dot_meas):
        with np.errstate(invalid="ignore", divide="ignore"):
            tau_p, ok, chi, _ = s2p_torque_batch(self._serial_head, self.geom, q_meas, q_dot_meas, guess=self.guess)
        self.guess = np.where(ok[..., None], chi, self.guess)
        return tau_p, ok, 2


class _S2PPosition:
    """Serial position policy deployed through ``q_des = ik(chi_des)`` and motor
    PD with the serial joint gains carried over to the motors."""

    def __init__(self, cfg: EpisodeConfig):
        self.geom = cfg.geometry
        s_gains = serial_gains(cfg.geometry, cfg.gains)
        self.gains = position_equivalent_gains(s_gains)
        self.policy = SerialModelPolicy(cfg.reference, cfg.plant, s_gains)
        self.average = cfg.average_force
        self.q_des = None

    def tick(self, obs):
        self.chi_des = self.policy(obs)
        if self.q_des is None:
            self.q_des = ik_position_batch(self.geom, np.zeros_like(obs.chi)).q
        self.q_des, _ = s2p_position_target(self.geom, self.chi_des, self.q_des)
        return 1

    def torque(self, q_meas, q_dot_meas):
        tau = pd_torque(self.gains, self.q_des, 0.0, q_meas, q_dot_meas)
        if self.average:
            tau = average_pitch_torque(tau, self.chi_des)
        return tau, True, 0


class _Passive:
    def __init__(self, cfg: EpisodeConfig):
        self.gains = PdGains.passive(cfg.passive_kd, cfg.gains.tau_limit)

    def tick(self, obs):
        return 0

    def torque(self, q_meas, q_dot_meas):
        return pd_torque(self.gains, 0.0, 0.0, 0.0 * q_meas, q_dot_meas), True, 0


_CONTROLLERS = {
    Method.LIPS: _Lips,
    Method.S2P_TORQUE: _S2PTorque,
    Method.S2P_POSITION: _S2PPosition,
    Method.PASSIVE: _Passive,
}


def episode_noise(seed: int, sigma: float, steps: int) -> np.ndarray:
    """Encoder noise of one environment, one row per physics step."""
    rng = np.random.default_rng(seed)
    if sigma == 0:
        return np.zeros((steps, 2))
    return rng.normal(0.0, sigma, size=(steps, 2))


def simulate(config: EpisodeConfig, seeds) -> BatchResult:
    """Run one environment per seed in lockstep."""
    seeds = [int(s) for s in seeds]
    n = len(seeds)
    geom, params = config.geometry, config.plant
    sub, ticks = params.substeps, config.ticks
    noise = np.stack([episode_noise(s, config.noise_sigma, ticks * sub) for s in seeds], axis=1)

    chi_ref_all, chi_dot_ref_all, _ = config.reference.sample(np.arange(ticks) * params.dt_control)
    chi = np.broadcast_to(chi_ref_all[0], (n, 2)).copy()
    chi_dot = np.broadcast_to(chi_dot_ref_all[0], (n, 2)).copy()
    ctrl = _CONTROLLERS[config.method](config)
    alive = np.ones(n, dtype=bool)

    log_chi = np.zeros((ticks, n, 2))
    log_q = np.zeros((ticks, n, 2))
    log_qd = np.zeros((ticks, n, 2))
    log_tau = np.zeros((ticks, n, 2))
    log_solves = np.zeros((ticks, n), dtype=int)
    log_alive = np.zeros((ticks, n), dtype=bool)
    last_action = np.zeros((n, 2))
    prev_q = None
    evaluations = 0
    start = time.perf_counter()
    for k in range(ticks):
        t = k * params.dt_control
        log_alive[k] = alive
        log_chi[k] = chi
        obs = Observation(t, chi.copy(), chi_dot.copy(), chi_ref_all[k], chi_dot_ref_all[k], last_action)
        tick_solves = ctrl.tick(obs)
        for s in range(sub):
            with np.errstate(invalid="ignore", divide="ignore"):
                q, q_dot, J, ok = mapped_parallel_state(geom, chi, chi_dot, prev_q)
            evaluations += int(np.sum(alive))
            q_meas = q + noise[k * sub + s]
            tau_p, t_ok, solves = ctrl.torque(q_meas, q_dot)
            tick_solves = tick_solves + solves
            alive_now = alive & ok & t_ok
            tau_p = np.where(alive_now[..., None], tau_p, 0.0)
            if s == 0:
                log_q[k], log_qd[k], log_tau[k] = q, q_dot, tau_p
            with np.errstate(invalid="ignore"):
                tau_s = serial_torque_from_parallel(J, tau_p)
                nchi, nchi_dot, diverged = plant_step_batch(chi, chi_dot, params, tau_s)
            alive_now &= ~diverged & _inside(geom, nchi)
            chi = np.where(alive_now[..., None], nchi, chi)
            chi_dot = np.where(alive_now[..., None], nchi_dot, chi_dot)
            prev_q = np.where(np.isfinite(q), q, 0.0)
            alive = alive_now
        log_solves[k] = tick_solves
        if hasattr(ctrl, "a"):
            last_action = ctrl.a
    wall = time.perf_counter() - start
    return BatchResult(
        t=np.arange(ticks) * params.dt_control,
        chi=log_chi,
        chi_ref=chi_ref_all,
        q=log_q,
        q_dot=log_qd,
        tau_p=log_tau,
        solves=log_solves,
        alive=log_alive,
        terminated=~alive,
        evaluations=evaluations,
        wall_time=wall,
    )


def run_episode(config: EpisodeConfig) -> tuple[Metrics, Waveform]:
    """Single environment seeded with ``config.seed``."""
    res = simulate(config, [config.seed])
    return res.metrics(0), res.waveform(0)


def aggregate(metrics) -> Metrics:
    """Order-independent summary of per-environment metrics: medians of the
    error and jitter figures, totals of solve counts and throughput."""
    metrics = list(metrics)
    if not metrics:
        raise ValueError("nothing to aggregate")

    def med(name):
        return float(np.median(sorted(getattr(m, name) for m in metrics)))

    return Metrics(
        rms_tracking_error=med("rms_tracking_error"),
        max_error=max(m.max_error for m in metrics),
        torque_jitter=med("torque_jitter"),
        solve_count=sum(m.solve_count for m in metrics),
        min_solves_per_tick=min(m.min_solves_per_tick for m in metrics),
        terminated_early=any(m.terminated_early for m in metrics),
        throughput=metrics[0].throughput,
    )


def batch_run(config: EpisodeConfig, n_envs: int) -> tuple[Metrics, list[Metrics]]:
    """``n_envs`` environments seeded ``seed, seed+1, ...`` run in lockstep.

    Returns the aggregate and the per-environment metrics. With one
    environment the aggregate equals :func:`run_episode`'s metrics.
    """
    if n_envs < 1:
        raise ValueError("n_envs must be >= 1")
    res = simulate(config, range(config.seed, config.seed + n_envs))
    per_env = [res.metrics(i) for i in range(n_envs)]
    if n_envs == 1:
        return per_env[0], per_env
    return aggregate(per_env), per_env


def kinematics_throughput(geom: AnkleGeometry, n_envs: int = 4096, repeats: int = 20, seed: int = 0) -> dict:
    """Time batched inverse solution + ``J`` + torque map over ``n_envs``
    random workspace states; returns evaluations per second."""
    rng = np.random.default_rng(seed)
    (plo, phi), (tlo, thi) = geom.chi_limits
    chi = np.stack([rng.uniform(plo, phi, n_envs), rng.uniform(tlo, thi, n_envs)], axis=-1)
    tau_p = rng.normal(size=(n_envs, 2))
    ik_position_batch(geom, chi)  # warm-up
    start = time.perf_counter()
    for _ in range(repeats):
        sol = ik_position_batch(geom, chi)
        J, _ = jacobian_batch(geom, chi, sol.q)
        serial_torque_from_parallel(J, tau_p)
    wall = time.perf_counter() - start
    evals = n_envs * repeats
    return {"n_envs": n_envs, "evaluations": evals, "seconds": wall, "throughput": evals / wall}


def metrics_report(results: dict, timing: bool = False) -> str:
    """JSON report keyed by method name; timing fields omitted unless asked."""
    out = {str(Method(k).value): m.to_dict(timing) for k, m in sorted(results.items(), key=lambda kv: Method(kv[0]).value)}
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def with_method(config: EpisodeConfig, method) -> EpisodeConfig:
    return replace(config, method=Method(method))
