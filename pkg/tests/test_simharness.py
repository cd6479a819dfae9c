import csv
import io
import json

import numpy as np
import pytest
from scipy.optimize import brentq

from lips.control import Method, PdGains, ReferenceSpec
from lips.plant import GravityTorque, PlantParams
from lips.simharness import (
    WAVEFORM_COLUMNS,
    EpisodeConfig,
    Metrics,
    aggregate,
    batch_run,
    episode_noise,
    kinematics_throughput,
    metrics_report,
    run_episode,
    simulate,
    with_method,
)

SHORT = 0.5


def _cfg(method=Method.LIPS, **kw):
    kw.setdefault("duration", SHORT)
    return EpisodeConfig(method=method, **kw)


def _timeless(m: Metrics) -> dict:
    return m.to_dict(timing=False)


@pytest.mark.parametrize("method", list(Method))
def test_single_env_batch_equals_episode(method):
    cfg = _cfg(method, noise_sigma=2e-3, seed=4)
    m, wave = run_episode(cfg)
    agg, per_env = batch_run(cfg, 1)
    assert _timeless(agg) == _timeless(m)
    assert _timeless(per_env[0]) == _timeless(m)


def test_envs_do_not_depend_on_batch_company():
    cfg = _cfg(Method.S2P_POSITION, noise_sigma=2e-3)
    together = simulate(cfg, [3, 4, 5])
    alone = simulate(cfg, [4])
    assert np.array_equal(together.chi[:, 1], alone.chi[:, 0])
    assert np.array_equal(together.tau_p[:, 1], alone.tau_p[:, 0])
    shuffled = simulate(cfg, [5, 4, 3])
    assert np.array_equal(shuffled.chi[:, 2], together.chi[:, 0])


def test_aggregate_is_permutation_invariant():
    cfg = _cfg(Method.LIPS, noise_sigma=2e-3)
    _, per_env = batch_run(cfg, 6)
    a = aggregate(per_env)
    b = aggregate(per_env[::-1])
    c = aggregate([per_env[i] for i in (3, 0, 5, 1, 4, 2)])
    assert _timeless(a) == _timeless(b) == _timeless(c)
    with pytest.raises(ValueError):
        aggregate([])


@pytest.mark.parametrize("method", [Method.LIPS, Method.S2P_TORQUE, Method.S2P_POSITION])
def test_zero_reference_holds_neutral_pose(method):
    params = PlantParams(gravity_torque=GravityTorque.off())
    cfg = _cfg(method, plant=params, reference=ReferenceSpec.zero())
    res = simulate(cfg, [0])
    assert not res.terminated[0]
    assert np.max(np.abs(res.chi)) < 1e-9


@pytest.mark.parametrize("method,per_tick", [(Method.LIPS, 0), (Method.S2P_TORQUE, 20), (Method.S2P_POSITION, 1), (Method.PASSIVE, 0)])
def test_solve_counts_per_tick(method, per_tick):
    res = simulate(_cfg(method, duration=0.2), [0])
    assert np.all(res.solves[:, 0] == per_tick)
    m = res.metrics(0)
    assert m.solve_count == per_tick * 20 and m.min_solves_per_tick == per_tick


def test_passive_tracks_far_worse_than_lips():
    lips, _ = run_episode(_cfg(Method.LIPS, duration=1.0))
    passive, _ = run_episode(_cfg(Method.PASSIVE, duration=1.0))
    assert passive.rms_tracking_error >= 5 * lips.rms_tracking_error


def test_passive_steady_tilt_matches_equilibrium():
    # kd kept low so the sag settles within the episode; with no position
    # feedback the rest pose is where the load torque vanishes
    cfg = _cfg(Method.PASSIVE, reference=ReferenceSpec.zero(), passive_kd=1.0, duration=8.0)
    res = simulate(cfg, [0])
    g = cfg.plant.gravity_torque
    eq = [brentq(lambda x, i=i: g(np.array([x, x]))[i], -1.0, 1.0) for i in range(2)]
    np.testing.assert_allclose(res.chi[-1, 0], eq, atol=2e-3)
    assert np.linalg.norm(eq) > 0.1


def test_leaving_workspace_terminates_early():
    params = PlantParams(gravity_torque=GravityTorque(bias=(0.0, 5.0)))
    cfg = _cfg(Method.PASSIVE, plant=params, reference=ReferenceSpec.zero(), passive_kd=0.0, duration=1.0)
    m, wave = run_episode(cfg)
    assert m.terminated_early
    assert 0 < len(wave) < cfg.ticks
    ok, _ = run_episode(_cfg(Method.PASSIVE, reference=ReferenceSpec.zero()))
    assert not ok.terminated_early


def test_waveform_csv_layout():
    cfg = _cfg(Method.S2P_POSITION, noise_sigma=1e-3, duration=0.3)
    _, wave = run_episode(cfg)
    rows = list(csv.reader(io.StringIO(wave.to_csv())))
    assert tuple(rows[0]) == WAVEFORM_COLUMNS
    assert len(rows) - 1 == cfg.ticks == 30
    assert float(rows[1][0]) == 0.0 and float(rows[2][0]) == pytest.approx(0.01)
    assert all(r[-1] == "1" for r in rows[1:])


def test_episodes_are_deterministic():
    cfg = _cfg(Method.S2P_TORQUE, noise_sigma=2e-3, seed=9, duration=0.3)
    assert run_episode(cfg)[1].to_csv() == run_episode(cfg)[1].to_csv()
    other = run_episode(_cfg(Method.S2P_TORQUE, noise_sigma=2e-3, seed=10, duration=0.3))[1]
    assert other.to_csv() != run_episode(cfg)[1].to_csv()


def test_episode_noise():
    a = episode_noise(3, 2e-3, 100)
    assert a.shape == (100, 2) and np.array_equal(a, episode_noise(3, 2e-3, 100))
    assert not episode_noise(3, 0.0, 10).any()


def test_metrics_report_is_keyed_by_method():
    m, _ = run_episode(_cfg(Method.LIPS, duration=0.2))
    p, _ = run_episode(_cfg(Method.PASSIVE, duration=0.2))
    report = json.loads(metrics_report({Method.PASSIVE: p, Method.LIPS: m}))
    assert list(report) == ["lips", "passive"]
    assert "throughput" not in report["lips"]
    assert report["lips"]["solve_count"] == 0
    assert "throughput" in json.loads(metrics_report({"lips": m}, timing=True))["lips"]


def test_metric_values_non_negative():
    m, _ = run_episode(_cfg(Method.S2P_POSITION, noise_sigma=2e-3))
    for k, v in m.to_dict().items():
        assert v >= 0, k


def test_kinematics_throughput_report(geom):
    out = kinematics_throughput(geom, n_envs=256, repeats=3)
    assert out["evaluations"] == 768 and out["throughput"] > 0


def test_config_validation():
    with pytest.raises(ValueError):
        EpisodeConfig(noise_sigma=-1.0)
    with pytest.raises(ValueError):
        EpisodeConfig(duration=0.0)
    with pytest.raises(ValueError):
        EpisodeConfig(method="walking")
    assert with_method(EpisodeConfig(), "passive").method is Method.PASSIVE
    with pytest.raises(ValueError):
        batch_run(EpisodeConfig(), 0)


def test_slower_control_rate():
    params = PlantParams(dt_control=0.02)
    cfg = _cfg(Method.LIPS, plant=params, duration=0.4, gains=PdGains())
    m, wave = run_episode(cfg)
    assert len(wave) == 20 and not m.terminated_early
