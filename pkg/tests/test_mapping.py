import dataclasses

import numpy as np
import pytest
from scipy.optimize import brentq

import oracles
from conftest import grid_poses, random_poses
from lips.errors import SingularConfiguration
from lips.geometry import AnklePose, AnkleRates
from lips.kinematics import ik_position, jacobian, jacobian_batch
from lips.mapping import (
    parallel_torque_batch,
    parallel_torque_from_serial,
    serial_torque_from_parallel,
    state_parallel_to_serial,
    state_serial_to_parallel,
)


def _J(geom, chi):
    return jacobian(geom, chi, ik_position(geom, chi).q)


@pytest.fixture(scope="module")
def singular_case(geom):
    """Wider roll range and motor range than the fixture; ``det J`` changes
    sign along the lower pitch edge near roll -0.55 while both rods stay
    well away from alignment with their arms."""
    wide = dataclasses.replace(geom, chi_limits=((-0.6, 0.6), geom.chi_limits[1]), q_limits=(-3.0, 3.0))
    theta = -0.7

    def det(phi):
        return np.linalg.det(_J(wide, (phi, theta)))

    phi = brentq(det, -0.6, -0.5, xtol=1e-15)
    return wide, np.array([phi, theta])


def test_zero_motor_torque_gives_zero_ankle_torque(geom):
    J = _J(geom, (0.1, -0.2))
    assert np.array_equal(serial_torque_from_parallel(J, np.zeros(2)), np.zeros(2))


def test_equal_motor_torques_give_pure_pitch(geom):
    tau_s = serial_torque_from_parallel(_J(geom, (0.0, 0.0)), np.ones(2))
    assert tau_s[0] == 0.0
    assert tau_s[1] != 0.0


def test_virtual_work_on_random_states(geom, rng):
    chi = random_poses(geom, 2000, rng)
    worst = 0.0
    for c in chi:
        J = _J(geom, c)
        tau_p, chi_dot = rng.normal(size=2), rng.normal(size=2)
        worst = max(worst, abs(serial_torque_from_parallel(J, tau_p) @ chi_dot - tau_p @ (J @ chi_dot)))
    assert worst < 1e-12


def test_torque_round_trip(geom, rng):
    for c in random_poses(geom, 500, rng):
        J = _J(geom, c)
        tau = rng.normal(size=2) * 10
        np.testing.assert_allclose(parallel_torque_from_serial(J, serial_torque_from_parallel(J, tau)), tau, atol=1e-10)


def test_zero_serial_torque_gives_zero_motor_torque(geom):
    assert np.array_equal(parallel_torque_from_serial(_J(geom, (0.2, 0.1)), np.zeros(2)), np.zeros(2))


def test_batch_torque_maps_match_scalar(geom, rng):
    chi = random_poses(geom, 64, rng)
    q = np.array([ik_position(geom, c).q for c in chi])
    J, _ = jacobian_batch(geom, chi, q)
    tau_s = rng.normal(size=(64, 2))
    tau_p, ok = parallel_torque_batch(J, tau_s)
    assert ok.all()
    for k in range(64):
        np.testing.assert_array_equal(tau_p[k], parallel_torque_from_serial(J[k], tau_s[k]))


def test_singular_jacobian_raises(singular_case):
    wide, chi = singular_case
    J = _J(wide, chi)
    assert abs(np.linalg.det(J)) < 1e-8
    with pytest.raises(SingularConfiguration):
        parallel_torque_from_serial(J, np.array([1.0, 0.0]))
    tau_p, ok = parallel_torque_batch(J[None], np.array([[1.0, 0.0]]))
    assert not ok[0] and np.array_equal(tau_p[0], np.zeros(2))


def test_singular_state_map_raises(singular_case):
    wide, chi = singular_case
    q = ik_position(wide, chi).q
    with pytest.raises(SingularConfiguration):
        state_parallel_to_serial(wide, q, np.array([0.1, 0.1]), guess=chi)


def test_exact_singular_matrix_raises():
    with pytest.raises(SingularConfiguration):
        parallel_torque_from_serial(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


def test_neutral_state_maps_to_zero(geom):
    ms = state_serial_to_parallel(geom, AnklePose(0.0, 0.0), AnkleRates((0.0, 0.0), (0.0, 0.0)))
    assert np.allclose(ms.q, 0.0, atol=1e-15)
    assert np.array_equal(ms.q_dot, np.zeros(2)) and np.array_equal(ms.q_ddot, np.zeros(2))


def test_pure_pitch_rates_are_symmetric(geom):
    ms = state_serial_to_parallel(geom, AnklePose(0.0, -0.3), AnkleRates((0.0, 0.4), (0.0, -1.0)))
    assert ms.q_dot[0] == pytest.approx(ms.q_dot[1], abs=1e-14)
    assert ms.q_ddot[0] == pytest.approx(ms.q_ddot[1], abs=1e-13)


def test_state_map_matches_oracle_differences(geom, rng):
    T = 1.0
    h = 1e-4
    for _ in range(5):
        a, b = random_poses(geom, 2, rng)
        t = rng.uniform(0.2, 0.8)
        pos, vel, acc = oracles.quintic(a, b, T, np.array([t - h, t, t + h]))
        ms = state_serial_to_parallel(geom, AnklePose(*pos[1]), AnkleRates(tuple(vel[1]), tuple(acc[1])))
        qs = np.array([oracles.ik(geom, *p) for p in pos])
        np.testing.assert_allclose(ms.q, qs[1], atol=1e-12)
        np.testing.assert_allclose(ms.q_dot, (qs[2] - qs[0]) / (2 * h), atol=1e-6)
        np.testing.assert_allclose(ms.q_ddot, (qs[2] - 2 * qs[1] + qs[0]) / h**2, atol=1e-3)


def test_state_round_trip_on_grid(geom, rng):
    for c in grid_poses(geom, 15):
        chi_dot = rng.normal(size=2)
        ms = state_serial_to_parallel(geom, AnklePose(*c), AnkleRates(tuple(chi_dot), (0.0, 0.0)))
        pose, rates = state_parallel_to_serial(geom, ms.q, ms.q_dot)
        np.testing.assert_allclose(pose.as_array(), c, atol=1e-8)
        np.testing.assert_allclose(rates, chi_dot, atol=1e-8)


def test_zero_motor_rate_gives_zero_ankle_rate(geom):
    q = ik_position(geom, (0.1, -0.2)).q
    _, rates = state_parallel_to_serial(geom, q, np.zeros(2))
    assert np.array_equal(rates, np.zeros(2))
