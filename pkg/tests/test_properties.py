import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from lips.control import PdGains, pd_torque
from lips.geometry import fixture_geometry
from lips.ingest import Joint, Limit, Origin, RobotModel, parse_urdf_subset, serialize_urdf
from lips.kinematics import fk_position, ik_position, ik_position_batch, jacobian
from lips.mapping import parallel_torque_from_serial, serial_torque_from_parallel

GEOM = fixture_geometry()
(PLO, PHI), (TLO, THI) = GEOM.chi_limits

roll = st.floats(PLO, PHI, allow_nan=False)
pitch = st.floats(TLO, THI, allow_nan=False)
small = st.floats(-10.0, 10.0, allow_nan=False)
vec2 = st.tuples(small, small).map(np.array)

settings.register_profile("lips", deadline=None, max_examples=200)
settings.load_profile("lips")


@given(roll, pitch)
def test_fk_inverts_ik(phi, theta):
    q = ik_position(GEOM, (phi, theta)).q
    np.testing.assert_allclose(fk_position(GEOM, q).as_array(), [phi, theta], atol=1e-8)


@given(roll, pitch)
def test_ik_is_deterministic_and_batch_identical(phi, theta):
    a = ik_position(GEOM, (phi, theta))
    b = ik_position(GEOM, (phi, theta))
    batch = ik_position_batch(GEOM, np.array([[phi, theta]]))
    assert a.branch == b.branch
    assert np.array_equal(a.q, batch.q[0])


@given(roll, pitch, vec2, vec2)
def test_virtual_work(phi, theta, tau_p, chi_dot):
    J = jacobian(GEOM, (phi, theta), ik_position(GEOM, (phi, theta)).q)
    assert abs(serial_torque_from_parallel(J, tau_p) @ chi_dot - tau_p @ (J @ chi_dot)) < 1e-12


@given(roll, pitch, vec2)
def test_torque_maps_are_inverse(phi, theta, tau):
    J = jacobian(GEOM, (phi, theta), ik_position(GEOM, (phi, theta)).q)
    np.testing.assert_allclose(parallel_torque_from_serial(J, serial_torque_from_parallel(J, tau)), tau, atol=1e-9)


@given(vec2, vec2, st.floats(0, 100), st.floats(0, 10))
def test_pd_is_odd(e, ed, kp, kd):
    g = PdGains(kp=kp, kd=kd, tau_limit=1e9)
    z = np.zeros(2)
    np.testing.assert_array_equal(pd_torque(g, e, ed, z, z), -pd_torque(g, -e, -ed, z, z))


@given(vec2, vec2, st.floats(0.1, 100))
def test_pd_respects_limit(e, ed, limit):
    g = PdGains(tau_limit=limit)
    assert np.all(np.abs(pd_torque(g, e, ed, np.zeros(2), np.zeros(2))) <= limit)


names = st.text("abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=8)
finite = st.floats(-3.0, 3.0, allow_nan=False)


@st.composite
def trees(draw):
    links = draw(st.lists(names, min_size=1, max_size=7, unique=True))
    joints = []
    for k, child in enumerate(links[1:], start=1):
        parent = links[draw(st.integers(0, k - 1))]
        jtype = draw(st.sampled_from(["revolute", "fixed"]))
        axis = draw(st.sampled_from([(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]))
        origin = Origin(draw(st.tuples(finite, finite, finite)), draw(st.tuples(finite, finite, finite)))
        lo = draw(finite)
        limit = draw(st.none() | st.just(Limit(lo, lo + 1.0)))
        joints.append(Joint(f"j{k}", jtype, parent, child, origin, axis, limit))
    return RobotModel(draw(names), tuple(links), tuple(joints))


@given(trees())
def test_urdf_round_trip(model):
    assert parse_urdf_subset(serialize_urdf(model)).structure() == model.structure()
