"""Kinematics, torque mapping and deployment simulation for a two-motor
parallel ankle (roll/pitch footplate driven by two crank-and-rod chains)."""

from .geometry import AnkleGeometry, AnklePose, AnkleRates, fixture_geometry, validate_geometry
from .kinematics import fk_position, ik_position, jacobian, jacobian_dot
from .mapping import parallel_torque_from_serial, serial_torque_from_parallel

__version__ = "0.1.0"
