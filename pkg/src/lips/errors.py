"""Exception hierarchy shared by every module.

Domain errors (workspace exits, singularities, non-convergence, bad geometry,
bad bindings) map to CLI exit code 1. Input-format errors derive from
:class:`FormatError` and map to exit code 2, like command-line usage errors.
"""

from __future__ import annotations


class LipsError(Exception):
    """Base class for all package errors."""


# -- geometry -----------------------------------------------------------------


class InvalidGeometry(LipsError):
    """A linkage constant violates its scalar invariant."""


class InfeasibleWorkspace(LipsError):
    """The declared workspace contains a pose with no loop-closing motor angle."""

    def __init__(self, message: str, chi=None):
        super().__init__(message)
        self.chi = chi


# -- kinematics -----------------------------------------------------------------


class KinematicsError(LipsError):
    pass


class Infeasible(KinematicsError):
    """``a cos q + b sin q = c`` has no real root."""


class WorkspaceError(KinematicsError):
    """The requested pose cannot be reached (outside limits or loop cannot close)."""


class LimitError(KinematicsError):
    """Every loop-closing root lies outside the motor angle limits."""


class SingularConfiguration(KinematicsError):
    """The rod is aligned with the drive arm, or J cannot be inverted."""


class NoConvergence(KinematicsError):
    """Forward kinematics did not converge.

    ``best`` holds the best iterate (phi, theta) and ``residual`` the largest
    motor-angle error estimate at that iterate, in rad.
    """

    def __init__(self, message: str, best=None, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


# -- plant ----------------------------------------------------------------------


class Diverged(LipsError):
    """Plant velocity exceeded the divergence threshold."""


# -- ingest ---------------------------------------------------------------------


class FormatError(LipsError):
    pass


class UrdfSyntaxError(FormatError):
    """Malformed XML, or XML outside the supported subset."""


class SchemaError(FormatError):
    """A required element/attribute is missing, or an attribute is unknown."""


class LoopError(FormatError):
    """The joint graph is not a tree."""


class BindError(LipsError):
    """An ankle binding references a joint of the wrong type or axis."""
