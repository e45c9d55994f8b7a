"""dG(0)-in-time, cG(r)-in-space solver and audit laboratory for parabolic PDEs
with time-dependent coefficients."""

from .coeffs import CoefficientField, ellipticity_audit, get_field, temporal_modulus_audit
from .dg0solver import DgSolution, ParabolicProblem, jumps, solve
from .errors import (
    ConfigError,
    Dg0Error,
    InsufficientData,
    InvalidArgument,
    InvalidField,
    InvalidMesh,
    NumericFailure,
    ResourceLimit,
)
from .femspace import FeSpace
from .mesh import Mesh, make_interval_mesh, make_unit_square_tri_mesh
from .opcalc import OperatorCalculus
from .timegrid import TimeGrid, make_graded, make_uniform, validate_conditions

__version__ = "0.1.0"

__all__ = [
    "CoefficientField", "ConfigError", "Dg0Error", "DgSolution", "FeSpace", "InsufficientData",
    "InvalidArgument", "InvalidField", "InvalidMesh", "Mesh", "NumericFailure",
    "OperatorCalculus", "ParabolicProblem", "ResourceLimit", "TimeGrid", "ellipticity_audit",
    "get_field", "jumps", "make_graded", "make_interval_mesh", "make_uniform",
    "make_unit_square_tri_mesh", "solve", "temporal_modulus_audit", "validate_conditions",
]
