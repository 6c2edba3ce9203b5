"""Numerical comparison geometry: model surfaces, attraction and triangle comparison."""

__version__ = "0.1.0"

from .errors import (ChartExceeded, CompGeomError, ConfigError, ConvergenceError, DomainError,
                     IntegrationError, NoCorrespondingTriangle, NotOnBoundary, PreconditionError)
from .profiles import Profile, builtin_profile, curvature, perturb_profile, validate_profile
from .model_geometry import ModelSurface, d_theta, d_theta_batch, geodesic_trace, r_phi
from .manifolds import FlatCylinder, PolarSurface, builtin_polar, manifold_distance

__all__ = [
    "__version__",
    "ChartExceeded",
    "CompGeomError",
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "IntegrationError",
    "NoCorrespondingTriangle",
    "NotOnBoundary",
    "PreconditionError",
    "Profile",
    "builtin_profile",
    "curvature",
    "perturb_profile",
    "validate_profile",
    "ModelSurface",
    "d_theta",
    "d_theta_batch",
    "geodesic_trace",
    "r_phi",
    "FlatCylinder",
    "PolarSurface",
    "builtin_polar",
    "manifold_distance",
]
