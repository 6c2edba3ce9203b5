import math

import numpy as np
import pytest

from compgeom.attraction import (conjugate_distance_check, radial_curvature_bound_check,
                                 s_margin, sra_geodesic_check, sra_pointwise_check)
from compgeom.errors import PreconditionError
from compgeom.manifolds import FlatCylinder, builtin_polar
from compgeom.model_geometry import ModelSurface
from compgeom.profiles import builtin_profile

SPHERE = ModelSurface(builtin_profile("sphere", [1.0]))
PLANE = ModelSurface(builtin_profile("plane"))


def test_margin_formula_plane_vs_sphere():
    r = np.array([0.5, 1.0, 2.0])
    m = s_margin(builtin_polar("plane"), SPHERE, r, 0.0 * r)
    assert np.allclose(m, 1 / r - 1 / np.tan(r), atol=1e-12)


def test_radial_curvature_bound():
    rep = radial_curvature_bound_check(builtin_polar("plane"), SPHERE)
    assert rep.holds and rep.details["pointwise_holds"]
    rep = radial_curvature_bound_check(builtin_polar("sphere", [1.0]), PLANE)
    assert not rep.holds


def test_warped_fixture_is_flagged():
    rep = sra_pointwise_check(builtin_polar("warped", [0.01]), SPHERE)
    assert rep.holds
    assert "non-analytic" in rep.note


def test_geodesic_sampling_deterministic():
    a = sra_geodesic_check(builtin_polar("plane"), SPHERE, n_samples=20, seed=3)
    b = sra_geodesic_check(builtin_polar("plane"), SPHERE, n_samples=20, seed=3)
    assert a.margin_min == b.margin_min and a.holds


def test_preconditions():
    with pytest.raises(PreconditionError):
        sra_pointwise_check(builtin_polar("plane"), SPHERE, grid=(16, 16))
    with pytest.raises(PreconditionError):
        sra_pointwise_check(FlatCylinder(), SPHERE)
    with pytest.raises(PreconditionError):
        conjugate_distance_check(builtin_polar("sphere", [1.0]), PLANE)


def test_equal_pair_has_no_conjugate_before_ell():
    rep = conjugate_distance_check(builtin_polar("sphere", [1.0]), SPHERE, n_angles=4)
    # Jacobi fields of the sphere itself vanish exactly at ell
    assert rep.passed and rep.jacobi_dominates
