import math

import numpy as np
import pytest

import oracles
from compgeom.errors import ChartExceeded, PreconditionError
from compgeom.manifolds import builtin_polar
from compgeom.model_geometry import ModelSurface
from compgeom.profiles import builtin_profile
from compgeom.spectral_volume import (first_radial_zero, lambda1_manifold_mesh, lambda1_model,
                                      manifold_ball_area, model_ball_volume, sphere_area,
                                      spectral_sweep, volume_density, volume_density_check)

PI = math.pi
SPH = builtin_profile("sphere", [1.0])
PLN = builtin_profile("plane")


def test_sphere_areas():
    assert sphere_area(2) == pytest.approx(2 * PI)
    assert sphere_area(3) == pytest.approx(4 * PI)


def test_volume_in_dimension_three():
    rho = 1.2
    exact = 4 * PI * (rho / 2 - math.sin(2 * rho) / 4)
    assert model_ball_volume(SPH, 3, rho) == pytest.approx(exact, rel=1e-12)


def test_density_limit():
    assert volume_density(builtin_polar("warped", [0.05])).limit_ratio() < 1e-9


def test_eigen_scaling_and_dimension():
    j = oracles.j0_first_root()
    for rho in (0.5, 2.0):
        assert lambda1_model(PLN, 2, rho).lambda1 == pytest.approx(j * j / rho ** 2, rel=1e-8)
    # the 3-ball: lambda = pi^2 / rho^2
    assert lambda1_model(PLN, 3, 1.0).lambda1 == pytest.approx(PI ** 2, rel=1e-8)


def test_first_radial_zero_is_bessel_root():
    assert first_radial_zero(PLN, 2, 1.0, 3.0) == pytest.approx(oracles.J01, abs=1e-9)


def test_eigenfunction_profile():
    res = lambda1_model(SPH, 2, 1.0)
    assert res.monotone and res.residual < 1e-6
    assert res.phi_samples[0, 1] == pytest.approx(1.0, abs=1e-6)
    assert abs(res.phi_samples[-1, 1]) < 1e-6


def test_mesh_bracket_on_warped():
    w = builtin_polar("warped", [0.05])
    res = lambda1_manifold_mesh(w, 1.0, resolution=128)
    flat = lambda1_model(PLN, 2, 1.0).lambda1
    assert res.bracket[0] <= res.lambda1 <= res.bracket[1]
    # the plane attracts more strongly than the warped surface
    assert res.bracket[0] >= flat


def test_chart_exceeded():
    with pytest.raises(ChartExceeded):
        manifold_ball_area(builtin_polar("warped", [0.05]), 3.5)


def test_density_check_needs_attraction():
    with pytest.raises(PreconditionError):
        volume_density_check(builtin_polar("sphere", [1.0]), ModelSurface(PLN))


def test_sweep_shape():
    rows = spectral_sweep(builtin_polar("plane"), ModelSurface(SPH), [0.5, 1.0], eigen=False)
    assert rows.shape == (2, 6)
    assert np.all(rows[:, 1] >= rows[:, 2])
