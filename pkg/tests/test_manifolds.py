import math

import numpy as np
import pytest

import oracles
from compgeom.errors import DomainError
from compgeom.manifolds import (FlatCylinder, builtin_polar, dini_derivatives, distance_batch,
                                manifold_distance, manifold_geodesic, mesh_distance_oracle)

PI = math.pi


def test_plane_distance():
    plane = builtin_polar("plane")
    d, paths = manifold_distance(plane, (1.0, 0.2), (2.0, 1.9))
    assert d == pytest.approx(float(oracles.plane_distance(1.0, 2.0, 1.7)), abs=1e-10)
    assert len(paths) == 1 and paths[0].length == pytest.approx(d)


def test_sphere_surface_distance():
    s = builtin_polar("sphere", [1.0])
    d, _ = manifold_distance(s, (0.5, 0.0), (2.0, 2.0))
    assert d == pytest.approx(float(oracles.sphere_distance(0.5, 2.0, 2.0)), abs=1e-8)


def test_cylinder_wraps_and_ties():
    cyl = FlatCylinder()
    assert cyl.inj_o == pytest.approx(PI)
    d, paths = manifold_distance(cyl, (0.0, 0.0), (PI, 1.0))
    assert d == pytest.approx(math.hypot(PI, 1.0))
    assert len(paths) == 2
    d2, _ = manifold_distance(cyl, (0.1, 0.0), (2 * PI - 0.1, 0.0))
    assert d2 == pytest.approx(0.2)


def test_distance_batch_matches():
    plane = builtin_polar("plane")
    A = np.array([[1.0, 0.0], [0.5, 2.0], [2.0, 4.0]])
    B = np.array([[0.3, 1.0], [1.5, 0.1], [1.0, 5.0]])
    got = distance_batch(plane, A, B)
    want = [manifold_distance(plane, tuple(a), tuple(b))[0] for a, b in zip(A, B)]
    assert np.allclose(got, want, atol=1e-10)


def test_warped_matches_mesh_oracle():
    w = builtin_polar("warped", [0.05])
    assert not w.symmetric
    d, _ = manifold_distance(w, (0.8, 0.3), (1.2, 2.5))
    field = mesh_distance_oracle(w, (0.8, 0.3), resolution=128, extent=2.0)
    dm = field.query((1.2, 2.5))
    # the relaxed grid path is an independent estimate of the same length
    assert abs(d - dm) < 1e-4 * d


def test_geodesic_and_dini():
    plane = builtin_polar("plane")
    path = manifold_geodesic(plane, (1.0, 0.0), 0.5, 2.0, n_samples=65)
    assert path.length == pytest.approx(2.0)
    d = dini_derivatives(plane, path, 1.0)
    assert d.two_sided


def test_point_domain():
    with pytest.raises(DomainError):
        manifold_distance(builtin_polar("warped", [0.05]), (5.0, 0.0), (1.0, 0.0))
    with pytest.raises(DomainError):
        manifold_distance(FlatCylinder(), ((0.5, 0.5), 0.0), (1.0, 0.0))
