import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from compgeom.errors import DomainError
from compgeom.model_geometry import (ModelSurface, conjugate_time, cut_locus_tree, cut_time,
                                     d_theta, d_theta_batch, geodesic_trace, injectivity_radius,
                                     r_phi, reference_map_model)
from compgeom.profiles import builtin_profile

PI = math.pi
SPHERE = ModelSurface(builtin_profile("sphere", [1.0]))
HYP = ModelSurface(builtin_profile("hyperbolic", [1.0]))


def test_r_phi_sphere_closed_form():
    r1, t = 0.7, np.linspace(0.1, 2.5, 9)
    for phi in (0.2, 1.3, 2.8):
        # phi is measured from the outward meridian
        exact = np.arccos(np.cos(r1) * np.cos(t) - np.sin(r1) * np.sin(t) * np.cos(phi))
        got = np.asarray(r_phi(SPHERE, r1, phi, t))
        assert np.max(np.abs(got - exact)) < 1e-8


def test_geodesic_clairaut_constant():
    path = geodesic_trace(SPHERE, 0.9, 1.1, 2.5, n_samples=129)
    c = np.sin(path.r) ** 2 * path.dtheta_dt
    assert np.ptp(c) < 1e-8
    assert path.clairaut == pytest.approx(math.sin(0.9) * math.sin(1.1), abs=1e-10)
    assert path.length == pytest.approx(2.5)


def test_hyperbolic_distance():
    r1 = np.array([0.3, 1.0, 2.0])
    D = np.asarray(d_theta_batch(HYP, r1[:, None], 1.5, np.array([0.1, 1.0, 3.0])[None, :]))
    exact = oracles.hyperbolic_distance(r1[:, None], 1.5, np.array([0.1, 1.0, 3.0])[None, :])
    assert np.max(np.abs(D - exact)) < 1e-8


def test_distance_symmetries():
    a = d_theta(SPHERE, 0.4, 2.0, 1.0)
    assert d_theta(SPHERE, 2.0, 0.4, 1.0) == pytest.approx(a, abs=1e-9)
    assert d_theta(SPHERE, 0.4, 2.0, 2 * PI - 1.0) == pytest.approx(a, abs=1e-9)
    assert d_theta(SPHERE, 0.4, 0.4, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_distance_info_meridian():
    info = d_theta_batch(SPHERE, 1.0, 1.5, PI, info=True)
    # through the vertex: 1.0 + 1.5 < 2 pi - 2.5
    assert float(np.atleast_1d(info.distance)[0]) == pytest.approx(2.5, abs=1e-8)
    assert bool(np.atleast_1d(info.meridian)[0])
    assert float(np.atleast_1d(info.phi)[0]) == pytest.approx(PI, abs=1e-8)


def test_domain():
    with pytest.raises(DomainError):
        d_theta(SPHERE, 4.0, 1.0, 0.5)


def test_conjugate_and_cut_on_sphere():
    assert conjugate_time(SPHERE, 0.8, 1.0) == pytest.approx(PI, abs=1e-6)
    assert cut_time(SPHERE, 0.8, 1.0) == pytest.approx(PI, abs=1e-6)
    assert injectivity_radius(SPHERE, 0.8, n_angles=16) == pytest.approx(PI, abs=1e-6)
    assert conjugate_time(HYP, 0.8, 1.0, t_max=5.0) is None


def test_sphere_cut_locus_is_antipode():
    tree = cut_locus_tree(SPHERE, 1.0, n_angles=16)
    cp = tree.cut_points[~tree.unbounded]
    assert np.allclose(cp[:, 0], PI - 1.0, atol=1e-6)
    assert np.allclose(cp[:, 1], PI, atol=1e-6)
    assert not tree.branch_arcs


def test_reference_map():
    ref = reference_map_model(SPHERE, 1.0, (1.5, 0.7))
    assert ref.x == pytest.approx(float(oracles.sphere_distance(1.0, 1.5, 0.7)), abs=1e-8)
    assert ref.y == pytest.approx(1.5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0), st.floats(0.0, PI))
def test_sphere_matches_oracle_property(r1, r2, th):
    assert d_theta(SPHERE, r1, r2, th) == pytest.approx(
        float(oracles.sphere_distance(r1, r2, th)), abs=1e-8)


def test_monotone_in_theta_on_ellipsoid():
    m = ModelSurface(builtin_profile("oblate", [2.0, 1.0]))
    th = np.linspace(0, PI, 41)
    D = np.asarray(d_theta_batch(m, 1.0, 2.0, th))
    assert np.all(np.diff(D) >= -1e-9)


@pytest.mark.parametrize("th", [1e-11, 1e-8, 1e-6, 1e-4])
def test_targets_next_to_the_outward_meridian(th):
    for r1, r2 in ((1.0, 2.0), (2.0, 1.0), (0.1, 3.0)):
        assert d_theta(SPHERE, r1, r2, th) == pytest.approx(
            float(oracles.sphere_distance(r1, r2, th)), abs=1e-9)
    obl = ModelSurface(builtin_profile("oblate", [2.0, 1.0]))
    d = d_theta(obl, 1.0, 2.0, th)
    y = float(obl.profile.eval(np.array([1.0]))[0][0])
    assert 1.0 - 1e-12 <= d <= 1.0 + y * th + 1e-12
