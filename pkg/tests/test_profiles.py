import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compgeom.errors import DomainError, PreconditionError
from compgeom.profiles import (builtin_profile, curvature, perturb_profile, tabulated_profile,
                               validate_profile)


@pytest.mark.parametrize("name,params", [("plane", []), ("sphere", [1.0]), ("sphere", [4.0]),
                                         ("hyperbolic", [0.5]), ("prolate", [1.0, 2.0]),
                                         ("oblate", [2.0, 1.0])])
def test_builtins_validate(name, params):
    p = builtin_profile(name, params)
    assert validate_profile(p).passed


def test_sphere_shape():
    p = builtin_profile("sphere", [4.0])
    assert p.closed and p.ell == pytest.approx(math.pi / 2, abs=1e-15)
    r = np.linspace(0.1, 1.4, 7)
    assert np.allclose(p.y(r), np.sin(2 * r) / 2, atol=1e-15)
    assert np.allclose(curvature(p, r), 4.0, atol=1e-12)


def test_hyperbolic_curvature():
    p = builtin_profile("hyperbolic", [0.5])
    assert not p.closed and math.isinf(p.ell)
    assert np.allclose(curvature(p, [0.3, 2.0]), -0.5, atol=1e-12)


def test_ellipsoid_meridian_length():
    # quarter meridian of x^2 + z^2/4 = 1
    from scipy.integrate import quad
    q, _ = quad(lambda s: math.hypot(math.cos(s), 2 * math.sin(s)), 0, math.pi / 2,
                epsabs=1e-14)
    p = builtin_profile("prolate", [1.0, 2.0])
    assert p.ell == pytest.approx(2 * q, rel=1e-10)


def test_polynomial_violates_initial_slope():
    rep = validate_profile(builtin_profile("polynomial", [0.0, 0.0, 1.0]))
    assert not rep.passed
    assert "y'(0)=1" in {v.condition for v in rep.violations}
    assert "violation" in rep.summary()


def test_odd_extension():
    p = builtin_profile("sphere", [1.0])
    y, y1, y2 = p.eval(np.array([-0.3, 0.3, math.pi + 0.3]))
    assert y[0] == pytest.approx(-y[1]) and y1[0] == pytest.approx(y1[1])
    assert y[2] == pytest.approx(-y[1])
    assert p.vertex_distance(math.pi + 0.3) == pytest.approx(math.pi - 0.3)


def test_errors():
    with pytest.raises(PreconditionError):
        builtin_profile("torus")
    with pytest.raises(PreconditionError):
        builtin_profile("sphere", [-1.0])
    with pytest.raises(DomainError):
        curvature(builtin_profile("sphere", [1.0]), 4.0)


def test_tabulated_closes_on_zero():
    r = np.linspace(0, math.pi, 401)
    p = tabulated_profile(r, np.sin(r))
    assert p.closed and p.ell == pytest.approx(math.pi)
    s = np.linspace(0.05, 3.0, 50)
    assert np.max(np.abs(p.y(s) - np.sin(s))) < 1e-8
    assert not p.analytic
    with pytest.raises(PreconditionError):
        tabulated_profile([0.1, 0.2, 0.3, 0.4], [1, 2, 3, 4])


def test_perturbation_closed_endpoint():
    p = builtin_profile("sphere", [1.0])
    q = perturb_profile(p, 1e-3, 0.5, 1.5)
    assert q.closed and q.ell == pytest.approx(math.pi - 1e-3)
    assert abs(float(q.y(np.asarray(q.ell)))) < 1e-9
    assert float(q.y1(np.asarray(q.ell))) == pytest.approx(-1.0, abs=1e-9)
    r = np.linspace(0.01, q.ell - 0.01, 2000)
    assert np.all(q.y1(r) / q.y(r) <= p.y1(r) / p.y(r) + 1e-12)


def test_perturbation_errors():
    p = builtin_profile("sphere", [1.0])
    with pytest.raises(PreconditionError):
        perturb_profile(p, 0.0, 0.5, 1.0)
    with pytest.raises(PreconditionError):
        perturb_profile(p, 1e-3, 1.0, 0.5)
    with pytest.raises(PreconditionError):
        perturb_profile(p, 1.0, 0.5, 2.9)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e-2), st.floats(0.1, 1.0), st.floats(0.2, 1.5))
def test_perturbation_identity_property(delta, r1, width):
    p = builtin_profile("hyperbolic", [1.0])
    r2 = r1 + width
    q = perturb_profile(p, delta, r1, r2)
    r = np.linspace(r1, r2, 101)[1:-1]
    assert np.max(np.abs(q.y1(r) / q.y(r) + delta - p.y1(r) / p.y(r))) < 1e-9
