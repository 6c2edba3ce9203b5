import math

import numpy as np
import pytest

from compgeom.errors import DomainError, PreconditionError
from compgeom.manifolds import FlatCylinder, builtin_polar
from compgeom.model_geometry import ModelSurface
from compgeom.profiles import builtin_profile
from compgeom.radii import (convexity_bound, convexity_radius_opposite, pinching_classify,
                            r_star, reflected_profile, spot_check_convexity)

PI = math.pi


def test_r_star_values():
    assert r_star(FlatCylinder())[0] == pytest.approx(PI / 2, abs=1e-3)
    val, limited = r_star(builtin_polar("plane"))
    assert limited


def test_reflected_sphere_is_sphere():
    p = builtin_profile("sphere", [1.0])
    q = reflected_profile(p)
    r = np.linspace(0.1, 3.0, 9)
    assert np.allclose(q.y(r), p.y(r), atol=1e-14)


@pytest.mark.slow
def test_opposite_vertex_of_sphere():
    cv, _ = convexity_radius_opposite(ModelSurface(builtin_profile("sphere", [1.0])))
    assert cv == pytest.approx(PI / 2, abs=1e-3)


def test_spot_check_fails_beyond_hemisphere():
    s = builtin_polar("sphere", [1.0])
    assert spot_check_convexity(s, 1.2, n_pairs=20)["passed"]
    assert not spot_check_convexity(s, 2.2, n_pairs=40)["passed"]


@pytest.mark.slow
def test_cylinder_bound():
    rep = convexity_bound(FlatCylinder(), ModelSurface(builtin_profile("plane")), n_pairs=30)
    assert rep.r_star == pytest.approx(PI / 2, abs=1e-3)
    assert rep.spot_check["passed"]


def test_pinching_verdicts():
    assert pinching_classify(2.5, PI, PI / 2, PI).verdict == "Sphere"
    assert pinching_classify(PI / 2, PI, PI / 2, PI).verdict == "Sphere"
    assert pinching_classify(PI / 2, PI, PI / 2, 1.0).verdict == "Inconclusive"
    assert pinching_classify(1.0, PI, PI / 2, PI).verdict == "Inconclusive"
    with pytest.raises(PreconditionError):
        pinching_classify(2.0, PI, PI / 2, 4.0)
    with pytest.raises(DomainError):
        pinching_classify(math.inf, PI, PI / 2, PI)
