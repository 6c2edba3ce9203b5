import math

import numpy as np
import pytest

import oracles
from compgeom.errors import NoCorrespondingTriangle, NotOnBoundary, PreconditionError
from compgeom.manifolds import FlatCylinder, builtin_polar
from compgeom.model_geometry import ModelSurface
from compgeom.profiles import builtin_profile
from compgeom.triangles import (boundary_case, build_comparison_triangle, classify_thin,
                                correspondence_exists, degenerate_compare,
                                injectivity_from_comparison, make_triangle, random_triangles,
                                verify_tct)

PI = math.pi
SPHERE = ModelSurface(builtin_profile("sphere", [1.0]))
PLANE = ModelSurface(builtin_profile("plane"))


def test_comparison_triangle_has_the_side_lengths():
    for a, b, c in [(1.0, 1.5, 0.8), (0.3, 2.5, 2.4), (2.0, 2.0, 2.2)]:
        comp = build_comparison_triangle(SPHERE, (a, b, c))
        r_end = float(np.asarray(comp.side.at(np.array([c]))[0])[0])
        assert r_end == pytest.approx(b, abs=1e-8)
        assert comp.side.length == pytest.approx(c)
        assert float(oracles.sphere_distance(a, b, comp.q_tilde[1])) == pytest.approx(c, abs=1e-7)


def test_no_corresponding_triangle():
    assert not correspondence_exists(SPHERE, (1.0, 1.0, 2.5))
    with pytest.raises(NoCorrespondingTriangle):
        build_comparison_triangle(SPHERE, (1.0, 1.0, 2.5))
    with pytest.raises(NoCorrespondingTriangle):
        build_comparison_triangle(SPHERE, (3.5, 1.0, 2.5))


def test_equal_pair_is_sharp():
    plane = builtin_polar("plane")
    tri = make_triangle(plane, (1.0, 0.3), (1.7, 2.0))
    rep = verify_tct(plane, PLANE, tri)
    assert abs(rep.max_violation) < 1e-9 and rep.asserted
    assert classify_thin(plane, SPHERE, tri)


def test_boundary_cases():
    assert boundary_case(SPHERE, (1.0, 0.4, 0.6)) == "i"
    assert boundary_case(SPHERE, (1.0, 0.5, 1.2)) is None
    plane = builtin_polar("plane")
    with pytest.raises(NotOnBoundary):
        degenerate_compare(SPHERE, make_triangle(plane, (1.0, 0.0), (1.0, 1.0)))


def test_distinct_vertices():
    with pytest.raises(PreconditionError):
        make_triangle(builtin_polar("plane"), (1.0, 0.0), (1.0, 0.0))


def test_random_triangles_seeded():
    plane = builtin_polar("plane")
    a = random_triangles(plane, SPHERE, 5, seed=7)
    b = random_triangles(plane, SPHERE, 5, seed=7)
    assert [t.lengths for t in a] == [t.lengths for t in b]
    assert all(correspondence_exists(SPHERE, t.lengths) for t in a)


def test_cylinder_not_asserted():
    cyl = FlatCylinder()
    tri = make_triangle(cyl, oracles.CYL_P, oracles.CYL_Q)
    rep = verify_tct(cyl, PLANE, tri)
    assert not rep.two_sided_ok and not rep.asserted
    assert rep.max_violation == pytest.approx(
        float(np.max(oracles.cylinder_L_o(rep.samples[:, 0])
                     - oracles.cylinder_L_model(rep.samples[:, 0]))), abs=1e-12)


def test_injectivity_cross_check_on_cylinder():
    rep = injectivity_from_comparison(FlatCylinder(), PLANE)
    assert rep.cut_distance == pytest.approx(PI)
    assert rep.violation_found and rep.consistent and rep.bound is None
