"""Independent closed-form oracles with frozen reference values.

Nothing here imports compgeom; every value is either a textbook formula or a
constant frozen before the solvers were run against it.
"""
import math

import numpy as np

# first positive zero of the Bessel function J0 (frozen)
J01 = 2.404825557695773
HEMISPHERE_LAMBDA = 2.0


def j0_series(x: float, terms: int = 60) -> float:
    """J0 from its power series; accurate for x < 5 in double precision."""
    s, term = 0.0, 1.0
    q = -(x * x) / 4.0
    for k in range(terms):
        if k:
            term *= q / (k * k)
        s += term
    return s


def j0_first_root(tol: float = 1e-15) -> float:
    """Bisection for the first zero of J0 on [2, 3]."""
    lo, hi = 2.0, 3.0
    assert j0_series(lo) > 0 > j0_series(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if j0_series(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sphere_distance(r1, r2, theta, k: float = 1.0):
    """Great-circle distance between polar points at colatitudes ``r1``, ``r2``.

    Uses the atan2 form of ``arccos(cos r1 cos r2 + sin r1 sin r2 cos theta)``,
    which agrees with it in exact arithmetic and keeps full precision near 0 and pi.
    """
    s = math.sqrt(k)
    a, b = np.asarray(r1, float) * s, np.asarray(r2, float) * s
    th = np.asarray(theta, float)
    u = np.stack(np.broadcast_arrays(np.sin(a), 0.0 * a, np.cos(a)), -1)
    v = np.stack(np.broadcast_arrays(np.sin(b) * np.cos(th), np.sin(b) * np.sin(th), np.cos(b)), -1)
    cr = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.arctan2(cr, np.sum(u * v, axis=-1)) / s


def sphere_distance_arccos(r1, r2, theta):
    return np.arccos(np.clip(np.cos(r1) * np.cos(r2) + np.sin(r1) * np.sin(r2) * np.cos(theta),
                             -1.0, 1.0))


def plane_distance(r1, r2, theta):
    """Law of cosines in the cancellation-free form."""
    r1, r2, th = (np.asarray(v, float) for v in (r1, r2, theta))
    return np.sqrt((r1 - r2) ** 2 + 4.0 * r1 * r2 * np.sin(th / 2.0) ** 2)


def hyperbolic_distance(r1, r2, theta, k: float = 1.0):
    s = math.sqrt(k)
    a, b = np.asarray(r1, float) * s, np.asarray(r2, float) * s
    c = np.cosh(a) * np.cosh(b) - np.sinh(a) * np.sinh(b) * np.cos(theta)
    return np.arccosh(np.maximum(c, 1.0)) / s


# flat cylinder example: o at angle 0, p = (3 pi/4, 0), q = (5 pi/4, 0) on the
# unit circle times R; sigma runs from p to q through angle pi.
CYL_P = (3 * math.pi / 4, 0.0)
CYL_Q = (5 * math.pi / 4, 0.0)
CYL_KINK = math.pi / 4


def cylinder_L_o(t):
    t = np.asarray(t, float)
    return np.where(t <= math.pi / 4, 3 * math.pi / 4 + t, 5 * math.pi / 4 - t)


def cylinder_L_model(t):
    t = np.asarray(t, float)
    return np.sqrt((3 * math.pi / 4 - t / 3) ** 2 + 8 * t * t / 9)


def sphere_ball_area(rho: float, k: float = 1.0) -> float:
    return 2 * math.pi * (1 - math.cos(math.sqrt(k) * rho)) / k


def disc_area(rho: float) -> float:
    return math.pi * rho * rho
