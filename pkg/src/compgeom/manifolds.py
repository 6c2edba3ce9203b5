"""Pointed test manifolds ``(M, o)`` and their distance functions.

Two kinds of manifold are supported: surfaces written in geodesic polar
coordinates about ``o`` (metric ``dr^2 + f(r, theta)^2 dtheta^2``) and the
flat cylinder ``S^1 x R``.

Rotationally symmetric polar surfaces reuse the model-surface machinery.
For general ``f`` geodesics are integrated as a Hamiltonian system in the
Cartesian coordinates ``(x, y) = r (cos theta, sin theta)`` of the chart,
which is regular at ``o``:

    H = (|p|^2 + h p_theta^2) / 2,   h = 1/f^2 - 1/r^2,   p_theta = x p_y - y p_x.

Boundary-value problems are seeded from a relaxed shortest path of the mesh
oracle and from a fan of geodesics, then polished by Newton's method.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import optimize, sparse
from scipy.sparse import csgraph

from . import _ode
from .errors import (ChartExceeded, ConvergenceError, DomainError, IntegrationError,
                     PreconditionError)
from .model_geometry import (GeodesicPath, ModelSurface, TIE_TOL, _folded, d_theta_batch,
                             geodesic_trace)
from .profiles import Profile, builtin_profile

__all__ = [
    "PolarSurface",
    "FlatCylinder",
    "DiniPair",
    "MeshField",
    "builtin_polar",
    "manifold_distance",
    "distance_batch",
    "base_distance",
    "dini_derivatives",
    "mesh_distance_oracle",
    "manifold_geodesic",
    "inner",
]

R_FLOOR = 1e-6          # below this radius the chart correction h is dropped
REL_TIE = 1e-7          # relative length gap that still counts as a second minimizer
FD_THETA = 1e-6


# --- manifolds ---------------------------------------------------------------

@dataclass(frozen=True)
class PolarSurface:
    """Surface with metric ``dr^2 + f(r, theta)^2 dtheta^2`` on ``r < r_dom``.

    ``f``, ``f_r``, ``f_rr`` (and optionally ``f_theta``) are vectorised in
    ``(r, theta)``. When ``profile`` is set the surface is rotationally
    symmetric and ``f(r, theta) = profile.y(r)``. ``inj`` is the injectivity
    radius at ``o``; it defaults to ``r_dom``.
    """

    f: Callable
    f_r: Callable
    f_rr: Callable
    r_dom: float
    f_theta: Optional[Callable] = field(default=None, repr=False)
    name: str = "custom"
    params: tuple = ()
    analytic: bool = True
    profile: Optional[Profile] = field(default=None, repr=False)
    inj: Optional[float] = None

    def __post_init__(self):
        if not self.r_dom > 0:
            raise PreconditionError("r_dom must be positive")
        r = np.linspace(1e-3, 2e-3, 3)
        th = np.linspace(0, 2 * np.pi, 7)[:, None]
        f0 = np.asarray(self.f(r, th), float)
        if np.any(~(f0 > 0)) or np.max(np.abs(self.f_r(np.zeros(1), th) - 1)) > 1e-6:
            raise PreconditionError("f must vanish to first order at o with f_r(0, theta) = 1")

    @property
    def symmetric(self) -> bool:
        return self.profile is not None

    @property
    def inj_o(self) -> float:
        return self.r_dom if self.inj is None else float(self.inj)

    @cached_property
    def model(self) -> Optional[ModelSurface]:
        return None if self.profile is None else ModelSurface(self.profile, validate=False)

    def parts(self, r, theta):
        """``(f, f_r, f_theta)``; ``f_theta`` falls back to central differences."""
        r = np.asarray(r, float)
        theta = np.asarray(theta, float)
        f = np.asarray(self.f(r, theta), float)
        fr = np.asarray(self.f_r(r, theta), float)
        if self.profile is not None:
            return f, fr, np.zeros(np.broadcast(r, theta).shape)
        if self.f_theta is not None:
            ft = np.asarray(self.f_theta(r, theta), float)
        else:
            ft = (np.asarray(self.f(r, theta + FD_THETA), float)
                  - np.asarray(self.f(r, theta - FD_THETA), float)) / (2 * FD_THETA)
        return f, fr, ft

    def radial_curvature(self, r, theta):
        return -np.asarray(self.f_rr(r, theta), float) / np.asarray(self.f(r, theta), float)

    @classmethod
    def from_profile(cls, profile: Profile, r_dom: Optional[float] = None) -> "PolarSurface":
        def f(r, th):
            return profile.eval(np.broadcast_arrays(r, th)[0])[0]

        def f_r(r, th):
            return profile.eval(np.broadcast_arrays(r, th)[0])[1]

        def f_rr(r, th):
            return profile.eval(np.broadcast_arrays(r, th)[0])[2]

        dom = profile.working_radius if r_dom is None else float(r_dom)
        inj = profile.ell if profile.closed else math.inf
        return cls(f, f_r, f_rr, dom, name=profile.name, params=tuple(profile.params),
                   analytic=profile.analytic, profile=profile, inj=inj)

    def __repr__(self):
        return f"PolarSurface({self.name}{list(self.params)}, r_dom={self.r_dom:g})"


@dataclass(frozen=True)
class FlatCylinder:
    """The flat cylinder ``S^1 x R`` of circumference ``2 pi`` based at ``((1, 0), 0)``.

    Points are ``((x, y), z)`` with ``x^2 + y^2 = 1`` or ``(angle, z)``.
    """

    circumference: float = 2 * math.pi
    name: str = "cylinder"

    def __post_init__(self):
        if self.circumference != 2 * math.pi:
            raise PreconditionError("the flat cylinder has circumference 2*pi")

    @property
    def inj_o(self) -> float:
        return math.pi

    def __repr__(self):
        return "FlatCylinder()"


@dataclass(frozen=True)
class DiniPair:
    """One-sided derivatives ``(left, right)`` of ``L_o`` along a curve."""

    left: float
    right: float

    @property
    def two_sided(self) -> bool:
        return abs(self.left - self.right) <= 1e-7


def _warped(params):
    eps = float(params[0]) if params else 0.05
    if eps < 0:
        raise PreconditionError("warped surface needs eps >= 0")

    def f(r, th):
        return r + eps * r**4 * (1 + np.cos(th) ** 2)

    def f_r(r, th):
        return 1 + 4 * eps * r**3 * (1 + np.cos(th) ** 2)

    def f_rr(r, th):
        return 12 * eps * r**2 * (1 + np.cos(th) ** 2)

    def f_theta(r, th):
        return -eps * r**4 * np.sin(2 * th)

    # f is not an odd function of r, so smoothness at o is not guaranteed
    return PolarSurface(f, f_r, f_rr, 3.0, f_theta, name="warped", params=(eps,),
                        analytic=False, inj=None)


def builtin_polar(name: str, params=()) -> PolarSurface:
    """Polar surface by family name.

    Profile families give rotationally symmetric surfaces; ``warped`` with
    parameter ``eps`` is ``f = r + eps r^4 (1 + cos^2 theta)`` on ``r < 3``.
    """
    if name == "warped":
        return _warped(list(params))
    return PolarSurface.from_profile(builtin_profile(name, params))


# --- points and tangents -----------------------------------------------------

def _cyl_point(p):
    a, z = p
    if np.ndim(a) == 1:
        x, y = (float(v) for v in a)
        if abs(math.hypot(x, y) - 1) > 1e-9:
            raise DomainError("cylinder points need x^2 + y^2 = 1")
        a = math.atan2(y, x)
    return float(np.mod(a, 2 * math.pi)), float(z)


def _polar_point(man: PolarSurface, p):
    r, th = (float(v) for v in p)
    if not (0 <= r <= man.r_dom) or not math.isfinite(th):
        raise DomainError(f"polar points need 0 <= r <= {man.r_dom}")
    if r == man.r_dom and not (man.symmetric and man.profile.closed):
        raise DomainError(f"polar points need r < {man.r_dom}")
    return r, float(np.mod(th, 2 * math.pi))


def _point(man, p):
    return _cyl_point(p) if isinstance(man, FlatCylinder) else _polar_point(man, p)


def _origin(man):
    return (0.0, 0.0)


def inner(man, point, u, w) -> float:
    """Metric inner product of coordinate tangent vectors at ``point``."""
    if isinstance(man, FlatCylinder):
        return float(u[0] * w[0] + u[1] * w[1])
    r, th = _polar_point(man, point)
    f = float(man.parts(r, th)[0]) if r > 0 else 0.0
    return float(u[0] * w[0] + f * f * u[1] * w[1])


def _wrap(d):
    return np.mod(d + math.pi, 2 * math.pi) - math.pi


# --- cylinder ----------------------------------------------------------------

def _cyl_path(a, da, dz, T, n):
    t = np.linspace(0.0, T, n)

    def evaluate(s):
        s = np.asarray(s, float)
        return (np.mod(a[0] + da * s, 2 * math.pi), a[1] + dz * s,
                np.full(s.shape, da), np.full(s.shape, dz))

    u, v, du, dv = evaluate(t)
    return GeodesicPath(t, u, v, du, dv, float(da), 0.0, [], "cylinder", evaluate,
                        (a[0], a[1], float(da), float(dz)))


def _cyl_distance(a, b, n=257):
    dphi = float(_wrap(b[0] - a[0]))
    dz = b[1] - a[1]
    wraps = [dphi]
    if abs(abs(dphi) - math.pi) < 1e-12:
        wraps = [math.pi, -math.pi]
    d = math.hypot(abs(dphi), dz)
    if d == 0:
        return 0.0, [_cyl_path(a, 1.0, 0.0, 0.0, 2)]
    return d, [_cyl_path(a, w / d, dz / d, d, n) for w in wraps]


# --- geodesics on polar surfaces ---------------------------------------------

def _cart_rhs(man: PolarSurface):
    def fun(Y, args):
        x, y, px, py = Y[:, 0], Y[:, 1], Y[:, 2], Y[:, 3]
        r = np.hypot(x, y)
        rr = np.maximum(r, R_FLOOR)
        th = np.arctan2(y, x)
        f, fr, ft = man.parts(rr, th)
        h = (rr - f) * (rr + f) / (f * f * rr * rr)
        hr = 2 / rr**3 - 2 * fr / f**3
        hth = -2 * ft / f**3
        live = r >= R_FLOOR
        h, hr, hth = h * live, hr * live, hth * live
        cx, cy = x / rr, y / rr
        gx = hr * cx - hth / rr * cy
        gy = hr * cy + hth / rr * cx
        pth = x * py - y * px
        out = np.empty_like(Y)
        out[:, 0] = px - h * pth * y
        out[:, 1] = py + h * pth * x
        out[:, 2] = -0.5 * (pth * pth * gx + 2 * h * pth * py)
        out[:, 3] = -0.5 * (pth * pth * gy - 2 * h * pth * px)
        return out
    return fun


def _cart_start(man: PolarSurface, a, alpha):
    """Phase-space start at ``a`` for unit directions at angle ``alpha`` from ``d/dr``.

    At ``o`` the angle is the polar angle of the outgoing ray.
    """
    alpha = np.atleast_1d(np.asarray(alpha, float))
    r, th = a
    n = alpha.size
    Y0 = np.zeros((n, 4))
    if r == 0:
        Y0[:, 2], Y0[:, 3] = np.cos(alpha), np.sin(alpha)
        return Y0
    f = float(man.parts(r, th)[0])
    er = np.array([math.cos(th), math.sin(th)])
    et = np.array([-math.sin(th), math.cos(th)])
    pr, pth = np.cos(alpha), f * np.sin(alpha)
    P = pr[:, None] * er + (pth / r)[:, None] * et
    Y0[:, 0], Y0[:, 1] = r * er[0], r * er[1]
    Y0[:, 2:] = P
    return Y0


def _cart_to_polar(man, Y, dY):
    x, y = Y[:, 0], Y[:, 1]
    r = np.hypot(x, y)
    th = np.mod(np.arctan2(y, x), 2 * math.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        dr = np.where(r > 0, (x * dY[:, 0] + y * dY[:, 1]) / r, np.hypot(dY[:, 0], dY[:, 1]))
        dth = np.where(r > 0, (x * dY[:, 1] - y * dY[:, 0]) / (r * r), 0.0)
    return r, th, dr, dth


def _cart_integrate(man, Y0, t_end, record=False, tol=1e-10):
    rdom = man.r_dom

    def halt(Y, args):
        return np.hypot(Y[:, 0], Y[:, 1]) >= rdom

    sol = _ode.integrate(_cart_rhs(man), Y0, t_end=t_end, halt=halt, rtol=tol,
                         atol=tol * 1e-2, record=record)
    if np.any(sol.status < 0):
        raise IntegrationError("geodesic integration failed to meet tolerance")
    return sol


def _direction_angle(man: PolarSurface, a, direction):
    """Angle from ``d/dr`` of a unit tangent; at ``o`` a float is the ray's polar angle."""
    r, th = a
    if np.ndim(direction) == 0:
        return float(direction)
    if r == 0:
        raise DomainError("at o give the direction as the polar angle of the ray")
    dr, dth = (float(v) for v in direction)
    f = float(man.parts(r, th)[0])
    norm = math.hypot(dr, f * dth)
    if abs(norm - 1) > 1e-6:
        raise DomainError(f"direction must be a unit tangent (norm {norm:.6g})")
    return math.atan2(f * dth, dr)


def _general_path(man: PolarSurface, a, alpha, t_max, n):
    Y0 = _cart_start(man, a, alpha)
    if t_max == 0:
        z = np.zeros(1)
        return GeodesicPath(z, z + a[0], z + a[1], z, z, 0.0, 0.0, [], "polar", None,
                            (a[0], a[1], float(alpha)))
    sol = _cart_integrate(man, Y0, t_max, record=True)
    if sol.status[0] == 2:
        raise ChartExceeded(f"geodesic leaves r < {man.r_dom} at t = {sol.t[0]:.6g}")
    steps = sol.steps
    fun = _cart_rhs(man)

    def evaluate(t):
        t = np.atleast_1d(np.asarray(t, float))
        if np.any(t < 0) or np.any(t > t_max * (1 + 1e-12)):
            raise DomainError("t outside the traced range")
        rows = np.clip(np.searchsorted(steps.t0, t, side="right") - 1, 0, len(steps.t0) - 1)
        x = np.clip((t - steps.t0[rows]) / steps.h[rows], 0.0, 1.0)
        Y = steps.evaluate(rows, x)
        return _cart_to_polar(man, Y, fun(Y, None))

    ts = np.linspace(0.0, t_max, n)
    r, th, dr, dth = evaluate(ts)
    if a[0] == 0:
        th[0] = np.mod(alpha, 2 * math.pi)
    f = man.parts(np.maximum(r, R_FLOOR), th)[0]
    defect = float(np.max(np.abs(dr**2 + (f * dth) ** 2 - 1)[r > 1e-3], initial=0.0))
    p_theta = float(Y0[0, 0] * Y0[0, 3] - Y0[0, 1] * Y0[0, 2])
    return GeodesicPath(ts, r, th, dr, dth, p_theta, max(1e-9, 2 * defect), [], "polar",
                        evaluate, (a[0], a[1], float(alpha)))


def _symmetric_path(man: PolarSurface, a, phi, side, t_max, n):
    """Geodesic from ``a`` at angle ``phi`` from ``d/dr``, turning towards ``side * d/dtheta``."""
    m = man.model
    r1, th1 = a
    if r1 == 0:
        # from o every geodesic is the ray of polar angle th1
        direction = th1

        def evaluate(t):
            t = np.atleast_1d(np.asarray(t, float))
            r, th, dr = _folded(m, t, np.full(t.shape, direction), np.ones(t.shape))
            return r, th, dr, np.zeros(t.shape)

        ts = np.linspace(0.0, t_max, n)
        r, th, dr, dth = evaluate(ts)
        path = GeodesicPath(ts, r, th, dr, dth, 0.0, 0.0, [], "polar", evaluate,
                            (0.0, th1, float(direction)))
    else:
        base = geodesic_trace(m, r1, phi, t_max, n)

        def evaluate(t, _b=base):
            r, th, dr, dth = _b.evaluate(t)
            return r, np.mod(th1 + side * th, 2 * math.pi), dr, side * dth

        path = GeodesicPath(base.t, base.r, np.mod(th1 + side * base.theta, 2 * math.pi),
                            base.dr_dt, side * base.dtheta_dt, side * base.clairaut,
                            base.err_bound, base.tags, "polar", evaluate,
                            (r1, th1, float(side * phi)))
    if np.max(path.r) > man.r_dom * (1 + 1e-12):
        raise ChartExceeded(f"geodesic leaves r < {man.r_dom}")
    return path


def manifold_geodesic(man, a, direction, t_max: float, n_samples: int = 257) -> GeodesicPath:
    """Unit-speed geodesic from ``a`` with initial ``direction``.

    ``direction`` is a coordinate tangent ``(du, dv)`` of unit length. On a
    polar surface it may also be the angle from ``d/dr`` (at ``o``: the polar
    angle of the ray).
    """
    if not (math.isfinite(t_max) and t_max >= 0):
        raise DomainError("t_max must be finite and nonnegative")
    if isinstance(man, FlatCylinder):
        p = _cyl_point(a)
        da, dz = (float(v) for v in direction)
        if abs(math.hypot(da, dz) - 1) > 1e-9:
            raise DomainError("direction must be a unit tangent")
        return _cyl_path(p, da, dz, t_max, n_samples)
    p = _polar_point(man, a)
    alpha = _direction_angle(man, p, direction)
    if man.symmetric:
        if p[0] == 0:
            return _symmetric_path(man, (0.0, float(np.mod(alpha, 2 * math.pi))), 0.0, 1,
                                   t_max, n_samples)
        al = float(_wrap(alpha))
        return _symmetric_path(man, p, abs(al), 1 if al >= 0 else -1, t_max, n_samples)
    return _general_path(man, p, alpha, t_max, n_samples)


# --- distances ---------------------------------------------------------------

def _symmetric_distance(man: PolarSurface, a, b, n):
    r1, th1 = a
    r2, th2 = b
    delta = float(np.mod(th2 - th1, 2 * math.pi))
    side = 1 if delta <= math.pi else -1
    theta = min(delta, 2 * math.pi - delta)
    if r1 == 0:
        return r2, [_symmetric_path(man, (0.0, th2), 0.0, 1, r2, n)]
    info = d_theta_batch(man.model, r1, r2, theta, info=True)
    d = float(info.distance)
    sides = (1, -1) if abs(theta - math.pi) < 1e-12 else (side,)
    paths, seen = [], set()
    for phi in info.candidates[0]:
        for s in sides:
            key = (round(phi, 9), s if 0 < phi < math.pi else 0)
            if key in seen:
                continue
            seen.add(key)
            paths.append(_symmetric_path(man, a, phi, s, d, n))
    return d, paths


def manifold_distance(man, a, b, n_samples: int = 257, resolution: int = 192):
    """Distance between ``a`` and ``b`` and every minimizing geodesic found.

    Geodesics whose length is within a relative ``1e-7`` of the minimum are
    all returned, e.g. both wraps around the cylinder for antipodal points.
    """
    pa, pb = _point(man, a), _point(man, b)
    if isinstance(man, FlatCylinder):
        return _cyl_distance(pa, pb, n_samples)
    if man.symmetric:
        return _symmetric_distance(man, pa, pb, n_samples)
    return _general_distance(man, pa, pb, n_samples, resolution)


def distance_batch(man, A, B) -> np.ndarray:
    """Distances between matching rows of point arrays ``A`` and ``B`` (shape ``(n, 2)``)."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    if isinstance(man, FlatCylinder):
        return np.hypot(np.abs(_wrap(B[:, 0] - A[:, 0])), B[:, 1] - A[:, 1])
    if man.symmetric:
        if np.any(A[:, 0] < 0) or np.any(B[:, 0] < 0) or np.any(A[:, 0] > man.r_dom) \
                or np.any(B[:, 0] > man.r_dom):
            raise DomainError(f"polar points need 0 <= r <= {man.r_dom}")
        delta = np.mod(B[:, 1] - A[:, 1], 2 * math.pi)
        theta = np.minimum(delta, 2 * math.pi - delta)
        out = np.empty(len(A))
        z = A[:, 0] == 0
        out[z] = B[z, 0]
        if np.any(~z):
            out[~z] = d_theta_batch(man.model, A[~z, 0], B[~z, 0], theta[~z])
        return out
    return np.array([manifold_distance(man, a, b, n_samples=2)[0] for a, b in zip(A, B)])


def _general_distance(man: PolarSurface, a, b, n, resolution):
    if a == b:
        return 0.0, [_general_path(man, a, 0.0, 0.0, 2)]
    ca = a[0] * np.array([math.cos(a[1]), math.sin(a[1])])
    cb = b[0] * np.array([math.cos(b[1]), math.sin(b[1])])
    field_ = mesh_distance_oracle(man, a, resolution)
    seed_len, poly = field_.query(b, return_path=True)
    seeds = []
    d0 = poly[1] - poly[0]
    seeds.append((_cart_angle(man, a, ca, d0), seed_len))

    # fan: every geodesic no longer than the seed that passes close to b
    K = 128
    alphas = np.linspace(0, 2 * math.pi, K, endpoint=False)
    cap = 1.02 * seed_len + 1e-3
    sol = _cart_integrate(man, _cart_start(man, a, alphas), cap, record=True, tol=1e-8)
    st = sol.steps
    rows = np.arange(len(st.lane))
    D, TT = [], []
    for x in np.linspace(0, 1, 9):
        Y = st.evaluate(rows, np.full(rows.size, x))
        D.append(np.hypot(Y[:, 0] - cb[0], Y[:, 1] - cb[1]))
        TT.append(st.t0 + x * st.h)
    D, TT = np.concatenate(D), np.concatenate(TT)
    LN = np.tile(st.lane, 9)
    miss = np.full(K, np.inf)
    np.minimum.at(miss, LN, D)
    tmin = np.zeros(K)
    hit = D == miss[LN]
    tmin[LN[hit]] = TT[hit]
    spacing = 2 * math.pi / K * max(cap, 1.0)
    loc = (miss <= np.roll(miss, 1)) & (miss <= np.roll(miss, -1)) & (miss < spacing)
    seeds += [(alphas[i], tmin[i]) for i in np.flatnonzero(loc)]

    al = np.array([s[0] for s in seeds], float)
    T = np.array([s[1] for s in seeds], float)
    al, T, ok = _newton_cart(man, a, cb, al, T)
    if not np.any(ok):
        raise ConvergenceError("no geodesic found between the points",
                               bracket=(0.0, seed_len))
    al, T = al[ok], T[ok]
    d = float(np.min(T))
    keep = T <= d * (1 + REL_TIE) + 1e-12
    paths, used = [], []
    for alpha, t in sorted(zip(al[keep], T[keep]), key=lambda z: z[1]):
        if any(abs(_wrap(alpha - u)) < 1e-6 for u in used):
            continue
        used.append(alpha)
        paths.append(_general_path(man, a, alpha, d, n))
    return d, paths


def _cart_angle(man, a, ca, d):
    """Angle from ``d/dr`` of a Cartesian chart vector ``d`` at ``a``."""
    r, th = a
    if r == 0:
        return math.atan2(d[1], d[0])
    f = float(man.parts(r, th)[0])
    er = np.array([math.cos(th), math.sin(th)])
    et = np.array([-math.sin(th), math.cos(th)])
    return math.atan2(f * float(d @ et) / r, float(d @ er))


def _newton_cart(man, a, cb, al, T, iters=12, tol=1e-11, h=1e-7):
    """Solve ``X(alpha, T) = cb`` for each seed; returns ``(alpha, T, converged)``."""
    n = al.size
    ok = np.zeros(n, bool)
    live = np.ones(n, bool)
    fun = _cart_rhs(man)
    for _ in range(iters):
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        Y0 = np.vstack([_cart_start(man, a, al[idx]), _cart_start(man, a, al[idx] + h)])
        tt = np.concatenate([T[idx], T[idx]])
        sol = _cart_integrate(man, Y0, tt, tol=1e-12)
        k = idx.size
        halted = (sol.status[:k] == 2) | (sol.status[k:] == 2)
        Y, Yh = sol.y[:k], sol.y[k:]
        res = Y[:, :2] - cb
        v = fun(Y, None)[:, :2]
        dA = (Yh[:, :2] - Y[:, :2]) / h
        err = np.hypot(res[:, 0], res[:, 1])
        conv = (err < tol) & ~halted
        ok[idx[conv]] = True
        live[idx[conv | halted]] = False
        step = idx[~conv & ~halted]
        if step.size == 0:
            break
        sel = ~conv & ~halted
        J = np.stack([np.stack([dA[sel, 0], v[sel, 0]], -1),
                      np.stack([dA[sel, 1], v[sel, 1]], -1)], 1)
        det = np.linalg.det(J)
        good = np.abs(det) > 1e-12
        live[step[~good]] = False
        dx = np.zeros((sel.sum(), 2))
        dx[good] = np.linalg.solve(J[good], -res[sel][good][..., None])[..., 0]
        dx = np.clip(dx, -0.5, 0.5)
        al[step] += dx[:, 0]
        T[step] += dx[:, 1]
        live[step[T[step] <= 0]] = False
    return np.mod(al, 2 * math.pi), T, ok


def base_distance(man, point) -> float:
    """``L_o(point)``."""
    p = _point(man, point)
    if isinstance(man, FlatCylinder):
        return math.hypot(abs(float(_wrap(p[0]))), p[1])
    if p[0] < man.inj_o:
        return p[0]
    return manifold_distance(man, _origin(man), p, n_samples=2)[0]


def _tangent_at(path: GeodesicPath, t):
    u, v, du, dv = path.at(np.atleast_1d(float(t)))
    return (float(u[0]), float(v[0])), (float(du[0]), float(dv[0]))


def dini_derivatives(man, path: GeodesicPath, t: float) -> DiniPair:
    """One-sided derivatives of ``L_o`` along ``path`` at arclength ``t``.

    The right derivative is the smallest, the left derivative the largest
    inner product of the path's velocity with the final velocity of a
    minimizing geodesic from ``o``.
    """
    if not (0 <= t <= path.length):
        raise DomainError("t must lie on the path")
    point, vel = _tangent_at(path, t)
    if isinstance(man, FlatCylinder):
        if abs(float(_wrap(point[0]))) < 1e-15 and abs(point[1]) < 1e-15:
            return DiniPair(-1.0, 1.0)
    elif point[0] == 0:
        return DiniPair(-1.0, 1.0)
    _, geos = manifold_distance(man, _origin(man), point, n_samples=2)
    vals = []
    for g in geos:
        _, gv = _tangent_at(g, g.length)
        vals.append(inner(man, point, vel, gv))
    vals = np.clip(vals, -1.0, 1.0)
    return DiniPair(float(np.max(vals)), float(np.min(vals)))


# --- mesh oracle -------------------------------------------------------------

@dataclass
class MeshField:
    """Dijkstra distances from ``source`` on an 8-connected coordinate grid.

    Polar grids have ``u = r`` (row 0 is ``o``) and ``v = theta``; cylinder
    grids have ``u = angle`` and ``v = z``. Node distances are lengths of
    grid paths and so overestimate; :meth:`query` straightens the grid path
    to a point, which removes the grid anisotropy.
    """

    man: object
    source: tuple
    u: np.ndarray
    v: np.ndarray
    distance: np.ndarray
    predecessor: np.ndarray
    cell: float

    def _node(self, p):
        if isinstance(self.man, FlatCylinder):
            i = int(round(p[0] / (self.u[1] - self.u[0]))) % len(self.u)
            j = int(np.clip(round((p[1] - self.v[0]) / (self.v[1] - self.v[0])), 0, len(self.v) - 1))
            return i * len(self.v) + j
        i = int(np.clip(round(p[0] / (self.u[1] - self.u[0])), 0, len(self.u) - 1))
        if i == 0:
            return 0
        j = int(round(p[1] / (self.v[1] - self.v[0]))) % len(self.v)
        return 1 + (i - 1) * len(self.v) + j

    def _coords(self, nodes):
        nodes = np.asarray(nodes)
        nv = len(self.v)
        if isinstance(self.man, FlatCylinder):
            return np.column_stack([self.u[nodes // nv], self.v[nodes % nv]])
        k = np.maximum(nodes - 1, 0)
        r = np.where(nodes == 0, 0.0, self.u[1 + k // nv])
        th = np.where(nodes == 0, 0.0, self.v[k % nv])
        return np.column_stack([r * np.cos(th), r * np.sin(th)])

    def grid_path(self, point):
        p = _point(self.man, point)
        node = self._node(p)
        flat = self.predecessor.ravel()
        chain = [node]
        while flat[chain[-1]] >= 0:
            chain.append(int(flat[chain[-1]]))
        return self._coords(chain[::-1])

    def query(self, point, return_path=False, n_vertices: int = 33):
        """Length of the relaxed grid path from the source to ``point``."""
        p = _point(self.man, point)
        pts = self.grid_path(p)
        if isinstance(self.man, FlatCylinder):
            ang = np.unwrap(np.concatenate([[self.source[0]], pts[1:-1, 0], [p[0]]]))
            end = np.array([ang[-1], p[1]])
            d = float(np.hypot(*(end - np.array(self.source))))
            return (d, np.array([self.source, end])) if return_path else d
        s, e = (q[0] * np.array([math.cos(q[1]), math.sin(q[1])]) for q in (self.source, p))
        pts = np.vstack([s, pts[1:-1], e]) if len(pts) > 1 else np.vstack([s, e])
        poly = _resample(pts, n_vertices)
        d, poly = _relax(self.man, poly)
        return (d, poly) if return_path else d


def _resample(pts, n):
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(pts[:1], n, 0)
    q = np.linspace(0, s[-1], n)
    return np.column_stack([np.interp(q, s, pts[:, 0]), np.interp(q, s, pts[:, 1])])


def _segment_lengths(man, P):
    d = np.diff(P, axis=0)
    m = 0.5 * (P[1:] + P[:-1])
    r = np.hypot(m[:, 0], m[:, 1])
    rr = np.maximum(r, 1e-4)
    f = man.parts(rr, np.arctan2(m[:, 1], m[:, 0]))[0]
    k = (f - rr) * (f + rr) / rr**4
    cross = m[:, 0] * d[:, 1] - m[:, 1] * d[:, 0]
    return np.sqrt(np.maximum(d[:, 0] ** 2 + d[:, 1] ** 2 + k * cross**2, 0.0))


def _relax(man, P):
    """Shorten a polyline in the Cartesian chart with fixed endpoints."""
    n = len(P)
    if n <= 2:
        return float(np.sum(_segment_lengths(man, P))), P
    ends = P[[0, -1]]
    eps = 1e-7

    def total(z):
        Q = np.vstack([ends[:1], z.reshape(-1, 2), ends[1:]])
        return Q

    def fg(z):
        Q = total(z)
        seg = _segment_lengths(man, Q)
        g = np.zeros_like(Q)
        # vertices of one parity never share a segment, so they are perturbed together
        for par in (0, 1):
            rows = np.arange(1 + par, n - 1, 2)
            for c in (0, 1):
                Qp, Qm = Q.copy(), Q.copy()
                Qp[rows, c] += eps
                Qm[rows, c] -= eps
                sp, sm = _segment_lengths(man, Qp), _segment_lengths(man, Qm)
                g[rows, c] = ((sp[rows - 1] + sp[rows]) - (sm[rows - 1] + sm[rows])) / (2 * eps)
        return float(seg.sum()), g[1:-1].ravel()

    res = optimize.minimize(fg, P[1:-1].ravel(), jac=True, method="L-BFGS-B",
                            options={"maxiter": 500, "ftol": 1e-13, "gtol": 1e-8})
    Q = total(res.x)
    return float(np.sum(_segment_lengths(man, Q))), Q


def mesh_distance_oracle(man, source, resolution: int = 256, extent: Optional[float] = None
                         ) -> MeshField:
    """Dijkstra distance field from ``source`` on an 8-connected grid.

    Polar surfaces use ``resolution`` radial and angular cells out to
    ``extent`` (default ``r_dom``); the cylinder uses square cells of side
    ``2 pi / resolution`` over ``|z| <= extent`` (default ``pi``). Edge
    weights are metric lengths of the coordinate segments.
    """
    if resolution < 64:
        raise PreconditionError("resolution must be at least 64")
    src = _point(man, source)
    if isinstance(man, FlatCylinder):
        return _mesh_cylinder(man, src, resolution, math.pi if extent is None else extent)
    return _mesh_polar(man, src, resolution, man.r_dom if extent is None else extent)


def _check_memory(n_edges):
    if n_edges * 24 > 2e9:
        raise MemoryError(f"mesh with {n_edges} edges exceeds the memory limit")


def _dijkstra(n, I, J, W, s):
    G = sparse.coo_matrix((W, (I, J)), shape=(n, n)).tocsr()
    return csgraph.dijkstra(G, directed=False, indices=s, return_predecessors=True)


def _mesh_cylinder(man, src, N, Z):
    h = 2 * math.pi / N
    nz = 2 * int(math.ceil(Z / h)) + 1
    u = np.arange(N) * h
    v = (np.arange(nz) - nz // 2) * h
    idx = np.arange(N * nz).reshape(N, nz)
    I, J, W = [], [], []
    for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
        a = idx[:, max(0, -dj):nz - max(0, dj)]
        b = np.roll(idx, -di, axis=0)[:, max(0, dj):nz - max(0, -dj) or None]
        I.append(a.ravel()); J.append(b.ravel())
        W.append(np.full(a.size, h * math.hypot(di, dj)))
    _check_memory(sum(len(i) for i in I))
    fld = MeshField(man, src, u, v, np.empty(0), np.empty(0), h)
    s = fld._node(src)
    dist, pred = _dijkstra(N * nz, np.concatenate(I), np.concatenate(J), np.concatenate(W), s)
    fld.distance = dist.reshape(N, nz)
    fld.predecessor = pred.reshape(N, nz)
    return fld


def _mesh_polar(man, src, N, R):
    if R > man.r_dom:
        raise DomainError("extent exceeds the chart")
    dr = R / (N + 0.5)
    u = np.arange(N + 1) * dr
    nt = N
    dth = 2 * math.pi / nt
    v = np.arange(nt) * dth
    idx = 1 + np.arange(N * nt).reshape(N, nt)   # ring i (radius u[i+1])
    I, J, W = [], [], []
    # spokes from o
    I.append(np.zeros(nt, int)); J.append(idx[0]); W.append(np.full(nt, dr))
    for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
        a = idx[:N - di]
        b = np.roll(idx, -dj, axis=1)[di:]
        ra = u[1:N + 1 - di][:, None]
        rm = np.broadcast_to(ra + 0.5 * di * dr, a.shape)
        tm = np.broadcast_to(v[None, :] + 0.5 * dj * dth, a.shape)
        f = man.parts(rm, tm)[0]
        I.append(a.ravel()); J.append(b.ravel())
        W.append(np.sqrt((di * dr) ** 2 + (f * dj * dth) ** 2).ravel())
    _check_memory(sum(len(i) for i in I))
    n = 1 + N * nt
    dist_shape = (N + 1, nt)
    fld = MeshField(man, src, u, v, np.empty(0), np.empty(0), dr)
    s = fld._node(src)
    dist, pred = _dijkstra(n, np.concatenate(I), np.concatenate(J), np.concatenate(W), s)
    D = np.empty(dist_shape)
    D[0] = dist[0]
    D[1:] = dist[1:].reshape(N, nt)
    fld.distance = D
    fld.predecessor = pred
    return fld
