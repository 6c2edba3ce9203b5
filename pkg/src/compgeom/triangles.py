"""Based triangles, their model comparison triangles, and the comparison checks.

A triangle ``opq`` is described by its three minimizing sides. Its model
counterpart places ``p~`` at ``(r1, 0)`` and ``q~`` at ``(r2, theta*)`` with
``0 <= theta* <= pi``. The side ``p~q~`` is found by shooting on the initial
angle ``phi`` until the geodesic of length ``d(p, q)`` ends at radius ``r2``
and is then confirmed to be minimizing; when that fails, ``theta*`` is found
by bisection on the monotone function ``theta -> D_theta(r1, r2)``.

Along a minimizing side from ``p`` the reference map is
``F(sigma(t)) = (t, L_o(sigma(t)))``, so encounters with the model cut locus
are crossings of ``L_o o sigma`` with the graph ``t -> r`` of a positive
branch parameterized by distance from ``p~``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (ConvergenceError, DomainError, NoCorrespondingTriangle, NotOnBoundary,
                     PreconditionError)
from .manifolds import (DiniPair, FlatCylinder, PolarSurface, _point, _wrap, dini_derivatives,
                        distance_batch, inner, manifold_distance)
from .model_geometry import (GeodesicPath, ModelSurface, cut_locus_tree, d_theta_batch,
                             geodesic_trace, injectivity_radius, r_phi)

__all__ = [
    "Triangle",
    "ComparisonTriangle",
    "ComparisonReport",
    "make_triangle",
    "random_triangles",
    "correspondence_exists",
    "build_comparison_triangle",
    "build_comparison_triangles",
    "verify_tct",
    "angle_compare",
    "classify_thin",
    "two_sided_scan",
    "detect_encounters",
    "reference_encounters",
    "degenerate_compare",
    "boundary_case",
    "injectivity_from_comparison",
    "base_distances",
]

SIDE_TOL = 1e-7          # corresponding side lengths must agree this well
THETA_TOL = 1e-10
BOUNDARY_TOL = 1e-8
AC_TOL = 1e-6
_HOMOGENEOUS = {"sphere", "plane", "hyperbolic"}


# --- triangles in the manifold -----------------------------------------------

@dataclass
class Triangle:
    man: object
    o: tuple
    p: tuple
    q: tuple
    side_pq: GeodesicPath
    side_op: GeodesicPath
    side_oq: GeodesicPath
    lengths: tuple                      # (d(o,p), d(o,q), d(p,q))
    alternatives: list = field(default_factory=list, repr=False)


def _end_velocity(path: GeodesicPath, t):
    u, v, du, dv = path.at(np.atleast_1d(float(t)))
    return (float(u[0]), float(v[0])), (float(du[0]), float(dv[0]))


def make_triangle(man, p, q, n_samples: int = 257) -> Triangle:
    """Triangle ``opq`` with sides chosen as the Dini derivatives require.

    ``tau`` (from ``o`` to ``p``) minimizes ``<tau'(end), sigma'(0)>`` and
    ``gamma`` (from ``o`` to ``q``) maximizes ``<gamma'(end), sigma'(end)>``.
    """
    o = (0.0, 0.0)
    pp, qq = _point(man, p), _point(man, q)
    if pp == qq or _same(man, pp, o) or _same(man, qq, o):
        raise PreconditionError("triangle vertices o, p, q must be distinct")
    c, sigmas = manifold_distance(man, pp, qq, n_samples)
    sigma = sigmas[0]
    a, taus = manifold_distance(man, o, pp, n_samples)
    b, gammas = manifold_distance(man, o, qq, n_samples)
    _, s0 = _end_velocity(sigma, 0.0)
    _, s1 = _end_velocity(sigma, c)
    tau = min(taus, key=lambda g: inner(man, pp, _end_velocity(g, g.length)[1], s0))
    gamma = max(gammas, key=lambda g: inner(man, qq, _end_velocity(g, g.length)[1], s1))
    return Triangle(man, o, pp, qq, sigma, tau, gamma, (a, b, c), sigmas[1:])


def _same(man, x, y):
    if isinstance(man, FlatCylinder):
        return abs(float(_wrap(x[0] - y[0]))) < 1e-15 and abs(x[1] - y[1]) < 1e-15
    return x[0] == 0 and y[0] == 0 or (x == y)


def base_distances(man, path: GeodesicPath, ts) -> np.ndarray:
    """``L_o`` along ``path`` at arclengths ``ts``."""
    ts = np.atleast_1d(np.asarray(ts, float))
    u, v, _, _ = path.at(ts)
    u, v = np.asarray(u, float), np.asarray(v, float)
    if isinstance(man, FlatCylinder):
        return np.hypot(np.abs(_wrap(u)), v)
    if man.symmetric or math.isinf(man.inj_o):
        return u.copy()
    out = u.copy()
    far = u >= man.inj_o
    for k in np.flatnonzero(far):
        out[k] = manifold_distance(man, (0.0, 0.0), (u[k], v[k]), n_samples=2)[0]
    return out


def _draw(man, model, rng, k, r_max):
    if isinstance(man, FlatCylinder):
        R = math.pi if r_max is None else r_max
        return (np.column_stack([rng.uniform(0, 2 * math.pi, k), rng.uniform(-R, R, k)]),
                np.column_stack([rng.uniform(0, 2 * math.pi, k), rng.uniform(-R, R, k)]))
    R = min(man.r_dom, model.ell) if r_max is None else r_max
    pts = [np.column_stack([R * np.sqrt(rng.uniform(0.0004, 1, k)),
                            rng.uniform(0, 2 * math.pi, k)]) for _ in range(2)]
    return pts[0], pts[1]


def random_triangles(man, model: ModelSurface, n: int, seed: int = 0, r_max=None,
                     thin: bool = False, max_draws: int = 100000) -> list:
    """Seeded random triangles whose lengths admit a model counterpart.

    Vertices are drawn uniformly in area of the coordinate disc ``r < r_max``
    (polar surfaces) or from ``|z| < r_max`` (cylinder). Candidates are
    screened in batches before the sides are traced.
    """
    rng = np.random.default_rng(seed)
    out = []
    drawn = 0
    o = np.zeros((1, 2))
    while len(out) < n:
        if drawn >= max_draws:
            raise ConvergenceError(f"only {len(out)} admissible triangles in {drawn} draws")
        k = max(16, 2 * (n - len(out)))
        drawn += k
        P, Q = _draw(man, model, rng, k, r_max)
        a = distance_batch(man, np.repeat(o, k, 0), P)
        b = distance_batch(man, np.repeat(o, k, 0), Q)
        keep = (a > 1e-9) & (b > 1e-9) & (a < model.ell) & (b < model.ell)
        c = np.full(k, np.inf)
        c[keep] = distance_batch(man, P[keep], Q[keep])
        keep &= c > 1e-9
        ok = np.zeros(k, bool)
        if np.any(keep):
            ok[keep] = c[keep] <= _d_pi(model, a[keep], b[keep]) + 1e-12
        for i in np.flatnonzero(ok):
            if len(out) >= n:
                break
            tri = make_triangle(man, tuple(P[i]), tuple(Q[i]))
            if not correspondence_exists(model, tri.lengths):
                continue
            if thin and not classify_thin(man, model, tri):
                continue
            out.append(tri)
    return out


# --- correspondence ----------------------------------------------------------

def _d_pi(model: ModelSurface, a, b):
    return np.asarray(d_theta_batch(model, a, b, np.pi), float)


def correspondence_exists(model: ModelSurface, lengths) -> bool:
    """``a < ell``, ``b < ell`` and ``c <= D_pi(a, b)``."""
    a, b, c = (float(v) for v in lengths)
    if min(a, b, c) < 0:
        raise DomainError("lengths must be nonnegative")
    if not (a < model.ell and b < model.ell):
        return False
    return bool(c <= float(_d_pi(model, a, b)) + 1e-12)


@dataclass
class ComparisonTriangle:
    model: ModelSurface
    p_tilde: tuple
    q_tilde: tuple
    side: GeodesicPath
    phi: float
    source: Optional[Triangle] = None
    method: str = "phi_shooting"

    @property
    def lengths(self):
        return (self.p_tilde[0], self.q_tilde[0], self.side.length)


def _phi_bisect(model, a, b, c, lo, hi, iters=60):
    """Vectorised bisection for ``R_phi(a, c) = b`` (decreasing in ``phi``) on ``[lo, hi]``."""
    lo, hi = lo.copy(), hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = np.asarray(r_phi(model, a, mid, c)) > b
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi - lo < 1e-15):
            break
    return 0.5 * (lo + hi)


def _theta_bisect(model, a, b, c, iters=50):
    lo = np.zeros_like(a)
    hi = np.full_like(a, np.pi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = np.asarray(d_theta_batch(model, a, b, mid)) < c
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo < THETA_TOL):
            break
    return 0.5 * (lo + hi)


def build_comparison_triangles(model: ModelSurface, tris: Sequence, lengths=None,
                               n_samples: int = 257) -> list:
    """Batched :func:`build_comparison_triangle`; ``lengths`` may replace ``tris``."""
    L = np.array([t.lengths for t in tris] if lengths is None else lengths, float)
    if L.ndim != 2 or L.shape[1] != 3:
        raise DomainError("lengths must be rows of (a, b, c)")
    a, b, c = L[:, 0].copy(), L[:, 1].copy(), L[:, 2].copy()
    n = len(a)
    if np.any(a <= 0) or np.any(b <= 0) or np.any(c <= 0):
        raise PreconditionError("triangle vertices must be distinct")
    bad_r = (a >= model.ell) | (b >= model.ell)
    if np.any(bad_r):
        i = int(np.flatnonzero(bad_r)[0])
        raise NoCorrespondingTriangle(f"side from o reaches ell: {L[i].tolist()}")
    Dpi = _d_pi(model, a, b)
    over = c > Dpi + 1e-12
    if np.any(over):
        i = int(np.flatnonzero(over)[0])
        raise NoCorrespondingTriangle(
            f"d(p,q) = {c[i]:.12g} exceeds D_pi = {Dpi[i]:.12g} for lengths {L[i].tolist()}")
    phi = np.full(n, np.nan)
    theta = np.full(n, np.nan)
    method = np.array(["phi_shooting"] * n, dtype=object)

    d0 = np.abs(a - b)
    deg0 = c <= d0 + 1e-12
    theta[deg0] = 0.0
    phi[deg0] = np.where(b[deg0] >= a[deg0], 0.0, np.pi)
    method[deg0] = "degenerate"
    degpi = ~deg0 & (c >= Dpi - 1e-12)
    if np.any(degpi):
        info = d_theta_batch(model, a[degpi], b[degpi], np.pi, info=True)
        theta[degpi] = np.pi
        phi[degpi] = np.atleast_1d(info.phi)
        method[degpi] = "degenerate"

    todo = np.flatnonzero(~deg0 & ~degpi)
    if todo.size:
        at, bt, ct = a[todo], b[todo], c[todo]
        f0 = np.asarray(r_phi(model, at, np.zeros_like(at), ct)) - bt
        f1 = np.asarray(r_phi(model, at, np.full_like(at, np.pi), ct)) - bt
        ok = (f0 >= 0) & (f1 <= 0)
        ph = np.full(todo.size, np.nan)
        if np.any(ok):
            ph[ok] = _phi_bisect(model, at[ok], bt[ok], ct[ok], np.zeros(ok.sum()),
                                 np.full(ok.sum(), np.pi))
        # the endpoint angle, then confirm the geodesic is minimizing
        th = np.full(todo.size, np.nan)
        for k in np.flatnonzero(ok):
            g = geodesic_trace(model, at[k], ph[k], ct[k], n_samples=2)
            th[k] = float(g.theta[-1])
        th = np.where(th > np.pi, 2 * np.pi - th, th)
        good = ok & np.isfinite(th)
        if np.any(good):
            info = d_theta_batch(model, at[good], bt[good], th[good], info=True)
            D = np.atleast_1d(info.distance)
            minimal = np.abs(D - ct[good]) <= SIDE_TOL
            gi = np.flatnonzero(good)
            good[gi[~minimal]] = False
            # prefer the uppermost minimizer when the target is a cut point
            up = np.atleast_1d(info.phi)[minimal]
            swap = up > ph[gi[minimal]] + 1e-6
            ph[gi[minimal][swap]] = up[swap]
        rest = np.flatnonzero(~good)
        if rest.size:
            thr = _theta_bisect(model, at[rest], bt[rest], ct[rest])
            info = d_theta_batch(model, at[rest], bt[rest], thr, info=True)
            pr = np.atleast_1d(info.phi).copy()
            # polish phi so the side ends at radius b
            w = 1e-4
            lo, hi = np.maximum(pr - w, 0.0), np.minimum(pr + w, np.pi)
            flo = np.asarray(r_phi(model, at[rest], lo, ct[rest])) - bt[rest]
            fhi = np.asarray(r_phi(model, at[rest], hi, ct[rest])) - bt[rest]
            br = (flo >= 0) & (fhi <= 0)
            if np.any(br):
                pr[br] = _phi_bisect(model, at[rest][br], bt[rest][br], ct[rest][br],
                                     lo[br], hi[br])
            ph[rest] = pr
            th[rest] = thr
            method[todo[rest]] = "theta_bisection"
        phi[todo] = ph
        theta[todo] = th

    out = []
    for k in range(n):
        side = geodesic_trace(model, a[k], float(phi[k]), c[k], n_samples)
        src = tris[k] if lengths is None else None
        out.append(ComparisonTriangle(model, (float(a[k]), 0.0), (float(b[k]), float(theta[k])),
                                      side, float(phi[k]), src, str(method[k])))
    return out


def build_comparison_triangle(model: ModelSurface, tri, n_samples: int = 257
                              ) -> ComparisonTriangle:
    """Model triangle with the side lengths of ``tri`` (a :class:`Triangle` or ``(a, b, c)``)."""
    if isinstance(tri, Triangle):
        return build_comparison_triangles(model, [tri], n_samples=n_samples)[0]
    return build_comparison_triangles(model, [None], lengths=[tri], n_samples=n_samples)[0]


# --- one-sided derivatives along the side -------------------------------------

def _cut_crossings(man, path: GeodesicPath):
    """Arclengths where ``path`` meets the cut locus of ``o``."""
    T = path.length
    if isinstance(man, FlatCylinder):
        u0, _, du, _ = (float(np.atleast_1d(x)[0]) for x in path.at(np.zeros(1)))
        if du == 0:
            return []
        out = []
        k0 = math.floor((u0 - math.pi) / (2 * math.pi)) - 1
        for k in range(k0, k0 + int(abs(du) * T / (2 * math.pi)) + 4):
            t = (math.pi + 2 * math.pi * k - u0) / du
            if 0 < t < T:
                out.append(t)
        return sorted(out)
    inj = man.inj_o
    if not math.isfinite(inj):
        return []
    r = path.r
    idx = np.flatnonzero(r >= inj * (1 - 1e-9))
    return [float(path.t[i]) for i in idx[:1]] if idx.size else []


def two_sided_scan(man, path: GeodesicPath, n_scan: int = 16, tol: float = 1e-7):
    """Check that ``L_o o path`` has two-sided derivatives in the interior.

    Evaluates the Dini pair at ``n_scan`` interior points and at every
    crossing of the cut locus of ``o``. Returns ``(ok, kinks)`` with ``kinks``
    a list of ``(t, DiniPair)`` where the derivatives differ.
    """
    T = path.length
    ts = list(T * (np.arange(1, n_scan + 1) / (n_scan + 1))) + _cut_crossings(man, path)
    kinks = []
    for t in sorted(set(ts)):
        if not (0 < t < T):
            continue
        d = dini_derivatives(man, path, t)
        if abs(d.left - d.right) > tol:
            kinks.append((float(t), d))
    return not kinks, kinks


# --- encounters ---------------------------------------------------------------

def _model_tree(model: ModelSurface, r1: float, n_angles: int = 128):
    cache = model.__dict__.setdefault("_trees", {})
    key = (float(r1), n_angles)
    if key not in cache:
        cache[key] = cut_locus_tree(model, r1, n_angles=n_angles)
    return cache[key]


def reference_encounters(branches, L_fun: Callable, t_end: float, band: float = 2e-6,
                         n_grid: int = 257, eps_frac: float = 1e-2, n_probe: int = 32,
                         tol: float = 1e-9):
    """Crossings of ``t -> L_fun(t)`` with branch graphs ``(distance, r)``.

    ``branches`` holds arrays whose first two columns are distance from
    ``p~`` and radius. Returns ``(t0, bad)`` pairs; an encounter is bad when a
    probe in ``(t0, t0 + eps_frac * t_end]`` falls strictly below the branch.
    """
    out = []
    ts = np.linspace(0.0, t_end, n_grid)
    Ls = np.asarray(L_fun(ts), float)
    for arc in branches:
        x, y = arc[:, 0], arc[:, 1]
        if len(x) < 2:
            continue
        lo, hi = max(x[0], 0.0), min(x[-1], t_end)
        if hi <= lo:
            continue
        sel = (ts > lo) & (ts < hi)
        if not np.any(sel):
            continue
        g = Ls[sel] - np.interp(ts[sel], x, y)
        tt = ts[sel]
        cand = list(np.flatnonzero(np.sign(g[:-1]) != np.sign(g[1:])))
        cand += [i for i in np.flatnonzero(np.abs(g) <= band) if i not in cand]
        for i in sorted(cand):
            if abs(g[i]) <= band:
                t0 = float(tt[i])
            else:
                a_, b_ = float(tt[i]), float(tt[i + 1])
                ga = float(L_fun(np.array([a_]))[0] - np.interp(a_, x, y))
                for _ in range(60):
                    m = 0.5 * (a_ + b_)
                    gm = float(L_fun(np.array([m]))[0] - np.interp(m, x, y))
                    if np.sign(gm) == np.sign(ga):
                        a_, ga = m, gm
                    else:
                        b_ = m
                t0 = 0.5 * (a_ + b_)
            probes = t0 + eps_frac * t_end * np.arange(1, n_probe + 1) / n_probe
            probes = probes[probes <= min(hi, t_end)]
            bad = False
            if probes.size:
                gap = np.asarray(L_fun(probes), float) - np.interp(probes, x, y)
                bad = bool(np.any(gap < -tol))
            if not out or abs(out[-1][0] - t0) > 1e-9:
                out.append((t0, bad))
    return sorted(out)


def detect_encounters(man, model: ModelSurface, tri: Triangle,
                      comparison: Optional[ComparisonTriangle] = None, n_angles: int = 128):
    """Encounters of the side ``pq`` with the positive branches of ``C(p~)``."""
    r1 = tri.lengths[0]
    if model.profile.name in _HOMOGENEOUS:
        return []          # cut loci of space forms have no positive branches
    tree = _model_tree(model, r1, n_angles)
    if not tree.branch_arcs:
        return []
    band = 2 * tree.position_error
    return reference_encounters(tree.branch_arcs,
                                lambda t: base_distances(man, tri.side_pq, t),
                                tri.lengths[2], band=band)


# --- degenerate triangles -----------------------------------------------------

def boundary_case(model: ModelSurface, lengths, tol: float = BOUNDARY_TOL):
    """Which edge of ``R`` contains ``F(q) = (c, b)``: ``'i'``-``'iv'`` or ``None``."""
    r0, y0, x0 = (float(v) for v in lengths)
    defects = {"i": abs(x0 + y0 - r0), "ii": abs(y0 - x0 - r0), "iii": abs(y0 - x0 + r0)}
    if math.isfinite(model.ell):
        defects["iv"] = abs(x0 + y0 - (2 * model.ell - r0))
    case = min(defects, key=defects.get)
    return case if defects[case] < tol else None


def _degenerate_profile(case, r0, ell, t):
    if case == "i":
        return r0 - t
    if case == "ii":
        return r0 + t
    if case == "iii":
        return np.abs(t - r0)
    return np.where(t <= ell - r0, r0 + t, 2 * ell - r0 - t)


@dataclass
class ComparisonReport:
    samples: np.ndarray                 # columns t, L_man, L_model
    max_violation: float
    two_sided_ok: bool
    encounters: list
    angles: tuple                       # (opq, o~p~q~, oqp, o~q~p~)
    asserted: bool = True               # both hypotheses hold, so the inequality is claimed
    ac_holds: bool = True
    endpoint_error: float = 0.0
    kinks: list = field(default_factory=list)
    case: str = "interior"
    comparison: Optional[ComparisonTriangle] = field(default=None, repr=False)
    tol: float = AC_TOL

    @property
    def bad_encounter(self) -> bool:
        return any(b for _, b in self.encounters)

    def columns(self):
        s = self.samples
        return ("t", "L_man", "L_model", "diff"), np.column_stack([s, s[:, 1] - s[:, 2]])


def _angles(man, tri: Triangle, model_dr0: float, model_dr1: float):
    d0 = dini_derivatives(man, tri.side_pq, 0.0)
    d1 = dini_derivatives(man, tri.side_pq, tri.lengths[2])
    clip = lambda v: float(np.clip(v, -1.0, 1.0))
    return (math.acos(clip(-d0.right)), math.acos(clip(-model_dr0)),
            math.acos(clip(d1.left)), math.acos(clip(model_dr1)))


def degenerate_compare(model: ModelSurface, tri: Triangle, n_samples: int = 65,
                       tol: float = AC_TOL) -> ComparisonReport:
    """Closed-form comparison when ``F(q)`` lies on the boundary of ``R``."""
    case = boundary_case(model, tri.lengths)
    if case is None:
        raise NotOnBoundary(f"F(q) = ({tri.lengths[2]}, {tri.lengths[1]}) is not on the boundary")
    r0, _, c = tri.lengths
    ts = np.linspace(0.0, c, n_samples)
    Lm = base_distances(tri.man, tri.side_pq, ts)
    Lt = _degenerate_profile(case, r0, model.ell, ts)
    viol = float(np.max(Lm - Lt))
    end = max(abs(Lm[0] - Lt[0]), abs(Lm[-1] - Lt[-1]))
    slope0 = {"i": -1.0, "ii": 1.0, "iii": -1.0, "iv": 1.0}[case]
    slope1 = {"i": -1.0, "ii": 1.0, "iii": 1.0 if c > r0 else -1.0, "iv": -1.0}[case]
    if case == "iv" and c < model.ell - r0:
        slope1 = 1.0
    angles = _angles(tri.man, tri, slope0, slope1)
    return ComparisonReport(np.column_stack([ts, Lm, Lt]), viol, True, [], angles, True,
                            viol <= tol, float(end), [], case, None, tol)


# --- the comparison -----------------------------------------------------------

def verify_tct(man, model: ModelSurface, tri: Triangle, n_samples: int = 65,
               comparison: Optional[ComparisonTriangle] = None, tol: float = AC_TOL,
               n_scan: int = 16) -> ComparisonReport:
    """Sample ``L_o o sigma`` against ``L_o~ o sigma~`` and check the hypotheses.

    ``max_violation`` is the largest ``L_o o sigma - L_o~ o sigma~``; the
    inequality is asserted (``asserted``) only when ``L_o o sigma`` has
    two-sided derivatives and there are no bad encounters.
    """
    if boundary_case(model, tri.lengths) is not None:
        return degenerate_compare(model, tri, n_samples, tol)
    comp = comparison or build_comparison_triangle(model, tri)
    c = tri.lengths[2]
    ts = np.linspace(0.0, c, n_samples)
    Lm = base_distances(man, tri.side_pq, ts)
    r_t, _, dr_t, _ = comp.side.at(ts)
    Lt = np.asarray(r_t, float)
    viol = float(np.max(Lm - Lt))
    end = max(abs(Lm[0] - Lt[0]), abs(Lm[-1] - Lt[-1]))
    ok2, kinks = two_sided_scan(man, tri.side_pq, n_scan)
    enc = detect_encounters(man, model, tri, comp)
    asserted = ok2 and not any(b for _, b in enc)
    angles = _angles(man, tri, math.cos(comp.phi), float(np.atleast_1d(dr_t)[-1]))
    return ComparisonReport(np.column_stack([ts, Lm, Lt]), viol, ok2, enc, angles, asserted,
                            viol <= tol, float(end), kinks, "interior", comp, tol)


def angle_compare(report: ComparisonReport, tol: float = 1e-7):
    """``(angle opq <= angle o~p~q~, angle oqp <= angle o~q~p~)`` up to ``tol``."""
    a, at, b, bt = report.angles
    return a <= at + tol, b <= bt + tol


def _model_inj(model: ModelSurface, r1: float) -> float:
    if model.profile.name in _HOMOGENEOUS:
        return model.ell
    return injectivity_radius(model, r1)


def classify_thin(man, model: ModelSurface, tri: Triangle) -> bool:
    """``L_o(p) + d(p,q) < ell``, ``d(p,q) < inj(p~)`` and two-sided derivatives along ``pq``."""
    a, _, c = tri.lengths
    if not a + c < model.ell:
        return False
    if not c < _model_inj(model, a):
        return False
    return two_sided_scan(man, tri.side_pq)[0]


# --- injectivity from comparison ----------------------------------------------

@dataclass
class InjectivityReport:
    suite_ok: bool              # the inequality held on every admissible suite triangle
    cut_distance: float         # distance from o to its nearest cut point (inf if none)
    ell: float
    bound: Optional[float]      # ell when the suite passed
    violation_found: bool
    consistent: bool
    probes: list = field(default_factory=list)
    n_triangles: int = 0


def _loop_probes(man, r: float, deltas=(0.05, 0.1, 0.2)):
    """Triangles straddling the nearest cut point of ``o`` along a minimal loop."""
    out = []
    for d in deltas:
        if d >= r:
            continue
        if isinstance(man, FlatCylinder):
            p, q = (math.pi - d, 0.0), (math.pi + d, 0.0)
        else:
            p, q = (r - d, 0.0), (r - d, math.pi)
        try:
            out.append(make_triangle(man, p, q))
        except (PreconditionError, DomainError):
            continue
    return out


def injectivity_from_comparison(man, model: ModelSurface, suite: Sequence[Triangle] = (),
                                tol: float = AC_TOL) -> InjectivityReport:
    """If the inequality holds across the suite then ``inj(o) >= ell``; cross-check the converse.

    The nearest cut point of ``o`` is at ``inj_o`` of the manifold. When it is
    closer than ``ell``, loop probes through it must produce a violation.
    """
    reports = []
    for tri in suite:
        if not correspondence_exists(model, tri.lengths):
            raise PreconditionError("suite triangles must admit model counterparts")
        reports.append(verify_tct(man, model, tri, tol=tol))
    cut = man.inj_o
    probes = []
    if cut < model.ell:
        for tri in _loop_probes(man, cut):
            if correspondence_exists(model, tri.lengths):
                rep = verify_tct(man, model, tri, tol=tol)
                probes.append((tri.lengths, rep.max_violation))
                reports.append(rep)
    suite_ok = all(r.max_violation <= tol for r in reports)
    violation = any(r.max_violation > tol for r in reports)
    consistent = (cut >= model.ell * (1 - 1e-9)) or violation
    return InjectivityReport(suite_ok, float(cut), float(model.ell),
                             float(model.ell) if suite_ok else None, violation, consistent,
                             probes, len(reports))
