"""Geodesics, distances, Jacobi fields and cut loci on model surfaces.

All geodesics are integrated in the parameter ``tau`` with
``dtau = dt + dtheta``. Along a geodesic with Clairaut constant ``c >= 0``
this gives

    dr/dtau = p y^2/w,  dp/dtau = c^2 y'/(y w),  dtheta/dtau = c/w,  dt/dtau = y^2/w

with ``w = y^2 + c``. The system stays regular at turning points and near the
vertex, where ``theta`` sweeps quickly while ``t`` barely moves.

The vertex-to-vertex distances of a model are computed by shooting: a cached
fan of geodesics from ``(r1, 0)`` brackets every geodesic that reaches the
target, and a batched Newton iteration on ``(phi, tau)`` with variational
equations polishes each bracket. The distance is the shortest candidate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _ode
from .errors import (ConvergenceError, DomainError, IntegrationError,
                     PreconditionError)
from .profiles import Profile, validate_profile

__all__ = [
    "ModelSurface",
    "GeodesicPath",
    "CutLocusTree",
    "ReferencePoint",
    "DistanceInfo",
    "geodesic_trace",
    "r_phi",
    "d_theta",
    "d_theta_batch",
    "conjugate_time",
    "cut_time",
    "cut_times",
    "cut_locus_tree",
    "injectivity_radius",
    "reference_map_model",
]

TIE_TOL = 1e-7          # geodesics within this length of the minimum count as minimizing
CUT_EXCESS = 1e-7       # excess length that declares a geodesic non-minimizing
POLE_FLOOR = 1e-5
C_TAIL = 1e-6           # smallest Clairaut constant in a shooting fan
NEAR_PI = 1e-4          # targets this close to the far meridian also get through-vertex bounds
NEAR_ZERO = 1e-3        # fan misses closer than this to the outward meridian get a linearised shot
NEAR_ZERO_ARC = 1e-9    # below this arc a target counts as on the outward meridian


# --- data types --------------------------------------------------------------

@dataclass
class GeodesicPath:
    """Sampled unit-speed geodesic.

    In the ``polar`` chart ``(u, v) = (r, theta)``; in the ``cylinder`` chart
    ``(u, v) = (angle, height)``. ``evaluate(t)`` (when present) returns
    ``(u, v, du, dv)`` at arbitrary arclengths without resampling error.
    """

    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    clairaut: float
    err_bound: float
    tags: list = field(default_factory=list)
    chart: str = "polar"
    evaluate: Optional[Callable] = field(default=None, repr=False)
    start_dir: tuple = ()

    @property
    def r(self):
        return self.u

    @property
    def theta(self):
        return self.v

    @property
    def dr_dt(self):
        return self.du

    @property
    def dtheta_dt(self):
        return self.dv

    @property
    def length(self) -> float:
        return float(self.t[-1])

    def columns(self):
        if self.chart == "polar":
            names = ("t", "r", "theta", "dr_dt", "dtheta_dt")
        else:
            names = ("t", "angle", "z", "dangle_dt", "dz_dt")
        return names, np.column_stack([self.t, self.u, self.v, self.du, self.dv])

    def at(self, t):
        """``(u, v, du, dv)`` at arclength(s) ``t``."""
        t = np.asarray(t, float)
        if self.evaluate is not None:
            return self.evaluate(t)
        return tuple(np.interp(t, self.t, a) for a in (self.u, self.v, self.du, self.dv))


@dataclass
class CutLocusTree:
    base_r: float
    angle_grid: np.ndarray
    cut_times: np.ndarray
    cut_points: np.ndarray          # (n, 2) columns r, theta
    trunk_mask: np.ndarray
    branch_arcs: list               # arrays with columns (distance, r, theta)
    unbounded: np.ndarray           # no cut point before the scan horizon
    failed: np.ndarray              # integration failures (partial tree)
    position_error: float = 1e-6

    @property
    def partial(self) -> bool:
        return bool(np.any(self.failed))

    def columns(self):
        names = ("phi", "cut_time", "r", "theta", "trunk")
        return names, np.column_stack([self.angle_grid, self.cut_times, self.cut_points,
                                       self.trunk_mask.astype(float)])


@dataclass(frozen=True)
class ReferencePoint:
    x: float
    y: float


@dataclass
class DistanceInfo:
    """Per-query detail from :func:`d_theta_batch`.

    ``phi`` is the initial angle (from the outward meridian) of the chosen
    minimizing geodesic, ``candidates`` the angles of every geodesic within
    the tie tolerance of the minimum, ``meridian`` marks answers realised
    along a meridian.
    """

    distance: np.ndarray
    phi: np.ndarray
    clairaut: np.ndarray
    candidates: list
    meridian: np.ndarray


# --- model surface -----------------------------------------------------------

class ModelSurface:
    """A model surface ``dr^2 + y(r)^2 dtheta^2`` about its vertex.

    Instances are treated as immutable; shooting fans and injectivity radii
    are memoised per base radius.
    """

    def __init__(self, profile: Profile, integ_tol: float = 1e-10, validate: bool = True,
                 fan_size: int = 96):
        if validate:
            rep = validate_profile(profile, grid_size=256, tol=1e-6)
            if not rep.passed:
                hard = [v for v in rep.violations if "finite difference" not in v.condition]
                if hard:
                    raise PreconditionError(f"invalid profile: {rep.summary()}")
        self.profile = profile
        self.integ_tol = float(integ_tol)
        self.fan_size = int(fan_size)
        self._fans = {}
        self._inj = {}
        self._geo = _geodesic_rhs(profile)
        self._var = _variational_rhs(profile)

    @property
    def ell(self) -> float:
        return self.profile.ell

    @property
    def closed(self) -> bool:
        return self.profile.closed

    @property
    def horizon(self) -> float:
        return self.profile.working_radius

    @property
    def atol(self) -> float:
        return self.integ_tol * 1e-2

    @property
    def flat(self) -> bool:
        """The Euclidean plane, where geodesics and distances have closed forms."""
        return self.profile.name == "plane" and not self.profile.params

    def __repr__(self):
        return f"ModelSurface({self.profile.name}{list(self.profile.params)}, tol={self.integ_tol:g})"


def _geodesic_rhs(prof: Profile):
    def fun(Y, args):
        r, p = Y[:, 0], Y[:, 1]
        c = args[:, 0]
        y, y1, _ = prof.eval(r)
        yy = y * y
        mer = c <= 0
        w = np.where(mer, 1.0, yy + c)
        out = np.empty_like(Y)
        out[:, 0] = np.where(mer, p, p * yy / w)
        with np.errstate(divide="ignore", invalid="ignore"):
            dp = c * c * y1 / (y * w)
        out[:, 1] = np.where(mer, 0.0, dp)
        out[:, 2] = np.where(mer, 0.0, c / w)
        out[:, 3] = np.where(mer, 1.0, yy / w)
        return out
    return fun


def _variational_rhs(prof: Profile):
    """Geodesic equations plus their derivative with respect to the initial angle."""
    def fun(Y, args):
        r, p = Y[:, 0], Y[:, 1]
        rf, pf = Y[:, 4], Y[:, 5]
        c, cf = args[:, 0], args[:, 1]
        y, y1, y2 = prof.eval(r)
        yy = y * y
        w = yy + c
        w2 = w * w
        out = np.empty_like(Y)
        out[:, 0] = p * yy / w
        out[:, 1] = c * c * y1 / (y * w)
        out[:, 2] = c / w
        out[:, 3] = yy / w
        A_r = 2 * p * y * y1 * c / w2
        A_p = yy / w
        A_c = -p * yy / w2
        B_r = c * c * (y2 / (y * w) - y1 * y1 * (w + 2 * yy) / (yy * w2))
        B_c = c * y1 * (2 * w - c) / (y * w2)
        C_r = -2 * c * y * y1 / w2
        C_c = yy / w2
        out[:, 4] = A_r * rf + A_p * pf + A_c * cf
        out[:, 5] = B_r * rf + B_c * cf
        out[:, 6] = C_r * rf + C_c * cf
        out[:, 7] = -C_r * rf - C_c * cf
        return out
    return fun


def _check_r1(m: ModelSurface, r1):
    r1 = np.asarray(r1, float)
    if np.any(~(r1 > 0)) or np.any(~(r1 < m.ell)):
        raise DomainError(f"r1 must lie in (0, {m.ell})")
    return r1


def _start(m: ModelSurface, r1, phi):
    r1 = np.atleast_1d(np.asarray(r1, float))
    phi = np.atleast_1d(np.asarray(phi, float))
    r1, phi = np.broadcast_arrays(r1, phi)
    yr = m.profile.eval(r1)[0]
    c = yr * np.sin(phi)
    c = np.where(np.abs(np.sin(phi)) < 1e-15, 0.0, c)
    Y0 = np.column_stack([r1, np.cos(phi), np.zeros_like(r1), np.zeros_like(r1)])
    return Y0, c, yr


# --- geodesic traces ---------------------------------------------------------

def _shoot(m: ModelSurface, r1, phi, t_stop, record=False, theta_stop=None):
    """Integrate geodesics from ``(r1, 0)`` until arclength ``t_stop``."""
    Y0, c, _ = _start(m, r1, phi)
    if np.any(c < 0):
        raise DomainError("phi must lie in [0, pi]")
    t_stop = np.broadcast_to(np.asarray(t_stop, float), c.shape)
    stops = [(3, t_stop)]
    if theta_stop is not None:
        stops.append((2, np.broadcast_to(np.asarray(theta_stop, float), c.shape)))
    sol = _ode.integrate(m._geo, Y0, args=c[:, None], stops=stops,
                         rtol=m.integ_tol, atol=m.atol, record=record)
    if np.any(sol.status < 0):
        raise IntegrationError("geodesic integration failed to meet tolerance")
    return sol, c


def _locate_rows(steps: _ode.Steps, lanes, values, comp, offset=1e3):
    """For each (lane, value) find the recorded step where ``comp`` reaches ``value``.

    The component must be nondecreasing along every lane. Returns
    ``(rows, x, ok)`` with ``x`` the fraction inside the step.
    """
    start = steps.y0[:, comp]
    end = start + steps.F[0, :, comp]
    keys = steps.lane * offset + end
    q = lanes * offset + values
    rows = np.searchsorted(keys, q, side="left")
    rows = np.minimum(rows, len(keys) - 1)
    ok = (steps.lane[rows] == lanes) & (start[rows] <= values + 1e-15) & (end[rows] >= values)
    x = np.zeros(len(values))
    if np.any(ok):
        sel = np.flatnonzero(ok)
        x[sel] = _ode._locate(steps.y0[rows[sel]], steps.F[:, rows[sel]], comp, values[sel])
    return rows, x, ok


def _folded(m: ModelSurface, r_ext, theta, p):
    """Physical (r, theta, dr/dt) from extended radial coordinates."""
    prof = m.profile
    if prof.closed:
        s = np.mod(r_ext + prof.ell, 2 * prof.ell) - prof.ell
    else:
        s = r_ext
    r = np.abs(s)
    flips = prof.vertex_flips(r_ext)
    th = np.mod(theta + np.pi * flips, 2 * np.pi)
    dr = np.where(s < 0, -p, p)
    return r, th, dr


def geodesic_trace(m: ModelSurface, r1: float, phi: float, t_max: float,
                   n_samples: int = 257) -> GeodesicPath:
    """Trace the geodesic leaving ``(r1, 0)`` at angle ``phi`` from the outward meridian."""
    _check_r1(m, r1)
    if not (0 <= phi <= math.pi):
        raise DomainError("phi must lie in [0, pi]")
    if not (math.isfinite(t_max) and t_max > 0):
        raise DomainError("t_max must be positive and finite")
    if m.flat:
        return _flat_trace(m, r1, phi, t_max, n_samples)
    sol, c = _shoot(m, r1, phi, t_max, record=True)
    steps = sol.steps
    c0 = float(c[0])

    def evaluate(t):
        t = np.atleast_1d(np.asarray(t, float))
        if np.any(t < 0) or np.any(t > t_max * (1 + 1e-12)):
            raise DomainError("t outside the traced range")
        rows, x, ok = _locate_rows(steps, np.zeros(len(t), int), np.minimum(t, t_max), 3)
        if not np.all(ok):
            raise IntegrationError("failed to resample traced geodesic")
        Y = steps.evaluate(rows, x)
        r, th, dr = _folded(m, Y[:, 0], Y[:, 2], Y[:, 1])
        y = m.profile.eval(r)[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            dth = np.where(c0 > 0, c0 / (y * y), 0.0)
        return r, th, dr, dth

    ts = np.linspace(0.0, t_max, n_samples)
    r, th, dr, dth = evaluate(ts)
    r[0], th[0] = r1, 0.0
    y = m.profile.eval(r)[0]
    speed = dr**2 + (y * dth) ** 2
    clair = y * y * dth
    defect = max(float(np.max(np.abs(speed - 1))), float(np.max(np.abs(clair - c0))))
    tags = []
    if c0 == 0.0:
        # meridians run straight through the vertices: r_ext = r1 +- t
        sgn = 1.0 if phi < math.pi / 2 else -1.0
        if m.closed:
            ks = range(math.floor((r1 - t_max) / m.ell), math.ceil((r1 + t_max) / m.ell) + 1)
            marks = [(k * m.ell, "vertex" if k % 2 == 0 else "opposite_vertex") for k in ks]
        else:
            marks = [(0.0, "vertex")]
        for pos, kind in marks:
            tc = (pos - r1) * sgn
            if 0 < tc <= t_max:
                tags.append((tc, kind))
        tags.sort()
    elif np.min(r) < POLE_FLOOR:
        tags.append((float(ts[np.argmin(r)]), "near_vertex"))
    return GeodesicPath(ts, r, th, dr, dth, c0, max(10 * m.integ_tol, 2 * defect), tags,
                        "polar", evaluate, (float(r1), float(phi)))


def _flat_point(r1, phi, t):
    x = r1 + t * np.cos(phi)
    y = t * np.sin(phi)
    return x, y, np.hypot(x, y)


def _flat_trace(m, r1, phi, t_max, n_samples):
    c0 = 0.0 if abs(math.sin(phi)) < 1e-15 else r1 * math.sin(phi)
    if c0 == 0.0:
        cphi, sphi = (1.0 if phi < math.pi / 2 else -1.0), 0.0
    else:
        cphi, sphi = math.cos(phi), math.sin(phi)

    def evaluate(t):
        t = np.atleast_1d(np.asarray(t, float))
        if np.any(t < 0) or np.any(t > t_max * (1 + 1e-12)):
            raise DomainError("t outside the traced range")
        x, y = r1 + t * cphi, t * sphi
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            dr = np.where(r > 0, (x * cphi + y * sphi) / r, 1.0)
            dth = np.where(r > 0, c0 / (r * r), 0.0)
        return r, th, dr, dth

    ts = np.linspace(0.0, t_max, n_samples)
    r, th, dr, dth = evaluate(ts)
    tags = [(float(r1), "vertex")] if c0 == 0.0 and cphi < 0 and r1 <= t_max else []
    return GeodesicPath(ts, r, th, dr, dth, c0, 0.0, tags, "polar", evaluate,
                        (float(r1), float(phi)))


def r_phi(m: ModelSurface, r1, phi, t):
    """Distance to the vertex after arclength ``t`` along the geodesic at angle ``phi``.

    Accepts broadcastable arrays.
    """
    r1a = _check_r1(m, r1)
    phia = np.asarray(phi, float)
    ta = np.asarray(t, float)
    if np.any(phia < 0) or np.any(phia > math.pi):
        raise DomainError("phi must lie in [0, pi]")
    if np.any(ta < 0):
        raise DomainError("t must be nonnegative")
    shape = np.broadcast(r1a, phia, ta).shape
    if m.flat:
        r = np.broadcast_to(_flat_point(r1a, phia, ta)[2], shape).copy()
        return float(r) if r.ndim == 0 else r
    R1, PH, T = (np.broadcast_to(a, shape).ravel() for a in (r1a, phia, ta))
    sol, _ = _shoot(m, R1, PH, T)
    r = m.profile.vertex_distance(sol.y[:, 0])
    r = r.reshape(shape)
    return float(r) if r.ndim == 0 else r


def r_phi_samples(m: ModelSurface, r1: float, phi: float, ts):
    """``R_phi(r1, t)`` at many arclengths of one geodesic (single integration)."""
    ts = np.asarray(ts, float)
    tmax = float(np.max(ts)) if ts.size else 0.0
    if tmax <= 0:
        return np.full(ts.shape, float(r1))
    path = geodesic_trace(m, r1, phi, tmax, n_samples=2)
    return path.evaluate(ts.ravel())[0].reshape(ts.shape)


# --- shooting fan and distances ----------------------------------------------

@dataclass
class _Fan:
    r1: float
    phis: np.ndarray
    steps: _ode.Steps
    theta_reach: np.ndarray   # max theta reached per lane
    t_cap: float
    theta_stop: float
    r_end: np.ndarray         # lane end state, for lanes that stop short of a target angle
    tau_end: np.ndarray


def _fan_angles(K, y1=1.0):
    """Cosine-clustered angles plus short log-spaced tails toward both meridians.

    ``y1`` is ``y(r1)``; the tails stop where the Clairaut constant reaches
    ``C_TAIL``, below which a vertex passage is too sharp to integrate cheaply.
    Targets that close to the far meridian are covered by the through-vertex
    bound instead.
    """
    u = (np.arange(K) + 0.5) / K
    body = np.pi * 0.5 * (1 - np.cos(np.pi * u))
    lo = min(C_TAIL / max(y1, 1e-300), 0.25 * body[0])
    tail = np.logspace(math.log10(lo), math.log10(0.5 * body[0]), 6)
    return np.concatenate([tail, body, np.pi - tail[::-1]])


def _default_fan_cap(m: ModelSurface, r1: float) -> float:
    if m.closed:
        return min(r1 + m.ell, 2 * m.ell - r1) + 0.5
    return r1 + m.horizon + 0.5


def _ensure_fans(m: ModelSurface, r1s, caps, K=None):
    """Build (in one batch) every fan needed for base radii ``r1s``."""
    K = K or m.fan_size
    need = []
    for r1, cap in zip(r1s, caps):
        fan = m._fans.get((float(r1), K))
        if fan is None or fan.t_cap < cap:
            need.append((float(r1), max(cap, _default_fan_cap(m, r1))))
    if not need:
        return
    ys = m.profile.eval(np.array([r for r, _ in need]))[0]
    phis = [_fan_angles(K, yv) for yv in ys]
    L = len(phis[0])
    R1 = np.repeat([r for r, _ in need], L)
    caps_l = np.repeat([c for _, c in need], L)
    sol, _ = _shoot(m, R1, np.concatenate(phis), caps_l, record=True,
                    theta_stop=np.pi + 0.05)
    st = sol.steps
    bounds = np.searchsorted(st.lane, np.arange(len(need) + 1) * L)
    for i, (r1, cap) in enumerate(need):
        a, b = bounds[i], bounds[i + 1]
        sub = _ode.Steps(st.lane[a:b] - i * L, st.t0[a:b], st.h[a:b], st.y0[a:b], st.F[:, a:b])
        lanes = slice(i * L, (i + 1) * L)
        m._fans[(r1, K)] = _Fan(r1, phis[i], sub, sol.y[lanes, 2], cap, np.pi + 0.05,
                                sol.y[lanes, 0], sol.t[lanes])


def _get_fan(m: ModelSurface, r1: float, t_cap: float, K=None) -> _Fan:
    K = K or m.fan_size
    _ensure_fans(m, [r1], [t_cap], K)
    return m._fans[(float(r1), K)]


def _fan_guesses(fan: _Fan, r2, theta):
    """Bracket geodesics of the fan that pass through ``(r2, theta)``.

    Returns Newton starting points ``(query, phi, tau)`` and focal hits
    ``(query, phi, t)`` where neighbouring lanes already land on the target.
    """
    K = len(fan.phis)
    J = len(r2)
    lanes = np.repeat(np.arange(K), J)
    vals = np.tile(theta, K)
    rows, x, ok = _locate_rows(fan.steps, lanes, vals, 2)
    r = np.full(K * J, np.nan)
    tau = np.full(K * J, np.nan)
    tt = np.full(K * J, np.nan)
    sel = np.flatnonzero(ok)
    if sel.size:
        Y = fan.steps.evaluate(rows[sel], x[sel])
        r[sel] = Y[:, 0]
        tt[sel] = Y[:, 3]
        tau[sel] = fan.steps.t0[rows[sel]] + x[sel] * fan.steps.h[rows[sel]]
    g = (r.reshape(K, J) - r2[None, :])
    tau = tau.reshape(K, J)
    # a lane that ran out of length beyond r2 before reaching theta passes outside the target
    short = ~ok.reshape(K, J) & (fan.theta_reach[:, None] < theta[None, :]) \
        & (fan.r_end[:, None] > r2[None, :])
    g = np.where(short, (fan.r_end[:, None] - r2[None, :]), g)
    tau = np.where(short, fan.tau_end[:, None], tau)
    tt = tt.reshape(K, J)
    s0, s1 = g[:-1], g[1:]
    with np.errstate(invalid="ignore"):
        fin = np.isfinite(s0) & np.isfinite(s1)
        cross = fin & ((np.sign(s0) != np.sign(s1)) | (s0 == 0))
        focal = cross & (np.abs(s0) < 1e-7) & (np.abs(s1) < 1e-7)
    fk, fj = np.nonzero(focal)
    direct = (fj, 0.5 * (fan.phis[fk] + fan.phis[fk + 1]), 0.5 * (tt[fk, fj] + tt[fk + 1, fj]))
    kk, jj = np.nonzero(cross & ~focal)
    a, b = g[kk, jj], g[kk + 1, jj]
    w = np.where(a == b, 0.0, a / np.where(a == b, 1.0, a - b))
    ph = fan.phis[kk] + w * (fan.phis[kk + 1] - fan.phis[kk])
    T = tau[kk, jj] + w * (tau[kk + 1, jj] - tau[kk, jj])
    # inverse cubic interpolation where four neighbouring lanes are monotone in g
    if kk.size:
        nb = kk[None, :] + np.arange(-1, 3)[:, None]
        inside = (nb[0] >= 0) & (nb[3] < K)
        nbc = np.clip(nb, 0, K - 1)
        G = g[nbc, jj[None, :]]
        dG = np.diff(G, axis=0)
        with np.errstate(invalid="ignore"):
            mono = inside & np.all(np.isfinite(G), 0) & (np.all(dG > 0, 0) | np.all(dG < 0, 0))
        if np.any(mono):
            Gm = G[:, mono]
            P = fan.phis[nbc[:, mono]]
            Tm = tau[nbc[:, mono], jj[None, mono]]
            wts = np.ones_like(Gm)
            for i in range(4):
                for k in range(4):
                    if i != k:
                        wts[i] *= -Gm[k] / (Gm[i] - Gm[k])
            ph3 = np.sum(wts * P, 0)
            T3 = np.sum(wts * Tm, 0)
            lo = fan.phis[kk[mono]]
            hi = fan.phis[kk[mono] + 1]
            use = (ph3 > lo) & (ph3 < hi) & np.isfinite(T3)
            idx = np.flatnonzero(mono)[use]
            ph[idx] = ph3[use]
            T[idx] = T3[use]
    return (jj, ph, T), direct


def _newton_polish(m: ModelSurface, r1, r2, theta, phi, T, max_iter=6, accept=3e-6, floor=None):
    """Solve r(T; phi) = r2, theta(T; phi) = theta for each lane.

    Returns (t, phi, converged). The final length is extrapolated to first
    order from the last integration, which is exact up to the square of the
    accepted Newton step.
    """
    n = len(phi)
    t_out = np.full(n, np.nan)
    phi_out = np.full(n, np.nan)
    conv = np.zeros(n, bool)
    act = np.arange(n)
    phi = phi.copy()
    T = T.copy()
    yr_all = m.profile.eval(r1)[0]
    # near-meridian lanes with a tinier Clairaut constant stall at vertex passages
    eps_all = np.minimum(0.1 * C_TAIL / yr_all, 1e-3) if floor is None else np.full(n, floor)
    # the variational block only feeds the Newton Jacobian and needs far less accuracy
    rtol = np.array([m.integ_tol] * 4 + [1e-7] * 4)
    atol = np.array([m.atol] * 4 + [1e-9] * 4)
    for it in range(max_iter):
        if act.size == 0:
            break
        eps = eps_all[act]
        ph = np.clip(phi[act], eps, np.pi - eps)
        yr = yr_all[act]
        args = np.column_stack([yr * np.sin(ph), yr * np.cos(ph)])
        Y0 = np.zeros((act.size, 8))
        Y0[:, 0] = r1[act]
        Y0[:, 1] = np.cos(ph)
        Y0[:, 5] = -np.sin(ph)
        sol = _ode.integrate(m._var, Y0, args=args, t_end=np.maximum(T[act], 1e-12),
                             rtol=rtol, atol=atol, max_steps=200)
        good = sol.status == 0
        Y = sol.y
        d = m._var(Y, args)
        F1 = Y[:, 0] - r2[act]
        F2 = Y[:, 2] - theta[act]
        a11, a12 = Y[:, 4], d[:, 0]
        a21, a22 = Y[:, 6], d[:, 2]
        det = a11 * a22 - a12 * a21
        with np.errstate(divide="ignore", invalid="ignore"):
            dphi = -(a22 * F1 - a12 * F2) / det
            dT = -(-a21 * F1 + a11 * F2) / det
        good &= np.isfinite(dphi) & np.isfinite(dT)
        small = good & (np.abs(dphi) < accept) & (np.abs(dT) < accept)
        # focal configurations: the Jacobian degenerates but the lane may already hit the target
        sing = np.abs(det) < 1e-9
        hit = sing & (np.abs(F1) + np.abs(F2) < 1e-10)
        dphi = np.where(hit, 0.0, dphi)
        dT = np.where(hit, 0.0, dT)
        small |= hit
        good &= ~sing | hit
        idx = act[small]
        t_out[idx] = Y[small, 3] + Y[small, 7] * dphi[small] + d[small, 3] * dT[small]
        phi_out[idx] = ph[small] + dphi[small]
        conv[idx] = True
        step = np.maximum(np.abs(dphi) / 0.5, 1.0)
        phi[act] = ph + dphi / step
        T[act] = np.maximum(T[act] + dT / step, 1e-9)
        keep = good & ~small & (phi[act] > -0.1) & (phi[act] < np.pi + 0.1)
        # nearly meridional shots at the far meridian are covered by the through-vertex bound
        keep &= ~((np.pi - theta[act] < NEAR_PI) & (yr * np.abs(np.sin(phi[act])) < C_TAIL))
        if it >= 2:
            # no sign of quadratic convergence: a spurious bracket
            keep &= np.abs(dphi) < 1e-2
        act = act[keep]
    return t_out, phi_out, conv


def _near_meridian(m: ModelSurface, q, r1, r2, theta):
    """Newton shots at targets just off the outward meridian.

    The start comes from the linearised Clairaut relation
    ``theta ~ c * int dr / y^2`` over ``[r1, r2]``; the shot never reaches a
    vertex, so the angle needs no floor.
    """
    a, b, th = r1[q], r2[q], theta[q]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    x, w = np.polynomial.legendre.leggauss(32)
    s = lo[:, None] + 0.5 * (hi - lo)[:, None] * (x + 1)[None, :]
    I = 0.5 * (hi - lo) * np.sum(w / m.profile.eval(s)[0] ** 2, axis=1)
    ya = m.profile.eval(a)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        sphi = np.clip(np.nan_to_num(th / (I * ya), nan=1.0, posinf=1.0), 0.0, 1.0)
    phi = np.where(b >= a, np.arcsin(sphi), np.pi - np.arcsin(sphi))
    t, p, ok = _newton_polish(m, a, b, th, phi, np.abs(b - a) + th, floor=0.0)
    return q[ok], t[ok], p[ok]


def _normalize_theta(theta):
    th = np.mod(np.asarray(theta, float), 2 * np.pi)
    th = np.where(th > np.pi, 2 * np.pi - th, th)
    # round-off neighbours of the meridians are the meridians
    th = np.where(np.pi - th < 1e-12, np.pi, th)
    return np.where(th < 1e-12, 0.0, th)


def _shoot_candidates(m, qidx, r1, r2, th, cap, K):
    """Newton-polished geodesics for queries ``qidx`` using fans of size ``K``."""
    u1 = np.unique(r1[qidx])
    _ensure_fans(m, u1, [float(np.max(cap[qidx][r1[qidx] == r])) + 0.5 for r in u1], K)
    gq, gp, gT, fq, fp, ft = [], [], [], [], [], []
    for r1v in u1:
        sel = qidx[r1[qidx] == r1v]
        fan = m._fans[(float(r1v), K)]
        (jj, ph, T), (fj, fph, fT) = _fan_guesses(fan, r2[sel], th[sel])
        gq.append(sel[jj]); gp.append(ph); gT.append(T)
        fq.append(sel[fj]); fp.append(fph); ft.append(fT)
    gq = np.concatenate(gq).astype(int)
    gp = np.concatenate(gp)
    gT = np.concatenate(gT)
    out_q, out_t, out_p = np.zeros(0, int), np.zeros(0), np.zeros(0)
    if gq.size:
        tt, pp, ok = _newton_polish(m, r1[gq], r2[gq], th[gq], gp, gT)
        ok &= tt <= cap[gq] + 1e-9
        out_q, out_t, out_p = gq[ok], tt[ok], pp[ok]
    focal = (np.concatenate(fq).astype(int), np.concatenate(ft), np.concatenate(fp))
    return (out_q, out_t, out_p), focal


def d_theta_batch(m: ModelSurface, r1, r2, theta, info: bool = False, known=None):
    """Vectorised :func:`d_theta` over broadcastable ``r1``, ``r2``, ``theta``.

    With ``info=True`` returns a :class:`DistanceInfo` describing the chosen
    minimizing geodesic of every query. ``known`` optionally supplies, per
    query, the ``(length, phi)`` of a geodesic already known to reach the
    target; it is used as a candidate (targets on a caustic fold cannot be
    bracketed by the fan).
    """
    r1a, r2a, tha = np.broadcast_arrays(np.asarray(r1, float), np.asarray(r2, float),
                                        np.asarray(theta, float))
    shape = r1a.shape
    r1a, r2a = r1a.ravel().copy(), r2a.ravel().copy()
    tha = _normalize_theta(tha.ravel())
    ell = m.ell
    if np.any(~(r1a >= 0)) or np.any(~(r2a >= 0)) or np.any(r1a > ell) or np.any(r2a > ell):
        raise DomainError(f"radii must lie in [0, {ell}]")
    n = r1a.size
    if m.flat:
        return _flat_distance(m, r1a, r2a, tha, shape, info)
    # candidate geodesics as parallel arrays (query, length, initial angle, meridian?)
    Q, L, P, M = [], [], [], []

    def add(q, t, p, mer):
        q = np.asarray(q, int)
        Q.append(q); L.append(np.broadcast_to(np.asarray(t, float), q.shape))
        P.append(np.broadcast_to(np.asarray(p, float), q.shape))
        M.append(np.full(q.shape, mer))

    done = np.zeros(n, bool)
    z1 = r1a == 0
    add(np.flatnonzero(z1), r2a[z1], 0.0, True)
    z2 = (r2a == 0) & ~z1
    add(np.flatnonzero(z2), r1a[z2], np.pi, True)
    done |= z1 | z2
    if m.closed:
        e1 = (r1a == ell) & ~done
        add(np.flatnonzero(e1), ell - r2a[e1], np.pi, True)
        done |= e1
        e2 = (r2a == ell) & ~done
        add(np.flatnonzero(e2), ell - r1a[e2], 0.0, True)
        done |= e2
    t0 = (tha == 0) & ~done
    add(np.flatnonzero(t0), np.abs(r1a[t0] - r2a[t0]), np.where(r2a[t0] >= r1a[t0], 0.0, np.pi), True)
    done |= t0

    todo = np.flatnonzero(~done)
    if todo.size:
        cap = np.full(n, np.inf)
        cap[todo] = r1a[todo] + r2a[todo]
        if m.closed:
            cap[todo] = np.minimum(cap[todo], 2 * ell - r1a[todo] - r2a[todo])
        # broken paths through a vertex are real curves, hence upper bounds; on the
        # far meridian they are geodesics, and next to it they are within O(eps^2)
        near_pi = todo[np.pi - tha[todo] < NEAR_PI]
        add(near_pi, r1a[near_pi] + r2a[near_pi], np.pi, True)
        if m.closed:
            add(near_pi, 2 * ell - r1a[near_pi] - r2a[near_pi], 0.0, True)
        (gq, gt, gp), (fq, ft, fp) = _shoot_candidates(m, todo, r1a, r2a, tha, cap, m.fan_size)
        add(gq, gt, gp, False)
        have = np.zeros(n, bool)
        have[gq] = True
        if known is not None:
            kt, kp = (np.broadcast_to(np.asarray(v, float), shape).ravel() for v in known)
            kq = todo[np.isfinite(kt[todo])]
            add(kq, kt[kq], kp[kq], False)
            have[kq] = True
        near0 = todo[~have[todo] & (tha[todo] < NEAR_ZERO)]
        if near0.size:
            gq0, gt0, gp0 = _near_meridian(m, near0, r1a, r2a, tha)
            add(gq0, gt0, gp0, False)
            have[gq0] = True
        miss = todo[~have[todo] & (np.pi - tha[todo] >= NEAR_PI)]
        if miss.size:
            (gq2, gt2, gp2), (fq2, ft2, fp2) = _shoot_candidates(
                m, miss, r1a, r2a, tha, cap, 8 * m.fan_size)
            add(gq2, gt2, gp2, False)
            have[gq2] = True
            fq, ft, fp = (np.concatenate([fq, fq2]), np.concatenate([ft, ft2]),
                          np.concatenate([fp, fp2]))
        # targets within rounding of the outward meridian slip between the fan tails;
        # D >= |r2 - r1| and the meridian-then-parallel path exceeds that by y * theta
        has_any = np.zeros(n, bool)
        has_any[np.concatenate(Q)] = True
        arc = np.minimum(m.profile.eval(r1a)[0], m.profile.eval(r2a)[0]) * tha
        near0 = todo[~has_any[todo] & (arc[todo] <= NEAR_ZERO_ARC)]
        add(near0, np.abs(r1a[near0] - r2a[near0]) + arc[near0],
            np.where(r2a[near0] >= r1a[near0], 0.0, np.pi), True)
        has_any[near0] = True
        # focal fan hits are approximate; use them only when nothing else exists
        fsel = ~has_any[fq]
        add(fq[fsel], ft[fsel], fp[fsel], False)

    Q = np.concatenate(Q)
    L = np.concatenate(L)
    P = np.concatenate(P)
    M = np.concatenate(M)
    D = np.full(n, np.inf)
    np.minimum.at(D, Q, L)
    bad = ~np.isfinite(D)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ConvergenceError(
            f"no geodesic found from r1={r1a[i]} to (r2={r2a[i]}, theta={tha[i]})",
            bracket=(abs(r1a[i] - r2a[i]), r1a[i] + r2a[i]))
    tie = L <= D[Q] + TIE_TOL
    # uppermost minimizer: the largest initial angle heads closest to the
    # vertex and sweeps theta fastest
    PHI = np.full(n, -np.inf)
    np.maximum.at(PHI, Q[tie], P[tie])
    out = D.reshape(shape)
    if not info:
        return out
    chosen = tie & (P == PHI[Q])
    MER = np.zeros(n, bool)
    MER[Q[chosen & M]] = True
    cands = [[] for _ in range(n)]
    for q, p in zip(Q[tie], P[tie]):
        cands[q].append(float(p))
    cands = [sorted(set(np.clip(np.round(c, 10), 0.0, np.pi).tolist())) for c in cands]
    yr = m.profile.eval(r1a)[0]
    return DistanceInfo(out, PHI.reshape(shape), (yr * np.sin(PHI)).reshape(shape), cands,
                        MER.reshape(shape))


def _flat_distance(m, r1, r2, th, shape, info):
    s = np.sin(0.5 * th)
    D = np.sqrt((r1 - r2) ** 2 + 4 * r1 * r2 * s * s)
    if not info:
        return D.reshape(shape)
    phi = np.where(r1 == 0, 0.0, np.arctan2(r2 * np.sin(th), r2 * np.cos(th) - r1))
    phi = np.where(D == 0, 0.0, np.abs(phi))
    mer = (r1 == 0) | (r2 == 0) | (th == 0) | (th == np.pi)
    cands = [[float(p)] for p in phi]
    return DistanceInfo(D.reshape(shape), phi.reshape(shape), (r1 * np.sin(phi)).reshape(shape),
                        cands, mer.reshape(shape))


def d_theta(m: ModelSurface, r1: float, r2: float, theta: float) -> float:
    """Distance between ``(r1, 0)`` and ``(r2, theta)`` on the model."""
    if not (0 < r1 < m.ell):
        raise DomainError(f"r1 must lie in (0, {m.ell})")
    if not (0 <= r2 < m.ell):
        raise DomainError(f"r2 must lie in [0, {m.ell})")
    return float(d_theta_batch(m, r1, r2, theta))


def reference_map_model(m: ModelSurface, r1: float, point) -> ReferencePoint:
    r, th = point
    if r == 0:
        return ReferencePoint(float(r1), 0.0)
    return ReferencePoint(float(d_theta_batch(m, r1, r, th)), float(r))


# --- Jacobi fields, conjugate and cut times ----------------------------------

def _jacobi_rhs(prof: Profile, geo):
    def fun(Y, args):
        out = np.empty_like(Y)
        out[:, :4] = geo(Y[:, :4], args)
        dt = out[:, 3]
        r = Y[:, 0]
        s = prof.vertex_distance(r)
        s = np.maximum(s, POLE_FLOOR)
        if prof.closed:
            s = np.minimum(s, prof.ell - POLE_FLOOR)
        y, _, y2 = prof.eval(s)
        kappa = -y2 / y
        out[:, 4] = Y[:, 5] * dt
        out[:, 5] = -kappa * Y[:, 4] * dt
        out[:, 6] = dt * 0.0
        return out
    return fun


def conjugate_times(m: ModelSurface, r1, phi, t_max=None):
    """First zero of the normal Jacobi field along each geodesic (``inf`` if none)."""
    r1a = _check_r1(m, r1)
    Y0, c, _ = _start(m, r1a, phi)
    if t_max is None:
        t_max = 2.0 * m.horizon + 1.0
    n = len(c)
    Z = np.zeros((n, 7))
    Z[:, :4] = Y0
    # J starts at a negligible positive value so that the stop "J <= 0" (as -J >= 0) is armed
    Z[:, 4] = 1e-14
    Z[:, 5] = 1.0
    fun = _jacobi_rhs(m.profile, m._geo)

    def wrapped(Y, args):
        out = fun(Y, args)
        out[:, 6] = -out[:, 4]
        return out
    Z[:, 6] = -Z[:, 4]
    sol = _ode.integrate(wrapped, Z, args=c[:, None], stops=[(6, 0.0), (3, t_max)],
                         rtol=m.integ_tol, atol=m.atol * 1e-2)
    if np.any(sol.status < 0):
        raise IntegrationError("Jacobi integration failed")
    out = np.where(sol.which == 0, sol.y[:, 3], np.inf)
    return out


def conjugate_time(m: ModelSurface, r1: float, phi: float, t_max=None):
    """First conjugate time along the geodesic, or ``None`` within ``t_max``."""
    t = float(conjugate_times(m, r1, phi, t_max)[0])
    return None if not math.isfinite(t) else t


def cut_times(m: ModelSurface, r1: float, phis, t_max=None, tol: float = 1e-9):
    """Cut times for a batch of initial angles from ``(r1, 0)``.

    Returns ``(times, unbounded)``; unbounded lanes never stop minimizing
    before ``t_max`` and report ``t_max``.
    """
    _check_r1(m, r1)
    phis = np.atleast_1d(np.asarray(phis, float))
    if np.any(phis < 0) or np.any(phis > math.pi):
        raise DomainError("phi must lie in [0, pi]")
    if t_max is None:
        # open models: stay inside the working radius, where distances are resolvable
        t_max = 2.0 * m.horizon if m.closed else m.horizon - r1
    n = len(phis)
    tconj = conjugate_times(m, np.full(n, r1), phis, t_max)
    hi = np.minimum(tconj, t_max)
    # a transversal geodesic stops minimizing once it crosses the opposite meridian
    sol, c = _shoot(m, np.full(n, r1), phis, hi, record=True, theta_stop=np.pi)
    hit_pi = (sol.which == 1) & (c > 0)
    hi = np.where(hit_pi, sol.y[:, 3], hi)
    steps = sol.steps
    lanes = np.arange(n)

    def point(t, sel):
        rows, x, ok = _locate_rows(steps, lanes[sel], t, 3)
        if not np.all(ok):
            raise IntegrationError("failed to resample geodesic fan")
        Y = steps.evaluate(rows, x)
        r, th, _ = _folded(m, Y[:, 0], Y[:, 2], Y[:, 1])
        return r, th

    def excess(t, sel):
        r, th = point(t, sel)
        r = np.minimum(r, m.ell)
        return t - d_theta_batch(m, np.full(len(t), r1), r, th, known=(t, phis[sel]))

    e_hi = excess(hi, lanes)
    lo = np.zeros(n)
    cut = e_hi > CUT_EXCESS
    res = hi.copy()
    if np.any(cut):
        idx = np.flatnonzero(cut)
        a = lo[cut]
        b = hi[cut]
        gb = e_hi[cut] - CUT_EXCESS
        b2 = np.full(idx.size, np.nan)
        gb2 = np.full(idx.size, np.nan)
        live = np.ones(idx.size, bool)
        root = 0.5 * (a + b)
        it = 0
        while np.any(live):
            # past the cut point the excess grows about linearly: extrapolate from
            # the two smallest overshooting times, with bisection as the safeguard
            with np.errstate(divide="ignore", invalid="ignore"):
                sec = b - gb * (b - b2) / (gb - gb2)
            w = b - a
            fin = np.isfinite(sec) & (sec > a) & (sec < b)
            done = live & ((w <= tol) | (fin & (b - sec <= tol)))
            root = np.where(done, np.where(w <= tol, 0.5 * (a + b), sec), root)
            live &= ~done
            if not np.any(live):
                break
            ok = fin & (sec > a + 0.05 * w) & (it % 4 != 3)
            mid = np.where(ok, sec, 0.5 * (a + b))
            g = np.zeros(idx.size)
            g[live] = excess(mid[live], idx[live]) - CUT_EXCESS
            over = live & (g > 0)
            under = live & ~over
            b2 = np.where(over, b, b2)
            gb2 = np.where(over, gb, gb2)
            b = np.where(over, mid, b)
            gb = np.where(over, g, gb)
            a = np.where(under, mid, a)
            it += 1
        res[idx] = root
    unbounded = ~cut & ~hit_pi & ~np.isfinite(tconj) & (hi >= t_max)
    return res, unbounded


def cut_time(m: ModelSurface, r1: float, phi: float, t_max=None) -> float:
    t, _ = cut_times(m, r1, [phi], t_max)
    return float(t[0])


def cut_locus_tree(m: ModelSurface, r1: float, n_angles: int = 512, t_max=None,
                   trunk_tol: float = 1e-6) -> CutLocusTree:
    """Cut points of ``(r1, 0)`` on the angle grid ``(k + 1/2) pi / n``."""
    _check_r1(m, r1)
    if n_angles < 2:
        raise PreconditionError("n_angles must be at least 2")
    phis = (np.arange(n_angles) + 0.5) * np.pi / n_angles
    failed = np.zeros(n_angles, bool)
    try:
        times, unb = cut_times(m, r1, phis, t_max)
    except (IntegrationError, ConvergenceError):
        times = np.full(n_angles, np.nan)
        unb = np.zeros(n_angles, bool)
        for k, ph in enumerate(phis):
            try:
                tk, uk = cut_times(m, r1, [ph], t_max)
                times[k], unb[k] = tk[0], uk[0]
            except (IntegrationError, ConvergenceError):
                failed[k] = True
    pts = np.full((n_angles, 2), np.nan)
    okk = ~failed & ~unb
    if np.any(okk):
        sol, _ = _shoot(m, np.full(okk.sum(), r1), phis[okk], times[okk])
        r, th, _ = _folded(m, sol.y[:, 0], sol.y[:, 2], sol.y[:, 1])
        pts[okk] = np.column_stack([r, th])
    trunk = okk & (np.abs(pts[:, 1] - np.pi) < trunk_tol)
    arcs = _link_branches(times, pts, okk & ~trunk)
    return CutLocusTree(float(r1), phis, times, pts, trunk, arcs, unb, failed)


def _link_branches(times, pts, mask, jump=0.1):
    """Chain branch points by angular order; split where neighbours are far apart."""
    idx = np.flatnonzero(mask)
    arcs = []
    if idx.size == 0:
        return arcs
    cur = [idx[0]]
    for a, b in zip(idx[:-1], idx[1:]):
        if b == a + 1 and np.hypot(*(pts[b] - pts[a])) < jump:
            cur.append(b)
        else:
            arcs.append(cur)
            cur = [b]
    arcs.append(cur)
    out = []
    for arc in arcs:
        arc = np.asarray(arc)
        order = np.argsort(times[arc])
        arc = arc[order]
        out.append(np.column_stack([times[arc], pts[arc, 0], pts[arc, 1]]))
    return out


def injectivity_radius(m: ModelSurface, r1: float, n_angles: int = 64) -> float:
    """Injectivity radius at ``(r1, 0)``: the minimum cut time (``inf`` if none)."""
    key = (float(r1), int(n_angles))
    if key in m._inj:
        return m._inj[key]
    _check_r1(m, r1)
    phis = np.linspace(0.0, np.pi, n_angles + 1)
    times, unb = cut_times(m, r1, phis)
    if np.all(unb):
        val = math.inf
    else:
        times = np.where(unb, np.inf, times)
        k = int(np.argmin(times))
        lo = phis[max(k - 1, 0)]
        hi = phis[min(k + 1, n_angles)]
        fine = np.linspace(lo, hi, 17)
        ft, fu = cut_times(m, r1, fine)
        ft = np.where(fu, np.inf, ft)
        val = float(min(times[k], np.min(ft)))
    m._inj[key] = val
    return val
