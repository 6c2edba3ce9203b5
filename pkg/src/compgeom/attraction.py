"""Checks that a model surface attracts geodesics toward its vertex more strongly than a pointed surface.

In geodesic polar coordinates the Hessian of ``L_o`` is
``(f_r/f)(g - dL_o (x) dL_o)``, so the tensor ``S`` is
``(y'/y - f_r/f)(g - dL_o (x) dL_o)`` and ``S <= 0`` reduces to the sign of
the scalar margin ``f_r/f - y'/y``. The geodesic check tests the definition
directly: matched geodesics in the surface and the model, started at the
same distance from the base points with the same radial speed.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ChartExceeded, CompGeomError, DomainError, PreconditionError
from .manifolds import FlatCylinder, PolarSurface, manifold_geodesic
from .model_geometry import ModelSurface, injectivity_radius, r_phi

__all__ = [
    "SraReport",
    "s_margin",
    "sra_pointwise_check",
    "sra_geodesic_check",
    "radial_curvature_bound_check",
    "conjugate_distance_check",
    "ConjugateReport",
]

POINTWISE_TOL = 1e-9
SERIES_R = 1e-3


@dataclass
class SraReport:
    holds: bool
    margin_min: float
    witness: tuple
    method: str
    tol: float = POINTWISE_TOL
    n_checked: int = 0
    n_skipped: int = 0
    note: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["witness"] = [float(v) for v in self.witness]
        return d


def _check_pair(man, model):
    if not isinstance(man, PolarSurface):
        raise PreconditionError("attraction checks need a polar surface")
    if not isinstance(model, ModelSurface):
        raise PreconditionError("model must be a ModelSurface")


def _radius_limit(man: PolarSurface, model: ModelSurface, r_max=None) -> float:
    R = min(man.r_dom, model.ell, model.horizon)
    return R if r_max is None else min(R, float(r_max))


def s_margin(man: PolarSurface, model: ModelSurface, r, theta):
    """``f_r/f - y'/y`` at ``(r, theta)``; ``S <= 0`` there iff the margin is ``>= 0``.

    Below ``r = 1e-3`` the expansion ``(kappa_model - kappa_man) r / 3`` is used.
    """
    _check_pair(man, model)
    r = np.asarray(r, float)
    theta = np.asarray(theta, float)
    R = min(man.r_dom, model.ell)
    if np.any(r < 0) or np.any(r >= R):
        raise DomainError(f"r must lie in [0, {R})")
    r, theta = np.broadcast_arrays(r, theta)
    out = np.zeros(r.shape)
    big = r >= SERIES_R
    if np.any(big):
        rb, tb = r[big], theta[big]
        f = np.asarray(man.f(rb, tb), float)
        fr = np.asarray(man.f_r(rb, tb), float)
        y, y1, _ = model.profile.eval(rb)
        out[big] = fr / f - y1 / y
    small = (r > 0) & ~big
    if np.any(small):
        rs, ts = r[small], theta[small]
        y, _, y2 = model.profile.eval(rs)
        k_model = -y2 / y
        k_man = man.radial_curvature(rs, ts)
        out[small] = (k_model - k_man) * rs / 3.0
    return float(out) if out.ndim == 0 else out


def _grid(R, nr, nt):
    r = R * (np.arange(nr) + 0.5) / nr
    th = 2 * math.pi * np.arange(nt) / nt
    return np.meshgrid(r, th, indexing="ij")


def _analytic_note(man, model):
    if man.analytic and model.profile.analytic:
        return ""
    return "necessary condition only: non-analytic input"


def sra_pointwise_check(man: PolarSurface, model: ModelSurface, grid=(128, 128),
                        r_max=None, tol: float = POINTWISE_TOL) -> SraReport:
    """Sign of ``S`` over a polar grid of ``(0, R) x [0, 2 pi)``."""
    _check_pair(man, model)
    nr, nt = grid
    if nr < 64 or nt < 64:
        raise PreconditionError("grid must be at least 64 x 64")
    R = _radius_limit(man, model, r_max)
    rr, tt = _grid(R, nr, nt)
    m = s_margin(man, model, rr, tt)
    i = np.unravel_index(int(np.argmin(m)), m.shape)
    mm = float(m[i])
    return SraReport(mm >= -tol, mm, (float(rr[i]), float(tt[i])), "pointwise_S", tol,
                     m.size, 0, _analytic_note(man, model), {"r_max": R})


def radial_curvature_bound_check(man: PolarSurface, model: ModelSurface, grid=(128, 128),
                                 r_max=None, tol: float = POINTWISE_TOL) -> SraReport:
    """Radial curvature of ``man`` bounded above by the model's, ``-f_rr/f <= -y''/y``.

    A pass implies the pointwise ``S`` check passes; both are evaluated and a
    contradiction raises.
    """
    _check_pair(man, model)
    nr, nt = grid
    if nr < 64 or nt < 64:
        raise PreconditionError("grid must be at least 64 x 64")
    R = _radius_limit(man, model, r_max)
    rr, tt = _grid(R, nr, nt)
    y, _, y2 = model.profile.eval(rr)
    m = -y2 / y - man.radial_curvature(rr, tt)
    i = np.unravel_index(int(np.argmin(m)), m.shape)
    mm = float(m[i])
    holds = mm >= -tol
    pw = sra_pointwise_check(man, model, grid, r_max, tol)
    if holds and not pw.holds:
        raise CompGeomError("curvature bound holds but the Hessian comparison fails: "
                            f"margin {pw.margin_min:.3e} at {pw.witness}")
    return SraReport(holds, mm, (float(rr[i]), float(tt[i])), "radial_curvature", tol,
                     m.size, 0, _analytic_note(man, model),
                     {"r_max": R, "pointwise_holds": pw.holds, "pointwise_margin": pw.margin_min})


_HOMOGENEOUS = {"sphere", "plane", "hyperbolic"}


def _model_inj(model: ModelSurface, r0: float) -> float:
    """Injectivity radius of the model at radius ``r0`` (closed form on space forms)."""
    if model.profile.name in _HOMOGENEOUS:
        return model.ell
    return injectivity_radius(model, r0, n_angles=32)


def sra_geodesic_check(man: PolarSurface, model: ModelSurface, n_samples: int = 100,
                       epsilon_frac: float = 0.9, seed: int = 0, n_t: int = 64,
                       tol: float = 1e-6, n_radii: int = 4, horizon: float = 2.0) -> SraReport:
    """Sample matched geodesic pairs and compare their distances to the base points.

    The comparison window is ``epsilon_frac`` times
    ``min(b, ell - r0, inj_model(r0))`` where ``b`` is the time the surface
    geodesic needs to reach the injectivity radius of ``o`` (capped at
    ``horizon``). On models without closed-form injectivity radii the start
    radii come from a pool of ``n_radii`` values.
    """
    _check_pair(man, model)
    if n_samples < 10:
        raise PreconditionError("n_samples must be at least 10")
    if not (0 < epsilon_frac <= 1):
        raise PreconditionError("epsilon_frac must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    R = min(man.inj_o, man.r_dom, model.ell, model.horizon)
    lo, hi = 0.05 * R, 0.95 * R
    if model.profile.name in _HOMOGENEOUS:
        r0s = rng.uniform(lo, hi, n_samples)
    else:
        pool = rng.uniform(lo, hi, n_radii)
        r0s = pool[rng.integers(0, n_radii, n_samples)]
    inj_cache = {}
    th0s = rng.uniform(0, 2 * math.pi, n_samples)
    alphas = rng.uniform(-math.pi, math.pi, n_samples)
    rows, skipped = [], 0
    s = np.linspace(0.0, 1.0, n_t)
    for r0, th0, al in zip(r0s, th0s, alphas):
        if r0 not in inj_cache:
            inj_cache[r0] = _model_inj(model, r0)
        cap = min(model.ell - r0, inj_cache[r0], horizon)
        try:
            path = manifold_geodesic(man, (r0, th0), float(al), cap, n_samples=2)
            tt = np.linspace(0.0, cap, 513)
            r_man = path.at(tt)[0]
        except ChartExceeded:
            skipped += 1
            continue
        out = np.flatnonzero(r_man >= min(man.inj_o, man.r_dom) * (1 - 1e-9))
        b = tt[out[0]] if out.size else cap
        eps = epsilon_frac * min(b, cap)
        if eps <= 0:
            skipped += 1
            continue
        ts = eps * s
        rows.append((r0, th0, al, ts, path.at(ts)[0]))
    if not rows:
        raise PreconditionError("every sample left the chart")
    R1 = np.array([row[0] for row in rows])[:, None]
    PH = np.abs(np.array([row[2] for row in rows]))[:, None]
    TS = np.array([row[3] for row in rows])
    r_model = r_phi(model, np.broadcast_to(R1, TS.shape), np.broadcast_to(PH, TS.shape), TS)
    r_man = np.array([row[4] for row in rows])
    gap = r_man - r_model
    k = np.unravel_index(int(np.argmin(gap)), gap.shape)
    mm = float(gap[k])
    w = rows[k[0]]
    return SraReport(mm >= -tol, mm, (float(w[0]), float(w[1])), "geodesic_sampling", tol,
                     len(rows), skipped, _analytic_note(man, model),
                     {"direction": float(w[2]), "t": float(w[3][k[1]]),
                      "epsilon_frac": epsilon_frac})


@dataclass
class ConjugateReport:
    passed: bool
    first_conjugate: float      # smallest conjugate time found along the fan (inf if none)
    horizon: float
    jacobi_dominates: bool      # y(t) <= |J(t)| on the sampled window
    worst_gap: float            # min over samples of |J| - y
    horizon_limited: bool
    witness_theta: float

    def to_dict(self) -> dict:
        return asdict(self)


def conjugate_distance_check(man: PolarSurface, model: ModelSurface, n_angles: int = 16,
                             n_samples: int = 256, grid=(64, 64)) -> ConjugateReport:
    """Jacobi fields along radial geodesics of ``man`` against the model's ``y``.

    Along the ray of polar angle ``theta`` solves ``J'' + kappa(t) J = 0`` with
    ``J(0) = 0, J'(0) = 1`` up to ``min(ell, r_dom, horizon)``; passes when no
    conjugate time falls below ``ell`` and ``y(t) <= |J(t)|`` at every sample.
    """
    _check_pair(man, model)
    pw = sra_pointwise_check(man, model, grid)
    if not pw.holds:
        raise PreconditionError(
            f"the model does not attract more strongly (margin {pw.margin_min:.3e} at {pw.witness})")
    ell = model.ell
    T = min(ell, man.r_dom, model.horizon)
    limited = T < ell
    ts = T * (np.arange(n_samples) + 0.5) / n_samples
    y = model.profile.eval(ts)[0]
    first = math.inf
    worst = math.inf
    w_theta = 0.0
    for th in 2 * math.pi * np.arange(n_angles) / n_angles:
        def rhs(t, u, th=th):
            k = man.radial_curvature(max(t, 1e-6), th)
            return [u[1], -float(k) * u[0]]

        def zero(t, u):
            return u[0]
        zero.terminal = True
        zero.direction = -1
        sol = solve_ivp(rhs, (0.0, T), [0.0, 1.0], method="DOP853", rtol=1e-10, atol=1e-12,
                        dense_output=True, events=zero, first_step=1e-6)
        hit = [t for t in sol.t_events[0] if t > 1e-6]
        if hit:
            if hit[0] < first:
                first, w_theta = float(hit[0]), float(th)
            continue
        J = np.abs(sol.sol(ts)[0])
        gap = float(np.min(J - y))
        if gap < worst:
            worst = gap
            if not math.isfinite(first):
                w_theta = float(th)
    dominates = worst >= -1e-9 * max(1.0, float(np.max(y)))
    passed = first >= ell * (1 - 1e-9) and dominates if math.isfinite(first) else dominates
    return ConjugateReport(bool(passed), first, T, bool(dominates), worst, limited, w_theta)
