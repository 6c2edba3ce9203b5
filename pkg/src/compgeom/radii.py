"""Injectivity and convexity radii, the convexity bound, and the pinching classifier.

Strong convexity is tested by sampling: a ball passes when every sampled pair
of its points has a unique minimizing geodesic that never leaves the ball.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .attraction import sra_pointwise_check
from .errors import ChartExceeded, DomainError, PreconditionError
from .manifolds import FlatCylinder, PolarSurface, builtin_polar, manifold_distance
from .model_geometry import ModelSurface, d_theta_batch, injectivity_radius, r_phi
from .profiles import Profile
from .triangles import base_distances, detect_encounters, build_comparison_triangle, random_triangles

__all__ = [
    "RadiiReport",
    "PinchVerdict",
    "r_star",
    "ball_injectivity",
    "convexity_scan",
    "convexity_radius_vertex",
    "convexity_radius_opposite",
    "reflected_profile",
    "convexity_bound",
    "spot_check_convexity",
    "pinching_classify",
    "pinching_from_models",
]

R_STAR_TOL = 1e-4
CONV_TOL = 1e-3
PINCH_TOL = 1e-9
BALL_TOL = 1e-8         # how far a geodesic may poke out of the ball before it counts
_HOMOGENEOUS = {"sphere", "plane", "hyperbolic"}


@dataclass
class RadiiReport:
    r_star: float
    conv_model_vertex: float
    conv_bound: float
    inj_o: float
    r_star_limited: bool = False
    conv_limited: bool = False
    spot_check: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


# --- injectivity ----------------------------------------------------------------

def _horizon(man) -> float:
    if isinstance(man, FlatCylinder):
        return math.inf
    return man.r_dom


def _nonpositive_chart(man: PolarSurface, n=96) -> bool:
    r = man.r_dom * (np.arange(n) + 0.5) / n
    th = 2 * math.pi * np.arange(n) / n
    rr, tt = np.meshgrid(r, th, indexing="ij")
    return bool(np.all(man.radial_curvature(rr, tt) <= 1e-12))


def ball_injectivity(man, n_grid: int = 24):
    """``r -> inj_M(B_r(o))`` as a callable, plus ``(inj_o, limited)``.

    The cylinder and space forms are exact. Other rotationally symmetric
    surfaces use the model's cut-time scan on radii ``<= r``; nonsymmetric
    charts are accepted only when their curvature is nonpositive, which rules
    out cut points inside the chart.
    """
    if isinstance(man, FlatCylinder):
        return (lambda r: math.pi), math.pi, False
    if not isinstance(man, PolarSurface):
        raise PreconditionError("injectivity estimation needs a polar surface or the cylinder")
    if man.symmetric:
        model = man.model
        name = man.profile.name
        if name in _HOMOGENEOUS:
            inj = model.ell if model.closed else math.inf
            return (lambda r: inj), inj, math.isinf(inj)
        inj_o = model.ell if model.closed else math.inf
        hi = model.ell if model.closed else man.r_dom
        grid = list(hi * (np.arange(1, n_grid + 1) - 0.5) / n_grid)
        vals = {}

        def at(s):
            if s not in vals:
                vals[s] = injectivity_radius(model, s)
            return vals[s]

        def inj_ball(r):
            pts = [s for s in grid if s <= r] + ([r] if 0 < r < hi else [])
            return min([inj_o] + [at(s) for s in pts])
        return inj_ball, inj_o, math.isinf(inj_o)
    if _nonpositive_chart(man):
        return (lambda r: math.inf), math.inf, True
    raise PreconditionError("injectivity estimation needs a symmetric or nonpositively curved chart")


def r_star(man, tol: float = R_STAR_TOL):
    """Fixed point of ``inj_M(B_r(o)) = 2 r`` by bisection.

    Returns ``(r_star, limited)``; ``limited`` means no cut point was seen
    before the chart horizon and ``r_star`` is only a lower bound.
    """
    inj_ball, inj_o, _ = ball_injectivity(man)
    H = _horizon(man)
    hi = min(0.5 * inj_o, H) if math.isfinite(inj_o) else H
    if inj_ball(hi) - 2 * hi >= 0:
        return float(hi), not math.isfinite(inj_o) or hi < 0.5 * inj_o
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if inj_ball(mid) - 2 * mid >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


# --- convexity on models -----------------------------------------------------------

def convexity_scan(model: ModelSurface, r: float, n_theta: int = 24, fractions=(1.0, 0.9, 0.6, 0.3),
                   n_t: int = 65):
    """Test ``B_r(vertex)`` on pairs ``((r, 0), (s r, theta))``.

    Returns ``(convex, worst_excess, n_pairs)`` where ``worst_excess`` is the
    largest ``max_t R - r`` along the minimizing geodesics.
    """
    if not (0 < r < model.ell):
        raise DomainError(f"r must lie in (0, {model.ell})")
    th = math.pi * np.arange(1, n_theta + 1) / n_theta
    S, T = np.meshgrid(np.asarray(fractions, float) * r, th, indexing="ij")
    r2, theta = S.ravel(), T.ravel()
    r1 = np.full(r2.shape, r)
    info = d_theta_batch(model, r1, r2, theta, info=True)
    D = np.asarray(info.distance, float)
    unique = np.array([len(c) == 1 for c in info.candidates])
    at_pi = theta >= math.pi
    unique[at_pi] &= np.asarray(info.meridian, bool)[at_pi]
    ts = D[:, None] * np.linspace(0.0, 1.0, n_t)[None, :]
    R = r_phi(model, r1[:, None], np.asarray(info.phi, float)[:, None], ts)
    excess = float(np.max(np.max(R, axis=1) - r))
    return bool(np.all(unique) and excess <= BALL_TOL), excess, int(r2.size)


def convexity_radius_vertex(model: ModelSurface, tol: float = CONV_TOL, n_theta: int = 24):
    """Largest ``r`` with ``B_r`` about the vertex strongly convex on the sampled pairs.

    Returns ``(radius, limited)``; ``limited`` marks a ball that stayed convex up
    to the model's working radius.
    """
    hi = model.ell * (1 - 1e-3) if model.closed else model.horizon
    if convexity_scan(model, hi, n_theta)[0]:
        return float(hi), True
    lo = 0.0
    while hi - lo > tol / 4:
        mid = 0.5 * (lo + hi)
        if convexity_scan(model, mid, n_theta)[0]:
            lo = mid
        else:
            hi = mid
    return float(lo), False


def reflected_profile(p: Profile) -> Profile:
    """``r -> y(ell - r)``: the same closed model seen from the opposite vertex."""
    if not p.closed:
        raise PreconditionError("only closed profiles have an opposite vertex")
    ell = p.ell
    return Profile(lambda r: p.y(ell - np.asarray(r, float)),
                   lambda r: -np.asarray(p.y1(ell - np.asarray(r, float)), float),
                   lambda r: p.y2(ell - np.asarray(r, float)),
                   ell, "closed", f"{p.name}:reflected", p.params, p.r_max, p.analytic)


def convexity_radius_opposite(model: ModelSurface, tol: float = CONV_TOL):
    return convexity_radius_vertex(ModelSurface(reflected_profile(model.profile)), tol)


# --- the convexity bound -----------------------------------------------------------

def _ball_points(man, rng, r, k):
    rad = r * np.sqrt(rng.uniform(0, 1, k))
    ang = rng.uniform(0, 2 * math.pi, k)
    if isinstance(man, FlatCylinder):
        return [(float(np.mod(a, 2 * math.pi)), float(z))
                for a, z in zip(rad * np.cos(ang), rad * np.sin(ang))]
    return [(float(a), float(b)) for a, b in zip(rad, ang)]


def spot_check_convexity(man, r: float, n_pairs: int = 100, seed: int = 0, n_t: int = 33) -> dict:
    """Sample pairs in ``B_r(o)``; each needs one minimizing geodesic that stays inside."""
    rng = np.random.default_rng(seed)
    P, Q = _ball_points(man, rng, r, n_pairs), _ball_points(man, rng, r, n_pairs)
    worst, multi = -math.inf, 0
    for p, q in zip(P, Q):
        if p == q:
            continue
        d, paths = manifold_distance(man, p, q)
        multi += len(paths) > 1
        L = base_distances(man, paths[0], np.linspace(0.0, d, n_t))
        worst = max(worst, float(np.max(L)) - r)
    return {"passed": bool(multi == 0 and worst <= BALL_TOL), "radius": float(r),
            "n_pairs": int(n_pairs), "worst_excess": worst, "non_unique": int(multi)}


def _sra_chart(man, model):
    if isinstance(man, FlatCylinder):
        # inside the injectivity radius the cylinder is the flat disc
        return builtin_polar("plane"), min(math.pi, model.ell) * (1 - 1e-9)
    return man, None


def convexity_bound(man, model: ModelSurface, n_pairs: int = 100, seed: int = 0,
                    n_probe: int = 8) -> RadiiReport:
    """``conv_M(o) >= min(conv of the model vertex, r*(o))``, then a spot check at 0.9x."""
    chart, r_max = _sra_chart(man, model)
    pw = sra_pointwise_check(chart, model, r_max=r_max)
    if not pw.holds:
        raise PreconditionError(
            f"the model does not attract more strongly (margin {pw.margin_min:.3e} at {pw.witness})")
    if n_probe and model.profile.name not in _HOMOGENEOUS:
        for tri in random_triangles(man, model, n_probe, seed=seed):
            comp = build_comparison_triangle(model, tri)
            if any(bad for _, bad in detect_encounters(man, model, tri, comp)):
                raise PreconditionError("bad encounter on the probe suite")
    rs, rs_lim = r_star(man)
    cv, cv_lim = convexity_radius_vertex(model)
    _, inj_o, _ = ball_injectivity(man)
    bound = min(cv, rs)
    H = _horizon(man)
    spot = spot_check_convexity(man, 0.9 * min(bound, H), n_pairs, seed)
    note = f"convexity sampled at {spot['n_pairs']} pairs"
    if rs_lim or cv_lim:
        note += "; horizon-limited"
    return RadiiReport(rs, cv, bound, inj_o, rs_lim, cv_lim, spot, note)


# --- pinching -----------------------------------------------------------------------

@dataclass
class PinchVerdict:
    verdict: str                        # "Sphere" | "AllamigeonWarner" | "Inconclusive"
    inputs: tuple                       # (ell_tilde, ell_hat, conv_hat_opposite, R)
    reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def pinching_classify(ell_tilde: float, ell_hat: float, conv_hat_opposite: float, R: float,
                      tol: float = PINCH_TOL) -> PinchVerdict:
    """Decide which conclusion the pinching hypotheses support.

    ``Sphere`` when ``ell_tilde > ell_hat - conv_hat_opposite``; in the equality
    case ``Sphere`` when ``R > ell_tilde`` and ``AllamigeonWarner`` when
    ``R = ell_tilde``; otherwise ``Inconclusive``.
    """
    vals = (float(ell_tilde), float(ell_hat), float(conv_hat_opposite), float(R))
    if not all(math.isfinite(v) and v > 0 for v in vals):
        raise DomainError("pinching inputs must be positive and finite")
    lt, lh, cv, R = vals
    if R > lh + tol:
        raise PreconditionError(f"R = {R} exceeds ell_hat = {lh}")
    gap = lt - (lh - cv)
    if gap > tol:
        return PinchVerdict("Sphere", vals, f"ell_tilde exceeds ell_hat - conv by {gap:.3e}")
    if abs(gap) <= tol:
        if R > lt + tol:
            return PinchVerdict("Sphere", vals, "equality case with R > ell_tilde")
        if abs(R - lt) <= tol:
            return PinchVerdict("AllamigeonWarner", vals, "equality case with R = ell_tilde")
        return PinchVerdict("Inconclusive", vals, "equality case with R < ell_tilde")
    return PinchVerdict("Inconclusive", vals, f"ell_tilde falls short of ell_hat - conv by {-gap:.3e}")


def pinching_from_models(model_tilde: ModelSurface, model_hat: ModelSurface, R: float,
                         tol: float = PINCH_TOL) -> PinchVerdict:
    """:func:`pinching_classify` with ``conv`` at the opposite vertex computed from ``model_hat``."""
    if not (model_tilde.closed and model_hat.closed):
        raise PreconditionError("pinching needs closed models")
    cv, _ = convexity_radius_opposite(model_hat)
    return pinching_classify(model_tilde.ell, model_hat.ell, cv, R, tol)
