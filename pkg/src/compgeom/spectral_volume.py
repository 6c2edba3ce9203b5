"""Volumes and first Dirichlet eigenvalues of geodesic balls.

Model balls are treated in any dimension ``n`` through their radial volume
density ``y^(n-1)``; surfaces in polar coordinates use ``alpha = f(r, theta)``.
All eigenvalue inequalities use the geometer's Laplacian ``Delta phi + lambda phi = 0``
and are stated in the form ``sup Delta F / F <= -lambda``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, sparse
from scipy.interpolate import CubicSpline
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from .attraction import s_margin, sra_pointwise_check
from .errors import ChartExceeded, ConvergenceError, DomainError, PreconditionError
from .manifolds import PolarSurface
from .model_geometry import ModelSurface
from .profiles import Profile

__all__ = [
    "SpectralResult",
    "VolumeDensity",
    "VolumeReport",
    "RayleighReport",
    "sphere_area",
    "model_ball_volume",
    "manifold_ball_area",
    "volume_density",
    "volume_density_check",
    "volume_sweep",
    "lambda1_model",
    "first_radial_zero",
    "lambda1_manifold_mesh",
    "rayleigh_chain_check",
    "spectral_sweep",
]

R_START = 1e-6          # shooting starts here with the two-term series
RESIDUAL_TOL = 1e-6     # eigenfunction identity, checked against a spline derivative


@dataclass
class SpectralResult:
    lambda1: float
    bracket: tuple
    phi_samples: np.ndarray             # columns r, phi(r)
    n: int
    rho: float
    method: str = "shooting"
    residual: float = 0.0
    monotone: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phi_samples"] = self.phi_samples.tolist()
        return d


@dataclass
class VolumeDensity:
    """Volume density ``alpha(r, direction)`` of a ball in polar coordinates."""

    alpha: Callable
    n: int = 2

    def __call__(self, r, direction=0.0):
        return self.alpha(r, direction)

    def limit_ratio(self, r: float = 1e-6, n_dir: int = 16) -> float:
        """Largest ``|alpha / r^(n-1) - 1|`` over sampled directions at a small ``r``."""
        th = 2 * math.pi * np.arange(n_dir) / n_dir
        a = np.asarray(self.alpha(np.full(n_dir, r), th), float)
        return float(np.max(np.abs(a / r ** (self.n - 1) - 1.0)))


def sphere_area(n: int) -> float:
    """Area of the unit sphere ``S^(n-1)``."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def model_ball_volume(p: Profile, n: int, rho: float) -> float:
    """``vol(S^(n-1)) * int_0^rho y^(n-1) dr``."""
    if n < 2 or int(n) != n:
        raise DomainError("n must be an integer >= 2")
    if not (0 < rho <= p.ell) or not math.isfinite(rho):
        raise DomainError(f"rho must lie in (0, {p.ell}]")
    val, err = integrate.quad(lambda r: float(p.y(r)) ** (n - 1), 0.0, rho,
                              epsabs=0.0, epsrel=1e-13, limit=200)
    if not err <= 1e-10 * max(abs(val), 1e-300):
        raise ConvergenceError(f"quadrature error {err:.3e} for volume {val:.6e}")
    return sphere_area(n) * val


def _check_ball(man, rho):
    if not isinstance(man, PolarSurface):
        raise PreconditionError("ball integrals need a polar surface")
    if not rho > 0:
        raise DomainError("rho must be positive")
    lim = min(man.inj_o, man.r_dom)
    if rho > lim or (rho == lim and rho == man.r_dom and not man.symmetric):
        raise ChartExceeded(f"rho = {rho} exceeds the polar chart (limit {lim})")


def manifold_ball_area(man: PolarSurface, rho: float) -> float:
    """``int_0^rho int_0^2pi f(r, theta) dtheta dr``."""
    _check_ball(man, rho)
    if man.symmetric:
        val, err = integrate.quad(lambda r: float(man.f(r, 0.0)), 0.0, rho,
                                  epsabs=0.0, epsrel=1e-13, limit=200)
        val *= 2 * math.pi
    else:
        val, err = integrate.dblquad(lambda th, r: float(man.f(r, th)), 0.0, rho,
                                     0.0, 2 * math.pi, epsabs=0.0, epsrel=1e-12)
    if not err <= 1e-9 * max(abs(val), 1e-300):
        raise ConvergenceError(f"quadrature error {err:.3e} for area {val:.6e}")
    return float(val)


def volume_density(man: PolarSurface) -> VolumeDensity:
    return VolumeDensity(lambda r, th: man.f(r, th), 2)


@dataclass
class VolumeReport:
    holds: bool
    density_margin: float               # min f - y
    log_margin: float                   # min d_r log f - y'/y
    witness: tuple
    tol: float
    n_checked: int

    def to_dict(self) -> dict:
        return asdict(self)


def volume_density_check(man: PolarSurface, model: ModelSurface, grid=(128, 128),
                         r_max=None, tol: float = 1e-9) -> VolumeReport:
    """``f >= y`` and ``d_r log f >= y'/y`` on a polar grid, for a pair with ``S <= 0``."""
    pw = sra_pointwise_check(man, model, grid, r_max, tol)
    if not pw.holds:
        raise PreconditionError(
            f"the model does not attract more strongly (margin {pw.margin_min:.3e} at {pw.witness})")
    R = pw.details["r_max"]
    nr, nt = grid
    r = R * (np.arange(nr) + 0.5) / nr
    th = 2 * math.pi * np.arange(nt) / nt
    rr, tt = np.meshgrid(r, th, indexing="ij")
    d = np.asarray(man.f(rr, tt), float) - model.profile.eval(rr)[0]
    lm = s_margin(man, model, rr, tt)
    i = np.unravel_index(int(np.argmin(d)), d.shape)
    dm, lmin = float(d[i]), float(np.min(lm))
    return VolumeReport(dm >= -tol and lmin >= -tol, dm, lmin, (float(rr[i]), float(tt[i])),
                        tol, d.size)


def volume_sweep(man: PolarSurface, model: ModelSurface, rhos) -> np.ndarray:
    """Rows ``(rho, vol_man, vol_model)`` over ``rhos``."""
    rows = []
    for rho in np.atleast_1d(np.asarray(rhos, float)):
        rows.append((rho, manifold_ball_area(man, rho), model_ball_volume(model.profile, 2, rho)))
    return np.array(rows, float).reshape(-1, 3)


# --- radial eigenvalue problem ------------------------------------------------

def _radial_rhs(p: Profile, n: int, lam: float):
    def rhs(r, u):
        return [u[1], -(n - 1) * float(p.y1(r)) / float(p.y(r)) * u[1] - lam * u[0]]
    return rhs


def _radial_solve(p: Profile, n: int, lam: float, r_end: float, dense=False, stop_at_zero=True):
    r0 = R_START
    u0 = [1.0 - lam * r0 * r0 / (2 * n), -lam * r0 / n]

    def zero(r, u):
        return u[0]
    zero.terminal = stop_at_zero
    zero.direction = -1
    return solve_ivp(_radial_rhs(p, n, lam), (r0, r_end), u0, method="DOP853", rtol=1e-12,
                     atol=1e-14, events=zero, dense_output=dense)


def _below(p, n, lam, rho):
    """True when the radial solution stays positive on ``(0, rho]`` (``lam < lambda_1``)."""
    sol = _radial_solve(p, n, lam, rho)
    if sol.status < 0:
        raise ConvergenceError(f"radial integration failed: {sol.message}")
    return sol.t_events[0].size == 0


def first_radial_zero(p: Profile, n: int, lam: float, r_hi: float, tol: float = 1e-13) -> float:
    """First zero of the radial solution at fixed ``lam``, bisected on the endpoint radius."""
    if _below(p, n, lam, r_hi):
        raise ConvergenceError(f"no zero of the radial solution below r = {r_hi}")
    lo, hi = R_START, r_hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        sol = _radial_solve(p, n, lam, mid, stop_at_zero=False)
        if sol.y[0, -1] > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambda1_model(p: Profile, n: int, rho: float, tol: float = 1e-10,
                  n_out: int = 257) -> SpectralResult:
    """First Dirichlet eigenvalue of the model ball ``B_rho`` by shooting and bisection.

    ``lambda`` lies below ``lambda_1`` exactly when the regular radial solution
    has no zero on ``(0, rho]``.
    """
    if n < 2 or int(n) != n:
        raise DomainError("n must be an integer >= 2")
    if not (0 < rho < p.ell) or not math.isfinite(rho):
        raise DomainError(f"rho must lie in (0, {p.ell})")
    lo, hi = 0.0, 1.0 / rho ** 2
    scanned = []
    while _below(p, n, hi, rho):
        scanned.append(hi)
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            raise ConvergenceError("no sign change of phi(rho) found", bracket=(0.0, hi))
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _below(p, n, mid, rho):
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    sol = _radial_solve(p, n, lam, rho, dense=True, stop_at_zero=False)
    r = np.linspace(R_START, rho, 4097)
    phi, dphi = sol.sol(r)
    monotone = bool(np.all(phi[:-1] > 0) and np.all(dphi[1:-1] < 0))
    if not monotone:
        raise ConvergenceError("eigenfunction is not positive and decreasing", bracket=(lo, hi))
    d2 = CubicSpline(r, dphi)(r, 1)
    y, y1, _ = p.eval(r)
    res = d2 + (n - 1) * y1 / y * dphi + lam * phi
    inner = slice(8, -8)
    residual = float(np.max(np.abs(res[inner]))) / max(lam, 1.0)
    if residual > RESIDUAL_TOL:
        raise ConvergenceError(f"eigenfunction identity residual {residual:.3e}", bracket=(lo, hi))
    ro = np.linspace(0.0, rho, n_out)
    po = sol.sol(np.maximum(ro, R_START))[0]
    po[0] = 1.0
    return SpectralResult(lam, (lo, hi), np.column_stack([ro, po]), int(n), float(rho),
                          "shooting", residual, monotone,
                          {"phi_rho": float(phi[-1]), "doublings": len(scanned)})


# --- finite differences on the polar grid --------------------------------------

def _polar_operator(man: PolarSurface, rho: float, nr: int, nt: int):
    """Finite-volume five-point Laplace-Beltrami: stiffness ``A`` and mass diagonal ``M``.

    Cells are centred at ``r_i = (i + 1/2) h`` with ``h = rho / (nr + 1/2)``;
    the node at ``r = rho`` carries the Dirichlet condition. No flux crosses
    ``r = 0`` because ``f`` vanishes there.
    """
    h = rho / (nr + 0.5)
    dt = 2 * math.pi / nt
    r = (np.arange(nr) + 0.5) * h
    th = np.arange(nt) * dt
    R, T = np.meshgrid(r, th, indexing="ij")
    fc = np.asarray(man.f(R, T), float)
    Rf = (np.arange(nr) + 1.0) * h                   # outer faces
    ff = np.asarray(man.f(*np.meshgrid(Rf, th, indexing="ij")), float)
    fa = np.asarray(man.f(R, T + 0.5 * dt), float)   # angular faces
    if np.any(fc <= 0) or np.any(ff <= 0) or np.any(fa <= 0):
        raise ChartExceeded("metric degenerates inside the ball")
    idx = np.arange(nr * nt).reshape(nr, nt)
    wr = ff * dt / h
    wa = h / (fa * dt)
    rows, cols, vals = [], [], []
    diag = np.zeros((nr, nt))
    # radial faces between ring i and i+1; the last ring faces the boundary
    diag += wr
    diag[1:] += wr[:-1]
    rows += [idx[:-1].ravel(), idx[1:].ravel()]
    cols += [idx[1:].ravel(), idx[:-1].ravel()]
    vals += [-wr[:-1].ravel()] * 2
    nb = np.roll(idx, -1, axis=1)
    diag += wa + np.roll(wa, 1, axis=1)
    rows += [idx.ravel(), nb.ravel()]
    cols += [nb.ravel(), idx.ravel()]
    vals += [-wa.ravel()] * 2
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    A = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nr * nt, nr * nt))
    M = (fc * h * dt).ravel()
    return A, M, r, h


def _inverse_iteration(A, M, x0, rtol=1e-8, max_iter=500):
    lu = splu(A)
    x = x0 / math.sqrt(float(x0 @ (M * x0)))
    lam_old = float(x @ (A @ x))
    for k in range(1, max_iter + 1):
        x = lu.solve(M * x)
        x /= math.sqrt(float(x @ (M * x)))
        lam = float(x @ (A @ x))
        if abs(lam - lam_old) <= rtol * abs(lam):
            return lam, x, k
        lam_old = lam
    raise ConvergenceError(f"inverse iteration stalled after {max_iter} steps")


def _mesh_lambda(man, rho, nr, nt):
    A, M, r, h = _polar_operator(man, rho, nr, nt)
    x0 = np.repeat(np.cos(0.5 * math.pi * r / rho), nt)
    lam, x, its = _inverse_iteration(A, M, x0)
    return lam, x.reshape(nr, nt), r, h, its


def lambda1_manifold_mesh(man: PolarSurface, rho: float, resolution: int = 256,
                          n_theta: Optional[int] = None) -> SpectralResult:
    """Smallest Dirichlet eigenvalue of ``B_rho(o)`` from the five-point scheme.

    Solves at ``resolution`` and ``resolution / 2`` radial cells and reports the
    Richardson extrapolate, bracketed by the ``O(h^2)`` error estimate.
    ``n_theta`` defaults to ``resolution / 4`` clipped to ``[32, 128]``.
    """
    _check_ball(man, rho)
    if resolution < 32:
        raise PreconditionError("resolution must be at least 32")
    nt = int(n_theta or min(128, max(32, resolution // 4)))
    coarse = resolution // 2
    lam_c, _, _, hc, _ = _mesh_lambda(man, rho, coarse, nt)
    lam_f, u, r, hf, its = _mesh_lambda(man, rho, resolution, nt)
    lam_x = lam_f + (lam_f - lam_c) * hf ** 2 / (hc ** 2 - hf ** 2)
    err = abs(lam_x - lam_f)
    bracket = (min(lam_x, lam_f) - err, max(lam_x, lam_f) + err)
    prof = np.abs(u).mean(axis=1)
    prof = prof / prof[0]
    samples = np.column_stack([np.append(r, rho), np.append(prof, 0.0)])
    return SpectralResult(float(lam_x), bracket, samples, 2, float(rho), "mesh", 0.0,
                          bool(np.all(np.diff(prof) < 0)),
                          {"lambda_fine": lam_f, "lambda_coarse": lam_c, "n_theta": nt,
                           "resolution": resolution, "iterations": its})


# --- Rayleigh quotient chain ---------------------------------------------------

@dataclass
class RayleighReport:
    holds: bool
    sup_ratio: float                    # sup of Delta F / F over the grid
    inf_ratio: float
    lambda_model: float
    lambda_man: float
    lambda_man_bracket: tuple
    eigen_holds: bool
    witness: tuple
    tol: float

    def to_dict(self) -> dict:
        return asdict(self)


def _laplacian_ratio(man, res: SpectralResult, lam_sol, grid):
    """``Delta F / F`` for ``F = phi(r)`` using the polar Laplacian of ``man``."""
    nr, nt = grid
    rho = res.rho
    r = rho * (np.arange(nr) + 0.5) / nr
    th = 2 * math.pi * np.arange(nt) / nt
    rr, tt = np.meshgrid(r, th, indexing="ij")
    phi, dphi, d2phi = lam_sol(rr)
    f = np.asarray(man.f(rr, tt), float)
    fr = np.asarray(man.f_r(rr, tt), float)
    return (d2phi + fr / f * dphi) / phi, rr, tt


def _phi_functions(model: ModelSurface, res: SpectralResult):
    sol = _radial_solve(model.profile, res.n, res.lambda1, res.rho, dense=True, stop_at_zero=False)
    rs = np.linspace(R_START, res.rho, 8193)
    d1 = sol.sol(rs)[1]
    d2 = CubicSpline(rs, d1)

    def ev(r):
        r = np.maximum(r, R_START)
        u = sol.sol(r.ravel())
        return (u[0].reshape(r.shape), u[1].reshape(r.shape), d2(r, 1))
    return ev


def rayleigh_chain_check(man: PolarSurface, model: ModelSurface, rho: float,
                         grid=(128, 64), resolution: int = 256, tol: float = 1e-6,
                         with_mesh: bool = True) -> RayleighReport:
    """``sup Delta F / F <= -lambda_1(model ball)`` with ``F`` the model eigenfunction,
    then ``lambda_1(B_rho(o)) >= lambda_1(model ball)`` from the mesh solver."""
    pw = sra_pointwise_check(man, model, (max(64, grid[0]), max(64, grid[1])), rho)
    if not pw.holds:
        raise PreconditionError(
            f"the model does not attract more strongly (margin {pw.margin_min:.3e} at {pw.witness})")
    _check_ball(man, rho)
    res = lambda1_model(model.profile, 2, rho)
    ratio, rr, tt = _laplacian_ratio(man, res, _phi_functions(model, res), grid)
    i = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    sup = float(ratio[i])
    lam = res.lambda1
    if with_mesh:
        mesh = lambda1_manifold_mesh(man, rho, resolution)
        lam_man, br = mesh.lambda1, mesh.bracket
        eig = br[1] >= lam - tol - (res.bracket[1] - res.bracket[0])
    else:
        lam_man, br, eig = math.nan, (math.nan, math.nan), True
    return RayleighReport(sup <= -lam + tol and eig, sup, float(np.min(ratio)), lam, lam_man, br,
                          bool(eig),
                          (float(rr[i]), float(tt[i])), tol)


def spectral_sweep(man: PolarSurface, model: ModelSurface, rhos, resolution: int = 128,
                   eigen: bool = True) -> np.ndarray:
    """Rows ``(rho, vol_man, vol_model, lambda_man, lambda_model, margin)``.

    ``margin`` is ``lambda_man - lambda_model`` when eigenvalues are computed and
    ``vol_man - vol_model`` otherwise.
    """
    rows = []
    for rho in np.atleast_1d(np.asarray(rhos, float)):
        vm = manifold_ball_area(man, rho)
        vt = model_ball_volume(model.profile, 2, rho)
        if eigen:
            lm = lambda1_manifold_mesh(man, rho, resolution).lambda1
            lt = lambda1_model(model.profile, 2, rho).lambda1
            rows.append((rho, vm, vt, lm, lt, lm - lt))
        else:
            rows.append((rho, vm, vt, math.nan, math.nan, vm - vt))
    return np.array(rows, float).reshape(-1, 6)
