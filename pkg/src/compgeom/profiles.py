"""Warping functions ``y(r)`` of model surfaces ``dr^2 + y(r)^2 dtheta^2``.

A :class:`Profile` bundles ``y`` with its first two derivatives and the radial
extent ``ell`` of the polar chart. Closed profiles (``ell < inf``) vanish at
both ends and describe spheres; open profiles describe planes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Callable, NamedTuple, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import ellipeinc, ellipe

from .errors import DomainError, PreconditionError

__all__ = [
    "Profile",
    "Violation",
    "ValidationReport",
    "validate_profile",
    "curvature",
    "perturb_profile",
    "builtin_profile",
    "tabulated_profile",
    "BUILTIN_FAMILIES",
]

DEFAULT_R_MAX = 20.0


@dataclass(frozen=True, eq=False)
class Profile:
    """Warping function of a model surface.

    ``y``, ``y1`` and ``y2`` are vectorised callables defined on ``[0, ell]``
    (``[0, r_max]`` for open profiles). Use :meth:`eval` for arguments outside
    that range: it applies the odd extension about ``0`` (and about ``ell`` for
    closed profiles), which is how geodesics are continued through a vertex.
    """

    y: Callable
    y1: Callable
    y2: Callable
    ell: float = math.inf
    kind: str = "open"
    name: str = "custom"
    params: tuple = ()
    r_max: float = DEFAULT_R_MAX
    analytic: bool = True
    meta: dict = field(default_factory=dict, repr=False)
    joint: Optional[Callable] = field(default=None, repr=False)  # r -> (y, y', y'') in one pass

    def __post_init__(self):
        if self.kind not in ("open", "closed"):
            raise ValueError(f"kind must be 'open' or 'closed', got {self.kind!r}")
        if not self.ell > 0:
            raise ValueError("ell must be positive")
        if self.kind == "closed" and not math.isfinite(self.ell):
            raise ValueError("closed profiles need a finite ell")
        if self.kind == "open" and math.isfinite(self.ell):
            raise ValueError("open profiles have ell = inf")

    @property
    def closed(self) -> bool:
        return self.kind == "closed"

    @property
    def working_radius(self) -> float:
        """``ell`` for closed profiles, otherwise the scan horizon ``r_max``."""
        return self.ell if self.closed else self.r_max

    def _fold(self, r):
        r = np.asarray(r, dtype=float)
        if self.closed:
            two = 2.0 * self.ell
            s = np.mod(r + self.ell, two) - self.ell
        else:
            s = r
        return s

    def eval(self, r):
        """Return ``(y, y', y'')`` at ``r`` using the odd extension."""
        s = self._fold(r)
        sgn = np.where(s < 0, -1.0, 1.0)
        a = np.abs(s)
        if self.joint is not None:
            y, y1, y2 = self.joint(a)
            return sgn * y, y1, sgn * y2
        return sgn * self.y(a), np.asarray(self.y1(a), float) + 0.0 * a, sgn * self.y2(a)

    def logderiv(self, r):
        y, y1, _ = self.eval(r)
        return y1 / y

    def vertex_distance(self, r):
        """Distance to the vertex of a point whose extended radial coordinate is ``r``."""
        return np.abs(self._fold(r))

    def vertex_flips(self, r):
        """Parity of the number of vertex crossings needed to reach extended ``r``."""
        r = np.asarray(r, dtype=float)
        if self.closed:
            return np.mod(np.floor(r / self.ell), 2).astype(int)
        return (r < 0).astype(int)


class Violation(NamedTuple):
    condition: str
    r: float
    value: float


@dataclass
class ValidationReport:
    passed: bool
    violations: list

    def __bool__(self):
        return self.passed

    def summary(self) -> str:
        if self.passed:
            return "profile valid"
        names = sorted({v.condition for v in self.violations})
        return f"{len(self.violations)} violation(s): " + ", ".join(names)


def _fd1(fun, r, h):
    return (fun(r - 2 * h) - 8 * fun(r - h) + 8 * fun(r + h) - fun(r + 2 * h)) / (12 * h)


def validate_profile(p: Profile, grid_size: int = 1024, tol: float = 1e-8,
                     r_max: float | None = None) -> ValidationReport:
    """Check the defining conditions of a profile on a uniform grid.

    Violations are returned as data; nothing is raised for an invalid profile.
    """
    if grid_size < 16:
        raise PreconditionError("grid_size must be at least 16")
    R = p.ell if p.closed else (r_max if r_max is not None else p.r_max)
    viol = []
    y0, y10, _ = (float(v) for v in p.eval(0.0))
    if not abs(y0) <= tol:
        viol.append(Violation("y(0)=0", 0.0, y0))
    if not abs(y10 - 1.0) <= tol:
        viol.append(Violation("y'(0)=1", 0.0, y10))
    if p.closed:
        ye = float(p.y(np.asarray(p.ell)))
        y1e = float(p.y1(np.asarray(p.ell)))
        if not abs(ye) <= tol:
            viol.append(Violation("y(ell)=0", p.ell, ye))
        if not abs(y1e + 1.0) <= tol:
            viol.append(Violation("y'(ell)=-1", p.ell, y1e))

    r = R * np.arange(1, grid_size + 1) / (grid_size + 1)
    y, y1, y2 = p.eval(r)
    for ri, yi in zip(r[~(y > 0)], y[~(y > 0)]):
        viol.append(Violation("y>0", float(ri), float(yi)))

    h = 1e-4 * min(1.0, R)
    fy = lambda s: p.eval(s)[0]
    fy1 = lambda s: p.eval(s)[1]
    d1 = _fd1(fy, r, h)
    bad = np.abs(y1 - d1) > tol * np.maximum(1.0, np.abs(y1))
    for ri, vi in zip(r[bad], (y1 - d1)[bad]):
        viol.append(Violation("y' matches finite difference", float(ri), float(vi)))
    d2 = _fd1(fy1, r, h)
    bad = np.abs(y2 - d2) > tol * np.maximum(1.0, np.abs(y2))
    for ri, vi in zip(r[bad], (y2 - d2)[bad]):
        viol.append(Violation("y'' matches finite difference", float(ri), float(vi)))
    return ValidationReport(not viol, viol)


def curvature(p: Profile, r):
    """Gaussian curvature ``-y''/y`` of the model at radius ``r``."""
    ra = np.asarray(r, dtype=float)
    if np.any(ra <= 0) or np.any(ra >= p.ell):
        raise DomainError(f"r must lie in (0, {p.ell})")
    y, _, y2 = p.eval(ra)
    out = -y2 / y
    return float(out) if out.ndim == 0 else out


# --- smooth blends -----------------------------------------------------------

def _bump(x):
    """``e^{-1/x}`` for ``x > 0`` with its first two derivatives."""
    x = np.asarray(x, dtype=float)
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    h = np.where(pos, np.exp(-1.0 / xs), 0.0)
    h1 = np.where(pos, h / xs**2, 0.0)
    h2 = np.where(pos, h * (1.0 / xs**4 - 2.0 / xs**3), 0.0)
    return h, h1, h2


def smoothstep(x):
    """C-infinity step rising from 0 at ``x<=0`` to 1 at ``x>=1``; returns ``(S, S', S'')``."""
    x = np.asarray(x, dtype=float)
    a, a1, a2 = _bump(x)
    b, b1, b2 = _bump(1.0 - x)
    b1, b2 = -b1, b2
    d = a + b
    s = a / d
    n = a1 * b - a * b1
    s1 = n / d**2
    n1 = a2 * b - a * b2
    d1 = a1 + b1
    s2 = (n1 * d - 2.0 * n * d1) / d**3
    return s, s1, s2


def _falling(r, start, stop):
    """Smooth decreasing function: 1 before ``start``, 0 after ``stop``."""
    w = stop - start
    s, s1, s2 = smoothstep((np.asarray(r, float) - start) / w)
    return 1.0 - s, -s1 / w, -s2 / w**2


def perturb_profile(p: Profile, delta: float, r1: float, r2: float) -> Profile:
    """Perturbed profile ``y_delta = m_delta * y`` with stronger attraction on ``(r1, r2)``.

    On ``(r1, r2)`` the logarithmic derivative drops by exactly ``delta``; it
    never increases anywhere. Closed profiles shrink to ``ell - delta`` and
    are capped by a linear factor that restores ``y(ell-delta) = 0`` and
    ``y'(ell-delta) = -1``.
    """
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    if not (0 < r1 < r2 < p.ell):
        raise PreconditionError("need 0 < r1 < r2 < ell")

    blend = lambda r: _falling(r, 0.25 * r1, 0.75 * r1)

    if p.closed:
        end = p.ell - delta
        if not end > r2:
            raise PreconditionError(f"delta={delta} too large: ell-delta <= r2")
        Y = float(p.y(np.asarray(end)))
        g = lambda r: (end - r) / Y - math.exp(-delta * r)
        if g(0.0) <= 0:
            raise PreconditionError(f"delta={delta} too large: no crossover radius")
        r3 = brentq(g, 0.0, end, xtol=1e-14, rtol=1e-15)
        if not r3 > r2:
            raise PreconditionError(
                f"delta={delta} too large: crossover radius {r3:.6g} <= r2={r2}")
        w = end - r3
        cap = lambda r: _falling(r, r3 + 0.25 * w, r3 + 0.75 * w)
    else:
        end = math.inf
        r3 = math.inf

    def m_parts(r):
        r = np.asarray(r, dtype=float)
        ph, ph1, ph2 = blend(r)
        E = np.exp(-delta * r)
        if p.closed:
            ps, ps1, ps2 = cap(r)
            lin = (end - r) / Y
            G = ps * E + (1 - ps) * lin
            G1 = ps1 * (E - lin) - delta * ps * E - (1 - ps) / Y
            G2 = ps2 * (E - lin) + 2 * ps1 * (1.0 / Y - delta * E) + delta**2 * ps * E
        else:
            G, G1, G2 = E, -delta * E, delta**2 * E
        m = ph + (1 - ph) * G
        m1 = ph1 * (1 - G) + (1 - ph) * G1
        m2 = ph2 * (1 - G) - 2 * ph1 * G1 + (1 - ph) * G2
        return m, m1, m2

    def yd(r):
        m, _, _ = m_parts(r)
        return m * p.y(np.asarray(r, float))

    def yd1(r):
        r = np.asarray(r, float)
        m, m1, _ = m_parts(r)
        return m1 * p.y(r) + m * p.y1(r)

    def yd2(r):
        r = np.asarray(r, float)
        m, m1, m2 = m_parts(r)
        return m2 * p.y(r) + 2 * m1 * p.y1(r) + m * p.y2(r)

    return Profile(yd, yd1, yd2, ell=end, kind=p.kind,
                   name=f"perturbed({p.name})", params=(delta, r1, r2),
                   r_max=p.r_max, analytic=False,
                   meta={"base": p, "delta": delta, "r1": r1, "r2": r2, "r3": r3,
                         "m": m_parts})


# --- builtin families --------------------------------------------------------

def _plane(params):
    if params:
        raise PreconditionError("plane takes no parameters")
    return Profile(lambda r: np.asarray(r, float) * 1.0,
                   lambda r: np.ones_like(np.asarray(r, float)),
                   lambda r: np.zeros_like(np.asarray(r, float)),
                   name="plane")


def _sphere(params):
    k = float(params[0]) if params else 1.0
    if not k > 0:
        raise PreconditionError("sphere curvature must be positive")
    s = math.sqrt(k)
    return Profile(lambda r: np.sin(s * np.asarray(r, float)) / s,
                   lambda r: np.cos(s * np.asarray(r, float)),
                   lambda r: -s * np.sin(s * np.asarray(r, float)),
                   ell=math.pi / s, kind="closed", name="sphere", params=(k,))


def _hyperbolic(params):
    k = float(params[0]) if params else 1.0
    if not k > 0:
        raise PreconditionError("hyperbolic curvature magnitude must be positive")
    s = math.sqrt(k)
    return Profile(lambda r: np.sinh(s * np.asarray(r, float)) / s,
                   lambda r: np.cosh(s * np.asarray(r, float)),
                   lambda r: s * np.sinh(s * np.asarray(r, float)),
                   name="hyperbolic", params=(k,), r_max=8.0 / s)


def _polynomial(params):
    if not params:
        raise PreconditionError("polynomial needs coefficients")
    c = np.asarray(params, dtype=float)
    P = np.polynomial.Polynomial(c)
    P1, P2 = P.deriv(1), P.deriv(2)
    return Profile(lambda r: P(np.asarray(r, float)),
                   lambda r: P1(np.asarray(r, float)) + 0.0 * np.asarray(r, float),
                   lambda r: P2(np.asarray(r, float)) + 0.0 * np.asarray(r, float),
                   name="polynomial", params=tuple(c))


def _ellipsoid(a, c, name):
    """Ellipsoid of revolution with equatorial semi-axis ``a`` and polar semi-axis ``c``.

    The vertex sits at a pole; ``r`` is meridian arclength, so ``ell`` is half
    the meridian perimeter.
    """
    if not (a > 0 and c > 0):
        raise PreconditionError("ellipsoid semi-axes must be positive")
    m = 1.0 - (c / a) ** 2
    ell = 2.0 * a * float(ellipe(m))
    u_nodes = np.linspace(0.0, math.pi, 4097)
    r_nodes = a * ellipeinc(u_nodes, m)
    guess = CubicSpline(r_nodes, u_nodes)

    def speed(u):
        return np.sqrt(a * a * np.cos(u) ** 2 + c * c * np.sin(u) ** 2)

    def u_of(r):
        r = np.clip(np.asarray(r, float), 0.0, ell)
        u = guess(r)
        # the spline guess is good to ~1e-12, one Newton step finishes it
        return u - (a * ellipeinc(u, m) - r) / speed(u)

    def joint(r):
        u = u_of(r)
        su_, cu = np.sin(u), np.cos(u)
        s = speed(u)
        ds = (c * c - a * a) * su_ * cu / s
        return a * su_, a * cu / s, (-a * su_ * s - a * cu * ds) / s**3

    def y(r):
        return joint(r)[0]

    def y1(r):
        return joint(r)[1]

    def y2(r):
        return joint(r)[2]

    return Profile(y, y1, y2, ell=ell, kind="closed", name=name, params=(a, c),
                   meta={"u_of": u_of, "quarter_meridian": ell / 2}, joint=joint)


def _prolate(params):
    a, c = (float(v) for v in params)
    if not c > a:
        raise PreconditionError("prolate ellipsoid needs polar axis > equatorial axis")
    return _ellipsoid(a, c, "prolate")


def _oblate(params):
    a, c = (float(v) for v in params)
    if not a > c:
        raise PreconditionError("oblate ellipsoid needs equatorial axis > polar axis")
    return _ellipsoid(a, c, "oblate")


def tabulated_profile(r: Sequence[float], y: Sequence[float], name: str = "tabulated",
                      closing_tol: float = 1e-9) -> Profile:
    """Profile interpolated by a cubic spline through ``(r, y)`` samples.

    The samples must start at ``r = 0``. If the last sample vanishes the
    profile is closed with ``ell`` equal to the last abscissa; otherwise it is
    open with its scan horizon at the last abscissa.
    """
    r = np.asarray(r, dtype=float)
    yv = np.asarray(y, dtype=float)
    if r.ndim != 1 or r.shape != yv.shape or r.size < 4:
        raise PreconditionError("need at least four (r, y) samples of equal length")
    if r[0] != 0.0 or np.any(np.diff(r) <= 0):
        raise PreconditionError("sample radii must start at 0 and increase")
    spline = CubicSpline(r, yv)
    d1, d2 = spline.derivative(1), spline.derivative(2)
    if abs(yv[-1]) <= closing_tol:
        return Profile(spline, d1, d2, ell=float(r[-1]), kind="closed", name=name,
                       analytic=False)
    return Profile(spline, d1, d2, name=name, r_max=float(r[-1]), analytic=False)


def _tabulated(params):
    flat = np.asarray(params, dtype=float)
    if flat.size % 2:
        raise PreconditionError("tabulated params are flattened (r, y) pairs")
    pairs = flat.reshape(-1, 2)
    return tabulated_profile(pairs[:, 0], pairs[:, 1])


BUILTIN_FAMILIES = {
    "plane": _plane,
    "sphere": _sphere,
    "hyperbolic": _hyperbolic,
    "prolate": _prolate,
    "oblate": _oblate,
    "polynomial": _polynomial,
    "tabulated": _tabulated,
}


def builtin_profile(name: str, params: Sequence[float] = ()) -> Profile:
    """Build a named profile family.

    ``sphere`` and ``hyperbolic`` take the curvature magnitude ``k``;
    ``prolate``/``oblate`` take ``(equatorial, polar)`` semi-axes;
    ``polynomial`` takes coefficients in increasing degree; ``tabulated``
    takes flattened ``(r, y)`` pairs.
    """
    try:
        factory = BUILTIN_FAMILIES[name]
    except KeyError:
        raise PreconditionError(
            f"unknown profile family {name!r}; known: {sorted(BUILTIN_FAMILIES)}") from None
    try:
        return factory(list(params))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PreconditionError):
            raise
        raise PreconditionError(f"invalid parameters for {name!r}: {exc}") from exc
