"""Vectorised DOP853 for many independent autonomous systems at once.

Every lane carries its own time, step size and tolerance control; lanes drop
out of the active set as they finish, so a batch of a few thousand geodesics
costs about as many numpy calls as a single one. Step control mirrors
``scipy.integrate.DOP853`` and the Butcher tableau is taken from scipy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _co

from .errors import IntegrationError

_NS = _co.N_STAGES
_A = _co.A[:_NS, :_NS]
_B = _co.B
_C = _co.C[:_NS]
_E3 = _co.E3
_E5 = _co.E5
_A_EXTRA = _co.A[_NS + 1:]
_C_EXTRA = _co.C[_NS + 1:]
_D = _co.D
_POW = _co.INTERPOLATOR_POWER

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
_EXP = -1.0 / 8.0


@dataclass
class Steps:
    """Accepted steps of a recorded integration, flattened over lanes."""

    lane: np.ndarray     # (S,)
    t0: np.ndarray       # (S,)
    h: np.ndarray        # (S,)
    y0: np.ndarray       # (S, d)
    F: np.ndarray        # (7, S, d) dense-output coefficients

    def evaluate(self, rows, x):
        """State at fraction ``x`` in ``[0, 1]`` of the recorded steps ``rows``."""
        return dense_eval(self.y0[rows], self.F[:, rows], x)


@dataclass
class BatchSolution:
    t: np.ndarray        # (n,) final independent variable
    y: np.ndarray        # (n, d) final state
    status: np.ndarray   # (n,) 0 reached t_end, 1 stop condition, 2 halted, -1 failed
    which: np.ndarray    # (n,) index of the stop condition that fired, or -1
    n_steps: np.ndarray  # (n,) accepted steps per lane
    steps: Steps | None = None


def dense_eval(y0, F, x):
    """Evaluate the DOP853 interpolant; ``x`` has one entry per row of ``y0``."""
    x = np.asarray(x, float)[:, None]
    y = np.zeros_like(y0)
    for i, f in enumerate(F[::-1]):
        y += f
        if i % 2 == 0:
            y *= x
        else:
            y *= 1.0 - x
    return y + y0


def _call(fun, y, args):
    return fun(y, args) if args is not None else fun(y, None)


def _initial_step(fun, y0, f0, args, rtol, atol, span):
    scale = atol + np.abs(y0) * rtol
    d = y0.shape[1]
    d0 = np.sqrt(np.sum((y0 / scale) ** 2, 1) / d)
    d1 = np.sqrt(np.sum((f0 / scale) ** 2, 1) / d)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, span)
    f1 = _call(fun, y0 + h0[:, None] * f0, args)
    d2 = np.sqrt(np.sum(((f1 - f0) / scale) ** 2, 1) / d) / h0
    big = np.maximum(d1, d2)
    h1 = np.where(big <= 1e-15, np.maximum(1e-6, h0 * 1e-3),
                  (0.01 / np.maximum(big, 1e-300)) ** (1.0 / 8.0))
    return np.minimum(np.minimum(100 * h0, h1), span)


def _extra_stages(fun, K, y_old, h, args):
    """Fill the three extra stages used only by the interpolant."""
    for s, a in enumerate(_A_EXTRA, start=_NS + 1):
        dy = np.tensordot(a[:s], K[:s], axes=(0, 0)) * h[:, None]
        K[s] = _call(fun, y_old + dy, args)


def _dense_coeffs(fun, K, y_old, y_new, h, args):
    _extra_stages(fun, K, y_old, h, args)
    F = np.empty((_POW,) + y_old.shape)
    delta = y_new - y_old
    hh = h[:, None]
    F[0] = delta
    F[1] = hh * K[0] - delta
    F[2] = 2 * delta - hh * (K[_NS] + K[0])
    F[3:] = hh[None] * np.tensordot(_D, K, axes=(1, 0))
    return F


def _poly1(y0, F, x):
    """Interpolant of a single component: ``y0`` (m,), ``F`` (7, m)."""
    y = np.zeros_like(y0)
    for i, f in enumerate(F[::-1]):
        y += f
        if i % 2 == 0:
            y *= x
        else:
            y *= 1.0 - x
    return y + y0


def _locate(y_old, F, comp, thr, iters=60):
    """Fraction x in [0, 1] where component ``comp`` of the interpolant hits ``thr``.

    Illinois-modified regula falsi; assumes a sign change over the step.
    """
    y0 = np.ascontiguousarray(y_old[:, comp])
    Fc = np.ascontiguousarray(F[:, :, comp])
    thr = np.broadcast_to(np.asarray(thr, float), y0.shape)
    m = y0.shape[0]
    lo = np.zeros(m)
    hi = np.ones(m)
    glo = y0 - thr
    ghi = _poly1(y0, Fc, hi) - thr
    side = np.zeros(m, np.int8)
    x = hi.copy()
    scale = 4 * np.spacing(np.maximum(np.abs(thr), 1.0))
    for _ in range(iters):
        denom = ghi - glo
        safe = denom != 0
        x = np.where(safe, lo - glo * (hi - lo) / np.where(safe, denom, 1.0), 0.5 * (lo + hi))
        x = np.clip(x, lo, hi)
        g = _poly1(y0, Fc, x) - thr
        left = np.sign(g) == np.sign(glo)
        lo = np.where(left, x, lo)
        hi = np.where(left, hi, x)
        glo_n = np.where(left, g, glo)
        ghi_n = np.where(left, ghi, g)
        glo = np.where(~left & (side == -1), glo_n * 0.5, glo_n)
        ghi = np.where(left & (side == 1), ghi_n * 0.5, ghi_n)
        side = np.where(left, 1, -1).astype(np.int8)
        if np.all((np.abs(g) <= scale) | (hi - lo < 1e-15)):
            break
    return x


def integrate(fun, y0, *, args=None, t_end=np.inf, stops=(), halt=None,
              rtol=1e-10, atol=1e-12, max_steps=100000, record=False,
              h_max=np.inf, raise_on_failure=False) -> BatchSolution:
    """Integrate ``y' = fun(y, args)`` for every row of ``y0`` from ``t = 0``.

    ``args`` is an optional ``(n, k)`` array of per-lane constants. ``t_end``
    is a scalar or per-lane array. ``stops`` is a sequence of
    ``(component, threshold)`` pairs: a lane finishes, located to interpolant
    accuracy, when the component first reaches its (scalar or per-lane)
    threshold from below. ``halt(y, args)`` may return a mask of lanes to
    finish immediately after an accepted step without location.
    """
    y0 = np.array(y0, dtype=float, ndmin=2)
    n, d = y0.shape
    rtol = np.asarray(rtol, float)
    atol = np.asarray(atol, float)
    t_end = np.broadcast_to(np.asarray(t_end, float), (n,)).copy()
    if args is not None:
        args = np.asarray(args, float)
        if args.ndim == 1:
            args = args[:, None]
    stops = [(int(c), np.broadcast_to(np.asarray(v, float), (n,)).copy()) for c, v in stops]

    t = np.zeros(n)
    y = y0.copy()
    status = np.full(n, -9, int)
    which = np.full(n, -1, int)
    nsteps = np.zeros(n, int)
    rec = [] if record else None

    for k, (c, thr) in enumerate(stops):
        hit = (status == -9) & (y[:, c] >= thr)
        status[hit] = 1
        which[hit] = k
    done0 = (status == -9) & (t_end <= 0)
    status[done0] = 0

    active = np.flatnonzero(status == -9)
    if active.size == 0:
        return BatchSolution(t, y, status, which, nsteps, _pack(rec, d) if record else None)

    a_args = args[active] if args is not None else None
    f = np.empty_like(y)
    f[active] = _call(fun, y[active], a_args)
    span = np.minimum(t_end[active], 1e3)
    h = np.full(n, np.nan)
    h[active] = np.minimum(_initial_step(fun, y[active], f[active], a_args, rtol, atol, span), h_max)
    rejected = np.zeros(n, bool)

    K = None
    while active.size:
        ya = y[active]
        ta = t[active]
        fa = f[active]
        aa = args[active] if args is not None else None
        ha = np.minimum(h[active], t_end[active] - ta)
        m = active.size
        tiny = 10 * np.spacing(np.maximum(np.abs(ta), 1.0))
        bad = ~(ha >= tiny)
        if np.any(bad):
            status[active[bad]] = -1
            if raise_on_failure:
                raise IntegrationError("step size underflow")
            keep = ~bad
            active = active[keep]
            continue

        K = np.empty((_co.N_STAGES_EXTENDED, m, d))
        K[0] = fa
        hc = ha[:, None]
        for s in range(1, _NS):
            dy = np.tensordot(_A[s, :s], K[:s], axes=(0, 0)) * hc
            K[s] = _call(fun, ya + dy, aa)
        y_new = ya + hc * np.tensordot(_B, K[:_NS], axes=(0, 0))
        f_new = _call(fun, y_new, aa)
        K[_NS] = f_new

        scale = atol + np.maximum(np.abs(ya), np.abs(y_new)) * rtol
        err5 = np.tensordot(_E5, K[:_NS + 1], axes=(0, 0)) / scale
        err3 = np.tensordot(_E3, K[:_NS + 1], axes=(0, 0)) / scale
        e5 = np.sum(err5 * err5, 1)
        e3 = np.sum(err3 * err3, 1)
        denom = e5 + 0.01 * e3
        with np.errstate(divide="ignore", invalid="ignore"):
            enorm = np.where(denom > 0, ha * e5 / np.sqrt(np.where(denom > 0, denom, 1.0) * d), 0.0)
        finite = np.all(np.isfinite(y_new), 1) & np.all(np.isfinite(f_new), 1)
        enorm = np.where(finite & np.isfinite(enorm), enorm, np.inf)
        acc = enorm < 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(enorm == 0, MAX_FACTOR,
                           SAFETY * np.where(enorm > 0, enorm, 1.0) ** _EXP)
        fac_acc = np.minimum(MAX_FACTOR, fac)
        fac_acc = np.where(rejected[active], np.minimum(1.0, fac_acc), fac_acc)
        fac_rej = np.maximum(MIN_FACTOR, np.where(np.isfinite(fac), fac, MIN_FACTOR))
        h[active] = np.minimum(np.where(acc, ha * fac_acc, ha * fac_rej), h_max)
        rejected[active] = ~acc

        ia = np.flatnonzero(acc)
        if ia.size:
            lanes = active[ia]
            y_old = ya[ia]
            yn = y_new[ia]
            hs = ha[ia]
            Ka = K[:, ia]
            Fd = None
            if record:
                Fd = _dense_coeffs(fun, Ka, y_old, yn, hs, aa[ia] if aa is not None else None)
                rec.append((lanes, ta[ia], hs, y_old, Fd))
            # a step clipped to t_end lands on it exactly
            t[lanes] = np.where(hs >= t_end[lanes] - ta[ia], t_end[lanes], ta[ia] + hs)
            y[lanes] = yn
            f[lanes] = f_new[ia]
            nsteps[lanes] += 1

            # stop conditions: earliest crossing inside this step wins
            best_x = np.full(ia.size, np.inf)
            best_k = np.full(ia.size, -1)
            for k, (c, thr) in enumerate(stops):
                th = thr[lanes]
                cross = np.flatnonzero(yn[:, c] >= th)
                if cross.size == 0:
                    continue
                if Fd is None:
                    Fd = _dense_coeffs(fun, Ka, y_old, yn, hs, aa[ia] if aa is not None else None)
                x = _locate(y_old[cross], Fd[:, cross], c, th[cross])
                better = x < best_x[cross]
                best_x[cross[better]] = x[better]
                best_k[cross[better]] = k
            hit = np.flatnonzero(best_k >= 0)
            if hit.size:
                x = best_x[hit]
                ys = dense_eval(y_old[hit], Fd[:, hit], x)
                ln = lanes[hit]
                y[ln] = ys
                t[ln] = ta[ia[hit]] + x * hs[hit]
                status[ln] = 1
                which[ln] = best_k[hit]
            reached = (status[lanes] == -9) & (t[lanes] >= t_end[lanes])
            status[lanes[reached]] = 0
            if halt is not None:
                live = lanes[status[lanes] == -9]
                if live.size:
                    hm = np.asarray(halt(y[live], args[live] if args is not None else None), bool)
                    status[live[hm]] = 2
            over = (status[lanes] == -9) & (nsteps[lanes] >= max_steps)
            if np.any(over):
                status[lanes[over]] = -1
                if raise_on_failure:
                    raise IntegrationError("maximum number of steps exceeded")
        active = active[status[active] == -9]

    return BatchSolution(t, y, status, which, nsteps, _pack(rec, d) if record else None)


def _pack(rec, d):
    if not rec:
        return Steps(np.zeros(0, int), np.zeros(0), np.zeros(0), np.zeros((0, d)),
                     np.zeros((_POW, 0, d)))
    lane = np.concatenate([r[0] for r in rec])
    t0 = np.concatenate([r[1] for r in rec])
    h = np.concatenate([r[2] for r in rec])
    y0 = np.concatenate([r[3] for r in rec])
    F = np.concatenate([r[4] for r in rec], axis=1)
    order = np.lexsort((t0, lane))
    return Steps(lane[order], t0[order], h[order], y0[order], F[:, order])
