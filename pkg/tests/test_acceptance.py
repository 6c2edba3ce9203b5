"""One test per acceptance criterion; each prints a ``CRITERION n`` line.

Tolerances and runtime budgets are pinned here and must not be loosened.
"""
import math
import time

import numpy as np
import pytest

import oracles
from compgeom.attraction import conjugate_distance_check, sra_geodesic_check, sra_pointwise_check
from compgeom.manifolds import FlatCylinder, builtin_polar, dini_derivatives
from compgeom.model_geometry import (ModelSurface, conjugate_times, cut_locus_tree, d_theta_batch,
                                     r_phi)
from compgeom.profiles import builtin_profile, curvature, perturb_profile
from compgeom.radii import (convexity_bound, convexity_radius_vertex, pinching_classify,
                            pinching_from_models, r_star)
from compgeom.spectral_volume import (lambda1_manifold_mesh, lambda1_model, manifold_ball_area,
                                      model_ball_volume, rayleigh_chain_check,
                                      volume_density_check)
from compgeom.triangles import (angle_compare, base_distances, build_comparison_triangle,
                                build_comparison_triangles, degenerate_compare, make_triangle,
                                random_triangles, two_sided_scan, verify_tct)

PI = math.pi


def model(name, *params):
    return ModelSurface(builtin_profile(name, list(params)))


# --- 1 ------------------------------------------------------------------------------

def test_criterion_01_closed_form_distances(report):
    t0 = time.perf_counter()
    S = model("sphere", 1.0)
    r = PI * (np.arange(32) + 0.5) / 32
    th = np.linspace(0.0, PI, 32)
    R1, R2, T = np.meshgrid(r, r, th, indexing="ij")
    D = np.asarray(d_theta_batch(S, R1, R2, T))
    err_s = float(np.max(np.abs(D - oracles.sphere_distance(R1, R2, T))))

    P = model("plane")
    rp = 3.0 * (np.arange(32) + 0.5) / 32
    Q1, Q2, TP = np.meshgrid(rp, rp, th, indexing="ij")
    Dp = np.asarray(d_theta_batch(P, Q1, Q2, TP))
    exact = oracles.plane_distance(Q1, Q2, TP)
    err_p = float(np.max(np.abs(Dp - exact) / np.maximum(exact, 1e-300)))
    dt = time.perf_counter() - t0
    ok = err_s <= 1e-8 and err_p <= 4 * np.finfo(float).eps and dt < 10
    report(1, ok, f"sphere max err {err_s:.2e} (<=1e-8), plane max rel err {err_p:.2e} "
                  f"(machine precision), {dt:.1f}s (<10s)")
    assert ok


# --- 2 ------------------------------------------------------------------------------

def _klingenberg_bound(m):
    """pi / sqrt(K_max): a lower bound for the injectivity radius of a convex closed surface."""
    rr = np.linspace(0.0, m.ell, 4003)[1:-1]
    return PI / math.sqrt(float(np.max(curvature(m.profile, rr))))


def test_criterion_02_monotonicity(report):
    t0 = time.perf_counter()
    fams = [("sphere", (0.25,)), ("sphere", (1.0,)), ("sphere", (4.0,)), ("plane", ()),
            ("hyperbolic", (0.5,)), ("hyperbolic", (1.0,)), ("prolate", (1.0, 2.0)),
            ("oblate", (2.0, 1.0))]
    rng = np.random.default_rng(20260)
    pick = rng.integers(0, len(fams), 200)
    th = np.linspace(0.0, PI, 33)
    ph = np.linspace(0.0, PI, 33)
    worst_d, worst_r = math.inf, -math.inf
    for j, (name, par) in enumerate(fams):
        n = int(np.sum(pick == j))
        if n == 0:
            continue
        m = model(name, *par)
        L = m.ell if math.isfinite(m.ell) else 3.0
        r1 = rng.uniform(0.02, 0.98, n) * L
        r2 = rng.uniform(0.02, 0.98, n) * L
        D = np.asarray(d_theta_batch(m, r1[:, None], r2[:, None], th[None, :]))
        worst_d = min(worst_d, float(np.min(np.diff(D, axis=1))))
        if name == "sphere":
            inj = PI / math.sqrt(par[0])
        elif name in ("plane", "hyperbolic"):
            inj = math.inf
        else:
            inj = _klingenberg_bound(m)
        t = rng.uniform(0.02, 0.98, (n, 3)) * min(inj, 3.0)
        R = np.asarray(r_phi(m, r1[:, None, None], ph[None, None, :], t[:, :, None]))
        worst_r = max(worst_r, float(np.max(np.diff(R, axis=2))))
    dt = time.perf_counter() - t0
    ok = worst_d >= -1e-9 and worst_r < 0 and dt < 60
    report(2, ok, f"200 draws: min D_theta step {worst_d:.2e} (>=-1e-9), "
                  f"max R_phi step {worst_r:.2e} (<0), {dt:.1f}s (<60s)")
    assert ok


# --- 3 ------------------------------------------------------------------------------

def test_criterion_03_cylinder_counterexample(report):
    cyl = FlatCylinder()
    P = model("plane")
    tri = make_triangle(cyl, oracles.CYL_P, oracles.CYL_Q)
    c = tri.lengths[2]
    ts = np.linspace(0.0, c, 1001)
    L_o = base_distances(cyl, tri.side_pq, ts)
    err_o = float(np.max(np.abs(L_o - oracles.cylinder_L_o(ts))))
    comp = build_comparison_triangle(P, tri)
    L_m = np.asarray(comp.side.at(ts)[0], float)
    err_m = float(np.max(np.abs(L_m - oracles.cylinder_L_model(ts))))
    inner = c * (np.arange(1, 101) / 101)
    gap = np.asarray(comp.side.at(inner)[0]) - base_distances(cyl, tri.side_pq, inner)
    strict = bool(np.all(gap < 0))
    kink = oracles.CYL_KINK
    d = dini_derivatives(cyl, tri.side_pq, kink)
    near = [dini_derivatives(cyl, tri.side_pq, kink + s * 1e-6) for s in (-1, 1)]
    ok_scan, kinks = two_sided_scan(cyl, tri.side_pq)
    found = (not ok_scan and any(abs(t - kink) <= 1e-6 for t, _ in kinks)
             and abs(d.left - 1) < 1e-9 and abs(d.right + 1) < 1e-9
             and all(x.two_sided for x in near)
             and abs(near[0].left - 1) < 1e-9 and abs(near[1].right + 1) < 1e-9)
    ok = err_o <= 1e-12 and err_m <= 1e-12 and strict and found
    report(3, ok, f"L_o err {err_o:.1e}, L_model err {err_m:.1e} (<=1e-12), "
                  f"L_model < L_o at 100 samples: {strict}, kink at pi/4: {found} "
                  f"(left {d.left:+.6f}, right {d.right:+.6f})")
    assert ok


# --- 4 ------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_04_triangle_comparison_suite(report):
    t0 = time.perf_counter()
    S = model("sphere", 1.0)
    plane = builtin_polar("plane")
    tris = random_triangles(plane, S, 500, seed=4)
    comps = build_comparison_triangles(S, tris)
    viol, endpoint, angles_ok, asserted = -math.inf, 0.0, True, 0
    for tri, comp in zip(tris, comps):
        rep = verify_tct(plane, S, tri, comparison=comp)
        viol = max(viol, rep.max_violation)
        endpoint = max(endpoint, rep.endpoint_error)
        angles_ok &= all(angle_compare(rep))
        asserted += rep.asserted
    dt = time.perf_counter() - t0
    ok = viol <= 1e-6 and endpoint <= 1e-8 and angles_ok and asserted == 500 and dt < 300
    report(4, ok, f"500 triangles: max(L_o - L_model) {viol:.2e} (<=1e-6), endpoint "
                  f"{endpoint:.1e} (<=1e-8), angles ok {angles_ok}, {dt:.0f}s (<300s)")
    assert ok


# --- 5 ------------------------------------------------------------------------------

def test_criterion_05_degenerate_cases(report):
    S = model("sphere", 1.0)
    plane = builtin_polar("plane")
    sphere = builtin_polar("sphere", [1.0])
    cases = {"i": (plane, (1.0, 0.0), (0.4, 0.0)),
             "ii": (plane, (1.0, 0.0), (2.0, 0.0)),
             "iii": (plane, (1.0, 0.0), (0.5, PI)),
             "iv": (sphere, (1.0, 0.0), (PI - 0.5, PI))}
    worst, details, ok = -math.inf, [], True
    for name, (man, p, q) in cases.items():
        rep = degenerate_compare(S, make_triangle(man, p, q))
        good = rep.case == name and rep.max_violation <= 1e-9 and rep.endpoint_error <= 1e-9
        ok &= good
        worst = max(worst, rep.max_violation)
        details.append(f"{name}:{rep.max_violation:.1e}")
    report(5, ok, f"boundary cases {' '.join(details)} (<=1e-9)")
    assert ok


# --- 6 ------------------------------------------------------------------------------

def test_criterion_06_sra_checks(report):
    S = model("sphere", 1.0)
    P = model("plane")
    plane, sphere = builtin_polar("plane"), builtin_polar("sphere", [1.0])
    fwd = (sra_pointwise_check(plane, S), sra_geodesic_check(plane, S))
    rev = (sra_pointwise_check(sphere, P), sra_geodesic_check(sphere, P))
    eq = sra_pointwise_check(sphere, S)
    witnesses = all(len(r.witness) == 2 and all(math.isfinite(w) for w in r.witness) for r in rev)
    ok = (all(r.holds for r in fwd) and not any(r.holds for r in rev) and witnesses
          and abs(eq.margin_min) <= 1e-12)
    report(6, ok, f"plane/sphere margins {fwd[0].margin_min:.2e}, {fwd[1].margin_min:.2e}; "
                  f"reversed {rev[0].margin_min:.2e} at {tuple(round(w, 3) for w in rev[0].witness)}, "
                  f"{rev[1].margin_min:.2e}; equal pair |margin| {abs(eq.margin_min):.1e} (<=1e-12)")
    assert ok


# --- 7 ------------------------------------------------------------------------------

def test_criterion_07_conjugate_points(report):
    errs = []
    for k in (0.25, 1.0, 4.0):
        m = model("sphere", k)
        r1 = np.array([0.2, 0.5, 0.8]) * m.ell
        phi = np.array([0.3, 1.5, 2.9])
        R1, PH = np.meshgrid(r1, phi, indexing="ij")
        t = np.asarray(conjugate_times(m, R1.ravel(), PH.ravel()))
        errs.append(float(np.max(np.abs(t - PI / math.sqrt(k)))))
    plane, warped = builtin_polar("plane"), builtin_polar("warped", [0.01])
    S = model("sphere", 1.0)
    reps = [conjugate_distance_check(m, S, n_samples=256) for m in (plane, warped)]
    ok = max(errs) <= 1e-6 and all(r.passed and r.jacobi_dominates for r in reps)
    report(7, ok, f"conjugate time errors {', '.join(f'{e:.1e}' for e in errs)} (<=1e-6); "
                  f"SRA fixtures: first conjugate "
                  f"{', '.join(str(r.first_conjugate) for r in reps)}, min |J|-y "
                  f"{', '.join(f'{r.worst_gap:.2e}' for r in reps)}")
    assert ok


# --- 8 ------------------------------------------------------------------------------

def test_criterion_08_volume(report):
    S = model("sphere", 1.0)
    plane = builtin_polar("plane")
    rhos = np.linspace(0.1, 3.0, 30)
    rel_p = max(abs(manifold_ball_area(plane, r) / oracles.disc_area(r) - 1) for r in rhos)
    vol_s = np.array([model_ball_volume(S.profile, 2, r) for r in rhos])
    rel_s = float(np.max(np.abs(vol_s / [oracles.sphere_ball_area(r) for r in rhos] - 1)))
    vol_p = np.array([manifold_ball_area(plane, r) for r in rhos])
    dens = volume_density_check(plane, S, grid=(128, 128))
    ok = rel_p <= 1e-8 and rel_s <= 1e-8 and bool(np.all(vol_p >= vol_s)) and dens.holds
    report(8, ok, f"rel err disc {rel_p:.1e}, cap {rel_s:.1e} (<=1e-8); Vol plane >= Vol sphere "
                  f"on 30 radii: {bool(np.all(vol_p >= vol_s))}; min(alpha - y) "
                  f"{dens.density_margin:.2e}")
    assert ok


# --- 9 ------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_09_eigenvalues(report):
    t0 = time.perf_counter()
    S, P = model("sphere", 1.0), model("plane")
    hemi = lambda1_model(S.profile, 2, PI / 2).lambda1
    root = oracles.j0_first_root()
    disk = lambda1_model(P.profile, 2, 1.0).lambda1
    order = []
    for rho in (0.5, 1.0, 1.4):
        order.append(lambda1_model(P.profile, 2, rho).lambda1
                     >= lambda1_model(S.profile, 2, rho).lambda1)
    mesh = []
    for man, prof in ((builtin_polar("plane"), P.profile),
                      (builtin_polar("sphere", [1.0]), S.profile)):
        res = lambda1_manifold_mesh(man, 1.0, resolution=256)
        ode = lambda1_model(prof, 2, 1.0).lambda1
        mesh.append(res.bracket[0] <= ode <= res.bracket[1])
    dt = time.perf_counter() - t0
    ok = (abs(hemi - 2) <= 1e-6 and abs(disk - root ** 2) <= 1e-6
          and abs(root - oracles.J01) <= 1e-12 and all(order) and all(mesh) and dt < 120)
    report(9, ok, f"hemisphere {hemi:.10f}, disk {disk:.10f} vs j01^2 {root ** 2:.10f}; "
                  f"plane >= cap at 0.5,1,1.4: {all(order)}; mesh brackets ODE: {all(mesh)}; "
                  f"{dt:.0f}s (<120s)")
    assert ok


# --- 10 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_rayleigh_chain(report):
    S = model("sphere", 1.0)
    same = rayleigh_chain_check(builtin_polar("sphere", [1.0]), S, PI / 2, with_mesh=False)
    dev = max(abs(same.sup_ratio + 2), abs(same.inf_ratio + 2))
    pair = rayleigh_chain_check(builtin_polar("plane"), S, 1.0, with_mesh=False)
    ok = dev <= 1e-6 and pair.sup_ratio <= -pair.lambda_model + 1e-6
    report(10, ok, f"sphere/sphere |Delta F/F + 2| <= {dev:.1e} (<=1e-6); plane/sphere sup "
                   f"{pair.sup_ratio:.6f} <= -lambda1 {-pair.lambda_model:.6f} + 1e-6")
    assert ok


# --- 11 -----------------------------------------------------------------------------

def _perturb_stats(p, r1, r2, deltas, r_hi):
    ident, sup = 0.0, []
    r_in = np.linspace(r1, r2, 2001)[1:-1]
    for d in deltas:
        q = perturb_profile(p, d, r1, r2)
        lhs = q.y1(r_in) / q.y(r_in) + d
        ident = max(ident, float(np.max(np.abs(lhs - p.y1(r_in) / p.y(r_in)))))
        rr = np.linspace(0.0, r_hi, 4001)
        sup.append(float(np.max(np.abs(q.y(rr) - p.y(rr)))))
    return ident, sup


def test_criterion_11_perturbation(report):
    deltas = (1e-2, 1e-4, 1e-6)
    id_o, sup_o = _perturb_stats(builtin_profile("hyperbolic", [1.0]), 0.5, 1.5, deltas, 3.0)
    sph = builtin_profile("sphere", [1.0])
    id_c, sup_c = _perturb_stats(sph, 0.5, 1.5, deltas, sph.ell - max(deltas))
    # uniform convergence at rate O(delta): sup / delta stays bounded as delta -> 0
    conv = all(s[0] > s[1] > s[2] and max(v / d for v, d in zip(s, deltas)) <= 2 * s[0] / deltas[0]
               for s in (sup_o, sup_c))
    ok = id_o <= 1e-9 and id_c <= 1e-9 and conv
    report(11, ok, f"identity err open {id_o:.1e}, closed {id_c:.1e} (<=1e-9); sup|y_d - y| "
                   f"open {', '.join(f'{s:.1e}' for s in sup_o)}, closed "
                   f"{', '.join(f'{s:.1e}' for s in sup_c)}")
    assert ok


# --- 12 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_12_radii(report):
    S = model("sphere", 1.0)
    rs, _ = r_star(builtin_polar("sphere", [1.0]))
    cv, _ = convexity_radius_vertex(S)
    rep = convexity_bound(builtin_polar("plane"), S, n_pairs=100, seed=12)
    spot = rep.spot_check
    ok = (abs(rs - PI / 2) <= 1e-3 and abs(cv - PI / 2) <= 1e-3 and spot["passed"]
          and abs(spot["radius"] - 0.9 * rep.conv_bound) <= 1e-12)
    report(12, ok, f"r*(sphere) {rs:.6f}, conv(vertex) {cv:.6f} (pi/2 +- 1e-3); spot check at "
                   f"0.9 x {rep.conv_bound:.4f}: {spot['passed']} "
                   f"(excess {spot['worst_excess']:.1e})")
    assert ok


# --- 13 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_13_cut_loci(report):
    pro = model("prolate", 1.0, 2.0)
    tp = cut_locus_tree(pro, pro.ell / 2, n_angles=64)
    cp = tp.cut_points[~tp.unbounded & ~tp.failed]
    dev_p = float(np.max(np.abs(cp[:, 1] - PI)))
    obl = model("oblate", 2.0, 1.0)
    to = cut_locus_tree(obl, obl.ell / 2, n_angles=64)
    co = to.cut_points[~to.unbounded & ~to.failed]
    spread = float(np.ptp(co[:, 0]))
    ok = len(cp) == 64 and len(co) == 64 and dev_p <= 1e-3 and spread <= 2e-3
    report(13, ok, f"prolate max |theta - pi| {dev_p:.1e} (<=1e-3); oblate r spread "
                   f"{spread:.1e} (<=2e-3) at r = {float(np.mean(co[:, 0])):.5f}")
    assert ok


# --- 14 -----------------------------------------------------------------------------

def test_criterion_14_pinching(report):
    lt = PI / math.sqrt(0.3)
    direct = pinching_classify(lt, PI, PI / 2, PI)
    computed = pinching_from_models(model("sphere", 0.3), model("sphere", 1.0), PI)
    eq = pinching_classify(PI / 2, PI, PI / 2, PI / 2)
    ok = (direct.verdict == "Sphere" and computed.verdict == "Sphere"
          and eq.verdict == "AllamigeonWarner")
    report(14, ok, f"pinching example (curvature 0.3 model) -> {direct.verdict} (computed conv: "
                   f"{computed.verdict}); equality R = ell_tilde -> {eq.verdict}")
    assert ok
