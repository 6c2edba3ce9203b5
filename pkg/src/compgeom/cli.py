"""Command line driver: ``compgeom COMMAND [--config PATH] [options]``.

Exit status: 0 success, 1 an asserted inequality is violated (or an expected
counterexample is missing), 2 bad configuration or inputs, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import (CompGeomError, ConfigError, DomainError, NoCorrespondingTriangle,
                     PreconditionError)
from .io import (RunConfig, load_config, manifold_from_section, parse_floats, parse_grid,
                 profile_from_section, write_csv, write_json)

__all__ = ["main", "run", "COMMANDS", "EXIT_OK", "EXIT_VIOLATION", "EXIT_CONFIG", "EXIT_NUMERIC"]

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _model(cfg: RunConfig, name="model"):
    from .model_geometry import ModelSurface
    return ModelSurface(cfg.profile(name))


def _floats(sec, key, default=None, n=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    v = parse_floats(sec[key], key)
    if n is not None and len(v) != n:
        raise ConfigError(f"{key} needs {n} number(s)")
    return v


def _one(sec, key, default=None):
    return _floats(sec, key, None if default is None else [default], 1)[0]


def _path(cfg, stem, fmt=None):
    return os.path.join(cfg.out, f"{stem}.{fmt or cfg.fmt}")


def _emit(cfg, stem, header, rows, extra=None):
    meta = {**cfg.meta(), **(extra or {})}
    if cfg.fmt == "csv":
        return write_csv(_path(cfg, stem), header, rows, meta)
    data = [dict(zip(header, row)) for row in rows]
    return write_json(_path(cfg, stem), data, meta)


def _table(rows, header) -> str:
    cells = [[str(h) for h in header]] + [[_fmt(v) for v in r] for r in rows]
    w = [max(len(c[i]) for c in cells) for i in range(len(header))]
    return "\n".join("  ".join(c[i].rjust(w[i]) for i in range(len(header))) for c in cells)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


# --- commands --------------------------------------------------------------------

def cmd_model_info(cfg: RunConfig):
    from .profiles import curvature, validate_profile
    p = cfg.profile()
    sec = cfg.section("model-info")
    rep = validate_profile(p, int(_one(sec, "grid_size", 1024)), _one(sec, "tol", 1e-8))
    R = p.working_radius
    r = R * np.arange(1, 33) / 33
    y, y1, y2 = p.eval(r)
    rows = np.column_stack([r, y, y1, y2, curvature(p, r)])
    _emit(cfg, "model_info", ("r", "y", "y1", "y2", "curvature"), rows)
    params = ", ".join(f"{float(v):g}" for v in p.params)
    lines = [f"profile {p.name}({params}) kind={p.kind} ell={p.ell:g}", rep.summary()]
    for v in rep.violations[:20]:
        lines.append(f"  violation: {v.condition} at r={v.r:.6g} (value {v.value:.6g})")
    lines.append(_table(rows[::4], ("r", "y", "y'", "y''", "K")))
    return (EXIT_OK if rep.passed else EXIT_CONFIG), "\n".join(lines)


def cmd_dtable(cfg: RunConfig):
    from .model_geometry import d_theta_batch
    m = _model(cfg)
    sec = cfg.section("dtable")
    R = min(m.ell, m.horizon)
    r1s = _floats(sec, "r1", list(R * np.arange(1, 5) / 5))
    r2s = _floats(sec, "r2", r1s)
    ths = _floats(sec, "theta", list(np.linspace(0.0, math.pi, 9)))
    rows = []
    for r1 in r1s:
        A, T = np.meshgrid(r2s, ths, indexing="ij")
        D = d_theta_batch(m, np.full(A.size, r1), A.ravel(), T.ravel())
        rows += [(r1, a, t, d) for a, t, d in zip(A.ravel(), T.ravel(), np.asarray(D).ravel())]
    _emit(cfg, "dtable", ("r1", "r2", "theta", "D"), rows)
    return EXIT_OK, f"{len(rows)} distances written"


def cmd_geodesic(cfg: RunConfig):
    from .model_geometry import geodesic_trace
    m = _model(cfg)
    sec = cfg.section("geodesic")
    path = geodesic_trace(m, _one(sec, "r1"), _one(sec, "phi"), _one(sec, "t_max"),
                          int(_one(sec, "n_samples", 257)))
    names, cols = path.columns()
    _emit(cfg, "geodesic", names, cols, {"clairaut": path.clairaut})
    tags = ", ".join(f"{k}@{t:.6g}" for t, k in path.tags) or "none"
    return EXIT_OK, f"geodesic of length {path.length:.6g}; events: {tags}"


def cmd_cutlocus(cfg: RunConfig):
    from .model_geometry import cut_locus_tree
    m = _model(cfg)
    sec = cfg.section("cutlocus")
    tree = cut_locus_tree(m, _one(sec, "r1"), int(_one(sec, "n_angles", 256)))
    names, cols = tree.columns()
    _emit(cfg, "cutlocus", names, cols, {"branches": len(tree.branch_arcs)})
    return (EXIT_NUMERIC if tree.partial else EXIT_OK), (
        f"{int(np.sum(~tree.unbounded))} cut points, {int(np.sum(tree.trunk_mask))} on the trunk, "
        f"{len(tree.branch_arcs)} branch arcs" + (" (partial)" if tree.partial else ""))


def _expect(cfg, violated: bool, what: str):
    if cfg.expected_counterexample:
        if violated:
            return EXIT_OK, f"expected counterexample present: {what}"
        return EXIT_VIOLATION, f"expected counterexample absent: {what}"
    return (EXIT_VIOLATION if violated else EXIT_OK), what


def cmd_sra(cfg: RunConfig):
    from .attraction import radial_curvature_bound_check, sra_geodesic_check, sra_pointwise_check
    man, m = cfg.manifold_obj(), _model(cfg)
    sec = cfg.section("sra")
    pw = sra_pointwise_check(man, m, cfg.grid)
    geo = sra_geodesic_check(man, m, int(_one(sec, "n_samples", 100)), seed=cfg.seed,
                             tol=_one(sec, "geodesic_tol", 1e-6))
    reps = [pw, geo]
    try:
        reps.append(radial_curvature_bound_check(man, m, cfg.grid))
    except CompGeomError as exc:
        return EXIT_NUMERIC, str(exc)
    header = ("check", "holds", "margin_min", "witness_r", "witness_theta", "n_checked")
    rows = [(r.method, r.holds, r.margin_min, r.witness[0], r.witness[1], r.n_checked) for r in reps]
    _emit(cfg, "sra", header, rows)
    failed = not (pw.holds and geo.holds)
    note = "\n".join(r.note for r in reps if r.note)
    code, msg = _expect(cfg, failed, "model attracts more strongly: " + ("no" if failed else "yes"))
    return code, "\n".join(filter(None, [_table(rows, header), note, msg]))


def _triangle_row(idx, man, m, tri, tol):
    from .triangles import angle_compare, verify_tct
    rep = verify_tct(man, m, tri, tol=tol)
    a1, a2 = angle_compare(rep)
    a, b, c = tri.lengths
    return (idx, a, b, c, rep.max_violation, rep.endpoint_error, bool(a1 and a2),
            rep.two_sided_ok, rep.bad_encounter, rep.asserted, rep.ac_holds), rep


_WORKER = {}


def _sweep_worker(args):
    sections, idx, p, q, tol = args
    from .model_geometry import ModelSurface
    from .triangles import make_triangle
    key = repr(sorted((k, sorted(v.items())) for k, v in sections.items()))
    if _WORKER.get("key") != key:
        _WORKER.update(key=key, man=manifold_from_section(sections["manifold"]),
                       model=ModelSurface(profile_from_section(sections["model"])))
    man, m = _WORKER["man"], _WORKER["model"]
    return _triangle_row(idx, man, m, make_triangle(man, p, q), tol)[0]


_SWEEP_HEADER = ("index", "a", "b", "c", "max_violation", "endpoint_error", "angles_ok",
                 "two_sided_ok", "bad_encounter", "asserted", "ac_holds")


def cmd_triangle(cfg: RunConfig):
    from .triangles import make_triangle
    man, m = cfg.manifold_obj(), _model(cfg)
    sec = cfg.section("triangle")
    p, q = tuple(_floats(sec, "p", n=2)), tuple(_floats(sec, "q", n=2))
    row, rep = _triangle_row(0, man, m, make_triangle(man, p, q), cfg.tol)
    names, cols = rep.columns()
    _emit(cfg, "triangle", names, cols, {"two_sided_ok": rep.two_sided_ok,
                                         "asserted": rep.asserted, "case": rep.case})
    kinks = ", ".join(f"{k[0]:.6g}" for k in rep.kinks) or "none"
    info = (f"max L_man - L_model = {rep.max_violation:.6g}; two_sided_ok = {rep.two_sided_ok}; "
            f"kinks at t = {kinks}; asserted = {rep.asserted}")
    violated = not rep.ac_holds or (rep.asserted and not row[6])
    if cfg.expected_counterexample:
        # the fixture must break the inequality and one of its hypotheses
        return _expect(cfg, violated and not rep.asserted, info)
    return (EXIT_VIOLATION if violated else EXIT_OK), info


def cmd_triangle_sweep(cfg: RunConfig):
    from .triangles import random_triangles
    man, m = cfg.manifold_obj(), _model(cfg)
    sec = cfg.section("sweep")
    n = int(_one(sec, "n", 20))
    r_max = _one(sec, "r_max") if "r_max" in sec else None
    tris = random_triangles(man, m, n, seed=cfg.seed, r_max=r_max)
    if cfg.jobs > 1:
        sections = {"manifold": dict(cfg.manifold), "model": dict(cfg.model)}
        args = [(sections, i, t.p, t.q, cfg.tol) for i, t in enumerate(tris)]
        with ProcessPoolExecutor(cfg.jobs) as ex:
            rows = list(ex.map(_sweep_worker, args))
    else:
        rows = [_triangle_row(i, man, m, t, cfg.tol)[0] for i, t in enumerate(tris)]
    _emit(cfg, "triangle_sweep", _SWEEP_HEADER, rows)
    bad = [r for r in rows if r[9] and (not r[10] or not r[6])]
    worst = max(r[4] for r in rows)
    msg = (f"{len(rows)} triangles; asserted {sum(r[9] for r in rows)}; "
           f"max violation {worst:.3e}; failures {len(bad)}")
    return _expect(cfg, bool(bad), msg)


def _rhos(cfg, name):
    return _floats(cfg.section(name), "rho", [0.5, 1.0, 1.4])


def cmd_volume(cfg: RunConfig):
    from .attraction import sra_pointwise_check
    from .spectral_volume import spectral_sweep
    man, m = cfg.manifold_obj(), _model(cfg)
    rows = spectral_sweep(man, m, _rhos(cfg, "volume"), eigen=False)
    header = ("rho", "vol_man", "vol_model", "lambda_man", "lambda_model", "margin")
    _emit(cfg, "volume", header, rows, {"margin": "vol_man-vol_model"})
    claimed = sra_pointwise_check(man, m, cfg.grid).holds
    violated = claimed and bool(np.any(rows[:, 1] < rows[:, 2] * (1 - 1e-8)))
    note = "" if claimed else "no claim: the model does not attract more strongly"
    code, msg = _expect(cfg, violated, "volume comparison " + ("fails" if violated else "ok"))
    return code, "\n".join(filter(None, [_table(rows[:, [0, 1, 2, 5]], header[:3] + header[5:]),
                                         note, msg]))


def cmd_eigen(cfg: RunConfig):
    from .attraction import sra_pointwise_check
    from .spectral_volume import spectral_sweep
    man, m = cfg.manifold_obj(), _model(cfg)
    res = int(_one(cfg.section("eigen"), "resolution", 128))
    rows = spectral_sweep(man, m, _rhos(cfg, "eigen"), resolution=res)
    header = ("rho", "vol_man", "vol_model", "lambda_man", "lambda_model", "margin")
    _emit(cfg, "eigen", header, rows, {"margin": "lambda_man-lambda_model", "resolution": res})
    claimed = sra_pointwise_check(man, m, cfg.grid).holds
    violated = claimed and bool(np.any(rows[:, 5] < -max(cfg.tol, 1e-3)))
    code, msg = _expect(cfg, violated, "eigenvalue comparison " + ("fails" if violated else "ok"))
    return code, _table(rows, header) + "\n" + msg


def cmd_radii(cfg: RunConfig):
    from .radii import convexity_bound
    man, m = cfg.manifold_obj(), _model(cfg)
    sec = cfg.section("radii")
    rep = convexity_bound(man, m, int(_one(sec, "n_pairs", 100)), cfg.seed)
    write_json(_path(cfg, "radii", "json"), rep, cfg.meta())
    rows = [("r_star", rep.r_star), ("conv_model_vertex", rep.conv_model_vertex),
            ("conv_bound", rep.conv_bound), ("inj_o", rep.inj_o),
            ("spot_check", rep.spot_check.get("passed"))]
    code = EXIT_OK if rep.spot_check.get("passed") else EXIT_VIOLATION
    return code, _table(rows, ("quantity", "value")) + "\n" + rep.note


def cmd_pinch(cfg: RunConfig):
    from .radii import convexity_radius_opposite, pinching_classify
    sec = cfg.section("pinch")
    if "ell_tilde" in sec:
        lt = _one(sec, "ell_tilde")
    else:
        lt = cfg.profile().ell
    if "ell_hat" in sec:
        lh = _one(sec, "ell_hat")
    else:
        lh = cfg.profile("model_hat").ell
    if "conv_hat_opposite" in sec:
        cv = _one(sec, "conv_hat_opposite")
    else:
        cv = convexity_radius_opposite(_model(cfg, "model_hat"))[0]
    v = pinching_classify(lt, lh, cv, _one(sec, "R"), _one(sec, "tol", 1e-9))
    write_json(_path(cfg, "pinch", "json"), v, cfg.meta())
    rows = list(zip(("ell_tilde", "ell_hat", "conv_hat_opposite", "R"), v.inputs))
    return EXIT_OK, _table(rows + [("verdict", v.verdict)], ("input", "value")) + "\n" + v.reason


COMMANDS = {
    "model-info": cmd_model_info,
    "dtable": cmd_dtable,
    "geodesic": cmd_geodesic,
    "cutlocus": cmd_cutlocus,
    "sra": cmd_sra,
    "triangle": cmd_triangle,
    "triangle-sweep": cmd_triangle_sweep,
    "volume": cmd_volume,
    "eigen": cmd_eigen,
    "radii": cmd_radii,
    "pinch": cmd_pinch,
}


def run(command: str, cfg: RunConfig, stream=None) -> int:
    """Run one command; returns the exit status and prints a summary to ``stream``."""
    stream = stream or sys.stdout
    if command not in COMMANDS:
        print(f"unknown command {command!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, text = COMMANDS[command](cfg)
    except (ConfigError, PreconditionError, DomainError, NoCorrespondingTriangle) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CompGeomError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(text, file=stream)
    return code


def _parser():
    ap = argparse.ArgumentParser(prog="compgeom", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI run configuration")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--tol", type=float)
    ap.add_argument("--grid", help="NxM")
    ap.add_argument("--jobs", type=int)
    ap.add_argument("--expected-counterexample", action="store_true",
                    help="succeed only if the configured fixture violates the comparison")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        for key, attr in (("seed", "seed"), ("out", "out"), ("format", "fmt"), ("tol", "tol"),
                          ("jobs", "jobs")):
            if getattr(args, key) is not None:
                setattr(cfg, attr, getattr(args, key))
        if args.grid:
            cfg.grid = parse_grid(args.grid)
        if args.expected_counterexample:
            cfg.expected_counterexample = True
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    command = args.command or cfg.command
    if not command:
        print("error: no command given", file=sys.stderr)
        return EXIT_CONFIG
    return run(command, cfg)


if __name__ == "__main__":
    sys.exit(main())
