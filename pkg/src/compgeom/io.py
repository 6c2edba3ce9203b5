"""Run configuration (INI text) and deterministic CSV/JSON writers.

A config names a model profile, a test manifold, run settings and one
section per command::

    [model]
    family = sphere
    params = 1.0

    [manifold]
    kind = polar          ; or cylinder
    family = plane

    [run]
    seed = 0
    tol = 1e-6
    grid = 128x128
    format = csv

Tabulated profiles give ``samples = r0 y0; r1 y1; ...`` instead of a family.
"""
from __future__ import annotations

import configparser
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, PreconditionError
from .manifolds import FlatCylinder, builtin_polar
from .profiles import builtin_profile, tabulated_profile

__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "parse_grid",
    "parse_floats",
    "profile_from_section",
    "manifold_from_section",
    "format_number",
    "write_csv",
    "write_json",
    "to_jsonable",
]

FORMATS = ("csv", "json")


@dataclass
class RunConfig:
    model: dict = field(default_factory=lambda: {"family": "sphere", "params": "1.0"})
    manifold: dict = field(default_factory=lambda: {"kind": "polar", "family": "plane"})
    command: Optional[str] = None
    tol: float = 1e-6
    grid: tuple = (128, 128)
    seed: int = 0
    out: str = "out"
    fmt: str = "csv"
    jobs: int = 1
    expected_counterexample: bool = False
    sections: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def profile(self, name: str = "model"):
        sec = self.model if name == "model" else self.section(name)
        if not sec:
            raise ConfigError(f"missing [{name}] section")
        return profile_from_section(sec, name)

    def manifold_obj(self):
        return manifold_from_section(self.manifold)

    def meta(self) -> dict:
        return {"seed": self.seed, "tol": self.tol, "grid": f"{self.grid[0]}x{self.grid[1]}"}


def parse_floats(text: str, what: str = "value") -> list:
    text = (text or "").strip()
    if not text:
        return []
    try:
        return [float(v) for v in text.replace(";", ",").replace(" ", ",").split(",") if v]
    except ValueError:
        raise ConfigError(f"could not parse {what}: {text!r}") from None


def parse_grid(text: str) -> tuple:
    try:
        a, b = str(text).lower().split("x")
        g = (int(a), int(b))
    except ValueError:
        raise ConfigError(f"grid must look like NxM, got {text!r}") from None
    if min(g) < 1:
        raise ConfigError("grid sizes must be positive")
    return g


def _bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def profile_from_section(sec: dict, name: str = "model"):
    if "samples" in sec:
        pairs = [p for p in sec["samples"].split(";") if p.strip()]
        try:
            rows = np.array([parse_floats(p, "samples") for p in pairs], float)
        except ValueError:
            raise ConfigError(f"[{name}] samples must be 'r y' pairs") from None
        if rows.ndim != 2 or rows.shape[1] != 2:
            raise ConfigError(f"[{name}] samples must be 'r y' pairs")
        try:
            return tabulated_profile(rows[:, 0], rows[:, 1])
        except (PreconditionError, ValueError) as exc:
            raise ConfigError(f"[{name}] {exc}") from exc
    fam = sec.get("family")
    if not fam:
        raise ConfigError(f"[{name}] needs family or samples")
    try:
        return builtin_profile(fam, parse_floats(sec.get("params", ""), "params"))
    except PreconditionError as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def manifold_from_section(sec: dict):
    kind = sec.get("kind", "polar").strip().lower()
    if kind == "cylinder":
        return FlatCylinder()
    if kind != "polar":
        raise ConfigError(f"[manifold] kind must be polar or cylinder, got {kind!r}")
    fam = sec.get("family")
    if not fam:
        raise ConfigError("[manifold] needs a family")
    try:
        return builtin_polar(fam, parse_floats(sec.get("params", ""), "params"))
    except PreconditionError as exc:
        raise ConfigError(f"[manifold] {exc}") from exc


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    secs = {s: dict(cp[s]) for s in cp.sections()}
    cfg = RunConfig(sections=secs)
    if "model" in secs:
        cfg.model = secs["model"]
    if "manifold" in secs:
        cfg.manifold = secs["manifold"]
    run = secs.get("run", {})
    try:
        cfg.command = run.get("command") or None
        cfg.tol = float(run.get("tol", cfg.tol))
        cfg.seed = int(run.get("seed", cfg.seed))
        cfg.jobs = int(run.get("jobs", cfg.jobs))
    except ValueError as exc:
        raise ConfigError(f"[run] {exc}") from exc
    if "grid" in run:
        cfg.grid = parse_grid(run["grid"])
    cfg.out = run.get("out", cfg.out)
    cfg.fmt = run.get("format", cfg.fmt)
    if cfg.fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    cfg.expected_counterexample = _bool(run.get("expected_counterexample", "false"))
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


# --- writers ---------------------------------------------------------------------

def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path, header, rows, meta: Optional[dict] = None) -> str:
    """Header row, rows at 17 significant digits, then a ``# key=value`` metadata line."""
    from . import __version__
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else format_number(v) for v in row))
    m = {"tool": f"compgeom-{__version__}"}
    m.update(meta or {})
    lines.append("# " + " ".join(f"{k}={v}" for k, v in m.items()))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def to_jsonable(obj):
    """Nested data with every float turned into a 17-digit decimal string."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else dataclasses.asdict(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return format_number(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def write_json(path, data, meta: Optional[dict] = None) -> str:
    from . import __version__
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    doc = {"meta": to_jsonable({"tool": f"compgeom-{__version__}", **(meta or {})}),
           "data": to_jsonable(data)}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path
