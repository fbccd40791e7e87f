"""Command-line driver: configuration, experiment runners and CSV output.

Subcommands: ``solve``, ``converge``, ``sweep-k``, ``eigs``, ``exponent`` and
``field-grid``. Every run reads one YAML file (all fields optional, see
:class:`ExperimentConfig` for defaults); ``--set section.field=value``
overrides single values. Outputs are CSV files whose first line is a
``# config_sha256=...`` comment followed by a header row.

Exit codes: 0 on success, 2 on configuration errors, 3 on solver failures.
Independent jobs (ladder levels, wavenumbers) run in parallel worker
processes when ``CORNERBIE_THREADS`` is larger than one.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .assembly import FORMULATIONS, assemble, assemble_cfier, assemble_mfie, assemble_rhs, build_operators
from .discretization import build_discretization
from .geometry import make_circle, make_parallelogram, make_polygon, make_square, make_teardrop
from .linsolve import SingularMatrixError, condition_number_2, direct_solve, eigenvalues, gmres
from .postprocess import (IncidentField, corner_density, corner_exponent, corner_point, estimate_umax,
                          eval_field, field_grid)
from .quadrature import GkEngine

__all__ = [
    "ConfigError",
    "SolverFailure",
    "GeometryConfig",
    "ExcitationConfig",
    "DiscretizationConfig",
    "SolverConfig",
    "EvaluationConfig",
    "SweepConfig",
    "ExponentConfig",
    "FieldGridConfig",
    "ExperimentConfig",
    "load_config",
    "config_hash",
    "build_boundary",
    "square_resonances",
    "Solution",
    "solve_problem",
    "cmd_solve",
    "cmd_converge",
    "cmd_sweep_k",
    "cmd_eigs",
    "cmd_exponent",
    "cmd_field_grid",
    "main",
]

THREADS_ENV = "CORNERBIE_THREADS"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class SolverFailure(RuntimeError):
    """Linear solve failed (singular pivot or GMRES not converged)."""


# --- configuration --------------------------------------------------------

@dataclass
class GeometryConfig:
    """``kind``: square, parallelogram, teardrop, circle or polygon."""

    kind: str = "square"
    side: float = 2.0
    angle: float = math.pi / 4  # parallelogram acute angle, radians
    side_a: float = 2.0
    side_b: float = 2.0 * math.sqrt(2.0)
    alpha: float = 0.5  # teardrop interior angle is alpha * pi
    radius: float = 1.0
    vertices: list = field(default_factory=list)


@dataclass
class ExcitationConfig:
    """``kind``: plane_wave (``exp(i k d.r)``) or monopole (``H_0^(1)(k|r - r0|)``)."""

    kind: str = "plane_wave"
    k: float = 10.0
    direction: list = field(default_factory=lambda: [1.0, 0.0])
    source: list = field(default_factory=lambda: [0.1, 0.05])


@dataclass
class DiscretizationConfig:
    """``refine``: ``theta`` splits the graded parameter of every base patch;
    ``physical`` splits the boundary into smaller patches instead."""

    Q: int = 10
    p: float = 6.0
    cov: str = "graded_w"
    refine: str = "theta"
    subdivisions: int = 8
    levels: list = field(default_factory=lambda: [3, 6, 9, 12])
    prox_factor: float = 2.0


@dataclass
class SolverConfig:
    method: str = "direct"
    tol: float = 1e-5
    max_iter: Optional[int] = None
    restart: Optional[int] = None
    gk_rtol: float = 1e-12
    gk_atol: float = 1e-12
    gk_limit: int = 2000


@dataclass
class EvaluationConfig:
    """Field samples at ``distances`` from ``corner`` along its exterior bisector.

    ``reference``: ``auto`` (exact for monopoles, otherwise self-reference),
    ``exact`` or ``self``. The self-reference is the CFIE-R solution with
    ``reference_factor`` times the finest refinement.
    """

    corner: Optional[int] = None
    distances: list = field(default_factory=lambda: [1e-8])
    far_distance: float = 1.0
    points: list = field(default_factory=list)
    reference: str = "auto"
    reference_factor: int = 2
    umax_grid: int = 100


@dataclass
class SweepConfig:
    k_min: float = 2.0
    k_max: float = 10.0
    samples: int = 41
    include_resonances: bool = True
    formulations: list = field(default_factory=lambda: ["MFIE_CR", "CFIE_R_CR"])


@dataclass
class ExponentConfig:
    """Log-derivative of ``phi = psi / Lt`` along base patch ``patch``
    (default: the patch leaving ``evaluation.corner`` in the traversal direction)."""

    patch: Optional[int] = None
    d_min: float = 1e-8
    d_max: float = 1e-1
    samples: int = 29
    step: float = math.log(10.0) / 8.0


@dataclass
class FieldGridConfig:
    n: int = 100
    box: list = field(default_factory=lambda: [-2.5, 2.5, -2.5, 2.5])


@dataclass
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    formulation: str = "CFIE_R_CR"
    formulations: list = field(default_factory=lambda: ["CFIE_R_CR"])
    eta: float = 1.0
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    exponent: ExponentConfig = field(default_factory=ExponentConfig)
    field_grid: FieldGridConfig = field(default_factory=FieldGridConfig)
    output: str = "out"

    def engine(self) -> GkEngine:
        s = self.solver
        return GkEngine(rtol=s.gk_rtol, atol=s.gk_atol, limit=s.gk_limit)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "geometry": GeometryConfig,
    "excitation": ExcitationConfig,
    "discretization": DiscretizationConfig,
    "solver": SolverConfig,
    "evaluation": EvaluationConfig,
    "sweep": SweepConfig,
    "exponent": ExponentConfig,
    "field_grid": FieldGridConfig,
}


def _number(value):
    # YAML 1.1 reads exponent literals without a dot ("1e-8") as strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _coerce(value, default, name):
    value = _number(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{name}: expected a finite number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
        return [_number(v) if not isinstance(v, (list, tuple)) else [_number(u) for u in v] for v in value]
    # Optional[int] fields default to None
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{name}: expected an integer or null, got {value!r}")
    return int(value)


def _build_section(cls, data, prefix):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix}: expected a mapping")
    obj = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{prefix}.{key}: unknown field")
        setattr(obj, key, _coerce(value, getattr(obj, key), f"{prefix}.{key}"))
    return obj


def _positive(value, name, strict=True):
    if not (value > 0 if strict else value >= 0):
        raise ConfigError(f"{name}: must be {'positive' if strict else 'non-negative'}, got {value!r}")


def _validate(cfg: ExperimentConfig):
    g = cfg.geometry
    if g.kind not in ("square", "parallelogram", "teardrop", "circle", "polygon"):
        raise ConfigError(f"geometry.kind: unknown geometry {g.kind!r}")
    for name in ("side", "side_a", "side_b", "radius"):
        _positive(getattr(g, name), f"geometry.{name}")
    if not 0 < g.angle < math.pi / 2 + 1e-12:
        raise ConfigError("geometry.angle: acute angle must lie in (0, pi/2]")
    if not 0 < g.alpha < 1:
        raise ConfigError("geometry.alpha: must lie in (0, 1)")
    if g.kind == "polygon" and len(g.vertices) < 3:
        raise ConfigError("geometry.vertices: a polygon needs at least 3 vertices")
    e = cfg.excitation
    if e.kind not in ("plane_wave", "monopole"):
        raise ConfigError(f"excitation.kind: unknown excitation {e.kind!r}")
    _positive(e.k, "excitation.k")
    if len(e.direction) != 2 or not np.hypot(*e.direction) > 0:
        raise ConfigError("excitation.direction: expected a nonzero 2-vector")
    if len(e.source) != 2:
        raise ConfigError("excitation.source: expected a 2-vector")
    for name in ["formulation"]:
        if getattr(cfg, name) not in FORMULATIONS:
            raise ConfigError(f"{name}: unknown formulation {getattr(cfg, name)!r}")
    for f in cfg.formulations:
        if f not in FORMULATIONS:
            raise ConfigError(f"formulations: unknown formulation {f!r}")
    for f in cfg.sweep.formulations:
        if f not in FORMULATIONS:
            raise ConfigError(f"sweep.formulations: unknown formulation {f!r}")
    _positive(cfg.eta, "eta")
    d = cfg.discretization
    if d.Q < 2 or d.Q % 2:
        raise ConfigError("discretization.Q: must be an even integer >= 2")
    if not d.p >= 2:
        raise ConfigError("discretization.p: must be >= 2")
    if d.cov not in ("graded_w", "monomial"):
        raise ConfigError(f"discretization.cov: unknown change of variables {d.cov!r}")
    if d.refine not in ("theta", "physical"):
        raise ConfigError(f"discretization.refine: expected 'theta' or 'physical', got {d.refine!r}")
    _positive(d.subdivisions, "discretization.subdivisions")
    if not d.levels or any(not isinstance(v, int) or v < 1 for v in d.levels):
        raise ConfigError("discretization.levels: expected a list of positive integers")
    if sorted(d.levels) != d.levels or len(set(d.levels)) != len(d.levels):
        raise ConfigError("discretization.levels: must be strictly increasing")
    _positive(d.prox_factor, "discretization.prox_factor")
    s = cfg.solver
    if s.method not in ("direct", "gmres"):
        raise ConfigError(f"solver.method: expected 'direct' or 'gmres', got {s.method!r}")
    _positive(s.tol, "solver.tol")
    _positive(s.gk_rtol, "solver.gk_rtol")
    _positive(s.gk_atol, "solver.gk_atol")
    _positive(s.gk_limit, "solver.gk_limit")
    for name in ("max_iter", "restart"):
        if getattr(s, name) is not None:
            _positive(getattr(s, name), f"solver.{name}")
    v = cfg.evaluation
    if not v.distances:
        raise ConfigError("evaluation.distances: expected at least one distance")
    for x in v.distances:
        if not isinstance(x, (int, float)) or not x > 0:
            raise ConfigError(f"evaluation.distances: distances must be positive, got {x!r}")
    _positive(v.far_distance, "evaluation.far_distance")
    if v.reference not in ("auto", "exact", "self"):
        raise ConfigError(f"evaluation.reference: expected auto, exact or self, got {v.reference!r}")
    if v.reference == "exact" and e.kind != "monopole":
        raise ConfigError("evaluation.reference: an exact reference needs a monopole excitation")
    if v.reference_factor < 2:
        raise ConfigError("evaluation.reference_factor: must be >= 2")
    _positive(v.umax_grid, "evaluation.umax_grid")
    for p in v.points:
        if not isinstance(p, (list, tuple)) or len(p) != 2:
            raise ConfigError(f"evaluation.points: expected [x, y] pairs, got {p!r}")
    w = cfg.sweep
    _positive(w.k_min, "sweep.k_min")
    if not w.k_max > w.k_min:
        raise ConfigError("sweep.k_max: must exceed sweep.k_min")
    if w.samples < 2:
        raise ConfigError("sweep.samples: need at least 2 samples")
    x = cfg.exponent
    _positive(x.d_min, "exponent.d_min")
    if not x.d_max > x.d_min:
        raise ConfigError("exponent.d_max: must exceed exponent.d_min")
    _positive(x.samples, "exponent.samples")
    _positive(x.step, "exponent.step")
    f = cfg.field_grid
    _positive(f.n, "field_grid.n")
    if len(f.box) != 4 or not (f.box[1] > f.box[0] and f.box[3] > f.box[2]):
        raise ConfigError("field_grid.box: expected [xmin, xmax, ymin, ymax]")
    return cfg


def _parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r}: expected section.field=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from exc
    return key.strip(), value


def _is_file(source):
    try:
        return Path(source).is_file()
    except (OSError, ValueError):
        return False


def load_config(source=None, overrides=()) -> ExperimentConfig:
    """Build a validated config from a YAML path, YAML text or mapping."""
    if source is None:
        data = {}
    elif isinstance(source, dict):
        data = json.loads(json.dumps(source))
    else:
        text = Path(source).read_text() if _is_file(source) else str(source)
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: not valid YAML ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    for text in overrides:
        key, value = _parse_override(text)
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: {part} is not a section")
        node[parts[-1]] = value
    cfg = ExperimentConfig()
    for key, value in data.items():
        if key in _SECTIONS:
            setattr(cfg, key, _build_section(_SECTIONS[key], value, key))
        elif key in ("formulation", "formulations", "eta", "output"):
            setattr(cfg, key, _coerce(value, getattr(cfg, key), key))
        else:
            raise ConfigError(f"{key}: unknown field")
    return _validate(cfg)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# --- problem setup --------------------------------------------------------

def build_boundary(g: GeometryConfig, n: int = 1):
    if g.kind == "square":
        return make_square(g.side, n)
    if g.kind == "parallelogram":
        return make_parallelogram(g.angle, g.side_a, g.side_b, n)
    if g.kind == "teardrop":
        return make_teardrop(g.alpha, n)
    if g.kind == "circle":
        return make_circle(g.radius, max(n, 1) * 4)
    return make_polygon(np.asarray(g.vertices, dtype=float), n)


def square_resonances(side, k_min, k_max):
    """Interior Dirichlet eigen-wavenumbers ``(pi/a) sqrt(m^2 + n^2)``, ``m, n >= 1``.

    Returns sorted ``(k_c, m, n)`` with ``m <= n``.
    """
    out = []
    top = int(k_max * side / math.pi) + 1
    for m in range(1, top + 1):
        for n in range(m, top + 1):
            kc = math.pi / side * math.hypot(m, n)
            if k_min <= kc <= k_max:
                out.append((kc, m, n))
    return sorted(out)


def _discretize(cfg: ExperimentConfig, level: int, use_cov=True):
    d = cfg.discretization
    if d.refine == "physical":
        boundary = build_boundary(cfg.geometry, level)
        subdivisions = 1
    else:
        boundary = build_boundary(cfg.geometry, 1)
        subdivisions = level
    return build_discretization(boundary, d.Q, d.p, use_cov=use_cov, cov_kind=d.cov, subdivisions=subdivisions,
                                prox_factor=d.prox_factor)


def _incident(cfg: ExperimentConfig, k=None) -> IncidentField:
    e = cfg.excitation
    return IncidentField(e.kind, float(e.k if k is None else k), tuple(e.direction), tuple(e.source))


def _default_corner(cfg: ExperimentConfig, boundary):
    if cfg.evaluation.corner is not None:
        if not 0 <= cfg.evaluation.corner < len(boundary.corners):
            raise ConfigError(f"evaluation.corner: geometry has {len(boundary.corners)} corners")
        return cfg.evaluation.corner
    if not boundary.corners:
        return None
    # top-left corner of the square; first corner otherwise
    return 3 if cfg.geometry.kind == "square" else 0


@dataclass
class Solution:
    """Solved system at one refinement level and wavenumber."""

    formulation: str
    disc: object
    k: float
    eta: float
    x: np.ndarray
    R: Optional[np.ndarray]
    diagnostics: object
    flagged: int

    def field(self, points, corner=None, offsets=None, engine: GkEngine = GkEngine()):
        return eval_field(self.formulation, self.disc, self.k, self.x, points, R=self.R, eta=self.eta,
                          engine=engine, corner=corner, offsets=offsets)


def solve_problem(cfg: ExperimentConfig, formulation: str, level: int, k=None, incident=None) -> Solution:
    """Discretize, assemble and solve one formulation."""
    k = float(cfg.excitation.k if k is None else k)
    incident = _incident(cfg, k) if incident is None else incident
    disc = _discretize(cfg, level, use_cov=formulation != "CFIE_R_noCov")
    engine = cfg.engine()
    A = assemble(formulation, disc, k, cfg.eta, engine=engine)
    rhs = assemble_rhs(disc, incident, scale_by_jacobian=formulation != "CFIE_R_INTERMEDIATE")
    x, diag = _linear_solve(cfg, A.entries, rhs)
    return Solution(formulation, disc, k, cfg.eta, x, A.meta.get("R"), diag, int(A.meta.get("flagged", 0)))


def _linear_solve(cfg: ExperimentConfig, A, b):
    s = cfg.solver
    if s.method == "direct":
        try:
            return direct_solve(A, b)
        except SingularMatrixError as exc:
            raise SolverFailure(str(exc)) from exc
    x, diag = gmres(A, b, s.tol, s.max_iter, s.restart)
    if not diag.converged:
        raise SolverFailure(f"GMRES stopped after {diag.iterations} iterations at residual {diag.residual:.3e}")
    return x, diag


def _eval_points(cfg: ExperimentConfig, boundary):
    """Near points (with exact corner offsets), far point and extra points."""
    cid = _default_corner(cfg, boundary)
    v = cfg.evaluation
    if cid is None:
        # smooth boundary: sample along the outward normal at patch 0, s = 0
        base = boundary.patches[0]
        r0 = base.point(np.array(0.0))
        nrm = base.normal(np.array(0.0))
        near = [(r0 + d * nrm, None, d) for d in v.distances]
        far = r0 + v.far_distance * nrm
    else:
        near = []
        for d in v.distances:
            p, off = corner_point(boundary, cid, d)
            near.append((p, off, d))
        far = corner_point(boundary, cid, v.far_distance)[0]
    return cid, near, far


def _field_values(sol: Solution, cid, near, far, extra, engine):
    vals = []
    for p, off, _ in near:
        if off is None:
            vals.append(sol.field([p], engine=engine)[0])
        else:
            vals.append(sol.field([p], corner=cid, offsets=[off], engine=engine)[0])
    pts = np.vstack([np.atleast_2d(far)] + ([np.asarray(extra, dtype=float)] if len(extra) else []))
    vals.extend(sol.field(pts, engine=engine))
    return np.asarray(vals)


def _umax(cfg, sol: Solution, incident):
    return estimate_umax(sol.disc, incident, lambda P: sol.field(P, engine=cfg.engine()), n=cfg.evaluation.umax_grid)


# --- parallel map -----------------------------------------------------------

def _threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}: expected an integer, got {raw!r}")
    return max(1, n)


def _pmap(fn, items):
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --- CSV output -------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_csv(path, cfg: ExperimentConfig, header, rows, comments=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={config_hash(cfg)}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _out(cfg, name):
    return Path(cfg.output) / name


# --- commands ---------------------------------------------------------------

def cmd_solve(cfg: ExperimentConfig):
    """Solve at ``discretization.subdivisions``; write densities, diagnostics and field samples."""
    level = cfg.discretization.subdivisions
    sol = solve_problem(cfg, cfg.formulation, level)
    disc = sol.disc
    cid, near, far = _eval_points(cfg, disc.boundary)
    engine = cfg.engine()
    vals = _field_values(sol, cid, near, far, cfg.evaluation.points, engine)
    pos = disc.flat("pos")
    piece = np.repeat(np.arange(disc.M), disc.Q)
    theta = np.tile(disc.theta, disc.M)
    rows = [(i, piece[i], theta[i], pos[i, 0], pos[i, 1], sol.x[i].real, sol.x[i].imag) for i in range(disc.N)]
    files = [write_csv(_out(cfg, "density.csv"), cfg, ["index", "piece", "theta", "x", "y", "re", "im"], rows)]
    d = sol.diagnostics
    files.append(write_csv(_out(cfg, "diagnostics.csv"), cfg,
                           ["formulation", "N", "k", "method", "iterations", "residual", "converged", "gk_flagged"],
                           [(sol.formulation, disc.N, sol.k, d.method, d.iterations, d.residual, d.converged,
                             sol.flagged)]))
    inc = _incident(cfg)
    pts = [p for p, _, _ in near] + [np.asarray(far)] + [np.asarray(p, dtype=float) for p in cfg.evaluation.points]
    labels = [f"near_d={dd!r}" for _, _, dd in near] + ["far"] + ["point"] * len(cfg.evaluation.points)
    rows = []
    for lab, p, u in zip(labels, pts, vals):
        ui = complex(inc.value([p])[0])
        rows.append((lab, p[0], p[1], u.real, u.imag, (u + ui).real, (u + ui).imag))
    files.append(write_csv(_out(cfg, "field.csv"), cfg,
                           ["label", "x", "y", "u_scat_re", "u_scat_im", "u_total_re", "u_total_im"], rows))
    return files


def _converge_job(args):
    cfg, formulation, level = args
    sol = solve_problem(cfg, formulation, level)
    cid, near, far = _eval_points(cfg, sol.disc.boundary)
    vals = _field_values(sol, cid, near, far, [], cfg.engine())
    return sol.disc.N, vals, sol.flagged


def converge_table(cfg: ExperimentConfig):
    """Errors per formulation and level: list of dict rows plus the reference info."""
    levels = cfg.discretization.levels
    if len(levels) < 3:
        raise ConfigError("discretization.levels: convergence studies need at least 3 levels")
    inc = _incident(cfg)
    ref_kind = cfg.evaluation.reference
    if ref_kind == "auto":
        ref_kind = "exact" if inc.kind == "monopole" else "self"
    boundary = _discretize(cfg, levels[0]).boundary
    cid, near, far = _eval_points(cfg, boundary)
    pts = [p for p, _, _ in near] + [np.asarray(far)]
    if ref_kind == "exact":
        # interior monopole: the scattered field is minus the incident field
        u_ref = -inc.value(np.vstack(pts))
        scale = np.abs(u_ref)
    else:
        ref_level = cfg.evaluation.reference_factor * levels[-1]
        ref = solve_problem(cfg, "CFIE_R_CR", ref_level)
        u_ref = _field_values(ref, cid, near, far, [], cfg.engine())
        scale = np.full(len(pts), _umax(cfg, ref, inc))
    jobs = [(cfg, f, lv) for f in cfg.formulations for lv in levels]
    results = _pmap(_converge_job, jobs)
    rows = []
    nn = len(near)
    for (_, f, lv), (N, vals, flagged) in zip(jobs, results):
        err = np.abs(vals - u_ref) / scale
        rows.append({"formulation": f, "level": lv, "N": N, "eps_near": float(np.max(err[:nn])),
                     "eps_far": float(err[nn]), "gk_flagged": flagged})
    for f in cfg.formulations:
        sub = [r for r in rows if r["formulation"] == f]
        prev = None
        for r in sub:
            r["order"] = None
            if prev is not None and prev["eps_near"] > 0 and r["eps_near"] > 0:
                r["order"] = math.log(prev["eps_near"] / r["eps_near"]) / math.log(r["N"] / prev["N"])
            prev = r
    return rows, ref_kind


def cmd_converge(cfg: ExperimentConfig):
    """CSV ``formulation, level, N, eps_near, eps_far, order``.

    ``order`` compares consecutive levels: ``log(eps_i / eps_i+1) / log(N_i+1 / N_i)``,
    which reduces to ``log2`` of the error ratio when ``N`` doubles.
    """
    rows, ref_kind = converge_table(cfg)
    out = [(r["formulation"], r["level"], r["N"], r["eps_near"], r["eps_far"], r["order"]) for r in rows]
    comments = [f"reference={ref_kind}"]
    comments += [f"gk_flagged formulation={r['formulation']} level={r['level']} jobs={r['gk_flagged']}"
                 for r in rows if r["gk_flagged"]]
    return [write_csv(_out(cfg, "converge.csv"), cfg, ["formulation", "level", "N", "eps_near", "eps_far", "order"],
                      out, comments)]


def _sweep_job(args):
    cfg, k = args
    disc = _discretize(cfg, cfg.discretization.subdivisions)
    engine = cfg.engine()
    ops = build_operators(disc, k, engine=engine)
    inc = _incident(cfg, k)
    rhs = assemble_rhs(disc, inc)
    out = {}
    for f in cfg.sweep.formulations:
        if f == "MFIE_CR":
            A = assemble_mfie(disc, k, ops=ops).entries
        elif f == "CFIE_R_CR":
            A = assemble_cfier(disc, k, cfg.eta, ops=ops).entries
        else:
            raise ConfigError(f"sweep.formulations: {f} is not supported in sweeps")
        s = cfg.solver
        _, diag = gmres(A, rhs, s.tol, s.max_iter, s.restart)
        out[f] = (condition_number_2(A), diag.iterations, diag.converged)
    return out


def sweep_k_grid(cfg: ExperimentConfig):
    w = cfg.sweep
    ks = set(np.linspace(w.k_min, w.k_max, w.samples).tolist())
    markers = []
    if cfg.geometry.kind == "square":
        markers = square_resonances(cfg.geometry.side, w.k_min, w.k_max)
        if w.include_resonances:
            ks |= {kc for kc, _, _ in markers}
    return sorted(ks), markers


def sweep_table(cfg: ExperimentConfig):
    ks, markers = sweep_k_grid(cfg)
    results = _pmap(_sweep_job, [(cfg, k) for k in ks])
    return ks, results, markers


def cmd_sweep_k(cfg: ExperimentConfig):
    """CSV ``k, kappa2_mfie, kappa2_cfier, gmres_iters_mfie, gmres_iters_cfier``.

    Resonance markers (square only) are written as comment lines.
    """
    if set(cfg.sweep.formulations) != {"MFIE_CR", "CFIE_R_CR"}:
        raise ConfigError("sweep.formulations: the sweep CSV needs MFIE_CR and CFIE_R_CR")
    ks, results, markers = sweep_table(cfg)
    rows = [(k, r["MFIE_CR"][0], r["CFIE_R_CR"][0], r["MFIE_CR"][1], r["CFIE_R_CR"][1]) for k, r in zip(ks, results)]
    comments = [f"resonance k_c={kc!r} m={m} n={n}" for kc, m, n in markers]
    return [write_csv(_out(cfg, "sweep_k.csv"), cfg,
                      ["k", "kappa2_mfie", "kappa2_cfier", "gmres_iters_mfie", "gmres_iters_cfier"], rows, comments)]


def eigs_table(cfg: ExperimentConfig):
    disc = _discretize(cfg, cfg.discretization.subdivisions)
    k = cfg.excitation.k
    ops = build_operators(disc, k, engine=cfg.engine())
    out = {}
    for f in cfg.sweep.formulations:
        if f == "MFIE_CR":
            A = assemble_mfie(disc, k, ops=ops).entries
        elif f == "CFIE_R_CR":
            A = assemble_cfier(disc, k, cfg.eta, ops=ops).entries
        else:
            raise ConfigError(f"sweep.formulations: {f} is not supported for eigenvalues")
        lam = eigenvalues(A)
        out[f] = lam[np.lexsort((lam.imag, lam.real, np.abs(lam)))]
    return disc, out


def cmd_eigs(cfg: ExperimentConfig):
    """CSV ``formulation, re, im, abs`` sorted by modulus."""
    disc, out = eigs_table(cfg)
    rows = [(f, v.real, v.imag, abs(v)) for f, lam in out.items() for v in lam]
    comments = [f"N={disc.N} k={cfg.excitation.k!r}"]
    comments += [f"min_abs formulation={f} value={float(np.min(np.abs(lam)))!r}" for f, lam in out.items()]
    return [write_csv(_out(cfg, "eigs.csv"), cfg, ["formulation", "re", "im", "abs"], rows, comments)]


def exponent_curve(cfg: ExperimentConfig):
    """``(d, nu, flags)`` for the density of ``cfg.formulation`` near the evaluation corner."""
    sol = solve_problem(cfg, cfg.formulation, cfg.discretization.subdivisions)
    disc = sol.disc
    boundary = disc.boundary
    cid = _default_corner(cfg, boundary)
    x = cfg.exponent
    if x.patch is not None:
        if not 0 <= x.patch < len(boundary.patches):
            raise ConfigError(f"exponent.patch: geometry has {len(boundary.patches)} patches")
        base = x.patch
    else:
        if cid is None:
            raise ConfigError("exponent.patch: geometry has no corners")
        cands = [i for i, p in enumerate(boundary.patches) if p.corner_id == cid]
        # patch leaving the corner against the traversal (the top edge for the square)
        base = min(cands, key=lambda i: boundary.patches[i].orientation)
    if sol.formulation == "CFIE_R_INTERMEDIATE":
        raise ConfigError("formulation: exponent extraction needs a regularized unknown")
    d = np.logspace(math.log10(x.d_min), math.log10(x.d_max), x.samples)
    nu, flags = corner_exponent(lambda t: corner_density(disc, sol.x, base, t), d, x.step)
    return d, nu, flags


def cmd_exponent(cfg: ExperimentConfig):
    """CSV ``d, nu``; points where the density changes sign are listed as comments."""
    d, nu, flags = exponent_curve(cfg)
    rows = [(a, float(np.real(b))) for a, b in zip(d, nu)]
    comments = [f"flagged d={a!r}" for a, f in zip(d, flags) if f]
    return [write_csv(_out(cfg, "exponent.csv"), cfg, ["d", "nu"], rows, comments)]


def cmd_field_grid(cfg: ExperimentConfig):
    """CSV ``x, y, abs_u`` of the total field; interior points get ``nan``."""
    sol = solve_problem(cfg, cfg.formulation, cfg.discretization.subdivisions)
    g = cfg.field_grid
    pts, ext = field_grid(sol.disc.boundary, g.n, box=tuple(g.box))
    vals = np.full(len(pts), np.nan)
    chunks = np.array_split(np.nonzero(ext)[0], max(1, min(_threads(), int(ext.sum()))))
    engine = cfg.engine()
    inc = _incident(cfg)
    for idx in chunks:
        if len(idx):
            P = pts[idx]
            vals[idx] = np.abs(sol.field(P, engine=engine) + inc.value(P))
    rows = [(p[0], p[1], v) for p, v in zip(pts, vals)]
    return [write_csv(_out(cfg, "field_grid.csv"), cfg, ["x", "y", "abs_u"], rows)]


COMMANDS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "sweep-k": cmd_sweep_k,
    "eigs": cmd_eigs,
    "exponent": cmd_exponent,
    "field-grid": cmd_field_grid,
}


def _parser():
    p = argparse.ArgumentParser(prog="cornerbie", description="Corner-regularized Nystrom solver for 2D TM scattering.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", nargs="?", help="YAML experiment file (defaults are used when omitted)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--output", help="output directory (overrides 'output')")
    p.add_argument("--k", type=float, help="wavenumber (overrides excitation.k)")
    p.add_argument("--formulation", help="formulation (overrides 'formulation')")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.output is not None:
        overrides.append(f"output={json.dumps(args.output)}")
    if args.k is not None:
        overrides.append(f"excitation.k={args.k!r}")
    if args.formulation is not None:
        overrides.append(f"formulation={args.formulation}")
    try:
        if args.config is not None and not _is_file(args.config):
            raise ConfigError(f"config: file {args.config!r} not found")
        cfg = load_config(args.config, overrides)
        files = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailure, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
