"""Point evaluation, angle/coupling optimization, and parameter sweeps.

A point evaluation composes the model, filter, control and observable
layers into one flat result row; sweeps evaluate a Cartesian grid of rows
(optionally optimizing measurement angle theta, target quadrature nu
and/or coupling g per point) and stream them to a versioned CSV or JSON
file.  Rows are deterministic functions of the inputs, so sweep output is
independent of worker count and evaluation order.
"""

from __future__ import annotations

import enum
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .control import CostKind, CostSpec, synthesize
from .model import (
    DissipationModel,
    PhysicalParams,
    build_matrices,
    derived_quantities,
)
from .observables import (
    MechanicalBlock,
    check_physicality,
    min_quadrature_variance,
    phonon_number,
    rotated_variance,
)
from .solvers import SolverError, solve_filter_are

SCHEMA_VERSION = 1

#: Fixed axis order for Cartesian grids (determinism).
GRID_AXES = ("model", "omega_m", "q_m", "kappa", "g", "eta", "theta", "nu",
             "p_over_q")

#: Log-spaced search range for per-point coupling optimization, rad/s.
G_SEARCH_RANGE = (1e2, 1e8)

ANGLE_TOL = 1e-4
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Objective(enum.Enum):
    CONDITIONAL_PHONON = "conditional_phonon"
    UNCONDITIONAL_PHONON = "unconditional_phonon"
    CONDITIONAL_MIN_VARIANCE = "conditional_min_variance"
    UNCONDITIONAL_MIN_VARIANCE = "unconditional_min_variance"


COLUMNS = (
    "model", "omega_m", "q_m", "kappa", "g", "eta", "theta", "temperature",
    "cost_kind", "p", "q", "nu",
    "nbar", "cq", "gamma_th", "gamma_th_norm",
    "n_conditional", "vmin_conditional", "angle_conditional",
    "n_unconditional", "vmin_unconditional", "angle_unconditional",
    "theta_opt", "nu_opt", "sigma_fb",
    "margin_conditional", "margin_unconditional",
    "physical_conditional", "physical_unconditional",
    "residual_filter", "residual_control", "stabilizing",
    "degenerate_correlation", "notes", "error",
)

_STRING_COLUMNS = {"model", "cost_kind", "notes", "error"}
_BOOL_COLUMNS = {"physical_conditional", "physical_unconditional",
                 "stabilizing", "degenerate_correlation"}


@dataclass
class ResultRow:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def ok(self) -> bool:
        return not self.values.get("error")


@dataclass(frozen=True)
class OptimizeResult:
    """Best angle/coupling with near-degenerate alternates, if any.

    ``alternates`` lists further local minima whose coarse-grid values lie
    within 1% of the best one (multimodal landscape).
    """

    angle: float
    value: float
    alternates: tuple = ()

    @property
    def multimodal(self) -> bool:
        return len(self.alternates) > 0


def _base_values(params: PhysicalParams, spec: CostSpec) -> dict:
    dq = derived_quantities(params)
    vals = {c: math.nan for c in COLUMNS}
    vals.update(
        model=params.model.value,
        omega_m=params.omega_m, q_m=params.q_m, kappa=params.kappa,
        g=params.g, eta=params.eta, theta=params.theta,
        temperature=params.temperature,
        cost_kind=spec.kind.value, p=spec.p, q=spec.q,
        nu=spec.nu if spec.nu is not None else math.nan,
        nbar=dq.nbar, cq=dq.cq, gamma_th=dq.gamma_th,
        gamma_th_norm=dq.gamma_th_norm,
        physical_conditional=False, physical_unconditional=False,
        stabilizing=False, degenerate_correlation=False,
        notes="", error="",
    )
    return vals


def run_point(params: PhysicalParams, spec: CostSpec,
              theta_opt: float | None = None,
              nu_opt: float | None = None,
              notes: str = "") -> ResultRow:
    """One fully populated result row; solver failures land in ``error``."""
    vals = _base_values(params, spec)
    vals["notes"] = notes
    if theta_opt is not None:
        vals["theta_opt"] = theta_opt
    if nu_opt is not None:
        vals["nu_opt"] = nu_opt
    try:
        sol = synthesize(params, spec)
    except SolverError as exc:
        vals["error"] = f"{type(exc).__name__}: {exc}"
        return ResultRow(vals)
    cond = MechanicalBlock.from_matrix(sol.v_conditional)
    unc = MechanicalBlock.from_matrix(sol.v_total)
    sq_c = min_quadrature_variance(cond)
    sq_u = min_quadrature_variance(unc)
    phys_c = check_physicality(sol.v_conditional)
    phys_u = check_physicality(sol.v_total)
    vals.update(
        n_conditional=phonon_number(cond),
        vmin_conditional=sq_c.v_min,
        angle_conditional=sq_c.angle,
        n_unconditional=phonon_number(unc),
        vmin_unconditional=sq_u.v_min,
        angle_unconditional=sq_u.angle,
        sigma_fb=sol.feedback_strength,
        margin_conditional=phys_c.margin,
        margin_unconditional=phys_u.margin,
        physical_conditional=phys_c.passes,
        physical_unconditional=phys_u.passes,
        residual_filter=sol.filter_report.residual,
        residual_control=sol.control_report.residual,
        stabilizing=(sol.filter_report.stabilizing
                     and sol.control_report.stabilizing),
        degenerate_correlation=sol.filter_report.degenerate_mechanical_correlation,
    )
    if not (phys_c.passes and phys_u.passes):
        vals["notes"] = (vals["notes"] + ";" if vals["notes"] else "") + \
            "physicality_failure"
    return ResultRow(vals)


def _conditional_covariance(params: PhysicalParams) -> np.ndarray:
    v, _ = solve_filter_are(build_matrices(params))
    return v


def _objective_fn(params: PhysicalParams, spec: CostSpec,
                  objective: Objective, which: str):
    """Scalar evaluator for one search variable, all others fixed."""

    def with_value(x: float):
        if which == "theta":
            return params.replace(theta=x), spec
        if which == "nu":
            return params, replace(spec, kind=CostKind.SQUEEZING, nu=x)
        if which == "g":
            return params.replace(g=x), spec
        raise ValueError(f"unknown search variable {which!r}")

    def evaluate(x: float) -> float:
        pars, sp = with_value(x)
        try:
            if objective is Objective.CONDITIONAL_PHONON:
                v_c = _conditional_covariance(pars)
                return phonon_number(MechanicalBlock.from_matrix(v_c))
            if objective is Objective.CONDITIONAL_MIN_VARIANCE:
                if which == "nu":
                    v_c = _conditional_covariance(params)
                    return rotated_variance(MechanicalBlock.from_matrix(v_c), x)
                v_c = _conditional_covariance(pars)
                return min_quadrature_variance(
                    MechanicalBlock.from_matrix(v_c)).v_min
            if objective is Objective.UNCONDITIONAL_PHONON:
                sol = synthesize(pars, sp)
                return phonon_number(MechanicalBlock.from_matrix(sol.v_total))
            if objective is Objective.UNCONDITIONAL_MIN_VARIANCE:
                if which == "nu":
                    sol = synthesize(pars, sp)
                    return rotated_variance(
                        MechanicalBlock.from_matrix(sol.v_total), x)
                inner = optimize_angle(pars, sp, "nu", objective)
                return inner.value
            raise ValueError(f"unknown objective {objective}")
        except SolverError:
            return math.inf

    return evaluate


def _golden_min(fn, lo, hi, tol):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    return (c, fc) if fc <= fd else (d, fd)


def _local_minima_periodic(values):
    n = len(values)
    out = []
    for i in range(n):
        if values[i] < values[(i - 1) % n] and values[i] <= values[(i + 1) % n]:
            out.append(i)
    return out


def optimize_angle(params: PhysicalParams, spec: CostSpec, which: str,
                   objective: Objective, coarse: int = 64) -> OptimizeResult:
    """Minimize the objective over theta or nu (pi-periodic search).

    Coarse grid over one period followed by golden-section refinement to
    1e-4 rad.  When a second coarse local minimum lies within 1% of the
    best, both basins are refined and the runner-up is returned in
    ``alternates``.  Unconditional objectives trigger a full synthesis per
    candidate.
    """
    if which not in ("theta", "nu"):
        raise ValueError("which must be 'theta' or 'nu'")
    lo = 0.0 if which == "theta" else -math.pi / 2
    fn = _objective_fn(params, spec, objective, which)
    xs = lo + math.pi * np.arange(coarse) / coarse
    vs = [fn(x) for x in xs]
    if not np.isfinite(vs).any():
        raise SolverError("objective is undefined on the whole angle grid")
    minima = _local_minima_periodic(vs) or [int(np.argmin(vs))]
    minima.sort(key=lambda i: vs[i])
    best_val = vs[minima[0]]
    keep = [minima[0]]
    for i in minima[1:]:
        if best_val != 0 and (vs[i] - best_val) / abs(best_val) <= 0.01:
            keep.append(i)
    h = math.pi / coarse
    refined = []
    for i in keep:
        x, v = _golden_min(fn, xs[i] - h, xs[i] + h, ANGLE_TOL)
        refined.append((_principal_angle(x, which), v))
    refined.sort(key=lambda t: t[1])
    return OptimizeResult(angle=refined[0][0], value=refined[0][1],
                          alternates=tuple(refined[1:]))


def optimize_coupling(params: PhysicalParams, spec: CostSpec,
                      objective: Objective, coarse: int = 25,
                      g_range=G_SEARCH_RANGE) -> OptimizeResult:
    """Minimize the objective over the coupling g, log-spaced search."""
    fn = _objective_fn(params, spec, objective, "g")
    lo, hi = math.log10(g_range[0]), math.log10(g_range[1])
    xs = np.linspace(lo, hi, coarse)
    vs = [fn(10.0**x) for x in xs]
    if not np.isfinite(vs).any():
        raise SolverError("objective is undefined on the whole coupling grid")
    i = int(np.argmin(vs))
    h = (hi - lo) / (coarse - 1)
    x, v = _golden_min(lambda u: fn(10.0**u),
                       max(lo, xs[i] - h), min(hi, xs[i] + h), 1e-3)
    return OptimizeResult(angle=10.0**x, value=v)


def _principal_angle(x: float, which: str) -> float:
    x = math.remainder(x, math.pi)
    if which == "theta":
        # report in [0, pi)
        return x + math.pi if x < 0 else x
    if x <= -math.pi / 2:
        x += math.pi
    return x


@dataclass(frozen=True)
class SweepConfig:
    """Declarative sweep: base point, named grids, optional optimizations.

    Grid axes must be non-empty and strictly monotone (the model axis just
    needs distinct entries); an axis cannot both be swept and optimized.
    """

    base: PhysicalParams
    spec: CostSpec
    grids: dict = field(default_factory=dict)
    objective: Objective = Objective.UNCONDITIONAL_PHONON
    optimize: tuple = ()
    output: str = "sweep.csv"
    fmt: str = "csv"

    def __post_init__(self):
        for name, axis in self.grids.items():
            if name not in GRID_AXES:
                raise ValueError(f"unknown grid axis {name!r}")
            if len(axis) == 0:
                raise ValueError(f"grid axis {name!r} is empty")
            if name == "model":
                if len(set(axis)) != len(axis):
                    raise ValueError("model axis entries must be distinct")
            else:
                arr = np.asarray(axis, dtype=float)
                if len(arr) > 1 and not (np.all(np.diff(arr) > 0)
                                         or np.all(np.diff(arr) < 0)):
                    raise ValueError(f"grid axis {name!r} must be strictly monotone")
        for name in self.optimize:
            if name not in ("theta", "nu", "g"):
                raise ValueError(f"cannot optimize axis {name!r}")
            if name in self.grids:
                raise ValueError(f"axis {name!r} both swept and optimized")
        if self.fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")


def _apply_axis(params: PhysicalParams, spec: CostSpec, name: str, value):
    if name == "model":
        return params.replace(model=DissipationModel(value)), spec
    if name == "p_over_q":
        return params, replace(spec, p=float(value) * spec.q)
    if name == "nu":
        return params, replace(spec, nu=float(value))
    return params.replace(**{name: float(value)}), spec


def evaluate_sweep_point(base: PhysicalParams, spec: CostSpec,
                         assignment: tuple, optimize: tuple,
                         objective: Objective) -> ResultRow:
    """Evaluate one grid point, optimizing the requested axes first.

    Multiple optimization axes are handled by two rounds of coordinate
    descent (g, then angles), which is enough for the smooth single-basin
    landscapes swept here; multimodal angle landscapes are flagged in the
    row notes.
    """
    params, sp = base, spec
    for name, value in assignment:
        params, sp = _apply_axis(params, sp, name, value)
    theta_opt = nu_opt = None
    notes = []
    try:
        rounds = 2 if len(optimize) > 1 else 1
        for _ in range(rounds):
            for name in sorted(optimize, key=lambda n: (n != "g", n)):
                if name == "g":
                    res = optimize_coupling(params, sp, objective)
                    params = params.replace(g=res.angle)
                else:
                    res = optimize_angle(params, sp, name, objective)
                    if name == "theta":
                        theta_opt = res.angle
                        params = params.replace(theta=res.angle)
                    else:
                        nu_opt = res.angle
                        sp = replace(sp, kind=CostKind.SQUEEZING, nu=res.angle)
                    if res.multimodal:
                        alts = "|".join(f"{a:.6f}" for a, _ in res.alternates)
                        notes.append(f"multimodal_{name}:{alts}")
    except SolverError as exc:
        vals = _base_values(params, sp)
        vals["error"] = f"{type(exc).__name__}: {exc}"
        return ResultRow(vals)
    return run_point(params, sp, theta_opt=theta_opt, nu_opt=nu_opt,
                     notes=";".join(notes))


def _sweep_tasks(cfg: SweepConfig):
    axes = [(name, list(cfg.grids[name])) for name in GRID_AXES
            if name in cfg.grids]
    if not axes:
        return [()]
    tasks = [()]
    for name, values in axes:
        tasks = [t + ((name, v),) for t in tasks for v in values]
    return tasks


def _worker(args):
    base, spec, assignment, optimize, objective = args
    return evaluate_sweep_point(base, spec, assignment, optimize, objective)


def run_sweep(cfg: SweepConfig, workers: int = 1):
    """Evaluate the full grid and write the output file.

    Returns (rows, n_failed).  Partial failures are flagged in their rows
    and the sweep continues.
    """
    tasks = _sweep_tasks(cfg)
    args = [(cfg.base, cfg.spec, t, tuple(cfg.optimize), cfg.objective)
            for t in tasks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_worker, args, chunksize=4))
    else:
        rows = [_worker(a) for a in args]
    meta = sweep_meta(cfg)
    write_rows(cfg.output, rows, meta, fmt=cfg.fmt)
    return rows, sum(0 if r.ok else 1 for r in rows)


def sweep_meta(cfg: SweepConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "objective": cfg.objective.value,
        "optimize": list(cfg.optimize),
        "base": {
            **{k: getattr(cfg.base, k) for k in
               ("omega_m", "q_m", "kappa", "g", "eta", "theta", "temperature")},
            "model": cfg.base.model.value,
        },
        "cost": {"kind": cfg.spec.kind.value, "p": cfg.spec.p, "q": cfg.spec.q,
                 "nu": cfg.spec.nu},
        "grids": {k: list(v) for k, v in cfg.grids.items()},
    }


def _format_value(col: str, value) -> str:
    if col in _STRING_COLUMNS:
        # keep the CSV comma-safe
        return str(value).replace(",", ";").replace("\n", " ")
    if col in _BOOL_COLUMNS:
        return "1" if value else "0"
    return format(float(value), ".17g")


def write_rows(path, rows, meta: dict, fmt: str = "csv",
               timestamp: bool = True) -> None:
    """Stream rows to CSV or JSON with a config/version header block.

    CSV: UTF-8, LF line endings, '#'-prefixed header block, then a header
    row and one line per result; numbers carry 17 significant digits so a
    round-trip is exact.
    """
    if fmt == "json":
        payload = {"meta": dict(meta), "rows": [r.values for r in rows]}
        if timestamp:
            payload["meta"]["created"] = time.strftime(
                "%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=1, default=_json_default)
            fh.write("\n")
        return
    buf = io.StringIO()
    buf.write(f"# optolqg-schema: {SCHEMA_VERSION}\n")
    buf.write(f"# config: {json.dumps(meta, sort_keys=True, default=_json_default)}\n")
    if timestamp:
        buf.write("# created: "
                  + time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()) + "\n")
    buf.write(",".join(COLUMNS) + "\n")
    for row in rows:
        buf.write(",".join(_format_value(c, row.values[c]) for c in COLUMNS)
                  + "\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def read_rows(path):
    """Parse a results file (CSV or JSON) back into (meta, rows)."""
    text = open(path, "r", encoding="utf-8").read()
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        return payload["meta"], [ResultRow(dict(r)) for r in payload["rows"]]
    meta = {}
    rows = []
    header = None
    for line in text.splitlines():
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("config:"):
                meta = json.loads(body[len("config:"):].strip())
            elif body.startswith("optolqg-schema:"):
                meta.setdefault("schema_version",
                                int(body.split(":", 1)[1].strip()))
            continue
        cells = line.split(",")
        if header is None:
            header = cells
            continue
        vals = {}
        for col, cell in zip(header, cells):
            if col in _STRING_COLUMNS:
                vals[col] = cell
            elif col in _BOOL_COLUMNS:
                vals[col] = cell == "1"
            else:
                vals[col] = float(cell)
        rows.append(ResultRow(vals))
    return meta, rows
