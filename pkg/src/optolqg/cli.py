"""Command-line interface: point runs, sweeps, optimization, trajectories.

Configuration comes from a single TOML file (see configs/ in the
repository) with individual fields overridable by flags; rates are angular
(rad/s) unless --cyclic-hz is given, which multiplies omega_m, kappa, g
and g0 by 2 pi on input.

Exit codes: 0 success, 2 configuration error, 3 solver failure in strict
mode.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .control import CostKind, CostSpec, synthesize
from .model import DissipationModel, PhysicalParams, build_matrices, probe_amplitude
from .solvers import SolverError, solve_filter_are
from .sweep import (
    COLUMNS,
    Objective,
    ResultRow,
    SweepConfig,
    optimize_angle,
    optimize_coupling,
    read_rows,
    run_point,
    run_sweep,
    write_rows,
)
from .trajectory import (
    auto_config,
    ensemble_excess_covariance,
    save_records,
    simulate_ensemble,
)

DEFAULT_PARAMS = dict(omega_m=1e6, q_m=1e8, kappa=1e8, g=1e5, eta=1.0,
                      theta=math.pi / 2, temperature=300.0, model="nonrwa")
DEFAULT_COST = dict(kind="cooling", p=1e12, q=1.0)


class ConfigError(Exception):
    pass


def _load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc


def _grid_axis(spec):
    if isinstance(spec, dict):
        for key in ("start", "stop", "num"):
            if key not in spec:
                raise ConfigError(f"grid table needs '{key}'")
        num = int(spec["num"])
        if spec.get("spacing", "linear") == "log":
            return list(np.geomspace(spec["start"], spec["stop"], num))
        return list(np.linspace(spec["start"], spec["stop"], num))
    return list(spec)


def build_inputs(args):
    """Merge TOML config, defaults and flag overrides."""
    cfg = _load_toml(args.config) if args.config else {}
    pvals = {**DEFAULT_PARAMS, **cfg.get("params", {})}
    cvals = {**DEFAULT_COST, **cfg.get("cost", {})}
    for name in ("omega_m", "q_m", "kappa", "g", "eta", "theta", "temperature"):
        flag = getattr(args, name, None)
        if flag is not None:
            pvals[name] = flag
    if getattr(args, "model", None):
        pvals["model"] = args.model
    for name in ("kind", "p", "q", "nu"):
        flag = getattr(args, name if name != "kind" else "cost_kind", None)
        if flag is not None:
            cvals[name] = flag
    if getattr(args, "p_over_q", None) is not None:
        cvals["p"] = args.p_over_q * cvals.get("q", 1.0)
    if getattr(args, "cyclic_hz", False):
        # only omega_m, kappa (and g0) are ever quoted with an explicit
        # 2 pi; coupling values are consumed verbatim
        for name in ("omega_m", "kappa"):
            pvals[name] = 2.0 * math.pi * pvals[name]
    try:
        params = PhysicalParams(
            omega_m=float(pvals["omega_m"]), q_m=float(pvals["q_m"]),
            kappa=float(pvals["kappa"]), g=float(pvals["g"]),
            eta=float(pvals["eta"]), theta=float(pvals["theta"]),
            temperature=float(pvals["temperature"]),
            model=DissipationModel(pvals["model"]))
        spec = CostSpec(kind=CostKind(cvals["kind"]), p=float(cvals["p"]),
                        q=float(cvals["q"]),
                        nu=(float(cvals["nu"]) if cvals.get("nu") is not None
                            else None))
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, params, spec


def _print_row(row: ResultRow, extras=None):
    for col in COLUMNS:
        print(f"{col} = {row.values[col]}")
    for key, value in (extras or {}).items():
        print(f"{key} = {value}")


def cmd_point(args) -> int:
    _, params, spec = build_inputs(args)
    row = run_point(params, spec)
    extras = {}
    if args.g0 is not None:
        g0 = args.g0 * (2.0 * math.pi if args.cyclic_hz else 1.0)
        eps = probe_amplitude(params.g, g0, params.kappa)
        extras["eps_probe"] = eps
        if row.ok:
            extras["sigma_fb_over_eps_probe"] = row["sigma_fb"] / eps
    if args.output:
        write_rows(args.output, [row],
                   {"schema_version": 1, "artifact_version": __version__,
                    "command": "point"}, fmt=args.format)
    else:
        _print_row(row, extras)
    if not row.ok:
        print(f"error: {row['error']}", file=sys.stderr)
        return 3 if args.strict else 0
    return 0


def cmd_optimize(args) -> int:
    _, params, spec = build_inputs(args)
    objective = Objective(args.objective)
    try:
        if args.which == "g":
            res = optimize_coupling(params, spec, objective)
        else:
            res = optimize_angle(params, spec, args.which, objective)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3 if args.strict else 0
    print(f"{args.which}_opt = {res.angle!r}")
    print(f"objective_value = {res.value!r}")
    for angle, value in res.alternates:
        print(f"alternate = {angle!r} {value!r}")
    return 0


def cmd_sweep(args) -> int:
    cfg, params, spec = build_inputs(args)
    sweep_cfg = cfg.get("sweep", {})
    grids = {name: _grid_axis(axis)
             for name, axis in sweep_cfg.get("grids", {}).items()}
    try:
        sc = SweepConfig(
            base=params, spec=spec, grids=grids,
            objective=Objective(sweep_cfg.get("objective",
                                              "unconditional_phonon")),
            optimize=tuple(sweep_cfg.get("optimize", ())),
            output=args.output or sweep_cfg.get("output", "sweep.csv"),
            fmt=args.format or sweep_cfg.get("format", "csv"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows, failed = run_sweep(sc, workers=args.workers)
    print(f"wrote {len(rows)} rows to {sc.output} ({failed} failed)")
    if failed and args.strict:
        return 3
    return 0


def cmd_trajectory(args) -> int:
    cfg, params, spec = build_inputs(args)
    tcfg = cfg.get("trajectory", {})
    ensemble = args.ensemble or int(tcfg.get("ensemble", 100))
    seed = args.seed if args.seed is not None else int(tcfg.get("seed", 0))
    record_every = args.record_every or tcfg.get("record_every")
    m = build_matrices(params)
    try:
        if args.no_feedback:
            v_c, _ = solve_filter_are(m)
            gain = None
        else:
            sol = synthesize(params, spec)
            v_c, gain = sol.v_conditional, sol.k
        tc = auto_config(
            m, gain, ensemble=ensemble, seed=seed,
            sample_relaxations=float(tcfg.get("sample_relaxations", 10.0)),
            feedback_enabled=not args.no_feedback,
            record_every=int(record_every) if record_every else None)
        records = simulate_ensemble(m, v_c, gain, tc)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3 if args.strict else 0
    summary = {
        "ensemble": ensemble, "seed": seed, "dt": tc.dt, "steps": tc.steps,
        "burn_in": tc.burn_in, "feedback": not args.no_feedback,
    }
    if ensemble >= 100:
        est, se = ensemble_excess_covariance(records)
        summary["excess_covariance"] = est.tolist()
        summary["excess_covariance_se"] = se.tolist()
    if args.dump:
        save_records(args.dump, records)
        summary["dump"] = args.dump
    out = json.dumps(summary, indent=1)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    else:
        print(out)
    return 0


def cmd_check(args) -> int:
    meta, rows = read_rows(args.results)
    bad = []
    for i, row in enumerate(rows):
        if row.values.get("error"):
            continue  # flagged failure, not a silent unphysical row
        if not (row.values.get("physical_conditional")
                and row.values.get("physical_unconditional")):
            bad.append(i)
        elif min(row.values.get("margin_conditional", 0.0),
                 row.values.get("margin_unconditional", 0.0)) < -1e-10:
            bad.append(i)
    n_err = sum(1 for r in rows if r.values.get("error"))
    print(f"{len(rows)} rows, {n_err} flagged errors, "
          f"{len(bad)} physicality failures")
    if bad:
        for i in bad[:20]:
            print(f"  row {i}: margins "
                  f"{rows[i].values.get('margin_conditional')} / "
                  f"{rows[i].values.get('margin_unconditional')}")
        return 3
    return 0


def _add_common(p):
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--cyclic-hz", action="store_true",
                   help="interpret omega_m, kappa (and g0) as cyclic Hz")
    p.add_argument("--strict", action="store_true",
                   help="exit 3 on solver failure")
    for name in ("omega_m", "q_m", "kappa", "g", "eta", "theta",
                 "temperature", "p", "q", "nu", "p_over_q"):
        p.add_argument(f"--{name.replace('_', '-')}", type=float, default=None)
    p.add_argument("--model", choices=[m.value for m in DissipationModel],
                   default=None)
    p.add_argument("--cost-kind", choices=[k.value for k in CostKind],
                   default=None)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optolqg",
        description="Steady states of a measured, feedback-controlled "
                    "optomechanical oscillator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("point", help="evaluate one parameter point")
    _add_common(p)
    p.add_argument("--g0", type=float, default=None,
                   help="single-photon coupling, enables probe-amplitude output")
    p.add_argument("--output", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(fn=cmd_point)

    p = sub.add_parser("sweep", help="run a grid sweep from the config")
    _add_common(p)
    p.add_argument("--output", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("optimize", help="optimize theta, nu or g at a point")
    _add_common(p)
    p.add_argument("--which", choices=("theta", "nu", "g"), required=True)
    p.add_argument("--objective",
                   choices=[o.value for o in Objective],
                   default="unconditional_phonon")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("trajectory", help="simulate conditional-mean ensembles")
    _add_common(p)
    p.add_argument("--ensemble", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--record-every", type=int, default=None)
    p.add_argument("--no-feedback", action="store_true")
    p.add_argument("--dump", default=None, help="binary record dump path")
    p.add_argument("--output", default=None, help="JSON summary path")
    p.set_defaults(fn=cmd_trajectory)

    p = sub.add_parser("check", help="physicality audit of a results file")
    p.add_argument("results")
    p.set_defaults(fn=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
