"""Problem-file-driven command line front end.

Reads one problem file, dispatches the requested run mode, and writes
machine-readable artifacts into the output directory: report.json always,
field.csv for field-valued modes, table.csv for verification and estimate
modes, plus rendered PNG figures.  Exit codes: 0 success, 2 verification
failure, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import hjb, plots, simulate
from .generator import TestFunction
from .grids import Field, GridError
from .hjb import SchemeError
from .levy import (UncertaintySet, ValidationError, symbol_decay_check,
                   tightness_report)
from .oracle import OracleError, fft_semigroup
from .problem import MODES, ProblemError, ProblemSpec, parse_problem
from .report import RunReport, write_field_csv, write_report_json, write_table_csv
from .simulate import SimConfig, SimulationError

__all__ = ["main", "run"]


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _grid_meta(spec: ProblemSpec) -> dict:
    return {"dim": spec.grid.dim, "half_width": spec.grid.half_width,
            "points": spec.grid.points}


def _sim_config(run: dict, horizon: float) -> SimConfig:
    return SimConfig(delta=run["delta"], horizon=horizon, n_paths=run["n_paths"],
                     seed=run["seed"], eps=run["eps"], chunk=run["chunk"],
                     rate_delta_cap=run["rate_delta_cap"])


def _constant_member(spec: ProblemSpec, label: str | None = None):
    labels = spec.uncertainty.labels
    label = label or spec.run.get("alpha") or labels[0]
    fld = spec.uncertainty.fields[labels.index(label)]
    if fld.structure != "constant":
        raise SimulationError(f"member {label!r} must have constant coefficients"
                              " for this mode")
    return label, fld.triplet_at(np.zeros(spec.grid.dim)), fld


def _initial_values(spec: ProblemSpec) -> np.ndarray:
    if isinstance(spec.initial, Field):
        return np.asarray(spec.initial.values)
    return Field.sample(spec.grid, spec.initial.value).values


def _require_test_function(spec: ProblemSpec) -> TestFunction:
    if not isinstance(spec.initial, TestFunction):
        raise SimulationError("this mode needs a smooth named initial family,"
                              " not tabulated data")
    return spec.initial


def _run_solve(spec: ProblemSpec, out: Path, quiet: bool):
    field, rep = hjb.solve(spec.initial, spec.uncertainty, spec.scheme, spec.grid)
    write_field_csv(out / "field.csv", spec.grid, field.values)
    plots.plot_field(out / "field.png", spec.grid,
                     {"initial": _initial_values(spec), "final": field.values},
                     title=f"worst-case evolution to T={spec.scheme.final_time:g}")
    _say(quiet, f"solve: {rep.n_steps} steps of dt={rep.dt:.3e},"
                f" sup-norm {field.sup_norm():.6g}")
    return 0, rep


def _run_dp(spec: ProblemSpec, out: Path, quiet: bool):
    cfg = _sim_config(spec.run, spec.run["horizon"])
    info: dict = {}
    field = simulate.dp_sup_semigroup(spec.uncertainty, spec.initial, spec.grid,
                                      cfg, gh_nodes=spec.run["gh_nodes"], info=info)
    rep = RunReport(mode="dp", dt=info["delta"], n_steps=info["n_steps"],
                    seed=cfg.seed, eps=cfg.eps, grid=_grid_meta(spec),
                    argmax_hist=info.get("argmax_hist", {}),
                    metrics={"methods": info.get("methods", {})})
    write_field_csv(out / "field.csv", spec.grid, field.values)
    plots.plot_field(out / "field.png", spec.grid,
                     {"initial": _initial_values(spec), "final": field.values},
                     title=f"dynamic-programming value, T={cfg.horizon:g}")
    _say(quiet, f"dp: {info['n_steps']} stages of delta={info['delta']:.3e}")
    return 0, rep


def _run_simulate(spec: ProblemSpec, out: Path, quiet: bool):
    label, triplet, _ = _constant_member(spec)
    cfg = _sim_config(spec.run, spec.run["horizon"])
    x0 = np.array(spec.run["x0"])
    est = simulate.estimate_semigroup_single(triplet, spec.initial, x0, cfg)
    columns = ["alpha", "horizon", "x0", "value", "std_error", "n_paths"]
    rows = [{"alpha": label, "horizon": cfg.horizon, "x0": repr(spec.run["x0"]),
             "value": est.value, "std_error": est.std_error, "n_paths": est.n}]
    write_table_csv(out / "table.csv", columns, rows)
    plots.plot_residuals(out / "estimate.png", [label], [est.value],
                         [est.std_error], title="plain-expectation estimate",
                         ylabel="value")
    rep = RunReport(mode="simulate", seed=cfg.seed, eps=cfg.eps,
                    grid=_grid_meta(spec),
                    metrics={"alpha": label, "value": est.value,
                             "std_error": est.std_error, "n_paths": est.n})
    _say(quiet, f"simulate[{label}]: {est.value:.6g} +- {est.std_error:.2g}"
                f" ({est.n} paths)")
    return 0, rep


def _run_verify_max_ineq(spec: ProblemSpec, out: Path, quiet: bool):
    x0 = np.array(spec.run["x0"])
    rows: list[dict] = []
    info: dict = {}
    for t in spec.run["times"]:
        cfg = _sim_config(spec.run, t)
        rows.extend(simulate.maximal_inequality_check(
            spec.uncertainty, x0, t, spec.run["radii"], cfg, info=info))
    passed = all(r["passed"] for r in rows)
    columns = ["t", "r", "emp_prob", "wilson_upper", "bound", "n_paths",
               "n_strategies", "passed"]
    write_table_csv(out / "table.csv", columns, rows)
    plots.plot_bound_check(out / "bounds.png", rows,
                           title="exceedance probability vs envelope")
    for r in rows:
        _say(quiet, f"  t={r['t']:g} r={r['r']:g}: upper {r['wilson_upper']:.3e}"
                    f" vs bound {r['bound']:.3e} ->"
                    f" {'pass' if r['passed'] else 'FAIL'}")
    rep = RunReport(mode="verify-max-ineq", seed=spec.run["seed"],
                    eps=spec.run["eps"], grid=_grid_meta(spec),
                    verification_passed=passed,
                    metrics={"c": info.get("c"), "rows": len(rows)})
    return (0 if passed else 2), rep


def _run_verify_dynkin(spec: ProblemSpec, out: Path, quiet: bool):
    f = _require_test_function(spec)
    x0 = np.array(spec.run["x0"])
    horizon = spec.run["horizon"]
    ball = spec.run["ball_radius"]
    rows = []
    labels, residuals, bars = [], [], []
    passed = True
    for fld in spec.uncertainty.fields:
        label, triplet, _ = _constant_member(spec, fld.label)
        cfg = _sim_config(spec.run, horizon)
        info: dict = {}
        est = simulate.dynkin_residual(triplet, f, x0, horizon, ball, cfg, info=info)
        threshold = 3.0 * est.std_error + 5e-3
        ok = abs(est.value) <= threshold
        passed = passed and ok
        rows.append({"alpha": label, "residual": est.value,
                     "std_error": est.std_error,
                     "bias_bound": info["bias_bound"],
                     "exit_fraction": info["exit_fraction"],
                     "threshold": threshold, "passed": ok})
        labels.append(label)
        residuals.append(est.value)
        bars.append(3.0 * est.std_error)
        _say(quiet, f"  {label}: residual {est.value:+.3e}"
                    f" (threshold {threshold:.3e}) ->"
                    f" {'pass' if ok else 'FAIL'}")
    columns = ["alpha", "residual", "std_error", "bias_bound", "exit_fraction",
               "threshold", "passed"]
    write_table_csv(out / "table.csv", columns, rows)
    plots.plot_residuals(out / "residuals.png", labels, residuals, bars,
                         title="stopped-process residuals")
    rep = RunReport(mode="verify-dynkin", seed=spec.run["seed"],
                    eps=spec.run["eps"], grid=_grid_meta(spec),
                    verification_passed=passed, metrics={"rows": len(rows)})
    return (0 if passed else 2), rep


def _run_oracle_compare(spec: ProblemSpec, out: Path, quiet: bool):
    label, triplet, fld = _constant_member(spec)
    sub = UncertaintySet((fld,), spec.uncertainty.trunc)
    field, rep = hjb.solve(spec.initial, sub, spec.scheme, spec.grid)
    start = Field(spec.grid, _initial_values(spec))
    reference, residue = fft_semigroup(triplet, start, spec.scheme.final_time)
    err = np.asarray(field.values) - np.asarray(reference.values)
    max_err = float(np.max(np.abs(err)))
    l2_err = float(np.sqrt(np.mean(np.square(err))))
    columns = ["alpha", "final_time", "max_err", "l2_err", "imag_residue"]
    write_table_csv(out / "table.csv", columns,
                    [{"alpha": label, "final_time": spec.scheme.final_time,
                      "max_err": max_err, "l2_err": l2_err,
                      "imag_residue": residue}])
    write_field_csv(out / "field.csv", spec.grid, field.values)
    plots.plot_field(out / "compare.png", spec.grid,
                     {"scheme": field.values, "spectral reference": reference.values},
                     title=f"scheme vs reference, max err {max_err:.2e}")
    rep.mode = "oracle-compare"
    rep.metrics.update({"alpha": label, "max_err": max_err, "l2_err": l2_err,
                        "imag_residue": residue})
    _say(quiet, f"oracle-compare[{label}]: max err {max_err:.3e},"
                f" l2 err {l2_err:.3e}")
    return 0, rep


def _run_symbol_report(spec: ProblemSpec, out: Path, quiet: bool):
    x0 = np.array(spec.run["x0"])
    radii = (np.asarray(spec.run["radii"], dtype=float)
             if spec.run.get("radii_user") else np.geomspace(1.0, 1e-2, 9))
    rads, sups = symbol_decay_check(spec.uncertainty, x0, radii)
    order = np.argsort(rads)[::-1]
    rads, sups = rads[order], sups[order]
    ratio = float(sups[-1] / sups[0]) if sups[0] > 0 else 0.0
    slack = 1e-12 * (float(np.max(sups)) + 1.0)
    nonincreasing = bool(np.all(np.diff(sups) <= slack))
    tight = tightness_report(spec.uncertainty)
    rows = [{"radius": float(r), "symbol_sup": float(s)} for r, s in zip(rads, sups)]
    write_table_csv(out / "table.csv", ["radius", "symbol_sup"], rows)
    plots.plot_series(out / "decay.png", rads, {"symbol sup": np.maximum(sups, 1e-300)},
                      title="small-ball symbol decay", xlabel="radius",
                      ylabel="sup over the family", logx=True, logy=True)
    rep = RunReport(mode="symbol-report", seed=spec.run["seed"],
                    grid=_grid_meta(spec),
                    metrics={"final_over_initial": ratio,
                             "nonincreasing": nonincreasing,
                             "small_jump_ok": tight.small_jump_ok,
                             "large_jump_ok": tight.large_jump_ok})
    _say(quiet, f"symbol-report: decay ratio {ratio:.3e},"
                f" nonincreasing={nonincreasing}")
    return 0, rep


_HANDLERS = {
    "solve": _run_solve,
    "simulate": _run_simulate,
    "dp": _run_dp,
    "verify-max-ineq": _run_verify_max_ineq,
    "verify-dynkin": _run_verify_dynkin,
    "oracle-compare": _run_oracle_compare,
    "symbol-report": _run_symbol_report,
}


def run(spec: ProblemSpec, out_dir, quiet: bool = False) -> int:
    """Dispatch one parsed problem; writes artifacts, returns the exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    code, rep = _HANDLERS[spec.mode](spec, out, quiet)
    rep.elapsed_s = time.perf_counter() - started
    write_report_json(out / "report.json", rep)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sublevy",
        description="Worst-case jump-diffusion runs driven by a problem file.")
    parser.add_argument("--spec", required=True, help="path to the problem file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--mode", default=None, choices=MODES,
                        help="run-mode override")
    parser.add_argument("--quiet", action="store_true", help="suppress progress text")
    args = parser.parse_args(argv)

    try:
        text = Path(args.spec).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        spec = parse_problem(text)
        if args.seed is not None:
            if not (0 <= args.seed < 1 << 64):
                raise ProblemError("run", "seed", "seed must fit in 64 bits")
            spec.run["seed"] = args.seed
            spec.canonical["run"]["seed"] = args.seed
        if args.mode is not None:
            spec.mode = args.mode
            spec.run["mode"] = args.mode
            spec.canonical["run"]["mode"] = args.mode
        code = run(spec, args.out, quiet=args.quiet)
    except (ProblemError, ValidationError, SimulationError, SchemeError,
            OracleError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if code == 0:
        _say(args.quiet, "ok")
    else:
        print("verification failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
