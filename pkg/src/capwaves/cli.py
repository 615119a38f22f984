"""Command-line front end.

Configuration is one JSON document; flags override its keys and the
``CAPWAVES_OUTPUT_DIR`` environment variable overrides the output directory
of the config file (an explicit ``--output-dir`` wins over both).  Data files
are deterministic; run metadata goes to ``run_meta.json``.

Exit codes: 0 success, 2 invalid input, 3 empty result, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import platform
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .continuation import ContinuationConfig, NewtonFailure, run_branch
from .dispersion import ConsistencyError, dispersion_table, find_bifurcation_points
from .flows import TrivialFlowError, VorticitySpec, is_unidirectional
from .io import SUMMARY_COLUMNS, RecordError, dumps, read_records, state_from_record, write_branch, write_csv
from .operator import ConformalityError, diagnostics
from .problem import Problem
from .spectral import GridSpec, harmonic_residual

ENV_OUTPUT_DIR = "CAPWAVES_OUTPUT_DIR"

EXIT_OK, EXIT_INVALID, EXIT_EMPTY, EXIT_NUMERICAL = 0, 2, 3, 4

DEFAULTS = {
    "physical": {"L": 2.0 * math.pi, "h": 1.0, "g": 9.81, "sigma": 0.074},
    "vorticity": "constant:0",
    "grid": {"N": 64, "M": 200},
    "tolerances": {"flow_tol": 1e-12, "f_tol": 1e-8, "bernoulli_tol": 1e-5, "harmonic_tol": 1e-4, "mean_tol": 1e-13},
    "lambda_window": [0.5, 10.0],
    "n_lambda": 50,
    "k0": 1,
    "k_max": 5,
    "samples": 400,
    "root": 0,
    "continuation": {},
    "output_dir": "capwaves_out",
}


class InvalidInput(ValueError):
    pass


class EmptyResult(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidInput(message)


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInput(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise InvalidInput(f"{path}: config must be a JSON object")
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise InvalidInput(f"{path}: unknown config keys {sorted(unknown)}")
    for section in ("physical", "grid", "tolerances"):
        block = cfg.get(section, {})
        if not isinstance(block, dict):
            raise InvalidInput(f"{path}: {section} must be a JSON object")
        unknown = set(block) - set(DEFAULTS[section])
        if unknown:
            raise InvalidInput(f"{path}: unknown {section} keys {sorted(unknown)}")
    return cfg


_FLAG_KEYS = {
    "L": ("physical", "L"),
    "h": ("physical", "h"),
    "g": ("physical", "g"),
    "sigma": ("physical", "sigma"),
    "N": ("grid", "N"),
    "M": ("grid", "M"),
    "vorticity": ("vorticity",),
    "n_lambda": ("n_lambda",),
    "k0": ("k0",),
    "k_max": ("k_max",),
    "samples": ("samples",),
    "root": ("root",),
    "f_tol": ("tolerances", "f_tol"),
    "bernoulli_tol": ("tolerances", "bernoulli_tol"),
    "harmonic_tol": ("tolerances", "harmonic_tol"),
    "steps": ("continuation", "max_steps"),
    "ds0": ("continuation", "ds0"),
    "ds_max": ("continuation", "ds_max"),
    "s0": ("continuation", "s0"),
}


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        cfg = _merge(cfg, load_config(args.config))
    env = os.environ.get(ENV_OUTPUT_DIR)
    if env:
        cfg["output_dir"] = env
    for name, keys in _FLAG_KEYS.items():
        val = getattr(args, name, None)
        if val is None:
            continue
        d = cfg
        for k in keys[:-1]:
            d = d.setdefault(k, {})
        d[keys[-1]] = val
    lo, hi = getattr(args, "lambda_min", None), getattr(args, "lambda_max", None)
    if lo is not None or hi is not None:
        w = list(cfg["lambda_window"])
        cfg["lambda_window"] = [w[0] if lo is None else lo, w[1] if hi is None else hi]
    if getattr(args, "output_dir", None):
        cfg["output_dir"] = args.output_dir
    return cfg


def build_problem(cfg: dict) -> Problem:
    ph, gr = cfg["physical"], cfg["grid"]
    for key in ("L", "h", "g", "sigma"):
        v = ph.get(key)
        if not isinstance(v, (int, float)) or not math.isfinite(v) or not v > 0:
            raise InvalidInput(f"physical.{key} must be a positive number, got {v!r}")
    grid = GridSpec(float(ph["L"]), float(ph["h"]), int(gr["N"]), int(gr["M"]))
    vort = VorticitySpec.parse(cfg["vorticity"])
    return Problem(grid, vort, float(ph["g"]), float(ph["sigma"]), float(cfg["tolerances"]["flow_tol"]))


def _window(cfg: dict, allow_zero: bool = False) -> tuple[float, float]:
    w = cfg["lambda_window"]
    if not (isinstance(w, (list, tuple)) and len(w) == 2):
        raise InvalidInput("lambda_window must be [lambda_min, lambda_max]")
    a, b = float(w[0]), float(w[1])
    if not a < b:
        raise InvalidInput("lambda_window must satisfy lambda_min < lambda_max")
    if not allow_zero and a <= 0.0 <= b:
        raise InvalidInput("lambda window must not contain 0")
    return a, b


def _continuation_config(cfg: dict) -> ContinuationConfig:
    block = dict(cfg.get("continuation") or {})
    names = {f.name for f in fields(ContinuationConfig)}
    unknown = set(block) - names
    if unknown:
        raise InvalidInput(f"unknown continuation keys {sorted(unknown)}")
    if "ds0" in block and "ds_max" not in block:
        block["ds_max"] = max(block["ds0"], ContinuationConfig.ds_max)
    return ContinuationConfig(**block)


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_meta(out: Path, command: str, cfg: dict, argv, files):
    meta = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created_unix": time.time(),
        "config": cfg,
        "files": sorted(str(f) for f in files),
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, default=str) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_trivial(cfg: dict, plots: bool = True) -> list[Path]:
    problem = build_problem(cfg)
    a, b = _window(cfg, allow_zero=True)
    lams = np.linspace(a, b, int(cfg["n_lambda"]))
    flows = [problem.flow(lam) for lam in lams]
    out = _outdir(cfg)
    files = [write_csv(out / "trivial.csv", ("lambda", "m", "psi_min", "unidirectional"),
                       [(f.lam, f.m, float(np.min(f.psi)), is_unidirectional(f)) for f in flows])]
    y = problem.grid.y
    cols = ["y"] + [f"psi[lambda={lam:.17g}]" for lam in lams]
    files.append(write_csv(out / "trivial_profiles.csv", cols,
                           [[y[j]] + [f.psi[j] for f in flows] for j in range(y.size)]))
    if plots:
        from .plotting import plot_trivial

        pick = np.unique(np.linspace(0, len(flows) - 1, min(5, len(flows))).astype(int))
        files.append(plot_trivial(out / "trivial.png", lams, [f.m for f in flows],
                                  [(flows[i].lam, flows[i].psi) for i in pick], y))
    return files


def cmd_dispersion(cfg: dict, plots: bool = True) -> list[Path]:
    problem = build_problem(cfg)
    a, b = _window(cfg)
    k_max = int(cfg["k_max"])
    if k_max < 1:
        raise InvalidInput("k_max must be >= 1")
    lams = np.linspace(a, b, int(cfg["n_lambda"]))
    rows = dispersion_table(problem, range(1, k_max + 1), lams)
    out = _outdir(cfg)
    files = [write_csv(out / "dispersion.csv", ("k", "lambda", "d_value", "in_spectrum", "branch_index"), rows)]
    if plots:
        from .plotting import plot_dispersion

        files.append(plot_dispersion(out / "dispersion.png", rows))
    roots = 0
    for k in range(1, k_max + 1):
        d = np.array([r[2] for r in rows if r[0] == k])
        ok = np.isfinite(d[:-1]) & np.isfinite(d[1:])
        roots += int(np.sum(ok & (d[:-1] * d[1:] <= 0)))
    if roots == 0:
        raise EmptyResult(f"no sign change of d in lambda window [{a}, {b}] for k=1..{k_max}")
    return files


def _roots(cfg: dict, problem: Problem):
    a, b = _window(cfg)
    k0 = int(cfg["k0"])
    if k0 < 1:
        raise InvalidInput("k0 must be >= 1")
    return find_bifurcation_points(k0, problem, (a, b), n_samples=int(cfg["samples"]))


def cmd_bifurcation_points(cfg: dict, plots: bool = True) -> list[Path]:
    problem = build_problem(cfg)
    pts = _roots(cfg, problem)
    out = _outdir(cfg)
    recs = [
        {"lambda0": p.lambda0, "k0": p.k0, "d_lambda": p.d_lambda, "kernel_dim": p.kernel_dim,
         "kernel_ks": list(p.kernel_ks), "closed_form_lambda": p.closed_form_lambda, "flag": p.flag}
        for p in pts
    ]
    path = out / "bifurcation_points.jsonl"
    path.write_text("".join(dumps(r) + "\n" for r in recs))
    files = [path, write_csv(out / "bifurcation_points.csv",
                             ("lambda0", "k0", "d_lambda", "kernel_dim", "closed_form_lambda", "flag"),
                             [(p.lambda0, p.k0, p.d_lambda, p.kernel_dim,
                               "" if p.closed_form_lambda is None else p.closed_form_lambda, p.flag or "")
                              for p in pts])]
    if not pts:
        raise EmptyResult("no bifurcation points in lambda window")
    return files


def cmd_continue(cfg: dict, plots: bool = True) -> list[Path]:
    problem = build_problem(cfg)
    ccfg = _continuation_config(cfg)
    pts = _roots(cfg, problem)
    if not pts:
        raise EmptyResult("no bifurcation points in lambda window")
    idx = int(cfg["root"])
    if not -len(pts) <= idx < len(pts):
        raise InvalidInput(f"root index {idx} out of range ({len(pts)} roots)")
    bp = pts[idx]
    branch = run_branch(problem, bp, ccfg)
    if not branch.points:
        raise NewtonFailure(f"{branch.termination}: {branch.detail}")
    out = _outdir(cfg)
    files = [write_branch(out / "branch.jsonl", problem, branch)]
    rows = []
    for p in branch.points:
        d = p.diagnostics
        rows.append((p.step, p.state.lam, d.amplitude, d.Q, d.min_K2, d.min_depth, d.max_curvature, d.bernoulli_residual))
    files.append(write_csv(out / "branch_summary.csv", SUMMARY_COLUMNS, rows))
    if plots:
        from .plotting import plot_branch

        files.append(plot_branch(out / "branch.png", problem, branch))
    print(f"termination: {branch.termination} ({len(branch.points)} points)")
    return files


def validate_record(rec: dict, cfg: dict, where: str) -> dict:
    problem, state = state_from_record(rec, where)
    d = diagnostics(problem, state)
    v = state.w + problem.grid.h
    tol = cfg["tolerances"]
    harm = harmonic_residual(v)
    checks = {
        "F_residual": (d.F_residual, tol["f_tol"]),
        "bernoulli_residual": (d.bernoulli_residual, tol["bernoulli_tol"]),
        "harmonic_residual": (harm, tol["harmonic_tol"]),
        "mean_R": (d.mean_R, tol["mean_tol"]),
    }
    passed = all(math.isfinite(val) and val <= t for val, t in checks.values())
    return {"where": where, "lambda": state.lam, "passed": passed,
            "checks": {k: {"value": v_, "threshold": t} for k, (v_, t) in checks.items()},
            "diagnostics": d.to_dict()}


def cmd_validate(cfg: dict, path, plots: bool = True) -> tuple[list[Path], bool]:
    reports = []
    for line, rec in read_records(path):
        if rec.get("trailer"):
            continue
        reports.append(validate_record(rec, cfg, f"{path}:{line}"))
    if not reports:
        raise EmptyResult(f"{path}: no solution records")
    ok = all(r["passed"] for r in reports)
    out = _outdir(cfg)
    rp = out / "validate_report.json"
    rp.write_text(dumps({"file": str(path), "passed": ok, "records": reports}) + "\n")
    for r in reports:
        c = r["checks"]
        print(f"{r['where']} {'PASS' if r['passed'] else 'FAIL'} "
              + " ".join(f"{k}={c[k]['value']:.3e}" for k in c))
    return [rp], ok


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--output-dir", help=f"output directory (env {ENV_OUTPUT_DIR}; default {DEFAULTS['output_dir']})")
    p.add_argument("--L", type=float, help="period length (default 2 pi)")
    p.add_argument("--h", type=float, help="conformal depth (default 1)")
    p.add_argument("--g", type=float, help="gravity (default 9.81)")
    p.add_argument("--sigma", type=float, help="surface tension coefficient (default 0.074)")
    p.add_argument("--vorticity", help="constant:G | affine:A,B | poly:c0,c1,... (default constant:0)")
    p.add_argument("--N", type=int, help="highest cosine mode (default 64)")
    p.add_argument("--M", type=int, help="vertical intervals (default 200)")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def _window_args(p: argparse.ArgumentParser):
    p.add_argument("--lambda-min", type=float, help="lower end of lambda window (default 0.5)")
    p.add_argument("--lambda-max", type=float, help="upper end of lambda window (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="capwaves", description="Capillary-gravity waves with vorticity on a strip.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("trivial", help="laminar flows and m(lambda) over a lambda grid")
    _common(p)
    _window_args(p)
    p.add_argument("--n-lambda", type=int, help="number of lambda samples (default 50)")

    p = sub.add_parser("dispersion", help="table of d(-(k nu)^2, lambda)")
    _common(p)
    _window_args(p)
    p.add_argument("--n-lambda", type=int, help="number of lambda samples (default 50)")
    p.add_argument("--k-max", type=int, help="largest wavenumber k (default 5)")

    p = sub.add_parser("bifurcation-points", help="roots of the dispersion relation for one k0")
    _common(p)
    _window_args(p)
    p.add_argument("--k0", type=int, help="wavenumber (default 1)")
    p.add_argument("--samples", type=int, help="lambda samples for bracketing (default 400)")

    p = sub.add_parser("continue", help="switch onto a branch and continue it")
    _common(p)
    _window_args(p)
    p.add_argument("--k0", type=int, help="wavenumber (default 1)")
    p.add_argument("--samples", type=int, help="lambda samples for bracketing (default 400)")
    p.add_argument("--root", type=int, help="index of the bifurcation point in the window (default 0)")
    p.add_argument("--steps", type=int, help="maximum continuation steps (default 40)")
    p.add_argument("--ds0", type=float, help="initial arclength step (default 0.02)")
    p.add_argument("--ds-max", type=float, help="largest arclength step (default 0.2)")
    p.add_argument("--s0", type=float, help="branch-switching amplitude (default 0.01)")

    p = sub.add_parser("validate", help="check residuals of stored solution records")
    _common(p)
    p.add_argument("path", help="solution or branch file")
    p.add_argument("--f-tol", type=float, help="threshold on sup|F| (default 1e-8)")
    p.add_argument("--bernoulli-tol", type=float, help="threshold on Bernoulli residual (default 1e-5)")
    p.add_argument("--harmonic-tol", type=float, help="threshold on discrete Laplacian of V (default 1e-4)")
    return parser


def _fail(code: int, kind: str, msg) -> int:
    text = " ".join(str(msg).split())
    print(f"capwaves: {kind}: {text}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise InvalidInput("missing subcommand (trivial, dispersion, bifurcation-points, continue, validate)")
        cfg = resolve_config(args)
        plots = not args.no_plots
        status = EXIT_OK
        if args.command == "validate":
            files, ok = cmd_validate(cfg, args.path, plots)
            if not ok:
                status = _fail(EXIT_NUMERICAL, "validation_failed", "residuals above thresholds")
        else:
            cmd = {"trivial": cmd_trivial, "dispersion": cmd_dispersion,
                   "bifurcation-points": cmd_bifurcation_points, "continue": cmd_continue}[args.command]
            files = cmd(cfg, plots)
        _write_meta(_outdir(cfg), args.command, cfg, argv, files)
        return status
    except EmptyResult as exc:
        return _fail(EXIT_EMPTY, "empty_result", exc)
    except RecordError as exc:
        return _fail(EXIT_INVALID, "parse_error", exc)
    except (TrivialFlowError, NewtonFailure, ConsistencyError, ConformalityError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical_failure", exc)
    except (InvalidInput, ValueError, TypeError, KeyError) as exc:
        return _fail(EXIT_INVALID, "invalid_input", exc)
    except RuntimeError as exc:
        return _fail(EXIT_NUMERICAL, "numerical_failure", exc)


if __name__ == "__main__":
    sys.exit(main())
