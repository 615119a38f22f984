"""Solution records, branch files and CSV tables.

Numbers are written with 17 significant digits so that every double round-trips
exactly; non-finite values become ``null``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .flows import VorticitySpec
from .operator import State, diagnostics
from .problem import Problem
from .spectral import GridSpec, PeriodicEvenFunction, StripField

__all__ = [
    "RecordError",
    "dumps",
    "solution_record",
    "state_from_record",
    "write_solution",
    "read_records",
    "write_branch",
    "read_branch",
    "write_csv",
    "SUMMARY_COLUMNS",
]

SUMMARY_COLUMNS = ("step", "lambda", "amplitude", "Q", "min_K2", "min_depth", "max_curvature", "bernoulli_residual")


class RecordError(ValueError):
    """Malformed solution or branch file."""


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(obj) -> str:
    """Deterministic single-line JSON with 17-digit floats."""
    return _fmt(obj)


def solution_record(problem: Problem, state: State, diag: dict | None = None, **extra) -> dict:
    grid = problem.grid
    if diag is None:
        diag = diagnostics(problem, state).to_dict()
    rec = {
        "lambda": state.lam,
        "L": grid.L,
        "h": grid.h,
        "g": problem.g,
        "sigma": problem.sigma,
        "vorticity": str(problem.vorticity),
        "N": grid.N,
        "M": grid.M,
        "w_coeffs": np.asarray(state.w.coeffs),
        "phi_values": np.asarray(state.phi.values),
        "diagnostics": diag,
    }
    rec.update(extra)
    return rec


def _need(rec: dict, key: str, where: str):
    if key not in rec:
        raise RecordError(f"{where}: missing field {key!r}")
    return rec[key]


def state_from_record(rec: dict, where: str = "record") -> tuple[Problem, State]:
    try:
        grid = GridSpec(float(_need(rec, "L", where)), float(_need(rec, "h", where)),
                        int(_need(rec, "N", where)), int(_need(rec, "M", where)))
        problem = Problem(grid, VorticitySpec.parse(_need(rec, "vorticity", where)),
                          float(_need(rec, "g", where)), float(_need(rec, "sigma", where)))
        w = PeriodicEvenFunction(grid, np.asarray(_need(rec, "w_coeffs", where), dtype=float))
        phi = StripField(grid, np.asarray(_need(rec, "phi_values", where), dtype=float))
        lam = _need(rec, "lambda", where)
        if lam is None:
            raise RecordError(f"{where}: lambda is not finite")
        return problem, State(float(lam), w, phi)
    except RecordError:
        raise
    except (TypeError, ValueError) as exc:
        raise RecordError(f"{where}: {exc}") from exc


def write_solution(path, problem: Problem, state: State) -> Path:
    path = Path(path)
    path.write_text(dumps(solution_record(problem, state)) + "\n")
    return path


def read_records(path) -> list[tuple[int, dict]]:
    """All JSON objects in a file (a single record or line-delimited), with line numbers."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise RecordError(f"{path}: {exc.strerror}") from exc
    out = []
    lines = text.splitlines()
    nonblank = [ln for ln in lines if ln.strip()]
    if len(nonblank) > 1 and not all(ln.lstrip().startswith("{") for ln in nonblank):
        # pretty-printed single document
        try:
            return [(1, json.loads(text))]
        except json.JSONDecodeError as exc:
            raise RecordError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    for i, ln in enumerate(lines, 1):
        if not ln.strip():
            continue
        try:
            obj = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise RecordError(f"{path}:{i}: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise RecordError(f"{path}:{i}: expected a JSON object")
        out.append((i, obj))
    if not out:
        raise RecordError(f"{path}: no records")
    return out


def write_branch(path, problem: Problem, branch) -> Path:
    """Line-delimited branch file with a trailer record carrying the termination label."""
    path = Path(path)
    o = branch.origin
    with path.open("w") as fh:
        for p in branch.points:
            rec = solution_record(problem, p.state, p.diagnostics.to_dict(), step=p.step, ds=p.ds, arclength=p.arclength)
            fh.write(dumps(rec) + "\n")
        trailer = {
            "trailer": True,
            "termination": branch.termination,
            "detail": branch.detail,
            "origin": {"lambda0": o.lambda0, "k0": o.k0, "d_lambda": o.d_lambda, "kernel_dim": o.kernel_dim},
            "n_points": len(branch.points),
        }
        fh.write(dumps(trailer) + "\n")
    return path


def read_branch(path):
    """Returns ``(points, trailer)`` with ``points`` a list of ``(problem, state, record)``."""
    pts, trailer = [], None
    for line, rec in read_records(path):
        if rec.get("trailer"):
            trailer = rec
            continue
        problem, state = state_from_record(rec, f"{path}:{line}")
        pts.append((problem, state, rec))
    if trailer is None:
        raise RecordError(f"{path}: missing trailer record")
    return pts, trailer


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for row in rows:
            wr.writerow([_csv_cell(v) for v in row])
    return path


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return v
