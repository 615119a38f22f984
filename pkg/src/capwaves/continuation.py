"""Newton correction, branch switching and pseudo-arclength continuation.

The unknown is ``U = (u, lam)`` with ``u`` the packed (w, phi) vector.  Linear
systems are solved matrix-free with GMRES: Jacobian-vector products are
forward differences of F at fixed lambda, ``F_lam`` is one central difference
per iteration, and the preconditioner is the block-diagonal Jacobian at the
laminar state with the current lambda.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .dispersion import BifurcationPoint
from .linearization import TrivialPreconditioner, kernel_element
from .operator import ConformalityError, Diagnostics, State, F_arrays, diagnostics, packed_size, unpack
from .problem import Problem

__all__ = [
    "ContinuationConfig",
    "BranchPoint",
    "Branch",
    "NewtonFailure",
    "ArclengthConstraint",
    "PinConstraint",
    "newton_correct",
    "switch_branch",
    "run_branch",
    "retrace",
    "TERMINATIONS",
]

log = logging.getLogger(__name__)

TERMINATIONS = (
    "max_steps",
    "lambda_unbounded",
    "amplitude_unbounded",
    "vorticity_Lp_unbounded",
    "returned_to_trivial",
    "conformality_degeneracy",
    "self_intersection",
    "bed_contact",
    "newton_failure",
    "resolution_limit",
)


@dataclass
class ContinuationConfig:
    ds0: float = 0.02
    ds_min: float = 1e-5
    ds_max: float = 0.2
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    max_steps: int = 40
    min_K2_stop: float = 1e-4
    min_depth_stop: float | None = None  # default 1e-3 h
    max_curvature_stop: float = 1e3
    lambda_bound: float = 1e3
    amplitude_bound: float = 1e2
    vorticity_Lp_bound: float = 1e6
    tail_tol: float = 1e-10
    s0: float = 1e-2
    grow: float = 1.3
    fast_iters: int = 3

    def __post_init__(self):
        if not (0 < self.ds_min <= self.ds0 <= self.ds_max):
            raise ValueError("need 0 < ds_min <= ds0 <= ds_max")
        if self.newton_tol <= 0 or self.newton_max_iter < 1 or self.max_steps < 1:
            raise ValueError("newton_tol, newton_max_iter and max_steps must be positive")


class NewtonFailure(RuntimeError):
    def __init__(self, message: str, residual: float = math.nan, conformality: bool = False):
        super().__init__(message)
        self.residual = residual
        self.conformality = conformality


@dataclass
class ArclengthConstraint:
    """Keller normalisation ``tangent . (U - base) = ds``."""

    base: np.ndarray
    tangent: np.ndarray
    ds: float

    def value(self, U):
        return float(self.tangent @ (U - self.base) - self.ds)

    def gradient(self, n):
        return self.tangent


@dataclass
class PinConstraint:
    """Fix one packed coordinate (used to pin the k0-th cosine coefficient of w)."""

    index: int
    target: float

    def value(self, U):
        return float(U[self.index] - self.target)

    def gradient(self, n):
        g = np.zeros(n)
        g[self.index] = 1.0
        return g


@dataclass(eq=False)
class BranchPoint:
    step: int
    state: State
    ds: float
    arclength: float
    diagnostics: Diagnostics
    newton_iterations: int
    tangent: np.ndarray | None = field(default=None, repr=False)

    @property
    def U(self) -> np.ndarray:
        return np.append(self.state.packed(), self.state.lam)


@dataclass(eq=False)
class Branch:
    origin: BifurcationPoint
    points: list = field(default_factory=list)
    termination: str = "max_steps"
    detail: str = ""
    config: ContinuationConfig | None = None


# ---------------------------------------------------------------------------
# Newton


def _solve_bordered(Jv, F_lam, cgrad, rhs, prec, rtol):
    """GMRES on ``[[J, F_lam], [c_u, c_lam]]``; the preconditioner is the exact
    block inverse with ``J`` replaced by its laminar approximation."""
    n = F_lam.size
    cu, cl = cgrad[:n], cgrad[n]
    Pb = prec.solve(F_lam)
    denom = cl - cu @ Pb
    if abs(denom) < 1e-14:
        denom = 1e-14 if denom >= 0 else -1e-14

    def mv(x):
        return np.append(Jv(x[:n]) + F_lam * x[n], cu @ x[:n] + cl * x[n])

    def pc(r):
        a = prec.solve(r[:n])
        dl = (r[n] - cu @ a) / denom
        return np.append(a - Pb * dl, dl)

    A = LinearOperator((n + 1, n + 1), matvec=mv, dtype=float)
    Mop = LinearOperator((n + 1, n + 1), matvec=pc, dtype=float)
    x, info = gmres(A, rhs, M=Mop, rtol=rtol, atol=0.0, restart=60, maxiter=10)
    return x, info


def _solve_fixed(Jv, n, rhs, prec, rtol):
    A = LinearOperator((n, n), matvec=Jv, dtype=float)
    Mop = LinearOperator((n, n), matvec=prec.solve, dtype=float)
    return gmres(A, rhs, M=Mop, rtol=rtol, atol=0.0, restart=60, maxiter=10)


def newton_correct(problem: Problem, guess: State, constraint=None, config: ContinuationConfig | None = None,
                   prec: TrivialPreconditioner | None = None, polish: bool = True):
    """Damped inexact Newton for ``F = 0``.

    With ``constraint=None`` lambda is frozen; otherwise lambda is an unknown and
    the scalar constraint closes the system.  Returns ``(state, info)`` where
    ``info`` holds the residual history and iteration count.
    """
    cfg = config or ContinuationConfig()
    grid = problem.grid
    n = packed_size(grid)
    u = guess.packed()
    lam = guess.lam
    free = constraint is not None
    prec = prec or TrivialPreconditioner(problem, lam)

    def G(u, lam):
        F = F_arrays(problem, lam, *unpack(u, grid))
        if free:
            return np.append(F, constraint.value(np.append(u, lam)))
        return F

    def res(Gv):
        return float(np.max(np.abs(Gv)))

    try:
        Gk = G(u, lam)
    except ConformalityError as exc:
        raise NewtonFailure(str(exc), conformality=True) from exc
    history = [res(Gk)]
    it = 0
    polished = False
    while True:
        r = history[-1]
        if r <= cfg.newton_tol:
            if not polish or polished or r <= 1e-3 * cfg.newton_tol:
                break
            polished = True
        if it >= cfg.newton_max_iter:
            raise NewtonFailure(f"Newton did not converge in {it} iterations (residual {r:.3e})", r)
        it += 1
        Fu = Gk[:n]
        scale = 1.0 + float(np.linalg.norm(u))
        flow = problem.flow(lam)

        def Jv(v, u=u, Fu=Fu, flow=flow):
            nv = float(np.linalg.norm(v))
            if nv == 0.0:
                return np.zeros_like(v)
            e = 1e-7 * scale / nv
            return (F_arrays(problem, lam, *unpack(u + e * v, grid), flow) - Fu) / e

        rtol = max(1e-7, min(1e-3, 0.1 * r))  # FD products carry ~1e-9 relative noise
        try:
            if free:
                el = 1e-6 * (1.0 + abs(lam))
                F_lam = (F_arrays(problem, lam + el, *unpack(u, grid)) - F_arrays(problem, lam - el, *unpack(u, grid))) / (2 * el)
                delta, info = _solve_bordered(Jv, F_lam, constraint.gradient(n + 1), -Gk, prec, rtol)
            else:
                delta, info = _solve_fixed(Jv, n, -Gk, prec, rtol)
        except ConformalityError as exc:
            raise NewtonFailure(str(exc), r, conformality=True) from exc
        # damping: accept the first step length that reduces the residual
        t = 1.0
        for _ in range(6):
            u_new = u + t * delta[:n]
            lam_new = lam + t * delta[n] if free else lam
            try:
                G_new = G(u_new, lam_new)
            except (ConformalityError, ValueError):
                t *= 0.5
                continue
            if res(G_new) < r or r <= cfg.newton_tol:
                break
            t *= 0.5
        else:
            raise NewtonFailure(f"line search failed at residual {r:.3e}", r)
        u, lam, Gk = u_new, lam_new, G_new
        history.append(res(Gk))
        log.debug("newton it=%d res=%.3e gmres=%d t=%.3g", it, history[-1], info, t)
    state = State.from_packed(grid, lam, u)
    return state, {"iterations": it, "residuals": history}


# ---------------------------------------------------------------------------
# branch switching and stepping


def switch_branch(problem: Problem, bp: BifurcationPoint, s0: float, config: ContinuationConfig | None = None):
    """First nontrivial point ``~ s0 T(lam0) theta`` with the k0-th coefficient of w pinned."""
    if bp.kernel_dim != 1:
        raise ValueError(f"refusing to switch: kernel dimension {bp.kernel_dim} (re-pose on L/k)")
    if not abs(bp.d_lambda) > 0:
        raise ValueError("transversality fails (d_lambda = 0)")
    if s0 == 0:
        raise ValueError("s0 must be nonzero")
    ke = kernel_element(problem, bp)
    pred = ke.predictor.packed()
    guess = State.from_packed(problem.grid, bp.lambda0, s0 * pred)
    pin = PinConstraint(bp.k0 - 1, s0 * pred[bp.k0 - 1])
    state, info = newton_correct(problem, guess, pin, config)
    return state, info, ke


def _monitor(d: Diagnostics, state: State, cfg: ContinuationConfig, h: float, peak_amp: float, lam0: float):
    depth_stop = 1e-3 * h if cfg.min_depth_stop is None else cfg.min_depth_stop
    if d.min_K2 < cfg.min_K2_stop:
        return "conformality_degeneracy", f"min K^2 = {d.min_K2:.3e}"
    if d.max_curvature > cfg.max_curvature_stop:
        return "conformality_degeneracy", f"max curvature = {d.max_curvature:.3e}"
    # bed contact implies a crossing with the bed line, so it is checked first
    if d.min_depth < depth_stop:
        return "bed_contact", f"min depth = {d.min_depth:.3e}"
    if d.self_intersecting:
        return "self_intersection", "surface polyline is not simple"
    if abs(state.lam) > cfg.lambda_bound:
        return "lambda_unbounded", f"|lambda| = {abs(state.lam):.3e}"
    if d.holder_proxy > cfg.amplitude_bound:
        return "amplitude_unbounded", f"amplitude proxy = {d.holder_proxy:.3e}"
    if d.vorticity_Lp > cfg.vorticity_Lp_bound:
        return "vorticity_Lp_unbounded", f"vorticity L^p = {d.vorticity_Lp:.3e}"
    if d.spectral_tail > cfg.tail_tol:
        return "resolution_limit", f"top-third spectral tail {d.spectral_tail:.3e} > {cfg.tail_tol:.1e}; increase N"
    if peak_amp > 1e-3 and d.amplitude < 1e-6 and abs(state.lam - lam0) > 1e-6 * (1 + abs(lam0)):
        return "returned_to_trivial", f"lambda1 = {state.lam!r}"
    return None, ""


def _unit(v):
    return v / np.linalg.norm(v)


def run_branch(problem: Problem, bp: BifurcationPoint, config: ContinuationConfig | None = None,
               s0: float | None = None) -> Branch:
    cfg = config or ContinuationConfig()
    s0 = cfg.s0 if s0 is None else s0
    branch = Branch(bp, config=cfg)
    try:
        state, info, _ = switch_branch(problem, bp, s0, cfg)
    except NewtonFailure as exc:
        branch.termination = "conformality_degeneracy" if exc.conformality else "newton_failure"
        branch.detail = f"branch switching: {exc}"
        return branch
    U_triv = np.zeros(packed_size(problem.grid) + 1)
    U_triv[-1] = bp.lambda0
    U = np.append(state.packed(), state.lam)
    tangent = _unit(U - U_triv)
    d = diagnostics(problem, state)
    branch.points.append(BranchPoint(0, state, float(np.linalg.norm(U - U_triv)), 0.0, d, info["iterations"], tangent))
    peak = d.amplitude
    ds = cfg.ds0
    arclength = 0.0
    h = problem.grid.h
    for step in range(1, cfg.max_steps + 1):
        while True:
            guess = State.from_packed(problem.grid, U[-1] + ds * tangent[-1], U[:-1] + ds * tangent[:-1])
            con = ArclengthConstraint(U, tangent, ds)
            try:
                prec = TrivialPreconditioner(problem, guess.lam)
                new, info = newton_correct(problem, guess, con, cfg, prec)
                break
            except (NewtonFailure, ConformalityError, ValueError) as exc:
                conf = isinstance(exc, ConformalityError) or getattr(exc, "conformality", False)
                ds *= 0.5
                log.info("step %d failed (%s); ds -> %.3e", step, exc, ds)
                if ds < cfg.ds_min:
                    branch.termination = "conformality_degeneracy" if conf else "newton_failure"
                    branch.detail = str(exc)
                    return branch
        U_new = np.append(new.packed(), new.lam)
        arclength += ds
        d = diagnostics(problem, new)
        branch.points.append(BranchPoint(step, new, ds, arclength, d, info["iterations"], tangent))
        tangent = _unit(U_new - U)
        U = U_new
        peak = max(peak, d.amplitude)
        label, detail = _monitor(d, new, cfg, h, peak, bp.lambda0)
        if label is not None:
            branch.termination, branch.detail = label, detail
            return branch
        if info["iterations"] <= cfg.fast_iters:
            ds = min(cfg.ds_max, ds * cfg.grow)
    branch.termination = "max_steps"
    branch.detail = f"{cfg.max_steps} steps"
    return branch


def retrace(problem: Problem, branch: Branch, n: int, config: ContinuationConfig | None = None) -> State:
    """Recompute point ``n-1`` from point ``n`` by stepping back along the reversed tangent.

    The stored tangent of point ``n`` and its step ``ds`` define a constraint
    that point ``n-1`` satisfies exactly, so the corrector must land on it.
    """
    if not 1 <= n < len(branch.points):
        raise IndexError("retrace needs 1 <= n < number of points")
    cfg = config or branch.config or ContinuationConfig()
    p = branch.points[n]
    tangent = p.tangent
    if tangent is None:
        tangent = _unit(p.U - branch.points[n - 1].U)
    U = p.U
    con = ArclengthConstraint(U, -tangent, p.ds)
    guess = State.from_packed(problem.grid, U[-1] - p.ds * tangent[-1], U[:-1] - p.ds * tangent[:-1])
    state, _ = newton_correct(problem, guess, con, cfg)
    return state
