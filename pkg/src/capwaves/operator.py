"""The nonlinear map ``F(lam, w, phi) = (w, phi) - M(lam, w, phi)`` and its monitors.

Internally a state is handled as plain arrays: ``wc`` (cosine coefficients of
``w``, ``wc[0] = 0``) and ``phim`` (cosine modes of ``phi`` on every y-level,
shape (N+1, M+1), zero first/last column).  The typed :class:`State` wraps
them for the public API.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from shapely.geometry import LineString

from .problem import Problem
from .spectral import (
    GridSpec,
    PeriodicEvenFunction,
    StripField,
    cos_coeffs,
    cos_values,
    dy_top,
    harmonic_gradient,
    padded_cos_coeffs,
    padded_cos_values,
    padded_sin_values,
    poisson_modes,
    sin_values,
)

__all__ = [
    "State",
    "Diagnostics",
    "ConformalityError",
    "AliasingError",
    "Evaluation",
    "evaluate",
    "conformal_factor",
    "curvature",
    "solve_A",
    "bernoulli_terms",
    "F_map",
    "F_arrays",
    "bernoulli_residual",
    "diagnostics",
    "surface_polyline",
    "is_self_intersecting",
    "is_overhanging",
    "spectral_tail",
    "pack",
    "unpack",
    "packed_size",
]

MEAN_TOL = 1e-10
K2_FLOOR = 1e-14  # below this the conformal factor is zero up to roundoff


class ConformalityError(ValueError):
    """``(1 + C w')^2 + w'^2`` is not positive: the state left the admissible set."""


class AliasingError(RuntimeError):
    """The argument of the inverse second derivative lost its zero mean."""


# ---------------------------------------------------------------------------
# packing (w modes 1..N first, then phi modes k = 0..N x interior levels 1..M-1)


def packed_size(grid: GridSpec) -> int:
    return grid.N + (grid.N + 1) * (grid.M - 1)


def pack(wc: np.ndarray, phim: np.ndarray) -> np.ndarray:
    return np.concatenate([wc[1:], phim[:, 1:-1].ravel()])


def unpack(vec: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    N, M = grid.N, grid.M
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (packed_size(grid),):
        raise ValueError(f"packed vector has length {vec.shape}, expected {packed_size(grid)}")
    wc = np.zeros(N + 1)
    wc[1:] = vec[:N]
    phim = np.zeros((N + 1, M + 1))
    phim[:, 1:-1] = vec[N:].reshape(N + 1, M - 1)
    return wc, phim


# ---------------------------------------------------------------------------
# typed state


@dataclass(frozen=True, eq=False)
class State:
    lam: float
    w: PeriodicEvenFunction
    phi: StripField

    def __post_init__(self):
        if self.w.grid != self.phi.grid:
            raise ValueError("w and phi live on different grids")
        if not self.w.is_zero_mean:
            raise ValueError(f"w must have zero mean, got {self.w.mean:.3e}")
        v = self.phi.values
        scale = max(1.0, float(np.max(np.abs(v))))
        if np.max(np.abs(v[:, 0])) > 1e-12 * scale or np.max(np.abs(v[:, -1])) > 1e-12 * scale:
            raise ValueError("phi must vanish at y = 0 and y = -h")
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def grid(self) -> GridSpec:
        return self.w.grid

    @classmethod
    def trivial(cls, grid: GridSpec, lam: float) -> "State":
        return cls(lam, PeriodicEvenFunction.zeros(grid), StripField.zeros(grid))

    @classmethod
    def from_arrays(cls, grid: GridSpec, lam: float, wc, phim) -> "State":
        wc = np.array(wc, dtype=float)
        wc[0] = 0.0
        phim = np.array(phim, dtype=float)
        phim[:, 0] = phim[:, -1] = 0.0
        return cls(lam, PeriodicEvenFunction(grid, wc), StripField.from_modes(grid, phim))

    @classmethod
    def from_packed(cls, grid: GridSpec, lam: float, vec) -> "State":
        return cls.from_arrays(grid, lam, *unpack(vec, grid))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        wc = np.array(self.w.coeffs)
        wc[0] = 0.0
        phim = self.phi.modes()
        phim[:, 0] = phim[:, -1] = 0.0
        return wc, phim

    def packed(self) -> np.ndarray:
        return pack(*self.arrays())


# ---------------------------------------------------------------------------
# core evaluation


@dataclass(frozen=True, eq=False)
class Evaluation:
    """All intermediate quantities of one evaluation of F (grid values in x)."""

    lam: float
    wc: np.ndarray
    phim: np.ndarray
    a1: np.ndarray  # 1 + C w'
    wp: np.ndarray  # w'
    K2: np.ndarray
    Am: np.ndarray  # modes of the solution of the A-problem
    B: np.ndarray
    Q: float
    R: np.ndarray
    T: np.ndarray  # cosine coeffs of (1 + C w') R + w' C R
    F1: np.ndarray
    F2: np.ndarray


def _surface_terms(wc: np.ndarray, grid: GridSpec):
    a1 = 1.0 + cos_values(grid.coth * grid.kv * wc, grid.N)
    wp = sin_values(-grid.kv * wc, grid.N)
    return a1, wp


def _A_modes(problem: Problem, lam: float, wc: np.ndarray, phim: np.ndarray, flow=None) -> np.ndarray:
    grid = problem.grid
    flow = problem.flow(lam) if flow is None else flow
    vort = problem.vorticity
    vc = wc.copy()
    vc[0] = grid.h
    Vx, Vy = harmonic_gradient(vc, grid)
    phi = cos_values(phim, grid.N)
    psi = flow.psi[None, :]
    rhs = -vort.gamma(phi + psi) * (Vx * Vx + Vy * Vy) + vort.gamma(psi)
    return poisson_modes(cos_coeffs(rhs, grid.N), grid)


def _bernoulli(problem: Problem, lam: float, wc, top_slope_modes, a1, wp):
    """B, Q, R from the y-derivative of A (or phi) at the top."""
    grid = problem.grid
    K2 = a1 * a1 + wp * wp
    uy = cos_values(top_slope_modes, grid.N) + lam
    B = uy * uy / (2.0 * K2)
    K = np.sqrt(K2)
    w = cos_values(wc, grid.N)
    Q = float(np.mean(K * (B + problem.g * w)) / np.mean(K))
    R = K * (B + problem.g * w - Q) / problem.sigma
    return B, Q, R


def _babenko_term(wc: np.ndarray, R: np.ndarray, grid: GridSpec) -> np.ndarray:
    # Products of N-band factors formed on 4N points: the mean is then free of
    # aliasing (on 2N points sin(N nu x) vanishes and the skew identity fails).
    n = 4 * grid.N
    Rc = cos_coeffs(R, grid.N)
    a1 = 1.0 + padded_cos_values(grid.coth * grid.kv * wc, n)
    wp = padded_sin_values(-grid.kv * wc, n)
    Rv = padded_cos_values(Rc, n)
    CR = padded_sin_values(grid.coth * Rc, n)  # mode 0 of R is dropped (its mean is roundoff)
    return padded_cos_coeffs(a1 * Rv + wp * CR, grid.N)


def evaluate(problem: Problem, lam: float, wc: np.ndarray, phim: np.ndarray, flow=None, check_mean: bool = True) -> Evaluation:
    grid = problem.grid
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    a1, wp = _surface_terms(wc, grid)
    K2 = a1 * a1 + wp * wp
    if not np.min(K2) > K2_FLOOR:
        raise ConformalityError(f"conformal factor degenerates (min K^2 = {np.min(K2):.3e})")
    Am = _A_modes(problem, lam, wc, phim, flow)
    B, Q, R = _bernoulli(problem, lam, wc, dy_top(Am, grid.dy), a1, wp)
    T = _babenko_term(wc, R, grid)
    if check_mean and abs(T[0]) > MEAN_TOL * max(1.0, float(np.max(np.abs(T)))):
        raise AliasingError(f"mean of the Babenko term is {T[0]:.3e}; increase N")
    F1 = wc.copy()
    F1[1:] += T[1:] / grid.kv[1:] ** 2
    F1[0] = 0.0
    F2 = phim - Am
    F2[:, 0] = F2[:, -1] = 0.0
    return Evaluation(lam, wc, phim, a1, wp, K2, Am, B, Q, R, T, F1, F2)


def F_arrays(problem: Problem, lam: float, wc: np.ndarray, phim: np.ndarray, flow=None) -> np.ndarray:
    """Packed F for array-valued input; used by the Newton solvers."""
    ev = evaluate(problem, lam, wc, phim, flow)
    return pack(ev.F1, ev.F2)


# ---------------------------------------------------------------------------
# typed operations


def _eval_state(problem: Problem, state: State) -> Evaluation:
    if state.grid != problem.grid:
        raise ValueError("state grid does not match problem grid")
    return evaluate(problem, state.lam, *state.arrays())


def conformal_factor(w: PeriodicEvenFunction) -> tuple[PeriodicEvenFunction, float]:
    """``K(w) = ((1 + C w')^2 + w'^2)^(1/2)`` and ``min K^2`` over the collocation points."""
    if not w.is_zero_mean:
        raise ValueError("conformal_factor requires zero-mean w")
    a1, wp = _surface_terms(np.asarray(w.coeffs), w.grid)
    K2 = a1 * a1 + wp * wp
    return PeriodicEvenFunction.from_values(w.grid, np.sqrt(np.maximum(K2, 0.0))), float(np.min(K2))


def _curvature_values(wc: np.ndarray, grid: GridSpec) -> np.ndarray:
    a1, wp = _surface_terms(wc, grid)
    K2 = a1 * a1 + wp * wp
    if not np.min(K2) > K2_FLOOR:
        raise ConformalityError(f"conformal factor degenerates (min K^2 = {np.min(K2):.3e})")
    wpp_c = -(grid.kv**2) * wc
    wpp = cos_values(wpp_c, grid.N)
    Cwpp = sin_values(grid.coth * wpp_c, grid.N)
    return (a1 * wpp - wp * Cwpp) / K2**1.5


def curvature(w: PeriodicEvenFunction) -> PeriodicEvenFunction:
    """Mean curvature ``((1 + C w') w'' - w' C w'') / K^3`` of the surface profile."""
    return PeriodicEvenFunction.from_values(w.grid, _curvature_values(np.asarray(w.coeffs), w.grid))


def solve_A(problem: Problem, state: State) -> StripField:
    Am = _A_modes(problem, state.lam, *state.arrays())
    return StripField.from_modes(problem.grid, Am)


def bernoulli_terms(problem: Problem, state: State) -> tuple[PeriodicEvenFunction, float, PeriodicEvenFunction]:
    ev = _eval_state(problem, state)
    g = problem.grid
    return PeriodicEvenFunction.from_values(g, ev.B), ev.Q, PeriodicEvenFunction.from_values(g, ev.R)


def F_map(problem: Problem, state: State) -> tuple[PeriodicEvenFunction, StripField]:
    ev = _eval_state(problem, state)
    return PeriodicEvenFunction(problem.grid, ev.F1), StripField.from_modes(problem.grid, ev.F2)


def _bernoulli_residual_values(problem: Problem, lam: float, wc: np.ndarray, phim: np.ndarray) -> np.ndarray:
    # Direct evaluation of the original Bernoulli condition written on the flat strip.
    # Uses phi itself (not A) with a fourth-order one-sided stencil, so it is
    # independent of the discrete operator it is checking.
    grid = problem.grid
    a1, wp = _surface_terms(wc, grid)
    K2 = a1 * a1 + wp * wp
    lhs = _curvature_values(wc, grid) * np.sqrt(K2)
    _, _, R = _bernoulli(problem, lam, wc, dy_top(phim, grid.dy, order=4), a1, wp)
    return lhs - R


def bernoulli_residual(problem: Problem, state: State) -> float:
    return float(np.max(np.abs(_bernoulli_residual_values(problem, state.lam, *state.arrays()))))


# ---------------------------------------------------------------------------
# geometry


def surface_polyline(w: PeriodicEvenFunction, oversample: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Physical surface ``(x + C w(x), w(x) + h)`` sampled over one period."""
    grid = w.grid
    c = np.asarray(w.coeffs).copy()
    c[0] = 0.0
    n = grid.nx * oversample
    x = np.arange(n) * (grid.L / n)
    arg = np.multiply.outer(x, grid.kv)
    X = x + np.sin(arg) @ (grid.coth * c)
    Y = np.cos(arg) @ c + grid.h
    return X, Y


def is_self_intersecting(X: np.ndarray, Y: np.ndarray, L: float) -> bool:
    """True if the L-periodic polyline through (X, Y) is not simple.

    The period and both neighbouring images are joined into one open polyline;
    this catches crossings inside a period and with the adjacent copies.
    """
    xs = np.concatenate([X - L, X, X + L, [X[0] + 2 * L]])
    ys = np.concatenate([Y, Y, Y, [Y[0]]])
    return not LineString(np.column_stack([xs, ys])).is_simple


def is_overhanging(w: PeriodicEvenFunction) -> bool:
    a1, _ = _surface_terms(np.asarray(w.coeffs), w.grid)
    return bool(np.min(a1) < 0.0)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class Diagnostics:
    Q: float
    bernoulli_residual: float
    F_residual: float
    mean_R: float
    min_K2: float
    min_depth: float
    max_curvature: float
    min_surface_speed: float
    vorticity_Lp: float
    amplitude: float
    holder_proxy: float
    phi_norm: float
    spectral_tail: float
    self_intersecting: bool
    overhanging: bool

    def to_dict(self) -> dict:
        return asdict(self)


def spectral_tail(wc: np.ndarray) -> float:
    """Largest coefficient in the top third of the spectrum, relative to the largest one."""
    c = np.abs(np.asarray(wc))
    top = c.max()
    if top == 0.0:
        return 0.0
    return float(c[(2 * (c.size - 1)) // 3 + 1 :].max() / top)


def _trapezoid_y(f: np.ndarray, dy: float) -> np.ndarray:
    return dy * (f[..., 1:-1].sum(axis=-1) + 0.5 * (f[..., 0] + f[..., -1]))


def diagnostics(problem: Problem, state: State, p: float = 2.0) -> Diagnostics:
    grid = problem.grid
    wc, phim = state.arrays()
    lam = state.lam
    ev = evaluate(problem, lam, wc, phim, check_mean=False)
    flow = problem.flow(lam)
    vort = problem.vorticity

    w_vals = cos_values(wc, grid.N)
    kappa = _curvature_values(wc, grid)
    speed = np.abs(cos_values(dy_top(phim, grid.dy), grid.N) + lam)

    vc = wc.copy()
    vc[0] = grid.h
    Vx, Vy = harmonic_gradient(vc, grid)
    phi = cos_values(phim, grid.N)
    dens = np.abs(vort.gamma(phi + flow.psi[None, :])) ** p * (Vx * Vx + Vy * Vy)
    vort_lp = float((grid.L * np.mean(_trapezoid_y(dens, grid.dy))) ** (1.0 / p))

    X, Y = surface_polyline(state.w)
    return Diagnostics(
        Q=ev.Q,
        bernoulli_residual=float(np.max(np.abs(_bernoulli_residual_values(problem, lam, wc, phim)))),
        F_residual=float(np.max(np.abs(pack(ev.F1, ev.F2)))),
        mean_R=float(abs(np.mean(ev.R))),
        min_K2=float(np.min(ev.K2)),
        min_depth=float(np.min(w_vals + grid.h)),
        max_curvature=float(np.max(kappa)),
        min_surface_speed=float(np.min(speed)),
        vorticity_Lp=vort_lp,
        amplitude=float(np.max(np.abs(w_vals))),
        holder_proxy=float(np.max(np.abs(w_vals)) + np.sum(np.abs(grid.kv * wc))),
        phi_norm=float(np.max(np.abs(phi))),
        spectral_tail=spectral_tail(wc),
        self_intersecting=is_self_intersecting(X, Y, grid.L),
        overhanging=bool(np.min(ev.a1) < 0.0),
    )
