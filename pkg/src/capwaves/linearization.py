"""Derivatives of F at laminar states, the good unknown and kernel predictors.

Packed coordinates are shared with :mod:`capwaves.operator`: cosine
coefficients ``w_1..w_N`` first, then the modes of ``phi`` on the interior
levels, mode-major (``phi_k(y_j)`` at index ``N + k (M-1) + j - 1``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .dispersion import BifurcationPoint, beta_profile
from .operator import F_arrays, pack, packed_size, unpack
from .problem import Problem
from .spectral import (
    GridSpec,
    PeriodicEvenFunction,
    StripField,
    dy_top,
    poisson_modes,
)

__all__ = [
    "TangentVector",
    "KernelElement",
    "good_unknown",
    "good_unknown_inverse",
    "trivial_jacobian_apply",
    "trivial_jacobian_blocks",
    "trivial_jacobian_matrix",
    "trivial_null_space",
    "trivial_schur",
    "discrete_bifurcation_lambda",
    "TrivialPreconditioner",
    "L_apply",
    "kernel_element",
    "fd_jacobian",
    "fd_lambda_derivative",
    "pack",
    "unpack",
]


@dataclass(frozen=True, eq=False)
class TangentVector:
    dw: PeriodicEvenFunction
    dphi: StripField
    dlambda: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.dw.grid

    def arrays(self):
        wc = np.array(self.dw.coeffs)
        wc[0] = 0.0
        phim = self.dphi.modes()
        phim[:, 0] = phim[:, -1] = 0.0
        return wc, phim

    def packed(self) -> np.ndarray:
        return pack(*self.arrays())

    @classmethod
    def from_arrays(cls, grid: GridSpec, wc, phim, dlambda: float = 0.0) -> "TangentVector":
        return cls(PeriodicEvenFunction(grid, wc), StripField.from_modes(grid, phim), dlambda)

    @classmethod
    def from_packed(cls, grid: GridSpec, vec, dlambda: float = 0.0) -> "TangentVector":
        return cls.from_arrays(grid, *unpack(vec, grid), dlambda)


@dataclass(frozen=True, eq=False)
class KernelElement:
    k: int
    lam0: float
    theta: StripField
    predictor: TangentVector


def _top_modes(theta: StripField) -> np.ndarray:
    c = theta.modes()[:, -1].copy()
    if abs(c[0]) > 1e-10 * max(1.0, float(np.max(np.abs(c)))):
        raise ValueError("top trace of theta must have zero mean")
    c[0] = 0.0
    return c


def good_unknown(problem: Problem, lam: float, theta: StripField) -> TangentVector:
    """``T(lam) theta = (-S theta / lam, theta - (psi_y / lam) V[S theta])``."""
    if lam == 0:
        raise ValueError("good unknown undefined at lambda = 0")
    grid = problem.grid
    s = _top_modes(theta)
    flow = problem.flow(lam)
    V = s[:, None] * grid.sinh_ratio
    phim = theta.modes() - (flow.psi_y / lam)[None, :] * V
    phim[:, 0] = phim[:, -1] = 0.0
    return TangentVector.from_arrays(grid, -s / lam, phim)


def good_unknown_inverse(problem: Problem, lam: float, v: TangentVector) -> StripField:
    """``T(lam)^{-1}(dw, dphi) = dphi - psi_y V[dw]``."""
    if lam == 0:
        raise ValueError("good unknown undefined at lambda = 0")
    grid = problem.grid
    flow = problem.flow(lam)
    wc, phim = v.arrays()
    return StripField.from_modes(grid, phim - flow.psi_y[None, :] * (wc[:, None] * grid.sinh_ratio))


def _trivial_apply_arrays(problem: Problem, lam: float, wc: np.ndarray, phim: np.ndarray):
    grid = problem.grid
    vort = problem.vorticity
    flow = problem.flow(lam)
    rhs = -2.0 * vort.gamma(flow.psi)[None, :] * (wc[:, None] * grid.dsinh_ratio)
    rhs = rhs - vort.dgamma(flow.psi)[None, :] * phim
    Am = poisson_modes(rhs, grid)  # A_w + A_phi (the problems are linear)
    X = lam * dy_top(Am, grid.dy) - lam**2 * grid.kv * grid.coth * wc + problem.g * wc
    F1 = wc.copy()
    F1[1:] += X[1:] / (problem.sigma * grid.kv[1:] ** 2)
    F1[0] = 0.0
    F2 = phim - Am
    F2[:, 0] = F2[:, -1] = 0.0
    return F1, F2


def trivial_jacobian_apply(problem: Problem, lam: float, v: TangentVector) -> TangentVector:
    """Derivative of F with respect to (w, phi) at the laminar state (lam, 0, 0)."""
    F1, F2 = _trivial_apply_arrays(problem, lam, *v.arrays())
    return TangentVector.from_arrays(problem.grid, F1, F2)


@lru_cache(maxsize=8)
def _green_matrices(grid: GridSpec) -> np.ndarray:
    """Discrete inverses of ``D_yy - (k nu)^2`` on interior levels, shape (N+1, M-1, M-1)."""
    m1 = grid.M - 1
    rhs = np.zeros((grid.N + 1, grid.M + 1, m1))
    rhs[:, 1:-1, :] = np.eye(m1)[None]
    return poisson_modes(rhs, grid)[:, 1:-1, :]


def trivial_jacobian_blocks(problem: Problem, lam: float, modes=None) -> list[np.ndarray]:
    """Per-mode blocks of the packed trivial Jacobian.

    Block 0 acts on ``phi_0`` only; block k >= 1 on ``(w_k, phi_k)``.  ``modes``
    restricts the output to the listed k (default: all).
    """
    grid = problem.grid
    vort = problem.vorticity
    flow = problem.flow(lam)
    G = _green_matrices(grid)
    m1 = grid.M - 1
    gp = vort.dgamma(flow.psi[1:-1]) * np.ones(m1)
    g0 = vort.gamma(flow.psi[1:-1]) * np.ones(m1)
    # top derivative row acting on interior values (u_M = 0)
    top = np.zeros(m1)
    top[-1] = -4.0 / (2.0 * grid.dy)
    top[-2] = 1.0 / (2.0 * grid.dy)
    blocks = []
    for k in range(grid.N + 1) if modes is None else modes:
        Aphi = G[k] * (-gp)[None, :]  # A_phi = G diag(-gamma')
        if k == 0:
            blocks.append(np.eye(m1) - Aphi)
            continue
        kv = grid.kv[k]
        c = problem.sigma * kv**2
        aw = G[k] @ (-2.0 * g0 * grid.dsinh_ratio[k, 1:-1])
        J = np.empty((m1 + 1, m1 + 1))
        J[0, 0] = 1.0 + (lam * top @ aw - lam**2 * kv * grid.coth[k] + problem.g) / c
        J[0, 1:] = lam * (top @ Aphi) / c
        J[1:, 0] = -aw
        J[1:, 1:] = np.eye(m1) - Aphi
        blocks.append(J)
    return blocks


def trivial_jacobian_matrix(problem: Problem, lam: float) -> np.ndarray:
    """Dense packed trivial Jacobian; intended for small grids."""
    grid = problem.grid
    N, m1 = grid.N, grid.M - 1
    n = packed_size(grid)
    J = np.zeros((n, n))
    for k, blk in enumerate(trivial_jacobian_blocks(problem, lam)):
        idx = _block_index(grid, k)
        J[np.ix_(idx, idx)] = blk
    return J


def _block_index(grid: GridSpec, k: int) -> np.ndarray:
    N, m1 = grid.N, grid.M - 1
    phi_idx = N + k * m1 + np.arange(m1)
    if k == 0:
        return phi_idx
    return np.concatenate([[k - 1], phi_idx])


def trivial_schur(problem: Problem, lam: float, k: int) -> float:
    """Signed scalar ``a - b^T D^{-1} c`` of block k (vanishes exactly on the discrete kernel)."""
    J = trivial_jacobian_blocks(problem, lam, [k])[0]
    return float(J[0, 0] - J[0, 1:] @ np.linalg.solve(J[1:, 1:], J[1:, 0]))


def discrete_bifurcation_lambda(problem: Problem, k: int, lam0: float, rel_width: float = 0.05) -> float:
    """Root of the discrete block-k Schur complement closest to ``lam0``.

    Differs from the dispersion root by the O(M^-2) discretisation error in y.
    """
    f = lambda lam: trivial_schur(problem, lam, k)  # noqa: E731
    if f(lam0) == 0.0:
        return lam0
    width = rel_width * abs(lam0)
    for frac in (1e-4, 1e-3, 1e-2, 1e-1, 1.0):
        a, b = lam0 - frac * width, lam0 + frac * width
        if a * lam0 > 0 and b * lam0 > 0 and f(a) * f(b) < 0:
            return brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    raise ValueError(f"no discrete root of mode {k} near lambda={lam0!r}")


def trivial_null_space(problem: Problem, lam: float, rel_tol: float = 1e-6):
    """Numerical null space of the trivial Jacobian via per-block SVD.

    Returns ``(dim, ks, vectors, smallest)`` where ``vectors`` are packed null
    vectors and ``smallest`` maps each mode to its smallest relative singular value.
    """
    grid = problem.grid
    blocks = trivial_jacobian_blocks(problem, lam)
    svds = [np.linalg.svd(b) for b in blocks]
    norm = max(s[1][0] for s in svds)
    ks, vecs, smallest = [], [], {}
    for k, (_, s, vt) in enumerate(svds):
        smallest[k] = float(s[-1] / norm)
        for i in np.nonzero(s < rel_tol * norm)[0]:
            v = np.zeros(packed_size(grid))
            v[_block_index(grid, k)] = vt[i]
            ks.append(k)
            vecs.append(v)
    return len(vecs), ks, vecs, smallest


class TrivialPreconditioner:
    """Approximate inverse of the packed Jacobian from the laminar blocks at ``lam``.

    The scalar Schur complement of each block is floored in magnitude so the
    preconditioner stays bounded at bifurcation points.
    """

    def __init__(self, problem: Problem, lam: float, floor: float = 0.1):
        self.grid = problem.grid
        self.lam = lam
        blocks = trivial_jacobian_blocks(problem, lam)
        N = self.grid.N
        self._Dinv = np.stack([np.linalg.inv(blocks[0])] + [np.linalg.inv(J[1:, 1:]) for J in blocks[1:]])
        self._b = np.stack([J[0, 1:] for J in blocks[1:]])
        self._c = np.einsum("kij,kj->ki", self._Dinv[1:], np.stack([J[1:, 0] for J in blocks[1:]]))
        s = np.array([J[0, 0] for J in blocks[1:]]) - np.einsum("ki,ki->k", self._b, self._c)
        small = np.abs(s) < floor
        s[small] = np.where(s[small] >= 0, floor, -floor)
        self._s = s
        assert self._s.shape == (N,)

    def solve(self, r: np.ndarray) -> np.ndarray:
        N, m1 = self.grid.N, self.grid.M - 1
        rphi = r[N:].reshape(N + 1, m1)
        y = np.einsum("kij,kj->ki", self._Dinv, rphi)
        xw = (r[:N] - np.einsum("ki,ki->k", self._b, y[1:])) / self._s
        y[1:] -= self._c * xw[:, None]
        return np.concatenate([xw, y.ravel()])


def L_apply(problem: Problem, lam: float, theta: StripField) -> tuple[PeriodicEvenFunction, StripField]:
    """``L(lam) theta``, the trivial Jacobian composed with the good unknown."""
    if lam == 0:
        raise ValueError("L undefined at lambda = 0")
    grid = problem.grid
    vort = problem.vorticity
    flow = problem.flow(lam)
    s = _top_modes(theta)
    th = theta.modes()
    Aphi = poisson_modes(-vort.dgamma(flow.psi)[None, :] * th, grid)
    V = s[:, None] * grid.sinh_ratio
    # top slope: one-sided stencil for A_phi, exact k nu coth(k nu h) for V
    slope = dy_top(Aphi, grid.dy) + grid.dsinh_ratio[:, -1] * s
    X = lam * slope + (float(vort.gamma(0.0)) - problem.g / lam) * s
    L1 = -s / lam
    L1[1:] += X[1:] / (problem.sigma * grid.kv[1:] ** 2)
    L1[0] = 0.0
    L2 = th - (Aphi + V)
    L2[:, 0] = L2[:, -1] = 0.0
    return PeriodicEvenFunction(grid, L1), StripField.from_modes(grid, L2)


def kernel_element(problem: Problem, bp: BifurcationPoint) -> KernelElement:
    """``theta = beta(y) cos(k0 nu x)`` and the predictor ``T(lam0) theta``."""
    if bp.kernel_dim != 1:
        raise ValueError(f"kernel is {bp.kernel_dim}-dimensional (k in {bp.kernel_ks}); re-pose on L/k")
    grid = problem.grid
    k, lam0 = bp.k0, bp.lambda0
    if k > grid.N:
        raise ValueError(f"k0={k} exceeds resolved modes N={grid.N}")
    flow = problem.flow(lam0)
    beta = beta_profile(-((k * grid.nu) ** 2), flow).beta
    th = np.zeros((grid.N + 1, grid.M + 1))
    th[k] = beta
    wc = np.zeros(grid.N + 1)
    wc[k] = -1.0 / lam0
    phim = np.zeros_like(th)
    phim[k] = beta - flow.psi_y * grid.sinh_ratio[k] / lam0
    phim[k, 0] = phim[k, -1] = 0.0
    return KernelElement(k, lam0, StripField.from_modes(grid, th), TangentVector.from_arrays(grid, wc, phim))


def fd_jacobian(problem: Problem, lam: float, wc: np.ndarray, phim: np.ndarray, stencil: str = "forward",
                eps_scale: float | None = None) -> np.ndarray:
    """Dense finite-difference Jacobian of packed F at fixed lambda (small grids only)."""
    if stencil not in ("forward", "central"):
        raise ValueError("stencil must be 'forward' or 'central'")
    grid = problem.grid
    eps_scale = (1e-7 if stencil == "forward" else 1e-5) if eps_scale is None else eps_scale
    flow = problem.flow(lam)
    u0 = pack(wc, phim)
    F0 = F_arrays(problem, lam, wc, phim, flow)
    J = np.empty((u0.size, u0.size))
    for j in range(u0.size):
        e = eps_scale * (1.0 + abs(u0[j]))
        up = u0.copy()
        up[j] += e
        Fp = F_arrays(problem, lam, *unpack(up, grid), flow)
        if stencil == "forward":
            col = (Fp - F0) / e
        else:
            um = u0.copy()
            um[j] -= e
            col = (Fp - F_arrays(problem, lam, *unpack(um, grid), flow)) / (2 * e)
        if not np.all(np.isfinite(col)):
            raise FloatingPointError(f"non-finite Jacobian entry in column {j}")
        J[:, j] = col
    return J


def fd_lambda_derivative(problem: Problem, lam: float, wc: np.ndarray, phim: np.ndarray, eps: float | None = None) -> np.ndarray:
    """Central difference of packed F in lambda."""
    eps = 1e-6 * (1.0 + abs(lam)) if eps is None else eps
    return (F_arrays(problem, lam + eps, wc, phim) - F_arrays(problem, lam - eps, wc, phim)) / (2 * eps)
