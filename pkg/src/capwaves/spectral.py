"""Fourier toolkit on the period-L circle and on the strip ``R x (-h, 0)``.

Even periodic functions are stored as cosine coefficients ``c_0..c_N`` with
``f(x) = sum_k c_k cos(k nu x)``, odd ones as sine coefficients ``s_0..s_N``
(``s_0`` is always zero).  Grid functions live on ``2N`` equispaced points
over ``[0, L)``.  Fields on the strip are sampled on the same x-points and on
``M + 1`` equispaced levels ``y_j = -h + j h / M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

__all__ = [
    "GridSpec",
    "PeriodicEvenFunction",
    "PeriodicOddFunction",
    "StripField",
    "cos_coeffs",
    "cos_values",
    "sin_coeffs",
    "sin_values",
    "padded_cos_values",
    "padded_sin_values",
    "padded_cos_coeffs",
    "hilbert_strip",
    "hilbert_strip_odd",
    "antiderivative2",
    "harmonic_extension",
    "harmonic_gradient",
    "surface_gradient_V",
    "harmonic_residual",
    "poisson_dirichlet",
    "poisson_modes",
    "mean",
    "trace",
    "dy_top",
]

ZERO_MEAN_TOL = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """Discretisation of one period of the strip.

    Parameters
    ----------
    L : period length
    h : conformal mean depth
    N : highest cosine mode retained (2N collocation points in x)
    M : number of vertical intervals
    """

    L: float
    h: float
    N: int = 64
    M: int = 200

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError(f"period L must be positive, got {self.L}")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError(f"depth h must be positive, got {self.h}")
        if int(self.N) != self.N or self.N < 4:
            raise ValueError(f"N must be an integer >= 4, got {self.N}")
        if int(self.M) != self.M or self.M < 8:
            raise ValueError(f"M must be an integer >= 8, got {self.M}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "M", int(self.M))

    @property
    def nu(self) -> float:
        return 2.0 * np.pi / self.L

    @property
    def nx(self) -> int:
        return 2 * self.N

    @property
    def dy(self) -> float:
        return self.h / self.M

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * (self.L / self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return -self.h + np.arange(self.M + 1) * self.dy

    @cached_property
    def k(self) -> np.ndarray:
        return np.arange(self.N + 1)

    @cached_property
    def kv(self) -> np.ndarray:
        """Wavenumbers ``k nu`` for k = 0..N."""
        return self.k * self.nu

    @cached_property
    def coth(self) -> np.ndarray:
        """``coth(k nu h)`` for k >= 1; entry 0 is set to 0 (mean is annihilated)."""
        out = np.zeros(self.N + 1)
        out[1:] = 1.0 / np.tanh(self.kv[1:] * self.h)
        return out

    @cached_property
    def sinh_ratio(self) -> np.ndarray:
        """Table ``sinh(k nu (y+h)) / sinh(k nu h)``, shape (N+1, M+1).

        Row 0 holds the mean profile ``(y+h)/h``.  Evaluated in exp-scaled form.
        """
        kv = self.kv[1:, None]
        yy = self.y[None, :]
        num = np.exp(kv * yy) * (1.0 - np.exp(-2.0 * kv * (yy + self.h)))
        den = 1.0 - np.exp(-2.0 * kv * self.h)
        out = np.empty((self.N + 1, self.M + 1))
        out[0] = (self.y + self.h) / self.h
        out[1:] = num / den
        return out

    @cached_property
    def dsinh_ratio(self) -> np.ndarray:
        """y-derivative of :attr:`sinh_ratio` (``k nu cosh(..)/sinh(k nu h)``)."""
        kv = self.kv[1:, None]
        yy = self.y[None, :]
        num = np.exp(kv * yy) * (1.0 + np.exp(-2.0 * kv * (yy + self.h)))
        den = 1.0 - np.exp(-2.0 * kv * self.h)
        out = np.empty((self.N + 1, self.M + 1))
        out[0] = 1.0 / self.h
        out[1:] = kv * num / den
        return out

    @cached_property
    def _poisson_factor(self) -> np.ndarray:
        # Block-diagonal stack of the per-mode SPD matrices -(D_yy - (k nu)^2),
        # factorised once per grid.
        m1 = self.M - 1
        n = (self.N + 1) * m1
        inv_dy2 = 1.0 / self.dy**2
        ab = np.zeros((2, n))
        ab[1] = np.repeat(2.0 * inv_dy2 + self.kv**2, m1)
        sup = np.full(n, -inv_dy2)
        sup[::m1] = 0.0  # no coupling across mode blocks
        ab[0] = sup
        return cholesky_banded(ab, lower=False)

    def with_resolution(self, N: int | None = None, M: int | None = None) -> "GridSpec":
        return GridSpec(self.L, self.h, self.N if N is None else N, self.M if M is None else M)


# ---------------------------------------------------------------------------
# transforms between coefficients and collocation values


def cos_coeffs(values: np.ndarray, N: int) -> np.ndarray:
    """Cosine coefficients (modes 0..N along axis 0) of samples on 2N points."""
    F = np.fft.rfft(values, axis=0).real
    F /= N
    F[0] *= 0.5
    F[N] *= 0.5
    return F


def cos_values(coeffs: np.ndarray, N: int) -> np.ndarray:
    F = np.array(coeffs, dtype=complex) * N
    F[0] *= 2.0
    F[N] *= 2.0
    return np.fft.irfft(F, n=2 * N, axis=0)


def sin_coeffs(values: np.ndarray, N: int) -> np.ndarray:
    F = -np.fft.rfft(values, axis=0).imag / N
    F[0] = 0.0
    F[N] = 0.0  # sin(N nu x) vanishes on the grid
    return F


def sin_values(coeffs: np.ndarray, N: int) -> np.ndarray:
    F = -1j * np.asarray(coeffs, dtype=float) * N
    F[0] = 0.0
    F[N] = 0.0
    return np.fft.irfft(F, n=2 * N, axis=0)


def padded_cos_values(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Evaluate a cosine series with modes 0..N on ``n > 2N`` equispaced points."""
    c = np.asarray(coeffs, dtype=float)
    F = np.zeros(n // 2 + 1, dtype=complex)
    F[: c.size] = c * (n / 2.0)
    F[0] *= 2.0
    return np.fft.irfft(F, n=n)


def padded_sin_values(coeffs: np.ndarray, n: int) -> np.ndarray:
    s = np.asarray(coeffs, dtype=float)
    F = np.zeros(n // 2 + 1, dtype=complex)
    F[: s.size] = -1j * s * (n / 2.0)
    F[0] = 0.0
    return np.fft.irfft(F, n=n)


def padded_cos_coeffs(values: np.ndarray, N: int) -> np.ndarray:
    """Cosine modes 0..N of samples on ``n > 2N`` points (higher modes discarded)."""
    n = values.shape[0]
    F = np.fft.rfft(values).real * (2.0 / n)
    F[0] *= 0.5
    return F[: N + 1]


# ---------------------------------------------------------------------------
# typed containers


@dataclass(frozen=True, eq=False)
class PeriodicEvenFunction:
    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.grid.N + 1,):
            raise ValueError(f"expected {self.grid.N + 1} cosine coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_values(cls, grid: GridSpec, values) -> "PeriodicEvenFunction":
        return cls(grid, cos_coeffs(np.asarray(values, dtype=float), grid.N))

    @classmethod
    def from_function(cls, grid: GridSpec, f) -> "PeriodicEvenFunction":
        return cls.from_values(grid, f(grid.x))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "PeriodicEvenFunction":
        return cls(grid, np.zeros(grid.N + 1))

    def values(self) -> np.ndarray:
        return cos_values(self.coeffs, self.grid.N)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.cos(np.multiply.outer(x, self.grid.kv)) @ self.coeffs

    @property
    def mean(self) -> float:
        return float(self.coeffs[0])

    @property
    def is_zero_mean(self) -> bool:
        return abs(self.coeffs[0]) <= ZERO_MEAN_TOL * max(1.0, np.max(np.abs(self.coeffs)))

    def derivative(self) -> "PeriodicOddFunction":
        return PeriodicOddFunction(self.grid, -self.grid.kv * self.coeffs)

    def second_derivative(self) -> "PeriodicEvenFunction":
        return PeriodicEvenFunction(self.grid, -(self.grid.kv**2) * self.coeffs)

    def __add__(self, other):
        if isinstance(other, PeriodicEvenFunction):
            return PeriodicEvenFunction(self.grid, self.coeffs + other.coeffs)
        c = self.coeffs.copy()
        c[0] += other
        return PeriodicEvenFunction(self.grid, c)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, a: float):
        return PeriodicEvenFunction(self.grid, a * self.coeffs)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class PeriodicOddFunction:
    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.grid.N + 1,):
            raise ValueError(f"expected {self.grid.N + 1} sine coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficient")
        c = c.copy()
        c[0] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_values(cls, grid: GridSpec, values) -> "PeriodicOddFunction":
        return cls(grid, sin_coeffs(np.asarray(values, dtype=float), grid.N))

    def values(self) -> np.ndarray:
        return sin_values(self.coeffs, self.grid.N)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.sin(np.multiply.outer(x, self.grid.kv)) @ self.coeffs

    def derivative(self) -> PeriodicEvenFunction:
        return PeriodicEvenFunction(self.grid, self.grid.kv * self.coeffs)

    def __mul__(self, a: float):
        return PeriodicOddFunction(self.grid, a * self.coeffs)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class StripField:
    """Real field on the strip, values indexed ``[i, j]`` (x-point, y-level)."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        shape = (self.grid.nx, self.grid.M + 1)
        if v.shape != shape:
            raise ValueError(f"strip field must have shape {shape}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite strip field value")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_modes(cls, grid: GridSpec, modes) -> "StripField":
        return cls(grid, cos_values(np.asarray(modes, dtype=float), grid.N))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "StripField":
        return cls(grid, np.zeros((grid.nx, grid.M + 1)))

    @classmethod
    def from_function(cls, grid: GridSpec, f) -> "StripField":
        X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
        return cls(grid, f(X, Y))

    def modes(self) -> np.ndarray:
        """Cosine modes ``c_k(y_j)``, shape (N+1, M+1)."""
        return cos_coeffs(self.values, self.grid.N)

    def evenness_defect(self) -> float:
        v = self.values
        return float(np.max(np.abs(v[1:] - v[:0:-1]))) if len(v) > 1 else 0.0

    def __add__(self, other: "StripField") -> "StripField":
        return StripField(self.grid, self.values + other.values)

    def __sub__(self, other: "StripField") -> "StripField":
        return StripField(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "StripField":
        return StripField(self.grid, a * self.values)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# multipliers


def _require_zero_mean(f: PeriodicEvenFunction, what: str):
    if not f.is_zero_mean:
        raise ValueError(f"{what} requires a zero-mean input, got mean {f.mean:.3e}")


def hilbert_strip(f: PeriodicEvenFunction) -> PeriodicOddFunction:
    """Periodic Hilbert transform on the strip: ``cos(k nu x) -> coth(k nu h) sin(k nu x)``."""
    _require_zero_mean(f, "hilbert_strip")
    return PeriodicOddFunction(f.grid, f.grid.coth * f.coeffs)


def hilbert_strip_odd(g: PeriodicOddFunction) -> PeriodicEvenFunction:
    """Same multiplier on odd functions: ``sin(k nu x) -> -coth(k nu h) cos(k nu x)``."""
    return PeriodicEvenFunction(g.grid, -g.grid.coth * g.coeffs)


def antiderivative2(f: PeriodicEvenFunction) -> PeriodicEvenFunction:
    """Zero-mean inverse of the second derivative (symbol ``-1/(k nu)^2``)."""
    _require_zero_mean(f, "antiderivative2")
    c = np.zeros_like(f.coeffs)
    c[1:] = -f.coeffs[1:] / f.grid.kv[1:] ** 2
    return PeriodicEvenFunction(f.grid, c)


def mean(f: PeriodicEvenFunction) -> float:
    return f.mean


def trace(fld: StripField, level: str = "top") -> PeriodicEvenFunction:
    j = {"top": -1, "bottom": 0}[level]
    return PeriodicEvenFunction.from_values(fld.grid, fld.values[:, j])


def harmonic_extension(v: PeriodicEvenFunction) -> StripField:
    """Harmonic function on the strip equal to ``v`` at y=0 and 0 at y=-h (modal formula)."""
    modes = v.coeffs[:, None] * v.grid.sinh_ratio
    return StripField.from_modes(v.grid, modes)


def harmonic_gradient(v_coeffs: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Exact modal gradient ``(V_x, V_y)`` of the harmonic extension, on the grid."""
    c = np.asarray(v_coeffs)[:, None]
    Vx = sin_values(-grid.kv[:, None] * c * grid.sinh_ratio, grid.N)
    Vy = cos_values(c * grid.dsinh_ratio, grid.N)
    return Vx, Vy


def harmonic_residual(v: PeriodicEvenFunction) -> float:
    """Sup-norm of the discrete Laplacian (spectral in x, 3-point in y) of the
    sampled harmonic extension of ``v`` at interior levels; O(dy^2)."""
    grid = v.grid
    u = np.asarray(v.coeffs)[:, None] * grid.sinh_ratio
    lap = (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / grid.dy**2 - grid.kv[:, None] ** 2 * u[:, 1:-1]
    return float(np.max(np.abs(cos_values(lap, grid.N)))) if lap.size else 0.0


def surface_gradient_V(w: PeriodicEvenFunction) -> tuple[PeriodicEvenFunction, PeriodicOddFunction]:
    """Top trace of grad V[w + h]: ``(1 + C w', w')``."""
    _require_zero_mean(w, "surface_gradient_V")
    wp = w.derivative()
    return 1.0 + hilbert_strip_odd(wp), wp


# ---------------------------------------------------------------------------
# Poisson problem with homogeneous Dirichlet data at y = 0 and y = -h


def poisson_modes(rhs_modes: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Solve ``u'' - (k nu)^2 u = r`` per cosine mode with zero end values.

    ``rhs_modes`` has shape (N+1, M+1) (trailing extra axes allowed); the
    boundary rows are ignored.  Second-order central differences in y.
    """
    r = np.asarray(rhs_modes, dtype=float)
    m1 = grid.M - 1
    inner = r[:, 1:-1]
    tail = inner.shape[2:]
    b = -inner.reshape(((grid.N + 1) * m1,) + tail)
    sol = cho_solve_banded((grid._poisson_factor, False), b, check_finite=False)
    out = np.zeros_like(r)
    out[:, 1:-1] = sol.reshape(inner.shape)
    return out


def poisson_dirichlet(rhs: StripField) -> StripField:
    """Discrete solution of ``Laplace u = rhs`` with ``u = 0`` on both boundaries."""
    u = poisson_modes(rhs.modes(), rhs.grid)
    return StripField.from_modes(rhs.grid, u)


def dy_top(u: np.ndarray, dy: float, order: int = 2) -> np.ndarray:
    """One-sided y-derivative at the top level (last axis-1 index).

    ``order=2`` is the 3-point stencil used inside the operator; ``order=4``
    (5-point) is kept for independent residual checks.
    """
    if order == 2:
        return (3.0 * u[..., -1] - 4.0 * u[..., -2] + u[..., -3]) / (2.0 * dy)
    if order == 4:
        return (
            25.0 * u[..., -1] - 48.0 * u[..., -2] + 36.0 * u[..., -3] - 16.0 * u[..., -4] + 3.0 * u[..., -5]
        ) / (12.0 * dy)
    raise ValueError(f"unsupported stencil order {order}")
