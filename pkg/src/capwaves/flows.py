"""Vorticity functions and laminar (flat-surface) flows."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import solve_ivp

from .spectral import GridSpec

__all__ = ["VorticitySpec", "TrivialFlow", "TrivialFlowError", "trivial_flow", "is_unidirectional"]


class TrivialFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class VorticitySpec:
    """Polynomial vorticity function ``gamma(s) = sum_n coeffs[n] s**n``.

    ``family`` only records how the function was specified (``constant``,
    ``affine`` or ``poly``) so that closed forms can be looked up.
    """

    family: str
    coeffs: tuple

    def __post_init__(self):
        if self.family not in ("constant", "affine", "poly"):
            raise ValueError(f"unknown vorticity family {self.family!r}")
        c = tuple(float(v) for v in self.coeffs)
        if not c or not all(np.isfinite(c)):
            raise ValueError("vorticity coefficients must be finite and non-empty")
        object.__setattr__(self, "coeffs", c)
        if len(np.trim_zeros(np.array(c), "b")) > 2:
            warnings.warn(
                "polynomial vorticity of degree >= 2 has unbounded gamma'; results are valid "
                "only where the laminar flows exist on [-h, 0]",
                stacklevel=3,
            )

    @classmethod
    def constant(cls, gamma: float) -> "VorticitySpec":
        return cls("constant", (gamma,))

    @classmethod
    def affine(cls, a: float, b: float) -> "VorticitySpec":
        """``gamma(s) = a s + b``."""
        return cls("affine", (b, a))

    @classmethod
    def poly(cls, coeffs) -> "VorticitySpec":
        return cls("poly", tuple(coeffs))

    @classmethod
    def parse(cls, text: str) -> "VorticitySpec":
        """Parse ``constant:G``, ``affine:A,B`` or ``poly:c0,c1,...``."""
        try:
            kind, _, rest = text.strip().partition(":")
            vals = [float(v) for v in rest.split(",") if v.strip()]
        except ValueError as exc:
            raise ValueError(f"malformed vorticity spec {text!r}") from exc
        kind = kind.strip().lower()
        if kind == "constant" and len(vals) == 1:
            return cls.constant(vals[0])
        if kind == "affine" and len(vals) == 2:
            return cls.affine(vals[0], vals[1])
        if kind == "poly" and vals:
            return cls.poly(vals)
        raise ValueError(f"malformed vorticity spec {text!r}")

    def __str__(self) -> str:
        if self.family == "constant":
            return f"constant:{self.coeffs[0]!r}"
        if self.family == "affine":
            b, a = (self.coeffs + (0.0,))[:2]
            return f"affine:{a!r},{b!r}"
        return "poly:" + ",".join(repr(c) for c in self.coeffs)

    @property
    def a(self) -> float:
        """Slope of an affine vorticity (0 for constant)."""
        return self.coeffs[1] if len(self.coeffs) > 1 else 0.0

    @property
    def b(self) -> float:
        return self.coeffs[0]

    @property
    def is_affine(self) -> bool:
        return len(np.trim_zeros(np.array(self.coeffs), "b")) <= 2

    def gamma(self, s):
        return P.polyval(s, self.coeffs)

    def dgamma(self, s):
        return P.polyval(s, P.polyder(self.coeffs)) if len(self.coeffs) > 1 else np.zeros_like(s, dtype=float)

    def d2gamma(self, s):
        return P.polyval(s, P.polyder(self.coeffs, 2)) if len(self.coeffs) > 2 else np.zeros_like(s, dtype=float)

    def primitive(self, s):
        """``int_0^s gamma``."""
        return P.polyval(s, P.polyint(self.coeffs))


@dataclass(frozen=True, eq=False)
class TrivialFlow:
    """Laminar stream function sampled on the y-levels of a grid.

    ``psi_lam`` is the derivative of the profile with respect to the surface
    velocity ``lam`` (variational solution).
    """

    lam: float
    vorticity: VorticitySpec
    y: np.ndarray
    psi: np.ndarray
    psi_y: np.ndarray
    psi_lam: np.ndarray
    psi_lam_y: np.ndarray

    @property
    def m(self) -> float:
        return -float(self.psi[0])

    @property
    def dm_dlam(self) -> float:
        return -float(self.psi_lam[0])

    @property
    def bottom_state(self) -> np.ndarray:
        """``(psi, psi_y, psi_lam, psi_lam_y)`` at y = -h, seed for upward shooting."""
        return np.array([self.psi[0], self.psi_y[0], self.psi_lam[0], self.psi_lam_y[0]])


def _rhs(vort: VorticitySpec):
    def f(_y, u):
        psi, dpsi, z, dz = u
        return [dpsi, -vort.gamma(psi), dz, -vort.dgamma(psi) * z]

    return f


@lru_cache(maxsize=512)
def _trivial_flow(lam: float, vort: VorticitySpec, h: float, M: int, tol: float) -> TrivialFlow:
    y = -h + np.arange(M + 1) * (h / M)
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(
            _rhs(vort), (0.0, -h), [0.0, lam, 0.0, 1.0], method="DOP853", rtol=tol, atol=tol, t_eval=y[::-1]
        )
    if sol.status != 0 or sol.y.shape[1] != M + 1 or not np.all(np.isfinite(sol.y)):
        raise TrivialFlowError(f"trivial flow does not reach -h (lambda={lam!r}): {sol.message}")
    u = sol.y[:, ::-1]
    return TrivialFlow(float(lam), vort, y, u[0], u[1], u[2], u[3])


def trivial_flow(lam: float, vort: VorticitySpec, grid: GridSpec, tol: float = 1e-12) -> TrivialFlow:
    """Integrate ``psi'' = -gamma(psi)``, ``psi(0)=0``, ``psi'(0)=lam`` from 0 down to -h.

    The variational equation for ``d psi / d lam`` is integrated alongside.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    return _trivial_flow(float(lam), vort, float(grid.h), int(grid.M), float(tol))


def is_unidirectional(flow: TrivialFlow) -> bool:
    """True iff the laminar horizontal velocity is negative on every level."""
    return bool(np.all(flow.psi_y < 0.0))
