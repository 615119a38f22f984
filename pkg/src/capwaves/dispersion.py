"""Dispersion relation of the linearisation at laminar flows.

``beta`` solves ``beta'' + (gamma'(psi^lam) + mu) beta = 0`` on ``[-h, 0]`` with
``beta(-h) = 0``, ``beta(0) = 1``; the dispersion function is

    d(mu, lam) = beta_y(0) + sigma mu / lam**2 + gamma(0) / lam - g / lam**2

and is set to ``+inf`` when ``mu`` lies in the Dirichlet spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .flows import TrivialFlow, VorticitySpec, is_unidirectional
from .problem import Problem

__all__ = [
    "BetaProfile",
    "BifurcationPoint",
    "PruferResult",
    "SturmLiouvilleResult",
    "ConsistencyError",
    "beta_profile",
    "dispersion_value",
    "dispersion_lambda_derivative",
    "prufer_beta_slope",
    "beta_bounds",
    "slope_function",
    "closed_form_beta_slope",
    "closed_form_lambdas",
    "kernel_wavenumbers",
    "find_bifurcation_points",
    "sturm_liouville_check",
    "dispersion_table",
]

SPECTRUM_TOL = 1e-8
ROOT_TOL = 1e-10
KERNEL_TOL = 1e-8


class ConsistencyError(RuntimeError):
    """Two independent computations of the same quantity disagree."""


@dataclass(frozen=True, eq=False)
class BetaProfile:
    mu: float
    lam: float
    y: np.ndarray
    beta: np.ndarray
    beta_y0: float
    in_dirichlet_spectrum: bool
    tilde_beta0: float


@dataclass(frozen=True)
class PruferResult:
    slope: float
    branch_index: int
    theta0: float
    in_dirichlet_spectrum: bool


@dataclass
class BifurcationPoint:
    lambda0: float
    k0: int
    mu0: float
    d_value: float
    d_lambda: float
    kernel_dim: int
    kernel_ks: list = field(default_factory=list)
    closed_form_lambda: float | None = None
    flag: str | None = None

    @property
    def transversal(self) -> bool:
        return self.flag != "tangential"


def _shoot(mu: float, flow: TrivialFlow, tol: float, t_eval=None, with_lambda: bool = False):
    """Integrate the beta-problem upward from y=-h together with the laminar profile.

    State: psi, psi', [z, z'], b, b', [p, p'] where z = d psi/d lam and p is the
    particular solution of the lambda-differentiated problem (unnormalised).
    """
    vort = flow.vorticity
    h = -float(flow.y[0])
    s = flow.bottom_state
    if with_lambda:
        y0 = [s[0], s[1], s[2], s[3], 0.0, 1.0, 0.0, 0.0]

        def f(_y, u):
            psi, dpsi, z, dz, b, db, p, dp = u
            g1 = vort.dgamma(psi)
            return [dpsi, -vort.gamma(psi), dz, -g1 * z, db, -(g1 + mu) * b, dp,
                    -(g1 + mu) * p - vort.d2gamma(psi) * b * z]
    else:
        y0 = [s[0], s[1], 0.0, 1.0]

        def f(_y, u):
            psi, dpsi, b, db = u
            return [dpsi, -vort.gamma(psi), db, -(vort.dgamma(psi) + mu) * b]

    sol = solve_ivp(f, (-h, 0.0), y0, method="DOP853", rtol=tol, atol=tol * 1e-3, t_eval=t_eval)
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        raise RuntimeError(f"beta shooting failed for mu={mu!r}: {sol.message}")
    return sol


def beta_profile(mu: float, flow: TrivialFlow, tol: float = 1e-12, spectrum_tol: float = SPECTRUM_TOL) -> BetaProfile:
    sol = _shoot(mu, flow, tol, t_eval=flow.y)
    bt, dbt = sol.y[2], sol.y[3]
    b0 = float(bt[-1])
    in_spec = abs(b0) < spectrum_tol * float(np.max(np.abs(bt)))
    if in_spec:
        return BetaProfile(mu, flow.lam, flow.y, bt.copy(), math.inf, True, b0)
    return BetaProfile(mu, flow.lam, flow.y, bt / b0, float(dbt[-1] / b0), False, b0)


def dispersion_value(mu: float, lam: float, problem: Problem, tol: float = 1e-12) -> float:
    if lam == 0:
        raise ValueError("dispersion relation is undefined at lambda = 0")
    flow = problem.flow(lam)
    bp = beta_profile(mu, flow, tol)
    if bp.in_dirichlet_spectrum:
        return math.inf
    g0 = float(problem.vorticity.gamma(0.0))
    return bp.beta_y0 + problem.sigma * mu / lam**2 + g0 / lam - problem.g / lam**2


def dispersion_lambda_derivative(mu: float, lam: float, problem: Problem, tol: float = 1e-12) -> float:
    """``d_lambda`` via the lambda-differentiated beta problem (shooting superposition)."""
    if lam == 0:
        raise ValueError("dispersion relation is undefined at lambda = 0")
    flow = problem.flow(lam)
    sol = _shoot(mu, flow, tol, with_lambda=True)
    bt, dbt, pt, dpt = sol.y[4], sol.y[5], sol.y[6], sol.y[7]
    b0 = bt[-1]
    if abs(b0) < SPECTRUM_TOL * np.max(np.abs(bt)):
        raise ValueError(f"mu={mu!r} lies in the Dirichlet spectrum; d_lambda undefined")
    # forcing used beta-tilde, the true forcing uses beta = beta-tilde / b0
    p0, dp0 = pt[-1] / b0, dpt[-1] / b0
    dbeta_y0 = dp0 - p0 * dbt[-1] / b0
    g0 = float(problem.vorticity.gamma(0.0))
    return float(dbeta_y0 - 2 * problem.sigma * mu / lam**3 - g0 / lam**2 + 2 * problem.g / lam**3)


def prufer_beta_slope(mu: float, flow: TrivialFlow, tol: float = 1e-12, spectrum_tol: float = SPECTRUM_TOL) -> PruferResult:
    """``beta_y(0) = cot(theta(0))`` from the Pruefer angle of the Dirichlet IVP at -h."""
    vort = flow.vorticity
    h = -float(flow.y[0])
    s = flow.bottom_state

    def f(_y, u):
        psi, dpsi, th = u
        c, sn = math.cos(th), math.sin(th)
        return [dpsi, -vort.gamma(psi), c * c + (vort.dgamma(psi) + mu) * sn * sn]

    sol = solve_ivp(f, (-h, 0.0), [s[0], s[1], 0.0], method="DOP853", rtol=tol, atol=tol * 1e-3)
    if sol.status != 0:
        raise RuntimeError(f"Pruefer integration failed: {sol.message}")
    th0 = float(sol.y[2, -1])
    sn = math.sin(th0)
    branch = math.floor(th0 / math.pi)
    if abs(sn) < spectrum_tol:
        return PruferResult(math.inf, branch, th0, True)
    return PruferResult(math.cos(th0) / sn, branch, th0, False)


def slope_function(z: float, h: float) -> float:
    """``v(z) = sqrt(-z) coth(h sqrt(-z))`` continued analytically to z >= 0."""
    if z < 0:
        r = math.sqrt(-z)
        return r / math.tanh(h * r)
    if z == 0:
        return 1.0 / h
    r = math.sqrt(z)
    sn = math.sin(h * r)
    return math.inf if sn == 0 else r * math.cos(h * r) / sn


def _gamma_prime_range(flow: TrivialFlow) -> tuple[float, float]:
    gp = np.atleast_1d(flow.vorticity.dgamma(flow.psi))
    return float(np.min(gp)), float(np.max(gp))


def beta_bounds(mu: float, flow: TrivialFlow) -> tuple[float, float, int] | None:
    """Lower/upper bounds on ``beta_y(0)`` and the interval index j, or None outside all I_j."""
    h = -float(flow.y[0])
    lo, hi = _gamma_prime_range(flow)
    q = math.pi**2 / h**2
    j = None
    if mu < q - hi:
        j = 0
    else:
        n = max(1, int(math.sqrt(max(mu + lo, 0.0) / q)))
        for cand in (n - 1, n, n + 1):
            if cand >= 1 and cand**2 * q - lo < mu < (cand + 1) ** 2 * q - hi:
                j = cand
                break
    if j is None:
        return None
    return slope_function(mu + hi, h), slope_function(mu + lo, h), j


def closed_form_beta_slope(mu: float, vort: VorticitySpec, h: float) -> float:
    """``beta_y(0)`` for constant or affine vorticity (gamma' = a constant)."""
    if not vort.is_affine:
        raise ValueError("closed form only available for constant/affine vorticity")
    return slope_function(vort.a + mu, h)


def closed_form_lambdas(k: int, problem: Problem) -> tuple[float, ...]:
    """Roots in lambda of ``d(-(k nu)^2, lambda) = 0`` for constant/affine vorticity.

    Solves ``B lam^2 + b lam - (sigma l^2 + g) = 0`` with ``B = beta_y(0)``; returns
    ``(lam_plus, lam_minus)`` in the ``(-b +- sqrt(disc)) / 2B`` labelling.
    """
    vort = problem.vorticity
    l2 = (k * problem.nu) ** 2
    B = closed_form_beta_slope(-l2, vort, problem.h)
    b = vort.b
    c = problem.sigma * l2 + problem.g
    if not math.isfinite(B):
        return ()
    if B == 0:
        return (c / b,) if b != 0 else ()
    disc = b * b + 4 * B * c
    if disc < 0:
        return ()
    r = math.sqrt(disc)
    return ((-b + r) / (2 * B), (-b - r) / (2 * B))


def kernel_wavenumbers(lam: float, problem: Problem, K_max: int, tol: float = KERNEL_TOL) -> list[int]:
    ks = []
    for k in range(1, K_max + 1):
        d = dispersion_value(-((k * problem.nu) ** 2), lam, problem)
        if math.isfinite(d) and abs(d) < tol:
            ks.append(k)
    return ks


def find_bifurcation_points(
    k0: int,
    problem: Problem,
    lambda_window: tuple[float, float],
    n_samples: int = 400,
    K_max: int | None = None,
) -> list[BifurcationPoint]:
    """Roots of ``lam -> d(-(k0 nu)^2, lam)`` inside a window not containing 0."""
    if k0 < 1:
        raise ValueError("k0 must be >= 1")
    a, b = sorted(map(float, lambda_window))
    if a <= 0 <= b:
        raise ValueError("lambda window must not contain 0")
    K_max = max(20, 4 * k0) if K_max is None else K_max
    mu0 = -((k0 * problem.nu) ** 2)

    def d(lam):
        return dispersion_value(mu0, lam, problem)

    lams = np.linspace(a, b, n_samples)
    vals = np.array([d(l) for l in lams])
    roots: list[tuple[float, str | None]] = []
    for i in range(n_samples - 1):
        v0, v1 = vals[i], vals[i + 1]
        if not (np.isfinite(v0) and np.isfinite(v1)):
            continue
        if v0 == 0.0:
            roots.append((lams[i], None))
        elif v0 * v1 < 0:
            r = brentq(d, lams[i], lams[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            if abs(d(r)) < ROOT_TOL:
                roots.append((r, None))
    if vals[-1] == 0.0:
        roots.append((lams[-1], None))
    # tangential roots: local minima of |d| without a sign change
    absv = np.abs(vals)
    for i in range(1, n_samples - 1):
        if not np.all(np.isfinite(vals[i - 1 : i + 2])):
            continue
        if absv[i] <= absv[i - 1] and absv[i] <= absv[i + 1] and vals[i - 1] * vals[i + 1] > 0 and vals[i] * vals[i - 1] > 0:
            res = minimize_scalar(lambda l: abs(d(l)), bounds=(lams[i - 1], lams[i + 1]), method="bounded",
                                  options={"xatol": 1e-14})
            if res.fun < ROOT_TOL:
                roots.append((float(res.x), "tangential"))

    closed = closed_form_lambdas(k0, problem) if problem.vorticity.is_affine else ()
    out = []
    for lam0, flag in sorted(roots):
        ks = kernel_wavenumbers(lam0, problem, K_max)
        if k0 not in ks:
            ks = sorted(set(ks) | {k0})
        dl = dispersion_lambda_derivative(mu0, lam0, problem)
        cf = None
        if closed:
            cf = min(closed, key=lambda c: abs(c - lam0))
            if abs(cf - lam0) > 1e-8 * max(1.0, abs(lam0)):
                raise ConsistencyError(f"shooting root {lam0!r} disagrees with closed form {cf!r}")
        if flag is None and len(ks) > 1:
            flag = "multiple_kernel"
        out.append(BifurcationPoint(float(lam0), k0, mu0, d(lam0), dl, len(ks), ks, cf, flag))
    return out


# ---------------------------------------------------------------------------
# unidirectional flows: equivalent Sturm-Liouville problem in the stream variable


@dataclass(frozen=True)
class SturmLiouvilleResult:
    mus: tuple
    p0: float
    wahlen_integral: float
    wahlen_condition: bool


def sturm_liouville_check(
    lam: float, problem: Problem, mu_window: tuple[float, float], n_samples: int = 400, tol: float = 1e-12
) -> SturmLiouvilleResult:
    """Eigenvalues of ``(a^3 v')' = -mu a v`` on ``[p0, 0]`` with ``v(p0) = 0`` and
    ``a^3(0) v'(0) = (g - sigma mu) v(0)``, where ``a = sqrt(lam^2 + 2 Gamma)``.
    """
    if not lam < 0:
        raise ValueError("Sturm-Liouville reformulation requires lambda < 0")
    vort = problem.vorticity
    flow = problem.flow(lam)
    if not is_unidirectional(flow):
        raise ValueError("laminar flow is not unidirectional (psi_y must be < 0 on [-h, 0])")
    p0 = flow.m

    def Gamma(p):
        return -vort.primitive(-p)

    pp = np.linspace(p0, 0.0, 2001)
    if not lam**2 > -2.0 * float(np.min(Gamma(pp))):
        raise ValueError("lambda^2 > -2 min Gamma violated")

    def a(p):
        return math.sqrt(lam**2 + 2.0 * Gamma(p))

    def rhs_factory(mu):
        def f(p, u):
            ap = a(p)
            return [u[1] / ap**3, -mu * ap * u[0]]

        return f

    def D(mu):
        sol = solve_ivp(rhs_factory(mu), (p0, 0.0), [0.0, 1.0], method="DOP853", rtol=tol, atol=tol * 1e-3)
        v0, q0 = sol.y[0, -1], sol.y[1, -1]
        scale = max(1.0, np.max(np.abs(sol.y[1])))
        return (q0 - (problem.g - problem.sigma * mu) * v0) / scale

    lo, hi = sorted(mu_window)
    mus = np.linspace(lo, hi, n_samples)
    vals = np.array([D(m) for m in mus])
    roots = []
    for i in range(n_samples - 1):
        if vals[i] == 0.0:
            roots.append(float(mus[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(brentq(D, mus[i], mus[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    integral = quad(lambda p: a(p) ** -3, p0, 0.0, epsabs=1e-13, epsrel=1e-12)[0]
    return SturmLiouvilleResult(tuple(roots), p0, integral, integral < 1.0 / problem.g)


def dispersion_table(problem: Problem, ks, lambdas):
    """Rows ``(k, lam, d, in_spectrum, branch_index)`` for a (k, lambda) grid."""
    rows = []
    for lam in lambdas:
        flow = problem.flow(lam)
        for k in ks:
            mu = -((k * problem.nu) ** 2)
            pr = prufer_beta_slope(mu, flow)
            d = dispersion_value(mu, lam, problem)
            rows.append((int(k), float(lam), d, not math.isfinite(d), pr.branch_index))
    return rows
