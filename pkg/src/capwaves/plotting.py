"""Report figures written to files (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .operator import surface_polyline  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_trivial(path, lambdas, m, profiles, y):
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(9, 3.6))
    a0.plot(lambdas, m, "k-")
    a0.set_xlabel(r"$\lambda$")
    a0.set_ylabel(r"$m(\lambda)$")
    for lam, psi in profiles:
        a1.plot(psi, y, label=f"{lam:.3g}")
    a1.set_xlabel(r"$\psi^\lambda$")
    a1.set_ylabel("y")
    if profiles:
        a1.legend(title=r"$\lambda$", fontsize="small")
    return _save(fig, path)


def plot_dispersion(path, rows, clip: float = 20.0):
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = sorted({r[0] for r in rows})
    for k in ks:
        sel = [(r[1], r[2]) for r in rows if r[0] == k]
        lam = np.array([s[0] for s in sel])
        d = np.array([s[1] for s in sel], dtype=float)
        d[~np.isfinite(d)] = np.nan
        ax.plot(lam, np.clip(d, -clip, clip), label=f"k={k}")
    ax.axhline(0.0, color="0.5", lw=0.8)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$d(-(k\nu)^2, \lambda)$")
    ax.legend(fontsize="small", ncol=2)
    return _save(fig, path)


def plot_branch(path, problem, branch, n_profiles: int = 5):
    pts = branch.points
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(10, 3.8))
    lam = [p.state.lam for p in pts]
    amp = [p.diagnostics.amplitude for p in pts]
    a0.plot([branch.origin.lambda0] + lam, [0.0] + amp, "k.-")
    a0.set_xlabel(r"$\lambda$")
    a0.set_ylabel(r"max $|w|$")
    a0.set_title(branch.termination, fontsize="small")
    if pts:
        idx = np.unique(np.linspace(0, len(pts) - 1, min(n_profiles, len(pts))).astype(int))
        L = problem.grid.L
        for i in idx:
            X, Y = surface_polyline(pts[i].state.w, oversample=4)
            a1.plot(np.append(X, X[0] + L), np.append(Y, Y[0]), label=f"step {pts[i].step}")
        a1.axhline(0.0, color="0.3", lw=1.0)
        a1.set_xlabel("x")
        a1.set_ylabel("surface height above bed")
        a1.legend(fontsize="small")
    return _save(fig, path)
