from __future__ import annotations

from dataclasses import dataclass

from .flows import TrivialFlow, VorticitySpec, trivial_flow
from .spectral import GridSpec


@dataclass(frozen=True)
class Problem:
    """Physical and discretisation parameters shared by all solvers."""

    grid: GridSpec
    vorticity: VorticitySpec
    g: float = 9.81
    sigma: float = 0.074
    flow_tol: float = 1e-12

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"gravity g must be positive, got {self.g}")
        if not self.sigma > 0:
            raise ValueError(f"surface tension sigma must be positive, got {self.sigma}")

    @property
    def nu(self) -> float:
        return self.grid.nu

    @property
    def h(self) -> float:
        return self.grid.h

    def flow(self, lam: float) -> TrivialFlow:
        return trivial_flow(lam, self.vorticity, self.grid, self.flow_tol)

    def with_grid(self, grid: GridSpec) -> "Problem":
        return Problem(grid, self.vorticity, self.g, self.sigma, self.flow_tol)
