"""Steady periodic capillary-gravity waves with vorticity: bifurcation and continuation."""

__version__ = "0.1.0"

from .continuation import Branch, ContinuationConfig, run_branch, switch_branch  # noqa: E402
from .dispersion import BifurcationPoint, dispersion_value, find_bifurcation_points  # noqa: E402
from .flows import VorticitySpec, trivial_flow  # noqa: E402
from .operator import State, diagnostics  # noqa: E402
from .problem import Problem  # noqa: E402
from .spectral import GridSpec  # noqa: E402

__all__ = [
    "GridSpec",
    "VorticitySpec",
    "Problem",
    "State",
    "BifurcationPoint",
    "ContinuationConfig",
    "Branch",
    "trivial_flow",
    "dispersion_value",
    "find_bifurcation_points",
    "switch_branch",
    "run_branch",
    "diagnostics",
]
