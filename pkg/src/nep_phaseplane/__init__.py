"""Phase-plane analysis of u'' + lam f(u) = 0 with Robin or Dirichlet data."""

from .errors import NepError
from .nonlin import builtin_model, load_model, model_from_expression, potential, resolve_model
from .problem import DIRICHLET, ROBIN, ProblemSpec, SolutionProfile

__all__ = [
    "NepError",
    "builtin_model",
    "load_model",
    "model_from_expression",
    "potential",
    "resolve_model",
    "DIRICHLET",
    "ROBIN",
    "ProblemSpec",
    "SolutionProfile",
]
__version__ = "0.1.0"
