"""Problem description and sampled solution profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nonlin import NonlinearModel, Potential, default_convention, potential

ROBIN = "robin"
DIRICHLET = "dirichlet"

# trajectory class tags
S_SOLUTION = "s_solution"
I_SOLUTION = "i_solution"
D_SOLUTION = "d_solution"
C_SOLUTION = "c_solution"
NO_SOLUTION = "none"
CLASS_TAGS = (S_SOLUTION, I_SOLUTION, D_SOLUTION, C_SOLUTION, NO_SOLUTION)


@dataclass(frozen=True)
class ProblemSpec:
    """u'' + lam f(u) = 0 on (0, L) with Robin (alpha) or Dirichlet conditions."""

    L: float
    lam: float
    model: NonlinearModel
    alpha: float | None = None
    bc: str = ROBIN
    convention: str | None = None

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.bc not in (ROBIN, DIRICHLET):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.bc == ROBIN and (self.alpha is None or self.alpha == 0):
            raise ValueError("Robin conditions need a nonzero alpha")
        if self.convention is None:
            alpha = self.alpha if self.bc == ROBIN else None
            object.__setattr__(self, "convention", default_convention(self.model, alpha))

    @property
    def is_dirichlet(self) -> bool:
        return self.bc == DIRICHLET

    @property
    def gamma_star(self) -> float:
        if self.is_dirichlet:
            raise ValueError("gamma* is only defined for Robin conditions")
        return math.sqrt(self.lam) / self.alpha

    def potential(self) -> Potential:
        return potential(self.model, self.convention)

    def with_length(self, L: float) -> ProblemSpec:
        return ProblemSpec(L, self.lam, self.model, self.alpha, self.bc, self.convention)

    def with_lambda(self, lam: float) -> ProblemSpec:
        return ProblemSpec(self.L, lam, self.model, self.alpha, self.bc, self.convention)


@dataclass
class SolutionProfile:
    """Samples of u and v = u'/sqrt(lam) on a grid over [0, L]."""

    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    C: float
    cls: str
    lam: float
    alpha: float | None
    model: NonlinearModel
    bc: str = ROBIN
    meta: dict = field(default_factory=dict)

    @property
    def model_name(self) -> str:
        return self.model.name

    @property
    def L(self) -> float:
        return float(self.x[-1] - self.x[0])

    @property
    def h(self) -> float:
        return float(np.max(np.diff(self.x)))

    @property
    def du(self) -> np.ndarray:
        return math.sqrt(self.lam) * self.v

    @property
    def u_max(self) -> float:
        return float(np.max(self.u))

    def boundary_residuals(self) -> tuple[float, float]:
        if self.bc == DIRICHLET:
            return abs(float(self.u[0])), abs(float(self.u[-1]))
        du = self.du
        return (
            abs(float(du[0] - self.alpha * self.u[0])),
            abs(float(du[-1] + self.alpha * self.u[-1])),
        )

    def energy_drift(self, pot: Potential) -> float:
        return float(np.max(np.abs(0.5 * self.v**2 + pot.F(self.u) - self.C)))

    def reflected(self) -> SolutionProfile:
        """The mirror image x -> L - x (again a solution for symmetric conditions)."""
        tag = {I_SOLUTION: D_SOLUTION, D_SOLUTION: I_SOLUTION}.get(self.cls, self.cls)
        return SolutionProfile(
            x=self.x[-1] - self.x[::-1] + self.x[0],
            u=self.u[::-1].copy(),
            v=-self.v[::-1],
            C=self.C,
            cls=tag,
            lam=self.lam,
            alpha=self.alpha,
            model=self.model,
            bc=self.bc,
            meta=dict(self.meta),
        )


def classify_profile(u: np.ndarray, alpha: float | None, sym_tol: float = 1e-6) -> str:
    """Shape tag of a sampled solution from its sign and monotonicity pattern."""
    if alpha is None or alpha > 0:
        return S_SOLUTION
    scale = max(1.0, float(np.max(np.abs(u))))
    if abs(u[0] - u[-1]) <= sym_tol * scale and np.max(np.abs(u - u[::-1])) <= 1e3 * sym_tol * scale:
        return S_SOLUTION
    du = np.diff(u)
    if np.all(du > 0):
        return I_SOLUTION
    if np.all(du < 0):
        return D_SOLUTION
    return C_SOLUTION
