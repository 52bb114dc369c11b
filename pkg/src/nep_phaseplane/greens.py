"""Green's function of the Robin problem and integral-equation checks.

For ``u'' = -q`` with ``u'(0) = alpha u(0)``, ``u'(L) = -alpha u(L)`` the
solution is ``u(x) = int_0^L g(x, xi) q(xi) dxi`` with the piecewise bilinear
kernel below.  Quadratures split at every node, so the integrands are smooth
on each side, and use the trapezoid rule with the Euler-Maclaurin endpoint
correction (fourth order on uniform grids).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import GreensFunctionError, NoMinimalSolutionError
from .problem import S_SOLUTION, ProblemSpec, SolutionProfile

# no-minimal-solution diagnosis
BLOWUP_LEVEL = 1e6
MAX_ITER = 10_000


def _check_exists(alpha: float, L: float) -> float:
    if alpha == 0:
        raise GreensFunctionError("alpha must be nonzero")
    denom = alpha * (2.0 + alpha * L)
    if abs(2.0 + alpha * L) <= 1e-14 * max(1.0, abs(alpha * L)):
        raise GreensFunctionError(
            f"no Green's function for 2 + alpha*L = 0 (alpha={alpha}, L={L})"
        )
    return denom


def greens_value(alpha: float, L: float, x, xi):
    denom = _check_exists(alpha, L)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    lo = np.minimum(x, xi)
    hi = np.maximum(x, xi)
    out = (1.0 + alpha * lo) * (1.0 + alpha * L - alpha * hi) / denom
    return out[()] if out.ndim == 0 else out


def _cumulative(y: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """int_0^{x_k} y for every k: trapezoid minus h^2/12 (y'(x_k) - y'(0))."""
    out = cumulative_trapezoid(y, xs, initial=0.0)
    if len(xs) >= 3:
        h = np.diff(xs)
        dy = np.gradient(y, xs, edge_order=2)
        hk = np.concatenate([[h[0]], h])
        out -= hk**2 / 12.0 * (dy - dy[0])
    return out


def apply_greens(alpha: float, x: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(int g(x, .) q, d/dx of it)`` at every grid node.

    The integral is split at each node and both halves are accumulated in one
    pass, so the cost is linear in the grid size.
    """
    L = float(x[-1] - x[0])
    xs = x - x[0]
    denom = _check_exists(alpha, L)
    left = _cumulative((1.0 + alpha * xs) * q, xs)
    right_w = (1.0 + alpha * L - alpha * xs) * q
    acc = _cumulative(right_w, xs)
    right = acc[-1] - acc
    value = ((1.0 + alpha * L - alpha * xs) * left + (1.0 + alpha * xs) * right) / denom
    slope = (right - left) / (2.0 + alpha * L)
    return value, slope


def integral_residual(problem: ProblemSpec, profile: SolutionProfile) -> float:
    """sup |u - lam int g f(u)| over the profile grid."""
    if problem.is_dirichlet:
        raise GreensFunctionError("the Robin Green's function needs Robin conditions")
    q = problem.model.f(profile.u)
    image, _ = apply_greens(problem.alpha, profile.x, q)
    return float(np.max(np.abs(profile.u - problem.lam * image)))


def picard_iterates(problem: ProblemSpec, n: int = 2048):
    """Yield ``u_0 = 0, u_1, u_2, ...`` with ``u_k = lam int g f(u_{k-1})``."""
    x = np.linspace(0.0, problem.L, n + 1)
    u = np.zeros_like(x)
    f = problem.model.f
    while True:
        yield x, u
        u, _ = apply_greens(problem.alpha, x, f(u))
        u = problem.lam * u


def picard_minimal(
    problem: ProblemSpec, tol: float = 1e-12, max_iter: int = MAX_ITER, n: int = 2048
) -> SolutionProfile:
    """Minimal solution for alpha > 0 by monotone Picard iteration from zero."""
    if problem.is_dirichlet or problem.alpha <= 0:
        raise ValueError("the minimal-solution iteration needs Robin conditions with alpha > 0")
    f = problem.model.f
    x = np.linspace(0.0, problem.L, n + 1)
    u = np.zeros_like(x)
    prev_update = math.inf
    growing = False
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            image, slope = apply_greens(problem.alpha, x, f(u))
        new = problem.lam * image
        update = float(np.max(np.abs(new - u)))
        growing = update > prev_update
        prev_update = update
        u = new
        if not np.all(np.isfinite(u)) or np.max(u) > BLOWUP_LEVEL:
            raise NoMinimalSolutionError(
                f"Picard iterates exceeded {BLOWUP_LEVEL:g} after {it} steps; lambda is beyond the fold"
            )
        if update < tol * max(1.0, float(np.max(np.abs(u)))):
            break
    else:
        reason = "still growing" if growing else "not converged"
        raise NoMinimalSolutionError(f"Picard iteration {reason} after {max_iter} steps")
    pot = problem.potential()
    v = math.sqrt(problem.lam) * slope
    C = 0.5 * v[0] ** 2 + float(pot.F(u[0]))
    return SolutionProfile(
        x=x, u=u, v=v, C=C, cls=S_SOLUTION, lam=problem.lam, alpha=problem.alpha,
        model=problem.model, meta={"picard_iterations": it},
    )


def compatibility_defect(profile: SolutionProfile, L: float | None = None) -> float:
    """int_0^L (x - L/2) f(u(x)) dx, which vanishes for solutions at alpha = -2/L."""
    if L is None:
        L = profile.L
    x = profile.x - profile.x[0]
    return float(trapezoid((x - 0.5 * L) * profile.model.f(profile.u), x))
