"""Linearized eigenproblem phi'' + mu f'(u) phi = 0 around a solution.

Discretized with piecewise-linear elements and a lumped weight on a uniform
grid, which gives the symmetric tridiagonal pencil ``A phi = mu W phi`` with

    A = K + alpha (e_0 e_0^T + e_N e_N^T),   W = diag(h_i f'(u_i)),

where K is the P1 stiffness matrix and h_i the nodal control-volume widths.
The Robin terms come from the boundary part of the weak form.  The weight
f'(u) may span many orders of magnitude (exp(u) at u = -30), so eigenvalues
are located by inertia counts on the unscaled pencil rather than by
symmetrizing with W^{-1/2}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import WeightError
from .problem import ProblemSpec, SolutionProfile


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray  # ascending
    n: int  # number of grid intervals
    error_estimate: np.ndarray  # |mu(h) - mu(2h)| / 3 per eigenvalue
    problem: ProblemSpec | None = None
    eigenvectors: np.ndarray | None = None

    @property
    def mu1(self) -> float:
        return float(self.eigenvalues[0])


def _resample(profile: SolutionProfile, n: int | None) -> tuple[np.ndarray, np.ndarray]:
    x, u = profile.x, profile.u
    if n is None or n == len(x) - 1:
        return x, u
    xn = np.linspace(x[0], x[-1], n + 1)
    return xn, np.interp(xn, x, u)


def pencil(alpha: float | None, x: np.ndarray, weight: np.ndarray):
    """Diagonals of A and W on the grid ``x`` (boundary nodes dropped for Dirichlet)."""
    h = np.diff(x)
    diag = np.zeros(len(x))
    diag[:-1] += 1.0 / h
    diag[1:] += 1.0 / h
    off = -1.0 / h
    vol = np.zeros(len(x))
    vol[:-1] += 0.5 * h
    vol[1:] += 0.5 * h
    w = vol * weight
    if alpha is None:
        return diag[1:-1], off[1:-1], w[1:-1]
    diag[0] += alpha
    diag[-1] += alpha
    return diag, off, w


def inertia_count(diag, off, w, sigma) -> np.ndarray:
    """Number of pencil eigenvalues below each shift in ``sigma``.

    Sylvester's law of inertia: with W positive definite this equals the
    number of negative pivots of the LDL^T factorization of A - sigma W.
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    tiny = np.finfo(float).tiny
    e2 = off * off
    count = np.zeros(sigma.shape, dtype=int)
    d = diag[0] - sigma * w[0]
    d = np.where(d == 0.0, -tiny, d)
    count += d < 0
    for i in range(1, len(diag)):
        d = (diag[i] - sigma * w[i]) - e2[i - 1] / d
        d = np.where(d == 0.0, -tiny, d)
        count += d < 0
    return count


def _bracket(diag, off, w, k):
    lo, hi = -1.0, 1.0
    while inertia_count(diag, off, w, lo)[0] > 0:
        lo *= 4.0
    while inertia_count(diag, off, w, hi)[0] < k:
        hi *= 4.0
    return lo, hi


def _multisection(diag, off, w, k, points=31):
    """The k smallest pencil eigenvalues to nearly full precision."""
    lo0, hi0 = _bracket(diag, off, w, k)
    lo = np.full(k, lo0)
    hi = np.full(k, hi0)
    j = np.arange(k)
    frac = np.linspace(0.0, 1.0, points + 2)[1:-1]
    for _ in range(100):
        width = hi - lo
        if np.all(width <= 4 * np.finfo(float).eps * np.maximum(np.abs(lo), np.abs(hi)) + 1e-300):
            break
        sig = lo[:, None] + width[:, None] * frac[None, :]
        cnt = inertia_count(diag, off, w, sig.ravel()).reshape(sig.shape)
        below = cnt <= j[:, None]  # shift still at or below mu_j
        for r in range(k):
            b = np.flatnonzero(below[r])
            a = np.flatnonzero(~below[r])
            if b.size:
                lo[r] = max(lo[r], sig[r, b[-1]])
            if a.size:
                hi[r] = min(hi[r], sig[r, a[0]])
    return 0.5 * (lo + hi)


def _inverse_iteration(diag, off, w, mu, iters=3):
    n = len(diag)
    x = np.ones(n) / math.sqrt(n)
    x[::2] += 0.1  # break symmetry of the start vector
    ab = np.zeros((3, n))
    ab[0, 1:], ab[2, :-1] = off, off
    shift = mu + 1e-12 * max(1.0, abs(mu))
    ab[1] = diag - shift * w
    for _ in range(iters):
        x = solve_banded((1, 1), ab, w * x)
        x /= math.sqrt(float(np.dot(w * x, x)))
    return x


def _smallest(diag, off, w, k, vectors=False):
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise WeightError("f'(u) must be positive along the profile")
    k = min(k, len(diag))
    vals = _multisection(diag, off, w, k)
    if not vectors:
        return vals, None
    vecs = np.column_stack([_inverse_iteration(diag, off, w, mu) for mu in vals])
    return vals, vecs


def linearized_spectrum(
    problem: ProblemSpec, profile: SolutionProfile, k: int = 4, n: int | None = None, vectors: bool = False
) -> SpectrumResult:
    """The k smallest mu with a grid-doubling error estimate.

    ``n`` resamples the profile onto n intervals first; by default the profile
    grid is used as is.
    """
    x, u = _resample(profile, n)
    if len(x) < 65:
        raise ValueError("need at least 64 grid intervals")
    alpha = None if problem.is_dirichlet else problem.alpha
    fp = problem.model.f_prime(u)
    if np.any(fp <= 0):
        raise WeightError(f"f'(u) <= 0 at {int(np.sum(fp <= 0))} grid points")
    vals, vecs = _smallest(*pencil(alpha, x, fp), k, vectors)
    coarse = None
    if (len(x) - 1) % 2 == 0:
        xc, fc = x[::2], fp[::2]
        coarse, _ = _smallest(*pencil(alpha, xc, fc), k)
    err = np.abs(vals - coarse) / 3.0 if coarse is not None else np.full(len(vals), np.nan)
    return SpectrumResult(vals, len(x) - 1, err, problem, vecs)


def rayleigh_quotient(problem: ProblemSpec, profile: SolutionProfile, psi: np.ndarray) -> float:
    """(int psi'^2 + alpha (psi(0)^2 + psi(L)^2)) / int f'(u) psi^2 on the profile grid."""
    psi = np.array(psi, dtype=float)
    x = profile.x
    h = np.diff(x)
    vol = np.zeros(len(x))
    vol[:-1] += 0.5 * h
    vol[1:] += 0.5 * h
    if problem.is_dirichlet:
        psi[0] = psi[-1] = 0.0
        boundary = 0.0
    else:
        boundary = problem.alpha * (psi[0] ** 2 + psi[-1] ** 2)
    # sum of squared differences, not psi^T A psi: the expanded form cancels badly
    num = float(np.sum(np.diff(psi) ** 2 / h)) + boundary
    return num / float(np.dot(vol * problem.model.f_prime(profile.u) * psi, psi))


def steklov_reference(L: float, n: int = 64, vectors: bool = False):
    """Eigenvalues of phi'' = 0 with outward normal derivative = mu phi at both ends.

    The interior unknowns are eliminated exactly (Schur complement), leaving a
    2x2 problem on the boundary values.  With ``vectors`` the eigenfunction of
    the larger eigenvalue is returned on the grid too.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    x = np.linspace(0.0, L, n + 1)
    h = L / n
    K = (np.diag(np.full(n + 1, 2.0)) - np.diag(np.ones(n), 1) - np.diag(np.ones(n), -1)) / h
    K[0, 0] = K[-1, -1] = 1.0 / h
    b = [0, n]
    i = list(range(1, n))
    Kii = K[np.ix_(i, i)]
    Kib = K[np.ix_(i, b)]
    S = K[np.ix_(b, b)] - Kib.T @ np.linalg.solve(Kii, Kib)
    mu, vec = np.linalg.eigh(S)
    mu1, mu2 = float(mu[0]), float(mu[1])
    if not vectors:
        return mu1, mu2
    phi = np.empty(n + 1)
    phi[b] = vec[:, 1]
    phi[i] = -np.linalg.solve(Kii, Kib @ vec[:, 1])
    return (mu1, mu2), x, phi
