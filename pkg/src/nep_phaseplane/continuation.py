"""Finite-element weak form and pseudo-arclength branch tracing.

The weak form is discretized with piecewise-linear elements on a uniform grid
of N intervals; the nonlinear load uses 2-point Gauss quadrature per element.
Branch points are (u, lam) pairs; distances between them use the inner
product ``<(a, p), (b, q)> = h a.b + p q``, a discrete L2 norm in u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import splu

from .eig import linearized_spectrum
from .errors import SeedRejectedError
from .nonlin import NonlinearModel
from .problem import DIRICHLET, ROBIN, NO_SOLUTION, ProblemSpec, SolutionProfile

N_DEFAULT = 400
MAX_NEWTON = 12
U_LIMIT = 1e6
MIN_STEP = 1e-12
GROWTH = 1.3
MIN_COS = 0.8  # successive secants turning sharper than this signal a branch jump
LAM_FLOOR = 1e-8
STABILITY_EVERY = 10

_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


@dataclass
class DiscreteState:
    u: np.ndarray  # all N+1 nodal values (zeros at the ends under Dirichlet)
    lam: float
    s: float = 0.0
    iterations: int = 0

    @property
    def u_max(self) -> float:
        return float(np.max(self.u))


@dataclass
class BranchPoint:
    s: float
    lam: float
    u_max: float
    turning: bool = False
    mu1_sign: int | None = None


@dataclass
class Branch:
    states: list
    turning_points: list = field(default_factory=list)
    stalled: bool = False
    stop_reason: str = ""
    mu1: dict = field(default_factory=dict)  # state index -> mu_1

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([st.lam for st in self.states])

    @property
    def u_max(self) -> np.ndarray:
        return np.array([st.u_max for st in self.states])

    def summary(self) -> list[BranchPoint]:
        tp = set(self.turning_points)
        out = []
        for k, st in enumerate(self.states):
            mu = self.mu1.get(k)
            sign = None if mu is None else int(np.sign(mu))
            out.append(BranchPoint(st.s, st.lam, st.u_max, k in tp, sign))
        return out


class Discretization:
    """Uniform P1 discretization of the weak form for one problem family."""

    def __init__(self, L: float, model: NonlinearModel, alpha: float | None = None, bc: str = ROBIN, N: int = N_DEFAULT):
        if N < 32:
            raise ValueError("N must be at least 32")
        if bc == ROBIN and not alpha:
            raise ValueError("Robin conditions need a nonzero alpha")
        self.L, self.model, self.N = float(L), model, int(N)
        self.alpha = None if bc == DIRICHLET else float(alpha)
        self.bc = bc
        self.h = self.L / self.N
        self.x = np.linspace(0.0, self.L, self.N + 1)
        self.free = slice(1, self.N) if self.dirichlet else slice(0, self.N + 1)

    @classmethod
    def for_problem(cls, problem: ProblemSpec, N: int = N_DEFAULT) -> Discretization:
        return cls(problem.L, problem.model, problem.alpha, problem.bc, N)

    @property
    def dirichlet(self) -> bool:
        return self.bc == DIRICHLET

    @property
    def size(self) -> int:
        return self.N - 1 if self.dirichlet else self.N + 1

    def full(self, y: np.ndarray) -> np.ndarray:
        """Nodal vector from the free unknowns."""
        if not self.dirichlet:
            return np.asarray(y, dtype=float).copy()
        u = np.zeros(self.N + 1)
        u[1:-1] = y
        return u

    # -- assembly --

    def _gauss_values(self, u):
        a, b = u[:-1], u[1:]
        return [(1.0 - g) * a + g * b for g in _GAUSS]

    def load(self, u: np.ndarray) -> np.ndarray:
        """int f(u_h) phi_i for every node i."""
        out = np.zeros(self.N + 1)
        w = 0.5 * self.h
        with np.errstate(over="ignore"):
            for g, ug in zip(_GAUSS, self._gauss_values(u)):
                fg = self.model.f(ug)
                out[:-1] += w * fg * (1.0 - g)
                out[1:] += w * fg * g
        return out

    def stiffness_apply(self, u: np.ndarray) -> np.ndarray:
        d = np.diff(u) / self.h
        out = np.zeros(self.N + 1)
        out[:-1] -= d
        out[1:] += d
        if not self.dirichlet:
            out[0] += self.alpha * u[0]
            out[-1] += self.alpha * u[-1]
        return out

    def residual(self, u: np.ndarray, lam: float) -> np.ndarray:
        return (self.stiffness_apply(u) - lam * self.load(u))[self.free]

    def jacobian_bands(self, u: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
        """(diagonal, off-diagonal) of dG/du over the free unknowns."""
        N, h = self.N, self.h
        diag = np.zeros(N + 1)
        diag[:-1] += 1.0 / h
        diag[1:] += 1.0 / h
        off = np.full(N, -1.0 / h)
        if not self.dirichlet:
            diag[0] += self.alpha
            diag[-1] += self.alpha
        w = 0.5 * h * lam
        with np.errstate(over="ignore"):
            for g, ug in zip(_GAUSS, self._gauss_values(u)):
                fp = self.model.f_prime(ug)
                diag[:-1] -= w * fp * (1.0 - g) ** 2
                diag[1:] -= w * fp * g * g
                off -= w * fp * g * (1.0 - g)
        if self.dirichlet:
            return diag[1:-1], off[1:-1]
        return diag, off

    def jacobian(self, u: np.ndarray, lam: float) -> sp.csc_matrix:
        d, e = self.jacobian_bands(u, lam)
        return sp.diags([e, d, e], [-1, 0, 1], format="csc")

    def dG_dlam(self, u: np.ndarray) -> np.ndarray:
        return -self.load(u)[self.free]

    def dot(self, a: np.ndarray, b: np.ndarray) -> float:
        """Weighted inner product of (u, lam) vectors packed as [y..., lam]."""
        return self.h * float(np.dot(a[:-1], b[:-1])) + float(a[-1] * b[-1])

    def norm(self, a: np.ndarray) -> float:
        return math.sqrt(self.dot(a, a))

    def tolerance(self, lam: float) -> float:
        return 1e-10 * (1.0 + abs(lam))

    def profile(self, state: DiscreteState, cls: str = NO_SOLUTION) -> SolutionProfile:
        """Nodal values as a profile; v is the P1 derivative averaged to the nodes."""
        u = state.u
        du = np.gradient(u, self.x, edge_order=2)
        rl = math.sqrt(state.lam) if state.lam > 0 else 1.0
        return SolutionProfile(
            x=self.x.copy(), u=u.copy(), v=du / rl, C=math.nan, cls=cls, lam=state.lam,
            alpha=self.alpha, model=self.model, bc=self.bc, meta={"method": "fem", "N": self.N},
        )


def residual_and_jacobian(state: DiscreteState, disc: Discretization):
    return disc.residual(state.u, state.lam), disc.jacobian(state.u, state.lam)


# -- Newton -------------------------------------------------------------------


def newton_fixed_lambda(disc: Discretization, u0: np.ndarray, lam: float, max_iter: int = MAX_NEWTON):
    """Newton on G(u, lam) = 0 with lam fixed.  Returns (state, iterations) or None."""
    y = np.asarray(u0, dtype=float)[disc.free].copy()
    tol = disc.tolerance(lam)
    for it in range(max_iter + 1):
        u = disc.full(y)
        r = disc.residual(u, lam)
        if not np.all(np.isfinite(r)):
            return None
        if np.max(np.abs(r)) <= tol:
            return DiscreteState(u, lam, iterations=it), it
        if it == max_iter:
            return None
        d, e = disc.jacobian_bands(u, lam)
        ab = np.zeros((3, len(d)))
        ab[0, 1:], ab[1], ab[2, :-1] = e, d, e
        try:
            step = solve_banded((1, 1), ab, -r)
        except (np.linalg.LinAlgError, ValueError):
            return None
        if not np.all(np.isfinite(step)):
            return None
        y = y + step
    return None


def newton_bordered(
    disc: Discretization,
    z0: np.ndarray,
    tangent: np.ndarray,
    anchor: np.ndarray,
    ds: float,
    max_iter: int = MAX_NEWTON,
):
    """Newton on G = 0 together with <tangent, z - anchor> = ds.

    ``z`` packs the free unknowns and lambda.  Returns (z, iterations, residual
    history) or None on failure.
    """
    z = np.array(z0, dtype=float)
    n = disc.size
    wt = np.concatenate([disc.h * tangent[:-1], tangent[-1:]])
    history = []
    for it in range(max_iter + 1):
        u, lam = disc.full(z[:-1]), float(z[-1])
        r = disc.residual(u, lam)
        c = disc.dot(tangent, z - anchor) - ds
        if not (np.all(np.isfinite(r)) and math.isfinite(c)):
            return None
        rn = float(np.max(np.abs(r)))
        history.append(rn)
        if rn <= disc.tolerance(lam) and abs(c) <= 1e-12 * (1.0 + abs(ds)):
            return z, it, history
        if it == max_iter:
            return None
        J = disc.jacobian(u, lam)
        col = sp.csc_matrix(disc.dG_dlam(u).reshape(-1, 1))
        row = sp.csr_matrix(wt.reshape(1, -1))
        M = sp.bmat([[J, col], [row[:, :n], row[:, n:]]], format="csc")
        try:
            step = splu(M).solve(-np.concatenate([r, [c]]))
        except RuntimeError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        z = z + step
    return None


def newton_correct(disc: Discretization, state: DiscreteState, tangent=None, ds: float = 0.0):
    """Fixed-lambda correction, or the bordered correction when a tangent is given."""
    if tangent is None:
        out = newton_fixed_lambda(disc, state.u, state.lam)
        if out is None:
            return None
        st, it = out
        st.s = state.s
        return st
    anchor = pack(disc, state)
    out = newton_bordered(disc, anchor + ds * tangent, tangent, anchor, ds)
    if out is None:
        return None
    z, it, _ = out
    return DiscreteState(disc.full(z[:-1]), float(z[-1]), state.s + ds, it)


def pack(disc: Discretization, state: DiscreteState) -> np.ndarray:
    return np.concatenate([state.u[disc.free], [state.lam]])


# -- seeding ---------------------------------------------------------------


def trivial_state(disc: Discretization) -> DiscreteState:
    return DiscreteState(np.zeros(disc.N + 1), 0.0)


def seed_from_profile(profile: SolutionProfile, N: int = N_DEFAULT, disc: Discretization | None = None) -> tuple[DiscreteState, Discretization]:
    """Interpolate a profile onto the FE grid and polish it with fixed-lambda Newton."""
    if disc is None:
        bc = profile.bc
        disc = Discretization(profile.L, profile.model, profile.alpha, bc, N)
    u0 = np.interp(disc.x, profile.x - profile.x[0], profile.u)
    if disc.dirichlet:
        u0[0] = u0[-1] = 0.0
    out = newton_fixed_lambda(disc, u0, profile.lam)
    if out is None:
        raise SeedRejectedError("Newton did not converge from the interpolated profile")
    return out[0], disc


def initial_tangent(disc: Discretization, state: DiscreteState, direction: float = 1.0) -> np.ndarray:
    """Euler predictor in lambda: du/dlam = -J^{-1} dG/dlam, normalized."""
    J = disc.jacobian(state.u, state.lam)
    du = splu(J).solve(-disc.dG_dlam(state.u))
    t = np.concatenate([du, [1.0]])
    t /= disc.norm(t)
    return math.copysign(1.0, direction) * t


# -- tracing -----------------------------------------------------------------


def trace_branch(
    disc: Discretization,
    start: DiscreteState,
    direction: float = 1.0,
    steps: int = 400,
    ds: float = 0.05,
    ds_max: float = 0.5,
    lam_max: float = math.inf,
    stability: bool = True,
) -> Branch:
    """Pseudo-arclength continuation from ``start``.

    ``direction`` picks the sense of the initial tangent (+1: lambda increasing).
    Stops after ``steps`` accepted points, when lambda drops to 1e-8 or exceeds
    ``lam_max``, when max|u| > 1e6, or on stall (step below 1e-12).  A step is
    rejected when the corrected point is farther than 3 steps from the anchor
    or when the secant turns by more than acos(0.8) from the previous tangent.
    """
    start = DiscreteState(start.u.copy(), start.lam, 0.0, start.iterations)
    branch = Branch([start])
    tangent = initial_tangent(disc, start, direction)
    z_prev = pack(disc, start)
    step = ds
    dlam_prev = tangent[-1]
    while len(branch.states) <= steps:
        anchor = z_prev
        out = newton_bordered(disc, anchor + step * tangent, tangent, anchor, step)
        accepted = False
        if out is not None:
            z, it, _ = out
            jump = disc.norm(z - anchor)
            accepted = jump <= 3.0 * step and disc.dot(z - anchor, tangent) >= MIN_COS * jump
        if not accepted:
            step *= 0.5
            if step < MIN_STEP:
                branch.stalled = True
                branch.stop_reason = "stall"
                break
            continue
        st = DiscreteState(disc.full(z[:-1]), float(z[-1]), branch.states[-1].s + step, it)
        dz = z - anchor
        new_tangent = dz / disc.norm(dz)
        dlam = dz[-1]
        if dlam * dlam_prev < 0:
            branch.turning_points.append(len(branch.states) - 1)
        dlam_prev = dlam if dlam != 0 else dlam_prev
        branch.states.append(st)
        tangent = new_tangent
        z_prev = z
        if it <= 4:
            step = min(step * GROWTH, ds_max)
        if st.lam <= LAM_FLOOR:
            branch.stop_reason = "lambda<=0"
            break
        if st.lam > lam_max:
            branch.stop_reason = "lambda>max"
            break
        if np.max(np.abs(st.u)) > U_LIMIT:
            branch.stop_reason = "unbounded"
            break
    else:
        branch.stop_reason = "steps"
    if stability:
        attach_stability(disc, branch)
    return branch


def attach_stability(disc: Discretization, branch: Branch, every: int = STABILITY_EVERY) -> None:
    """mu_1 of the linearization at every ``every``-th point (and at turning points)."""
    idx = set(range(0, len(branch.states), every)) | set(branch.turning_points)
    for k in sorted(idx):
        st = branch.states[k]
        if st.lam <= 0:
            continue
        prof = disc.profile(st)
        problem = ProblemSpec(disc.L, st.lam, disc.model, disc.alpha, disc.bc)
        try:
            branch.mu1[k] = linearized_spectrum(problem, prof, k=1).mu1
        except Exception:  # noqa: BLE001 - weight or size failures leave the tag empty
            continue


# -- folds and slices -----------------------------------------------------------


def locate_fold(disc: Discretization, branch: Branch, k: int) -> DiscreteState:
    """Refine the turning point near state k by extremizing lambda along a fixed direction.

    States are parametrized by a = <t, z - z_k> with t the branch tangent at k;
    for each a the bordered system gives (u(a), lam(a)), and lam(a) has a smooth
    extremum at the fold.
    """
    states = branch.states
    lo, hi = max(k - 1, 0), min(k + 1, len(states) - 1)
    z_lo, z_k, z_hi = (pack(disc, states[i]) for i in (lo, k, hi))
    t = z_hi - z_lo
    t /= disc.norm(t)
    a_lo, a_hi = disc.dot(t, z_lo - z_k), disc.dot(t, z_hi - z_k)
    sign = -1.0 if states[k].lam >= max(states[lo].lam, states[hi].lam) else 1.0
    cache = {}

    def solve(a):
        guess = z_lo + (a - a_lo) / (a_hi - a_lo) * (z_hi - z_lo)
        out = newton_bordered(disc, guess, t, z_k, a)
        if out is None:
            return None
        cache[a] = out[0]
        return out[0]

    def objective(a):
        z = solve(a)
        return math.inf if z is None else sign * z[-1]

    res = minimize_scalar(objective, bounds=(a_lo, a_hi), method="bounded", options={"xatol": 1e-10})
    z = cache.get(res.x)
    if z is None:
        z = solve(res.x)
    return DiscreteState(disc.full(z[:-1]), float(z[-1]), states[k].s + res.x)


def fold_lambdas(disc: Discretization, branch: Branch) -> list[float]:
    return [locate_fold(disc, branch, k).lam for k in branch.turning_points]


def slice_branch(disc: Discretization, branch: Branch, lam: float, polish: bool = True) -> list[DiscreteState]:
    """States where the branch crosses the level ``lam``."""
    lams = branch.lambdas
    out = []
    for k in range(len(lams) - 1):
        a, b = lams[k] - lam, lams[k + 1] - lam
        if a == 0.0:
            out.append(branch.states[k])
            continue
        if a * b >= 0:
            continue
        w = a / (a - b)
        u = (1.0 - w) * branch.states[k].u + w * branch.states[k + 1].u
        st = DiscreteState(u, lam, (1 - w) * branch.states[k].s + w * branch.states[k + 1].s)
        if polish:
            res = newton_fixed_lambda(disc, u, lam)
            if res is not None:
                st = DiscreteState(res[0].u, lam, st.s)
        out.append(st)
    if len(lams) and lams[-1] == lam:
        out.append(branch.states[-1])
    return out


def distinct_solutions(states: list[DiscreteState], tol: float = 1e-3, reflect: bool = True) -> list[np.ndarray]:
    """Distinct nodal vectors among ``states`` (and their mirror images)."""
    found: list[np.ndarray] = []
    for st in states:
        cands = [st.u, st.u[::-1]] if reflect else [st.u]
        for u in cands:
            if all(np.max(np.abs(u - q)) > tol for q in found):
                found.append(u.copy())
    return found
