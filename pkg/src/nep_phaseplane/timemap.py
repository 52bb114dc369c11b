"""Time maps: interval length as a function of the energy level C.

A trajectory on K_C from a left endpoint ``(v_i, u_i)`` down to a right
endpoint ``(-v_j, u_j)`` spans the length ``(G(v_i) + G(v_j)) / sqrt(lam)``
where ``G(a) = int_0^a dv / f(F^{-1}(C - v^2/2))`` is odd in ``a``.

``G`` is evaluated in the v variable for ``|v| <= sqrt(C)`` (smooth, contains
the turning point v = 0) and in the u variable beyond, where
``dv/f(u) = -du/sqrt(2(C - F(u)))`` has no singularity because
``C - F(u) >= C/2`` there.  The endpoint enters through its u coordinate,
which the boundary relation u = gamma* v gives to full precision even when
``C - v^2/2`` is far below rounding level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .errors import DerivativeSingularError, DomainError, RegimeError
from .nonlin import NonlinearModel, Potential, invert_potential
from .phase import (
    PhaseGeometry,
    TrajectoryClass,
    dirichlet_geometry,
    intersections,
    tangency,
)
from .problem import C_SOLUTION, D_SOLUTION, I_SOLUTION, S_SOLUTION, ProblemSpec

DIRICHLET = "dirichlet"
SYM1 = "sym1"
SYM2 = "sym2"
ASYM_MONOTONE = "asym_monotone"
ASYM_NONMONOTONE = "asym_nonmonotone"
ASYM = "asym"  # monotone or non-monotone, whichever the regime allows
BRANCHES = (DIRICHLET, SYM1, SYM2, ASYM_MONOTONE, ASYM_NONMONOTONE, ASYM)

QUAD_RTOL = 1e-12
N_SCAN = 400
DERIVATIVE_MARGIN = 1e-8


def _quad(fn, a, b, **kw):
    val, _ = quad(fn, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=400, **kw)
    return val


@dataclass
class TimeMapSample:
    C: float
    branch: str
    length: float
    valid: bool
    extras: dict = field(default_factory=dict)


def _invalid(C: float, branch: str) -> TimeMapSample:
    return TimeMapSample(C, branch, math.nan, False)


# -- the basic integral -------------------------------------------------------


def _quad_toward(fn, a: float, b: float) -> float:
    """Integral over [a, b] with breakpoints b - 2^k, for integrands whose
    structure sits near b and which are flat over a long stretch below it."""
    if b - a <= 2.0:
        return _quad(fn, a, b)
    cuts = [b - 2.0**k for k in range(0, int(math.log2(b - a)) + 1)]
    cuts = [c for c in cuts if c > a][::-1]
    edges = [a, *cuts, b]
    return sum(_quad(fn, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))


def half_length(pot: Potential, C: float, v: float, u: float | None = None) -> float:
    """G(v) = int_0^v dv' / f(u(v')) on K_C (times sqrt(lam) this is a length).

    ``u`` is the height of the endpoint, F(u) + v^2/2 = C.  Pass it whenever it
    is known more accurately than F^{-1}(C - v^2/2).
    """
    sign = 1.0 if v >= 0 else -1.0
    a = abs(v)
    if a == 0.0:
        return 0.0
    f = pot.model.f

    def w(t):
        return 1.0 / f(invert_potential(pot, C - 0.5 * t * t))

    split = math.sqrt(C)
    if a <= split:
        return sign * _quad(w, 0.0, a)
    if u is None:
        u = invert_potential(pot, C - 0.5 * a * a)
    u_split = invert_potential(pot, 0.5 * C)
    inner = _quad(w, 0.0, split)
    outer = _quad_toward(lambda s: 1.0 / math.sqrt(2.0 * (C - float(pot.F(s)))), u, u_split)
    return sign * (inner + outer)


def _slope_integral(pot: Potential, C: float, v: float, u: float) -> float:
    """int_0^v f'(u)/f(u)^3 dv along K_C, split like half_length."""
    sign = 1.0 if v >= 0 else -1.0
    a = abs(v)
    if a == 0.0:
        return 0.0
    f, fp = pot.model.f, pot.model.f_prime

    def w(t):
        s = invert_potential(pot, C - 0.5 * t * t)
        return fp(s) / f(s) ** 3

    split = math.sqrt(C)
    if a <= split:
        return sign * _quad(w, 0.0, a)
    u_split = invert_potential(pot, 0.5 * C)
    inner = _quad(w, 0.0, split)
    outer = _quad_toward(
        lambda s: fp(s) / (f(s) ** 2 * math.sqrt(2.0 * (C - float(pot.F(s))))), u, u_split
    )
    return sign * (inner + outer)


def trajectory_length(pot: Potential, lam: float, C: float, traj: TrajectoryClass) -> float:
    """Length of the interval swept by the arc ``traj`` on K_C."""
    (v_a, u_a), (v_b, u_b) = traj.start, traj.end
    return (half_length(pot, C, v_a, u_a) - half_length(pot, C, v_b, u_b)) / math.sqrt(lam)


# -- Dirichlet ---------------------------------------------------------------


def dirichlet_length(pot: Potential, lam: float, C: float) -> float:
    """L(C) = (2/sqrt(lam)) int_0^1 sqrt(2C) dt / f(F^{-1}(C(1-t^2)))."""
    if not C > 0:
        raise DomainError("Dirichlet time map needs C > 0")
    f = pot.model.f
    root = math.sqrt(2.0 * C)
    integral = _quad(lambda t: root / f(invert_potential(pot, C * (1.0 - t * t))), 0.0, 1.0)
    return 2.0 * integral / math.sqrt(lam)


def uniqueness_indicator(model: NonlinearModel, pot: Potential, u):
    """g(u) = f(u)^2 - 2 f'(u) F(u); L(C) is monotone wherever g > 0."""
    return model.f(u) ** 2 - 2.0 * model.f_prime(u) * pot.F(u)


# -- Robin lengths ------------------------------------------------------------


def _geometry(pot: Potential, gamma_star: float, C: float) -> PhaseGeometry | None:
    try:
        return intersections(pot, gamma_star, C)
    except DomainError:
        return None


def _G_points(pot: Potential, geom: PhaseGeometry) -> list[float]:
    return [half_length(pot, geom.C, v, u) for v, u in geom.intersections_plus]


def symmetric_length(pot: Potential, lam: float, gamma_star: float, C: float, index: int = 1) -> TimeMapSample:
    """L_i(C) = 2 G(v_i^+) / sqrt(lam), i = 1 (outer arc) or 2 (inner arc, alpha < 0)."""
    branch = SYM1 if index == 1 else SYM2
    if index not in (1, 2):
        raise ValueError("index must be 1 or 2")
    geom = _geometry(pot, gamma_star, C)
    if geom is None or not geom.intersections_plus:
        return _invalid(C, branch)
    regime = geom.regime()
    if index == 2 and regime not in ("tangent", "between", "at_s0"):
        return _invalid(C, branch)
    points = geom.intersections_plus
    v, u = points[min(index, len(points)) - 1]
    if regime == "at_s0" and index == 2:
        v, u = 0.0, 0.0
    length = 2.0 * half_length(pot, C, v, u) / math.sqrt(lam)
    return TimeMapSample(C, branch, length, True, {"v": v, "u": u})


def _asym_geometry(pot, gamma_star, C):
    geom = _geometry(pot, gamma_star, C)
    if geom is None or geom.gamma_star > 0:
        return None
    if geom.regime() in ("below",):
        return None
    return geom


def asymmetric_monotone_length(pot: Potential, lam: float, gamma_star: float, C: float) -> TimeMapSample:
    """L_12 for C >= s0, with its split L_12 = L_10 + L_02 at P^0 = (sqrt(2(C - s0)), 0)."""
    geom = _asym_geometry(pot, gamma_star, C)
    if geom is None or geom.regime() not in ("at_s0", "above"):
        return _invalid(C, ASYM_MONOTONE)
    (v1, u1), (v2, u2) = geom.intersections_plus
    v0 = math.sqrt(max(2.0 * (C - pot.s0), 0.0))
    G1 = half_length(pot, C, v1, u1)
    G0 = half_length(pot, C, v0, 0.0)
    G2 = half_length(pot, C, v2, u2) if geom.regime() == "above" else 0.0
    rl = math.sqrt(lam)
    L10 = (G1 - G0) / rl
    L02 = (G0 + G2) / rl
    return TimeMapSample(C, ASYM_MONOTONE, L10 + L02, True, {"L10": L10, "L02": L02})


def asymmetric_nonmonotone_length(
    pot: Potential, lam: float, gamma_star: float, C: float, cross_check: bool = False
) -> TimeMapSample:
    """L_12 = (L_1 + L_2)/2 for C~ <= C < s0.

    With ``cross_check`` the two-piece integral is also evaluated in the u
    variable with an algebraic-endpoint quadrature rule and stored as
    ``extras['direct']``.
    """
    geom = _asym_geometry(pot, gamma_star, C)
    if geom is None or geom.regime() not in ("tangent", "between"):
        return _invalid(C, ASYM_NONMONOTONE)
    L1 = symmetric_length(pot, lam, gamma_star, C, 1).length
    L2 = symmetric_length(pot, lam, gamma_star, C, 2).length
    sample = TimeMapSample(C, ASYM_NONMONOTONE, 0.5 * (L1 + L2), True, {"L1": L1, "L2": L2})
    if cross_check:
        sample.extras["direct"] = _nonmonotone_u_form(pot, lam, geom)
    return sample


def _rise_time(pot: Potential, lam: float, C: float, u_from: float) -> float:
    """int_{u_from}^{F^{-1}(C)} du / sqrt(2 lam (C - F(u))), singular weight handled by QAWS."""
    top = invert_potential(pot, C)
    Ftop = float(pot.F(top))
    f = pot.model.f

    def smooth(u):
        gap = top - u
        drop = Ftop - float(pot.F(u))
        if gap <= 1e-7 * max(1.0, abs(top)):
            return 1.0 / math.sqrt(float(f(top)) - 0.5 * float(pot.model.f_prime(top)) * gap)
        return math.sqrt(gap / drop)

    val, _ = quad(smooth, u_from, top, weight="alg", wvar=(0.0, -0.5), epsabs=0.0, epsrel=1e-13, limit=400)
    return val / math.sqrt(2.0 * lam)


def _nonmonotone_u_form(pot: Potential, lam: float, geom: PhaseGeometry) -> float:
    (_, u1), (_, u2) = geom.intersections_plus[0], geom.intersections_plus[-1]
    return _rise_time(pot, lam, geom.C, u1) + _rise_time(pot, lam, geom.C, u2)


def asymmetric_length(pot: Potential, lam: float, gamma_star: float, C: float) -> TimeMapSample:
    """L_12 on its whole domain C >= C~ (non-monotone below s0, monotone above)."""
    geom = _asym_geometry(pot, gamma_star, C)
    if geom is None:
        return _invalid(C, ASYM)
    if geom.regime() in ("at_s0", "above"):
        s = asymmetric_monotone_length(pot, lam, gamma_star, C)
    else:
        s = asymmetric_nonmonotone_length(pot, lam, gamma_star, C)
    s.branch = ASYM
    return s


def branch_length(
    pot: Potential, lam: float, gamma_star: float | None, C: float, branch: str
) -> TimeMapSample:
    if branch == DIRICHLET:
        try:
            return TimeMapSample(C, DIRICHLET, dirichlet_length(pot, lam, C), True)
        except DomainError:
            return _invalid(C, DIRICHLET)
    if branch == SYM1:
        return symmetric_length(pot, lam, gamma_star, C, 1)
    if branch == SYM2:
        return symmetric_length(pot, lam, gamma_star, C, 2)
    if branch == ASYM_MONOTONE:
        return asymmetric_monotone_length(pot, lam, gamma_star, C)
    if branch == ASYM_NONMONOTONE:
        return asymmetric_nonmonotone_length(pot, lam, gamma_star, C)
    if branch == ASYM:
        return asymmetric_length(pot, lam, gamma_star, C)
    raise ValueError(f"unknown branch {branch!r}; expected one of {BRANCHES}")


def length_derivative(pot: Potential, lam: float, gamma_star: float, C: float, branch: str) -> float:
    """dL_i/dC from the closed derivative formula (branch sym1 or sym2)."""
    if branch not in (SYM1, SYM2):
        raise ValueError("derivative formula is available for sym1 and sym2 only")
    geom = _geometry(pot, gamma_star, C)
    if geom is None or not geom.intersections_plus:
        raise RegimeError(f"{branch} is not defined at C = {C:g}")
    if gamma_star < 0:
        if abs(C - geom.C_tilde) < DERIVATIVE_MARGIN:
            raise DerivativeSingularError(f"dL/dC is unbounded at C~ = {geom.C_tilde:g}")
        if branch == SYM2 and geom.regime() not in ("between",):
            raise RegimeError(f"sym2 is not defined at C = {C:g}")
    elif branch == SYM2:
        raise RegimeError("sym2 only exists for alpha < 0")
    v, u = geom.intersections_plus[0 if branch == SYM1 else 1]
    f = pot.model.f
    fu = float(f(u))
    boundary = 2.0 / (fu * (v + gamma_star * fu))
    interior = 2.0 * _slope_integral(pot, C, v, u)
    return (boundary - interior) / math.sqrt(lam)


# -- lambda(C) ----------------------------------------------------------------


def lambda_of_C(pot: Potential, alpha: float | None, L0: float, C: float) -> float:
    """The lambda for which the symmetric trajectory on K_C has length L0.

    ``alpha=None`` selects Dirichlet conditions, where lambda(C) is explicit.
    For alpha > 0 the length decreases strictly in lambda and the root is
    bracketed by geometric expansion.
    """
    if alpha is None:
        return (dirichlet_length(pot, 1.0, C) / L0) ** 2
    if not alpha > 0:
        raise ValueError("lambda(C) is defined here for alpha > 0")
    if not C > 0:
        raise DomainError("lambda(C) needs C > 0")

    def excess(log_lam):
        lam = math.exp(log_lam)
        return symmetric_length(pot, lam, math.sqrt(lam) / alpha, C, 1).length - L0

    lo = hi = 0.0
    for _ in range(200):
        if excess(hi) < 0:
            break
        hi += 2.0
    else:
        raise DomainError(f"no lambda bracket for C = {C:g}")
    for _ in range(200):
        if excess(lo) > 0:
            break
        lo -= 2.0
    else:
        raise DomainError(f"no lambda bracket for C = {C:g}")
    return math.exp(brentq(excess, lo, hi, xtol=1e-14, rtol=1e-14))


# -- solution counting ------------------------------------------------------------


@dataclass
class RootInfo:
    C: float
    branch: str
    tag: str
    tangent: bool = False
    multiplicity: int = 1  # solutions represented by this root (2 for reflected pairs)


@dataclass
class SolutionCount:
    total: int
    by_type: dict
    roots: list

    def summary(self) -> str:
        parts = " ".join(f"{k[0]}:{self.by_type.get(k, 0)}" for k in (S_SOLUTION, I_SOLUTION, D_SOLUTION, C_SOLUTION))
        return f"solutions: {self.total} ({parts})"


def _scan_roots(fn, grid: np.ndarray, target: float) -> list[tuple[float, bool]]:
    """Roots of fn(C) = target on the grid span: sign changes plus tangent extrema."""
    vals = np.array([fn(c) for c in grid]) - target
    ok = np.isfinite(vals)
    roots: list[tuple[float, bool]] = []
    idx = np.flatnonzero(ok)
    g, d = grid[idx], vals[idx]

    def refine(a, b):
        return brentq(lambda c: fn(c) - target, a, b, xtol=1e-300, rtol=1e-12, maxiter=500)

    for k in range(len(g) - 1):
        if d[k] == 0.0:
            roots.append((float(g[k]), False))
        elif d[k] * d[k + 1] < 0:
            roots.append((refine(g[k], g[k + 1]), False))
    if len(d) and d[-1] == 0.0:
        roots.append((float(g[-1]), False))
    # extrema that approach the target without crossing it on the grid
    scale = max(1.0, abs(target))
    for k in range(1, len(g) - 1):
        a, b, c = d[k - 1], d[k], d[k + 1]
        is_min = b < a and b < c and b > 0
        is_max = b > a and b > c and b < 0
        if not (is_min or is_max) or abs(b) > 0.05 * scale:
            continue
        sgn = 1.0 if is_min else -1.0
        res = minimize_scalar(
            lambda cc: sgn * (fn(cc) - target),
            bracket=(g[k - 1], g[k], g[k + 1]),
            tol=1e-12,
        )
        c_ext, val = float(res.x), sgn * float(res.fun)
        if not (g[k - 1] < c_ext < g[k + 1]):
            continue
        if abs(val) <= 1e-10 * scale:
            roots.append((c_ext, True))
        elif val * b < 0:
            roots.append((refine(g[k - 1], c_ext), False))
            roots.append((refine(c_ext, g[k + 1]), False))
    return sorted(roots)


def _default_cmax(pot: Potential) -> float:
    return 1e8 * max(1.0, pot.s0)


def count_solutions(problem: ProblemSpec, n_scan: int = N_SCAN, c_max: float | None = None) -> SolutionCount:
    """Number of solutions of the boundary-value problem, by type, from the time maps.

    Asymmetric roots stand for a reflected pair of solutions and count twice.
    """
    pot = problem.potential()
    c_max = _default_cmax(pot) if c_max is None else c_max
    lam, L = problem.lam, problem.L
    roots: list[RootInfo] = []

    if problem.is_dirichlet or problem.alpha > 0:
        grid = np.geomspace(1e-10, c_max, n_scan)
        if problem.is_dirichlet:
            fn = lambda c: dirichlet_length(pot, lam, c)
            branch = DIRICHLET
        else:
            g = problem.gamma_star
            fn = lambda c: symmetric_length(pot, lam, g, c, 1).length
            branch = SYM1
        roots = [RootInfo(c, branch, S_SOLUTION, t) for c, t in _scan_roots(fn, grid, L)]
    else:
        g = problem.gamma_star
        C_tilde, _ = tangency(pot, g)
        s0 = pot.s0
        low = C_tilde + (s0 - C_tilde) * np.geomspace(1e-12, 1.0, n_scan)
        high = s0 + s0 * np.geomspace(1e-10, c_max / s0, n_scan)
        both = np.concatenate([low, high])
        G_cache: dict[float, tuple[float, float]] = {}

        def Gs(c):
            if c not in G_cache:
                geom = intersections(pot, g, c)
                pts = geom.intersections_plus
                if not pts:
                    G_cache[c] = (math.nan, math.nan)
                else:
                    G1 = half_length(pot, c, *pts[0])
                    G2 = half_length(pot, c, *pts[-1]) if len(pts) > 1 else G1
                    G_cache[c] = (G1, G2)
            return G_cache[c]

        rl = math.sqrt(lam)

        def L1(c):
            return 2.0 * Gs(c)[0] / rl

        def L2(c):
            return 2.0 * Gs(c)[1] / rl if c <= s0 else math.nan

        def L12(c):
            G1, G2 = Gs(c)
            return (G1 + G2) / rl

        for c, t in _scan_roots(L1, both, L):
            roots.append(RootInfo(c, SYM1, S_SOLUTION, t))
        for c, t in _scan_roots(L2, low, L):
            roots.append(RootInfo(c, SYM2, S_SOLUTION, t))
        for c, t in _scan_roots(L12, both, L):
            if abs(c - C_tilde) <= 1e-9 * max(1.0, C_tilde):
                continue  # the asymmetric arcs collapse onto the symmetric one at C~
            if c < s0:
                roots.append(RootInfo(c, ASYM_NONMONOTONE, C_SOLUTION, t, multiplicity=2))
            else:
                roots.append(RootInfo(c, ASYM_MONOTONE, I_SOLUTION, t))
                roots.append(RootInfo(c, ASYM_MONOTONE, D_SOLUTION, t))
        # sym1 and sym2 meet at C~; a root there is one solution
        sym = [r for r in roots if r.tag == S_SOLUTION]
        near = [r for r in sym if abs(r.C - C_tilde) <= 1e-9 * max(1.0, C_tilde)]
        for r in near[1:]:
            roots.remove(r)

    by_type: dict[str, int] = {}
    for r in roots:
        by_type[r.tag] = by_type.get(r.tag, 0) + r.multiplicity
    return SolutionCount(sum(by_type.values()), by_type, roots)


def solution_trajectories(problem: ProblemSpec, count: SolutionCount | None = None) -> list[tuple[float, TrajectoryClass]]:
    """(C, trajectory) for every solution counted by :func:`count_solutions`."""
    from .phase import classify

    count = count_solutions(problem) if count is None else count
    pot = problem.potential()
    out = []
    seen = set()
    for r in count.roots:
        if problem.is_dirichlet:
            geom = dirichlet_geometry(pot, r.C)
        else:
            geom = intersections(pot, problem.gamma_star, r.C)
        for traj in classify(geom):
            if traj.tag != r.tag:
                continue
            if r.branch == SYM1 and traj.indices not in ((1, 1),):
                continue
            if r.branch == SYM2 and traj.indices != (2, 2):
                continue
            key = (round(r.C, 12), traj.indices)
            if key in seen:
                continue
            seen.add(key)
            out.append((r.C, traj))
    return out
