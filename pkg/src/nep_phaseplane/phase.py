"""Phase-plane geometry in the (v, u) plane.

Trajectories lie on energy curves ``K_C: u = F^{-1}(C - v^2/2)``; Robin data
put the left endpoint on the line ``u = gamma* v`` and the right endpoint on
``u = -gamma* v`` with ``gamma* = sqrt(lam)/alpha``.

Intersection points are located in the u coordinate.  Along ``u = gamma* v``
the function ``psi(u) = F(u) + u^2/(2 gamma*^2) - C`` is strictly convex, so
its roots can be bracketed exactly around the tangency point; this stays
well conditioned even when ``C - v^2/2`` underflows (large C, alpha < 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, RegimeError, TangencyNotFoundError
from .nonlin import Potential, invert_potential
from .problem import C_SOLUTION, D_SOLUTION, I_SOLUTION, S_SOLUTION

Point = tuple[float, float]  # (v, u)

EQUAL_RTOL = 1e-10
_ROOT_XTOL = 1e-13
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class TrajectoryClass:
    tag: str
    start: Point
    end: Point
    indices: tuple[int, int]  # (i, j) for the arc from P_i^+ to P_j^-; 0 marks P^0
    boundary_case: bool = False


@dataclass(frozen=True)
class PhaseGeometry:
    gamma_star: float | None  # None for Dirichlet
    s0: float
    C: float
    intersections_plus: tuple[Point, ...] = ()
    intersections_minus: tuple[Point, ...] = ()
    C_tilde: float | None = None
    v_tangent: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def is_dirichlet(self) -> bool:
        return self.gamma_star is None

    def regime(self) -> str:
        """One of: dirichlet, positive, below, tangent, between, at_s0, above."""
        if self.is_dirichlet:
            return "dirichlet"
        if self.gamma_star > 0:
            return "positive"
        if _close(self.C, self.C_tilde):
            return "tangent"
        if self.C < self.C_tilde:
            return "below"
        if _close(self.C, self.s0):
            return "at_s0"
        return "between" if self.C < self.s0 else "above"


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= EQUAL_RTOL * max(1.0, abs(b))


def curve_height(pot: Potential, C: float, v):
    """u on K_C at abscissa v."""
    s = C - 0.5 * np.asarray(v, dtype=float) ** 2
    if np.ndim(s) == 0:
        return invert_potential(pot, float(s))
    return np.array([invert_potential(pot, float(si)) for si in s])


def tangency(pot: Potential, gamma_star: float) -> tuple[float, float]:
    """Energy C~ and abscissa v1 > 0 at which u = gamma* v touches K_C (gamma* < 0).

    Solves gamma* f(gamma* v1) + v1 = 0, i.e. u + gamma*^2 f(u) = 0 for
    u = gamma* v1 < 0, then C~ = F(gamma* v1) + v1^2/2.
    """
    if not gamma_star < 0:
        raise DomainError("tangency only exists for alpha < 0")
    f = pot.model.f
    g2 = gamma_star * gamma_star

    def h(u):
        return u + g2 * f(u)

    if not h(0.0) > 0:
        raise TangencyNotFoundError("u + gamma*^2 f(u) is not positive at u = 0")
    lo = -1.0
    while h(lo) >= 0:
        lo *= 2.0
        if lo < -1e12:
            raise TangencyNotFoundError(
                f"no sign change of u + gamma*^2 f(u) down to u = {lo:g}; f must vanish at -inf"
            )
    u1 = brentq(h, lo, 0.0, xtol=_ROOT_XTOL, rtol=4 * _EPS, maxiter=500)
    v1 = u1 / gamma_star
    return float(pot.F(u1)) + 0.5 * v1 * v1, v1


def _psi(pot: Potential, gamma_star: float, C: float):
    inv = 1.0 / (2.0 * gamma_star * gamma_star)
    return lambda u: float(pot.F(u)) + u * u * inv - C


def intersections(pot: Potential, gamma_star: float, C: float) -> PhaseGeometry:
    """All points where the boundary lines meet K_C.

    ``intersections_plus`` is ordered so that v_1^+ > v_2^+ (and u_1^+ < u_2^+);
    the minus points are their mirror images (-v, u).
    """
    C = float(C)
    if gamma_star > 0:
        if not C > 0:
            raise DomainError("alpha > 0 needs C > 0")
        psi = _psi(pot, gamma_star, C)
        top = invert_potential(pot, C)
        u1 = brentq(psi, 0.0, top, xtol=_ROOT_XTOL, rtol=4 * _EPS, maxiter=500)
        p = (u1 / gamma_star, u1)
        return PhaseGeometry(gamma_star, pot.s0, C, (p,), ((-p[0], p[1]),))

    C_tilde, v_t = tangency(pot, gamma_star)
    base = dict(gamma_star=gamma_star, s0=pot.s0, C=C, C_tilde=C_tilde, v_tangent=v_t)
    if _close(C, C_tilde):
        u_t = gamma_star * v_t
        return PhaseGeometry(intersections_plus=((v_t, u_t),), intersections_minus=((-v_t, u_t),), **base)
    if C < C_tilde:
        return PhaseGeometry(**base)
    psi = _psi(pot, gamma_star, C)
    u_t = gamma_star * v_t
    lo = -abs(gamma_star) * math.sqrt(2.0 * C) * (1.0 + 1e-9) - 1e-300
    u1 = brentq(psi, lo, u_t, xtol=_ROOT_XTOL, rtol=4 * _EPS, maxiter=500)
    top = invert_potential(pot, C)
    u2 = brentq(psi, u_t, top, xtol=_ROOT_XTOL, rtol=4 * _EPS, maxiter=500) if top > u_t else u_t
    if _close(C, pot.s0):
        u2 = 0.0
    p1 = (u1 / gamma_star, u1)
    p2 = (u2 / gamma_star, u2)
    return PhaseGeometry(
        intersections_plus=(p1, p2),
        intersections_minus=((-p1[0], p1[1]), (-p2[0], p2[1])),
        **base,
    )


def dirichlet_geometry(pot: Potential, C: float) -> PhaseGeometry:
    """Endpoints (+-sqrt(2C), 0) of the Dirichlet trajectory on K_C."""
    if not C > 0:
        raise DomainError("Dirichlet trajectories need C > 0")
    b = math.sqrt(2.0 * C)
    return PhaseGeometry(None, pot.s0, C, ((b, 0.0),), ((-b, 0.0),))


def classify(geom: PhaseGeometry) -> list[TrajectoryClass]:
    """Admissible trajectories at this energy, one entry per solution type."""
    plus, minus = geom.intersections_plus, geom.intersections_minus
    regime = geom.regime()
    if regime in ("dirichlet", "positive", "tangent"):
        return [TrajectoryClass(S_SOLUTION, plus[0], minus[0], (1, 1))]
    if regime == "below":
        return []
    s1 = TrajectoryClass(S_SOLUTION, plus[0], minus[0], (1, 1))
    if regime == "between":
        return [
            s1,
            TrajectoryClass(S_SOLUTION, plus[1], minus[1], (2, 2)),
            TrajectoryClass(C_SOLUTION, plus[0], minus[1], (1, 2)),
            TrajectoryClass(C_SOLUTION, plus[1], minus[0], (2, 1)),
        ]
    if regime == "at_s0":
        origin = (0.0, 0.0)
        return [
            s1,
            TrajectoryClass(I_SOLUTION, plus[0], origin, (1, 0), boundary_case=True),
            TrajectoryClass(D_SOLUTION, origin, minus[0], (0, 1), boundary_case=True),
        ]
    return [
        s1,
        TrajectoryClass(I_SOLUTION, plus[0], minus[1], (1, 2)),
        TrajectoryClass(D_SOLUTION, plus[1], minus[0], (2, 1)),
    ]


def find_class(geom: PhaseGeometry, tag: str, indices: tuple[int, int] | None = None) -> TrajectoryClass:
    """Pick the trajectory with the given tag (and index pair, if ambiguous)."""
    matches = [t for t in classify(geom) if t.tag == tag and (indices is None or t.indices == indices)]
    if not matches:
        raise RegimeError(f"no {tag} trajectory at C = {geom.C:g} (regime {geom.regime()})")
    return matches[0]


def phase_samples(pot: Potential, C: float, n: int = 201, margin: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Samples of K_C for plotting, over the v-range where C - v^2/2 is in the range of F."""
    lower = pot.lower_bound()
    span = C - lower if math.isfinite(lower) else 4.0 * C
    v = np.linspace(-1.0, 1.0, n) * math.sqrt(2.0 * max(span, 0.0)) * (1.0 - margin)
    return v, curve_height(pot, C, v)
