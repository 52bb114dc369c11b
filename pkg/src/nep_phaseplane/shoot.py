"""Initial-value integration, shooting, and profiles rebuilt from an energy level."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BlowupError, RegimeError
from .nonlin import NonlinearModel, Potential, invert_potential
from .phase import TrajectoryClass, classify, dirichlet_geometry, intersections
from .problem import DIRICHLET, NO_SOLUTION, ROBIN, ProblemSpec, SolutionProfile, classify_profile
from .timemap import half_length

BLOWUP = 1e8
N_STEPS = 2048
N_SCAN = 512
S_RANGE = (-30.0, 30.0)
RESIDUAL_TOL = 1e-10
DUPLICATE_TOL = 1e-6


def _rk4_batch(f, rl: float, u0: np.ndarray, v0: np.ndarray, L: float, n: int, keep: bool = False):
    """RK4 for u' = rl v, v' = -rl f(u) on many initial states at once.

    Lanes whose |u| passes BLOWUP are frozen at NaN; ``failed_at`` holds the x
    of failure (NaN for lanes that finished).
    """
    h = L / n
    u = np.array(u0, dtype=float, copy=True)
    v = np.array(v0, dtype=float, copy=True)
    failed_at = np.full(u.shape, np.nan)
    if keep:
        us = np.empty((n + 1,) + u.shape)
        vs = np.empty((n + 1,) + u.shape)
        us[0], vs[0] = u, v
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            k1u, k1v = v, -f(u)
            u2, v2 = u + 0.5 * h * rl * k1u, v + 0.5 * h * rl * k1v
            k2u, k2v = v2, -f(u2)
            u3, v3 = u + 0.5 * h * rl * k2u, v + 0.5 * h * rl * k2v
            k3u, k3v = v3, -f(u3)
            u4, v4 = u + h * rl * k3u, v + h * rl * k3v
            k4u, k4v = v4, -f(u4)
            u = u + (h * rl / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            v = v + (h * rl / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            bad = ~(np.abs(u) <= BLOWUP) | ~np.isfinite(v)
            fresh = bad & np.isnan(failed_at)
            if fresh.any():
                failed_at[fresh] = (k + 1) * h
                u = np.where(bad, np.nan, u)
                v = np.where(bad, np.nan, v)
            if keep:
                us[k + 1], vs[k + 1] = u, v
    if keep:
        return us, vs, failed_at
    return u, v, failed_at


def integrate_ivp(
    model: NonlinearModel,
    lam: float,
    u0: float,
    v0: float,
    L: float,
    n: int = N_STEPS,
    pot: Potential | None = None,
    alpha: float | None = None,
    bc: str = ROBIN,
) -> SolutionProfile:
    """Fixed-step RK4 on [0, L] for the phase system from (u0, v0)."""
    if n < 16:
        raise ValueError("n must be at least 16")
    us, vs, failed = _rk4_batch(model.f, math.sqrt(lam), np.array([u0]), np.array([v0]), L, n, keep=True)
    if not math.isnan(failed[0]):
        raise BlowupError(f"|u| exceeded {BLOWUP:g}", x=float(failed[0]))
    C = 0.5 * v0 * v0 + (float(pot.F(u0)) if pot is not None else math.nan)
    return SolutionProfile(
        x=np.linspace(0.0, L, n + 1), u=us[:, 0], v=vs[:, 0], C=C, cls=NO_SOLUTION,
        lam=lam, alpha=alpha, model=model, bc=bc,
    )


# -- shooting -----------------------------------------------------------------


@dataclass
class ShootingReport:
    profiles: list
    skipped: list = field(default_factory=list)  # (s, x of blowup)
    unconverged: list = field(default_factory=list)  # (s, |r|)


class _Shooter:
    def __init__(self, problem: ProblemSpec, n: int):
        self.p = problem
        self.n = n
        self.rl = math.sqrt(problem.lam)
        self.skipped: dict[float, float] = {}

    def initial(self, s):
        s = np.asarray(s, dtype=float)
        if self.p.is_dirichlet:
            return np.zeros_like(s), s / self.rl
        return s, self.p.alpha * s / self.rl

    def residual(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        u0, v0 = self.initial(s)
        u, v, failed = _rk4_batch(self.p.model.f, self.rl, u0, v0, self.p.L, self.n)
        for si, xf in zip(s[~np.isnan(failed)], failed[~np.isnan(failed)]):
            self.skipped[float(si)] = float(xf)
        if self.p.is_dirichlet:
            return u
        return self.rl * v + self.p.alpha * u


def _brackets(s: np.ndarray, r: np.ndarray) -> list[tuple[float, float, float, float]]:
    out = []
    for k in range(len(s) - 1):
        a, b, fa, fb = s[k], s[k + 1], r[k], r[k + 1]
        if not (np.isfinite(fa) and np.isfinite(fb)):
            continue
        if fa == 0.0:
            out.append((a, a, fa, fa))
        elif fa * fb < 0:
            out.append((a, b, fa, fb))
    if len(s) and r[-1] == 0.0:
        out.append((s[-1], s[-1], 0.0, 0.0))
    return out


def _refine_batch(shooter: _Shooter, brackets, tol: float, max_iter: int = 100):
    """Illinois false position on all brackets at once, with periodic bisection."""
    if not brackets:
        return np.array([]), np.array([])
    a = np.array([b[0] for b in brackets])
    b = np.array([b[1] for b in brackets])
    fa = np.array([b[2] for b in brackets])
    fb = np.array([b[3] for b in brackets])
    best = np.where(np.abs(fa) <= np.abs(fb), a, b)
    fbest = np.minimum(np.abs(fa), np.abs(fb))
    side = np.zeros(len(a), dtype=int)
    active = (fbest > tol) & (a != b)
    for it in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        aa, bb, ffa, ffb = a[idx], b[idx], fa[idx], fb[idx]
        c = bb - ffb * (bb - aa) / (ffb - ffa)
        mid = 0.5 * (aa + bb)
        use_mid = ~np.isfinite(c) | (c <= np.minimum(aa, bb)) | (c >= np.maximum(aa, bb)) | (it % 4 == 3)
        c = np.where(use_mid, mid, c)
        fc = shooter.residual(c)
        for j, i in enumerate(idx):
            if not np.isfinite(fc[j]):
                # blowup inside a bracket: shrink toward the finite end
                b[i], fb[i] = c[j], fb[i]
                active[i] = False
                continue
            if abs(fc[j]) < fbest[i]:
                best[i], fbest[i] = c[j], abs(fc[j])
            if fc[j] * fb[i] < 0:
                a[i], fa[i] = b[i], fb[i]
                side[i] = 0
            else:
                fa[i] *= 0.5 if side[i] == -1 else 1.0
                side[i] = -1
            b[i], fb[i] = c[j], fc[j]
            if fbest[i] <= tol or abs(b[i] - a[i]) <= 4e-16 * max(1.0, abs(b[i])):
                active[i] = False
    return best, fbest


def shoot_robin_report(
    problem: ProblemSpec,
    s_min: float = S_RANGE[0],
    s_max: float = S_RANGE[1],
    n_scan: int = N_SCAN,
    n: int = N_STEPS,
) -> ShootingReport:
    shooter = _Shooter(problem, n)
    s = np.linspace(s_min, s_max, n_scan)
    r = shooter.residual(s)
    roots0 = _brackets(s, r)
    # half-spacing pass around every bracket to split close root pairs
    if roots0:
        spacing = s[1] - s[0]
        extra = []
        for a, _, _, _ in roots0:
            k = int(round((a - s_min) / spacing))
            for j in range(max(k - 1, 0), min(k + 2, n_scan - 1)):
                extra.append(s[j] + 0.5 * spacing)
        extra = np.unique(extra)
        r_extra = shooter.residual(extra)
        s_all = np.concatenate([s, extra])
        r_all = np.concatenate([r, r_extra])
        order = np.argsort(s_all)
        s, r = s_all[order], r_all[order]
    roots, res = _refine_batch(shooter, _brackets(s, r), RESIDUAL_TOL)

    report = ShootingReport([], sorted(shooter.skipped.items()))
    pot = problem.potential()
    for s_root, r_abs in sorted(zip(roots, res)):
        if r_abs > 1e3 * RESIDUAL_TOL:
            report.unconverged.append((float(s_root), float(r_abs)))
            continue
        u0, v0 = shooter.initial(np.array([s_root]))
        try:
            prof = integrate_ivp(
                problem.model, problem.lam, float(u0[0]), float(v0[0]), problem.L, n,
                pot=pot, alpha=problem.alpha, bc=problem.bc,
            )
        except BlowupError:
            continue
        if any(np.max(np.abs(prof.u - q.u)) < DUPLICATE_TOL for q in report.profiles):
            continue
        prof.cls = classify_profile(prof.u, None if problem.is_dirichlet else problem.alpha)
        prof.meta.update({"method": "shooting", "s": float(s_root), "residual": float(r_abs)})
        report.profiles.append(prof)
    return report


def shoot_robin(
    problem: ProblemSpec,
    s_min: float = S_RANGE[0],
    s_max: float = S_RANGE[1],
    n_scan: int = N_SCAN,
    n: int = N_STEPS,
) -> list[SolutionProfile]:
    """All solutions reachable by shooting on s = u(0) (or s = u'(0) for Dirichlet).

    The initial slope is u'(0) = alpha s and the residual is u'(L) + alpha u(L).
    Profiles come back ordered by s.
    """
    return shoot_robin_report(problem, s_min, s_max, n_scan, n).profiles


# -- reconstruction -------------------------------------------------------------


def _match_class(problem: ProblemSpec, C: float, traj: TrajectoryClass | str) -> TrajectoryClass:
    pot = problem.potential()
    geom = dirichlet_geometry(pot, C) if problem.is_dirichlet else intersections(pot, problem.gamma_star, C)
    options = classify(geom)
    if isinstance(traj, str):
        hits = [t for t in options if t.tag == traj]
    else:
        hits = [t for t in options if t.tag == traj.tag and t.indices == traj.indices]
    if not hits:
        raise RegimeError(f"no {getattr(traj, 'tag', traj)} trajectory at C = {C:g} ({geom.regime()})")
    return hits[0]


def reconstruct_from_energy(
    problem: ProblemSpec, C: float, traj: TrajectoryClass | str, n: int = N_STEPS
) -> SolutionProfile:
    """Profile of the arc ``traj`` on K_C, sampled on n+1 uniform points.

    The interval is the arc's own length, so it equals problem.L only when C
    solves the time-map equation.  Away from the turning point the arc is
    followed in u (du/dx = +-sqrt(lam) sqrt(2(C - F(u)))), near it in v
    (dv/dx = -sqrt(lam) f(F^{-1}(C - v^2/2))); the pieces meet at |v| = sqrt(C).
    """
    traj = _match_class(problem, C, traj)
    pot = problem.potential()
    f = problem.model.f
    rl = math.sqrt(problem.lam)
    (va, ua), (vb, ub) = traj.start, traj.end
    w = math.sqrt(C)
    u_split = invert_potential(pot, 0.5 * C)

    def G(v, u=None):
        return half_length(pot, C, v, u)

    segments = []  # (kind, x0, x1, y0)
    x = 0.0
    v_top = min(va, w)
    v_bottom = max(vb, -w)
    if va > w:
        d = (G(va, ua) - G(w, u_split)) / rl
        segments.append(("up", x, x + d, ua))
        x += d
    if v_top > v_bottom:
        d = (G(v_top, ua if va <= w else u_split) - G(v_bottom, ub if vb >= -w else u_split)) / rl
        segments.append(("mid", x, x + d, v_top))
        x += d
    if vb < -w:
        d = (G(-w, u_split) - G(vb, ub)) / rl
        segments.append(("down", x, x + d, u_split))
        x += d
    length = x
    grid = np.linspace(0.0, length, n + 1)
    u = np.empty_like(grid)
    v = np.empty_like(grid)
    Fv = lambda s: float(pot.F(s))

    for kind, x0, x1, y0 in segments:
        last = kind == segments[-1][0]
        mask = (grid >= x0) & ((grid <= x1) if last else (grid < x1))
        if not mask.any():
            continue
        t_eval = np.clip(grid[mask], x0, x1)
        if kind == "mid":
            rhs = lambda t, y: [-rl * float(f(invert_potential(pot, C - 0.5 * y[0] ** 2)))]
        else:
            sgn = 1.0 if kind == "up" else -1.0
            rhs = lambda t, y, sgn=sgn: [sgn * rl * math.sqrt(max(2.0 * (C - Fv(y[0])), 0.0))]
        if x1 > x0:
            sol = solve_ivp(rhs, (x0, x1), [y0], method="DOP853", t_eval=t_eval, rtol=1e-13, atol=1e-14)
            y = sol.y[0]
        else:
            y = np.full(t_eval.shape, y0)
        if kind == "mid":
            v[mask] = y
            u[mask] = [invert_potential(pot, C - 0.5 * vi * vi) for vi in y]
        else:
            u[mask] = y
            sgn = 1.0 if kind == "up" else -1.0
            v[mask] = sgn * np.sqrt(np.maximum(2.0 * (C - pot.F(y)), 0.0))
    # pin the endpoints to the intersection points
    u[0], v[0], u[-1], v[-1] = ua, va, ub, vb
    x_peak = G(va, ua) / rl if va >= 0 >= vb else (0.0 if va < 0 else length)
    return SolutionProfile(
        x=grid, u=u, v=v, C=C, cls=traj.tag, lam=problem.lam,
        alpha=None if problem.is_dirichlet else problem.alpha, model=problem.model,
        bc=DIRICHLET if problem.is_dirichlet else ROBIN,
        meta={"method": "energy", "indices": list(traj.indices), "x_peak": x_peak,
              "boundary_case": traj.boundary_case},
    )
