"""Acceptance criteria, each at its stated tolerance, one report line apiece."""

import itertools
import math
import time

import numpy as np
import pytest

import oracles
from nep_phaseplane import DIRICHLET, ProblemSpec, builtin_model, potential
from nep_phaseplane.continuation import Discretization, distinct_solutions, fold_lambdas, slice_branch, trace_branch, trivial_state
from nep_phaseplane.eig import linearized_spectrum, steklov_reference
from nep_phaseplane.greens import integral_residual
from nep_phaseplane.phase import classify, intersections, tangency
from nep_phaseplane.shoot import integrate_ivp, reconstruct_from_energy, shoot_robin
from nep_phaseplane.timemap import (
    asymmetric_monotone_length,
    count_solutions,
    dirichlet_length,
    symmetric_length,
    trajectory_length,
)

GELFAND = builtin_model("gelfand")


def test_criterion_01_dirichlet_time_map(criterion):
    pot = potential(GELFAND, "from_zero")
    Cs = np.geomspace(1e-3, 1e3, 50)
    t0 = time.perf_counter()
    got = [dirichlet_length(pot, 1.0, C) for C in Cs]
    elapsed = time.perf_counter() - t0
    # L = (2/sqrt(lam)) * closed form
    ref = [oracles.dirichlet_length(C) for C in Cs]
    err = max(abs(g - r) / r for g, r in zip(got, ref))
    ok = err <= 1e-8 and elapsed < 1.0
    assert criterion(1, ok, f"max rel err {err:.2e} (<= 1e-8), {elapsed:.3f} s (< 1 s)")


def test_criterion_02_fold_point(criterion):
    ref, _ = oracles.dirichlet_fold()
    t0 = time.perf_counter()
    disc = Discretization(1.0, GELFAND, bc=DIRICHLET, N=400)
    br = trace_branch(disc, trivial_state(disc), steps=80, ds=0.1, ds_max=0.5, stability=False)
    fold = fold_lambdas(disc, br)[0]
    elapsed = time.perf_counter() - t0
    ok = abs(fold - ref) <= 1e-3 and elapsed < 10.0
    assert criterion(2, ok, f"lambda* {fold:.7f} vs oracle {ref:.7f} (|d| {abs(fold - ref):.1e} <= 1e-3), {elapsed:.2f} s (< 10 s)")


@pytest.mark.parametrize("alpha,lam,expected", [(-1.1, 100.0, 5), (-1.0, 250.0, 3)])
def test_criterion_03_solution_counts(criterion, alpha, lam, expected):
    problem = ProblemSpec(1.0, lam, GELFAND, alpha=alpha)
    t0 = time.perf_counter()
    count = count_solutions(problem)
    t_count = time.perf_counter() - t0
    t0 = time.perf_counter()
    profs = shoot_robin(problem)
    t_shoot = time.perf_counter() - t0
    shot = {}
    for p in profs:
        shot[p.cls] = shot.get(p.cls, 0) + 1
    ok = count.total == expected == len(profs) and shot == count.by_type and max(t_count, t_shoot) < 5.0
    assert criterion(3, ok, f"alpha={alpha} lambda={lam}: time map {count.total} {dict(sorted(count.by_type.items()))}, "
                            f"shooting {len(profs)} {dict(sorted(shot.items()))}, {t_count:.2f}/{t_shoot:.2f} s")


def test_criterion_04_limit_laws(criterion):
    pot = potential(GELFAND, "from_minus_infinity")
    L1 = symmetric_length(pot, 1.0, -1.0, 1e6, 1).length
    L12 = asymmetric_monotone_length(pot, 1.0, -1.0, 1e6).length
    L2_s0 = symmetric_length(pot, 1.0, -1.0, 1.0, 2).length
    C_tilde, _ = tangency(pot, -1.0)
    grid = np.linspace(C_tilde, 1.0, 102)[1:-1]
    L2 = np.array([symmetric_length(pot, 1.0, -1.0, C, 2).length for C in grid])
    decreasing = bool(np.all(np.diff(L2) < 0))
    ok = abs(L1 - 2) <= 0.1 and abs(L12 - 1) <= 0.05 and abs(L2_s0) <= 1e-6 and decreasing
    assert criterion(4, ok, f"L1(1e6)={L1:.4f} (2 +- 5%), L12(1e6)={L12:.4f} (1 +- 5%), "
                            f"L2(s0)={L2_s0:.1e}, L2 decreasing on 100 points: {decreasing}")


POSITIVE = [(1.0, 0.5), (0.3, 0.2), (4.0, 1.0), (2.0, 0.1)]
NEGATIVE = [(-1.1, 100.0), (-1.0, 250.0), (-1.0, 1.0), (-2.0, 5.0), (-0.6, 30.0)]


@pytest.fixture(scope="module")
def solution_sets():
    pos = {(a, l): shoot_robin(ProblemSpec(1.0, l, GELFAND, alpha=a)) for a, l in POSITIVE}
    neg = {(a, l): shoot_robin(ProblemSpec(1.0, l, GELFAND, alpha=a)) for a, l in NEGATIVE}
    return pos, neg


def _pattern(p):
    u, du = p.u, p.du
    return [
        u[0] > 0 and du[0] < 0 and u[-1] < 0,
        u[0] < 0 and du[0] > 0 and u[-1] > 0,
        u[0] < 0 and u[-1] < 0 and du[0] > 0 and du[-1] < 0,
    ]


def test_criterion_05_shape_laws(criterion, solution_sets):
    pos, neg = solution_sets
    n_pos = sum(len(v) for v in pos.values())
    n_neg = sum(len(v) for v in neg.values())
    pos_ok = all(np.all(p.u > 0) and np.max(np.abs(p.u - p.u[::-1])) <= 1e-6 for v in pos.values() for p in v)
    neg_ok = all(sum(_pattern(p)) == 1 for v in neg.values() for p in v)
    pairs = [(a, b) for v in neg.values() for a, b in itertools.combinations(v, 2)]
    cross_ok = all(np.min(a.u - b.u) <= 0 <= np.max(a.u - b.u) for a, b in pairs)
    ok = pos_ok and neg_ok and cross_ok and n_pos > 0 and n_neg > 0
    assert criterion(5, ok, f"{n_pos} alpha>0 solutions positive+symmetric: {pos_ok}; {n_neg} alpha<0 solutions "
                            f"match one pattern: {neg_ok}; {len(pairs)} pairs intersect: {cross_ok}")


def test_criterion_06_spectral_ordering(criterion, solution_sets):
    pos, neg = solution_sets
    neg_margin = math.inf
    for (a, l), profs in neg.items():
        problem = ProblemSpec(1.0, l, GELFAND, alpha=a)
        for p in profs:
            r = linearized_spectrum(problem, p, k=1)
            neg_margin = min(neg_margin, -r.mu1 / (10 * r.error_estimate[0]))
    pos_margins = []
    for (a, l), profs in pos.items():
        if len(profs) != 2:
            continue
        problem = ProblemSpec(1.0, l, GELFAND, alpha=a)
        lo, hi = sorted(profs, key=lambda p: p.u_max)
        r_lo = linearized_spectrum(problem, lo, k=1)
        r_hi = linearized_spectrum(problem, hi, k=1)
        pos_margins.append((r_lo.mu1 - l) / (10 * r_lo.error_estimate[0]))
        pos_margins.append((l - r_hi.mu1) / (10 * r_hi.error_estimate[0]))
    ok = neg_margin > 1 and len(pos_margins) >= 2 and min(pos_margins) > 1
    assert criterion(6, ok, f"mu1 < 0 on all alpha<0 solutions (min margin {neg_margin:.1e} x 10 err); "
                            f"lambda <= mu1 (minimal) / mu1 <= lambda (upper) on {len(pos_margins) // 2} pairs "
                            f"(min margin {min(pos_margins):.1e} x 10 err)")


def test_criterion_07_energy_and_order(criterion):
    pot = potential(GELFAND, "from_zero")
    cases = [(1.0, 0.0, 0.0), (3.5, 0.0, 1.2), (10.0, 0.3, -0.5), (100.0, -2.0, 0.1)]
    drift = max(integrate_ivp(GELFAND, l, u0, v0, 1.0, 1024, pot=pot).energy_drift(pot) for l, u0, v0 in cases)
    ends = [integrate_ivp(GELFAND, 10.0, 0.3, -0.5, 1.0, n).u[-1] for n in (32, 64, 128, 256, 512)]
    errs = np.abs(np.diff(ends))
    orders = np.log2(errs[:-1] / errs[1:])
    ok = drift <= 1e-10 and bool(np.all(np.abs(orders - 4.0) <= 0.3))
    assert criterion(7, ok, f"max drift {drift:.1e} (<= 1e-10 at n=1024), orders {np.round(orders, 3).tolist()} (4 +- 0.3)")


def _random_cases(rng, count):
    out = []
    while len(out) < count:
        lam = float(rng.uniform(1.0, 10.0))
        if rng.random() < 0.3:
            alpha = float(rng.uniform(0.5, 3.0))
            pot = potential(GELFAND, "from_zero")
            C = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
        else:
            alpha = float(rng.uniform(-2.0, -0.5))
            pot = potential(GELFAND, "from_minus_infinity")
            C_tilde, _ = tangency(pot, math.sqrt(lam) / alpha)
            C = float(C_tilde + np.exp(rng.uniform(np.log(1e-3), np.log(10.0))))
            if abs(C - pot.s0) < 1e-6:
                continue
        trajs = classify(intersections(pot, math.sqrt(lam) / alpha, C))
        if not trajs:
            continue
        traj = trajs[int(rng.integers(len(trajs)))]
        L = trajectory_length(pot, lam, C, traj)
        if not 0.05 <= L <= 5.0 or abs(2.0 + alpha * L) < 1e-3:
            continue
        out.append((ProblemSpec(L, lam, GELFAND, alpha=alpha), C, traj))
    return out


def test_criterion_08_cross_oracle_profiles(criterion):
    rng = np.random.default_rng(20240611)
    worst_diff, worst_res, failures = 0.0, 0.0, []
    for problem, C, traj in _random_cases(rng, 10):
        rec = reconstruct_from_energy(problem, C, traj)
        span = float(np.max(np.abs(rec.u))) + 1.0
        shots = shoot_robin(problem, -span, span, n_scan=1024)
        diffs = [np.max(np.abs(np.interp(rec.x, s.x, s.u) - rec.u)) for s in shots]
        if not diffs:
            failures.append((problem.alpha, problem.lam, C, traj.tag))
            continue
        k = int(np.argmin(diffs))
        worst_diff = max(worst_diff, diffs[k])
        for prof in (rec, shots[k]):
            worst_res = max(worst_res, integral_residual(problem, prof) / (10 * prof.h**2))
    ok = not failures and worst_diff <= 1e-5 and worst_res <= 1.0
    assert criterion(8, ok, f"10 random cases: max sup-norm diff {worst_diff:.1e} (<= 1e-5), "
                            f"max greens residual {worst_res:.2f} x 10h^2 (<= 1), unmatched {failures}")


def test_criterion_09_nonconvex_four_crossings(criterion):
    model = builtin_model("nonconvex5")
    disc = Discretization(1.0, model, bc=DIRICHLET, N=400)
    br = trace_branch(disc, trivial_state(disc), steps=400, ds=0.05, ds_max=0.5, stability=False)
    lams = np.linspace(1.2, 1.6, 41)
    counts = [len(distinct_solutions(slice_branch(disc, br, lam), reflect=False)) for lam in lams]
    four = [round(float(l), 3) for l, c in zip(lams, counts) if c == 4]
    ok = bool(four)
    assert criterion(9, ok, f"lambda slices with exactly 4 crossings in [1.2, 1.6]: {four[0]}..{four[-1]} "
                            f"({len(four)} of 41)" if four else "no slice with 4 crossings")


def test_criterion_10_steklov(criterion):
    mu1, mu2 = steklov_reference(1.0)
    err = max(abs(mu1 - 0.0), abs(mu2 - 2.0))
    assert criterion(10, err <= 1e-6, f"steklov_reference(1) = ({mu1:.2e}, {mu2:.12f}), |error| {err:.1e} (<= 1e-6)")
