import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nep_phaseplane import ProblemSpec
from nep_phaseplane.errors import GreensFunctionError, NoMinimalSolutionError
from nep_phaseplane.greens import (
    apply_greens,
    compatibility_defect,
    greens_value,
    integral_residual,
    picard_iterates,
    picard_minimal,
)
from nep_phaseplane.problem import SolutionProfile
from nep_phaseplane.shoot import shoot_robin
from nep_phaseplane.timemap import lambda_of_C


def test_kernel_value():
    # (1 + alpha*0)(1 + alpha*L - alpha*0) / (alpha (2 + alpha L)) = 2/3
    assert greens_value(1.0, 1.0, 0.0, 0.0) == pytest.approx(2.0 / 3.0, rel=1e-15)


def test_kernel_symmetry_and_nonexistence():
    assert greens_value(1.0, 1.0, 0.3, 0.7) == greens_value(1.0, 1.0, 0.7, 0.3)
    with pytest.raises(GreensFunctionError):
        greens_value(-2.0, 1.0, 0.1, 0.2)


def test_kernel_positive_for_positive_alpha():
    x = np.linspace(0, 1.5, 50)
    X, Y = np.meshgrid(x, x)
    assert np.all(greens_value(0.7, 1.5, X, Y) > 0)


def test_reciprocity_random_pairs():
    rng = np.random.default_rng(3)
    for _ in range(200):
        alpha = rng.choice([-1.3, -0.4, 0.5, 3.0])
        L = rng.uniform(0.2, 2.0)
        if abs(2 + alpha * L) < 1e-3:
            continue
        x, xi = rng.uniform(0, L, 2)
        assert greens_value(alpha, L, x, xi) == pytest.approx(greens_value(alpha, L, xi, x), abs=1e-12)


def test_apply_greens_solves_constant_load():
    # -u'' = 1, u'(0) = alpha u(0), u'(L) = -alpha u(L): u = -x^2/2 + a x + b
    alpha, L = -0.7, 1.3
    A = np.array([[1.0, -alpha], [1.0 + alpha * L, alpha]])
    rhs = np.array([0.0, L + alpha * L * L / 2])
    a, b = np.linalg.solve(A, rhs)
    x = np.linspace(0, L, 257)
    value, slope = apply_greens(alpha, x, np.ones_like(x))
    np.testing.assert_allclose(value, -x * x / 2 + a * x + b, atol=1e-12)
    np.testing.assert_allclose(slope, -x + a, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-3, 3).filter(lambda a: abs(a) > 0.05),
    st.floats(0.2, 2.0),
    st.lists(st.floats(-2, 2), min_size=3, max_size=3),
)
def test_greens_image_satisfies_robin_conditions(alpha, L, coeffs):
    if abs(2 + alpha * L) < 1e-2:
        return
    x = np.linspace(0, L, 129)
    q = coeffs[0] + coeffs[1] * x + coeffs[2] * x * x
    value, slope = apply_greens(alpha, x, q)
    scale = 1.0 + np.max(np.abs(value)) * (1 + abs(alpha))
    assert abs(slope[0] - alpha * value[0]) <= 1e-10 * scale
    assert abs(slope[-1] + alpha * value[-1]) <= 1e-10 * scale


def test_residual_of_exact_and_perturbed(gelfand):
    p = ProblemSpec(1.0, 0.5, gelfand, 1.0)
    prof = shoot_robin(p)[0]
    exact = integral_residual(p, prof)
    assert exact <= 1e-6
    bumped = SolutionProfile(prof.x, prof.u + 0.1, prof.v, prof.C, prof.cls, prof.lam, prof.alpha, prof.model)
    assert integral_residual(p, bumped) > 10 * exact


def test_residual_of_zero_profile(gelfand):
    p = ProblemSpec(1.0, 1.0, gelfand, 1.0)
    x = np.linspace(0, 1, 513)
    zero = SolutionProfile(x, np.zeros_like(x), np.zeros_like(x), 0.0, "none", 1.0, 1.0, gelfand)
    expected = np.max(apply_greens(1.0, x, np.ones_like(x))[0])
    assert integral_residual(p, zero) == pytest.approx(expected, rel=1e-12)
    assert expected > 0


def test_picard_small_lambda_is_near_zero(gelfand):
    prof = picard_minimal(ProblemSpec(1.0, 1e-12, gelfand, 1.0))
    assert np.max(np.abs(prof.u)) < 1e-11


def test_picard_matches_shooting(gelfand):
    p = ProblemSpec(1.0, 0.1, gelfand, 1.0)
    minimal = picard_minimal(p)
    smallest = min(shoot_robin(p), key=lambda q: q.u_max)
    assert np.max(np.abs(minimal.u - smallest.u)) <= 1e-6


def test_picard_iterates_increase(gelfand):
    p = ProblemSpec(1.0, 0.4, gelfand, 1.0)
    it = picard_iterates(p, n=256)
    prev = next(it)[1]
    for _ in range(15):
        cur = next(it)[1]
        assert np.all(cur >= prev - 1e-14)
        prev = cur


def test_picard_beyond_fold(gelfand, zero_pot):
    Cs = np.geomspace(1e-2, 1e2, 60)
    lam_star = max(lambda_of_C(zero_pot, 1.0, 1.0, C) for C in Cs)
    with pytest.raises(NoMinimalSolutionError):
        picard_minimal(ProblemSpec(1.0, 2 * lam_star, gelfand, 1.0))


def test_compatibility_defect(gelfand):
    x = np.linspace(0, 1, 2049)
    sym = SolutionProfile(x, np.sin(np.pi * x), x, 0.0, "s_solution", 1.0, -2.0, gelfand)
    assert abs(compatibility_defect(sym)) <= 1e-9
    lin = SolutionProfile(x, x, x, 0.0, "none", 1.0, -2.0, gelfand)
    # int_0^1 (x - 1/2) e^x dx = 3/2 - e/2
    assert compatibility_defect(lin) == pytest.approx(1.5 - math.e / 2, abs=1e-6)
    assert compatibility_defect(lin) > 0


def test_compatibility_defect_on_alpha_minus_two_solution(gelfand):
    profiles = shoot_robin(ProblemSpec(1.0, 5.0, gelfand, -2.0))
    assert profiles
    for prof in profiles:
        assert abs(compatibility_defect(prof)) <= 1e-6
