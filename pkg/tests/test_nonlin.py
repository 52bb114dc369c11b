import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nep_phaseplane import builtin_model, load_model, model_from_expression, potential, resolve_model
from nep_phaseplane.errors import ConventionError, DomainError, ModelDefinitionError, ModelNotFoundError
from nep_phaseplane.nonlin import default_convention, invert_potential


def test_gelfand_f_at_zero(gelfand):
    assert gelfand.f(0.0) == 1.0


def test_gelfand_tail_mass(gelfand):
    # int_{-inf}^0 e^t dt = 1
    assert gelfand.tail_mass == pytest.approx(1.0, rel=1e-15)


def test_alternative1_negative_branch():
    assert float(builtin_model("alternative1").f(-1.0)) == pytest.approx(0.25, rel=1e-15)


def test_alternative1_is_continuous_at_zero():
    m = builtin_model("alternative1")
    assert float(m.f(-1e-12)) == pytest.approx(float(m.f(0.0)), abs=1e-11)


def test_unknown_model():
    with pytest.raises(ModelNotFoundError):
        builtin_model("nope")
    with pytest.raises(ModelNotFoundError):
        resolve_model("nope-either")


def test_potential_values(gelfand, tail_pot, zero_pot):
    assert float(tail_pot.F(0.0)) == pytest.approx(1.0)
    assert tail_pot.s0 == 1.0
    assert float(zero_pot.F(0.0)) == 0.0
    assert zero_pot.s0 == 0.0
    assert float(zero_pot.F(1.0)) == pytest.approx(math.e - 1.0, rel=1e-15)


def test_convention_error_for_non_integrable():
    with pytest.raises(ConventionError):
        potential(builtin_model("alternative2"), "from_minus_infinity")


def test_inverse_examples(tail_pot, zero_pot):
    assert invert_potential(tail_pot, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert invert_potential(tail_pot, math.e) == pytest.approx(1.0, rel=1e-15)
    assert invert_potential(zero_pot, math.e - 1.0) == pytest.approx(1.0, rel=1e-15)


def test_inverse_domain_errors(tail_pot, zero_pot):
    with pytest.raises(DomainError):
        invert_potential(tail_pot, 0.0)
    with pytest.raises(DomainError):
        invert_potential(zero_pot, -1.0)


def test_round_trip_random(tail_pot, zero_pot):
    rng = np.random.default_rng(7)
    for pot in (tail_pot, zero_pot):
        for u in rng.uniform(-10, 10, 100):
            assert abs(invert_potential(pot, float(pot.F(u))) - u) <= 1e-9


def test_monotone_potential():
    for name in ("gelfand", "alternative1", "nonconvex5"):
        pot = potential(builtin_model(name), "from_zero")
        lo = 0.0 if name == "nonconvex5" else -5.0
        u = np.linspace(lo, 5.0, 400)
        F = np.array([float(pot.F(x)) for x in u])
        assert np.all(np.diff(F) > 0)


def test_quadrature_matches_closed_form():
    # same f, no closed-form potential: the quadrature route is exercised
    m = model_from_expression("exp-by-quadrature", "exp(u)", integrable_at_minus_infinity=True)
    assert m.tail_mass == pytest.approx(1.0, rel=1e-12)
    tail = potential(m, "from_minus_infinity")
    zero = potential(m, "from_zero")
    for u in np.linspace(-5, 5, 23):
        assert float(tail.F(u)) == pytest.approx(math.exp(u), rel=1e-10)
        if abs(u) > 1e-12:
            assert float(zero.F(u)) == pytest.approx(math.expm1(u), rel=1e-10)
    assert invert_potential(tail, math.e) == pytest.approx(1.0, rel=1e-10)


def test_alternative1_potential_closed_forms():
    m = builtin_model("alternative1")
    tail = potential(m, "from_minus_infinity")
    assert float(tail.F(-1.0)) == pytest.approx(0.5)  # int_{-inf}^{-1} (t-1)^{-2} dt
    assert float(tail.F(1.0)) == pytest.approx(4.0)  # 1 + 1 + 1 + 1
    for s in (0.3, 1.0, 2.5, 40.0):
        assert float(tail.F(invert_potential(tail, s))) == pytest.approx(s, rel=1e-12)


def test_nonconvex5_matches_polynomial_integral():
    from scipy.integrate import quad

    m = builtin_model("nonconvex5")
    pot = potential(m, "from_zero")
    for u in (0.3, 1.0, 1.7):
        ref, _ = quad(m.f, 0.0, u, epsabs=0, epsrel=1e-13)
        assert float(pot.F(u)) == pytest.approx(ref, rel=1e-12)
    assert not m.convex


def test_model_checks_reject_bad_f():
    with pytest.raises(ModelDefinitionError):
        model_from_expression("neg", "0 - 1 - u^2")
    with pytest.raises(ModelDefinitionError):
        model_from_expression("decreasing", "exp(0 - u)")


def test_model_file(tmp_path):
    path = tmp_path / "alt.json"
    path.write_text(json.dumps({
        "name": "alt1-file",
        "f": "piecewise(u < 0, 1/(u-1)^2, 1 + 2*u + 3*u^2)",
        "integrable_at_minus_infinity": True,
    }))
    m = load_model(path)
    assert m.name == "alt1-file"
    assert m.tail_mass == pytest.approx(1.0, rel=1e-10)
    assert float(m.f_prime(0.5)) == pytest.approx(5.0, rel=1e-8)
    assert resolve_model(str(path)).name == "alt1-file"


def test_default_convention(gelfand):
    assert default_convention(gelfand, -1.0) == "from_minus_infinity"
    assert default_convention(gelfand, 1.0) == "from_zero"
    assert default_convention(gelfand, None) == "from_zero"


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=-30.0, max_value=30.0))
def test_round_trip_property(u):
    pot = potential(builtin_model("gelfand"), "from_minus_infinity")
    assert invert_potential(pot, float(pot.F(u))) == pytest.approx(u, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.0, max_value=3.0))
def test_round_trip_property_quadrature(u):
    pot = potential(model_from_expression("q", "1 + u + u^2", valid_range=(0.0, math.inf)), "from_zero")
    assert invert_potential(pot, float(pot.F(u))) == pytest.approx(u, abs=1e-9)
