import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import jetcalc as jc
from artifact.jetcalc import Jet

coords = st.floats(min_value=-1.5, max_value=1.5, allow_nan=False)
orders = st.integers(min_value=0, max_value=5)


def point(*xs):
    return np.array([xs], dtype=float)


def test_coefficient_count():
    assert jc.n_coeffs(2, 3) == math.comb(5, 2)
    assert jc.n_coeffs(4, 8) == math.comb(12, 4)
    assert len(jc.multi_indices(3, 2)) == jc.n_coeffs(3, 2)


def test_product_of_coordinates():
    # f = x^2 y at (1, 2): f_x = 4, f_xy = 2, f_xxy = 2
    x = Jet.variable(point(1.0, 2.0), 0, 4)
    y = Jet.variable(point(1.0, 2.0), 1, 4)
    f = x * x * y
    assert f.value[0] == pytest.approx(2.0)
    assert f.derivative((1, 0))[0] == pytest.approx(4.0)
    assert f.derivative((0, 1))[0] == pytest.approx(1.0)
    assert f.derivative((1, 1))[0] == pytest.approx(2.0)
    assert f.derivative((2, 1))[0] == pytest.approx(2.0)
    assert f.derivative((0, 2))[0] == 0


@given(coords, coords, orders)
def test_sin_matches_derivative_cycle(a, b, order):
    x = Jet.variable(point(a, b), 0, order)
    s = jc.sin(x)
    for j in range(order + 1):
        expected = [math.sin, math.cos, lambda t: -math.sin(t), lambda t: -math.cos(t)][j % 4](a)
        assert s.derivative((j, 0))[0] == pytest.approx(expected, abs=1e-12)


@given(coords, coords)
def test_exp_of_sum_factorises(a, b):
    x = Jet.variable(point(a, b), 0, 5)
    y = Jet.variable(point(a, b), 1, 5)
    lhs = jc.exp(x + y)
    rhs = jc.exp(x) * jc.exp(y)
    assert (lhs - rhs).max_abs() <= 1e-12 * (1 + lhs.max_abs())


@given(coords, coords, orders)
def test_reciprocal_inverts(a, b, order):
    x = Jet.variable(point(a, b), 0, order)
    g = x * x + 1.0
    one = g * jc.reciprocal(g)
    assert abs(one.value[0] - 1) < 1e-13
    assert np.abs(one.coeffs[..., 1:]).max(initial=0) < 1e-12


@settings(max_examples=30)
@given(st.floats(min_value=0.2, max_value=2.0), st.complex_numbers(max_magnitude=3, allow_nan=False))
def test_complex_power_against_mpmath(a, p):
    x = Jet.variable(point(a), 0, 5)
    g = jc.power(x, p)
    for j in range(6):
        ref = complex(mp.diff(lambda t: t ** p, a, j))
        assert g.derivative((j,))[0] == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_mixed_partials_commute():
    rng = np.random.default_rng(3)
    spec = jc.random_field(rng, 3)
    f = spec.evaluate(rng.uniform(-1, 1, (4, 3)), 4)
    a = jc.partial(jc.partial(f, 0), 2)
    b = jc.partial(jc.partial(f, 2), 0)
    assert (a - b).max_abs() < 1e-12


def test_partial_against_mpmath():
    spec = jc.Product([jc.Sin(jc.Coord(0)), jc.Exp(jc.Scale(0.5, jc.Coord(1)))])
    f = spec.evaluate(point(0.3, -0.7), 4)
    ref = mp.diff(lambda u, v: mp.sin(u) * mp.exp(v / 2), (0.3, -0.7), (2, 2))
    assert f.derivative((2, 2))[0] == pytest.approx(complex(ref), rel=1e-10)


def test_chain_rule_through_compose():
    # d/dx cos(x^2) at x = 0.8
    x = Jet.variable(point(0.8), 0, 3)
    c = jc.cos(x * x)
    assert c.derivative((1,))[0] == pytest.approx(-2 * 0.8 * math.sin(0.64))
    assert c.derivative((2,))[0] == pytest.approx(-2 * math.sin(0.64) - 4 * 0.64 * math.cos(0.64))


def test_log_inverts_exp():
    x = Jet.variable(point(0.4, 0.1), 1, 6)
    g = jc.log(jc.exp(x + 0.3))
    assert (g - (x + 0.3)).max_abs() < 1e-12


def test_truncate_and_partial_orders():
    x = Jet.variable(point(0.1, 0.2), 0, 3)
    assert jc.partial(x, 0).order == 2
    assert x.truncate(1).order == 1
    with pytest.raises(jc.OrderExhaustedError):
        x.truncate(5)
    with pytest.raises(jc.OrderExhaustedError):
        jc.partial(x.truncate(0), 0)


def test_structural_errors():
    with pytest.raises(jc.StructuralError):
        Jet.zeros((), 2, jc.MAX_ORDER + 1)
    a = Jet.variable(point(0.1, 0.2), 0, 3)
    b = Jet.variable(point(0.1, 0.2, 0.3), 0, 3)
    with pytest.raises(jc.StructuralError):
        a + b


def test_domain_errors():
    zero = Jet.constant(np.zeros(1), 1, 2)
    with pytest.raises(jc.DomainError):
        jc.reciprocal(zero)
    with pytest.raises(jc.DomainError):
        jc.power(zero, 0.5)


def test_spec_json_round_trip():
    doc = {"op": "add", "args": [
        {"op": "mul", "args": [{"op": "coord", "index": 0}, {"op": "coord", "index": 1}]},
        {"op": "pow", "base": {"op": "coord", "index": 0}, "exponent": 3},
        {"op": "sin", "arg": {"op": "coord", "index": 1}},
        {"op": "const", "value": [1.0, 2.0]},
    ]}
    f = jc.spec_from_json(doc).evaluate(point(0.5, 0.25), 2)
    assert f.value[0] == pytest.approx(0.125 + 0.125 + math.sin(0.25) + 1 + 2j)
    assert f.derivative((1, 0))[0] == pytest.approx(0.25 + 3 * 0.25)
    with pytest.raises(ValueError):
        jc.spec_from_json({"op": "tan", "arg": 1})


@given(st.integers(min_value=0, max_value=3))
def test_integer_power_matches_repeated_product(p):
    x = Jet.variable(point(0.7, -0.2), 1, 4) + 2.0
    direct = Jet.constant(np.ones(1), 2, 4)
    for _ in range(p):
        direct = direct * x
    assert (jc.power(x, p) - direct).max_abs() < 1e-12
