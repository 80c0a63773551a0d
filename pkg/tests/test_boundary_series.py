import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import boundary_series as bs
from artifact.geometry import DeSitter

# d = 3, m = 1.2 (omega = -0.6), lambda = 3, nu = 0.  Frozen from an mpmath
# solve that cancels the Taylor coefficients of the radial operator applied
# to a polynomial, one order at a time, without using the recurrence.
FROZEN_ALPHA = [1.0, -19.2, 6.2836363636363636, 4.4683636363636364,
                4.9296140762463343, 6.4638061643659252]


def test_weights_and_exponents():
    w0, w1 = bs.mass_to_weights(3, 1.2)
    assert w0 == pytest.approx(-0.6) and w1 == pytest.approx(-2.4)
    for w in (w0, w1):
        assert w * (w + 3) == pytest.approx(-1.44)
    lo, hi = bs.asymptotic_exponents(4, math.sqrt(3))
    assert (lo, hi) == (pytest.approx(0.5), pytest.approx(1.5))
    assert bs.h0_of(-1, 4) == 2
    assert bs.indicial_roots(2.5) == (0, 1.5)


def test_zeroth_order_variants():
    assert bs.zeroth_order_constant(2.0, 3) == 8.0
    assert bs.zeroth_order_constant(2.0, 3, "recurrence") == 10.0
    with pytest.raises(ValueError):
        bs.zeroth_order_constant(2.0, 3, "other")


def test_coefficients_match_frozen_oracle():
    s = bs.frobenius_desitter(3, bs.mass_to_weights(3, 1.2)[0], 3, 0, 5)
    assert s.coeffs == pytest.approx(FROZEN_ALPHA, rel=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 5), st.floats(0.1, 0.95), st.integers(0, 3))
def test_residual_order_both_roots(d, mfrac, l):
    m = mfrac * d / 2
    omega = bs.mass_to_weights(d, m)[0]
    gap = (bs.h0_of(omega, d) - 1).real
    if abs(gap - round(gap)) < 0.05:
        return
    lam = l * (l + d - 1)
    for nu in bs.indicial_roots(bs.h0_of(omega, d)):
        s = bs.frobenius_desitter(d, omega, lam, nu, 6)
        assert bs.residual_slope(s) == pytest.approx(complex(nu).real + 6, abs=0.1)


def test_printed_recurrence_loses_residual_order():
    omega = bs.mass_to_weights(3, 1.2)[0]
    good = bs.frobenius_desitter(3, omega, 3, 0, 8)
    bad = bs.frobenius_desitter(3, omega, 3, 0, 8, recurrence="printed")
    assert bs.residual_slope(good) == pytest.approx(8, abs=0.1)
    assert abs(bs.residual_slope(bad) - 8) > 1


def test_complex_mass_series():
    omega = bs.mass_to_weights(2, 2.0)[0]
    assert omega.imag != 0
    h0 = bs.h0_of(omega, 2)
    s = bs.frobenius_desitter(2, omega, 0, h0 - 1, 8)
    assert bs.residual_slope(s) == pytest.approx((h0 - 1).real + 8, abs=0.1)


def test_resonance_detected():
    # d = 4, m = sqrt(3): h0 - 1 = 1, the nu = 0 series divides by zero at k = 1
    with pytest.raises(bs.ResonanceError):
        bs.frobenius_desitter(4, -1.0, 0, 0, 4)
    with pytest.raises(bs.ResonanceError):
        bs.formal_operator_coeffs(3, 4)


@given(st.complex_numbers(max_magnitude=6, allow_nan=False, allow_infinity=False))
def test_formal_coefficients_product_formula(h0):
    if any(abs(k - h0 + 1) < 1e-3 for k in range(1, 7)):
        return
    s = bs.formal_operator_coeffs(h0, 6)
    prod = 1
    for k in range(1, 7):
        prod *= k * (k - h0 + 1)
        assert s.coeffs[k] == pytest.approx((-1) ** k / prod, rel=1e-12)


def test_formal_coefficients_simple_case():
    assert bs.formal_operator_coeffs(4, 2).coeffs == pytest.approx([1, 0.5, 0.25])
    with pytest.raises(ValueError):
        bs.formal_operator_coeffs(4, 2, nu=0.5)


@pytest.mark.parametrize("N", [0, 2, 6])
def test_formal_decay_exponent(N):
    _, _, rep = bs.formal_solution_reduced(3, 0.3, 1, [1, 0.4, -0.2], 0, N)
    assert rep.decay_exponent == pytest.approx(N, abs=0.15)


def test_formal_second_root_complex():
    omega = 0.3 + 0.2j
    nu = 1 - bs.h0_of(omega, 3)
    _, _, rep = bs.formal_solution_reduced(3, omega, 1, [1, 0.4, -0.2], nu, 4)
    assert rep.decay_exponent == pytest.approx(nu.real + 4, abs=0.15)


def test_field_path_agrees_with_radial_path():
    geom = DeSitter(3)
    pts = geom.sample_points(np.random.default_rng(41), 3)
    assert bs.formal_solution_crosscheck(geom, 0.3, 1, [1, 0.4, -0.2], 0, 1, pts) < 1e-9


def test_x_power_commutator():
    assert bs.x_nu_commutator_check(DeSitter(2), 0.5, 0.37 + 0.2j, trials=1, points=3) < 1e-10


def test_coefficient_audit_selects_radial_constant():
    a = bs.coefficient_audit(DeSitter(3), 0.7, l=1)
    assert a.winner == "radial"
    assert a.scale_factors["radial"] == pytest.approx(2.0, abs=1e-9)
    assert a.residuals["radial"] < 1e-10
    assert a.residuals["recurrence"] > 1e-3


@pytest.mark.parametrize("d,m", [(4, 1.5), (3, 1.1), (2, 0.7), (4, math.sqrt(3))])
def test_fitted_exponents(d, m):
    fit = bs.integrate_and_fit(d, m)
    expected = sorted(bs.asymptotic_exponents(d, m), key=lambda z: z.real)
    for got, want in zip(fit.exponents, expected):
        assert got == pytest.approx(want.real, rel=1e-3)


def test_fit_rejects_complex_branch_and_short_window():
    with pytest.raises(ValueError):
        bs.integrate_and_fit(2, 2.0)
    with pytest.raises(ValueError):
        bs.integrate_and_fit(3, 1.0, rho_end=1e-5)


def test_complex_branch_reconstruction():
    rep = bs.complex_branch_check(2, 2.0)
    assert rep.max_relative_error < 1e-6
    assert abs(rep.omega.imag) == pytest.approx(abs(cmath.sqrt(4 - 16).imag) / 2)


def test_record_round_trips_to_plain_types():
    s = bs.frobenius_desitter(3, -0.6, 3, 0, 3)
    rec = s.record()
    assert rec["source"] == "DeSitterODE"
    assert len(s.csv_rows()) == 4
