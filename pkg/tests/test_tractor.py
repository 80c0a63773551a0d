import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact import geometry as G
from artifact import jetcalc as jc
from artifact import tractor as T
from artifact.forms import WeightedFormField

OMEGA = 0.4 + 0.3j


@pytest.fixture(scope="module")
def ds():
    geom = G.DeSitter(2)
    ctx = geom.at(geom.sample_points(np.random.default_rng(21), 4), 2)
    return geom, ctx.lc, ctx.scale("S")


def rel(a, b):
    return (a - b).max_abs() / (1 + b.max_abs())


def field(rng, n, k, sc, omega=OMEGA):
    return T.TractorFormField.random(rng, n, k, omega).evaluate(sc)


def test_transport_round_trip(ds):
    geom, lc, S = ds
    rng = np.random.default_rng(22)
    for k in range(geom.n + 2):
        F = field(rng, geom.n, k, lc)
        assert rel(T.transport(T.transport(F, S), lc), F) < 1e-12


def test_slot_and_full_array_routes_agree(ds):
    # each operator has an independent implementation on the full (n+1)-index arrays
    geom, lc, S = ds
    rng = np.random.default_rng(23)
    n = geom.n
    for sc in (lc, S):
        for k in range(n + 2):
            F = field(rng, n, k, sc)
            if k <= n:
                assert rel(T.D(F), T.full_D(F)) < 1e-11
            assert rel(T.tractor_hodge(F), T.full_hodge(F)) < 1e-11
            assert rel(T.tractor_laplacian(F), T.full_laplacian(F)) < 1e-11
            if k >= 1:
                assert rel(T.Dstar(F), T.Dstar_closed(F)) < 1e-11
                assert rel(T.contract_I(F), T.full_contract_I(F)) < 1e-11
                assert rel(T.Istar_op(F), -T.full_contract_I(F)) < 1e-11


def test_printed_hodge_variant_only_holds_where_T_vanishes(ds):
    geom, lc, S = ds
    rng = np.random.default_rng(24)
    F = field(rng, geom.n, 2, lc)
    assert rel(T.tractor_hodge_as_printed(F), T.tractor_hodge(F)) < 1e-13
    FS = T.transport(F, S)
    assert S.T.max_abs() > 0.1
    assert rel(T.tractor_hodge_as_printed(FS), T.full_hodge(FS)) > 1e-3


def test_Dstar_squared_and_anticommutator_closed_form(ds):
    geom, lc, S = ds
    rng = np.random.default_rng(25)
    for k in range(2, geom.n + 2):
        F = field(rng, geom.n, k, S)
        assert T.Dstar(T.Dstar(F)).max_abs() < 1e-10 * (1 + F.max_abs())
    for k in range(geom.n + 2):
        F = field(rng, geom.n, k, S)
        assert rel(T.anticommutator_DDstar(F), T.anticommutator_closed(F)) < 1e-10


def test_de_sitter_tractor_connection_is_flat(ds):
    _, lc, S = ds
    assert T.tractor_curvature(lc).max_abs() < 1e-10
    assert T.tractor_curvature(S).max_abs() < 1e-10


def test_sl2_relations_small_sweep():
    rep = T.sl2_relations(G.DeSitter(2), OMEGA, 1, trials=1, points=3, scale="S", seed=3)
    assert set(rep) >= {"x_ytilde", "h_x", "h_ytilde"}
    assert max(rep.values()) < 1e-8


def test_h_acts_by_shifted_weight(ds):
    geom, lc, _ = ds
    F = field(np.random.default_rng(26), geom.n, 1, lc)
    assert rel(T.h_op(F), F.scaled(OMEGA + (geom.n + 1) / 2)) < 1e-15


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       st.integers(2, 6), st.data())
def test_order_zero_scalars(omega, n, data):
    k = data.draw(st.integers(1, n + 1))
    rep = T.order_zero_bookkeeping(omega, k, n)
    scale = 1 + abs(omega) ** 2
    assert abs(rep["top_corrected"]) <= 1e-12 * scale
    assert abs(rep["bottom"]) <= 1e-12 * scale
    # the printed top line is off by exactly 2(k-1)(n+1-k)
    assert abs(rep["top_printed"] - 2 * (k - 1) * (n + 1 - k)) <= 1e-12 * scale


def test_order_zero_printed_line_holds_at_extreme_degrees():
    for n in (3, 4):
        for k in (1, n + 1):
            assert abs(T.order_zero_bookkeeping(0.3 + 0.1j, k, n)["top_printed"]) < 1e-12


@pytest.mark.parametrize("n,k,omega,m2", [
    (4, 1, 0, 2),
    (4, 2, 0, 2),
    (4, 1, 1, 6),
    (3, 1, 0, 1),
    (4, 1, -2, 0),   # omega = 1 - n + k
    (4, 3, -3, 0),   # omega = -k
])
def test_proca_mass_table(n, k, omega, m2):
    assert T.proca_mass_squared(omega, k, n) == pytest.approx(m2)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_proca_reduction(k):
    geom = G.DeSitter(2)
    rng = np.random.default_rng(27)
    phi = WeightedFormField.random(rng, geom.n, k, 0)
    rep = T.proca_system_check(geom, phi, 0.35 + 0.1j, geom.sample_points(rng, 3))
    assert rep.gauge_slot_residual < 1e-9
    assert rep.proca_slot_residual < 1e-9
    assert rep.mass_squared == pytest.approx(T.proca_mass_squared(0.35 + 0.1j, k, geom.n))


def test_proca_excluded_weight():
    geom = G.DeSitter(2)
    phi = WeightedFormField.random(np.random.default_rng(28), 3, 1, 0)
    with pytest.raises(T.ExcludedWeightError):
        T.proca_system_check(geom, phi, -3.0, geom.sample_points(np.random.default_rng(0), 2))


def test_potential_recovery_and_preconditions():
    geom = G.DeSitter(2)
    rng = np.random.default_rng(29)
    ctx = geom.at(geom.sample_points(rng, 3), 3)
    F = T.D(field(rng, geom.n, 1, ctx.lc))
    A = T.potential_recover(F)
    DA = T.D(A)
    assert rel(DA, F.truncate(DA.order)) < 1e-10
    with pytest.raises(T.PreconditionError):
        T.potential_recover(field(rng, geom.n, 2, ctx.lc))
    with pytest.raises(T.ExcludedWeightError):
        T.potential_recover(T.D(field(rng, geom.n, 1, ctx.lc, omega=-1.0)))


def test_beth_operator_on_minkowski_cone():
    geom = G.MinkowskiCone(4)
    rng = np.random.default_rng(30)
    for m in (0.0, 0.8):
        rep = T.beth_minkowski(geom, jc.random_field(rng, 4), m, geom.sample_points(rng, 3))
        assert rep.residual < 1e-9
        assert rep.xi_squared_residual < 1e-9
        assert rep.divergence_residual < 1e-9


def test_proca_needs_de_sitter():
    geom = G.MinkowskiCone(4)
    phi = WeightedFormField.random(np.random.default_rng(31), 4, 1, 0)
    with pytest.raises(G.CapabilityError):
        T.proca_system_check(geom, phi, 0.3, geom.sample_points(np.random.default_rng(0), 2))
