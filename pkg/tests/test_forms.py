import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import forms as F
from artifact import geometry as G
from artifact import jetcalc as jc
from artifact.forms import WeightedFormField


def _euclid(order=2):
    geom = G.flat_metric(3)
    return geom.at(np.array([[0.1, 0.2, 0.3], [-0.4, 0.5, 0.0]]), order).lc


def _const_form(sc, k, idx, order=2):
    return WeightedFormField(sc.n, k, 0, {idx: jc.Const(1.0)}).evaluate(sc, order)


def _geometries():
    rng = np.random.default_rng(11)
    out = []
    for geom in (G.DeSitter(3), G.perturbed_metric(rng, 4), G.MinkowskiCone(4)):
        ctx = geom.at(geom.sample_points(rng, 3), 3)
        scales = ("LC", "S") if isinstance(geom, (G.DeSitter, G.MinkowskiCone)) else ("LC",)
        out += [ctx.scale(s) for s in scales]
    return out


SCALES = _geometries()
SCALE_IDS = [f"{sc.ctx.geom.name}-{sc.name}" for sc in SCALES]


def test_euclidean_star_of_coordinate_forms():
    sc = _euclid()
    dx, dy, dz = (_const_form(sc, 1, (i,)) for i in range(3))
    star_dx = F.hodge_star_base(dx)
    assert star_dx.k == 2
    assert np.allclose(star_dx.comps.value[:, 1, 2], 1)
    assert np.allclose(star_dx.comps.value[:, 2, 1], -1)
    assert np.allclose(star_dx.comps.value[:, 0, 1], 0)
    vol = F.wedge(F.wedge(dx, dy), dz)
    assert np.allclose(vol.comps.value[:, 0, 1, 2], 1)
    assert np.allclose(F.hodge_star_base(vol).comps.value, 1)


def test_euclidean_wedge_and_contract():
    sc = _euclid()
    dx, dy = _const_form(sc, 1, (0,)), _const_form(sc, 1, (1,))
    w = F.wedge(dx, dy)
    assert np.allclose(w.comps.value[:, 0, 1], 1)
    assert np.allclose(w.comps.value[:, 1, 0], -1)
    e0 = jc.Jet.constant(np.tile([1.0, 0, 0], (2, 1)), 3, 2)
    c = F.contract(e0, w)
    assert np.allclose(c.comps.value, [[0, 1, 0]] * 2)
    assert np.allclose(F.inner(w, w).value, 1)


def test_exterior_derivative_of_coordinate_product():
    # d(x dy) = dx ^ dy in the flat chart
    sc = _euclid()
    a = WeightedFormField(3, 1, 0, {(1,): jc.Coord(0)}).evaluate(sc, 2)
    da = F.cov_ext_d(a)
    assert np.allclose(da.comps.value[:, 0, 1], 1)
    assert np.allclose(da.comps.value[:, 0, 2], 0)


@pytest.mark.parametrize("sc", SCALES, ids=SCALE_IDS)
def test_d_squared_and_delta_squared_vanish(sc):
    rng = np.random.default_rng(12)
    n = sc.n
    for k in range(n - 1):
        a = WeightedFormField.random(rng, n, k, 0).evaluate(sc, 3)
        assert F.cov_ext_d(F.cov_ext_d(a)).max_abs() < 1e-10 * (1 + a.max_abs())
    for k in range(2, n + 1):
        a = WeightedFormField.random(rng, n, k, 0.4).evaluate(sc, 3)
        dd = F.codifferential_base(F.codifferential_base(a))
        assert dd.max_abs() < 1e-10 * (1 + a.max_abs())


@pytest.mark.parametrize("sc", SCALES, ids=SCALE_IDS)
def test_star_defining_property_and_sign(sc):
    rng = np.random.default_rng(13)
    n = sc.n
    for k in range(n + 1):
        a = WeightedFormField.random(rng, n, k, 0.3).evaluate(sc, 1)
        b = WeightedFormField.random(rng, n, k, 0.3).evaluate(sc, 1)
        top = F.wedge(a, F.hodge_star_base(b)).comps[(slice(None),) + tuple(range(n))]
        ref = F.inner(a, b) * sc.volume.truncate(1)
        assert (top - ref).max_abs() < 1e-10 * (1 + ref.max_abs())
        ss = F.hodge_star_base(F.hodge_star_base(a))
        sign = sc.s * (-1) ** (k * (n - k))
        assert (ss.comps - a.comps * sign).max_abs() < 1e-10 * (1 + a.max_abs())


def test_codifferential_matches_divergence_in_levi_civita_scale():
    rng = np.random.default_rng(14)
    for sc in SCALES:
        if sc.name != "LC":
            continue
        for k in range(1, sc.n + 1):
            a = WeightedFormField.random(rng, sc.n, k, 0).evaluate(sc, 2)
            diff = F.codifferential_base(a).comps - F.divergence_codifferential(a).comps
            assert diff.max_abs() < 1e-10 * (1 + a.max_abs())


@pytest.mark.parametrize("sc", SCALES, ids=SCALE_IDS)
def test_base_weitzenbock(sc):
    rng = np.random.default_rng(15)
    for k in range(sc.n + 1):
        a = WeightedFormField.random(rng, sc.n, k, 0).evaluate(sc, 3)
        assert F.base_weitzenbock_residual(a).max_abs() < 1e-9 * (1 + a.max_abs())


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 1000))
def test_leibniz_rule(k, l, seed):
    sc = SCALES[2]  # perturbed metric
    n = sc.n
    if k + l + 1 > n:
        return
    rng = np.random.default_rng(seed)
    a = WeightedFormField.random(rng, n, k, 0).evaluate(sc, 3)
    b = WeightedFormField.random(rng, n, l, 0).evaluate(sc, 3)
    lhs = F.cov_ext_d(F.wedge(a, b))
    rhs = F.wedge(F.cov_ext_d(a), b.truncate(2)) + F.wedge(a.truncate(2), F.cov_ext_d(b)).scaled((-1) ** k)
    assert (lhs - rhs).max_abs() < 1e-10 * (1 + lhs.max_abs())


def test_cartan_formula():
    rng = np.random.default_rng(16)
    sc = SCALES[2]
    n = sc.n
    X = F.WeightedVector(jc.stack([sc.ctx.evaluate(jc.random_field(rng, n), 3) for _ in range(n)], axis=1),
                         0, sc)
    for k in range(1, n):
        a = WeightedFormField.random(rng, n, k, 0).evaluate(sc, 3)
        lie = F.lie_derivative_weighted(X, a)
        cartan = F.contract(X.comps.truncate(2), F.cov_ext_d(a)) + F.cov_ext_d(F.contract(X.comps, a))
        assert (lie.truncate(2) - cartan).max_abs() < 1e-10 * (1 + lie.max_abs())


def test_weight_zero_d_is_scale_independent():
    rng = np.random.default_rng(17)
    geom = G.DeSitter(2)
    ctx = geom.at(geom.sample_points(rng, 4), 2)
    a = WeightedFormField.random(rng, geom.n, 1, 0)
    d_lc = F.cov_ext_d(a.evaluate(ctx.lc))
    d_s = F.cov_ext_d(a.evaluate(ctx.scale("S")))
    assert (d_lc.comps - d_s.comps).max_abs() < 1e-10 * (1 + d_lc.max_abs())


def test_form_errors():
    sc = _euclid()
    with pytest.raises(F.FormError):
        WeightedFormField(3, 2, 0, {(1, 0): jc.Const(1.0)})
    with pytest.raises(F.FormError):
        WeightedFormField(3, 4, 0, {})
    a = _const_form(sc, 2, (0, 1))
    with pytest.raises(F.FormError):
        F.wedge(a, a)
    with pytest.raises(F.FormError):
        F.cov_ext_d(_const_form(sc, 3, (0, 1, 2)))
    with pytest.raises(F.FormError):
        a + _const_form(sc, 1, (0,))


def test_components_are_antisymmetric():
    sc = _euclid()
    rng = np.random.default_rng(18)
    a = WeightedFormField.random(rng, 3, 2, 0).evaluate(sc)
    for i, j in itertools.permutations(range(3), 2):
        assert np.allclose(a.comps.coeffs[:, i, j], -a.comps.coeffs[:, j, i])
