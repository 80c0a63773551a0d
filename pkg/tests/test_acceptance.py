"""Acceptance sweeps.  Each test prints one PASS/FAIL line in the terminal summary."""
import math

import numpy as np
import pytest

from artifact import boundary_series as bs
from artifact import geometry as G
from artifact import jetcalc as jc
from artifact import tractor as T
from artifact.forms import WeightedFormField

POINTS = 50
WEIGHTS = 5


def _weights(rng, count=WEIGHTS):
    return [complex(rng.normal(0.3, 0.8), rng.normal(0, 0.6)) for _ in range(count)]


def _rel(diff, ref):
    return diff.max_abs() / (1 + ref.max_abs())


def _pairs(a, b):
    return [(x, y) for x, y in zip(a.slots(), b.slots()) if x is not None]


def _field(rng, geom, k, omega, sc):
    return T.TractorFormField.random(rng, geom.n, k, omega).evaluate(sc)


@pytest.mark.criterion(1, "D squared vanishes")
def test_dd_vanishes(report):
    rng = np.random.default_rng(101)
    worst = 0.0
    for d in (2, 3):
        geom = G.DeSitter(d)
        ctx = geom.at(geom.sample_points(rng, POINTS), 2)
        for om in _weights(rng):
            for k in range(geom.n + 2):
                if k >= geom.n:
                    # D raises degree; D(D F) would exceed the top degree n + 1
                    continue
                for sc in (ctx.lc, ctx.scale("S")):
                    F = _field(rng, geom, k, om, sc)
                    worst = max(worst, _rel(T.D(T.D(F)), F))
    report("max_residual", worst, 1e-9)
    assert worst <= 1e-9


@pytest.mark.criterion(2, "scale naturality of D, star, D*, Laplacian, I, I*")
def test_scale_naturality(report):
    rng = np.random.default_rng(202)
    ops = {"D": (T.D, 0, None), "star": (T.tractor_hodge, 0, 1), "Dstar": (T.Dstar, 1, 1),
           "laplacian": (T.tractor_laplacian, 0, 1), "I": (T.I_op, 0, 0), "Istar": (T.Istar_op, 1, 1)}
    worst = {name: 0.0 for name in ops}
    for d in (2, 3):
        geom = G.DeSitter(d)
        n = geom.n
        ctx = geom.at(geom.sample_points(rng, POINTS), 2)
        lc, S = ctx.lc, ctx.scale("S")
        for om in _weights(rng):
            for k in range(n + 2):
                F = _field(rng, geom, k, om, lc)
                FS = T.transport(F, S)
                for name, (op, lo, top) in ops.items():
                    hi = n + 1 if top == 1 else n
                    if lo <= k <= hi:
                        a, b = T.transport(op(F), S), op(FS)
                        worst[name] = max(worst[name], _rel(a - b, b))
    for name, v in worst.items():
        report(name, v)
    assert max(worst.values()) <= 1e-8


@pytest.mark.criterion(3, "Hodge defining property and double-star sign law")
def test_hodge(report):
    rng = np.random.default_rng(303)
    defining, magnitude, sign_mismatch = 0.0, 0.0, 0
    for d in (2, 3):
        geom = G.DeSitter(d)
        n = geom.n
        ctx = geom.at(geom.sample_points(rng, POINTS), 1)
        for om in _weights(rng):
            for k in range(n + 2):
                for sc in (ctx.lc, ctx.scale("S")):
                    F = _field(rng, geom, k, om, sc)
                    wedge = T.tractor_wedge(F, T.tractor_hodge(F)).mu.comps
                    top = wedge[(slice(None),) + tuple(range(n))]
                    ref = T.full_h(F, F) * T.volume_top(sc)
                    defining = max(defining, (top - ref).max_abs() / (1 + ref.max_abs()))
                    ss = T.tractor_hodge(T.tractor_hodge(F))
                    # the sign is read off the data, then compared with the law
                    num = sum(np.vdot(a.comps.coeffs, b.comps.coeffs) for a, b in _pairs(ss, F))
                    den = sum(np.vdot(a.comps.coeffs, a.comps.coeffs) for a, _ in _pairs(F, F))
                    observed = int(np.sign((num / den).real))
                    expected = sc.s * sc.eps * (-1) ** (k * (n + 1 - k))
                    sign_mismatch += observed != expected
                    magnitude = max(magnitude, _rel(ss - F.scaled(observed), F))
    report("defining", defining, 1e-9)
    report("double_star", magnitude, 1e-10)
    report("sign_mismatches", sign_mismatch)
    assert defining <= 1e-9 and magnitude <= 1e-10 and sign_mismatch == 0


@pytest.mark.criterion(4, "sl2 relations and anticommutators")
def test_sl2(report):
    rng = np.random.default_rng(404)
    worst: dict[str, float] = {}
    for d in (2, 3):
        geom = G.DeSitter(d)
        for om in _weights(rng, 2):
            for k in range(geom.n + 2):
                for scale in ("LC", "S"):
                    rep = T.sl2_relations(geom, om, k, trials=1, points=POINTS // 5, scale=scale,
                                          seed=int(rng.integers(1 << 30)))
                    for key, v in rep.items():
                        worst[key] = max(worst.get(key, 0.0), v)
        ctx = geom.at(geom.sample_points(rng, POINTS), 1)
        for sc in (ctx.lc, ctx.scale("S")):
            for k in range(geom.n + 1):
                F = _field(rng, geom, k, _weights(rng, 1)[0], sc)
                a = T.Istar_op(T.I_op(F))
                if k >= 1:
                    a = a + T.I_op(T.Istar_op(F))
                b = F.scaled(-sc.f * sc.sigma).with_weight(a.omega)
                worst["I_Istar"] = max(worst.get("I_Istar", 0.0), _rel(a - b.truncate(a.order), F))
    for key, v in worst.items():
        report(key, v)
    assert max(worst.values()) <= 1e-8


@pytest.mark.criterion(5, "Weitzenbock identity and order-zero scalar bookkeeping")
def test_weitzenbock(report):
    rng = np.random.default_rng(505)
    operator = 0.0
    for d in (2, 3):
        geom = G.DeSitter(d)
        ctx = geom.at(geom.sample_points(rng, POINTS // 2), 2)
        for om in _weights(rng, 2):
            for k in range(geom.n + 2):
                for sc in (ctx.lc, ctx.scale("S")):
                    F = _field(rng, geom, k, om, sc)
                    operator = max(operator, _rel(T.anticommutator_DDstar(F) + T.tractor_laplacian(F), F))
    top, bottom = 0.0, 0.0
    n = 4
    for _ in range(100):
        om = complex(rng.normal(0, 2), rng.normal(0, 2))
        k = int(rng.integers(1, n + 2))
        rep = T.order_zero_bookkeeping(om, k, n)
        top, bottom = max(top, abs(rep["top_printed"])), max(bottom, abs(rep["bottom"]))
    report("slotwise", operator, 1e-8)
    report("scalar_top", top, 1e-12)
    report("scalar_bottom", bottom, 1e-12)
    assert operator <= 1e-8
    assert bottom <= 1e-12
    assert top <= 1e-12


@pytest.mark.criterion(6, "commutator of x with the tractor Laplacian")
def test_commutator(report):
    rng = np.random.default_rng(606)
    lemma, literal_lc = 0.0, 0.0
    for d in (2, 3):
        geom = G.DeSitter(d)
        ctx = geom.at(geom.sample_points(rng, POINTS // 2), 2)
        for om in _weights(rng, 2):
            for k in range(geom.n + 2):
                for sc in (ctx.lc, ctx.scale("S")):
                    F = _field(rng, geom, k, om, sc)
                    c = T.commutator_x_laplacian(F)
                    lemma = max(lemma, _rel(c - T.commutator_x_laplacian_closed(F), F))
                    if sc.name == "LC":
                        lit = T.x_mult(F).scaled(sc.f * (-(2 * om + d + sc.alpha) / sc.alpha))
                        literal_lc = max(literal_lc, max((a.comps - b.comps).max_abs()
                                                         for a, b in _pairs(c, lit)) / (1 + F.max_abs()))
    flat = 0.0
    for n in (3, 4):
        geom = G.MinkowskiCone(n)
        ctx = geom.at(geom.sample_points(rng, POINTS // 2), 2)
        for om in _weights(rng, 2):
            for k in range(n + 2):
                for sc in (ctx.lc, ctx.scale("S")):
                    F = _field(rng, geom, k, om, sc)
                    flat = max(flat, _rel(T.commutator_x_laplacian(F), F))
    report("de_sitter", lemma, 1e-8)
    report("de_sitter_times_x_LC", literal_lc, 1e-8)
    report("minkowski", flat, 1e-10)
    assert lemma <= 1e-8 and literal_lc <= 1e-8 and flat <= 1e-10


@pytest.mark.criterion(7, "closed-form box rho, gradient norm and connection forms")
def test_closed_forms(report):
    rng = np.random.default_rng(707)
    scalar, forms = 0.0, 0.0
    for geom in (G.DeSitter(2), G.DeSitter(3), G.MinkowskiCone(3), G.MinkowskiCone(4)):
        pts = geom.sample_points(rng, POINTS)
        rho = pts[:, 0]
        if isinstance(geom, G.DeSitter):
            d = geom.d
            scalar = max(scalar, np.abs(G.box_rho(geom, pts).value - 2 * rho * (d - 2 + 2 * rho * (3 - d))).max())
        else:
            n = geom.n
            scalar = max(scalar, np.abs(G.box_rho(geom, pts).value + (n - 3) * rho ** 3).max(),
                         np.abs(G.grad_rho_squared(geom, pts).value - rho ** 4).max())
        for hatted in (False, True):
            diff = G.connection_forms(geom, pts, "S" if hatted else "LC") - G.appendix_connection_forms(geom, pts, hatted)
            forms = max(forms, np.abs(diff).max())
    report("scalars", float(scalar), 1e-11)
    report("connection_forms", float(forms), 1e-12)
    assert scalar <= 1e-11 and forms <= 1e-12


def _non_resonant(rng):
    while True:
        d = int(rng.integers(2, 5))
        m = float(rng.uniform(0.3, 0.95 * d / 2))
        l = int(rng.integers(0, 3))
        omega = bs.mass_to_weights(d, m)[0]
        gap = (bs.h0_of(omega, d) - 1).real
        if abs(gap - round(gap)) > 0.05:
            return d, m, l, omega


@pytest.mark.criterion(8, "Frobenius residual order, fitted exponents, complex branch")
def test_frobenius_and_asymptotics(report):
    rng = np.random.default_rng(808)
    slope_err, exp_err = 0.0, 0.0
    for _ in range(5):
        d, m, l, omega = _non_resonant(rng)
        lam = l * (l + d - 1)
        for nu in bs.indicial_roots(bs.h0_of(omega, d)):
            series = bs.frobenius_desitter(d, omega, lam, nu, 8)
            slope_err = max(slope_err, abs(bs.residual_slope(series) - (complex(nu).real + 8)))
        fit = bs.integrate_and_fit(d, m, lam)
        expected = sorted(bs.asymptotic_exponents(d, m), key=lambda z: z.real)
        for got, want in zip(fit.exponents, expected):
            exp_err = max(exp_err, abs(got - want) / abs(want))
    complex_err = 0.0
    for _ in range(2):
        d = int(rng.integers(2, 5))
        m = float(rng.uniform(0.6 * d, 1.2 * d))
        rep = bs.complex_branch_check(d, m, float(rng.integers(0, 3)))
        complex_err = max(complex_err, rep.max_relative_error)
    report("slope", slope_err, 0.1)
    report("exponents_rel", exp_err, 1e-2)
    report("complex_branch", complex_err, 1e-6)
    assert slope_err <= 0.1 and exp_err <= 1e-2 and complex_err <= 1e-6


@pytest.mark.criterion(9, "formal solution operator")
def test_formal_solution(report):
    rng = np.random.default_rng(909)
    termwise = 0.0
    for _ in range(20):
        h0 = complex(rng.uniform(-3, 6), rng.normal(0, 1))
        for nu in (0, 1 - h0):
            s = bs.formal_operator_coeffs(h0, 8, nu)
            c = s.coeffs
            for k in range(1, 9):
                termwise = max(termwise, abs(k * (k - h0 + 1) * c[k] + c[k - 1]) / abs(c[k - 1]))
    geom = G.DeSitter(3)
    cross, decay = 0.0, 0.0
    for omega in (0.3, 0.3 + 0.2j):
        h0 = bs.h0_of(omega, 3)
        for nu in (0, 1 - h0):
            pts = geom.sample_points(rng, 4)
            cross = max(cross, bs.formal_solution_crosscheck(geom, omega, 1, [1, 0.4, -0.2], nu, 2, pts))
            rep = bs.formal_solution_residual(geom, omega, 1, [1, 0.4, -0.2], nu, 6)
            decay = max(decay, abs(rep.decay_exponent - (complex(nu).real + 6)))
    report("termwise", termwise, 1e-14)
    report("operational_vs_reduced", cross, 1e-7)
    report("decay", decay, 0.15)
    assert termwise <= 1e-14 and cross <= 1e-7 and decay <= 0.15


@pytest.mark.criterion(10, "Proca system and potential recovery")
def test_proca(report):
    rng = np.random.default_rng(1010)
    gauge, proca, potential = 0.0, 0.0, 0.0
    for d in (2, 3):
        geom = G.DeSitter(d)
        n = geom.n
        for om in _weights(rng, 3):
            for k in range(1, n + 1):
                phi = WeightedFormField.random(rng, n, k, 0)
                rep = T.proca_system_check(geom, phi, om, geom.sample_points(rng, 10))
                gauge, proca = max(gauge, rep.gauge_slot_residual), max(proca, rep.proca_slot_residual)
                ctx = geom.at(geom.sample_points(rng, 10), 3)
                F = T.D(_field(rng, geom, k - 1, om, ctx.lc))
                A = T.potential_recover(F)
                DA = T.D(A)
                potential = max(potential, _rel(DA - F.truncate(DA.order), F))
    report("gauge_slot", gauge, 1e-7)
    report("proca_slot", proca, 1e-7)
    report("potential", potential, 1e-7)
    assert gauge <= 1e-7 and proca <= 1e-7 and potential <= 1e-7


@pytest.mark.criterion(11, "zeroth-order coefficient audit")
def test_coefficient_audit(report):
    winners, kappas, gap = set(), [], math.inf
    for d in (2, 3):
        geom = G.DeSitter(d)
        for omega in (0.7, -1.3, 0.4 + 0.3j):
            for l in (0, 1):
                a = bs.coefficient_audit(geom, omega, l=l)
                winners.add(a.winner)
                kappas.append(a.scale_factors[a.winner])
                loser = min(v for key, v in a.residuals.items() if key != a.winner)
                gap = min(gap, loser / max(a.residuals[a.winner], 1e-300))
                assert a.residuals[a.winner] <= 1e-9
    # the surviving constant feeds the Frobenius recurrence used by criterion 8
    d, omega = 3, bs.mass_to_weights(3, 1.2)[0]
    slope = bs.residual_slope(bs.frobenius_desitter(d, omega, 3, 0, 8))
    report("winner", "/".join(sorted(winners)))
    report("kappa_spread", float(max(abs(k - 2) for k in kappas)))
    report("residual_ratio", float(gap))
    assert winners == {"radial"}
    assert all(abs(k - 2) <= 1e-8 for k in kappas)
    assert gap >= 1e6
    assert abs(slope - 8) <= 0.1
