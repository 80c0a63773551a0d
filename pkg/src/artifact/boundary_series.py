"""
Boundary expansions for the de Sitter Klein-Gordon problem.

Radial reduction: for ``tau = phi(rho) Y_l`` with ``phi`` the component in
the scale ``s = sigma / rho`` and ``Y_l`` a spherical harmonic
(``Lap_S Y_l = -lambda Y_l``, ``lambda = l (l + d - 1)``), the tractor
Laplacian acts as ``2 L phi Y_l`` with

    L phi = -2 rho (1 - 2 rho) phi'' + (1 + (1 - 2 rho)(d - 3 + 2 omega)) phi'
            + (c0 - lambda) phi,        c0 = omega (omega + d - 1).

Frobenius series, the sl2 formal solution operator and the numerical
asymptotics all live here.  High-precision checks use mpmath because the
quantities compared are far below double-precision round-off.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import mpmath as mp
import numpy as np
from scipy.integrate import solve_ivp

from . import jetcalc as jc
from .geometry import DeSitter

ODE_VARIANTS = ("radial", "recurrence")
MP_DPS = 60


class ResonanceError(ValueError):
    def __init__(self, k: int, message: str | None = None):
        super().__init__(message or f"resonant Frobenius step at k={k}")
        self.k = k


class IntegrationError(RuntimeError):
    pass


class FitError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# weights and indicial data

def mass_to_weights(d: int, m: complex) -> tuple[complex, complex]:
    """Both roots of ``omega (omega + d) = -m^2``; ``(-d + xi)/2`` first."""
    xi = cmath.sqrt(d * d - 4 * m * m)
    return (-d + xi) / 2, (-d - xi) / 2


def h0_of(omega: complex, d: int) -> complex:
    return omega + (d + 2) / 2


def indicial_roots(h0: complex) -> tuple[complex, complex]:
    return 0, h0 - 1


def zeroth_order_constant(omega: complex, d: int, variant: str = "radial") -> complex:
    """``omega (omega + d - 1)`` or the recurrence's ``omega (omega + n - 1)`` with ``n = d + 1``."""
    if variant == "radial":
        return omega * (omega + d - 1)
    if variant == "recurrence":
        return omega * (omega + d)
    raise ValueError(f"unknown variant {variant!r}")


def asymptotic_exponents(d: int, m: complex) -> tuple[complex, complex]:
    xi = cmath.sqrt(d * d - 4 * m * m)
    return (d - xi) / 4, (d + xi) / 4


# ---------------------------------------------------------------------------
# Frobenius series

@dataclass
class FrobeniusSeries:
    nu: complex
    h0: complex
    omega: complex
    lam: float
    d: int
    coeffs: list
    source: str  # "DeSitterODE" or "FormalOperator"
    recurrence: str = "derived"
    exact: list | None = field(default=None, repr=False)  # mpmath coefficients

    @property
    def N(self) -> int:
        return len(self.coeffs) - 1

    def exact_nu(self):
        """The indicial root recomputed at working precision."""
        if _near_zero(self.nu):
            return mp.mpc(0)
        if self.source == "FormalOperator":
            return mp.mpc(self.nu)
        return mp.mpc(self.omega) + mp.mpf(self.d) / 2

    def evaluate(self, rho, derivative: int = 0):
        """Series value (or derivative) in double precision."""
        rho = np.asarray(rho, dtype=complex)
        out = np.zeros_like(rho)
        for k, a in enumerate(self.coeffs):
            p = self.nu + k
            fac = 1
            for j in range(derivative):
                fac *= p - j
            out = out + a * fac * rho ** (p - derivative)
        return out

    def record(self) -> dict:
        return {"nu": _cplx(self.nu), "h0": _cplx(self.h0), "omega": _cplx(self.omega),
                "lambda": self.lam, "d": self.d, "source": self.source,
                "recurrence": self.recurrence, "coeffs": [_cplx(c) for c in self.coeffs]}

    def csv_rows(self):
        return [(k, complex(a).real, complex(a).imag) for k, a in enumerate(self.coeffs)]


def _cplx(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _near_zero(z, tol=1e-12) -> bool:
    return abs(z) < tol


def frobenius_desitter(d: int, omega: complex, lam: float, nu: complex, N: int,
                       recurrence: str = "derived") -> FrobeniusSeries:
    """Frobenius coefficients of the radial equation, ``alpha_0 = 1``.

    ``recurrence="derived"`` solves
    ``2(nu+k)(h0-k-1-nu) alpha_k = -c_k alpha_(k-1)`` with
    ``c_k = 2(nu+k-1)(2nu+2k+1-2h0) + omega(omega+d-1) - lambda``, which is
    what substituting the series into ``L`` gives.  ``recurrence="printed"``
    uses ``+c_k`` with ``2nu+k+1-2h0`` and ``omega(omega+n-1)``, ``n = d+1``.
    """
    h0 = h0_of(omega, d)
    if not (_near_zero(nu) or _near_zero(nu - (h0 - 1))):
        raise ValueError(f"nu={nu} is not an indicial root (0 or h0-1={h0 - 1})")
    if recurrence not in ("derived", "printed"):
        raise ValueError(f"unknown recurrence {recurrence!r}")
    with mp.workdps(MP_DPS):
        w, L = mp.mpc(omega), mp.mpf(lam)
        hh = w + mp.mpf(d + 2) / 2
        v = mp.mpc(0) if _near_zero(nu) else hh - 1
        exact = [mp.mpc(1)]
        for k in range(1, N + 1):
            lead = 2 * (v + k) * (hh - k - 1 - v)
            if _near_zero(complex(lead)):
                raise ResonanceError(k)
            if recurrence == "derived":
                ck = 2 * (v + k - 1) * (2 * v + 2 * k + 1 - 2 * hh) + w * (w + d - 1) - L
                exact.append(-ck * exact[-1] / lead)
            else:
                n = d + 1
                ck = 2 * (v + k - 1) * (2 * v + k + 1 - 2 * hh) + w * (w + n - 1) - L
                exact.append(ck * exact[-1] / lead)
        coeffs = [complex(a) for a in exact]
    return FrobeniusSeries(nu, h0, omega, lam, d, coeffs, "DeSitterODE", recurrence, exact)


def radial_operator_mp(phi, dphi, ddphi, rho, d, omega, lam, variant="radial"):
    A = d - 3 + 2 * omega
    c0 = zeroth_order_constant(omega, d, variant)
    return (-2 * rho * (1 - 2 * rho) * ddphi + (1 + (1 - 2 * rho) * A) * dphi + (c0 - lam) * phi)


def series_ode_residual(series: FrobeniusSeries, rho: float, variant: str = "radial", dps: int = MP_DPS) -> float:
    """``|L phi_N|`` at ``rho`` with the truncated series substituted pointwise."""
    with mp.workdps(dps):
        r = mp.mpf(rho)
        nu = series.exact_nu()
        phi = dphi = ddphi = mp.mpc(0)
        for k, a in enumerate(series.exact or series.coeffs):
            a = mp.mpc(a)
            p = nu + k
            phi += a * r ** p
            dphi += a * p * r ** (p - 1)
            ddphi += a * p * (p - 1) * r ** (p - 2)
        res = radial_operator_mp(phi, dphi, ddphi, r, series.d, mp.mpc(series.omega), series.lam, variant)
        return float(abs(res))


def residual_slope(series: FrobeniusSeries, rhos: tuple[float, float] = (1e-3, 1e-4),
                   variant: str = "radial") -> float:
    """``log(r1/r2) / log(rho1/rho2)``: the power of rho at which the residual decays."""
    r1, r2 = (series_ode_residual(series, p, variant) for p in rhos)
    return math.log(r1 / r2) / math.log(rhos[0] / rhos[1])


def formal_operator_coeffs(h0: complex, N: int, nu: complex = 0) -> FrobeniusSeries:
    """``k (k - h0 + 1) alpha_k + alpha_(k-1) = 0``, ``alpha_0 = 1``.

    ``h0`` is the eigenvalue of ``h`` on the data ``f0``.  Both admissible
    ``nu`` (``0`` and ``1 - h0``) give the same coefficients; measured from
    the weight of ``A f0`` the second root reads ``h - 1``.
    """
    if not (_near_zero(nu) or _near_zero(nu + h0 - 1)):
        raise ValueError("nu must solve nu (h0 + nu - 1) = 0")
    with mp.workdps(MP_DPS):
        hh = mp.mpc(h0)
        exact = [mp.mpc(1)]
        for k in range(1, N + 1):
            lead = k * (k - hh + 1)
            if _near_zero(complex(lead)):
                raise ResonanceError(k)
            exact.append(-exact[-1] / lead)
    return FrobeniusSeries(nu, h0, h0 - 1, 0.0, 0, [complex(a) for a in exact], "FormalOperator", "formal", exact)


# ---------------------------------------------------------------------------
# exact radial calculus on rho^a * (Laurent polynomial)

class RhoSeries:
    """``sum_j c_j rho^(a + j)`` with mpmath coefficients."""

    def __init__(self, a, coeffs: dict[int, object]):
        self.a = mp.mpc(a)
        self.c = {j: mp.mpc(v) for j, v in coeffs.items() if v != 0}

    @classmethod
    def polynomial(cls, coeffs: Sequence, a=0) -> "RhoSeries":
        return cls(a, dict(enumerate(coeffs)))

    def __add__(self, other: "RhoSeries") -> "RhoSeries":
        shift = other.a - self.a
        j = int(mp.nint(mp.re(shift)))
        if abs(shift - j) > mp.mpf(10) ** (-mp.mp.dps // 2):
            raise ValueError("incompatible exponents")
        out = dict(self.c)
        for k, v in other.c.items():
            out[k + j] = out.get(k + j, 0) + v
        return RhoSeries(self.a, out)

    def scaled(self, s) -> "RhoSeries":
        return RhoSeries(self.a, {j: v * s for j, v in self.c.items()})

    def times_rho(self, p) -> "RhoSeries":
        return RhoSeries(self.a + p, self.c)

    def apply_L(self, d: int, omega, lam, variant: str = "radial") -> "RhoSeries":
        """Exact image under the radial operator, term by term."""
        A = d - 3 + 2 * mp.mpc(omega)
        c0 = zeroth_order_constant(mp.mpc(omega), d, variant)
        out: dict[int, object] = {}
        for j, v in self.c.items():
            b = self.a + j
            low = -2 * b * (b - 1) + (1 + A) * b
            same = 4 * b * (b - 1) - 2 * A * b + c0 - lam
            out[j - 1] = out.get(j - 1, 0) + v * low
            out[j] = out.get(j, 0) + v * same
        return RhoSeries(self.a, out)

    def evaluate(self, rho):
        r = mp.mpf(rho)
        return sum((v * r ** (self.a + j) for j, v in self.c.items()), mp.mpc(0))


def reduced_y(phi: RhoSeries, d: int, omega, lam) -> RhoSeries:
    """``y = -Lap/f`` on the radial component: ``-L/2`` (``f = 4`` on de Sitter)."""
    return phi.apply_L(d, omega, lam).scaled(mp.mpf(-0.5))


@dataclass
class FormalSolutionReport:
    nu: complex
    N: int
    probes: tuple
    residuals: tuple
    decay_exponent: float
    expected: float
    crosscheck: float | None = None


def formal_solution_reduced(d: int, omega: complex, l: int, f0_poly: Sequence, nu: complex, N: int,
                            probes=(1e-3, 1e-4), dps: int = 80):
    """``A f0 = x^nu sum_k alpha_k x^k y^k f0`` and ``y(A f0)`` on the radial reduction.

    ``f0 = f0_poly(rho) Y_l`` in ``s`` components.  Returns the two series and
    a decay report built from ``|y(A f0)|`` at the probe radii.
    """
    lam = l * (l + d - 1)
    with mp.workdps(dps):
        w = mp.mpc(omega)
        h0 = w + mp.mpf(d + 2) / 2
        if not (_near_zero(nu) or _near_zero(nu - complex(1 - h0), 1e-9)):
            raise ValueError("nu must be 0 or 1 - h0 for the data weight")
        nu_x = mp.mpc(0) if _near_zero(nu) else 1 - h0
        alpha = formal_operator_coeffs(h0, N, nu_x).exact
        base = RhoSeries.polynomial([mp.mpc(c) for c in f0_poly])
        total = None
        yk = base
        for k in range(N + 1):
            if k:
                yk = reduced_y(yk, d, w - 2 * (k - 1), lam)
            term = yk.times_rho(k).scaled(mp.mpc(alpha[k]))
            total = term if total is None else total + term
        A = total.times_rho(nu_x)
        out_weight = w + 2 * nu_x
        yA = reduced_y(A, d, out_weight, lam)
        res = tuple(float(abs(yA.evaluate(p))) for p in probes)
        slope = math.log(res[0] / res[1]) / math.log(probes[0] / probes[1])
    report = FormalSolutionReport(nu, N, tuple(probes), res, slope, float(np.real(nu)) + N)
    return A, yA, report


# ---------------------------------------------------------------------------
# operational checks through the tractor module

def _density(sc, omega, comps):
    from .tractor import make_tractor
    return make_tractor(sc, 0, omega, None, comps)


def _x_power(F, nu):
    """Multiplication by ``sigma^nu`` (weight ``alpha nu``)."""
    sc = F.scale
    fac = jc.power(sc.sigma, nu)
    return _density(sc, F.omega + sc.alpha * nu, fac * F.xi.comps)


def x_nu_commutator_check(geom: DeSitter, nu: complex, omega: complex, trials: int = 3,
                          points: int = 4, seed: int = 0, scale: str = "S") -> float:
    """``max |[x^nu, y] F - nu (h + nu - 1) x^(nu-1) F| / (1 + |F|)`` for random densities."""
    from .tractor import TractorFormField, y_density
    rng = np.random.default_rng(seed)
    ctx = geom.at(geom.sample_points(rng, points), 2)
    sc = ctx.scale(scale)
    h = omega + (geom.d + 2) / 2
    worst = 0.0
    for _ in range(trials):
        F = TractorFormField.random(rng, geom.n, 0, omega).evaluate(sc)
        lhs = _x_power(y_density(F), nu) - y_density(_x_power(F, nu)).with_weight(F.omega + 2 * nu - 2)
        rhs = _x_power(F, nu - 1).scaled(nu * (h + nu - 1)).with_weight(lhs.omega)
        worst = max(worst, (lhs - rhs.truncate(lhs.order)).max_abs() / (1 + F.max_abs()))
    return worst


def _harmonic(l: int):
    if l == 0:
        return jc.Const(1.0)
    if l == 1:
        return jc.Cos(jc.Coord(1))
    raise ValueError("only l in {0, 1} is supported on the field path")


def _poly_spec(coeffs: Sequence) -> jc.JetFieldSpec:
    rho = jc.Coord(0)
    terms = [jc.Scale(complex(c), jc.Pow(rho, j)) if j else jc.Const(complex(c))
             for j, c in enumerate(coeffs)]
    return jc.Sum(terms)


def formal_solution_operational(geom: DeSitter, omega: complex, l: int, f0_poly: Sequence, nu: complex,
                                N: int, points) -> tuple[np.ndarray, np.ndarray]:
    """Values of ``A f0`` and ``y(A f0)`` in ``s`` components via the tractor Laplacian.

    Each application of ``y`` costs two jet orders, so ``N <= 2``.
    """
    from .tractor import y_density
    if N > 2:
        raise ValueError("the jet budget allows N <= 2 on the field path")
    h0 = h0_of(omega, geom.d)
    alpha = formal_operator_coeffs(h0, N, nu).coeffs
    order = 2 * (N + 1)
    ctx = geom.at(np.asarray(points, dtype=float), order)
    sc = ctx.scale("S")
    spec = jc.Product([_poly_spec(f0_poly), _harmonic(l)])
    F = _density(sc, omega, ctx.evaluate(spec, order))
    total = None
    yk = F
    for k in range(N + 1):
        if k:
            yk = y_density(yk)
        term = _x_power(yk, k).scaled(alpha[k])
        if total is None:
            total = term
        else:
            o = min(total.order, term.order)
            total = total.truncate(o) + term.truncate(o)
    A = _x_power(total, nu)
    yA = y_density(A)
    return A.xi.comps.value, yA.xi.comps.value


def formal_solution_crosscheck(geom: DeSitter, omega: complex, l: int, f0_poly: Sequence, nu: complex,
                               N: int, points) -> float:
    """Relative gap between the field path and the radial path for ``y(A f0)``."""
    points = np.asarray(points, dtype=float)
    _, y_field = formal_solution_operational(geom, omega, l, f0_poly, nu, N, points)
    _, yA, _ = formal_solution_reduced(geom.d, omega, l, f0_poly, nu, N)
    harm = np.ones(len(points)) if l == 0 else np.cos(points[:, 1])
    with mp.workdps(30):
        y_radial = np.array([complex(yA.evaluate(p)) for p in points[:, 0]]) * harm
    return float(np.max(np.abs(y_field - y_radial)) / (1 + np.max(np.abs(y_radial))))


def formal_solution_residual(geom: DeSitter, omega: complex, l: int, f0_poly: Sequence, nu: complex, N: int,
                             probes=(1e-3, 1e-4), crosscheck_points: int = 4, seed: int = 0) -> FormalSolutionReport:
    """Decay of ``y(A f0)`` toward the boundary.

    The decay exponent comes from the radial reduction (any ``N``).  For
    ``N <= 2`` the field path is also run at interior points and must agree.
    """
    if N > 12:
        raise ValueError("N <= 12 on the radial path")
    _, _, report = formal_solution_reduced(geom.d, omega, l, f0_poly, nu, N, probes)
    if N <= 2:
        pts = geom.sample_points(np.random.default_rng(seed), crosscheck_points)
        report.crosscheck = formal_solution_crosscheck(geom, omega, l, f0_poly, nu, N, pts)
    return report


@dataclass
class AuditReport:
    residuals: dict
    scale_factors: dict
    winner: str


def coefficient_audit(geom: DeSitter, omega: complex, l: int = 1,
                      phi_poly: Sequence = (1.0, 0.5, -0.3, 0.2), points: int = 6, seed: int = 0) -> AuditReport:
    """Adjudicate the zeroth-order constant of the radial equation.

    The tractor Laplacian is applied to ``tau = phi(rho) Y_l`` (``s``
    components) and compared with ``kappa L phi Y_l`` for each printed
    constant, ``kappa`` fitted by least squares.  Exactly one variant should
    leave a round-off residual.
    """
    from .tractor import tractor_laplacian
    rng = np.random.default_rng(seed)
    pts = geom.sample_points(rng, points)
    ctx = geom.at(pts, 2)
    sc = ctx.scale("S")
    d = geom.d
    lam = l * (l + d - 1)
    spec = _poly_spec(phi_poly)
    harm = _harmonic(l)
    tau = _density(sc, omega, ctx.evaluate(jc.Product([spec, harm]), 2))
    lap = tractor_laplacian(tau).xi.comps.value
    phi = ctx.evaluate(spec, 2)
    p0 = phi.value
    p1 = phi.derivative((1,) + (0,) * d)
    p2 = phi.derivative((2,) + (0,) * d)
    rho = pts[:, 0]
    y = ctx.evaluate(harm, 0).value
    residuals, factors = {}, {}
    for variant in ODE_VARIANTS:
        L = radial_operator_mp(p0, p1, p2, rho, d, omega, lam, variant) * y
        kappa = np.vdot(L, lap) / np.vdot(L, L)
        residuals[variant] = float(np.max(np.abs(lap - kappa * L)) / (1 + np.max(np.abs(lap))))
        factors[variant] = complex(kappa)
    winner = min(residuals, key=residuals.get)
    return AuditReport(residuals, factors, winner)


# ---------------------------------------------------------------------------
# numerical integration and asymptotic fits

def _rhs(d, omega, lam, variant="radial"):
    A = d - 3 + 2 * omega
    c0 = zeroth_order_constant(omega, d, variant)

    def f(rho, y):
        phi, dphi = y
        dd = ((1 + (1 - 2 * rho) * A) * dphi + (c0 - lam) * phi) / (2 * rho * (1 - 2 * rho))
        return [dphi, dd]
    return f


def integrate_radial(d: int, omega: complex, lam: float, rho_start: float, rho_end: float,
                     init=(1.0, 0.0), rtol: float = 1e-10, atol: float = 1e-13):
    """Integrate ``L phi = 0`` from ``rho_start`` toward the boundary."""
    if not 0 < rho_end < rho_start < 0.5:
        raise IntegrationError("need 0 < rho_end < rho_start < 1/2")
    y0 = np.asarray(init, dtype=complex)
    sol = solve_ivp(_rhs(d, omega, lam), (rho_start, rho_end), y0, method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise IntegrationError(sol.message)
    return sol


@dataclass
class AsymptoticFit:
    exponents: tuple
    amplitudes: tuple
    fit_window: tuple
    residual: float
    expected: tuple = field(default=())

    def record(self) -> dict:
        return {"exponents": [_cplx(e) for e in self.exponents],
                "amplitudes": [_cplx(a) for a in self.amplitudes],
                "fit_window": list(self.fit_window), "residual": self.residual,
                "expected": [_cplx(e) for e in self.expected]}


def _projection(rho, data, exponents, degree):
    """Linear least squares for ``sum_j rho^e_j P_j(rho)`` at fixed exponents."""
    cols = [rho ** (e + i) for e in exponents for i in range(degree + 1)]
    M = np.stack(cols, axis=1)
    norms = np.linalg.norm(M, axis=0)
    coef, *_ = np.linalg.lstsq(M / norms, data, rcond=None)
    return coef / norms


def _tilde_state(sol, rho, omega):
    """Rows ``(phi~, rho phi~')`` with ``phi~ = rho^(-omega/2) phi``, one column per solution."""
    phi, dphi = sol.sol(rho)
    pre = rho ** (-omega / 2)
    return pre * phi, pre * (rho * dphi - omega / 2 * phi)


def fit_exponents(sols, omega: float, rho_end: float, samples: int = 40, ratio: float = math.sqrt(10.0),
                  degree: int = 2):
    """Boundary exponents of ``phi~`` from two independent solutions on ``[rho_end, 10 rho_end]``.

    The state matrix ``V(rho)`` (values and ``rho d/drho`` of both solutions)
    is carried to ``ratio * rho`` by ``C = V(ratio rho) V(rho)^-1``.  Near a
    regular singular point ``C`` has eigenvalues ``ratio^e_j`` times a
    function analytic in ``rho``, so ``log(eig)/log(ratio)`` is regressed
    on a polynomial in ``rho`` and the exponents are the free intercepts.
    """
    rho = np.geomspace(rho_end, 10 * rho_end / ratio, samples)
    est = np.empty((samples, 2))
    for i, (r0, r1) in enumerate(zip(rho, rho * ratio)):
        V0 = np.array([_tilde_state(s, r0, omega) for s in sols]).T
        V1 = np.array([_tilde_state(s, r1, omega) for s in sols]).T
        if np.linalg.cond(V0) > 1e12:
            raise FitError("solutions are numerically dependent")
        ev = np.linalg.eigvals(V1 @ np.linalg.inv(V0))
        est[i] = np.sort(np.log(ev.astype(complex)).real / math.log(ratio))
    A = np.vander(rho, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(A, est, rcond=None)
    resid = float(np.max(np.abs(A @ coef - est)))
    if not np.all(np.isfinite(coef)):
        raise FitError("ill-conditioned exponent regression")
    return (float(coef[0, 0]), float(coef[0, 1])), resid


def integrate_and_fit(d: int, m: float, lam: float = 0.0, rho_start: float = 0.25, rho_end: float = 1e-3,
                      init=(1.0, 0.3), weight_index: int = 0, samples: int = 40) -> AsymptoticFit:
    """Integrate toward the boundary and fit the exponents of ``phi~ = rho^(-omega/2) phi``.

    ``init`` fixes the reported solution; a second, independent solution
    is integrated alongside for the exponent fit.  Amplitudes are the
    leading coefficients of ``init``'s solution at the fitted exponents.
    """
    if d * d - 4 * m * m <= 0:
        raise ValueError("the fitting path needs d^2 - 4 m^2 > 0")
    if rho_end < 1e-3:
        raise ValueError("rho_end >= 1e-3")
    omega = mass_to_weights(d, m)[weight_index].real
    a = np.asarray(init, dtype=float)
    b = np.array([-a[1], a[0]]) if np.any(a) else np.array([0.0, 1.0])
    sols = [integrate_radial(d, omega, lam, rho_start, rho_end, v) for v in (a, b)]
    exps, resid = fit_exponents(sols, omega, rho_end, samples)
    rho = np.geomspace(rho_end, 10 * rho_end, 200)
    tilde = _tilde_state(sols[0], rho, omega)[0]
    coef = _projection(rho, tilde, exps, 2)
    return AsymptoticFit(exps, (complex(coef[0]), complex(coef[3])), (rho_end, 10 * rho_end), resid,
                         asymptotic_exponents(d, m))


@dataclass
class ComplexBranchReport:
    omega: complex
    h0: complex
    max_relative_error: float
    amplitudes: tuple
    window: tuple


def complex_branch_check(d: int, m: float, lam: float = 0.0, window=(1e-3, 0.3), N: int = 80,
                         init=(1.0, 0.3), samples: int = 120, weight_index: int = 0) -> ComplexBranchReport:
    """Match the integrated solution by the two Frobenius solutions on ``window``."""
    omega = mass_to_weights(d, m)[weight_index]
    h0 = h0_of(omega, d)
    s0 = frobenius_desitter(d, omega, lam, 0, N)
    s1 = frobenius_desitter(d, omega, lam, h0 - 1, N)
    sol = integrate_radial(d, omega, lam, window[1], window[0], init)
    rho = np.geomspace(window[0], window[1], samples)
    phi = sol.sol(rho)[0]
    M = np.stack([s0.evaluate(rho), s1.evaluate(rho)], axis=1)
    coef, *_ = np.linalg.lstsq(M, phi, rcond=None)
    err = np.max(np.abs(M @ coef - phi)) / np.max(np.abs(phi))
    return ComplexBranchReport(omega, h0, float(err), (complex(coef[0]), complex(coef[1])), tuple(window))
