"""
Model geometries, curvature and the boundary data of a projective compactification.

A geometry is a single chart with jet-evaluable metric components.  All
derived objects are computed pointwise from jets at a batch of sample points
and cached on a :class:`GeometryAt` context, one per (points, order) pair.

Scales
------
Every scale is a torsion-free connection ``hat nabla = nabla_g + Upsilon`` in the
projective class of the Levi-Civita connection of ``g``.  Weighted objects are
carried as components relative to a trivialising density: for the Levi-Civita
scale ("LC") that is ``sigma^(1/alpha)``; a scale with a gauge function
``lam`` uses ``(sigma / lam)^(1/alpha)``.  A weight-``w`` component therefore
converts as ``phi_scale = phi_LC * lam^(w/alpha)``, and the density connection
acts on components by ``d + w * theta`` with ``theta = Upsilon - dlam/(alpha lam)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import jetcalc as jc
from .jetcalc import Jet, JetFieldSpec, jet_einsum

LETTERS = "abcdfghijklmnop"  # no e, x, Q, Z: reserved in einsum strings


class GeometryError(Exception):
    """Point outside the chart domain or unsupported request."""


class CapabilityError(GeometryError):
    """Operation not available on this geometry."""


# ---------------------------------------------------------------------------
# jet tensor helpers

def matrix_inverse(m: Jet) -> Jet:
    """Inverse of a batch of jet matrices (shape (..., n, n)).

    Neumann series about the value: the non-constant part is nilpotent at
    the truncation order, so the series terminates exactly.
    """
    inv0 = Jet.constant(np.linalg.inv(m.value), m.dim, m.order)
    step = -jet_einsum("...ab,...bc->...ac", m - m.value, inv0)
    acc = Jet.constant(np.broadcast_to(np.eye(m.shape[-1]), m.shape), m.dim, m.order)
    term = acc
    for _ in range(m.order):
        term = jet_einsum("...ab,...bc->...ac", term, step)
        acc = acc + term
    return jet_einsum("...ab,...bc->...ac", inv0, acc)


def determinant(m: Jet) -> Jet:
    """Determinant by Laplace expansion (n <= 5 in practice)."""
    n = m.shape[-1]
    if n == 1:
        return m[..., 0, 0]
    out = None
    for j in range(n):
        minor_idx = [c for c in range(n) if c != j]
        minor = Jet(m.coeffs[..., 1:, :, :][..., minor_idx, :], m.dim, m.order)
        term = m[..., 0, j] * determinant(minor) * (-1) ** j
        out = term if out is None else out + term
    return out


def covariant_derivative(t: Jet, kinds: str, weight: complex, gamma: Jet, theta: Jet | None) -> Jet:
    """Covariant derivative of a weighted tensor, new index in front.

    ``t`` has shape (P, i1, ..., ir); ``kinds`` is a string of 'l' (covariant)
    and 'u' (contravariant) of length r.  ``gamma[P, c, a, b]`` are the
    connection coefficients and ``theta[P, a]`` the density connection form.
    """
    r = len(kinds)
    assert len(t.shape) == r + 1, (t.shape, kinds)
    letters = LETTERS[:r]
    grad = jc.gradient(t)  # (P, letters, c)
    out = grad.moveaxis(-1, 1)
    for i, kind in enumerate(kinds):
        li = letters[i]
        t_sub = "Q" + letters.replace(li, "e")
        if kind == "l":
            out = out - jet_einsum(f"{t_sub},Qex{li}->Qx{letters}", t, gamma)
        else:
            out = out + jet_einsum(f"{t_sub},Q{li}xe->Qx{letters}", t, gamma)
    if theta is not None and weight != 0:
        out = out + jet_einsum(f"Qx,Q{letters}->Qx{letters}", theta, t) * weight
    return out


def levi_civita_symbol(n: int) -> np.ndarray:
    eps = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        eps[perm] = (-1) ** inv
    return eps


# ---------------------------------------------------------------------------
# scales

@dataclass(frozen=True)
class Scale:
    """A connection ``nabla_g + Upsilon`` in the projective class.

    Either ``gauge`` (a positive function ``lam``; then ``Upsilon = dlam/(alpha lam)``
    and the scale preserves ``sigma / lam``) or explicit ``upsilon`` one-form
    components may be given.  With neither, the scale is Levi-Civita.
    """

    name: str
    gauge: JetFieldSpec | None = None
    upsilon: tuple | None = None

    @property
    def is_special(self) -> bool:
        return self.upsilon is None


LC = Scale("LC")


# ---------------------------------------------------------------------------
# geometries

class Geometry:
    """A chart with jet-evaluable metric components."""

    name = "geometry"
    alpha = 2

    def __init__(self, n: int, metric_specs, signature: Sequence[int],
                 lower: Sequence[float], upper: Sequence[float], named=None):
        self.n = n
        self.metric_specs = metric_specs
        self.signature = tuple(int(s) for s in signature)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.named: dict = dict(named or {})
        self._scales: dict[str, Scale] = {"LC": LC}

    # -- domain ---------------------------------------------------------------
    def sample_box(self):
        return self.lower, self.upper

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo, hi = self.sample_box()
        return rng.uniform(lo, hi, size=(count, self.n))

    def check_domain(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[-1] != self.n:
            raise GeometryError(f"points must have {self.n} coordinates")
        if np.any(points < self.lower) or np.any(points > self.upper):
            raise GeometryError(f"point outside the domain of {self.name}")
        return points

    # -- scales ---------------------------------------------------------------
    def register_scale(self, scale: Scale) -> Scale:
        self._scales[scale.name] = scale
        return scale

    def scale(self, name: str) -> Scale:
        try:
            return self._scales[name]
        except KeyError:
            raise GeometryError(f"unknown scale {name!r} on {self.name}") from None

    def shifted_scale(self, name: str, upsilon: Sequence[JetFieldSpec]) -> Scale:
        """Register a (generally non-special) scale ``nabla_g + Upsilon``."""
        if len(upsilon) != self.n:
            raise GeometryError("upsilon needs one component per coordinate")
        return self.register_scale(Scale(name, upsilon=tuple(upsilon)))

    # -- evaluation -------------------------------------------------------------
    def metric_at(self, points, order: int) -> Jet:
        points = self.check_domain(points)
        rows = []
        for a in range(self.n):
            rows.append(jc.stack([self.metric_specs[a][b].evaluate(points, order, self.named)
                                  for b in range(self.n)], axis=1))
        return jc.stack(rows, axis=1)

    def at(self, points, order: int) -> "GeometryAt":
        """Context with geometric data jets good for fields of the given order."""
        return GeometryAt(self, self.check_domain(points), order)


def _diag(n, entries):
    zero = jc.Const(0.0)
    return [[entries[a] if a == b else zero for b in range(n)] for a in range(n)]


def _rho_named():
    return {"rho": lambda pts, order: Jet.variable(pts, 0, order)}


class DeSitter(Geometry):
    """de Sitter space in the chart (rho, theta^1..theta^d).

    ``g = -drho^2 / (4 rho^2 (1 - 2 rho)) + (1 / 2 rho) * round metric of S^d``,
    the round metric written in hyperspherical angles.
    """

    name = "de_sitter"
    alpha = 2

    def __init__(self, d: int, rho_range=(0.05, 0.45), angle_margin: float = 0.3):
        if not 1 <= d <= 3:
            raise GeometryError("hyperspherical chart supports 1 <= d <= 3")
        self.d = d
        rho = jc.Coord(0)
        g00 = jc.Scale(-0.25, jc.Pow(jc.Product([jc.Pow(rho, 2), 1 - 2 * rho]), -1))
        entries = [g00]
        for i in range(1, d + 1):
            warp = [jc.Pow(jc.Scale(2.0, rho), -1)]
            warp += [jc.Pow(jc.Sin(jc.Coord(j)), 2) for j in range(1, i)]
            entries.append(jc.Product(warp))
        lower = [1e-3] + [1e-3] * d
        upper = [0.5 - 1e-3] + [np.pi - 1e-3] * d
        super().__init__(d + 1, _diag(d + 1, entries), [-1] + [1] * d, lower, upper, _rho_named())
        self.rho_range = rho_range
        self.angle_margin = angle_margin
        self.register_scale(Scale("S", gauge=rho))

    def sample_box(self):
        lo = np.array([self.rho_range[0]] + [self.angle_margin] * self.d)
        hi = np.array([self.rho_range[1]] + [np.pi - self.angle_margin] * self.d)
        return lo, hi

    def sphere_metric_at(self, points, order) -> Jet:
        """Round metric of S^d in the angle coordinates (padded to the chart dim)."""
        n = self.n
        pts = self.check_domain(points)
        g = Jet.zeros((len(pts), self.d, self.d), n, order)
        c = g.coeffs.copy()
        for i in range(self.d):
            w = jc.Product([jc.Pow(jc.Sin(jc.Coord(j)), 2) for j in range(1, i + 1)]) if i else jc.Const(1)
            c[:, i, i] = w.evaluate(pts, order).coeffs
        return Jet(c, n, order)


class MinkowskiCone(Geometry):
    """Interior of the future light cone of Minkowski space in (rho, x~).

    ``rho = (t^2 - |x|^2)^(-1/2)`` and ``x~ = rho x``; signature (+, -, ..., -).
    The metric is ``drho^2 / rho^4 - (delta - x~ x~^T / (1 + |x~|^2)) dx~ dx~ / rho^2``.
    """

    name = "minkowski_cone"
    alpha = 1

    def __init__(self, n: int, rho_range=(0.1, 1.0), x_range: float = 0.7):
        if n < 2:
            raise GeometryError("MinkowskiCone needs n >= 2")
        rho = jc.Coord(0)
        xs = [jc.Coord(i) for i in range(1, n)]
        one_plus_r2 = jc.Sum([jc.Const(1.0)] + [jc.Pow(x, 2) for x in xs])
        inv_rho2 = jc.Pow(rho, -2)
        specs = [[None] * n for _ in range(n)]
        specs[0][0] = jc.Pow(rho, -4)
        for i in range(1, n):
            specs[0][i] = specs[i][0] = jc.Const(0.0)
            for j in range(1, n):
                cross = jc.Product([xs[i - 1], xs[j - 1], jc.Pow(one_plus_r2, -1)])
                base = cross - 1.0 if i == j else cross
                specs[i][j] = jc.Product([inv_rho2, base])
        lower = [1e-3] + [-10.0] * (n - 1)
        upper = [1e3] + [10.0] * (n - 1)
        super().__init__(n, specs, [1] + [-1] * (n - 1), lower, upper, _rho_named())
        self.rho_range = rho_range
        self.x_range = x_range
        self.register_scale(Scale("S", gauge=rho))

    @property
    def d(self) -> int:
        return self.n - 1

    def sample_box(self):
        lo = np.array([self.rho_range[0]] + [-self.x_range] * (self.n - 1))
        hi = np.array([self.rho_range[1]] + [self.x_range] * (self.n - 1))
        return lo, hi


class GenericAnalytic(Geometry):
    """Metric given by arbitrary expression trees on a coordinate box.

    The constructor rejects non-symmetric specs and metrics that are
    singular (or change signature) on a probe grid.
    """

    name = "generic"

    def __init__(self, components, lower, upper, alpha: int = 2, probe: int = 3):
        n = len(components)
        specs = [[c if isinstance(c, JetFieldSpec) else jc.spec_from_json(c) for c in row]
                 for row in components]
        if any(len(row) != n for row in specs):
            raise GeometryError("metric components must form a square matrix")
        self.alpha = alpha
        grid = np.array(list(itertools.product(*[np.linspace(lo, hi, probe)
                                                  for lo, hi in zip(lower, upper)])))
        vals = np.array([[specs[a][b].evaluate(grid, 0).value for b in range(n)]
                         for a in range(n)]).transpose(2, 0, 1)
        if not np.allclose(vals, vals.transpose(0, 2, 1), atol=1e-12):
            raise GeometryError("metric components are not symmetric")
        if np.any(np.abs(vals.imag) > 1e-12):
            raise GeometryError("metric components must be real on the domain")
        eig = np.linalg.eigvalsh(vals.real)
        if np.any(np.abs(eig) < 1e-10):
            raise GeometryError("metric is degenerate on the probe grid")
        signs = np.sign(eig)
        if np.any(signs != signs[0]):
            raise GeometryError("metric signature changes on the probe grid")
        signature = [int(s) for s in signs[0]]
        super().__init__(n, specs, signature, lower, upper)

    @classmethod
    def from_json(cls, doc: Mapping) -> "GenericAnalytic":
        return cls(doc["metric"], doc["lower"], doc["upper"], alpha=doc.get("alpha", 2))


def flat_metric(n: int, signature=None, box: float = 1.0) -> GenericAnalytic:
    signature = signature or [1] * n
    comps = [[jc.Const(signature[a] if a == b else 0.0) for b in range(n)] for a in range(n)]
    return GenericAnalytic(comps, [-box] * n, [box] * n)


def perturbed_metric(rng: np.random.Generator, n: int, amplitude: float = 0.05,
                     signature=None, box: float = 0.5) -> GenericAnalytic:
    """A constant-signature metric plus a small random polynomial-trig perturbation."""
    signature = signature or [1] * n
    comps = [[None] * n for _ in range(n)]
    for a in range(n):
        for b in range(a, n):
            pert = jc.random_field(rng, n, degree=2, n_terms=3)
            pert = _real_part(pert)
            base = jc.Const(signature[a] if a == b else 0.0)
            comps[a][b] = comps[b][a] = base + jc.Scale(amplitude, pert)
    return GenericAnalytic(comps, [-box] * n, [box] * n)


def _real_part(spec):
    # random_field uses complex coefficients; metrics must be real
    if isinstance(spec, jc.Sum):
        return jc.Sum([_real_part(c) for c in spec.children])
    if isinstance(spec, jc.Scale):
        return jc.Scale(spec.factor.real, spec.child)
    return spec


# ---------------------------------------------------------------------------
# pointwise context

class GeometryAt:
    """Metric, connection and curvature jets at a batch of points.

    ``order`` is the jet order of the fields this context will serve; the
    metric is expanded two orders higher so that Schouten tensors come out at
    the same order as the fields.
    """

    def __init__(self, geom: Geometry, points: np.ndarray, order: int):
        self.geom = geom
        self.points = points
        self.order = order
        self.n = geom.n
        self.metric_order = min(order + 2, jc.MAX_ORDER)
        self._scales: dict[str, ScaleAt] = {}

    @cached_property
    def metric(self) -> Jet:
        return self.geom.metric_at(self.points, self.metric_order)

    @cached_property
    def metric_inv(self) -> Jet:
        return matrix_inverse(self.metric)

    @cached_property
    def christoffel(self) -> Jet:
        """Levi-Civita coefficients ``Gamma[P, c, a, b] = Gamma^c_ab``."""
        dg = jc.gradient(self.metric)  # (P, a, b, e) = d_e g_ab
        # Gamma_{c a b} lowered = 1/2 (d_a g_cb + d_b g_ca - d_c g_ab)
        low = (dg.transpose((0, 1, 3, 2)) + dg - dg.transpose((0, 3, 1, 2))) * 0.5
        return jet_einsum("Qdc,Qcab->Qdab", self.metric_inv, low)

    @cached_property
    def abs_det(self) -> Jet:
        det = determinant(self.metric)
        return det * np.sign(det.value.real)

    @cached_property
    def sqrt_abs_det(self) -> Jet:
        return jc.sqrt(self.abs_det)

    @cached_property
    def signature_sign(self) -> int:
        return int(np.prod(self.geom.signature))

    def named(self, name: str, order: int | None = None) -> Jet:
        return self.geom.named[name](self.points, self.metric_order if order is None else order)

    def evaluate(self, spec: JetFieldSpec, order: int | None = None) -> Jet:
        return spec.evaluate(self.points, self.order if order is None else order, self.geom.named)

    def scale(self, name: str | Scale) -> "ScaleAt":
        key = name if isinstance(name, str) else name.name
        if key not in self._scales:
            scale = self.geom.scale(key) if isinstance(name, str) else name
            self._scales[key] = ScaleAt(self, scale)
        return self._scales[key]

    @cached_property
    def lc(self) -> "ScaleAt":
        return self.scale("LC")

    def zero(self, shape=(), order=None) -> Jet:
        return Jet.zeros((len(self.points),) + tuple(shape), self.n,
                         self.order if order is None else order)


class ScaleAt:
    """Scale-dependent data at the points of a :class:`GeometryAt`."""

    def __init__(self, ctx: GeometryAt, scale: Scale):
        self.ctx = ctx
        self.scale = scale
        self.name = scale.name
        self.n = ctx.n
        self.alpha = ctx.geom.alpha

    # -- connection ---------------------------------------------------------------
    @cached_property
    def gauge(self) -> Jet | None:
        if self.scale.gauge is None:
            return None
        return self.scale.gauge.evaluate(self.ctx.points, self.ctx.metric_order, self.ctx.geom.named)

    @cached_property
    def upsilon(self) -> Jet:
        """One-form relating this scale to Levi-Civita."""
        ctx = self.ctx
        if self.scale.upsilon is not None:
            return jc.stack([s.evaluate(ctx.points, ctx.metric_order, ctx.geom.named)
                             for s in self.scale.upsilon], axis=1)
        if self.gauge is not None:
            return jc.gradient(self.gauge) / (self.gauge.truncate(self.gauge.order - 1)[:, None] * self.alpha)
        return ctx.zero((self.n,), ctx.metric_order)

    @cached_property
    def theta(self) -> Jet | None:
        """Density connection form acting on component functions."""
        if self.scale.upsilon is None:
            return None
        ups = self.upsilon
        if self.gauge is not None:
            ups = ups - jc.gradient(self.gauge) / (self.gauge.truncate(self.gauge.order - 1)[:, None] * self.alpha)
        return ups

    @cached_property
    def gamma(self) -> Jet:
        g = self.ctx.christoffel
        if self.scale.upsilon is None and self.gauge is None:
            return g
        ups = self.upsilon
        eye = np.eye(self.n)
        shift = ups.linear("Qb,ca->Qcab", eye) + ups.linear("Qa,cb->Qcab", eye)
        return g + shift

    def nabla(self, t: Jet, kinds: str, weight: complex = 0) -> Jet:
        return covariant_derivative(t, kinds, weight, self.gamma, self.theta)

    def gauge_factor(self, weight: complex, order: int | None = None) -> Jet | None:
        """Multiplier taking weight-``weight`` LC components to this scale."""
        if self.gauge is None:
            return None
        lam = self.gauge if order is None else self.gauge.truncate(min(order, self.gauge.order))
        return jc.power(lam, weight / self.alpha)

    # -- curvature ------------------------------------------------------------------
    @cached_property
    def riemann(self) -> Jet:
        """``R[P, a, b, c, d] = R_ab^c_d`` with ``R_ab^c_d X^d = 2 nabla_[a nabla_b] X^c``."""
        gam = self.gamma
        dg = jc.gradient(gam)  # (P, c, a, d, e) = d_e Gamma^c_ad
        t1 = dg.transpose((0, 4, 2, 1, 3))  # d_a Gamma^c_bd -> indexed [P, a, b, c, d]
        t2 = dg.transpose((0, 2, 4, 1, 3))  # d_b Gamma^c_ad
        quad = jet_einsum("Qcae,Qebd->Qabcd", gam, gam)
        return t1 - t2 + quad - quad.transpose((0, 2, 1, 3, 4))

    @cached_property
    def ricci(self) -> Jet:
        return _trace(self.riemann, 0, 2)

    @cached_property
    def beta(self) -> Jet:
        ric = self.ricci
        return (ric - ric.transpose((0, 2, 1))) * (-1.0 / (self.n + 1))

    @cached_property
    def schouten(self) -> Jet:
        return (self.ricci + self.beta) / (self.n - 1)

    @cached_property
    def weyl(self) -> Jet:
        n = self.n
        eye = np.eye(n)
        p = self.schouten
        dp = p.linear("Qbd,ca->Qabcd", eye) - p.linear("Qad,cb->Qabcd", eye)
        bd = self.beta.linear("Qab,cd->Qabcd", eye)
        return self.riemann - dp - bd

    @cached_property
    def cotton(self) -> Jet:
        """``Y_abc = 2 nabla_[a P_b]c``."""
        dp = self.nabla(self.schouten, "ll")
        return dp - dp.transpose((0, 2, 1, 3))

    # -- metrisability / boundary data ---------------------------------------------
    @cached_property
    def sigma(self) -> Jet:
        """Component of the defining density (weight alpha)."""
        if self.gauge is not None:
            return self.gauge
        return Jet.constant(np.ones(len(self.ctx.points)), self.n, self.ctx.metric_order)

    @cached_property
    def zeta(self) -> Jet:
        """``zeta^ab = sigma^(-2/alpha) g^ab`` components (weight -2)."""
        z = self.ctx.metric_inv
        fac = self.gauge_factor(-2)
        return z if fac is None else z * fac[:, None, None]

    @cached_property
    def zeta_lower(self) -> Jet:
        return matrix_inverse(self.zeta)

    @cached_property
    def volume(self) -> Jet:
        """Scalar multiplying the coordinate n-form in the weight-n volume form."""
        vol = self.ctx.sqrt_abs_det
        fac = self.gauge_factor(self.n)
        return vol if fac is None else vol * fac

    @cached_property
    def nabla_zeta(self) -> Jet:
        return self.nabla(self.zeta, "uu", -2)

    @cached_property
    def T(self) -> Jet:
        """``T^b = -nabla_a zeta^ab / (n + 1)``."""
        return _trace(self.nabla_zeta, 0, 1) * (-1.0 / (self.n + 1))

    @cached_property
    def H_xx(self) -> Jet:
        """``P_ab zeta^ab / n + nabla_a nabla_b zeta^ab / (n (n + 1))``."""
        n = self.n
        pz = jet_einsum("Qab,Qab->Q", self.schouten, self.zeta)
        ddz = self.nabla(self.nabla_zeta, "luu", -2)
        ddz = _trace(_trace(ddz, 0, 2), 0, 1)
        return pz / n + ddz / (n * (n + 1))

    @cached_property
    def I(self) -> tuple[Jet, Jet]:
        """Slots of ``I_A = D_A sigma``: top ``alpha sigma``, bottom ``nabla sigma``."""
        sig = self.sigma
        return sig * self.alpha, self.nabla(sig, "", self.alpha)

    @cached_property
    def I2(self) -> Jet:
        top, bot = self.I
        return (self.H_xx * top * top + jet_einsum("Qb,Qb->Q", self.T, bot) * top * 2
                + jet_einsum("Qb,Qb->Q", jet_einsum("Qab,Qa->Qb", self.zeta, bot), bot))

    @cached_property
    def f(self) -> Jet:
        """``sigma^-1 I^2`` (a function, weight 0)."""
        return self.I2 / self.sigma

    @cached_property
    def eps(self) -> int:
        vals = np.real(self.f.value)
        signs = np.sign(vals)
        if np.any(signs != signs[0]) or signs[0] == 0:
            raise CapabilityError("sigma^-1 I^2 vanishes or changes sign on these points")
        return int(signs[0])

    @cached_property
    def s(self) -> int:
        return self.ctx.signature_sign

    def x_factor(self, order: int | None = None) -> Jet:
        """Component multiplier implementing multiplication by sigma."""
        sig = self.sigma
        return sig if order is None else sig.truncate(min(order, sig.order))


def _trace(t: Jet, i: int, j: int) -> Jet:
    """Trace over two tensor axes (positions counted after the batch axis)."""
    c = np.trace(t.coeffs, axis1=1 + i, axis2=1 + j)
    # np.trace moves the traced axes away and keeps the coefficient axis last
    return Jet(np.moveaxis(c, -1, -1), t.dim, t.order)


# ---------------------------------------------------------------------------
# public operations

def metric_at(geom: Geometry, points, order: int) -> Jet:
    return geom.metric_at(points, order)


def christoffel_at(geom: Geometry, points, order: int) -> Jet:
    if order < 0:
        raise GeometryError("order must be non-negative")
    ctx = GeometryAt(geom, geom.check_domain(points), max(order - 1, 0))
    ctx.metric_order = order + 1
    return ctx.christoffel


@dataclass
class CurvaturePack:
    riemann: Jet
    ricci: Jet
    schouten: Jet
    beta: Jet
    weyl: Jet
    cotton: Jet
    scale: str


def curvature_at(geom: Geometry, points, order: int, scale: str = "LC") -> CurvaturePack:
    """Curvature jets of order ``order`` (Cotton one lower)."""
    if order + 2 > jc.MAX_ORDER:
        raise jc.OrderExhaustedError(f"curvature of order {order} needs metric order {order + 2}")
    sc = geom.at(points, order).scale(scale)
    return CurvaturePack(sc.riemann, sc.ricci, sc.schouten, sc.beta, sc.weyl, sc.cotton, scale)


def schouten_transform(sc: ScaleAt, upsilon: Jet) -> tuple[Jet, Jet]:
    """``(P - nabla Upsilon + Upsilon Upsilon, beta + 2 nabla_[a Upsilon_b])``."""
    du = sc.nabla(upsilon, "l")
    uu = jet_einsum("Qa,Qb->Qab", upsilon, upsilon)
    p_new = sc.schouten - du + uu
    b_new = sc.beta + du - du.transpose((0, 2, 1))
    return p_new, b_new


@dataclass
class BoundaryData:
    sigma: Jet
    zeta: Jet
    H: tuple[Jet, Jet, Jet]
    I: tuple[Jet, Jet]
    I2: Jet
    f: Jet
    T: Jet
    eps: int | None
    s: int
    scale: str


def boundary_data(geom: Geometry, points, order: int = 2, scale: str = "LC") -> BoundaryData:
    sc = geom.at(points, order).scale(scale)
    try:
        eps = sc.eps
    except CapabilityError:
        eps = None
    return BoundaryData(sc.sigma, sc.zeta, (sc.zeta, sc.T, sc.H_xx), sc.I, sc.I2, sc.f,
                        sc.T, eps, sc.s, scale)


def metrisability_residual(sc: ScaleAt) -> Jet:
    """``nabla_c zeta^ab - 2/(n+1) nabla_d zeta^d(a delta^b)_c``."""
    n = sc.n
    nz = sc.nabla_zeta  # [P, c, a, b]
    div = _trace(nz, 0, 1)  # [P, b]
    eye = np.eye(n)
    sym = div.linear("Qa,bc->Qcab", eye) + div.linear("Qb,ac->Qcab", eye)
    return nz - sym * (1.0 / (n + 1))


def me2_residual(sc: ScaleAt) -> tuple[Jet, Jet, Jet]:
    """Slots (XX, XW, WW) of ``nabla_c H^AB + (2/n) X^(A Omega_cE^B)_F H^EF``.

    The XW slot is the coefficient of ``2 X^(A W^B)_b``.
    """
    n = sc.n
    eye = np.eye(n)
    z, t, hxx, p = sc.zeta, sc.T, sc.H_xx, sc.schouten
    ww = sc.nabla_zeta + t.linear("Qb,ac->Qcab", eye) + t.linear("Qa,bc->Qcab", eye)
    dt = sc.nabla(t, "u", -2)
    dh = sc.nabla(hxx, "", -2)
    wz = jet_einsum("Qcebd,Qed->Qcb", sc.weyl, z)
    xw = (-jet_einsum("Qab,Qca->Qcb", z, p) + dt + hxx.linear("Q,cb->Qcb", eye) + wz / n)
    yz = jet_einsum("Qced,Qed->Qc", sc.cotton, z)
    xx = dh - jet_einsum("Qb,Qcb->Qc", t, p) * 2 - yz * (2.0 / n)
    return xx, xw, ww


def density_curvature_residual(sc: ScaleAt, density: Jet, weight: complex) -> Jet:
    """``2 nabla_[a nabla_b] s - weight beta_ab s`` for a density component ``s``."""
    d1 = sc.nabla(density, "", weight)
    d2 = sc.nabla(d1, "l", weight)
    return d2 - d2.transpose((0, 2, 1)) - sc.beta * density[:, None, None] * weight


def box_rho(geom: Geometry, points, order: int = 0) -> Jet:
    if not isinstance(geom, (DeSitter, MinkowskiCone)):
        raise CapabilityError("box_rho needs DeSitter or MinkowskiCone")
    ctx = geom.at(points, order)
    rho = ctx.named("rho", order + 2)
    lc = ctx.lc
    hess = lc.nabla(lc.nabla(rho, ""), "l")
    return jet_einsum("Qab,Qab->Q", ctx.metric_inv, hess)


def grad_rho_squared(geom: Geometry, points, order: int = 0) -> Jet:
    ctx = geom.at(points, order)
    d = jc.gradient(ctx.named("rho", order + 1))
    return (jet_einsum("Qab,Qa->Qb", ctx.metric_inv, d) * d).sum(-1)


def hat_box_scalar(geom: Geometry, phi: JetFieldSpec | Jet, points, order: int = 0) -> Jet:
    """``g^ab hat nabla_a hat nabla_b phi`` with ``hat nabla = nabla + drho / (2 rho)``."""
    if not isinstance(geom, DeSitter):
        raise CapabilityError("hat_box_scalar is defined on DeSitter")
    ctx = geom.at(points, order)
    f = phi if isinstance(phi, Jet) else ctx.evaluate(phi, order + 2)
    sc = ctx.scale("S")
    hess = sc.nabla(sc.nabla(f, ""), "l")
    return jet_einsum("Qab,Qab->Q", ctx.metric_inv, hess)


def hat_box_closed_form(geom: DeSitter, phi: JetFieldSpec | Jet, points, order: int = 0) -> Jet:
    """``-4 rho^2 (1 - 2 rho) d_rho^2 + 2 rho (2 rho (1 - d) + d) d_rho + 2 rho Lap_S``."""
    ctx = geom.at(points, order)
    d = geom.d
    f = phi if isinstance(phi, Jet) else ctx.evaluate(phi, order + 2)
    rho = ctx.named("rho", order)
    d1 = jc.gradient(f)
    d2 = jc.gradient(d1)
    out = (rho * rho * (1 - 2 * rho) * d2[:, 0, 0] * (-4)
           + rho * (rho * 2 * (1 - d) + d) * d1[:, 0] * 2)
    return out + rho * sphere_laplacian(geom, f, ctx) * 2


def sphere_laplacian(geom: DeSitter, f: Jet, ctx: GeometryAt) -> Jet:
    """Round-sphere Laplacian acting on the angle dependence of ``f``."""
    h = geom.sphere_metric_at(ctx.points, f.order)
    hinv = matrix_inverse(h)
    d1 = jc.gradient(f)[:, 1:]
    d2 = jc.gradient(d1)[:, :, 1:]
    dh = jc.gradient(h)[..., 1:]  # [P, i, j, k] = d_k h_ij
    low = (dh.transpose((0, 1, 3, 2)) + dh - dh.transpose((0, 3, 1, 2))) * 0.5
    gam = jet_einsum("Qlc,Qcab->Qlab", hinv, low)
    hess = d2 - jet_einsum("Qlab,Ql->Qab", gam, d1)
    return jet_einsum("Qab,Qab->Q", hinv, hess)


def bianchi_weyl_residual(geom: Geometry, points, scale: str = "LC", order: int = 1) -> Jet:
    """``nabla_a W_cd^a_f - (n - 2) Y_cdf + 3 nabla_[c beta_df]``."""
    sc = geom.at(points, order).scale(scale)
    n = geom.n
    dw = sc.nabla(sc.weyl, "llul")  # [P, e, c, d, a, f]
    lhs = _trace(dw, 0, 3)  # contract e with a -> [P, c, d, f]
    db = sc.nabla(sc.beta, "ll")  # [P, c, d, f]
    # beta is antisymmetric, so the cyclic sum is 3 nabla_[c beta_df]
    cyclic = db + db.transpose((0, 2, 3, 1)) + db.transpose((0, 3, 1, 2))
    return lhs - sc.cotton * (n - 2) + cyclic


# ---------------------------------------------------------------------------
# connection forms (appendix reproduction)

def _sphere_frame(geom: DeSitter, points, order):
    """Coordinate components of (d_rho, orthonormal sphere frame) and the dual coframe."""
    pts = geom.check_domain(points)
    n, d = geom.n, geom.d
    scales = [jc.Const(1.0), jc.Const(1.0)]
    for i in range(2, d + 1):
        scales.append(jc.Product([jc.Sin(jc.Coord(j)) for j in range(1, i)]))
    s = [sp.evaluate(pts, order) for sp in scales]
    frame = Jet.zeros((len(pts), n, n), n, order)
    coframe = Jet.zeros((len(pts), n, n), n, order)
    fc, cc = frame.coeffs.copy(), coframe.coeffs.copy()
    for j in range(n):
        fc[:, j, j] = jc.reciprocal(s[j]).coeffs
        cc[:, j, j] = s[j].coeffs
    return Jet(fc, n, order), Jet(cc, n, order), s


def connection_forms(geom: Geometry, points, scale: str = "LC") -> np.ndarray:
    """Values ``omega[P, i, j, a] = omega^i_j(d_a)`` in the appendix frames.

    DeSitter uses ``(d_rho, orthonormal sphere frame)``; MinkowskiCone the
    coordinate frame of ``(rho, x~)``.  Convention: ``omega^i_j(X) = e^i(nabla_X e_j)``.
    """
    ctx = geom.at(points, 0)
    sc = ctx.scale(scale)
    gam = sc.gamma.truncate(0).value  # [P, c, a, b]
    if isinstance(geom, MinkowskiCone):
        return np.einsum("Pcab->Pcba", gam)
    if not isinstance(geom, DeSitter):
        raise CapabilityError("connection forms are tabulated for DeSitter and MinkowskiCone")
    frame, coframe, _ = _sphere_frame(geom, points, 1)
    e = frame.truncate(0).value  # e[P, c, j] component c of e_j
    de = jc.gradient(frame).value  # [P, c, j, a] = d_a e^c_j
    ei = coframe.truncate(0).value  # [P, i, c]
    inner = de.transpose(0, 1, 2, 3) + np.einsum("Pcab,Pbj->Pcja", gam, e)
    return np.einsum("Pic,Pcja->Pija", ei, inner)


def appendix_connection_forms(geom: Geometry, points, hatted: bool = False) -> np.ndarray:
    """Closed-form connection-form entries from the appendix tables."""
    pts = geom.check_domain(points)
    P, n = len(pts), geom.n
    out = np.zeros((P, n, n, n), dtype=complex)
    rho = pts[:, 0]
    if isinstance(geom, MinkowskiCone):
        x = pts[:, 1:]
        r2 = np.sum(x * x, axis=1)
        g = -(np.eye(n - 1)[None] - np.einsum("Pi,Pj->Pij", x, x) / (1 + r2)[:, None, None]) / rho[:, None, None] ** 2
        if not hatted:
            out[:, 0, 0, 0] = -2 / rho
            for i in range(1, n):
                out[:, i, 0, i] = -1 / rho
        for j in range(1, n):
            out[:, 0, j, 1:] = rho[:, None] ** 3 * g[:, j - 1, :]
            for i in range(1, n):
                out[:, i, j, 1:] = x[:, i - 1, None] * rho[:, None] ** 2 * g[:, j - 1, :]
                if i == j and not hatted:
                    out[:, i, j, 0] -= 1 / rho
        return out
    if not isinstance(geom, DeSitter):
        raise CapabilityError("appendix tables exist for DeSitter and MinkowskiCone only")
    d = geom.d
    _, coframe, _ = _sphere_frame(geom, pts, 0)
    w_theta = coframe.value  # [P, i, a] sphere coframe (index 0 is rho)
    theta = sphere_connection_forms(geom, pts)
    out[:, 0, 0, 0] = 1 / (1 - 2 * rho) if hatted else 1 / (1 - 2 * rho) - 1 / rho
    for j in range(1, d + 1):
        out[:, 0, j, :] = -(1 - 2 * rho)[:, None] * w_theta[:, j, :]
        if not hatted:
            out[:, j, 0, :] = -(1 / (2 * rho))[:, None] * w_theta[:, j, :]
    for i in range(1, d + 1):
        for j in range(1, d + 1):
            out[:, i, j, :] = theta[:, i - 1, j - 1, :]
            if i == j and not hatted:
                out[:, i, j, 0] -= 1 / (2 * rho)
    return out


def sphere_connection_forms(geom: DeSitter, points) -> np.ndarray:
    """``theta^i_j(d_a)`` of the round S^d in its orthonormal hyperspherical frame."""
    pts = geom.check_domain(points)
    n, d = geom.n, geom.d
    h = geom.sphere_metric_at(pts, 1)
    hinv = np.linalg.inv(h.value)
    dh = jc.gradient(h).value[..., 1:]  # [P, i, j, k]
    low = np.zeros((len(pts), d, d, d), dtype=complex)
    for c in range(d):
        for a in range(d):
            for b in range(d):
                low[:, c, a, b] = 0.5 * (dh[:, c, b, a] + dh[:, c, a, b] - dh[:, a, b, c])
    gam = np.einsum("Plc,Pcab->Plab", hinv, low)
    frame, coframe, _ = _sphere_frame(geom, pts, 1)
    e = frame.value[:, 1:, 1:]
    de = jc.gradient(frame).value[:, 1:, 1:, :]  # [P, c, j, a] with a over all chart coords
    ei = coframe.value[:, 1:, 1:]
    out = np.zeros((len(pts), d, d, n), dtype=complex)
    inner = de.copy()
    inner[..., 1:] += np.einsum("Pcab,Pbj->Pcja", gam, e)
    out[:] = np.einsum("Pic,Pcja->Pija", ei, inner)
    return out
