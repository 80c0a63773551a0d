"""
Weighted tractor differential forms on projectively compact metrics.

A tractor k-form of weight ``omega`` is stored through its two slots in the
splitting of a chosen scale: ``mu`` is a (k-1)-form and ``xi`` a k-form, both
carrying density weight ``omega + k``.  Operators act on the slots through
closed formulas.  A second, independent route works with the full
``(n+1)``-index component array (index 0 is the ``Y`` direction); it is used
to cross-check the slot formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import jetcalc as jc
from .forms import (FormError, WeightedForm, WeightedFormField, WeightedVector, _letters,
                    _signed_perms, antisymmetrize, change_scale, codifferential_base,
                    contract, cov_ext_d, hodge_star_base, laplace_de_rham, nabla_form,
                    scalar_mul, wedge, zero_form)
from .geometry import (CapabilityError, DeSitter, MinkowskiCone, ScaleAt, covariant_derivative,
                       levi_civita_symbol)
from .jetcalc import Jet, JetFieldSpec, jet_einsum


class TractorError(Exception):
    """Structural misuse of tractor forms."""


class ExcludedWeightError(TractorError):
    """The requested (weight, degree) pair makes a formula singular."""


class PreconditionError(TractorError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# values

def _wf(comps: Jet, k: int, weight: complex, sc: ScaleAt) -> WeightedForm:
    return WeightedForm(comps, k, weight, sc)


def _add(a: WeightedForm | None, b: WeightedForm | None) -> WeightedForm | None:
    if a is None:
        return b
    if b is None:
        return a
    return _wf(a.comps + b.comps, a.k, a.weight, a.scale)


@dataclass(frozen=True)
class TractorForm:
    """Evaluated tractor k-form in the splitting of ``scale``."""

    k: int
    omega: complex
    scale: ScaleAt
    mu: WeightedForm | None
    xi: WeightedForm | None

    def __post_init__(self):
        n = self.scale.n
        if not 0 <= self.k <= n + 1:
            raise TractorError(f"degree {self.k} out of range for n={n}")
        if self.mu is None and self.k >= 1:
            raise TractorError("missing mu slot")
        if self.xi is None and self.k <= n:
            raise TractorError("missing xi slot")

    @property
    def n(self) -> int:
        return self.scale.n

    @property
    def comp_weight(self) -> complex:
        return self.omega + self.k

    @property
    def order(self) -> int:
        return min(s.order for s in self.slots() if s is not None)

    def slots(self):
        return self.mu, self.xi

    def _map(self, fn) -> "TractorForm":
        return TractorForm(self.k, self.omega, self.scale,
                           None if self.mu is None else fn(self.mu),
                           None if self.xi is None else fn(self.xi))

    def __add__(self, other: "TractorForm") -> "TractorForm":
        _check_same(self, other)
        return TractorForm(self.k, self.omega, self.scale, _add(self.mu, other.mu), _add(self.xi, other.xi))

    def __sub__(self, other: "TractorForm") -> "TractorForm":
        return self + (-other)

    def __neg__(self) -> "TractorForm":
        return self._map(lambda s: -s)

    def scaled(self, c) -> "TractorForm":
        return self._map(lambda s: s.scaled(c))

    def truncate(self, order: int) -> "TractorForm":
        return self._map(lambda s: s.truncate(order))

    def with_weight(self, omega: complex) -> "TractorForm":
        """Reinterpret the same components at another tractor weight."""
        w = omega + self.k
        return TractorForm(self.k, omega, self.scale,
                           None if self.mu is None else _wf(self.mu.comps, self.k - 1, w, self.scale),
                           None if self.xi is None else _wf(self.xi.comps, self.k, w, self.scale))

    def max_abs(self) -> float:
        return max((s.max_abs() for s in self.slots() if s is not None), default=0.0)


def _check_same(a: TractorForm, b: TractorForm) -> None:
    if a.k != b.k or a.scale.name != b.scale.name or not np.isclose(a.omega, b.omega):
        raise TractorError(f"incompatible tractor forms: (k={a.k}, w={a.omega}, {a.scale.name}) "
                           f"vs (k={b.k}, w={b.omega}, {b.scale.name})")


def make_tractor(sc: ScaleAt, k: int, omega: complex, mu: Jet | None, xi: Jet | None) -> TractorForm:
    w = omega + k
    return TractorForm(k, omega, sc,
                       None if mu is None else _wf(mu, k - 1, w, sc),
                       None if xi is None else _wf(xi, k, w, sc))


def zero_tractor(sc: ScaleAt, k: int, omega: complex, order: int) -> TractorForm:
    n = sc.n
    mu = sc.ctx.zero((n,) * (k - 1), order) if k >= 1 else None
    xi = sc.ctx.zero((n,) * k, order) if k <= n else None
    return make_tractor(sc, k, omega, mu, xi)


class TractorFormField:
    """Tractor k-form given by slot fields in the splitting of ``scale``."""

    def __init__(self, n: int, k: int, omega: complex, mu: WeightedFormField | None,
                 xi: WeightedFormField | None, scale: str = "LC"):
        if not 0 <= k <= n + 1:
            raise TractorError(f"degree {k} out of range for n={n}")
        w = complex(omega) + k
        for slot, deg in ((mu, k - 1), (xi, k)):
            if slot is not None and (slot.k != deg or not np.isclose(slot.weight, w) or slot.scale != scale):
                raise TractorError("slot field has the wrong degree, weight or scale")
        if (k >= 1) and mu is None and k == n + 1:
            raise TractorError("top-degree form needs a mu slot")
        self.n, self.k, self.omega, self.scale = n, k, complex(omega), scale
        self.mu, self.xi = mu, xi

    def evaluate(self, sc: ScaleAt, order: int | None = None) -> TractorForm:
        ctx = sc.ctx
        order = ctx.order if order is None else order
        home = ctx.scale(self.scale)
        n, k = self.n, self.k
        mu = xi = None
        if k >= 1:
            mu = (self.mu.evaluate(home, order).comps if self.mu is not None
                  else ctx.zero((n,) * (k - 1), order))
        if k <= n:
            xi = (self.xi.evaluate(home, order).comps if self.xi is not None
                  else ctx.zero((n,) * k, order))
        return transport(make_tractor(home, k, self.omega, mu, xi), sc)

    @classmethod
    def random(cls, rng: np.random.Generator, n: int, k: int, omega: complex,
               scale: str = "LC", degree: int = 3) -> "TractorFormField":
        w = complex(omega) + k
        mu = WeightedFormField.random(rng, n, k - 1, w, scale, degree) if k >= 1 else None
        xi = WeightedFormField.random(rng, n, k, w, scale, degree) if k <= n else None
        return cls(n, k, omega, mu, xi, scale)


# ---------------------------------------------------------------------------
# scale transport and algebra

def _upsilon_form(sc: ScaleAt, order: int) -> WeightedForm:
    u = sc.upsilon
    return _wf(u.truncate(min(order, u.order)), 1, 0, sc)


def transport(F: TractorForm, target: ScaleAt, upsilon: Jet | None = None) -> TractorForm:
    """Re-express ``F`` in the splitting of ``target``.

    The slots change as ``mu -> mu`` and ``xi -> xi + Upsilon ^ mu`` with
    ``Upsilon`` the difference of the two scales' one-forms, followed by the
    density factors of weight ``omega + k``.
    """
    src = F.scale
    if src.ctx is not target.ctx:
        raise TractorError("transport between different evaluation contexts")
    if src.name == target.name:
        return F
    order = F.order
    ups = (target.upsilon - src.upsilon).truncate(order)
    if upsilon is not None:
        gap = (upsilon - ups).max_abs()
        if gap > 1e-9 * (1 + ups.max_abs()):
            raise TractorError(f"Upsilon does not connect {src.name} to {target.name} (off by {gap:.2e})")
    mu, xi = F.mu, F.xi
    if mu is not None and xi is not None:
        xi = xi + wedge(_wf(ups, 1, 0, src), mu).truncate(order)
    mu = None if mu is None else change_scale(mu, target)
    xi = None if xi is None else change_scale(xi, target)
    return TractorForm(F.k, F.omega, target, mu, xi)


def tractor_wedge(F: TractorForm, G: TractorForm) -> TractorForm:
    """``(mu ^ eta + (-1)^k xi ^ nu, xi ^ eta)``."""
    if F.scale.name != G.scale.name:
        raise TractorError("wedge needs a common scale")
    k, l, n = F.k, G.k, F.n
    if k + l > n + 1:
        raise TractorError(f"degree {k + l} exceeds n+1={n + 1}")
    sc = F.scale
    w = F.omega + G.omega + k + l
    mu = None
    if k + l >= 1:
        parts = []
        if F.mu is not None and G.xi is not None:
            parts.append(wedge(F.mu, G.xi))
        if F.xi is not None and G.mu is not None:
            parts.append(wedge(F.xi, G.mu).scaled((-1) ** k))
        mu = parts[0] if len(parts) == 1 else _wf(parts[0].comps + parts[1].comps, k + l - 1, w, sc)
        mu = _wf(mu.comps, k + l - 1, w, sc)
    xi = None
    if k + l <= n:
        xi = _wf(wedge(F.xi, G.xi).comps, k + l, w, sc)
    return TractorForm(k + l, F.omega + G.omega, sc, mu, xi)


def _alt_schouten_mu(sc: ScaleAt, mu: WeightedForm) -> Jet:
    """``P_[a0 a1 mu_a2..ak]`` with all indices alternated."""
    k1 = mu.k
    idx = _letters(k1 + 2)
    prod = jet_einsum(f"Q{idx[:2]},Q{idx[2:]}->Q{idx}", sc.schouten, mu.comps)
    return antisymmetrize(prod)


def D(F: TractorForm) -> TractorForm:
    """Tractor exterior derivative: weight ``omega -> omega - 1``, degree ``k -> k + 1``.

    Top slot ``(omega+k) xi - k nabla_[a mu]``; bottom slot
    ``(k+1) nabla_[a xi] + (k+1)!/(k-1)! P_[a a mu]``.
    """
    k, n, sc = F.k, F.n, F.scale
    if k == n + 1:
        raise TractorError("D of a top-degree tractor form")
    w = F.comp_weight
    top = F.xi.scaled(w)
    if F.mu is not None:
        top = _wf(top.comps - antisymmetrize(nabla_form(F.mu)) * k, k, w, sc)
    bot = None
    if k + 1 <= n:
        bot = cov_ext_d(F.xi)
        if F.mu is not None:
            fac = math.factorial(k + 1) / math.factorial(k - 1)
            bot = _wf(bot.comps + _alt_schouten_mu(sc, F.mu) * fac, k + 1, w, sc)
    return TractorForm(k + 1, F.omega - 1, sc, top, bot)


# ---------------------------------------------------------------------------
# Hodge star

def _c1_c2(sc: ScaleAt) -> tuple[Jet, Jet]:
    f = sc.f
    root = jc.sqrt(f * sc.eps)
    sig = sc.sigma
    c1 = jc.sqrt(sig) * 2 / root
    c2 = jc.power(sig, -0.5) * f / (root * 2)
    return c1, c2


def _require_nondegenerate(sc: ScaleAt) -> None:
    if isinstance(sc.ctx.geom, MinkowskiCone):
        raise CapabilityError("the tractor metric is degenerate on the Minkowski cone")
    sc.eps  # raises when sigma^-1 I^2 vanishes


def _hodge_slots(F: TractorForm, t_sign: int) -> TractorForm:
    sc = F.scale
    _require_nondegenerate(sc)
    n, k = F.n, F.k
    kk = n + 1 - k
    c1, c2 = _c1_c2(sc)
    T = WeightedVector(sc.T, -2, sc)
    Tb = _wf(jet_einsum("Qab,Qb->Qa", sc.zeta_lower, sc.T), 1, 0, sc)
    sx = hodge_star_base(F.xi) if F.xi is not None else None
    sm = hodge_star_base(F.mu) if F.mu is not None else None
    # inner = (-1)^k *xi + t_sign T _| *mu, an (n-k)-form
    inner = None
    if sx is not None:
        inner = sx.comps * (-1) ** k
    if sm is not None and sm.k >= 1:
        t = contract(T, sm).comps * t_sign
        inner = t if inner is None else inner + t
    top = None if kk < 1 else scalar_mul(c1, inner)
    bot = None
    if kk <= n:
        bot = scalar_mul(c2, sm.comps) if sm is not None else None
        if inner is not None and n - k >= 0 and kk >= 1:
            tw = -scalar_mul(c1, wedge(Tb, _wf(inner, n - k, 0, sc)).comps)
            bot = tw if bot is None else bot + tw
    return make_tractor(sc, kk, F.omega, top, bot)


def tractor_hodge(F: TractorForm) -> TractorForm:
    """Tractor Hodge star; keeps ``omega`` and sends degree k to n+1-k.

    Top slot ``c1 ((-1)^k *xi - T _| *mu)``, bottom slot
    ``c2 *mu - Tb ^ (top)``, with ``c1 = 2 sigma^(1/2)/sqrt|f|`` and
    ``c2 = sigma^(-1/2) f / (2 sqrt|f|)``.  The sign of the ``T`` term is the
    one that makes the top slot scale invariant.
    """
    return _hodge_slots(F, -1)


def tractor_hodge_as_printed(F: TractorForm) -> TractorForm:
    """Same slots with ``+ T _| *mu``; agrees with :func:`tractor_hodge` only where ``T = 0``."""
    return _hodge_slots(F, +1)


def hodge_sign(sc: ScaleAt, k: int) -> int:
    """``** = s eps (-1)^(k (n+1-k))`` on tractor k-forms."""
    return sc.s * sc.eps * (-1) ** (k * (sc.n + 1 - k))


# ---------------------------------------------------------------------------
# full-array route

def _full_zero(sc: ScaleAt, k: int, order: int) -> np.ndarray:
    return np.zeros((len(sc.ctx.points),) + (sc.n + 1,) * k + (jc.n_coeffs(sc.n, order),), dtype=complex)


def to_full(F: TractorForm) -> Jet:
    """All components ``F_{A1..Ak}`` with index 0 the ``Y`` direction."""
    sc, k, n = F.scale, F.k, F.n
    order = F.order
    c = _full_zero(sc, k, order)
    if F.xi is not None:
        c[(slice(None),) + (slice(1, None),) * k] = F.xi.comps.truncate(order).coeffs
    if F.mu is not None:
        mu = F.mu.comps.truncate(order).coeffs
        for i in range(k):
            idx = [slice(1, None)] * k
            idx[i] = 0
            # move the Y index from the front to position i
            c[(slice(None),) + tuple(idx)] = mu * (-1) ** i
    return Jet(c, n, order)


def from_full(t: Jet, sc: ScaleAt, k: int, omega: complex) -> TractorForm:
    n = sc.n
    mu = t[(slice(None), 0) + (slice(1, None),) * (k - 1)] if k >= 1 else None
    xi = t[(slice(None),) + (slice(1, None),) * k] if k <= n else None
    return make_tractor(sc, k, omega, mu, xi)


def full_connection(sc: ScaleAt) -> Jet:
    """Connection coefficients ``M[P, J, a, I]`` of the cotractor connection.

    ``nabla_a u_I = d_a u_I - M[J, a, I] u_J``; in the splitting
    ``nabla_a (u_0, u_b) = (nabla_a u_0 - u_a, nabla_a u_b + P_ab u_0)``.
    """
    n = sc.n
    gam, P = sc.gamma, sc.schouten
    order = min(gam.order, P.order)
    c = np.zeros((len(sc.ctx.points), n + 1, n, n + 1, jc.n_coeffs(n, order)), dtype=complex)
    c[:, 1:, :, 1:] = gam.truncate(order).coeffs
    for a in range(n):
        c[:, 1 + a, a, 0, 0] = 1.0
    c[:, 0, :, 1:] = -P.truncate(order).coeffs
    return Jet(c, n, order)


def full_nabla(t: Jet, sc: ScaleAt, density_weight: complex) -> Jet:
    return covariant_derivative(t, "l" * (len(t.shape) - 1), density_weight, full_connection(sc), sc.theta)


def full_thomas_D(t: Jet, sc: ScaleAt, omega: complex, density_weight: complex) -> Jet:
    """``(D F)_0 = omega F``, ``(D F)_a = nabla_a F`` with the new index in front."""
    nab = full_nabla(t, sc, density_weight)
    order = nab.order
    c = np.concatenate([(t.truncate(order) * omega).coeffs[:, None], nab.coeffs], axis=1)
    return Jet(c, t.dim, order)


def full_D(F: TractorForm) -> TractorForm:
    """``(k+1) Alt(D F)`` on the full array."""
    sc = F.scale
    t = full_thomas_D(to_full(F), sc, F.omega, F.comp_weight)
    return from_full(antisymmetrize(t) * (F.k + 1), sc, F.k + 1, F.omega - 1)


def full_H(sc: ScaleAt) -> Jet:
    """``H^{AB}``: ``H^00 = H_XX``, ``H^0b = T^b``, ``H^ab = zeta^ab``."""
    n = sc.n
    parts = [sc.H_xx, sc.T, sc.zeta]
    order = min(p.order for p in parts)
    c = np.zeros((len(sc.ctx.points), n + 1, n + 1, jc.n_coeffs(n, order)), dtype=complex)
    c[:, 0, 0] = sc.H_xx.truncate(order).coeffs
    c[:, 0, 1:] = sc.T.truncate(order).coeffs
    c[:, 1:, 0] = sc.T.truncate(order).coeffs
    c[:, 1:, 1:] = sc.zeta.truncate(order).coeffs
    return Jet(c, n, order)


def _raise_full(t: Jet, H: Jet, count: int) -> Jet:
    idx = _letters(len(t.shape) - 1)
    for i in range(count):
        src = idx[:i] + "e" + idx[i + 1:]
        t = jet_einsum(f"Q{src},Q{idx[i]}e->Q{idx}", t, H)
    return t


def full_h(F: TractorForm, G: TractorForm) -> Jet:
    """``h(F, G) = (1/k!) H..H F G``."""
    if F.k != G.k:
        raise TractorError("h needs equal degrees")
    H = full_H(F.scale)
    up = _raise_full(to_full(F), H, F.k)
    idx = _letters(F.k)
    return jet_einsum(f"Q{idx},Q{idx}->Q", up, to_full(G)) / math.factorial(F.k)


def volume_top(sc: ScaleAt) -> Jet:
    """Top-slot component of the tractor volume form, ``c1 vol``."""
    c1, _ = _c1_c2(sc)
    return c1 * sc.volume


def full_hodge(F: TractorForm) -> TractorForm:
    """Hodge star for the metric ``H`` and volume ``c1 vol Y ^ dx^1 ^ .. ^ dx^n``."""
    sc = F.scale
    _require_nondegenerate(sc)
    n, k = F.n, F.k
    up = _raise_full(to_full(F), full_H(sc), k)
    idx = _letters(n + 1)
    out = up.linear(f"Q{idx[:k]},{idx}->Q{idx[k:]}", levi_civita_symbol(n + 1)) / math.factorial(k)
    out = scalar_mul(volume_top(sc), out)
    return from_full(out, sc, n + 1 - k, F.omega)


def full_contract_I(F: TractorForm) -> TractorForm:
    """``I _| F`` with ``I^A = H^AB I_B``."""
    sc = F.scale
    if F.k == 0:
        raise TractorError("cannot contract into a density")
    top, bot = sc.I
    I_low = jc.stack([top] + [bot[:, a] for a in range(sc.n)], axis=1)
    I_up = jet_einsum("Qab,Qb->Qa", full_H(sc), I_low)
    rest = _letters(F.k)[1:]
    out = jet_einsum(f"Qa,Qa{rest}->Q{rest}", I_up, to_full(F))
    return from_full(out, sc, F.k - 1, F.omega + 1)


def full_laplacian(F: TractorForm) -> TractorForm:
    """``H^AB D_A D_B F`` on the full array."""
    sc = F.scale
    w = F.comp_weight
    d1 = full_thomas_D(to_full(F), sc, F.omega, w)
    d2 = full_thomas_D(d1, sc, F.omega - 1, w)
    idx = _letters(F.k + 2, "")
    out = jet_einsum(f"Q{idx},Q{idx[:2]}->Q{idx[2:]}", d2, full_H(sc))
    return from_full(out, sc, F.k, F.omega - 2)


def tractor_curvature(sc: ScaleAt) -> Jet:
    """``Omega[P, a, b, J, I]``: curvature of the cotractor connection coefficients."""
    M = full_connection(sc)
    dM = jc.gradient(M)  # (P, J, b, I, e) = d_e M[J, b, I]
    t1 = dM.transpose((0, 4, 2, 1, 3))
    t2 = dM.transpose((0, 2, 4, 1, 3))
    quad = jet_einsum("Qcad,Qdbf->Qabcf", M, M)
    return t1 - t2 + quad - quad.transpose((0, 2, 1, 3, 4))


# ---------------------------------------------------------------------------
# codifferential and the I operators

def Dstar(F: TractorForm) -> TractorForm:
    """``(-1)^((n+1)(k-1)+1) s eps * D *``: weight ``omega-1``, degree ``k-1``."""
    n, k, sc = F.n, F.k, F.scale
    if k == 0:
        raise TractorError("no tractor forms of degree -1")
    sign = (-1) ** ((n + 1) * (k - 1) + 1) * sc.s * sc.eps
    return tractor_hodge(D(tractor_hodge(F))).scaled(sign)


def _in_lc(F: TractorForm, fn) -> TractorForm:
    lc = F.scale.ctx.lc
    return transport(fn(transport(F, lc)), F.scale)


def _df_sharp(sc: ScaleAt, order: int) -> WeightedVector:
    f = sc.f
    df = jc.gradient(f.truncate(min(f.order, order + 1)))
    return WeightedVector(jet_einsum("Qab,Qb->Qa", sc.zeta, df), -2, sc)


def Dstar_closed(F: TractorForm) -> TractorForm:
    """Closed form of the codifferential, evaluated in the Levi-Civita scale.

    Top ``(1/2f) (df)# _| mu - delta mu``; bottom
    ``(1/2f) (df)# _| xi + delta xi - (omega+n+1-k) sigma^-1 f/4 mu``.
    """
    def lc_formula(G: TractorForm) -> TractorForm:
        sc, n, k, w = G.scale, G.n, G.k, G.omega
        if k == 0:
            raise TractorError("no tractor forms of degree -1")
        wo = G.comp_weight - 2
        f = sc.f
        inv2f = jc.reciprocal(f) * 0.5
        fs = _df_sharp(sc, G.order)
        top = None
        if k >= 2:
            top = -codifferential_base(G.mu).comps
            top = top + scalar_mul(inv2f, contract(fs, G.mu).comps)
        bot = None
        if k - 1 <= n:
            bot = scalar_mul(f / sc.sigma * (-(w + n + 1 - k) / 4), G.mu.comps)
            if G.xi is not None and k >= 1:
                bot = bot + codifferential_base(G.xi).comps
                bot = bot + scalar_mul(inv2f, contract(fs, G.xi).comps)
        return make_tractor(sc, k - 1, w - 1, top, bot)
    return _in_lc(F, lc_formula)


def I_op(F: TractorForm) -> TractorForm:
    """``I ^ F`` with ``I = (alpha sigma, nabla sigma)``."""
    sc = F.scale
    top, bot = sc.I
    a = sc.alpha
    I = make_tractor(sc, 1, a - 1, top, bot)
    return tractor_wedge(I, F)


def Istar_op(F: TractorForm) -> TractorForm:
    """``eps s (-1)^((k+1)(n+1)+1) * I *``."""
    n, k, sc = F.n, F.k, F.scale
    if k == 0:
        raise TractorError("no tractor forms of degree -1")
    sign = sc.eps * sc.s * (-1) ** ((k + 1) * (n + 1) + 1)
    return tractor_hodge(I_op(tractor_hodge(F))).scaled(sign)


def contract_I(F: TractorForm) -> TractorForm:
    """``I _| F`` on slots: ``(-v _| mu, I^0 mu + v _| xi)`` with ``I^A = H^AB I_B``."""
    sc, k = F.scale, F.k
    if k == 0:
        raise TractorError("cannot contract into a density")
    top, bot = sc.I
    i0 = sc.H_xx * top + jet_einsum("Qb,Qb->Q", sc.T, bot)
    v = WeightedVector(sc.T * top[:, None] + jet_einsum("Qab,Qb->Qa", sc.zeta, bot), 0, sc)
    w = F.comp_weight + sc.alpha - 2
    mu_out = None
    if k >= 2:
        mu_out = -contract(v, F.mu).comps
    bot_out = scalar_mul(i0, F.mu.comps)
    if F.xi is not None:
        bot_out = bot_out + contract(v, F.xi).comps
    return make_tractor(sc, k - 1, F.omega + sc.alpha - 1, mu_out, bot_out)


# ---------------------------------------------------------------------------
# coupled connection and the tractor Laplacian

def _coupled_nabla(sc: ScaleAt, k: int, w: complex, mu: Jet | None, xi: Jet | None, extra: int):
    """Tractor connection on slot arrays with ``extra`` leading base indices.

    Returns ``(nabla_a mu - xi_{a..}, nabla_a xi + k P_a[a1 mu_a2..])`` with the
    derivative index in front.
    """
    n = sc.n
    mu_n = xi_n = None
    if mu is not None:
        mu_n = sc.nabla(mu, "l" * (extra + k - 1), w)
        if xi is not None:
            # xi_{E.., a, a2..} -> [a, E.., a2..]
            mu_n = mu_n - xi.moveaxis(1 + extra, 1)
    if xi is not None:
        xi_n = sc.nabla(xi, "l" * (extra + k), w)
        if mu is not None and k >= 1:
            idx = _letters(extra + k + 1)
            a, E, form = idx[0], idx[1:1 + extra], idx[1 + extra:]
            pm = jet_einsum(f"Q{a}{form[0]},Q{E}{form[1:]}->Q{a}{E}{form}", sc.schouten, mu)
            xi_n = xi_n + antisymmetrize(pm, 2 + extra, k) * k
    return mu_n, xi_n


def tractor_laplacian(F: TractorForm) -> TractorForm:
    """``H^AB D_A D_B`` on slots; weight ``omega -> omega - 2``.

    ``omega(omega-1) H_XX F + 2(omega-1) T^b nabla_b F
    + zeta^ab (nabla_a nabla_b F + omega P_ab F)``.
    """
    sc, k, om = F.scale, F.k, F.omega
    w = F.comp_weight
    mu = None if F.mu is None else F.mu.comps
    xi = None if F.xi is None else F.xi.comps
    m1, x1 = _coupled_nabla(sc, k, w, mu, xi, 0)
    m2, x2 = _coupled_nabla(sc, k, w, m1, x1, 1)
    pz = jet_einsum("Qab,Qab->Q", sc.schouten, sc.zeta)
    zero_fac = sc.H_xx * (om * (om - 1)) + pz * om

    def slot(s0, s1, s2):
        if s0 is None:
            return None
        rest = _letters(len(s0.shape) + 1, "ab")[:len(s0.shape) - 1]
        out = scalar_mul(zero_fac, s0)
        out = out + jet_einsum(f"Qb,Qb{rest}->Q{rest}", sc.T, s1) * (2 * (om - 1))
        out = out + jet_einsum(f"Qab{rest},Qab->Q{rest}", s2, sc.zeta)
        return out

    return make_tractor(sc, k, om - 2, slot(mu, m1, m2), slot(xi, x1, x2))


def density_laplacian_closed(F: TractorForm) -> TractorForm:
    """Densities in the Levi-Civita scale: ``omega(omega+n-1) (P.zeta/n) f + zeta nabla nabla f``."""
    if F.k != 0:
        raise TractorError("closed form is for densities")

    def lc(G: TractorForm) -> TractorForm:
        sc, n, om = G.scale, G.n, G.omega
        pz = jet_einsum("Qab,Qab->Q", sc.schouten, sc.zeta)
        f = G.xi.comps
        dd = sc.nabla(sc.nabla(f, "", G.comp_weight), "l", G.comp_weight)
        out = pz * f * (om * (om + n - 1) / n) + jet_einsum("Qab,Qab->Q", dd, sc.zeta)
        return make_tractor(sc, 0, om - 2, None, out)
    return _in_lc(F, lc)


# ---------------------------------------------------------------------------
# anticommutator and Weitzenbock comparison

def anticommutator_DDstar(F: TractorForm) -> TractorForm:
    """``D D* F + D* D F`` by composition."""
    out = None
    if F.k >= 1:
        out = D(Dstar(F))
    if F.k <= F.n:
        t = Dstar(D(F))
        out = t if out is None else out + t
    return out


def anticommutator_closed(F: TractorForm) -> TractorForm:
    """Closed form of ``{D, D*}`` where ``df = 0``, in the Levi-Civita scale.

    Top ``{d,delta} mu - 2 delta xi - (omega+k-2)(omega+n+1-k) sigma^-1 f/4 mu``;
    bottom ``{d,delta} xi - (f sigma^-1/2) d mu - (omega+k)(omega-1+n-k) f sigma^-1/4 xi``.
    """
    def lc(G: TractorForm) -> TractorForm:
        sc, n, k, om = G.scale, G.n, G.k, G.omega
        q = sc.f / sc.sigma / 4
        top = bot = None
        if G.mu is not None:
            top = laplace_de_rham(G.mu).comps
            top = top - scalar_mul(q, G.mu.comps) * ((om + k - 2) * (om + n + 1 - k))
            if G.xi is not None:
                top = top - codifferential_base(G.xi).comps * 2
        if G.xi is not None:
            bot = laplace_de_rham(G.xi).comps
            bot = bot - scalar_mul(q, G.xi.comps) * ((om + k) * (om - 1 + n - k))
            if G.mu is not None:
                bot = bot - scalar_mul(q, cov_ext_d(G.mu).comps) * 2
        return make_tractor(sc, k, om - 2, top, bot)
    return _in_lc(F, lc)


def curvature_term(F: TractorForm, omega_curv: Jet | None = None) -> TractorForm:
    """``k(k+1) H^AB Omega_[A|B|^C_A1 F_|C|A2..]`` on the full array."""
    sc, k, n = F.scale, F.k, F.n
    out_order = F.order
    if k == 0:
        return make_tractor(sc, 0, F.omega - 2, None, sc.ctx.zero((), out_order))
    om = tractor_curvature(sc) if omega_curv is None else omega_curv
    # promote base 2-form indices to tractor indices (Z components only)
    c = np.zeros((len(sc.ctx.points), n + 1, n + 1, n + 1, n + 1, om.coeffs.shape[-1]), dtype=complex)
    c[:, 1:, 1:] = om.coeffs
    full_om = Jet(c, om.dim, om.order)
    idx = _letters(k + 3, "")
    A, B, C = idx[0], idx[1], idx[2]
    rest = idx[3:3 + k - 1]
    A1 = idx[3 + k - 1] if k >= 1 else ""
    t = jet_einsum(f"Q{A}{B}{C}{A1},Q{C}{rest}->Q{A}{B}{A1}{rest}", full_om, to_full(F))
    # alternate over (A, A1, rest): bring B to the end first
    t = t.moveaxis(2, len(t.shape) - 1)
    t = antisymmetrize(t, 1, k + 1)
    free = _letters(k + 2, "")
    out = jet_einsum(f"Q{free[:k + 1]}{free[k + 1]},Q{free[0]}{free[k + 1]}->Q{free[1:k + 1]}",
                     t, full_H(sc)) * (k * (k + 1))
    return from_full(out, sc, k, F.omega - 2)


def weitzenbock_residual(F: TractorForm) -> TractorForm:
    """``{D, D*} F + Laplacian F - curvature term``."""
    if not isinstance(F.scale.ctx.geom, DeSitter):
        raise CapabilityError("Weitzenbock comparison needs a normal metrisability solution")
    return anticommutator_DDstar(F) + tractor_laplacian(F) - curvature_term(F)


def order_zero_bookkeeping(omega: complex, k: int, n: int) -> dict[str, complex]:
    """Scalar identities matching the order-zero terms of the Weitzenbock comparison.

    ``top_printed``:   (w+k-2)(w+n+1-k) - [w(w+n-1) - (n+1-k) - (k-1)(n+1-k)]
    ``top_corrected``: same with ``+ (k-1)(n+1-k)``, the constant the base
    Weitzenbock identity supplies for a (k-1)-form
    ``bottom``:        (w+k)(w+n-1-k) - [w(w+n-1) - k + k(n-k)]
    """
    top = (omega + k - 2) * (omega + n + 1 - k)
    base = omega * (omega + n - 1) - (n + 1 - k)
    return {
        "top_printed": top - (base - (k - 1) * (n + 1 - k)),
        "top_corrected": top - (base + (k - 1) * (n + 1 - k)),
        "bottom": (omega + k) * (omega + n - 1 - k) - (omega * (omega + n - 1) - k + k * (n - k)),
    }


# ---------------------------------------------------------------------------
# sl2 operators

@dataclass(frozen=True)
class TractorOperator:
    name: str
    weight_shift: complex
    degree_shift: int
    fn: Callable[[TractorForm], TractorForm]

    def __call__(self, F: TractorForm) -> TractorForm:
        out = self.fn(F)
        if out.k != F.k + self.degree_shift or not np.isclose(out.omega, F.omega + self.weight_shift):
            raise TractorError(f"{self.name}: output (k={out.k}, w={out.omega}) does not match its shifts")
        return out


def x_mult(F: TractorForm) -> TractorForm:
    sc = F.scale
    sig = sc.sigma
    out = F._map(lambda s: s.scaled(sig))
    return out.with_weight(F.omega + sc.alpha)


def ytilde(F: TractorForm) -> TractorForm:
    sc = F.scale
    _require_nondegenerate(sc)
    return anticommutator_DDstar(F).scaled(jc.reciprocal(sc.f))


def h_op(F: TractorForm) -> TractorForm:
    return F.scaled(F.omega + (F.n + 1) / 2)


def y_density(F: TractorForm) -> TractorForm:
    sc = F.scale
    _require_nondegenerate(sc)
    return tractor_laplacian(F).scaled(-jc.reciprocal(sc.f))


def h_density(F: TractorForm) -> TractorForm:
    d = F.n - 1
    return F.scaled(F.omega + (d + 2) / 2)


def operators(alpha: int = 2) -> dict[str, TractorOperator]:
    return {
        "D": TractorOperator("D", -1, 1, D),
        "Dstar": TractorOperator("Dstar", -1, -1, Dstar),
        "I": TractorOperator("I", alpha - 1, 1, I_op),
        "Istar": TractorOperator("Istar", alpha - 1, -1, Istar_op),
        "x": TractorOperator("x", alpha, 0, x_mult),
        "ytilde": TractorOperator("ytilde", -alpha, 0, ytilde),
        "h": TractorOperator("h", 0, 0, h_op),
        "laplacian": TractorOperator("laplacian", -2, 0, tractor_laplacian),
    }


def _rel(a: TractorForm, ref: float) -> float:
    return a.max_abs() / (1 + ref)


def sl2_relations(geom: DeSitter, omega: complex, k: int, trials: int = 3, points: int = 4,
                  scale: str = "LC", seed: int = 0) -> dict[str, float]:
    """Bracket residuals of both sl2 triples, relative to ``1 + |F|``."""
    rng = np.random.default_rng(seed)
    ctx = geom.at(geom.sample_points(rng, points), 2)
    sc = ctx.scale(scale)
    n = geom.n
    rep = {"x_ytilde": 0.0, "h_x": 0.0, "h_ytilde": 0.0, "density_x_y": 0.0,
           "Dstar_I": 0.0, "D_Istar": 0.0}
    for _ in range(trials):
        F = TractorFormField.random(rng, n, k, omega).evaluate(sc)
        ref = F.max_abs()
        h = omega + (n + 1) / 2
        xy = x_mult(ytilde(F)) - ytilde(x_mult(F))
        rep["x_ytilde"] = max(rep["x_ytilde"], _rel(xy - F.scaled(h).truncate(xy.order), ref))
        # [h, x] and [h, ytilde] reduce to weight bookkeeping
        xF = x_mult(F)
        rep["h_x"] = max(rep["h_x"], _rel(h_op(xF) - x_mult(h_op(F)) - xF.scaled(2), ref))
        yF = ytilde(F)
        hy = h_op(yF) - ytilde(h_op(F)).truncate(yF.order)
        rep["h_ytilde"] = max(rep["h_ytilde"], _rel(hy + yF.scaled(2), ref))
        f = sc.f
        if k <= n:
            lhs = Dstar(I_op(F)) + I_op(Dstar(F)) if k >= 1 else Dstar(I_op(F))
            rhs = F.scaled(f * (-(omega + n + 1 - k) / 2)).with_weight(lhs.omega)
            rep["Dstar_I"] = max(rep["Dstar_I"], _rel(lhs - rhs.truncate(lhs.order), ref))
        if k >= 1:
            lhs = D(Istar_op(F))
            if k <= n:
                lhs = lhs + Istar_op(D(F))
            rhs = F.scaled(f * (-(omega + k) / 2)).with_weight(lhs.omega)
            rep["D_Istar"] = max(rep["D_Istar"], _rel(lhs - rhs.truncate(lhs.order), ref))
        g = TractorFormField.random(rng, n, 0, omega).evaluate(sc)
        hd = omega + (n - 1 + 2) / 2
        r = x_mult(y_density(g)) - y_density(x_mult(g))
        rep["density_x_y"] = max(rep["density_x_y"], _rel(r - g.scaled(hd).truncate(r.order), g.max_abs()))
    return rep


def commutator_x_laplacian(F: TractorForm) -> TractorForm:
    """``x Lap F - Lap(x F)`` by composition."""
    return x_mult(tractor_laplacian(F)) - tractor_laplacian(x_mult(F)).with_weight(F.omega + F.scale.alpha - 2)


def commutator_x_laplacian_closed(F: TractorForm) -> TractorForm:
    """``-(sigma^-1 I^2 / alpha)(2 omega + d + alpha) F`` with ``d = n - 1``."""
    sc = F.scale
    a = sc.alpha
    d = F.n - 1
    return F.scaled(sc.f * (-(2 * F.omega + d + a) / a)).with_weight(F.omega + a - 2)


# ---------------------------------------------------------------------------
# potentials and the Proca system

def potential_recover(F: TractorForm, tol: float = 1e-8) -> TractorForm:
    """``A = -2/(f (omega+k)) I* F`` solving ``D A = F`` for closed ``F``."""
    om, k = F.omega, F.k
    if abs(om + k) < 1e-12:
        raise ExcludedWeightError("omega + k = 0 has nontrivial cohomology")
    if F.k <= F.n:
        res = D(F).max_abs() / (1 + F.max_abs())
        if res > tol:
            raise PreconditionError("input is not closed", res)
    if k == 0:
        # D f = (omega f, nabla f) = 0 forces f = 0 when omega != 0
        raise TractorError("closed densities of nonzero weight vanish; there is no potential to recover")
    sc = F.scale
    return Istar_op(F).scaled(jc.reciprocal(sc.f) * (-2 / (om + k)))


def proca_mass_squared(omega: complex, k: int, n: int) -> complex:
    return (omega - 1 + n - k) * (omega + k)


@dataclass
class ProcaReport:
    mass_squared: complex
    gauge_slot_residual: float
    proca_slot_residual: float
    gauge_mu_norm: float
    field_norm: float


def proca_system_check(geom: DeSitter, phi: WeightedFormField, omega: complex, points, order: int = 2,
                       scale: str = "LC") -> ProcaReport:
    """Evaluate ``D* D A`` for ``A = (mu, xi)`` with ``xi = phi sigma^((omega+k)/2)``.

    ``mu`` is the gauge choice ``4 sigma / (f (omega+n+1-k)) delta xi``.  The
    operational slots are compared with ``delta d mu - (omega+k) delta xi`` and
    ``delta d xi + (f sigma^-1/4)(omega-1+n-k) d mu - (f sigma^-1/4) m^2 xi``.
    """
    if not isinstance(geom, DeSitter):
        raise CapabilityError("the Proca reduction is set up on de Sitter")
    n, k = geom.n, phi.k
    if abs(omega + n + 1 - k) < 1e-12:
        raise ExcludedWeightError("omega + n + 1 - k = 0")
    if k == 0 or k > n:
        raise TractorError("the Proca reduction needs 1 <= k <= n")
    ctx = geom.at(np.asarray(points, dtype=float), order + 2)
    sc = ctx.scale(scale)
    w = omega + k
    base = phi.evaluate(sc, order + 2)
    xi = _wf(scalar_mul(jc.power(sc.sigma, w / sc.alpha), base.comps), k, w, sc)
    q = sc.f / sc.sigma / 4
    mu = codifferential_base(xi).scaled(sc.sigma / sc.f * (4 / (omega + n + 1 - k)))
    mu = _wf(mu.comps, k - 1, w, sc)
    A = TractorForm(k, omega, sc, mu, xi.truncate(mu.order))
    out = Dstar(D(A))
    # printed slot formulas
    top = codifferential_base(cov_ext_d(mu)).comps - codifferential_base(xi).comps * w
    m2 = proca_mass_squared(omega, k, n)
    # d xi vanishes identically when xi is a top-degree base form
    ddxi = codifferential_base(cov_ext_d(xi)).comps if k < n else zero_form(sc, k, w, order).comps
    bot = (ddxi
           + scalar_mul(q, cov_ext_d(mu).comps) * (omega - 1 + n - k)
           - scalar_mul(q, xi.comps) * m2)
    ref = A.max_abs()
    gauge_res = (out.mu.comps - top).max_abs() / (1 + ref) if out.mu is not None else 0.0
    proca_res = (out.xi.comps - bot).max_abs() / (1 + ref)
    return ProcaReport(m2, gauge_res, proca_res, mu.max_abs(), xi.max_abs())


# ---------------------------------------------------------------------------
# Minkowski operators

@dataclass
class BethReport:
    residual: float
    xi_squared_residual: float
    divergence_residual: float


def beth_minkowski(geom: MinkowskiCone, tau: JetFieldSpec, m: complex, points,
                   omega: complex = 1) -> BethReport:
    """Check ``beth tau + i m (n-1) rho tau = (box + m^2) tau`` in the Levi-Civita scale.

    ``beth = g^ab (nabla_a + (omega-2)/(n+3) xi_a)(nabla_b + omega/(n+3) xi_b)`` with
    ``xi_a = alpha nabla_a rho / rho^2`` and ``alpha = i m (n+3)``.
    """
    if not isinstance(geom, MinkowskiCone):
        raise CapabilityError("beth is defined on the Minkowski cone")
    n = geom.n
    pts = np.asarray(points, dtype=float)
    ctx = geom.at(pts, 2)
    sc = ctx.lc
    a = 1j * m * (n + 3)
    rho = ctx.named("rho", 3)
    xi = jc.gradient(rho) * a / (rho.truncate(2) * rho.truncate(2))[:, None]
    t = ctx.evaluate(tau, 2)
    ginv = ctx.metric_inv
    grad_t = sc.nabla(t, "", omega)
    inner = grad_t + xi.truncate(1) * t.truncate(1)[:, None] * (omega / (n + 3))
    outer = sc.nabla(inner, "l", omega)
    outer = outer + jet_einsum("Qa,Qb->Qab", xi, inner) * ((omega - 2) / (n + 3))
    beth = jet_einsum("Qab,Qab->Q", outer, ginv)
    box = jet_einsum("Qab,Qab->Q", sc.nabla(grad_t, "l", omega), ginv)
    rho0 = rho.truncate(0)
    lhs = beth + rho0 * t.truncate(0) * (1j * m * (n - 1))
    rhs = box + t.truncate(0) * m ** 2
    scale_ref = 1 + rhs.max_abs()
    xi2 = jet_einsum("Qa,Qa->Q", jet_einsum("Qab,Qb->Qa", ginv, xi), xi)
    div = jet_einsum("Qab,Qab->Q", sc.nabla(xi, "l"), ginv)
    return BethReport(
        residual=(lhs - rhs).max_abs() / scale_ref,
        xi_squared_residual=(xi2 - a * a).max_abs() / (1 + abs(a) ** 2),
        divergence_residual=(div + rho0 * (a * (n - 1))).max_abs() / (1 + abs(a)),
    )
