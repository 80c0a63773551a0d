"""
Weighted differential forms on a chart.

An evaluated form is a :class:`WeightedForm`: a fully antisymmetric array of
jets of shape ``(P, n, ..., n)`` (one axis per form index) together with its
projective weight and the scale whose trivialisation the components use.
Storing every index combination costs a factor ``k!`` but keeps each formula
a plain tensor expression.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import jetcalc as jc
from .geometry import LETTERS, ScaleAt, levi_civita_symbol
from .jetcalc import Jet, JetFieldSpec, jet_einsum


class FormError(Exception):
    """Degree overflow, mismatched scales or other structural misuse."""


# ---------------------------------------------------------------------------
# index helpers

@lru_cache(maxsize=None)
def _signed_perms(k: int):
    out = []
    for perm in itertools.permutations(range(k)):
        inv = sum(1 for i in range(k) for j in range(i + 1, k) if perm[i] > perm[j])
        out.append((perm, -1 if inv % 2 else 1))
    return out


def antisymmetrize(t: Jet, start: int = 1, count: int | None = None) -> Jet:
    """Alternating projection over ``count`` consecutive axes from ``start``.

    Includes the ``1/k!`` so that it is idempotent.
    """
    nd = len(t.shape)
    count = nd - start if count is None else count
    if count <= 1:
        return t
    acc = None
    for perm, sign in _signed_perms(count):
        axes = list(range(nd))
        axes[start:start + count] = [start + p for p in perm]
        term = t.coeffs.transpose(tuple(axes) + (nd,))
        acc = sign * term if acc is None else acc + sign * term
    return Jet(acc / math.factorial(count), t.dim, t.order)


def _broadcast_scalar(s: Jet, rank: int) -> Jet:
    """Reshape a (P,) jet so it multiplies a (P, n^rank) jet."""
    return Jet(s.coeffs.reshape(s.coeffs.shape[:1] + (1,) * rank + s.coeffs.shape[-1:]),
               s.dim, s.order)


def scalar_mul(s: Jet, t: Jet) -> Jet:
    return _broadcast_scalar(s, len(t.shape) - 1) * t


def _letters(k: int, skip: str = "") -> str:
    pool = [c for c in LETTERS if c not in skip]
    if k > len(pool):
        raise FormError("too many indices for the einsum alphabet")
    return "".join(pool[:k])


# ---------------------------------------------------------------------------
# evaluated forms

@dataclass(frozen=True)
class WeightedForm:
    comps: Jet
    k: int
    weight: complex
    scale: ScaleAt

    @property
    def n(self) -> int:
        return self.scale.n

    @property
    def order(self) -> int:
        return self.comps.order

    def __add__(self, other: "WeightedForm") -> "WeightedForm":
        _same_kind(self, other)
        return self._new(self.comps + other.comps)

    def __sub__(self, other: "WeightedForm") -> "WeightedForm":
        _same_kind(self, other)
        return self._new(self.comps - other.comps)

    def __neg__(self) -> "WeightedForm":
        return self._new(-self.comps)

    def scaled(self, c) -> "WeightedForm":
        """Multiply by a constant or a weight-0 scalar jet."""
        if isinstance(c, Jet):
            return self._new(scalar_mul(c, self.comps))
        return self._new(self.comps * c)

    def times_density(self, s: Jet, weight: complex) -> "WeightedForm":
        return WeightedForm(scalar_mul(s, self.comps), self.k, self.weight + weight, self.scale)

    def truncate(self, order: int) -> "WeightedForm":
        return self._new(self.comps.truncate(order))

    def max_abs(self) -> float:
        return self.comps.max_abs()

    def _new(self, comps: Jet) -> "WeightedForm":
        return WeightedForm(comps, self.k, self.weight, self.scale)


def _same_kind(a: WeightedForm, b: WeightedForm) -> None:
    if a.k != b.k:
        raise FormError(f"degree mismatch {a.k} vs {b.k}")
    if a.scale.name != b.scale.name:
        raise FormError(f"scale mismatch {a.scale.name} vs {b.scale.name}")
    if not np.isclose(a.weight, b.weight):
        raise FormError(f"weight mismatch {a.weight} vs {b.weight}")


def zero_form(sc: ScaleAt, k: int, weight: complex, order: int) -> WeightedForm:
    return WeightedForm(sc.ctx.zero((sc.n,) * k, order), k, weight, sc)


@dataclass(frozen=True)
class WeightedVector:
    comps: Jet  # (P, n)
    weight: complex
    scale: ScaleAt


# ---------------------------------------------------------------------------
# fields (expression-tree level)

class WeightedFormField:
    """A k-form field of projective weight ``weight``.

    ``comps`` maps strictly increasing index tuples to component expressions
    in the trivialisation of ``scale``; missing tuples are zero.
    """

    def __init__(self, n: int, k: int, weight: complex, comps: Mapping[tuple, JetFieldSpec],
                 scale: str = "LC"):
        if not 0 <= k <= n:
            raise FormError(f"degree {k} out of range for dimension {n}")
        for idx in comps:
            if len(idx) != k or list(idx) != sorted(set(idx)) or any(not 0 <= i < n for i in idx):
                raise FormError(f"bad component index {idx}")
        self.n, self.k, self.weight, self.scale = n, k, complex(weight), scale
        self.comps = dict(comps)

    def evaluate(self, sc: ScaleAt, order: int | None = None) -> WeightedForm:
        """Components at the context points, converted into the scale ``sc``."""
        ctx = sc.ctx
        order = ctx.order if order is None else order
        n, k = self.n, self.k
        c = np.zeros((len(ctx.points),) + (n,) * k + (jc.n_coeffs(n, order),), dtype=complex)
        for idx, spec in self.comps.items():
            val = ctx.evaluate(spec, order).coeffs
            for perm, sign in _signed_perms(k):
                c[(slice(None),) + tuple(idx[p] for p in perm)] = sign * val
        form = WeightedForm(Jet(c, n, order), k, self.weight, ctx.scale(self.scale))
        return change_scale(form, sc)

    @classmethod
    def random(cls, rng: np.random.Generator, n: int, k: int, weight: complex,
               scale: str = "LC", degree: int = 3) -> "WeightedFormField":
        comps = {idx: jc.random_field(rng, n, degree=degree)
                 for idx in itertools.combinations(range(n), k)}
        return cls(n, k, weight, comps, scale)


def change_scale(form: WeightedForm, target: ScaleAt) -> WeightedForm:
    """Re-express components in another scale's trivialisation.

    Only the density factor changes; index structure is untouched.
    """
    if form.scale.name == target.name:
        return form
    w = form.weight
    src, dst = form.scale.gauge_factor(w, form.order), target.gauge_factor(w, form.order)
    comps = form.comps
    if src is not None:
        comps = scalar_mul(jc.reciprocal(src), comps)
    if dst is not None:
        comps = scalar_mul(dst, comps)
    return WeightedForm(comps, form.k, w, target)


# ---------------------------------------------------------------------------
# algebra

def wedge(a: WeightedForm, b: WeightedForm) -> WeightedForm:
    k, l = a.k, b.k
    if a.scale.name != b.scale.name:
        raise FormError("wedge needs both forms in the same scale")
    if k + l > a.n:
        raise FormError(f"degree {k + l} exceeds dimension {a.n}")
    la = _letters(k)
    lb = _letters(k + l)[k:]
    prod = jet_einsum(f"Q{la},Q{lb}->Q{la}{lb}", a.comps, b.comps)
    fac = math.factorial(k + l) / (math.factorial(k) * math.factorial(l))
    return WeightedForm(antisymmetrize(prod) * fac, k + l, a.weight + b.weight, a.scale)


def contract(x: WeightedVector | Jet, a: WeightedForm, weight: complex = 0) -> WeightedForm:
    """Interior product ``X _| a`` into the first slot."""
    if a.k == 0:
        raise FormError("cannot contract into a 0-form")
    if isinstance(x, WeightedVector):
        comps, weight = x.comps, x.weight
    else:
        comps = x
    rest = _letters(a.k)[1:]
    out = jet_einsum(f"Qa,Qa{rest}->Q{rest}", comps, a.comps)
    return WeightedForm(out, a.k - 1, a.weight + weight, a.scale)


def sharp(a: WeightedForm) -> WeightedVector:
    """Raise the index of a one-form with ``zeta^ab`` (weight -2)."""
    if a.k != 1:
        raise FormError("sharp acts on one-forms")
    return WeightedVector(jet_einsum("Qab,Qb->Qa", a.scale.zeta, a.comps), a.weight - 2, a.scale)


def flat(x: WeightedVector) -> WeightedForm:
    """Lower with ``zeta_ab`` (weight +2)."""
    return WeightedForm(jet_einsum("Qab,Qb->Qa", x.scale.zeta_lower, x.comps), 1, x.weight + 2, x.scale)


def inner(a: WeightedForm, b: WeightedForm) -> Jet:
    """``zeta(a, b)`` with the ``1/k!`` normalisation."""
    if a.k != b.k:
        raise FormError("inner product needs equal degrees")
    up = raise_all(a)
    idx = _letters(a.k)
    return jet_einsum(f"Q{idx},Q{idx}->Q", up, b.comps) / math.factorial(a.k)


def raise_all(a: WeightedForm) -> Jet:
    """All indices raised with ``zeta`` (components only)."""
    t = a.comps
    z = a.scale.zeta
    idx = _letters(a.k)
    for i, li in enumerate(idx):
        src = idx[:i] + "e" + idx[i + 1:]
        t = jet_einsum(f"Q{src},Q{li}e->Q{idx}", t, z)
    return t


def hodge_star_base(a: WeightedForm) -> WeightedForm:
    """Metric Hodge star with ``zeta`` and the weight-n volume form.

    Characterised by ``a ^ *b = zeta(a, b) vol``; maps weight ``w`` k-forms to
    weight ``w + n - 2k`` (n-k)-forms.
    """
    sc = a.scale
    n, k = sc.n, a.k
    eps = levi_civita_symbol(n)
    up = raise_all(a) if k else a.comps
    idx = _letters(n)
    out = up.linear(f"Q{idx[:k]},{idx}->Q{idx[k:]}", eps) / math.factorial(k)
    out = scalar_mul(sc.volume, out)
    return WeightedForm(out, n - k, a.weight + n - 2 * k, sc)


# ---------------------------------------------------------------------------
# differential operators

def nabla_form(a: WeightedForm) -> Jet:
    """``nabla_b a_{a1..ak}`` with the derivative index first."""
    return a.scale.nabla(a.comps, "l" * a.k, a.weight)


def cov_ext_d(a: WeightedForm) -> WeightedForm:
    """Covariant exterior derivative ``(k+1) nabla_[a0 a_a1..ak]``."""
    if a.k + 1 > a.n:
        raise FormError("d of a top-degree form")
    return WeightedForm(antisymmetrize(nabla_form(a)) * (a.k + 1), a.k + 1, a.weight, a.scale)


def divergence_codifferential(a: WeightedForm) -> WeightedForm:
    """``(delta a)_{a2..ak} = -zeta^bc nabla_b a_{c a2..ak}``.

    Agrees with :func:`codifferential_base` only in a scale whose connection
    preserves ``zeta`` (Levi-Civita); kept as an independent route.
    """
    sc = a.scale
    if a.k == 0:
        return WeightedForm(sc.ctx.zero((), a.order - 1), 0, a.weight - 2, sc)
    rest = _letters(a.k + 1, "bc")[:a.k - 1]
    out = -jet_einsum(f"Qbc{rest},Qbc->Q{rest}", nabla_form(a), sc.zeta)
    return WeightedForm(out, a.k - 1, a.weight - 2, sc)


def codifferential_base(a: WeightedForm) -> WeightedForm:
    """Codifferential ``(-1)^(n(k+1)+1) s * d *``; zero on scalars.

    Scale independent. In the Levi-Civita scale it equals
    ``-zeta^bc nabla_b a_{c..}``.
    """
    n, k = a.n, a.k
    if k == 0:
        return WeightedForm(a.scale.ctx.zero((), a.order - 1), 0, a.weight - 2, a.scale)
    sign = (-1) ** (n * (k + 1) + 1) * a.scale.s
    return hodge_star_base(cov_ext_d(hodge_star_base(a))).scaled(sign)


def laplace_de_rham(a: WeightedForm) -> WeightedForm:
    """``{d, delta} a`` (needs two orders of jet budget)."""
    out = None
    if a.k < a.n:
        out = codifferential_base(cov_ext_d(a))
    if a.k > 0:
        dd = cov_ext_d(codifferential_base(a))
        out = dd if out is None else out + dd
    return out


def box(a: WeightedForm) -> WeightedForm:
    """``zeta^ab nabla_a nabla_b a``."""
    sc = a.scale
    dd = sc.nabla(nabla_form(a), "l" * (a.k + 1), a.weight)
    rest = _letters(a.k + 2, "bc")[:a.k]
    out = jet_einsum(f"Qbc{rest},Qbc->Q{rest}", dd, sc.zeta)
    return WeightedForm(out, a.k, a.weight - 2, sc)


def lie_derivative_weighted(x: WeightedVector, a: WeightedForm) -> WeightedForm:
    """``X^b nabla_b a_{a1..} + k (nabla_[a1 X^b) a_|b|a2..]``."""
    sc = a.scale
    k = a.k
    idx = _letters(k + 1, "b")[:k]
    out = jet_einsum(f"Qb,Qb{idx}->Q{idx}", x.comps, nabla_form(a))
    if k:
        dx = sc.nabla(x.comps, "u", x.weight)  # [P, a1, b]
        rest = idx[1:]
        term = jet_einsum(f"Q{idx[0]}b,Qb{rest}->Q{idx}", dx, a.comps)
        out = out + antisymmetrize(term) * k
    return WeightedForm(out, k, a.weight + x.weight, sc)


def curvature_sums(a: WeightedForm, riemann: Jet | None = None) -> Jet:
    """Right-hand side of the weighted Weitzenbock identity.

    ``sum_i zeta^ab R_{a_i a}^c_b a_{..c..}`` plus the double sum
    ``sum_{i != j} zeta^ab R_{a_i a}^c_{a_j} a_{..c(j)..b(i)..}``.
    """
    sc = a.scale
    k = a.k
    r = sc.riemann if riemann is None else riemann
    out = sc.ctx.zero((sc.n,) * k, a.order) if k else sc.ctx.zero((), a.order)
    if k == 0:
        return out
    idx = _letters(k, "abcd")
    rz = jet_einsum("Qiacb,Qab->Qic", r, sc.zeta)
    rzz = jet_einsum("Qiacj,Qab->Qibcj", r, sc.zeta)
    for i in range(k):
        src = idx[:i] + "c" + idx[i + 1:]
        out = out + jet_einsum(f"Q{idx[i]}c,Q{src}->Q{idx}", rz, a.comps)
        for j in range(k):
            if j == i:
                continue
            src = list(idx)
            src[j] = "c"
            src[i] = "b"
            src = "".join(src)
            out = out + jet_einsum(f"Q{idx[i]}bc{idx[j]},Q{src}->Q{idx}", rzz, a.comps)
    return out


def base_weitzenbock_residual(a: WeightedForm) -> Jet:
    """``{d, delta} a + zeta^ab nabla_a nabla_b a`` minus the curvature sums.

    Evaluated in the Levi-Civita scale, where ``zeta`` is parallel.
    """
    a = change_scale(a, a.scale.ctx.lc)
    lhs = laplace_de_rham(a).comps + box(a).comps
    return lhs - curvature_sums(a)
