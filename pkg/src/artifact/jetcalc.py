"""
Truncated multivariate Taylor arithmetic ("jets").

A :class:`Jet` holds the Taylor coefficients ``c_alpha = d^alpha f / alpha!``
of a complex function of ``dim`` chart coordinates, for every multi-index of
total degree at most ``order``.  Coefficients are stored densely along the
last array axis in graded order, so truncating to a lower order is a prefix
slice.  Any leading array axes are "batch" axes: a single Jet object can
carry a whole tensor of jets evaluated at many sample points, and all
arithmetic broadcasts over them.

Test fields are built from small expression trees (:class:`JetFieldSpec`
subclasses) that evaluate to jets at arbitrary batches of chart points.
"""

from __future__ import annotations

import itertools
import json
import math
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

MAX_ORDER = 8


class JetError(Exception):
    """Base class for jet arithmetic failures."""


class StructuralError(JetError):
    """Mismatched dimension or order between operands."""


class DomainError(JetError):
    """Composition evaluated at a singular point of the outer function."""


class OrderExhaustedError(JetError):
    """A derivative was requested from an order-0 jet."""


# ---------------------------------------------------------------------------
# index tables

@lru_cache(maxsize=None)
def multi_indices(dim: int, order: int) -> np.ndarray:
    """All multi-indices of total degree <= order, graded then lexicographic."""
    out = []
    for deg in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(dim), deg):
            alpha = [0] * dim
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    # combinations_with_replacement gives a deterministic order per degree
    return np.array(out, dtype=np.int64).reshape(-1, dim)


@lru_cache(maxsize=None)
def _index_map(dim: int, order: int) -> dict:
    return {tuple(int(v) for v in a): i for i, a in enumerate(multi_indices(dim, order))}


def n_coeffs(dim: int, order: int) -> int:
    return math.comb(dim + order, order)


@lru_cache(maxsize=None)
def _product_table(dim: int, order: int):
    mi = multi_indices(dim, order)
    index = _index_map(dim, order)
    rows = []
    for i, a in enumerate(mi):
        for j, b in enumerate(mi):
            s = a + b
            if s.sum() <= order:
                rows.append((index[tuple(int(v) for v in s)], i, j))
    rows.sort()
    rows = np.array(rows, dtype=np.int64)
    k, left, right = rows[:, 0], rows[:, 1], rows[:, 2]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    return left, right, starts


@lru_cache(maxsize=None)
def _partial_table(dim: int, order: int, axis: int):
    lower = multi_indices(dim, order - 1)
    index = _index_map(dim, order)
    src = np.empty(len(lower), dtype=np.int64)
    fac = np.empty(len(lower))
    for i, a in enumerate(lower):
        b = a.copy()
        b[axis] += 1
        src[i] = index[tuple(int(v) for v in b)]
        fac[i] = b[axis]
    return src, fac


@lru_cache(maxsize=None)
def _degree_starts(dim: int, order: int) -> np.ndarray:
    return np.array([n_coeffs(dim, d) for d in range(-1, order + 1)][1:])


def _reduce_pairs(prod: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return np.add.reduceat(prod, starts, axis=-1)


# ---------------------------------------------------------------------------
# the Jet type

class Jet:
    """Batch of truncated Taylor expansions.

    Parameters
    ----------
    coeffs : array_like
        Complex array whose last axis has length ``n_coeffs(dim, order)``.
    dim : int
        Number of chart coordinates.
    order : int
        Truncation order.
    """

    __slots__ = ("coeffs", "dim", "order")
    __array_priority__ = 1000

    def __init__(self, coeffs, dim: int, order: int):
        if dim < 1 or order < 0:
            raise StructuralError(f"invalid jet shape dim={dim} order={order}")
        if order > MAX_ORDER:
            raise StructuralError(f"jet order {order} exceeds MAX_ORDER={MAX_ORDER}")
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape[-1:] != (n_coeffs(dim, order),):
            raise StructuralError(
                f"expected {n_coeffs(dim, order)} coefficients, got shape {coeffs.shape}")
        self.coeffs = coeffs
        self.dim = dim
        self.order = order

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=complex)
        c = np.zeros(value.shape + (n_coeffs(dim, order),), dtype=complex)
        c[..., 0] = value
        return cls(c, dim, order)

    @classmethod
    def zeros(cls, shape, dim: int, order: int) -> "Jet":
        return cls(np.zeros(tuple(shape) + (n_coeffs(dim, order),), dtype=complex), dim, order)

    @classmethod
    def variable(cls, points, axis: int, order: int) -> "Jet":
        """Jet of the coordinate function ``x[axis]`` at each of ``points``."""
        points = np.asarray(points, dtype=float)
        dim = points.shape[-1]
        j = cls.constant(points[..., axis], dim, order)
        if order >= 1:
            j.coeffs[..., 1 + axis] = 1.0
        return j

    # -- shape helpers ------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def coefficient(self, alpha: Sequence[int]) -> np.ndarray:
        return self.coeffs[..., _index_map(self.dim, self.order)[tuple(alpha)]]

    def as_dict(self) -> dict:
        """Scalar jet as a map multi-index -> coefficient."""
        if self.shape:
            raise StructuralError("as_dict needs a scalar jet")
        return {tuple(int(v) for v in a): complex(c)
                for a, c in zip(multi_indices(self.dim, self.order), self.coeffs)}

    def derivative(self, alpha: Sequence[int]) -> np.ndarray:
        """The actual partial derivative d^alpha f at the base point."""
        fac = math.prod(math.factorial(a) for a in alpha)
        return fac * self.coefficient(alpha)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise OrderExhaustedError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coeffs[..., :n_coeffs(self.dim, order)], self.dim, order)

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.coeffs[idx + (Ellipsis, slice(None))] if Ellipsis not in idx
                   else self.coeffs[idx + (slice(None),)], self.dim, self.order)

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coeffs.reshape(tuple(shape) + (-1,)), self.dim, self.order)

    def moveaxis(self, src, dst) -> "Jet":
        nd = len(self.shape)
        src = np.atleast_1d(src) % nd
        dst = np.atleast_1d(dst) % nd
        return Jet(np.moveaxis(self.coeffs, src, dst), self.dim, self.order)

    def transpose(self, axes) -> "Jet":
        return Jet(self.coeffs.transpose(tuple(axes) + (len(self.shape),)), self.dim, self.order)

    def sum(self, axis) -> "Jet":
        nd = len(self.shape)
        axis = tuple(a % nd for a in np.atleast_1d(axis))
        return Jet(self.coeffs.sum(axis=axis), self.dim, self.order)

    def broadcast_to(self, shape) -> "Jet":
        return Jet(np.broadcast_to(self.coeffs, tuple(shape) + self.coeffs.shape[-1:]),
                   self.dim, self.order)

    def expand(self, axis: int) -> "Jet":
        """Insert a length-1 batch axis."""
        nd = len(self.shape)
        if axis < 0:
            axis += nd + 1
        return Jet(np.expand_dims(self.coeffs, axis), self.dim, self.order)

    def linear(self, subscripts: str, const) -> "Jet":
        """Contract leading axes with a constant array (linear, no products).

        ``subscripts`` follows einsum syntax for the leading axes, e.g.
        ``'...ab,abc->...c'`` with the jet as the first operand.
        """
        lhs, rhs = subscripts.split("->")
        a, b = lhs.split(",")
        sub = f"{a}Z,{b}->{rhs}Z"
        return Jet(np.einsum(sub, self.coeffs, np.asarray(const)), self.dim, self.order)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def copy(self) -> "Jet":
        return Jet(self.coeffs.copy(), self.dim, self.order)

    # -- arithmetic -----------------------------------------------------------
    def _align(self, other):
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise StructuralError(f"dimension mismatch {self.dim} vs {other.dim}")
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, other

    def __add__(self, other):
        a, b = self._align(other)
        if isinstance(b, Jet):
            return Jet(a.coeffs + b.coeffs, a.dim, a.order)
        c = np.array(np.broadcast_to(a.coeffs, np.broadcast_shapes(a.coeffs.shape, np.shape(b) + (1,))))
        c = c.astype(complex, copy=True)
        c[..., 0] += b
        return Jet(c, a.dim, a.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.dim, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._align(other)
        if isinstance(b, Jet):
            left, right, starts = _product_table(a.dim, a.order)
            prod = a.coeffs[..., left] * b.coeffs[..., right]
            return Jet(_reduce_pairs(prod, starts), a.dim, a.order)
        return Jet(a.coeffs * np.asarray(b)[..., None], a.dim, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return Jet(self.coeffs / np.asarray(other)[..., None], self.dim, self.order)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        return power(self, p)

    def __repr__(self) -> str:
        return f"Jet(dim={self.dim}, order={self.order}, shape={self.shape})"


# ---------------------------------------------------------------------------
# public operations

def jet_add(a: Jet, b: Jet) -> Jet:
    """Coefficientwise sum; operands must share dimension and order."""
    _check_pair(a, b)
    return Jet(a.coeffs + b.coeffs, a.dim, a.order)


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Truncated Cauchy product; operands must share dimension and order."""
    _check_pair(a, b)
    return a * b


def _check_pair(a: Jet, b: Jet) -> None:
    if a.dim != b.dim or a.order != b.order:
        raise StructuralError(
            f"jet mismatch: dim {a.dim}/{b.dim}, order {a.order}/{b.order}")


def partial(a: Jet, axis: int) -> Jet:
    """Jet of the partial derivative along ``axis``; order drops by one."""
    if a.order < 1:
        raise OrderExhaustedError("partial derivative of an order-0 jet")
    if not 0 <= axis < a.dim:
        raise StructuralError(f"axis {axis} out of range for dim {a.dim}")
    src, fac = _partial_table(a.dim, a.order, axis)
    return Jet(a.coeffs[..., src] * fac, a.dim, a.order - 1)


def gradient(a: Jet) -> Jet:
    """All first partials, stacked on a new leading axis just before the coefficients."""
    parts = [partial(a, i).coeffs for i in range(a.dim)]
    return Jet(np.stack(parts, axis=-2), a.dim, a.order - 1)


def jet_einsum(subscripts: str, a: Jet, b: Jet) -> Jet:
    """Einsum over the leading axes of two jets with jet multiplication."""
    a, b = a._align(b)
    left, right, starts = _product_table(a.dim, a.order)
    lhs, rhs = subscripts.split("->")
    s1, s2 = lhs.split(",")
    prod = np.einsum(f"{s1}Z,{s2}Z->{rhs}Z", a.coeffs[..., left], b.coeffs[..., right])
    return Jet(_reduce_pairs(prod, starts), a.dim, a.order)


def stack(jets: Sequence[Jet], axis: int = 0) -> Jet:
    order = min(j.order for j in jets)
    dim = jets[0].dim
    nd = len(jets[0].shape)
    if axis < 0:
        axis += nd + 1
    return Jet(np.stack([j.truncate(order).coeffs for j in jets], axis=axis), dim, order)


def compose_univariate(series: np.ndarray, g: Jet) -> Jet:
    """Compose a univariate power series with a jet.

    ``series[..., j]`` is the j-th Taylor coefficient of the outer function
    about ``g.value`` (broadcast over the batch axes of ``g``).
    """
    series = np.asarray(series, dtype=complex)
    if series.shape[-1] < g.order + 1:
        raise StructuralError("outer series shorter than the jet order")
    h = g - g.value
    out = Jet.constant(series[..., g.order], g.dim, g.order)
    for j in range(g.order - 1, -1, -1):
        out = out * h + series[..., j]
    return out


def _power_series(value, p, order):
    value = np.asarray(value, dtype=complex)
    if np.any(value == 0):
        raise DomainError(f"power {p} evaluated at 0")
    coef = np.empty(value.shape + (order + 1,), dtype=complex)
    binom = 1.0 + 0j
    for j in range(order + 1):
        coef[..., j] = binom * value ** (p - j)
        binom = binom * (p - j) / (j + 1)
    return coef


def power(g: Jet, p) -> Jet:
    """``g ** p`` for complex ``p`` (principal branch); integer p >= 0 by products."""
    if isinstance(p, (int, np.integer)) and p >= 0:
        out = Jet.constant(np.ones(g.shape), g.dim, g.order)
        base = g
        while p:
            if p & 1:
                out = out * base
            p >>= 1
            if p:
                base = base * base
        return out
    return compose_univariate(_power_series(g.value, p, g.order), g)


def reciprocal(g: Jet) -> Jet:
    if np.any(np.abs(g.value) < 1e-300):
        raise DomainError("reciprocal of a jet with zero value")
    return compose_univariate(_power_series(g.value, -1, g.order), g)


def sqrt(g: Jet) -> Jet:
    return compose_univariate(_power_series(g.value, 0.5, g.order), g)


def exp(g: Jet) -> Jet:
    e = np.exp(g.value)
    series = np.stack([e / math.factorial(j) for j in range(g.order + 1)], axis=-1)
    return compose_univariate(series, g)


def log(g: Jet) -> Jet:
    v = g.value
    if np.any(v == 0):
        raise DomainError("log of a jet with zero value")
    series = [np.log(v)] + [(-1) ** (j + 1) / (j * v ** j) for j in range(1, g.order + 1)]
    return compose_univariate(np.stack(series, axis=-1), g)


def _trig_series(v, order, shift):
    # derivatives of sin cycle sin, cos, -sin, -cos
    cyc = [np.sin(v), np.cos(v), -np.sin(v), -np.cos(v)]
    return np.stack([cyc[(j + shift) % 4] / math.factorial(j) for j in range(order + 1)], axis=-1)


def sin(g: Jet) -> Jet:
    return compose_univariate(_trig_series(g.value, g.order, 0), g)


def cos(g: Jet) -> Jet:
    return compose_univariate(_trig_series(g.value, g.order, 1), g)


# ---------------------------------------------------------------------------
# field expression trees

NamedScalars = Mapping[str, Callable[[np.ndarray, int], Jet]]


class JetFieldSpec:
    """Node of a scalar-field expression tree evaluable to jets."""

    def evaluate(self, points, order: int, named: NamedScalars | None = None) -> Jet:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self._eval(points, order, named or {})

    def _eval(self, points, order, named) -> Jet:  # pragma: no cover - abstract
        raise NotImplementedError

    def __add__(self, other):
        return Sum([self, _as_spec(other)])

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, JetFieldSpec):
            return Product([self, other])
        return Scale(other, self)

    __rmul__ = __mul__

    def __neg__(self):
        return Scale(-1.0, self)

    def __sub__(self, other):
        return self + (-_as_spec(other))

    def __rsub__(self, other):
        return _as_spec(other) + (-self)


def _as_spec(x) -> JetFieldSpec:
    return x if isinstance(x, JetFieldSpec) else Const(x)


def _dim(points) -> int:
    return points.shape[-1]


class Const(JetFieldSpec):
    def __init__(self, value):
        self.value = complex(value)

    def _eval(self, points, order, named):
        return Jet.constant(np.full(points.shape[:-1], self.value), _dim(points), order)

    def __repr__(self):
        return f"Const({self.value})"


class Coord(JetFieldSpec):
    def __init__(self, axis: int):
        self.axis = int(axis)

    def _eval(self, points, order, named):
        return Jet.variable(points, self.axis, order)

    def __repr__(self):
        return f"Coord({self.axis})"


class Monomial(JetFieldSpec):
    """Product of non-negative integer powers of the coordinates."""

    def __init__(self, exponents: Sequence[int]):
        self.exponents = tuple(int(e) for e in exponents)
        if any(e < 0 for e in self.exponents):
            raise ValueError("monomial exponents must be non-negative")

    def _eval(self, points, order, named):
        out = Jet.constant(np.ones(points.shape[:-1]), _dim(points), order)
        for axis, e in enumerate(self.exponents):
            if e:
                out = out * power(Jet.variable(points, axis, order), e)
        return out

    def __repr__(self):
        return f"Monomial({self.exponents})"


class Trig(JetFieldSpec):
    """``sin(k . x + phase)``; use phase pi/2 for a cosine."""

    def __init__(self, frequency: Sequence[float], phase: float = 0.0):
        self.frequency = np.asarray(frequency, dtype=float)
        self.phase = float(phase)

    def _eval(self, points, order, named):
        arg = Jet.constant(np.full(points.shape[:-1], self.phase), _dim(points), order)
        for axis, k in enumerate(self.frequency):
            if k:
                arg = arg + Jet.variable(points, axis, order) * k
        return sin(arg)

    def __repr__(self):
        return f"Trig({self.frequency.tolist()}, {self.phase})"


class Sum(JetFieldSpec):
    def __init__(self, children: Sequence[JetFieldSpec]):
        self.children = list(children)

    def _eval(self, points, order, named):
        out = Jet.zeros(points.shape[:-1], _dim(points), order)
        for c in self.children:
            out = out + c._eval(points, order, named)
        return out


class Product(JetFieldSpec):
    def __init__(self, children: Sequence[JetFieldSpec]):
        self.children = list(children)

    def _eval(self, points, order, named):
        out = Jet.constant(np.ones(points.shape[:-1]), _dim(points), order)
        for c in self.children:
            out = out * c._eval(points, order, named)
        return out


class Scale(JetFieldSpec):
    def __init__(self, factor, child: JetFieldSpec):
        self.factor = complex(factor)
        self.child = child

    def _eval(self, points, order, named):
        return self.child._eval(points, order, named) * self.factor


class Pow(JetFieldSpec):
    def __init__(self, child: JetFieldSpec, exponent):
        self.child = child
        self.exponent = exponent

    def _eval(self, points, order, named):
        return power(self.child._eval(points, order, named), self.exponent)


class _Unary(JetFieldSpec):
    fn: Callable[[Jet], Jet]

    def __init__(self, child: JetFieldSpec):
        self.child = child

    def _eval(self, points, order, named):
        return type(self).fn(self.child._eval(points, order, named))


class Sin(_Unary):
    fn = staticmethod(sin)


class Cos(_Unary):
    fn = staticmethod(cos)


class Exp(_Unary):
    fn = staticmethod(exp)


class NamedGeometryScalar(JetFieldSpec):
    """Placeholder resolved at evaluation time, e.g. ``'rho'`` or ``'sigma'``."""

    def __init__(self, name: str):
        self.name = name

    def _eval(self, points, order, named):
        if self.name not in named:
            raise KeyError(f"named scalar {self.name!r} is not provided by this geometry")
        return named[self.name](points, order)


def spec_from_json(doc) -> JetFieldSpec:
    """Build an expression tree from the JSON grammar.

    Nodes are objects with an ``op`` key: ``const`` (``value``, real or
    ``[re, im]``), ``coord`` (``index``), ``add`` / ``mul`` (``args``),
    ``pow`` (``base``, ``exponent``), ``sin`` / ``cos`` / ``exp`` (``arg``).
    Bare numbers are constants.
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    if isinstance(doc, (int, float)):
        return Const(doc)
    op = doc.get("op")
    if op == "const":
        v = doc["value"]
        return Const(complex(*v) if isinstance(v, list) else v)
    if op == "coord":
        return Coord(doc["index"])
    if op == "add":
        return Sum([spec_from_json(a) for a in doc["args"]])
    if op == "mul":
        return Product([spec_from_json(a) for a in doc["args"]])
    if op == "pow":
        e = doc["exponent"]
        return Pow(spec_from_json(doc["base"]), int(e) if float(e).is_integer() and e >= 0 else e)
    if op in ("sin", "cos", "exp"):
        return {"sin": Sin, "cos": Cos, "exp": Exp}[op](spec_from_json(doc["arg"]))
    raise ValueError(f"unknown field op {op!r}")


def random_field(rng: np.random.Generator, dim: int, degree: int = 3,
                 n_terms: int = 4, trig: bool = True) -> JetFieldSpec:
    """Random complex polynomial of total degree <= degree plus one trig term."""
    terms: list[JetFieldSpec] = []
    for _ in range(n_terms):
        exps = np.zeros(dim, dtype=int)
        for _ in range(rng.integers(0, degree + 1)):
            exps[rng.integers(dim)] += 1
        coef = complex(rng.normal(), rng.normal())
        terms.append(Scale(coef, Monomial(exps)))
    if trig:
        coef = complex(rng.normal(), rng.normal())
        terms.append(Scale(coef, Trig(rng.normal(size=dim), rng.uniform(0, 2 * np.pi))))
    return Sum(terms)
