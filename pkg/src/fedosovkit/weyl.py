"""Formal Weyl algebra over a chart.

An element is a finite sum of terms hbar^k y^m with multi-index m over the
fibre variables y^1..y^2n. The first n variables pair with the last n as
(position, momentum). Terms carry a complex coefficient stored as a pair of
real sympy expressions in the base coordinates.

The grading counts hbar twice: a term has degree 2k + |m|. Everything is
truncated at a fixed maximal degree N.

The fibre product multiplies two monomials pair by pair. For one conjugate
pair (y, y') it reads::

    (y^r y'^j) o (y^s y'^k) = sum_t (i hbar / 2)^t  c_t  y^(r+s-t) y'^(k+j-t)

    c_t = r! j! s! k! sum_a (-1)^a / (a! (t-a)! (r-t+a)! (j-a)! (s-a)! (k-t+a)!)

and the pairs combine multiplicatively.
"""
from __future__ import annotations

from functools import lru_cache
from math import factorial
from typing import Iterable, Mapping

import sympy as sp

from .errors import GradingError
from .symbolic import HBAR, ComplexExpr, is_zero

DEFAULT_ORDER = 8

_ZERO = sp.Integer(0)
# i^t as (re, im)
_I_POW = ((1, 0), (0, 1), (-1, 0), (0, -1))


@lru_cache(maxsize=None)
def pair_product(r: int, j: int, s: int, k: int) -> tuple:
    """Contraction table for one conjugate pair.

    Returns:
        Tuple of (t, exponent of y, exponent of y', integer c_t).
    """
    out = []
    for t in range(0, min(r, k) + min(j, s) + 1):
        acc = sp.Rational(0)
        for a in range(max(t - r, t - k, 0), min(j, s, t) + 1):
            acc += sp.Rational(
                (-1) ** a,
                factorial(a) * factorial(t - a) * factorial(r - t + a)
                * factorial(j - a) * factorial(s - a) * factorial(k - t + a))
        if acc != 0:
            c = acc * factorial(r) * factorial(j) * factorial(s) * factorial(k)
            out.append((t, r + s - t, k + j - t, c))
    return tuple(out)


def _cmul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _accumulate(d, key, c):
    old = d.get(key)
    d[key] = c if old is None else (old[0] + c[0], old[1] + c[1])


def _clean(terms: Mapping) -> dict:
    out = {}
    for key, (re, im) in terms.items():
        re = sp.expand(re)
        im = sp.expand(im)
        if re != 0 or im != 0:
            out[key] = (re, im)
    return out


class WeylElement:
    """Truncated element of the formal Weyl algebra.

    Args:
        dim: Number of fibre variables (even).
        terms: Mapping from (k, m) to a coefficient. Coefficients may be a
            sympy expression (taken as real) or a (re, im) pair.
        order: Truncation degree N.
    """

    __slots__ = ("dim", "order", "_terms")

    def __init__(self, dim: int, terms: Mapping | None = None, order: int = DEFAULT_ORDER):
        if dim % 2:
            raise ValueError("fibre dimension must be even")
        self.dim = dim
        self.order = order
        raw = {}
        for (k, m), c in (terms or {}).items():
            m = tuple(m)
            if len(m) != dim:
                raise ValueError(f"multi-index {m} has wrong length for dim {dim}")
            if k < 0:
                raise GradingError(f"negative hbar power {k}")
            if 2 * k + sum(m) > order:
                continue
            if not isinstance(c, tuple):
                c = (sp.sympify(c), _ZERO)
            _accumulate(raw, (k, m), (sp.sympify(c[0]), sp.sympify(c[1])))
        self._terms = _clean(raw)

    # constructors
    @classmethod
    def scalar(cls, c, dim: int, order: int = DEFAULT_ORDER):
        return cls(dim, {(0, (0,) * dim): c}, order)

    @classmethod
    def monomial(cls, m, dim: int, coeff=1, k: int = 0, order: int = DEFAULT_ORDER):
        return cls(dim, {(k, tuple(m)): coeff}, order)

    @classmethod
    def zero(cls, dim: int, order: int = DEFAULT_ORDER):
        return cls(dim, {}, order)

    # access
    @property
    def n(self) -> int:
        return self.dim // 2

    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __getitem__(self, key):
        k, m = key
        return self._terms.get((k, tuple(m)), (_ZERO, _ZERO))

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        return max((2 * k + sum(m) for k, m in self._terms), default=0)

    def component(self, z: int) -> "WeylElement":
        """Homogeneous part of degree z."""
        return self._with({key: c for key, c in self._terms.items()
                           if 2 * key[0] + sum(key[1]) == z})

    def _with(self, terms, order=None):
        out = WeylElement.__new__(WeylElement)
        out.dim = self.dim
        out.order = self.order if order is None else order
        out._terms = _clean(terms)
        return out

    # arithmetic
    def _check(self, other):
        if not isinstance(other, WeylElement) or other.dim != self.dim:
            raise TypeError("operands must be Weyl elements of the same dimension")

    def __add__(self, other):
        self._check(other)
        d = dict(self._terms)
        for key, c in other._terms.items():
            _accumulate(d, key, c)
        return self._with(d, min(self.order, other.order))

    def __neg__(self):
        return self._with({key: (-a, -b) for key, (a, b) in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "WeylElement":
        """Multiply by a scalar; ``c`` may be a (re, im) pair."""
        if not isinstance(c, tuple):
            c = (sp.sympify(c), _ZERO)
        return self._with({key: _cmul(v, c) for key, v in self._terms.items()})

    def __matmul__(self, other):
        return circle_product(self, other)

    def __eq__(self, other):
        if not isinstance(other, WeylElement) or other.dim != self.dim:
            return NotImplemented
        for key in set(self._terms) | set(other._terms):
            a, b = self[key], other[key]
            if not (is_zero(a[0] - b[0]) and is_zero(a[1] - b[1])):
                return False
        return True

    __hash__ = None

    def map_coefficients(self, f) -> "WeylElement":
        return self._with({key: (f(a), f(b)) for key, (a, b) in self._terms.items()})

    def to_expr(self, y: Iterable[sp.Symbol] | None = None) -> sp.Expr:
        """Polynomial expression in fibre symbols (for display and tests)."""
        y = list(y) if y is not None else list(sp.symbols(f"y1:{self.dim + 1}"))
        out = _ZERO
        for (k, m), (a, b) in self._terms.items():
            mono = sp.Mul(*[v ** e for v, e in zip(y, m)])
            out += HBAR ** k * mono * (a + sp.I * b)
        return out

    def dump(self) -> str:
        """Human readable listing, one term per line, sorted by degree."""
        rows = []
        for (k, m), (a, b) in sorted(self._terms.items(),
                                     key=lambda kv: (2 * kv[0][0] + sum(kv[0][1]), kv[0])):
            c = a + sp.I * b
            rows.append(f"deg {2 * k + sum(m)}  hbar^{k}  y^{list(m)}  {c}")
        return "\n".join(rows) if rows else "0"

    def __repr__(self):
        return f"WeylElement(dim={self.dim}, order={self.order}, terms={len(self._terms)})"


class WeylForm:
    """Weyl-algebra valued differential form of degree 0 or 1.

    A degree-1 form holds one element per coordinate slot dx^s.
    """

    def __init__(self, degree: int, slots):
        if degree not in (0, 1):
            raise ValueError("only forms of degree 0 and 1 are supported")
        slots = tuple(slots)
        if degree == 0 and len(slots) != 1:
            raise ValueError("a 0-form has exactly one slot")
        if degree == 1 and len(slots) != slots[0].dim:
            raise ValueError("a 1-form needs one slot per coordinate")
        self.degree = degree
        self.slots = slots

    @property
    def dim(self):
        return self.slots[0].dim

    def __getitem__(self, s):
        return self.slots[s]

    def __add__(self, other):
        return WeylForm(self.degree, [a + b for a, b in zip(self.slots, other.slots)])

    def __sub__(self, other):
        return WeylForm(self.degree, [a - b for a, b in zip(self.slots, other.slots)])

    def is_zero(self):
        return all(s.is_zero() for s in self.slots)


def circle_product(a: WeylElement, b: WeylElement, order: int | None = None) -> WeylElement:
    """Fibrewise product a o b, truncated at degree ``order``.

    Args:
        a: Left factor.
        b: Right factor.
        order: Truncation degree; defaults to the smaller operand order.
    """
    a._check(b)
    N = min(a.order, b.order) if order is None else order
    n = a.n
    out: dict = {}
    for (ka, ma), ca in a._terms.items():
        da = 2 * ka + sum(ma)
        for (kb, mb), cb in b._terms.items():
            # a contraction trades two y's for one hbar, so degree adds up
            if da + 2 * kb + sum(mb) > N:
                continue
            cab = _cmul(ca, cb)
            partial = {(0, (0,) * a.dim): sp.Integer(1)}
            for i in range(n):
                table = pair_product(ma[i], ma[i + n], mb[i], mb[i + n])
                nxt: dict = {}
                for (t0, m0), c0 in partial.items():
                    for t, e1, e2, c in table:
                        m = list(m0)
                        m[i] = e1
                        m[i + n] = e2
                        key = (t0 + t, tuple(m))
                        nxt[key] = nxt.get(key, 0) + c0 * c
                partial = nxt
            for (t, m), c in partial.items():
                k = ka + kb + t
                w = c / sp.Integer(2) ** t
                ip = _I_POW[t % 4]
                _accumulate(out, (k, m), _cmul(cab, (w * ip[0], w * ip[1])))
    res = WeylElement.__new__(WeylElement)
    res.dim = a.dim
    res.order = N
    res._terms = _clean(out)
    return res


def commutator(a: WeylElement, b: WeylElement, order: int | None = None) -> WeylElement:
    return circle_product(a, b, order) - circle_product(b, a, order)


def delta_inverse(form: WeylForm) -> WeylElement:
    """Homotopy inverse of the Koszul differential.

    Sends a 1-form sum_s a_s dx^s to sum_s y^s a_s / (l + 1) termwise, where
    l is the y-degree of the term. A 0-form maps to zero.
    """
    if form.degree == 0:
        e = form.slots[0]
        return WeylElement.zero(e.dim, e.order)
    dim = form.dim
    out: dict = {}
    order = form.slots[0].order
    for s, el in enumerate(form.slots):
        for (k, m), (re, im) in el.items():
            l = sum(m)
            mm = list(m)
            mm[s] += 1
            _accumulate(out, (k, tuple(mm)), (re / (l + 1), im / (l + 1)))
    return WeylElement(dim, out, order)


def sigma(a: WeylElement) -> ComplexExpr:
    """Projection to the y-free part, summing the hbar powers back in."""
    re = _ZERO
    im = _ZERO
    for (k, m), (x, y) in a.items():
        if not any(m):
            re += HBAR ** k * x
            im += HBAR ** k * y
    return ComplexExpr(sp.expand(re), sp.expand(im))


def sigma_of_product(a: WeylElement, b: WeylElement, order: int | None = None) -> ComplexExpr:
    """sigma(a o b) without forming the full product.

    Only pairs of monomials with swapped exponents contribute to the y-free
    part. For one pair the full contraction is
    (y^r y'^s) o (y^s y'^r) -> (-1)^s r! s! (i hbar / 2)^(r+s).
    """
    a._check(b)
    N = min(a.order, b.order) if order is None else order
    n = a.n
    re = _ZERO
    im = _ZERO
    bt = b._terms
    for (ka, ma), ca in a._terms.items():
        mb = tuple(ma[n:]) + tuple(ma[:n])
        for kb in range(0, (N - sum(ma)) // 2 - ka + 1):
            cb = bt.get((kb, mb))
            if cb is None:
                continue
            t = sum(ma)
            if 2 * (ka + kb + t) > N:
                continue
            c = sp.Integer(1)
            for i in range(n):
                r, s = ma[i], ma[i + n]
                c *= (-1) ** s * factorial(r) * factorial(s)
            w = c / sp.Integer(2) ** t
            ip = _I_POW[t % 4]
            x, y = _cmul(_cmul(ca, cb), (w * ip[0], w * ip[1]))
            re += HBAR ** (ka + kb + t) * x
            im += HBAR ** (ka + kb + t) * y
    return ComplexExpr(sp.expand(re), sp.expand(im))
