"""Symplectic connections and their transformation under canonical maps.

Index conventions: coefficients gamma_ijk are addressed with 1-based index
triples, matching the usual notation gamma_111, gamma_122 and so on. The
symplectic form is omega = sum dq^a ^ dp^a with coordinates ordered
(q^1..q^n, p^1..p^n), so omega_{a, a+n} = 1 and the inverse matrix has
omega^{a, a+n} = -1.
"""
from __future__ import annotations

import itertools
import json
from typing import Mapping, Sequence

import sympy as sp

from .errors import NonCanonicalError
from .prefix import parse, to_prefix
from .symbolic import coordinates, expr_equal, is_zero, opaque
from .weyl import DEFAULT_ORDER, WeylElement, WeylForm


def omega_matrix(dim: int) -> sp.Matrix:
    n = dim // 2
    w = sp.zeros(dim, dim)
    for a in range(n):
        w[a, a + n] = 1
        w[a + n, a] = -1
    return w


def omega_inverse(dim: int) -> sp.Matrix:
    return -omega_matrix(dim)


def _simplify(e):
    e = sp.sympify(e)
    if e == 0:
        return e
    s = sp.simplify(sp.cancel(sp.together(sp.expand(e))))
    return s


class SymplecticConnection:
    """Totally symmetric coefficients gamma_ijk on a 2n-dimensional chart.

    Args:
        coords: Coordinate symbols ordered (q^1..q^n, p^1..p^n).
        gamma: Mapping from 1-based index triples to expressions. Any
            ordering of a triple is accepted; triples not listed are zero.
            When ``check_symmetry`` is set, conflicting permutations raise.
    """

    def __init__(self, coords: Sequence[sp.Symbol], gamma: Mapping | None = None,
                 check_symmetry: bool = True):
        self.coords = tuple(coords)
        dim = len(self.coords)
        if dim % 2:
            raise ValueError("a symplectic chart needs an even number of coordinates")
        table: dict = {}
        for key, value in (gamma or {}).items():
            key = tuple(int(i) for i in key)
            if len(key) != 3 or not all(1 <= i <= dim for i in key):
                raise ValueError(f"bad index triple {key}")
            value = sp.sympify(value)
            skey = tuple(sorted(key))
            if skey in table:
                if check_symmetry and not expr_equal(table[skey], value):
                    raise NonCanonicalError(
                        f"gamma{key} = {value} conflicts with gamma{skey} = {table[skey]}")
                continue
            table[skey] = value
        self._gamma = {k: v for k, v in table.items() if v != 0}

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def n(self) -> int:
        return self.dim // 2

    def __getitem__(self, ijk) -> sp.Expr:
        return self._gamma.get(tuple(sorted(ijk)), sp.Integer(0))

    def gamma(self, i: int, j: int, k: int) -> sp.Expr:
        return self[(i, j, k)]

    def components(self) -> dict:
        """Nonzero coefficients keyed by sorted 1-based triples."""
        return dict(sorted(self._gamma.items()))

    def is_zero(self) -> bool:
        return all(is_zero(v) for v in self._gamma.values())

    def map(self, f) -> "SymplecticConnection":
        return SymplecticConnection(self.coords, {k: f(v) for k, v in self._gamma.items()})

    def __add__(self, other):
        keys = set(self._gamma) | set(other._gamma)
        return SymplecticConnection(self.coords, {k: self[k] + other[k] for k in keys})

    def equals(self, other) -> bool:
        if other.coords != self.coords:
            return False
        keys = set(self._gamma) | set(other._gamma)
        return all(expr_equal(self[k], other[k]) for k in keys)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "coords": [c.name for c in self.coords],
            "gamma": [{"ijk": list(k), "expr": to_prefix(v)}
                      for k, v in self.components().items()],
        }

    @classmethod
    def from_json(cls, data) -> "SymplecticConnection":
        if isinstance(data, str):
            data = json.loads(data)
        coords = coordinates(data["coords"]) if "coords" in data else coordinates(
            [f"x{i + 1}" for i in range(data["dim"])])
        if len(coords) != data["dim"]:
            raise ValueError("coordinate list does not match dim")
        return cls(coords, {tuple(g["ijk"]): parse(g["expr"]) for g in data["gamma"]})

    def __repr__(self):
        body = ", ".join(f"g{''.join(map(str, k))}={v}" for k, v in self.components().items())
        return f"SymplecticConnection({', '.join(c.name for c in self.coords)}; {body})"


def zero_connection(coords) -> SymplecticConnection:
    return SymplecticConnection(coords, {})


def generic_connection(coords, prefix: str = "g") -> SymplecticConnection:
    """Connection whose independent coefficients are formal functions.

    The coefficient gamma_ijk becomes an undefined function named e.g. g112
    of all coordinates. Useful for deriving coefficient formulas.
    """
    coords = tuple(coords)
    dim = len(coords)
    gamma = {}
    for key in itertools.combinations_with_replacement(range(1, dim + 1), 3):
        f = opaque(prefix + "".join(map(str, key)), formal=True)
        gamma[key] = f(*coords)
    return SymplecticConnection(coords, gamma)


def connection_one_form(c: SymplecticConnection, order: int = DEFAULT_ORDER) -> WeylForm:
    """Weyl-valued 1-form with slot k equal to (1/2) gamma_ijk y^i y^j."""
    dim = c.dim
    slots = []
    for k in range(dim):
        terms: dict = {}
        for i in range(dim):
            for j in range(dim):
                g = c[(i + 1, j + 1, k + 1)]
                if g == 0:
                    continue
                m = [0] * dim
                m[i] += 1
                m[j] += 1
                key = (0, tuple(m))
                terms[key] = terms.get(key, 0) + g / 2
        slots.append(WeylElement(dim, terms, order))
    return WeylForm(1, slots)


def curvature(c: SymplecticConnection, simplify: bool = True) -> dict:
    """Curvature tensor with all indices lowered.

    R_ijkl = d_k g_ijl - d_l g_ijk + w^pq (g_ikp g_qjl - g_ilp g_qjk).

    Returns:
        Mapping from 1-based (i, j, k, l) to expression, nonzero entries only.
    """
    dim = c.dim
    winv = omega_inverse(dim)
    x = c.coords
    out = {}
    for i, j, k, l in itertools.product(range(1, dim + 1), repeat=4):
        if k >= l:
            continue
        e = sp.diff(c[(i, j, l)], x[k - 1]) - sp.diff(c[(i, j, k)], x[l - 1])
        for p in range(1, dim + 1):
            for q in range(1, dim + 1):
                w = winv[p - 1, q - 1]
                if w != 0:
                    e += w * (c[(i, k, p)] * c[(q, j, l)] - c[(i, l, p)] * c[(q, j, k)])
        e = _simplify(e) if simplify else sp.expand(e)
        if simplify and not is_zero(e) or not simplify and e != 0:
            out[(i, j, k, l)] = e
            out[(i, j, l, k)] = -e
    return dict(sorted(out.items()))


def is_flat(c: SymplecticConnection) -> bool:
    return not curvature(c)


def transform_connection(c: SymplecticConnection, chart, simplify: bool = True,
                         check: bool = True) -> SymplecticConnection:
    """Coefficients of ``c`` in the new coordinates of a canonical chart.

    gamma'_ijk = (dx^a/dX^i)(dx^b/dX^j)(dx^c/dX^k) gamma_abc
                 + w_rd (dx^r/dX^i) d^2 x^d / dX^j dX^k

    When the chart only knows the forward map X(x), derivatives along the new
    coordinates are taken through the inverse Jacobian and the result is
    expressed in the old coordinates.

    Args:
        c: Connection in the chart's old coordinates.
        chart: A ``ChartMap``.
        simplify: Simplify each coefficient.
        check: Verify total symmetry of the result; a failure means the map
            is not canonical.
    """
    if tuple(chart.old_coords) != c.coords:
        raise ValueError("connection and chart use different coordinates")
    dim = c.dim
    w = omega_matrix(dim)
    if chart.inverse is not None:
        X = tuple(chart.new_coords)
        xs = tuple(chart.inverse)
        K = sp.Matrix(dim, dim, lambda a, i: sp.diff(xs[a], X[i]))
        sub = dict(zip(c.coords, xs))

        def D(expr, j):
            return sp.diff(expr, X[j])

        def old(expr):
            return sp.sympify(expr).subs(sub, simultaneous=True)

        coords_out = X
    else:
        x = c.coords
        J = sp.Matrix(dim, dim, lambda i, a: sp.diff(chart.forward[i], x[a]))
        K = J.inv()
        K = K.applyfunc(lambda e: sp.cancel(sp.together(e)))

        def D(expr, j):
            return sum(K[l, j] * sp.diff(expr, x[l]) for l in range(dim))

        def old(expr):
            return sp.sympify(expr)

        coords_out = tuple(chart.new_coords)
    full = {}
    for i, j, k in itertools.product(range(dim), repeat=3):
        e = sp.Integer(0)
        for a, b, cc in itertools.product(range(dim), repeat=3):
            g = c[(a + 1, b + 1, cc + 1)]
            if g != 0:
                e += K[a, i] * K[b, j] * K[cc, k] * old(g)
        for r in range(dim):
            for d in range(dim):
                if w[r, d] != 0 and K[r, i] != 0:
                    e += w[r, d] * K[r, i] * D(K[d, k], j)
        full[(i + 1, j + 1, k + 1)] = _simplify(e) if simplify else e
    if check:
        for key, v in full.items():
            for perm in set(itertools.permutations(key)):
                if perm != key and not expr_equal(v, full[perm]):
                    raise NonCanonicalError(
                        f"transformed coefficients are not symmetric at {key}; "
                        "the map is not canonical")
    gamma = {k: v for k, v in full.items() if k == tuple(sorted(k))}
    out = SymplecticConnection(coords_out, gamma, check_symmetry=False)
    if chart.inverse is None:
        out.expressed_in = c.coords
    return out


def flat_connection_in_chart(chart, simplify: bool = True) -> SymplecticConnection:
    """Image of the zero connection of a Darboux chart under ``chart``."""
    return transform_connection(zero_connection(chart.old_coords), chart, simplify)
