"""Scalar expressions over chart coordinates and hbar.

Expressions are plain sympy objects. This module adds the pieces the rest of
the package relies on: a canonical symbol table, opaque functions with
registered derivative rules, a domain-checked numeric evaluator and an
equality test that falls back to random sampling when symbolic
simplification is inconclusive.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef

from .errors import DomainError, OpaqueDerivativeError, UnknownVariableError

HBAR = sp.Symbol("hbar", positive=True)

# Coordinates that are positive on their whole chart domain. Every other name
# is created as a real symbol, so parsing "H" and importing a chart yield the
# same object.
_POSITIVE_NAMES = {"hbar", "H", "r", "m"}
_SYMBOLS: dict[str, sp.Symbol] = {"hbar": HBAR}


def sym(name: str) -> sp.Symbol:
    """Return the canonical symbol for ``name``."""
    s = _SYMBOLS.get(name)
    if s is None:
        if name in _POSITIVE_NAMES:
            s = sp.Symbol(name, positive=True)
        else:
            s = sp.Symbol(name, real=True)
        _SYMBOLS[name] = s
    return s


def coordinates(names: str | Sequence[str]) -> tuple[sp.Symbol, ...]:
    """Canonical symbols for a whitespace or comma separated list of names."""
    if isinstance(names, str):
        names = names.replace(",", " ").split()
    return tuple(sym(n) for n in names)


class ComplexExpr(NamedTuple):
    """A complex scalar held as a (real, imaginary) pair of real expressions."""

    re: sp.Expr
    im: sp.Expr

    @property
    def expr(self) -> sp.Expr:
        return self.re + sp.I * self.im

    def is_real(self) -> bool:
        return bool(expr_equal(self.im, 0))

    def real_expr(self) -> sp.Expr:
        """Return the real part, checking the imaginary part vanishes."""
        if not self.is_real():
            raise DomainError("expression has a nonzero imaginary part", self.im)
        return self.re

    def simplify(self) -> "ComplexExpr":
        return ComplexExpr(normalize(self.re), normalize(self.im))

    def __sub__(self, other):
        other = as_complex(other)
        return ComplexExpr(self.re - other.re, self.im - other.im)

    def __add__(self, other):
        other = as_complex(other)
        return ComplexExpr(self.re + other.re, self.im + other.im)


def as_complex(x) -> ComplexExpr:
    if isinstance(x, ComplexExpr):
        return x
    x = sp.sympify(x)
    re, im = x.as_real_imag()
    return ComplexExpr(re, im)


def normalize(e) -> sp.Expr:
    """Canonical-ish form: expanded, with rational parts cancelled."""
    e = sp.expand(sp.sympify(e))
    if e.is_polynomial() or not e.free_symbols:
        return e
    c = sp.cancel(sp.together(e))
    return sp.expand(c) if sp.count_ops(sp.expand(c)) <= sp.count_ops(e) else e


# ---------------------------------------------------------------- opaque symbols

_OPAQUE_CACHE: dict[str, type] = {}


def opaque(
    name: str,
    nargs: int = 1,
    derivatives: Sequence[Callable[..., sp.Expr]] | None = None,
    numeric: Callable[..., float] | None = None,
    formal: bool = False,
):
    """Create an opaque function symbol such as V(q) or T(q, p).

    Args:
        name: Printed name.
        nargs: Arity.
        derivatives: One callable per argument. Each receives the call
            arguments and returns the partial derivative expression.
        numeric: Optional float implementation used by ``evaluate`` and
            ``to_numpy``.
        formal: Keep derivatives as unevaluated ``Derivative`` objects. Used
            for generic placeholders like W(T, H).

    Returns:
        A sympy function class.
    """
    if formal:
        f = sp.Function(name, real=True)
        if numeric is not None:
            f._imp_ = staticmethod(numeric)
        return f

    rules = tuple(derivatives) if derivatives is not None else None

    def fdiff(self, argindex=1):
        if rules is None or rules[argindex - 1] is None:
            raise OpaqueDerivativeError(
                f"no derivative rule for {name} in argument {argindex}")
        return rules[argindex - 1](*self.args)

    attrs = {"nargs": nargs, "fdiff": fdiff, "is_real": True}
    if numeric is not None:
        attrs["_imp_"] = staticmethod(numeric)
    cls = type(name, (sp.Function,), attrs)
    _OPAQUE_CACHE[name] = cls
    return cls


def differentiate(e, var, coords: Sequence[sp.Symbol] | None = None) -> sp.Expr:
    """Partial derivative of ``e``.

    Args:
        e: Expression.
        var: A symbol, a symbol name, or an integer index into ``coords``.
        coords: Coordinate tuple, required when ``var`` is an index.
    """
    if isinstance(var, int):
        if coords is None or not 0 <= var < len(coords):
            raise UnknownVariableError(f"unknown variable index {var}")
        var = coords[var]
    elif isinstance(var, str):
        var = sym(var)
    if coords is not None and var not in coords:
        raise UnknownVariableError(f"{var} is not a coordinate of this chart")
    return sp.diff(sp.sympify(e), var)


# ---------------------------------------------------------------- evaluation

_UNARY = {
    sp.sin: math.sin,
    sp.cos: math.cos,
    sp.tan: math.tan,
    sp.exp: math.exp,
    sp.sinh: math.sinh,
    sp.cosh: math.cosh,
    sp.atan: math.atan,
}


def _bind(point, hbar) -> dict:
    env = {}
    for k, v in dict(point).items():
        env[sym(k) if isinstance(k, str) else k] = float(v)
    if hbar is not None:
        env[HBAR] = float(hbar)
    return env


def evaluate(e, point: Mapping | None = None, hbar: float | None = None) -> float:
    """Evaluate a real expression at a point with domain checks.

    Args:
        e: Expression.
        point: Mapping from symbols (or their names) to floats.
        hbar: Value substituted for hbar.

    Returns:
        The value as a float.

    Raises:
        DomainError: On division by zero, log of a non-positive number, a
            fractional power of a negative number, or a non-finite result.
            The message names the failing subtree.
    """
    env = _bind(point or {}, hbar)
    return _eval(sp.sympify(e), env)


def _eval(e, env) -> float:
    if e.is_Number or isinstance(e, sp.NumberSymbol):
        return float(e)
    if e.is_Symbol:
        if e not in env:
            raise UnknownVariableError(f"no value supplied for {e}")
        return env[e]
    if e.is_Add:
        return math.fsum(_eval(a, env) for a in e.args)
    if e.is_Mul:
        out = 1.0
        for a in e.args:
            out *= _eval(a, env)
        return _finite(out, e)
    if e.is_Pow:
        b = _eval(e.base, env)
        x = e.exp
        if x.is_Integer:
            n = int(x)
            if n < 0 and b == 0.0:
                raise DomainError(f"division by zero in {e}", e)
            return _finite(b ** n, e)
        xv = _eval(x, env)
        if b < 0:
            raise DomainError(f"fractional power of a negative number in {e}", e)
        if b == 0.0 and xv < 0:
            raise DomainError(f"division by zero in {e}", e)
        return _finite(b ** xv, e)
    if isinstance(e, sp.log):
        v = _eval(e.args[0], env)
        if v <= 0:
            raise DomainError(f"log of a non-positive number in {e}", e)
        return math.log(v)
    if isinstance(e, sp.atan2):
        return math.atan2(_eval(e.args[0], env), _eval(e.args[1], env))
    if isinstance(e, sp.Abs):
        return abs(_eval(e.args[0], env))
    for f, g in _UNARY.items():
        if isinstance(e, f):
            try:
                return _finite(g(_eval(e.args[0], env)), e)
            except OverflowError:
                raise DomainError(f"overflow in {e}", e) from None
    imp = getattr(type(e), "_imp_", None)
    if imp is not None:
        return _finite(float(imp(*[_eval(a, env) for a in e.args])), e)
    raise DomainError(f"cannot evaluate {e} numerically", e)


def _finite(v, e):
    if isinstance(v, complex) or not math.isfinite(v):
        raise DomainError(f"non-finite value in {e}", e)
    return v


def to_numpy(e, args: Sequence[sp.Symbol], hbar: float | None = None):
    """Vectorised callable for ``e`` via lambdify.

    Opaque functions with a ``numeric`` implementation are supported.
    """
    e = sp.sympify(e)
    if hbar is not None:
        e = e.subs(HBAR, hbar)
    f = sp.lambdify(tuple(args), e, modules=["numpy"])

    def call(*xs):
        out = f(*xs)
        return np.broadcast_to(out, np.broadcast(*xs).shape) if xs else out

    return call


# ---------------------------------------------------------------- equality

@dataclass(frozen=True)
class Equality:
    """Outcome of ``expr_equal``.

    ``method`` is "exact" when decided by simplification and "probabilistic"
    when decided by random sampling.
    """

    equal: bool
    method: str
    detail: str = ""

    def __bool__(self):
        return self.equal

    @property
    def probabilistic(self) -> bool:
        return self.method == "probabilistic"


def _atoms_to_symbols(e):
    """Replace derivatives and applied opaque functions by fresh symbols."""
    reps = {}
    derivs = sorted(e.atoms(sp.Derivative), key=sp.count_ops, reverse=True)
    for i, d in enumerate(derivs):
        reps[d] = sp.Symbol(f"_d{i}", real=True)
    e = e.xreplace(reps)
    funcs = [f for f in e.atoms(AppliedUndef)]
    funcs += [f for f in e.atoms(sp.Function) if type(f).__name__ in _OPAQUE_CACHE]
    reps2 = {f: sp.Symbol(f"_f{i}", real=True) for i, f in enumerate(set(funcs))}
    return e.xreplace(reps2)


def expr_equal(a, b, *, seed: int = 0, samples: int = 20, rtol: float = 1e-10) -> Equality:
    """Decide whether two expressions are equal.

    Tries ``expand``, then ``cancel``. If neither settles it, evaluates both
    sides at ``samples`` random points with 30 significant digits. Opaque
    function values and their derivatives are sampled as independent
    unknowns, which tests equality as jet expressions.

    Args:
        a: First expression.
        b: Second expression.
        seed: RNG seed for the sampling fallback.
        samples: Number of random points.
        rtol: Relative tolerance per point.
    """
    a = sp.sympify(a)
    b = sp.sympify(b)
    d = sp.expand(a - b)
    if d == 0:
        return Equality(True, "exact")
    try:
        c = sp.cancel(sp.together(d))
    except sp.PolynomialError:
        c = d
    if c == 0:
        return Equality(True, "exact")
    if c.is_number:
        return Equality(False, "exact", f"difference {c}")
    aa, bb = _atoms_to_symbols(sp.Tuple(a, b)).args
    free = sorted(aa.free_symbols | bb.free_symbols, key=str)
    diff = aa - bb
    if diff.is_rational_function(*free):
        if sp.expand(sp.cancel(sp.together(diff))) != 0:
            return Equality(False, "exact", "rational functions differ")
        return Equality(True, "exact")
    rng = random.Random(seed)
    for _ in range(samples):
        pt = {s: sp.Float(rng.uniform(0.3, 1.7), 30) for s in free}
        va = complex(aa.evalf(30, subs=pt))
        vb = complex(bb.evalf(30, subs=pt))
        scale = max(abs(va), abs(vb))
        if abs(va - vb) > rtol * scale and abs(va - vb) > 1e-25:
            return Equality(False, "probabilistic", f"differ at {pt}")
    return Equality(True, "probabilistic")


def is_zero(e) -> bool:
    return bool(expr_equal(e, 0))
