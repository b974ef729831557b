"""Fedosov lift and the induced star product on a chart.

With a flat symplectic connection the lift of a function f is the unique
flat section of the Weyl bundle whose y-free part is f. Because the
connection 1-form is quadratic in y, the covariant derivative

    d_g a = da + (i / hbar) [g, a]

preserves degree, and the lift is built degree by degree from
a_{z+1} = delta^{-1}(d_g a_z), starting at a_0 = f.
"""
from __future__ import annotations

from typing import Sequence

import sympy as sp

from .connection import SymplecticConnection, connection_one_form, curvature
from .errors import FlatnessError, GradingError
from .symbolic import HBAR, ComplexExpr, is_zero, opaque
from .weyl import (DEFAULT_ORDER, WeylElement, WeylForm, circle_product, delta_inverse,
                   sigma_of_product)


def truncate_jet(e, lam, order: int = 1):
    """Drop powers of ``lam`` above ``order`` from an expanded expression."""
    e = sp.expand(e)
    return sp.Add(*[t for t in sp.Add.make_args(e) if sp.degree(t, lam) <= order])


class FedosovContext:
    """A chart, a flat connection on it and a truncation order.

    Args:
        connection: Symplectic connection; must be flat.
        order: Truncation degree N of the Weyl algebra.
        assume_flat: Skip the curvature check. Needed for connections built
            from formal functions, where flatness is a relation among
            unknowns rather than an identity.
        jet: Optional (symbol, k). Coefficients are truncated at that power
            of the symbol, and flatness is only required up to it.

    Raises:
        FlatnessError: If the curvature does not vanish.
    """

    def __init__(self, connection: SymplecticConnection, order: int = DEFAULT_ORDER,
                 assume_flat: bool = False, jet: tuple | None = None):
        if order < 2:
            raise ValueError("truncation order N must be at least 2")
        self.connection = connection
        self.order = order
        self.jet = jet
        if not assume_flat:
            K = curvature(connection, simplify=jet is None)
            bad = {}
            for key, v in K.items():
                if jet is not None:
                    v = truncate_jet(v, *jet)
                if not is_zero(v):
                    bad[key] = v
            if bad:
                raise FlatnessError(f"connection is not flat: {bad}")
        self.gamma_form = connection_one_form(connection, order)
        self._lifts: dict = {}

    @property
    def coords(self):
        return self.connection.coords

    @property
    def dim(self):
        return self.connection.dim

    def _reduce(self, e):
        if self.jet is not None:
            return truncate_jet(e, *self.jet)
        return e


def covariant_exterior_derivative(a: WeylElement, ctx: FedosovContext) -> WeylForm:
    """d_g a = da + (i / hbar)[g, a] as a Weyl-valued 1-form.

    Raises:
        GradingError: If a term with a negative power of hbar would survive.
    """
    dim = ctx.dim
    slots = []
    for s in range(dim):
        x = ctx.coords[s]
        terms: dict = {}
        for key, (re, im) in a.items():
            dre, dim_ = sp.diff(re, x), sp.diff(im, x)
            if dre != 0 or dim_ != 0:
                terms[key] = (dre, dim_)
        g = ctx.gamma_form[s]
        if not g.is_zero():
            comm = circle_product(g, a, order=10 ** 6) - circle_product(a, g, order=10 ** 6)
            for (k, m), (re, im) in comm.items():
                if k == 0:
                    if is_zero(re) and is_zero(im):
                        continue
                    raise GradingError(f"hbar^-1 term survives at y^{m}")
                # (i / hbar) (re + i im) = -im + i re, one power of hbar less
                old = terms.get((k - 1, m), (0, 0))
                terms[(k - 1, m)] = (old[0] - im, old[1] + re)
        slots.append(WeylElement(dim, {key: (ctx._reduce(u), ctx._reduce(v))
                                       for key, (u, v) in terms.items()}, a.order))
    return WeylForm(1, slots)


def koszul_delta(a: WeylElement) -> WeylForm:
    """delta a: slot s holds the y^s-derivative of a."""
    slots = []
    for s in range(a.dim):
        terms = {}
        for (k, m), (re, im) in a.items():
            if m[s]:
                mm = list(m)
                mm[s] -= 1
                terms[(k, tuple(mm))] = (re * m[s], im * m[s])
        slots.append(WeylElement(a.dim, terms, a.order))
    return WeylForm(1, slots)


def fedosov_lift(f, ctx: FedosovContext, degree: int | None = None) -> WeylElement:
    """Flat section with y-free part ``f``, complete through ``degree``.

    Args:
        f: Scalar expression in the chart coordinates.
        ctx: Fedosov context.
        degree: Highest homogeneous degree to build (defaults to N).
    """
    f = sp.sympify(f)
    degree = ctx.order if degree is None else min(degree, ctx.order)
    key = (f, degree)
    if key in ctx._lifts:
        return ctx._lifts[key]
    dim = ctx.dim
    total = WeylElement.scalar(f, dim, ctx.order)
    cur = total
    for _ in range(degree):
        cur = delta_inverse(covariant_exterior_derivative(cur, ctx))
        if cur.is_zero():
            break
        total = total + cur
    ctx._lifts[key] = total
    return total


def fibre_star_product(f, g, ctx: FedosovContext) -> ComplexExpr:
    """sigma(lift(f) o lift(g)) taken in the stated order."""
    half = ctx.order // 2
    # lift terms above degree N/2 only feed hbar powers beyond the truncation
    a = fedosov_lift(f, ctx, half)
    b = fedosov_lift(g, ctx, half)
    r = sigma_of_product(a, b, ctx.order)
    return ComplexExpr(ctx._reduce(r.re), ctx._reduce(r.im))


def star_product(f, g, ctx: FedosovContext) -> ComplexExpr:
    """Star product f * g on the chart, correct through hbar^(N/2).

    The fibre product realises the opposite Poisson orientation, so the
    projection is taken on the reversed product. With this choice the
    Darboux chart reproduces the Moyal product, q * p = qp - i hbar / 2.
    """
    return fibre_star_product(g, f, ctx)


def moyal_bracket(f, g, ctx: FedosovContext) -> ComplexExpr:
    """(f * g - g * f) / (i hbar); real for real f and g."""
    a = star_product(f, g, ctx)
    b = star_product(g, f, ctx)
    d = a - b
    return ComplexExpr(sp.expand(d.im / HBAR), sp.expand(-d.re / HBAR))


def eigen_equation_residuals(h, w, e, ctx: FedosovContext) -> tuple[sp.Expr, sp.Expr]:
    """Residuals of the pair Re(h * w) = e w, Im(h * w) = 0."""
    r = star_product(h, w, ctx)
    return sp.expand(r.re - e * w), sp.expand(r.im)


def extract_theta_coefficients(ctx: FedosovContext, max_r: int = 2,
                               w_name: str = "W") -> dict:
    """Coefficients of the eigenvalue equations in a 2-d time-energy chart.

    The chart coordinates are (T, H) with H itself the Hamiltonian. Writing
    H * W for a generic function W(T, H),

        Re(H * W) = H W + sum_{r even} hbar^r Theta_rst d_T^s d_H^t W
        (2 / hbar) Im(H * W) = sum_{r odd} hbar^(r-1) Theta_rst d_T^s d_H^t W

    Args:
        ctx: Context on a 2-dimensional chart.
        max_r: Highest power of hbar to report; needs 2 * max_r <= N.
        w_name: Name of the formal function.

    Returns:
        Mapping (r, s, t) -> Theta_rst for 1 <= r <= max_r, nonzero only.
    """
    if ctx.dim != 2:
        raise ValueError("Theta coefficients need a 2-dimensional (T, H) chart")
    if 2 * max_r > ctx.order:
        raise ValueError(f"order N={ctx.order} only resolves hbar^{ctx.order // 2}")
    T, H = ctx.coords
    W = opaque(w_name, formal=True)(T, H)
    prod = star_product(H, W, ctx)
    out = {}
    for part, weight, parity in ((prod.re, 1, 0), (prod.im, 2, 1)):
        for r, s, t, c in _jet_terms(part, W, T, H):
            if r == 0 or r % 2 != parity or r > max_r:
                continue
            key = (r, s, t)
            out[key] = out.get(key, 0) + weight * c
    return {k: sp.simplify(v) for k, v in sorted(out.items()) if not is_zero(v)}


def _jet_terms(e, W, T, H):
    for term in sp.Add.make_args(sp.expand(e)):
        if term == 0:
            continue
        atoms = [a for a in term.atoms(sp.Derivative) if a.expr == W]
        if not atoms:
            atom = W
            s = t = 0
        else:
            atom = atoms[0]
            counts = dict(atom.variable_count)
            s, t = int(counts.get(T, 0)), int(counts.get(H, 0))
        rest = term / atom
        r = sp.degree(rest, HBAR) if rest.has(HBAR) else 0
        yield r, s, t, rest / HBAR ** r


def eigen_equations_from_theta(theta: dict, w, e, coords: Sequence) -> tuple:
    """Assemble the real and imaginary equations from Theta coefficients."""
    T, H = coords
    re = H * w - e * w
    im = sp.Integer(0)
    for (r, s, t), c in theta.items():
        d = sp.diff(w, *([T] * s + [H] * t)) if s + t else w
        if r % 2 == 0:
            re += HBAR ** r * c * d
        else:
            im += HBAR ** (r - 1) * c * d
    return sp.expand(re), sp.expand(im)
