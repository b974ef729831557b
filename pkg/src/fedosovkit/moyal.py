"""The Moyal product on flat (q, p) phase space.

Two representations are provided. ``moyal_differential`` expands the
bidifferential series symbolically:

    A * B = A exp(-(i hbar / 2) P) B,   P = <d_q d_p> - <d_p d_q>

so that q * p = qp - i hbar / 2. ``moyal_integral`` evaluates the same
product on sampled grids through the operator kernels of the two factors,
which is equivalent to the four-fold Fourier integral but costs O(n^3).
"""
from __future__ import annotations

import math
import warnings
from math import comb, factorial

import numpy as np
import sympy as sp
from scipy import signal

from .errors import (BoundaryMassWarning, GridError, NormalizationWarning,
                     ResolutionWarning)
from .grid import GridFunction
from .symbolic import HBAR, ComplexExpr, coordinates, to_numpy

BOUNDARY_TOL = 1e-10


# ---------------------------------------------------------------- symbolic series

def poisson_power(a, b, r: int, coords=None) -> sp.Expr:
    """a P^r b for the bidifferential Poisson operator."""
    q, p = coords if coords is not None else coordinates("q p")
    out = sp.Integer(0)
    for k in range(r + 1):
        da = sp.diff(a, *([q] * (r - k) + [p] * k)) if r else a
        if da == 0:
            continue
        db = sp.diff(b, *([p] * (r - k) + [q] * k)) if r else b
        out += comb(r, k) * (-1) ** k * da * db
    return out


def moyal_differential(a, b, order: int, coords=None) -> ComplexExpr:
    """Truncated series sum_{r <= order} (1/r!) (-i hbar/2)^r a P^r b.

    Exact whenever the series terminates before ``order``, e.g. when one
    factor is a polynomial of degree at most ``order``.

    Args:
        a: Left factor, an expression in (q, p).
        b: Right factor.
        order: Highest power of hbar kept.
        coords: Optional (q, p) symbols; several pairs for higher dimension.
    """
    a, b = sp.sympify(a), sp.sympify(b)
    if coords is not None and len(coords) > 2:
        return _moyal_multi(a, b, order, coords)
    re = sp.Integer(0)
    im = sp.Integer(0)
    for r in range(order + 1):
        term = poisson_power(a, b, r, coords) * (HBAR / 2) ** r / factorial(r)
        # (-i)^r
        phase = r % 4
        if phase == 0:
            re += term
        elif phase == 1:
            im -= term
        elif phase == 2:
            re -= term
        else:
            im += term
    return ComplexExpr(sp.expand(re), sp.expand(im))


def _moyal_multi(a, b, order, coords):
    # P = sum over conjugate pairs; expand P^r as ordered choices of a pair
    n = len(coords) // 2
    pairs = [(coords[i], coords[i + n]) for i in range(n)]
    re = sp.Integer(0)
    im = sp.Integer(0)
    acc = [(a, b, 1)]
    for r in range(order + 1):
        term = sum(c * la * rb for la, rb, c in acc) * (HBAR / 2) ** r / factorial(r)
        phase = r % 4
        if phase == 0:
            re += term
        elif phase == 1:
            im -= term
        elif phase == 2:
            re -= term
        else:
            im += term
        nxt = []
        for la, rb, c in acc:
            for q, p in pairs:
                nxt.append((sp.diff(la, q), sp.diff(rb, p), c))
                nxt.append((sp.diff(la, p), sp.diff(rb, q), -c))
        acc = [t for t in nxt if t[0] != 0 and t[1] != 0]
    return ComplexExpr(sp.expand(re), sp.expand(im))


def moyal_bracket_differential(a, b, order: int, coords=None) -> sp.Expr:
    """(a * b - b * a) / (i hbar) from the truncated series."""
    x = moyal_differential(a, b, order, coords)
    y = moyal_differential(b, a, order, coords)
    return sp.expand((x.im - y.im) / HBAR)


# ---------------------------------------------------------------- grid product

def _check_boundary(*grids):
    for g in grids:
        frac = g.boundary_fraction()
        if frac > BOUNDARY_TOL:
            warnings.warn(
                f"grid function does not decay at the window edge: boundary/peak = {frac:.3e}",
                BoundaryMassWarning, stacklevel=3)


def _half_grid(a: GridFunction) -> np.ndarray:
    """Values at q_min + k dq / 2, k = 0 .. 2 n_q - 2, by spectral interpolation."""
    up = signal.resample(a.data, 2 * a.n_q, axis=0)
    return up[: 2 * a.n_q - 1]


def operator_kernel(a: GridFunction) -> np.ndarray:
    """Kernel K(q_a, q_b) of the operator with phase-space symbol ``a``.

    K(x, y) = (1 / 2 pi hbar) int a((x + y) / 2, p) exp(i (y - x) p / hbar) dp,
    with the sign fixed so that composing kernels reproduces the product
    convention q * p = qp - i hbar / 2.
    """
    n = a.n_q
    h = a.hbar
    centers = _half_grid(a)  # index c = a + b
    d = np.arange(-(n - 1), n)  # index b - a
    E = np.exp(1j * np.outer(a.p, d * a.dq) / h) * _trap_weights(a.n_p, a.dp)[:, None]
    F = centers @ E / (2 * math.pi * h)  # F[c, d + n - 1]
    ia, ib = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return F[ia + ib, ib - ia + n - 1]


def symbol_from_kernel(K: np.ndarray, like: GridFunction) -> np.ndarray:
    """Inverse of ``operator_kernel`` sampled on the grid of ``like``.

    a(q_i, p) = sum_j K(q_i - j dq, q_i + j dq) exp(-i 2 j dq p / hbar) 2 dq.
    """
    n = like.n_q
    h = like.hbar
    J = (n - 1) // 2
    js = np.arange(-J, J + 1)
    i = np.arange(n)[:, None]
    lo = i - js[None, :]
    hi = i + js[None, :]
    ok = (lo >= 0) & (hi < n)
    G = np.where(ok, K[np.clip(lo, 0, n - 1), np.clip(hi, 0, n - 1)], 0.0)
    E = np.exp(-1j * np.outer(2 * js * like.dq, like.p) / h) * 2 * like.dq
    return G @ E


def _trap_weights(n, d):
    w = np.full(n, d)
    w[[0, -1]] *= 0.5
    return w


def moyal_integral(a: GridFunction, b: GridFunction) -> GridFunction:
    """Grid evaluation of a * b.

    The product is computed as the composition of the operator kernels of
    the factors followed by the inverse symbol transform. The returned grid
    is complex; for real a and b its imaginary part carries the bracket.

    Raises:
        GridError: If the grids differ.

    Warns:
        BoundaryMassWarning: If a factor has not decayed at the window edge.
    """
    a.require_same_grid(b)
    _check_boundary(a, b)
    Lq = max(abs(a.q_min), abs(a.q_max))
    Lp = max(abs(a.p_min), abs(a.p_max))
    if 4 * Lq * Lp > math.pi * a.hbar * (a.n_q - 1):
        warnings.warn("grid too coarse for the product: need 4 Lq Lp < pi hbar n",
                      ResolutionWarning, stacklevel=2)
    Ka = operator_kernel(a)
    Kb = operator_kernel(b)
    Kc = Ka @ Kb * a.dq
    return a.with_data(symbol_from_kernel(Kc, a))


def moyal_integral_direct(a: GridFunction, b: GridFunction, points) -> np.ndarray:
    """Reference evaluation of the four-fold Fourier integral at a few points.

    (A * B)(q, p) = 1/(pi hbar)^2 int A(q', p') B(q'', p'')
        exp[-(2i/hbar) ((q' - q)(p'' - p) - (q'' - q)(p' - p))]

    The overall sign of the exponent is the one that agrees with the
    series, q * p = qp - i hbar / 2. With the opposite sign the integral
    returns the complex conjugate product.

    The sum over the four grid variables is factorised into matrix
    products, O(n^3) per point. Only suitable for small grids.
    """
    a.require_same_grid(b)
    h = a.hbar
    q, pv = a.q, a.p
    wq = _trap_weights(a.n_q, a.dq)
    wp = _trap_weights(a.n_p, a.dp)
    A = a.data * wq[:, None] * wp[None, :]
    B = b.data * wq[:, None] * wp[None, :]
    out = []
    for q0, p0 in points:
        # X[q', q''] = sum_p' A(q', p') exp((2i/h)(q'' - q0)(p' - p0))
        E1 = np.exp(2j * np.outer(pv - p0, q - q0) / h)
        X = A @ E1
        Y = X @ B  # Y[q', p'']
        E2 = np.exp(-2j * np.outer(q - q0, pv - p0) / h)
        out.append(np.sum(Y * E2) / (math.pi * h) ** 2)
    return np.array(out)


def moyal_bracket(a, b, order: int | None = None, coords=None):
    """(a * b - b * a) / (i hbar) for grids or symbolic expressions.

    Grids return a real GridFunction. Expressions need ``order``.
    """
    if isinstance(a, GridFunction):
        ab = moyal_integral(a, b)
        ba = moyal_integral(b, a)
        d = (ab.data - ba.data) / (1j * a.hbar)
        return a.with_data(d.real)
    if order is None:
        raise ValueError("a series order is needed for symbolic brackets")
    return moyal_bracket_differential(a, b, order, coords)


def expectation(w: GridFunction, a, coords=None, norm_tol: float = 1e-3) -> float:
    """Mean value int w a dq dp by the trapezoid rule.

    Warns:
        NormalizationWarning: If int w differs from 1 by more than
            ``norm_tol``; the warning message carries the integral.
    """
    total = float(np.real(w.integral()))
    if abs(total - 1) > norm_tol:
        warnings.warn(f"state is not normalized: integral = {total:.6g}",
                      NormalizationWarning, stacklevel=2)
    q, p = coords if coords is not None else coordinates("q p")
    Q, P = w.mesh()
    vals = np.broadcast_to(to_numpy(a, (q, p), w.hbar)(Q, P), Q.shape)
    return float(np.real(w.with_data(w.data * vals).integral()))


# ---------------------------------------------------------------- eigen-equations

def spectral_derivative(g: GridFunction, axis: int, order: int) -> np.ndarray:
    """order-th derivative along q (axis 0) or p (axis 1) by FFT."""
    n = g.data.shape[axis]
    d = g.dq if axis == 0 else g.dp
    k = 2 * math.pi * np.fft.fftfreq(n, d)
    shape = [1, 1]
    shape[axis] = n
    F = np.fft.fft(g.data, axis=axis)
    mult = (1j * k) ** order
    if order % 2 and n % 2 == 0:
        mult[n // 2] = 0.0
    out = np.fft.ifft(F * mult.reshape(shape), axis=axis)
    return out.real if np.isrealobj(g.data) else out


def spectral_tail(g: GridFunction) -> float:
    """Fraction of spectral amplitude in the top 10% of frequencies."""
    F = np.abs(np.fft.fft2(g.data))
    fq = np.abs(np.fft.fftfreq(g.n_q))[:, None]
    fp = np.abs(np.fft.fftfreq(g.n_p))[None, :]
    tail = (fq > 0.45) | (fp > 0.45)
    return float(F[tail].max() / F.max()) if F.max() > 0 else 0.0


def hamiltonian_eigen_residuals(V, w: GridFunction, E: float, order: int | None = None,
                                mass: float = 1.0, tail_tol: float = 1e-6):
    """Residual grids of the two eigenvalue equations for H = p^2/2m + V(q).

    The imaginary (bracket) equation

        -(p/m) dW/dq + sum_{r odd} (1/r!) (i hbar/2)^(r-1) V^(r)(q) d^r W/dp^r = 0

    and the real equation

        (p^2/2m + V) W - (hbar^2/8m) d^2W/dq^2
            + sum_{r even >= 2} (1/r!) (i hbar/2)^r V^(r)(q) d^r W/dp^r = E W.

    Args:
        V: Potential as an expression in q.
        w: Candidate Wigner function.
        E: Energy.
        order: Highest derivative order of V used; defaults to the degree
            of V when V is a polynomial.
        mass: Particle mass.
        tail_tol: Spectral tail above which a resolution warning is issued.

    Returns:
        (imaginary-equation residual, real-equation residual).
    """
    q = coordinates("q")[0]
    V = sp.sympify(V)
    if order is None:
        if not V.is_polynomial(q):
            raise ValueError("order is required for non-polynomial potentials")
        order = max(int(sp.degree(V, q)), 2) if V.has(q) else 2
    tail = spectral_tail(w)
    if tail > tail_tol:
        warnings.warn(f"insufficient grid resolution: spectral tail {tail:.2e}",
                      ResolutionWarning, stacklevel=2)
    h = w.hbar
    Q, P = w.mesh()
    W = w.data
    res_a = -(P / mass) * spectral_derivative(w, 0, 1)
    Vq = np.broadcast_to(to_numpy(V, (q,))(Q), Q.shape)
    res_b = (P ** 2 / (2 * mass) + Vq) * W - h ** 2 / (8 * mass) * spectral_derivative(w, 0, 2) - E * W
    for r in range(1, order + 1):
        dV = sp.diff(V, q, r)
        if dV == 0:
            continue
        dVq = np.broadcast_to(to_numpy(dV, (q,))(Q), Q.shape)
        dW = spectral_derivative(w, 1, r)
        if r % 2:
            coef = (-1) ** ((r - 1) // 2) * (h / 2) ** (r - 1) / factorial(r)
            res_a = res_a + coef * dVq * dW
        else:
            coef = (-1) ** (r // 2) * (h / 2) ** r / factorial(r)
            res_b = res_b + coef * dVq * dW
    return w.with_data(res_a), w.with_data(res_b)
