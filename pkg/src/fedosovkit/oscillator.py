"""Harmonic oscillator in the time-energy chart (T, H).

In this chart the flat connection has gamma_111 = -2H and
gamma_122 = -1/(2H). The eigenvalue equations reduce to an ordinary
differential equation in H whose normalizable solutions are

    W_n(H) = ((-1)^n / (pi hbar)) exp(-2H/hbar) L_n(4H/hbar),   E = hbar (n + 1/2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
import sympy as sp

from .connection import SymplecticConnection
from .grid import GridFunction, default_half_width
from .symbolic import HBAR, coordinates, sym


def oscillator_connection() -> SymplecticConnection:
    T, H = coordinates("T H")
    return SymplecticConnection((T, H), {(1, 1, 1): -2 * H, (1, 2, 2): -1 / (2 * H)})


def eigen_ode_residual(w, E, hbar=HBAR) -> sp.Expr:
    """(H - E) w - hbar^2 (H/4 w'' + w'/4) for w a function of H."""
    H = sym("H")
    w = sp.sympify(w)
    r = (H - E) * w - hbar ** 2 * (H / 4 * sp.diff(w, H, 2) + sp.diff(w, H) / 4)
    return sp.simplify(r)


# ---------------------------------------------------------------- confluent series

class KummerSeries(NamedTuple):
    """Partial sum of G(alpha, beta, y) = sum_k (alpha)_k (beta)_k / (k! y^k).

    Attributes:
        value: The partial sum.
        error_estimate: Magnitude of the first omitted term (0 if the
            series terminated).
        terminated: True when a Pochhammer factor vanished.
        diverging: True when the terms were growing at the end of the sum,
            which signals the asymptotic series is past its useful range.
    """

    value: float
    error_estimate: float
    terminated: bool
    diverging: bool


def kummer_G(alpha, beta, y: float, terms: int = 50) -> KummerSeries:
    if y == 0:
        raise ValueError("G(alpha, beta, y) needs y != 0")
    if terms < 1:
        raise ValueError("terms must be at least 1")
    total = 1.0
    term = 1.0
    mags = [1.0]
    for k in range(1, terms):
        term *= (alpha + k - 1) * (beta + k - 1) / (k * y)
        if term == 0:
            return KummerSeries(total, 0.0, True, False)
        total += term
        mags.append(abs(term))
    nxt = term * (alpha + terms - 1) * (beta + terms - 1) / (terms * y)
    if nxt == 0:
        return KummerSeries(total, 0.0, True, False)
    growing = len(mags) >= 3 and mags[-1] > mags[-2] > mags[-3]
    return KummerSeries(total, abs(nxt), False, growing)


def kummer_G_symbolic(alpha, beta, y) -> sp.Expr:
    """Closed polynomial form when the series terminates, else a formal G."""
    alpha, beta = sp.nsimplify(alpha), sp.nsimplify(beta)
    for a in (alpha, beta):
        if a.is_integer and a <= 0:
            n = int(-a)
            return sp.Add(*[sp.rf(alpha, k) * sp.rf(beta, k) / (sp.factorial(k) * y ** k)
                            for k in range(n + 1)])
    return sp.Function("G")(alpha, beta, y)


class SolutionBranches(NamedTuple):
    decaying: sp.Expr
    growing: sp.Expr
    decaying_terminates: bool
    growing_normalizable: bool


def general_solution_terms(E, hbar=HBAR) -> SolutionBranches:
    """The two independent solutions of the reduced oscillator equation.

    decaying: exp(-2H/hbar) y^(-a) G(a, a, -y) with a = (hbar - 2E)/(2 hbar)
    growing:  exp(+2H/hbar) y^(-b) G(b, b, y)  with b = (hbar + 2E)/(2 hbar)
    where y = 4H/hbar. The growing branch is never normalizable on H > 0.
    """
    H = sym("H")
    E, hbar = sp.sympify(E), sp.sympify(hbar)
    y = 4 * H / hbar
    a = sp.simplify((hbar - 2 * E) / (2 * hbar))
    b = sp.simplify((hbar + 2 * E) / (2 * hbar))
    c1 = sp.exp(-2 * H / hbar) * y ** (-a) * kummer_G_symbolic(a, a, -y)
    c2 = sp.exp(2 * H / hbar) * y ** (-b) * kummer_G_symbolic(b, b, y)
    terminates = bool(a.is_integer and a <= 0)
    return SolutionBranches(sp.expand(c1) if terminates else c1, c2, terminates, False)


def quantum_number(E, hbar=HBAR, tol: float = 1e-9) -> int | None:
    """n with E = hbar (n + 1/2), or None."""
    x = sp.simplify((2 * sp.sympify(E) - hbar) / (2 * hbar))
    if x.is_number:
        xv = float(x)
        n = round(xv)
        if abs(xv - n) <= tol and n >= 0:
            return int(n)
    return None


def quantize(E, hbar=HBAR) -> bool:
    """True iff E = hbar (n + 1/2) for a nonnegative integer n.

    Equivalent to the decaying branch terminating, since the growing branch
    is rejected outright.
    """
    return quantum_number(E, hbar) is not None


# ---------------------------------------------------------------- eigenfunctions

def laguerre_poly(n: int, y) -> sp.Expr:
    """L_n(y) = sum_m (-1)^m C(n, n-m) y^m / m! with exact coefficients."""
    return sp.Add(*[sp.Integer(-1) ** m * sp.binomial(n, n - m) * y ** m / sp.factorial(m)
                    for m in range(n + 1)])


def laguerre(n: int, y):
    """L_n(y) for arrays by the three-term recurrence."""
    y = np.asarray(y, dtype=float)
    prev = np.ones_like(y)
    if n == 0:
        return prev
    cur = 1.0 - y
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 - y) * cur - k * prev) / (k + 1)
    return cur


@dataclass(frozen=True)
class OscillatorEigenstate:
    """Energy eigenstate W_n of the unit oscillator.

    Attributes:
        n: Quantum number.
        hbar: Planck constant (number or the symbol hbar).
    """

    n: int
    hbar: object = HBAR

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be nonnegative")

    @property
    def energy(self):
        return self.hbar * (sp.Integer(2 * self.n + 1) / 2)

    @property
    def normalization(self):
        return sp.Integer(-1) ** self.n / (sp.pi * self.hbar)

    def expr(self) -> sp.Expr:
        """W_n as an expression in H."""
        H = sym("H")
        h = self.hbar
        return self.normalization * sp.exp(-2 * H / h) * laguerre_poly(self.n, 4 * H / h)

    def expr_qp(self) -> sp.Expr:
        q, p = coordinates("q p")
        return self.expr().subs(sym("H"), (q ** 2 + p ** 2) / 2)

    def numeric(self, Q, P):
        h = float(self.hbar)
        Hv = 0.5 * (np.asarray(Q) ** 2 + np.asarray(P) ** 2)
        return (-1) ** self.n / (math.pi * h) * np.exp(-2 * Hv / h) * laguerre(self.n, 4 * Hv / h)

    def grid(self, half_width: float | None = None, n_points: int = 256) -> GridFunction:
        h = float(self.hbar)
        L = default_half_width(h) if half_width is None else half_width
        return GridFunction.symmetric(self.numeric, L, n_points, h)


def wigner_eigenfunction(n: int, hbar=HBAR) -> OscillatorEigenstate:
    return OscillatorEigenstate(n, hbar)


def hermite_wavefunction(n: int, q, hbar: float = 1.0) -> np.ndarray:
    """Normalized oscillator eigenfunction sampled at ``q``.

    Uses the recurrence for normalized Hermite functions, stable for large n:
    psi_{k+1} = sqrt(2/(k+1)) x psi_k - sqrt(k/(k+1)) psi_{k-1}, x = q/sqrt(hbar).
    """
    q = np.asarray(q, dtype=float)
    x = q / math.sqrt(hbar)
    prev = np.zeros_like(x)
    cur = (math.pi * hbar) ** -0.25 * np.exp(-x * x / 2)
    for k in range(n):
        prev, cur = cur, math.sqrt(2 / (k + 1)) * x * cur - math.sqrt(k / (k + 1)) * prev
    return cur


def hermite_wavefunction_explicit(n: int, q, hbar: float = 1.0) -> np.ndarray:
    """Same function from the closed formula with exact integer factorials."""
    q = np.asarray(q, dtype=float)
    x = q / math.sqrt(hbar)
    coeffs = sp.Poly(sp.hermite(n, sp.Symbol("x")), sp.Symbol("x")).all_coeffs()
    Hn = np.polyval([float(c) for c in coeffs], x)
    norm = 1.0 / math.sqrt(float(Fraction(2 ** n * math.factorial(n))) * math.sqrt(math.pi * hbar))
    return norm * np.exp(-x * x / 2) * Hn
