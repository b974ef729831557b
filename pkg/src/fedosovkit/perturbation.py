"""First-order stationary perturbation theory in a time-energy chart.

The unperturbed chart (T0, H0) carries a flat connection. Perturbing the
Hamiltonian to H = H0 + lam H1(T0, H0) and keeping (T, H) canonical to first
order gives

    T = T0 + lam T1,   dT1/dT0 + dH1/dH0 = 0,

with inverse T0 = T - lam T1(T, H), H0 = H - lam H1(T, H). Pushing the
connection through this map gives gamma + lam gamma_1, and the star product
splits as A *~ B = A * B + lam A *bar B. The energy shift is

    E1 = 2 pi hbar int dT dH W0 (H *bar W0).
"""
from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import sympy as sp
from scipy import integrate

from .charts import ChartMap
from .config import thread_count
from .connection import SymplecticConnection, omega_matrix, transform_connection
from .errors import (CutoffWarning, DomainError, NonCanonicalError, PerturbationSizeWarning,
                     SecularTermWarning)
from .fedosov import FedosovContext, star_product, truncate_jet
from .grid import GridFunction
from .moyal import moyal_integral
from .oscillator import OscillatorEigenstate, oscillator_connection
from .symbolic import HBAR, ComplexExpr, expr_equal, opaque

LAMBDA = sp.Symbol("lambda", real=True)

# H *bar W for a formal W depends only on H1 and the base connection
_OPERATOR_CACHE: dict = {}


# ---------------------------------------------------------------- T1

class T1Solution(NamedTuple):
    """Solution of dT1/dT0 = -dH1/dH0 with T1(0, H0) = 0.

    Attributes:
        expr: T1, including any secular part.
        secular_rate: Period mean of dH1/dH0 (a function of H0). Nonzero
            means T1 grows linearly in T0; its value is the first-order
            relative shift of the angular frequency.
        periodic: expr + secular_rate * T0, the part periodic in T0.
        symbolic: False when T1 is represented by a quadrature.
    """

    expr: sp.Expr
    secular_rate: sp.Expr
    periodic: sp.Expr
    symbolic: bool


def _quadrature_antiderivative(g, T, H, name="T1"):
    """Opaque F(T, H) = -int_0^T g(t, H) dt with exact derivative rules."""
    gnum = sp.lambdify((T, H), g, "math")
    state = {}

    def value(t, h):
        return -integrate.quad(lambda s: gnum(s, h), 0.0, float(t), epsabs=1e-13, epsrel=1e-12)[0]

    def d_t(t, h):
        return -g.subs({T: t, H: h}, simultaneous=True)

    def d_h(t, h):
        if "dh" not in state:
            state["dh"] = _quadrature_antiderivative(sp.diff(g, H), T, H, name + "_H")
        return state["dh"](t, h)

    return opaque(name, 2, derivatives=[d_t, d_h], numeric=value)


def _fourier_terms(g, T):
    """{k: c_k(H)} with g = sum c_k exp(i k T), or None if g is not a trig polynomial in T."""
    out: dict = {0: sp.Integer(0)}
    for term in sp.Add.make_args(sp.expand(sp.powsimp(sp.expand(g.rewrite(sp.exp))))):
        if term == 0:
            continue
        c, dep = term.as_independent(T, as_Add=False)
        dep = sp.powsimp(dep, combine="exp")
        if dep == 1:
            k = 0
        elif isinstance(dep, sp.exp):
            k = sp.simplify(dep.args[0] / (sp.I * T))
            if not (k.is_integer or k.is_Rational) or k.has(T) or k == 0:
                return None
        else:
            return None
        out[k] = out.get(k, 0) + c
    return out


def solve_T1(h1, coords=None, warn: bool = True) -> T1Solution:
    """Solve the first-order canonicity condition for T1.

    Args:
        h1: Perturbation H1(T0, H0).
        coords: The (T0, H0) symbols; defaults to (T, H).
        warn: Emit ``SecularTermWarning`` when T1 is not periodic.
    """
    from .symbolic import coordinates
    T, H = coords if coords is not None else coordinates("T H")
    h1 = sp.sympify(h1)
    g = sp.diff(h1, H)
    terms = _fourier_terms(g, T)
    symbolic = terms is not None
    if symbolic:
        mean = sp.simplify(terms.get(0, sp.Integer(0)))
        anti = mean * T
        for k, c in terms.items():
            if k:
                anti += c * (sp.exp(sp.I * k * T) - 1) / (sp.I * k)
        expr = sp.simplify(sp.expand_complex(-anti))
        nonzero = mean != 0
    else:
        F = _quadrature_antiderivative(g, T, H)
        expr = F(T, H)
        mean = -F(2 * sp.pi, H) / (2 * sp.pi)
        nonzero = any(abs(float(mean.subs(H, h))) > 1e-12 for h in (0.5, 1.0, 2.0))
    if warn and nonzero:
        warnings.warn(f"T1 has a secular part; frequency shift rate {mean}",
                      SecularTermWarning, stacklevel=2)
    return T1Solution(expr, mean, sp.simplify(expr + mean * T), symbolic)


# ---------------------------------------------------------------- problem

@dataclass
class PerturbationProblem:
    """H = H0 + lam H1 on a flat (T0, H0) chart.

    Args:
        h1: Perturbation as an expression in the context coordinates.
        n: Quantum number of the oscillator eigenstate used when ``w0`` is
            not given.
        hbar: Numeric Planck constant used by the quadratures.
        lam: Size of the perturbation, used only by the smallness check.
        context: Unperturbed Fedosov context; defaults to the oscillator at
            truncation 8, enough for quartic perturbations.
        w0: Unperturbed eigenstate W0(T, H) in terms of the symbol hbar.
        e0: Its energy.
    """

    h1: sp.Expr
    n: int = 0
    hbar: float = 1.0
    lam: float = 1e-3
    context: FedosovContext | None = None
    w0: sp.Expr | None = None
    e0: sp.Expr | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.h1 = sp.sympify(self.h1)
        if self.context is None:
            self.context = FedosovContext(oscillator_connection(), order=8)
        if self.context.dim != 2:
            raise DomainError("perturbation theory needs a 2-dimensional (T, H) chart")
        if self.w0 is None:
            state = OscillatorEigenstate(self.n, HBAR)
            self.w0, self.e0 = state.expr(), state.energy
        if self.e0 is None:
            raise ValueError("e0 must be given with w0")
        stray = self.h1.free_symbols - set(self.coords) - {HBAR}
        if stray:
            raise DomainError(f"H1 depends on symbols outside the chart: {sorted(map(str, stray))}")

    @property
    def coords(self):
        return self.context.coords

    def t1(self) -> T1Solution:
        if "t1" not in self._cache:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SecularTermWarning)
                self._cache["t1"] = solve_T1(self.h1, self.coords)
        return self._cache["t1"]

    def check_size(self, h_max: float | None = None, samples: int = 64) -> float:
        """Largest |lam H1 / H0| on the working window; warns above 0.1."""
        T, H = self.coords
        h_max = energy_cutoff(self.w0, H, self.hbar) if h_max is None else h_max
        f = sp.lambdify((T, H), (self.h1 / H).subs(HBAR, self.hbar), "numpy")
        tt, hh = np.meshgrid(np.linspace(0, 2 * np.pi, samples),
                             np.linspace(h_max / samples, h_max, samples))
        ratio = float(np.max(np.abs(self.lam * np.broadcast_to(f(tt, hh), tt.shape))))
        if ratio >= 0.1:
            warnings.warn(f"|lam H1| / |H0| reaches {ratio:.3g} on the window",
                          PerturbationSizeWarning, stacklevel=2)
        return ratio


def first_order_chart(problem: PerturbationProblem) -> ChartMap:
    """The map (T0, H0) -> (T, H) to first order, with its first-order inverse."""
    T, H = problem.coords
    Tn, Hn = sp.symbols("T_new H_new", real=True)
    t1 = problem.t1().expr
    h1 = problem.h1
    back = {T: Tn, H: Hn}
    return ChartMap(
        name="first-order",
        old_coords=(T, H),
        new_coords=(Tn, Hn),
        forward=(T + LAMBDA * t1, H + LAMBDA * h1),
        inverse=(Tn - LAMBDA * t1.subs(back, simultaneous=True),
                 Hn - LAMBDA * h1.subs(back, simultaneous=True)),
    )


def _linear_part(e):
    e = sp.expand(e)
    return e.coeff(LAMBDA, 1) if e.has(LAMBDA) else sp.Integer(0)


def perturbed_connection(problem: PerturbationProblem) -> SymplecticConnection:
    """gamma + lam gamma_1 in the new coordinates, renamed back to (T, H)."""
    if "conn" in problem._cache:
        return problem._cache["conn"]
    chart = first_order_chart(problem)
    c = problem.context.connection
    raw = transform_connection(c, chart, simplify=False, check=False)
    rename = dict(zip(chart.new_coords, problem.coords))
    full = {}
    for i, j, k in itertools.product((1, 2), repeat=3):
        v = sp.series(raw[(i, j, k)], LAMBDA, 0, 2).removeO()
        full[(i, j, k)] = sp.simplify(truncate_jet(v, LAMBDA, 1).subs(rename, simultaneous=True))
    for key, v in full.items():
        for perm in set(itertools.permutations(key)):
            if not expr_equal(v, full[perm]):
                raise NonCanonicalError(f"first-order map is not canonical at {key}")
    gamma = {k: v for k, v in full.items() if k == tuple(sorted(k)) and v != 0}
    out = SymplecticConnection(problem.coords, gamma, check_symmetry=False)
    problem._cache["conn"] = out
    return out


def perturbed_connection_first_order(problem: PerturbationProblem) -> SymplecticConnection:
    """The lam-linear part gamma_1 of the pushed-forward connection."""
    full = perturbed_connection(problem)
    gamma = {k: sp.simplify(_linear_part(v)) for k, v in full.components().items()}
    return SymplecticConnection(problem.coords, {k: v for k, v in gamma.items() if v != 0},
                                check_symmetry=False)


def linearized_gamma(c: SymplecticConnection, t1, h1, key) -> sp.Expr:
    """gamma_1 from the infinitesimal change of coordinates x = X - lam xi.

    gamma_1,ijk = -xi^a d_a gamma_ijk - sum over the three slots of
    gamma with one index replaced (d_i xi^a gamma_ajk + ...) - w_id d_j d_k xi^d.
    """
    X = c.coords
    xi = (sp.sympify(t1), sp.sympify(h1))
    w = omega_matrix(2)
    i, j, k = (s - 1 for s in key)
    g = c[key]
    e = -sum(xi[a] * sp.diff(g, X[a]) for a in range(2))
    for slot in range(3):
        idx = [i, j, k]
        for a in range(2):
            rep = list(idx)
            rep[slot] = a
            e -= sp.diff(xi[a], X[idx[slot]]) * c[tuple(r + 1 for r in rep)]
    e -= sum(w[i, d] * sp.diff(xi[d], X[j], X[k]) for d in range(2))
    return sp.expand(e)


# ---------------------------------------------------------------- star products

def perturbed_context(problem: PerturbationProblem) -> FedosovContext:
    if "ctx" not in problem._cache:
        problem._cache["ctx"] = FedosovContext(perturbed_connection(problem),
                                               order=problem.context.order, jet=(LAMBDA, 1))
    return problem._cache["ctx"]


def star_correction(a, b, problem: PerturbationProblem) -> ComplexExpr:
    """A *bar B, the lam-linear part of the perturbed star product."""
    r = star_product(a, b, perturbed_context(problem))
    return ComplexExpr(_linear_part(r.re), _linear_part(r.im))


def hamiltonian_correction(problem: PerturbationProblem, w=None) -> ComplexExpr:
    """H *bar W for W = W0 by default.

    The operator is computed once for a formal W(T, H) and then applied,
    which keeps the recursion free of the exponentials in W0.
    """
    T, H = problem.coords
    if "hbar_op" not in problem._cache:
        key = (problem.h1, problem.coords, problem.context.order,
               tuple(sorted(problem.context.connection.components().items())))
        if key not in _OPERATOR_CACHE:
            Wf = sp.Function("W", real=True)(T, H)
            _OPERATOR_CACHE[key] = (Wf, star_correction(H, Wf, problem))
        problem._cache["hbar_op"] = _OPERATOR_CACHE[key]
    Wf, op = problem._cache["hbar_op"]
    w = problem.w0 if w is None else sp.sympify(w)

    def apply(e):
        return sp.expand(e.subs(Wf, w).doit())

    return ComplexExpr(apply(op.re), apply(op.im))


# ---------------------------------------------------------------- energy

def energy_cutoff(w0, H, hbar: float, tol: float = 1e-14) -> float:
    """Smallest H_max with |W0| below tol of its peak on [H_max, 2 H_max]."""
    f = sp.lambdify(H, sp.sympify(w0).subs(HBAR, hbar), "numpy")
    h_max = 8.0 * hbar
    for _ in range(60):
        hs = np.linspace(0, 2 * h_max, 2001)
        vals = np.abs(np.broadcast_to(f(hs), hs.shape))
        if vals[hs >= h_max].max() <= tol * vals.max():
            return h_max
        h_max *= 1.25
    warnings.warn("no energy cutoff found for W0", CutoffWarning, stacklevel=2)
    return h_max


class EnergyShift(NamedTuple):
    e0: float
    e1: float
    imaginary: float
    secular_shift: sp.Expr
    h_max: float


def _plane_integral(f, h_max, n_t=96, n_h=192):
    """Gauss-Legendre over T in [0, 2 pi) and H in (0, h_max).

    T-strips are evaluated on up to ``thread_count()`` workers and summed in
    a fixed order, so the result does not depend on scheduling.
    """
    xt, wt = np.polynomial.legendre.leggauss(n_t)
    xh, wh = np.polynomial.legendre.leggauss(n_h)
    t = np.pi * (xt + 1)
    h = 0.5 * h_max * (xh + 1)

    def strip(idx):
        TT, HH = np.meshgrid(t[idx], h, indexing="ij")
        vals = np.broadcast_to(f(TT, HH), TT.shape)
        return wt[idx] @ vals @ wh

    strips = np.array_split(np.arange(n_t), min(thread_count(), n_t))
    if len(strips) == 1:
        parts = [strip(strips[0])]
    else:
        with ThreadPoolExecutor(len(strips)) as pool:
            parts = list(pool.map(strip, strips))
    return float(np.pi * 0.5 * h_max * sum(parts))


def first_order_energy(problem: PerturbationProblem, check_size: bool = False) -> EnergyShift:
    """E1 = 2 pi hbar int dT dH W0 (H *bar W0), by quadrature.

    Raises:
        CutoffWarning: Warned when the integrand is not negligible at the
            edge of the H window.
    """
    T, H = problem.coords
    h = problem.hbar
    corr = hamiltonian_correction(problem)
    w0 = problem.w0.subs(HBAR, h)
    h_max = energy_cutoff(problem.w0, H, h)
    if check_size:
        problem.check_size(h_max)
    re = sp.lambdify((T, H), w0 * corr.re.subs(HBAR, h), "numpy")
    im = sp.lambdify((T, H), w0 * corr.im.subs(HBAR, h), "numpy")
    edge = np.abs(re(np.linspace(0, 2 * np.pi, 16), np.full(16, h_max))).max()
    peak = np.abs(re(np.linspace(0, 2 * np.pi, 16)[:, None], np.linspace(h_max / 64, h_max, 64)[None, :])).max()
    if peak > 0 and edge > 1e-12 * peak:
        warnings.warn(f"integrand at the H cutoff is {edge / peak:.2e} of its peak",
                      CutoffWarning, stacklevel=2)
    e1 = 2 * math.pi * h * _plane_integral(re, h_max)
    e1_im = 2 * math.pi * h * _plane_integral(im, h_max)
    return EnergyShift(float(sp.sympify(problem.e0).subs(HBAR, h)), e1, e1_im,
                       problem.t1().secular_rate, h_max)


def first_order_energy_via_product(problem: PerturbationProblem, to_chart, half_width=None,
                                   n_points: int = 192) -> float:
    """E1 from integrating 0 = E1 W0 / (2 pi hbar) - W0 * (H *bar W0) over the plane.

    W0 and H *bar W0 are sampled on a (q, p) grid through ``to_chart``,
    a vectorised map (q, p) -> (T, H), and multiplied with the integral
    Moyal product.
    """
    T, H = problem.coords
    h = problem.hbar
    corr = hamiltonian_correction(problem)
    w0f = sp.lambdify((T, H), problem.w0.subs(HBAR, h), "numpy")
    cf = sp.lambdify((T, H), corr.re.subs(HBAR, h), "numpy")
    L = 8 * math.sqrt(h) if half_width is None else half_width

    def sample(f):
        def g(Q, P):
            t, hh = to_chart(Q, P)
            return np.broadcast_to(f(t, hh), Q.shape)
        return GridFunction.symmetric(g, L, n_points, h)

    w = sample(w0f)
    c = sample(cf)
    return float(np.real(2 * math.pi * h * moyal_integral(w, c).integral()))


def oscillator_angle_action(Q, P):
    """(q, p) -> (T, H) for the unit oscillator."""
    return np.arctan2(-P, Q) % (2 * np.pi), 0.5 * (Q ** 2 + P ** 2)


# ---------------------------------------------------------------- bookkeeping

def perturbation_hierarchy() -> dict:
    """Collect powers of lam in H *~ (W0 + lam W1) = (E0 + lam E1)(W0 + lam W1).

    Both products are expanded bilinearly with *~ = * + lam *bar, and the
    lam^0 and lam^1 coefficients are returned as equations.
    """
    H, W0, W1, E0, E1 = sp.symbols("H W_E0 W_E1 E_0 E_1")
    star = sp.Function("star")
    bar = sp.Function("starbar")
    lhs = sum(LAMBDA ** (i + b) * (bar if b else star)(H, w)
              for i, w in enumerate((W0, W1)) for b in (0, 1))
    rhs = sp.expand((E0 + LAMBDA * E1) * (W0 + LAMBDA * W1))
    lhs = sp.expand(lhs)
    return {k: sp.Eq(lhs.coeff(LAMBDA, k), rhs.coeff(LAMBDA, k)) for k in (0, 1)}


def first_order_residual(problem: PerturbationProblem, w1, e1) -> ComplexExpr:
    """(H - E0) * W1 - E1 W0 + H *bar W0 for a candidate W1."""
    H = problem.coords[1]
    prod = star_product(H, w1, problem.context)
    corr = hamiltonian_correction(problem)
    w1 = sp.sympify(w1)
    re = prod.re - problem.e0 * w1 - e1 * problem.w0 + corr.re
    return ComplexExpr(sp.expand(re), sp.expand(prod.im + corr.im))


# ---------------------------------------------------------------- finite-difference checks

def gamma1_finite_difference(problem: PerturbationProblem, point, h: float = 1e-6) -> dict:
    """d/dlam at lam = 0 of the exact pushforward through the forward map.

    The connection is transformed through T = T0 + lam T1, H = H0 + lam H1
    without any truncation, for lam = +-h. Its value at the new point
    ``point`` needs the old point, found by Newton iteration.
    """
    T, H = problem.coords
    t1 = problem.t1().expr
    fwd = (T + LAMBDA * t1, H + LAMBDA * problem.h1)
    chart = ChartMap("forward", (T, H), sp.symbols("T_new H_new", real=True), forward=fwd)
    raw = transform_connection(problem.context.connection, chart, simplify=False, check=False)
    fmap = sp.lambdify((T, H, LAMBDA), sp.Matrix(fwd), "numpy")
    jac = sp.lambdify((T, H, LAMBDA), sp.Matrix(fwd).jacobian([T, H]), "numpy")
    keys = [(1, 1, 1), (1, 1, 2), (1, 2, 2), (2, 2, 2)]
    gnum = {k: sp.lambdify((T, H, LAMBDA), raw[k].subs(HBAR, problem.hbar), "numpy") for k in keys}
    X = np.asarray(point, dtype=float)
    out = {}
    vals = {}
    for lam in (h, -h):
        x = X.copy()
        for _ in range(50):
            r = np.asarray(fmap(x[0], x[1], lam), dtype=float).ravel() - X
            if np.max(np.abs(r)) < 1e-15 * (1 + np.max(np.abs(X))):
                break
            x = x - np.linalg.solve(np.asarray(jac(x[0], x[1], lam), dtype=float), r)
        vals[lam] = {k: float(gnum[k](x[0], x[1], lam)) for k in keys}
    for k in keys:
        out[k] = (vals[h][k] - vals[-h][k]) / (2 * h)
    return out


def star_correction_finite_difference(a, b, problem: PerturbationProblem, point,
                                      h: float = 1e-6) -> complex:
    """d/dlam of A * B for the inverse map at lam = +-h, at a point.

    B is inserted after the product is formed for a formal W(T, H).
    """
    chart = first_order_chart(problem)
    T, H = problem.coords
    rename = dict(zip(chart.new_coords, problem.coords))
    vals = []
    for lam in (h, -h):
        raw = transform_connection(problem.context.connection, chart, simplify=False, check=False)
        gamma = {k: sp.sympify(v).subs(LAMBDA, lam).subs(rename, simultaneous=True)
                 for k, v in raw.components().items()}
        ctx = FedosovContext(SymplecticConnection(problem.coords, gamma, check_symmetry=False),
                             order=problem.context.order, assume_flat=True)
        Wf = sp.Function("W", real=True)(T, H)
        r = star_product(a, Wf, ctx)
        sub = {T: point[0], H: point[1], HBAR: problem.hbar}
        r = ComplexExpr(r.re.subs(Wf, b).doit(), r.im.subs(Wf, b).doit())
        vals.append(complex(sp.N(r.re.subs(sub))) + 1j * complex(sp.N(r.im.subs(sub))))
    return (vals[0] - vals[1]) / (2 * h)
