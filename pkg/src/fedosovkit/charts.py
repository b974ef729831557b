"""Canonical coordinate charts.

A ``ChartMap`` relates old coordinates x (usually Darboux (q, p)) to new
coordinates X. It may know the forward map X(x), the inverse x(X), or both,
symbolically and/or numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp
from scipy import integrate, optimize

from .errors import DomainError
from sympy.core.function import AppliedUndef

from .symbolic import _OPAQUE_CACHE, coordinates, opaque, sym


@dataclass(frozen=True)
class ChartMap:
    """Coordinate map between two charts.

    Attributes:
        name: Registry name.
        old_coords: Source coordinates.
        new_coords: Target coordinates.
        forward: New coordinates as expressions in the old ones, or None.
        inverse: Old coordinates as expressions in the new ones, or None.
        forward_numeric: Callable mapping an old point to a new point.
        inverse_numeric: Callable mapping a new point to an old point.
        singular: Description of the singular set.
    """

    name: str
    old_coords: tuple
    new_coords: tuple
    forward: tuple | None = None
    inverse: tuple | None = None
    forward_numeric: Callable | None = field(default=None, compare=False)
    inverse_numeric: Callable | None = field(default=None, compare=False)
    singular: str = ""

    @property
    def dim(self) -> int:
        return len(self.old_coords)

    def inverted(self) -> "ChartMap":
        return ChartMap(self.name + "^-1", self.new_coords, self.old_coords,
                        self.inverse, self.forward, self.inverse_numeric,
                        self.forward_numeric, self.singular)

    def to_new(self, point) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        if self.forward_numeric is not None:
            return np.asarray(self.forward_numeric(point), dtype=float)
        if self.forward is None:
            raise DomainError(f"chart {self.name} has no forward map")
        return _eval_map(self.forward, self.old_coords, point)

    def to_old(self, point) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        if self.inverse_numeric is not None:
            return np.asarray(self.inverse_numeric(point), dtype=float)
        if self.inverse is None:
            raise DomainError(f"chart {self.name} has no inverse map")
        return _eval_map(self.inverse, self.new_coords, point)

    def pullback(self, f) -> sp.Expr:
        """Express a function of the old coordinates in the new ones."""
        if self.inverse is None:
            raise DomainError(f"chart {self.name} has no symbolic inverse")
        return sp.sympify(f).subs(dict(zip(self.old_coords, self.inverse)),
                                  simultaneous=True)

    def forward_jacobian(self, point, h: float = 1e-3) -> np.ndarray:
        """Jacobian dX/dx at an old point.

        Symbolic when the forward map is known, otherwise Richardson
        extrapolated central differences of the numeric map.
        """
        point = np.asarray(point, dtype=float)
        if self.forward is not None and not _has_opaque(self.forward):
            J = sp.Matrix(self.dim, self.dim,
                          lambda i, a: sp.diff(self.forward[i], self.old_coords[a]))
            return _eval_matrix(J, self.old_coords, point)
        return richardson_jacobian(self.to_new, point, h)

    def canonicity_defect(self, point) -> float:
        """max |J^T w J - w| at an old point."""
        J = self.forward_jacobian(point)
        w = _omega_np(self.dim)
        return float(np.max(np.abs(J.T @ w @ J - w)))


def _has_opaque(exprs):
    return any(isinstance(f, AppliedUndef) or type(f).__name__ in _OPAQUE_CACHE
               for e in exprs for f in sp.sympify(e).atoms(sp.Function))


def _omega_np(dim):
    n = dim // 2
    w = np.zeros((dim, dim))
    w[:n, n:] = np.eye(n)
    w[n:, :n] = -np.eye(n)
    return w


def _eval_map(exprs, coords, point):
    env = dict(zip(coords, point))
    try:
        return np.array([float(sp.sympify(e).evalf(17, subs=env)) for e in exprs])
    except TypeError:
        raise DomainError(f"map is undefined at {tuple(point)}") from None


def _eval_matrix(M, coords, point):
    f = sp.lambdify(coords, M, modules="numpy")
    with np.errstate(all="raise"):
        try:
            return np.asarray(f(*point), dtype=float)
        except (FloatingPointError, ZeroDivisionError):
            raise DomainError(f"Jacobian is singular at {tuple(point)}") from None


def richardson_jacobian(f, x, h=1e-3, levels: int = 2):
    """Jacobian of a vector map by central differences and Richardson steps.

    Each level halves the step and removes the next even power of h, so the
    default two levels leave an O(h^6) error.
    """
    x = np.asarray(x, dtype=float)
    y0 = np.asarray(f(x))
    J = np.zeros((y0.size, x.size))
    for a in range(x.size):
        step = h * (1 + abs(x[a]))
        e = np.zeros_like(x)
        e[a] = 1.0
        table = []
        for k in range(levels + 1):
            s = step / 2 ** k
            table.append((np.asarray(f(x + s * e)) - np.asarray(f(x - s * e))) / (2 * s))
        for lev in range(1, levels + 1):
            c = 4 ** lev
            table = [(c * table[i + 1] - table[i]) / (c - 1) for i in range(len(table) - 1)]
        J[:, a] = table[0]
    return J


# ---------------------------------------------------------------- standard charts

def flat_chart(dim: int = 2) -> ChartMap:
    if dim == 2:
        x = coordinates("q p")
        name = "flat2d"
    elif dim == 4:
        x = coordinates("x y px py")
        name = "flat4d"
    else:
        n = dim // 2
        x = coordinates([f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)])
        name = f"flat{dim}d"
    return ChartMap(name, x, x, x, x, singular="none")


def oscillator_chart() -> ChartMap:
    """Time-energy chart of the unit oscillator.

    q = sqrt(2H) cos T, p = -sqrt(2H) sin T. T = 0 is the right turning point
    and T grows along the flow of H = (q^2 + p^2) / 2.
    """
    q, p = coordinates("q p")
    T, H = coordinates("T H")

    def fwd(x):
        qq, pp = x
        h = 0.5 * (qq * qq + pp * pp)
        if h == 0:
            raise DomainError("the time-energy chart is singular at the origin", (qq, pp))
        return np.array([math.atan2(-pp, qq) % (2 * math.pi), h])

    def inv(X):
        t, h = X
        if h <= 0:
            raise DomainError("H must be positive in the time-energy chart", (t, h))
        r = math.sqrt(2 * h)
        return np.array([r * math.cos(t), -r * math.sin(t)])

    return ChartMap(
        "oscillatorTH", (q, p), (T, H),
        forward=(sp.atan2(-p, q), (q ** 2 + p ** 2) / 2),
        inverse=(sp.sqrt(2 * H) * sp.cos(T), -sp.sqrt(2 * H) * sp.sin(T)),
        forward_numeric=fwd, inverse_numeric=inv,
        singular="origin q = p = 0 (H = 0)")


def polar_chart() -> ChartMap:
    """Planar polar chart (r, phi, p_r, L) of (x, y, px, py)."""
    x, y, px, py = coordinates("x y px py")
    r, phi, pr, L = coordinates("r phi p_r L")
    fwd = (sp.sqrt(x ** 2 + y ** 2), sp.atan2(y, x),
           (x * px + y * py) / sp.sqrt(x ** 2 + y ** 2), x * py - y * px)
    inv = (r * sp.cos(phi), r * sp.sin(phi),
           pr * sp.cos(phi) - L * sp.sin(phi) / r,
           pr * sp.sin(phi) + L * sp.cos(phi) / r)

    def fnum(v):
        xx, yy, ppx, ppy = v
        rr = math.hypot(xx, yy)
        if rr == 0:
            raise DomainError("polar chart is singular at r = 0", tuple(v))
        return np.array([rr, math.atan2(yy, xx), (xx * ppx + yy * ppy) / rr,
                         xx * ppy - yy * ppx])

    def inum(V):
        rr, ph, ppr, LL = V
        if rr <= 0:
            raise DomainError("r must be positive", tuple(V))
        c, s = math.cos(ph), math.sin(ph)
        return np.array([rr * c, rr * s, ppr * c - LL * s / rr, ppr * s + LL * c / rr])

    return ChartMap("polar4d", (x, y, px, py), (r, phi, pr, L), fwd, inv, fnum, inum,
                    singular="r = 0")


def double_shear_chart() -> ChartMap:
    """Polynomial canonical map used as a test bed with all gamma_ijk nonzero.

    q = Q + (P + Q^2)^2, p = P + Q^2. A composition of two shears, so
    it is canonical with polynomial inverse.
    """
    q, p = coordinates("q p")
    Q, P = coordinates("Q P")
    inv = (Q + (P + Q ** 2) ** 2, P + Q ** 2)
    Qf = q - p ** 2
    fwd = (Qf, p - Qf ** 2)
    return ChartMap("doubleShear", (q, p), (Q, P), fwd, inv, singular="none")


# ---------------------------------------------------------------- time-energy charts

def time_function_symbolic(V, q, p, mass=1):
    """Opaque time function T(q, p) of H = p^2/(2m) + V(q).

    The derivative rules close on the family T_k = d^k T / dp^k, using
    dT/dq = m (1 + V'(q) dT/dp) / p, which follows from {T, H} = 1.

    Returns:
        The applied opaque function T(q, p).
    """
    V = sp.sympify(V)
    Vp = sp.diff(V, q)
    family: dict[int, type] = {}

    def member(k):
        if k not in family:
            def dq(qq, pp, k=k):
                base = mass * (1 + Vp.subs(q, qq) * member(1)(qq, pp)) / pp
                return sp.diff(base, pp, k) if k else base

            def dp(qq, pp, k=k):
                return member(k + 1)(qq, pp)

            name = "T" if k == 0 else "T_" + "p" * k
            family[k] = opaque(name, 2, derivatives=[dq, dp])
        return family[k]

    return member(0)(q, p)


def time_energy_symbolic(V=None, mass=1) -> ChartMap:
    """Forward-only symbolic chart (q, p) -> (T, H) for a potential V(q).

    With ``V`` None a formal potential V(q) is used.
    """
    q, p = coordinates("q p")
    T, H = coordinates("T H")
    if V is None:
        V = opaque("V", formal=True)(q)
    Tqp = time_function_symbolic(V, q, p, mass)
    return ChartMap("timeEnergy", (q, p), (T, H),
                    forward=(Tqp, p ** 2 / (2 * mass) + V), inverse=None,
                    singular="turning points p = 0 and critical points of V")


@dataclass(frozen=True)
class TimeEnergyNumeric:
    """Numeric time-energy chart for a single-well potential.

    T = 0 sits at the right turning point and T grows along the Hamiltonian
    flow, so the lower branch (p <= 0) covers [0, P/2] and the upper branch
    covers [P/2, P), where P is the period at energy H.

    Args:
        V: Potential as an expression in q.
        mass: Particle mass.
        well_center: A point inside the well used to pick the connected
            component of {V < H}. Defaults to a numerically located minimum.
    """

    V: sp.Expr
    mass: float = 1.0
    well_center: float | None = None
    name: str = "timeEnergy"

    def __post_init__(self):
        q = sym("q")
        V = sp.sympify(self.V)
        object.__setattr__(self, "_v", sp.lambdify(q, V, "math"))
        object.__setattr__(self, "_dv", sp.lambdify(q, sp.diff(V, q), "math"))
        object.__setattr__(self, "_taylor", tuple(
            sp.lambdify(q, sp.diff(V, q, k), "math") for k in (1, 2, 3)))
        if self.well_center is None:
            object.__setattr__(self, "well_center", self._locate_minimum())

    # -- potential helpers
    def _locate_minimum(self):
        xs = np.linspace(-10, 10, 4001)
        vs = np.array([self._v(x) for x in xs])
        i = int(np.argmin(vs))
        if i in (0, len(xs) - 1):
            raise DomainError("potential has no interior minimum on [-10, 10]")
        res = optimize.minimize_scalar(self._v, bracket=(xs[i - 1], xs[i], xs[i + 1]),
                                       tol=1e-12)
        return float(res.x)

    def turning_points(self, E: float) -> tuple[float, float]:
        """Turning points bounding the well at energy E."""
        c = self.well_center
        if not E > self._v(c):
            raise DomainError(f"energy {E} is at or below the well bottom")
        out = []
        for sgn in (-1.0, 1.0):
            step = 0.01 * (1 + abs(c))
            a = c
            b = c + sgn * step
            while self._v(b) < E:
                a, b = b, b + sgn * step
                step *= 1.2
                if abs(b - c) > 1e6:
                    raise DomainError(f"no turning point: V stays below {E}")
            lo, hi = (a, b) if a < b else (b, a)
            root = optimize.brentq(lambda z: self._v(z) - E, lo, hi, xtol=1e-14, rtol=1e-15)
            out.append(root)
        qL, qR = out
        self._check_single_well(E, qL, qR)
        return qL, qR

    def _check_single_well(self, E, qL, qR):
        xs = np.linspace(qL, qR, 801)[1:-1]
        vs = np.array([self._v(x) for x in xs])
        interior = vs[1:-1]
        peaks = (interior > vs[:-2]) & (interior > vs[2:])
        if np.any(peaks):
            top = float(interior[peaks].max())
            if abs(top - E) <= 1e-9 * max(1.0, abs(E)):
                raise DomainError("energy equals a barrier top: the time of arrival is infinite")

    def _endpoint_integrand(self, a, s):
        """u -> 2u / sqrt(2m (E - V(a + s u^2))) with E = V(a).

        Written as 2 / sqrt(2m g(u)) with g(u) = (V(a) - V(a + s u^2)) / u^2,
        using a Taylor expansion of g for tiny u to avoid cancellation.
        """
        m = self.mass
        va = self._v(a)
        d1, d2, d3 = (f(a) for f in self._taylor)
        small = 1e-4 * (1 + abs(a))

        def f(u):
            u2 = u * u
            if u2 < small:
                g = -s * d1 - d2 * u2 / 2 - s * d3 * u2 * u2 / 6
            else:
                g = (va - self._v(a + s * u2)) / u2
            return 2.0 / math.sqrt(2 * m * max(g, 1e-300))

        return f

    def _tau(self, q, E, qL, qR):
        """Time from q to the right turning point along the lower branch."""
        c = 0.5 * (qL + qR)
        total = 0.0
        opts = dict(epsabs=1e-15, epsrel=1e-13, limit=200)
        if q < c:
            lo = math.sqrt(max(q - qL, 0.0))
            hi = math.sqrt(c - qL)
            total += integrate.quad(self._endpoint_integrand(qL, 1.0), lo, hi, **opts)[0]
            start = c
        else:
            start = q
        hi = math.sqrt(max(qR - start, 0.0))
        total += integrate.quad(self._endpoint_integrand(qR, -1.0), 0.0, hi, **opts)[0]
        return self.mass * total

    def period(self, E: float) -> float:
        qL, qR = self.turning_points(E)
        return 2 * self._tau(qL, E, qL, qR)

    def forward(self, point) -> np.ndarray:
        q, p = (float(v) for v in point)
        m = self.mass
        E = p * p / (2 * m) + self._v(q)
        if p == 0 and abs(self._dv(q)) < 1e-14:
            raise DomainError("critical point of H: the time coordinate is undefined", (q, p))
        qL, qR = self.turning_points(E)
        if not qL - 1e-9 <= q <= qR + 1e-9:
            raise DomainError("point lies outside the chart's well", (q, p))
        q = min(max(q, qL), qR)
        tau = self._tau(q, E, qL, qR)
        if p <= 0:
            return np.array([tau, E])
        return np.array([2 * self._tau(qL, E, qL, qR) - tau, E])

    def inverse(self, point) -> np.ndarray:
        T, E = (float(v) for v in point)
        qL, qR = self.turning_points(E)
        P = 2 * self._tau(qL, E, qL, qR)
        t = T % P
        lower = t <= P / 2
        target = t if lower else P - t
        m = self.mass
        # solve tau(q) = target; tau decreases from P/2 at qL to 0 at qR
        lo, hi = qL, qR
        x = qR - (qR - qL) * target / (P / 2)
        for _ in range(100):
            f = self._tau(x, E, qL, qR) - target
            if f > 0:
                lo = x
            else:
                hi = x
            vel = math.sqrt(max(2 * m * (E - self._v(x)), 0.0)) / m
            nx = x + f * vel if vel > 0 else 0.5 * (lo + hi)
            if not lo < nx < hi:
                nx = 0.5 * (lo + hi)
            if abs(nx - x) <= 1e-15 * (1 + abs(x)) or hi - lo < 1e-15 * (1 + abs(x)):
                x = nx
                break
            x = nx
        pmag = math.sqrt(max(2 * m * (E - self._v(x)), 0.0))
        return np.array([x, -pmag if lower else pmag])

    def chart(self) -> ChartMap:
        q, p = coordinates("q p")
        T, H = coordinates("T H")
        fwd = time_energy_symbolic(self.V, self.mass).forward
        return ChartMap(self.name, (q, p), (T, H), forward=fwd, inverse=None,
                        forward_numeric=self.forward, inverse_numeric=self.inverse,
                        singular="turning points and critical points of V")


def time_energy_chart(V, mass: float = 1.0, well_center: float | None = None) -> ChartMap:
    """Numeric time-energy chart of a single-well potential."""
    return TimeEnergyNumeric(sp.sympify(V), mass, well_center).chart()


POTENTIALS = {
    "harmonic": "(* 1/2 (^ q 2))",
    "quartic": "(^ q 4)",
    "anharmonic": "(+ (* 1/2 (^ q 2)) (* 1/4 (^ q 4)))",
}


def get_chart(name: str) -> ChartMap:
    """Look up a chart by registry name.

    Known names: flat2d, flat4d, oscillatorTH, polar4d, doubleShear and
    timeEnergy:<id>, where <id> is a key of ``POTENTIALS`` or a prefix
    expression in q.
    """
    if name == "flat2d":
        return flat_chart(2)
    if name == "flat4d":
        return flat_chart(4)
    if name == "oscillatorTH":
        return oscillator_chart()
    if name == "polar4d":
        return polar_chart()
    if name == "doubleShear":
        return double_shear_chart()
    if name.startswith("timeEnergy:"):
        from .prefix import parse

        spec = name.split(":", 1)[1]
        V = parse(POTENTIALS.get(spec, spec))
        ch = time_energy_chart(V)
        return ChartMap(name, ch.old_coords, ch.new_coords, ch.forward, None,
                        ch.forward_numeric, ch.inverse_numeric, ch.singular)
    raise KeyError(f"unknown chart {name!r}")
