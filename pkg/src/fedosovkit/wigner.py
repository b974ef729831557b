"""Wigner functions: the pure-state transform, basic properties and purity tests.

Conventions. For a wavefunction psi,

    W(q, p) = (1 / 2 pi hbar) int dxi conj(psi(q + xi/2)) psi(q - xi/2) exp(-i xi p / hbar)

and the position-space kernel of a phase-space function is

    rho(q1, q2) = int dp W((q1 + q2)/2, p) exp(i p (q1 - q2) / hbar),

which for a pure state equals conj(psi(q1)) psi(q2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, GridError, NormalizationError, NotPureError
from .grid import GridFunction
from .moyal import moyal_integral, operator_kernel, _trap_weights

PROVENANCES = ("from-wavefunction", "candidate", "constructed")


@dataclass(frozen=True)
class Tolerances:
    """Thresholds used by the property checks and purity verdicts.

    The continuity check is a heuristic: a sampled function has no notion of
    continuity, so we flag adjacent samples differing by more than
    ``max_jump`` of the peak magnitude.
    """

    normalization: float = 1e-3
    l2: float = 1e-3
    bound: float = 1e-9
    max_jump: float = 0.5
    idempotence: float = 1e-4
    factorization: float = 1e-5
    imaginary: float = 1e-10
    wavefunction_norm: float = 1e-6


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class WignerState:
    """A real phase-space function on a (q, p) grid with a provenance tag."""

    grid: GridFunction
    provenance: str = "candidate"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        if np.iscomplexobj(self.grid.data):
            raise GridError("Wigner samples must be real")
        if self.provenance == "from-wavefunction":
            total = float(self.grid.integral())
            if abs(total - 1) > DEFAULT_TOL.normalization:
                raise NormalizationError(f"integral of W is {total}, expected 1")

    @property
    def hbar(self) -> float:
        return self.grid.hbar

    @property
    def data(self) -> np.ndarray:
        return self.grid.data

    def __add__(self, other):
        return WignerState(self.grid + other.grid, "constructed")

    def scaled(self, c):
        return WignerState(self.grid * c, "constructed")


def as_state(w) -> WignerState:
    return w if isinstance(w, WignerState) else WignerState(w, "candidate")


# ---------------------------------------------------------------- transforms

def _norm_check(values, step, tol, what):
    n2 = float(np.sum(np.abs(values) ** 2) * step)
    if abs(n2 - 1) > tol:
        raise NormalizationError(f"{what} has squared norm {n2:.8g}, expected 1")


def wigner_from_wavefunction(psi, q, hbar: float = 1.0, p=None,
                             tol: Tolerances = DEFAULT_TOL) -> WignerState:
    """Wigner function of a pure state sampled on the grid ``q``.

    The xi integral uses the grid's own points q_i +- j dq, so xi runs over
    even multiples of dq, and the sum is a matrix product with the Fourier
    factors for the requested momenta.

    Args:
        psi: Complex samples on ``q`` (uniform grid).
        q: Position grid.
        hbar: Planck constant.
        p: Momentum grid; defaults to ``q``.

    Raises:
        NormalizationError: If psi is not square-normalized to 1e-6.
        DomainError: If the result has an imaginary residue.
    """
    psi = np.asarray(psi, dtype=complex)
    q = np.asarray(q, dtype=float)
    p = q if p is None else np.asarray(p, dtype=float)
    n = q.size
    dq = q[1] - q[0]
    _norm_check(psi, dq, tol.wavefunction_norm, "wavefunction")
    J = n - 1
    js = np.arange(-J, J + 1)
    i = np.arange(n)[:, None]
    plus = i + js[None, :]
    minus = i - js[None, :]
    ok = (plus >= 0) & (plus < n) & (minus >= 0) & (minus < n)
    G = np.where(ok, np.conj(psi[np.clip(plus, 0, n - 1)]) * psi[np.clip(minus, 0, n - 1)], 0)
    E = np.exp(-1j * np.outer(2 * js * dq, p) / hbar) * (2 * dq)
    W = G @ E / (2 * math.pi * hbar)
    scale = np.abs(W).max()
    if np.abs(W.imag).max() > tol.imaginary * max(scale, 1e-300):
        raise DomainError("Wigner transform has a non-negligible imaginary part")
    grid = GridFunction(q[0], q[-1], n, p[0], p[-1], p.size, W.real, hbar)
    return WignerState(grid, "from-wavefunction")


def momentum_wavefunction(psi, q, p, hbar: float = 1.0) -> np.ndarray:
    """phi(p) = (2 pi hbar)^(-1/2) int psi(q) exp(i p q / hbar) dq.

    The sign of the exponent matches the position formula above, so that
    both produce the same W.
    """
    psi = np.asarray(psi, dtype=complex)
    q = np.asarray(q, dtype=float)
    w = _trap_weights(q.size, q[1] - q[0])
    return np.exp(1j * np.outer(p, q) / hbar) @ (psi * w) / math.sqrt(2 * math.pi * hbar)


def wigner_from_momentum(phi, p, hbar: float = 1.0, q=None) -> GridFunction:
    """W(q, p) = (1/2 pi hbar) int deta conj(phi(p + eta/2)) phi(p - eta/2) exp(i eta q / hbar)."""
    phi = np.asarray(phi, dtype=complex)
    p = np.asarray(p, dtype=float)
    q = p if q is None else np.asarray(q, dtype=float)
    n = p.size
    dp = p[1] - p[0]
    J = n - 1
    js = np.arange(-J, J + 1)
    j = np.arange(n)[:, None]
    plus = j + js[None, :]
    minus = j - js[None, :]
    ok = (plus >= 0) & (plus < n) & (minus >= 0) & (minus < n)
    G = np.where(ok, np.conj(phi[np.clip(plus, 0, n - 1)]) * phi[np.clip(minus, 0, n - 1)], 0)
    E = np.exp(1j * np.outer(2 * js * dp, q) / hbar) * (2 * dp)
    Wpq = G @ E / (2 * math.pi * hbar)  # rows p, columns q
    return GridFunction(q[0], q[-1], q.size, p[0], p[-1], n, Wpq.T.real, hbar)


# ---------------------------------------------------------------- properties

@dataclass(frozen=True)
class PropertyReport:
    real: bool
    normalization: float
    normalization_ok: bool
    l2: float
    l2_expected: float
    l2_ok: bool
    sup: float
    sup_bound: float
    bound_ok: bool
    max_jump: float
    continuity_ok: bool

    @property
    def all_ok(self) -> bool:
        return (self.real and self.normalization_ok and self.l2_ok and self.bound_ok
                and self.continuity_ok)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["all_ok"] = self.all_ok
        return d


def max_adjacent_jump(g: GridFunction) -> float:
    """Largest difference between neighbouring samples, relative to the peak."""
    a = np.real(g.data)
    peak = np.abs(a).max()
    if peak == 0:
        return 0.0
    j = max(np.abs(np.diff(a, axis=0)).max(), np.abs(np.diff(a, axis=1)).max())
    return float(j / peak)


def check_basic_properties(w, tol: Tolerances = DEFAULT_TOL) -> PropertyReport:
    """Realness, normalization, L2 norm, sup bound and a continuity heuristic."""
    w = as_state(w)
    g = w.grid
    h = g.hbar
    total = float(np.real(g.integral()))
    l2 = float(np.real(g.with_data(np.abs(g.data) ** 2).integral()))
    l2_expected = 1 / (2 * math.pi * h)
    sup = g.max_abs()
    bound = 1 / (math.pi * h)
    jump = max_adjacent_jump(g)
    return PropertyReport(
        real=not np.iscomplexobj(g.data),
        normalization=total,
        normalization_ok=abs(total - 1) <= tol.normalization,
        l2=l2,
        l2_expected=l2_expected,
        l2_ok=abs(l2 / l2_expected - 1) <= tol.l2,
        sup=sup,
        sup_bound=bound,
        bound_ok=sup <= bound * (1 + tol.bound),
        max_jump=jump,
        continuity_ok=jump <= tol.max_jump,
    )


# ---------------------------------------------------------------- purity

class IdempotenceResult(NamedTuple):
    defect: float
    pure: bool
    threshold: float


def _require_normalized(w: WignerState, tol):
    total = float(np.real(w.grid.integral()))
    if abs(total - 1) > tol:
        raise NormalizationError(f"state is not normalized: integral = {total:.6g}")
    return total


def purity_idempotence(w, tol: Tolerances = DEFAULT_TOL) -> IdempotenceResult:
    """Defect d = |2 pi hbar W*W - W|_inf / |W|_inf; pure iff d < threshold."""
    w = as_state(w)
    _require_normalized(w, tol.normalization)
    g = w.grid
    ww = moyal_integral(g, g)
    d = np.abs(2 * math.pi * g.hbar * ww.data - g.data).max() / g.max_abs()
    return IdempotenceResult(float(d), bool(d < tol.idempotence), tol.idempotence)


def idempotence_defect_quadrature(w, indices, form: str = "difference") -> np.ndarray:
    """Idempotence defect at selected grid points by direct quadrature.

    Evaluates (2 / pi hbar) int W(q', p') W(q'', p'') cos(2 phi / hbar) - W(q, p)
    with the phase phi written either as
    (q' - q)(p'' - p) - (q'' - q)(p' - p)   (form "difference") or as the
    sum of the three planar cross products V' x V'' + V x V' + V'' x V
    (form "cross"). Both are O(n^3) per point.

    Args:
        w: State on a small grid.
        indices: Iterable of (i, j) grid indices.
        form: "difference" or "cross".

    Returns:
        Defects relative to max |W|, one per point.
    """
    w = as_state(w)
    g = w.grid
    h = g.hbar
    q, pv = g.q, g.p
    wq = _trap_weights(g.n_q, g.dq)
    wp = _trap_weights(g.n_p, g.dp)
    A = g.data * wq[:, None] * wp[None, :]
    out = []
    for i, j in indices:
        q0, p0 = q[i], pv[j]
        if form == "difference":
            # exp(i k [(q'-q0)(p''-p0) - (q''-q0)(p'-p0)]), k = 2/hbar
            E1 = np.exp(-2j * np.outer(pv - p0, q - q0) / h)  # [p', q'']
            E2 = np.exp(2j * np.outer(q - q0, pv - p0) / h)  # [q', p'']
            Y = (A @ E1) @ A
            val = np.sum(Y * E2)
        elif form == "cross":
            # q'p'' - p'q'' + q0 p' - p0 q' + q'' p0 - p'' q0
            E1 = np.exp(2j * (np.outer(-pv, q) + q0 * pv[:, None] + p0 * q[None, :]) / h)
            E2 = np.exp(2j * (np.outer(q, pv) - p0 * q[:, None] - q0 * pv[None, :]) / h)
            Y = (A @ E1) @ A
            val = np.sum(Y * E2)
        else:
            raise ValueError("form must be 'difference' or 'cross'")
        lhs = 2 / (math.pi * h) * val.real
        out.append(abs(lhs - g.data[i, j]) / g.max_abs())
    return np.array(out)


def density_matrix(w) -> np.ndarray:
    """rho[a, b] = rho(q_a, q_b) on the q-grid."""
    g = as_state(w).grid
    K = operator_kernel(g)
    return 2 * math.pi * g.hbar * K.T


class FactorizationResult(NamedTuple):
    sigma_ratio: float
    pure: bool
    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray
    hermiticity_defect: float


def purity_factorization(w, tol: Tolerances = DEFAULT_TOL) -> FactorizationResult:
    """Rank-one test of the position kernel rho(q1, q2).

    Pure iff sigma_2 / sigma_1 < threshold. The returned factors satisfy
    rho(q_a, q_b) ~ left[a] * right[b] with int |left|^2 dq = sigma_1 dq.

    Raises:
        DomainError: If the continuity heuristic fails or rho vanishes.
    """
    w = as_state(w)
    g = w.grid
    _require_normalized(w, tol.normalization)
    if max_adjacent_jump(g) > tol.max_jump:
        raise DomainError("sampled function fails the continuity heuristic")
    rho = density_matrix(w)
    if not np.any(np.abs(rho) > 0):
        raise DomainError("position kernel vanishes identically")
    herm = float(np.abs(rho - rho.conj().T).max() / np.abs(rho).max())
    U, S, Vh = np.linalg.svd(rho)
    ratio = float(S[1] / S[0]) if S.size > 1 else 0.0
    left = math.sqrt(S[0]) * U[:, 0]
    right = math.sqrt(S[0]) * Vh[0]
    return FactorizationResult(ratio, bool(ratio < tol.factorization), S[:8].copy(),
                               left, right, herm)


class ExtractedWavefunction(NamedTuple):
    q: np.ndarray
    psi: np.ndarray
    norm: float
    valid: bool


def extract_wavefunction(w, tol: Tolerances = DEFAULT_TOL) -> ExtractedWavefunction:
    """Recover psi from a pure-state Wigner function.

    With rho(q1, q2) = conj(psi(q1)) psi(q2), choose q0 where the marginal
    rho(q0, q0) peaks and return psi(q) = rho(q0, q) / sqrt(rho(q0, q0)),
    which fixes the global phase so that psi(q0) is real and positive.

    Raises:
        NotPureError: If the factorization test rejects the state.
    """
    w = as_state(w)
    fac = purity_factorization(w, tol)
    if not fac.pure:
        raise NotPureError(f"state is not pure: sigma2/sigma1 = {fac.sigma_ratio:.3e}")
    rho = density_matrix(w)
    marginal = rho.diagonal().real
    i0 = int(np.argmax(marginal))
    psi = rho[i0] / math.sqrt(marginal[i0])
    g = w.grid
    norm = float(np.sum(np.abs(psi) ** 2) * g.dq)
    return ExtractedWavefunction(g.q, psi, norm, abs(norm - 1) <= 1e-4)
