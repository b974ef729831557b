import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from fedosovkit.errors import DomainError, GridError, NormalizationError, NotPureError
from fedosovkit.grid import GridFunction, default_grid
from fedosovkit.oscillator import hermite_wavefunction, wigner_eigenfunction
from fedosovkit.wigner import (Tolerances, WignerState, check_basic_properties, density_matrix,
                               extract_wavefunction, idempotence_defect_quadrature,
                               momentum_wavefunction, purity_factorization, purity_idempotence,
                               wigner_from_momentum, wigner_from_wavefunction)

HBAR = 1.0


@pytest.fixture(scope="module")
def qgrid():
    return default_grid(lambda Q, P: 0 * Q, HBAR).q


def coherent(q, q0, p0, hbar=HBAR, s=1.0):
    """Normalized Gaussian centred at q0 with carrier momentum p0 and width factor s."""
    return ((math.pi * s * hbar) ** -0.25
            * np.exp(-(q - q0) ** 2 / (2 * s * hbar) + 1j * p0 * q / hbar))


def state(psi, q):
    return wigner_from_wavefunction(psi, q, HBAR)


def mixture(a, b, t):
    return a.scaled(t) + b.scaled(1 - t)


def phase_aligned(psi, ref):
    """psi times the global phase that best matches ref."""
    z = np.vdot(psi, ref)
    return psi * z / abs(z)


@pytest.fixture(scope="module")
def eigen_states(wigner_grids):
    return [WignerState(g, "from-wavefunction") for g in wigner_grids]


@pytest.fixture(scope="module")
def mixed(eigen_states):
    return mixture(eigen_states[0], eigen_states[1], 0.5)


@pytest.fixture(scope="module")
def wide_gaussian():
    g = default_grid(lambda Q, P: np.exp(-(Q ** 2 + P ** 2) / (2 * HBAR)) / (2 * math.pi * HBAR),
                     HBAR)
    return WignerState(g)


class TestTransform:
    def test_ground_state(self, qgrid):
        W = state(hermite_wavefunction(0, qgrid, HBAR), qgrid)
        Q, P = W.grid.mesh()
        exact = np.exp(-(Q ** 2 + P ** 2) / HBAR) / (math.pi * HBAR)
        assert_allclose(W.data, exact, rtol=1e-6, atol=1e-6 * exact.max())

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_excited_states(self, qgrid, n):
        W = state(hermite_wavefunction(n, qgrid, HBAR), qgrid)
        Q, P = W.grid.mesh()
        exact = wigner_eigenfunction(n, HBAR).numeric(Q, P)
        assert np.abs(W.data - exact).max() <= 1e-5 * np.abs(exact).max()

    @pytest.mark.parametrize("psi_args", [(0.0, 0.0), (1.0, -0.5), (-0.7, 1.2)])
    def test_momentum_route(self, qgrid, psi_args):
        psi = coherent(qgrid, *psi_args)
        W = state(psi, qgrid)
        phi = momentum_wavefunction(psi, qgrid, qgrid, HBAR)
        Wp = wigner_from_momentum(phi, qgrid, HBAR, qgrid)
        assert np.abs(Wp.data - W.data).max() <= 1e-6 * W.grid.max_abs()

    def test_momentum_peak_convention(self, qgrid):
        # exp(i p0 q / hbar) puts the peak at p = -p0 with this sign of the transform
        W = state(coherent(qgrid, 0.0, 1.5), qgrid)
        i, j = np.unravel_index(np.argmax(W.data), W.data.shape)
        assert_allclose([W.grid.q[i], W.grid.p[j]], [0.0, -1.5], atol=W.grid.dq)

    def test_unnormalized_psi(self, qgrid):
        with pytest.raises(NormalizationError):
            state(2 * hermite_wavefunction(0, qgrid), qgrid)

    def test_real_samples_required(self, wigner_grids):
        g = wigner_grids[0]
        with pytest.raises(GridError):
            WignerState(g.with_data(g.data + 0j))

    def test_provenance_normalization(self, wigner_grids):
        g = wigner_grids[0]
        with pytest.raises(NormalizationError):
            WignerState(g * 2.0, "from-wavefunction")
        with pytest.raises(ValueError):
            WignerState(g, "guess")


class TestProperties:
    def test_ground_state(self):
        # an odd point count puts a sample on the origin, where W0 peaks
        rep = check_basic_properties(wigner_eigenfunction(0, HBAR).grid(n_points=257))
        assert rep.all_ok
        assert_allclose(rep.sup, 1 / (math.pi * HBAR), rtol=1e-14)
        assert_allclose(rep.l2, 1 / (2 * math.pi * HBAR), rtol=1e-6)

    def test_mixture(self, mixed):
        rep = check_basic_properties(mixed)
        assert rep.normalization_ok
        assert not rep.l2_ok
        # (1/4) (int W0^2 + int W1^2) = 1 / (4 pi hbar)
        assert_allclose(rep.l2, 1 / (4 * math.pi * HBAR), rtol=1e-6)

    def test_scaled(self, eigen_states):
        rep = check_basic_properties(eigen_states[0].scaled(2.0))
        assert not rep.normalization_ok
        assert_allclose(rep.normalization, 2.0, rtol=1e-9)

    def test_discontinuous_candidate(self, rng):
        g = default_grid(lambda Q, P: 0 * Q, HBAR)
        noisy = g.with_data(rng.standard_normal((g.n_q, g.n_p)))
        assert not check_basic_properties(noisy).continuity_ok

    @settings(max_examples=10, deadline=None)
    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.4, 2.5))
    def test_pure_states_satisfy_all(self, q0, p0, s):
        q = default_grid(lambda Q, P: 0 * Q, HBAR).q
        rep = check_basic_properties(state(coherent(q, q0, p0, s=s), q))
        assert rep.all_ok, rep.to_dict()


class TestIdempotence:
    @pytest.mark.parametrize("n", range(4))
    def test_eigenstates_pure(self, eigen_states, n):
        res = purity_idempotence(eigen_states[n])
        assert res.pure and res.defect < 1e-4

    def test_mixture(self, mixed):
        res = purity_idempotence(mixed)
        assert not res.pure
        assert_allclose(res.defect, 0.5, rtol=1e-3)

    def test_wide_gaussian(self, wide_gaussian):
        # Gaussian oracle: exp(-a r^2) * exp(-b r^2) = exp(-(a+b) r^2 / (1 + ab hbar^2)) / (1 + ab hbar^2)
        # so for the double-variance state 2 pi hbar W*W = exp(-r^2 / (5 hbar / 4)) / (5 pi hbar / 2)
        g = wide_gaussian.grid
        Q, P = g.mesh()
        star_sq = np.exp(-(Q ** 2 + P ** 2) / (1.25 * HBAR)) / (2.5 * math.pi * HBAR)
        expected = np.abs(star_sq - g.data).max() / g.max_abs()
        res = purity_idempotence(wide_gaussian)
        assert not res.pure
        assert_allclose(res.defect, expected, rtol=1e-6)

    def test_requires_normalization(self, eigen_states):
        with pytest.raises(NormalizationError):
            purity_idempotence(eigen_states[0].scaled(3.0))


class TestQuadratureForms:
    @pytest.fixture(scope="class")
    def small_states(self):
        q = np.linspace(-6, 6, 64)
        pure = wigner_from_wavefunction(hermite_wavefunction(1, q, HBAR), q, HBAR)
        other = wigner_from_wavefunction(coherent(q, 0.8, 0.3), q, HBAR)
        wide = WignerState(GridFunction.symmetric(
            lambda Q, P: np.exp(-(Q ** 2 + P ** 2) / 2) / (2 * math.pi), 6.0, 64, HBAR))
        return [pure, mixture(pure, other, 0.4), wide]

    @pytest.mark.parametrize("k", range(3))
    def test_cross_form_agrees(self, small_states, k):
        pts = [(32, 32), (20, 40), (45, 28)]
        a = idempotence_defect_quadrature(small_states[k], pts, "difference")
        b = idempotence_defect_quadrature(small_states[k], pts, "cross")
        assert_allclose(a, b, rtol=1e-8, atol=1e-12)

    @pytest.mark.parametrize("k", range(3))
    def test_matches_grid_product(self, small_states, k):
        w = small_states[k]
        g = w.grid
        pts = [(32, 32), (20, 40), (45, 28)]
        from fedosovkit.moyal import moyal_integral
        ww = moyal_integral(g, g).data.real * 2 * math.pi * HBAR
        grid_defect = [abs(ww[i, j] - g.data[i, j]) / g.max_abs() for i, j in pts]
        assert_allclose(idempotence_defect_quadrature(w, pts), grid_defect, atol=1e-6)

    def test_unknown_form(self, small_states):
        with pytest.raises(ValueError):
            idempotence_defect_quadrature(small_states[0], [(0, 0)], "polar")


class TestFactorization:
    @pytest.mark.parametrize("n", range(4))
    def test_eigenstates(self, eigen_states, n):
        res = purity_factorization(eigen_states[n])
        assert res.pure
        q = eigen_states[n].grid.q
        psi = hermite_wavefunction(n, q, HBAR)
        for v in (res.right, np.conj(res.left)):
            aligned = phase_aligned(v, psi)
            assert np.abs(aligned - psi).max() <= 1e-4 * np.abs(psi).max()

    def test_mixture_rank_two(self, mixed):
        res = purity_factorization(mixed)
        assert not res.pure
        assert_allclose(res.sigma_ratio, 1.0, rtol=1e-6)

    def test_diagonal_is_marginal(self, eigen_states):
        g = eigen_states[0].grid
        rho = density_matrix(eigen_states[0])
        marginal = g.data.sum(axis=1) * g.dp
        assert_allclose(rho.diagonal().real, marginal, atol=1e-10)
        assert np.all(rho.diagonal().real >= -1e-12)

    @pytest.mark.parametrize("k", range(3))
    def test_hermitian(self, eigen_states, mixed, k):
        w = [eigen_states[2], mixed, eigen_states[3]][k]
        rho = density_matrix(w)
        assert np.abs(rho - rho.conj().T).max() <= 1e-8 * np.abs(rho).max()

    def test_continuity_required(self, rng):
        g = default_grid(lambda Q, P: 0 * Q, HBAR)
        noise = rng.standard_normal((g.n_q, g.n_p))
        noise /= g.with_data(noise).integral()
        with pytest.raises(DomainError):
            purity_factorization(g.with_data(noise))


class TestExtraction:
    @pytest.mark.parametrize("n", [0, 1])
    def test_hermite(self, eigen_states, n):
        ext = extract_wavefunction(eigen_states[n])
        psi = hermite_wavefunction(n, ext.q, HBAR)
        assert ext.valid
        assert np.abs(phase_aligned(ext.psi, psi) - psi).max() <= 1e-5 * np.abs(psi).max()

    def test_phase_fixed_at_peak(self, eigen_states):
        ext = extract_wavefunction(eigen_states[1])
        i0 = np.argmax(np.abs(ext.psi))
        assert abs(ext.psi[i0].imag) < 1e-12 and ext.psi[i0].real > 0

    @pytest.mark.parametrize("n", range(4))
    def test_round_trip(self, eigen_states, n):
        ext = extract_wavefunction(eigen_states[n])
        back = wigner_from_wavefunction(ext.psi, ext.q, HBAR)
        W = eigen_states[n].data
        assert np.abs(back.data - W).max() <= 1e-4 * np.abs(W).max()

    def test_coherent_state(self, qgrid):
        psi = coherent(qgrid, 0.6, -0.9)
        ext = extract_wavefunction(state(psi, qgrid))
        assert np.abs(phase_aligned(ext.psi, psi) - psi).max() <= 1e-6

    def test_mixture_rejected(self, mixed):
        with pytest.raises(NotPureError):
            extract_wavefunction(mixed)


def _corpus(qgrid, eigen_states, rng):
    states = [(w, True) for w in eigen_states]
    for q0, p0 in [(0.5, 0.5), (-1.0, 0.3), (1.5, -1.0), (0.0, 2.0), (-2.0, -1.5)]:
        states.append((state(coherent(qgrid, q0, p0), qgrid), True))
    for s in [0.3, 0.5, 2.0, 3.0, 0.7, 1.6]:
        states.append((state(coherent(qgrid, 0.2, -0.4, s=s), qgrid), True))
    for _ in range(5):
        a = state(coherent(qgrid, *rng.uniform(-1.5, 1.5, 2)), qgrid)
        b = state(coherent(qgrid, *rng.uniform(-1.5, 1.5, 2), s=rng.uniform(0.5, 2)), qgrid)
        states.append((mixture(a, b, rng.uniform(0.2, 0.8)), False))
    return states


class TestVerdictAgreement:
    # squeezed and displaced members touch the window edge at the 1e-6 level
    @pytest.mark.filterwarnings("ignore::fedosovkit.errors.BoundaryMassWarning")
    def test_twenty_states(self, qgrid, eigen_states, rng):
        corpus = _corpus(qgrid, eigen_states, rng)
        assert len(corpus) == 20
        for w, expected in corpus:
            a = purity_idempotence(w).pure
            b = purity_factorization(w).pure
            assert a == b == expected

    def test_custom_thresholds(self, mixed):
        lax = Tolerances(idempotence=0.9, factorization=1.1)
        assert purity_idempotence(mixed, lax).pure
        assert purity_factorization(mixed, lax).pure
