import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from fedosovkit.errors import (BoundaryMassWarning, GridError, NormalizationWarning,
                               ResolutionWarning)
from fedosovkit.grid import GridFunction, default_half_width
from fedosovkit.moyal import (expectation, hamiltonian_eigen_residuals, moyal_bracket,
                              moyal_differential, moyal_integral, moyal_integral_direct,
                              spectral_derivative)
from fedosovkit.oscillator import wigner_eigenfunction
from fedosovkit.symbolic import HBAR, coordinates, expr_equal, sym, to_numpy

q, p = coordinates("q p")
H_osc = (q ** 2 + p ** 2) / 2


def gaussian(q0, p0, s, hbar=1.0):
    """Normalized phase-space Gaussian with variances s hbar / 2 in both axes."""
    def f(Q, P):
        return np.exp(-((Q - q0) ** 2 + (P - p0) ** 2) / (s * hbar)) / (math.pi * s * hbar)
    return f


@pytest.fixture(scope="module")
def small_grid():
    # the default window at hbar = 1
    return dict(half_width=8.0, n=256, hbar=1.0)


def on_grid(f, spec):
    return GridFunction.symmetric(f, spec["half_width"], spec["n"], spec["hbar"])


gauss_params = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0.8, 2.0))


class TestDifferential:
    def test_q_p(self):
        res = moyal_differential(q, p, 1, (q, p))
        assert res.re == q * p and expr_equal(res.im, -HBAR / 2)

    def test_oscillator_ground_state(self):
        w = sp.exp(-2 * H_osc / HBAR) / (sp.pi * HBAR)
        res = moyal_differential(H_osc, w, 2, (q, p))
        assert expr_equal(res.re, HBAR / 2 * w)
        assert expr_equal(res.im, 0)

    def test_angular_momentum(self):
        x, y, px, py = coordinates("x y px py")
        Lz = x * py - y * px
        res = moyal_differential(Lz, Lz, 2, (x, y, px, py))
        assert expr_equal(res.re, Lz ** 2 - HBAR ** 2 / 2)
        assert expr_equal(res.im, 0)

    def test_bracket(self):
        assert moyal_bracket(q, p, order=1) == -1
        f = q ** 3 * p + sp.sin(q)
        assert moyal_bracket(f, f, order=3) == 0

    def test_bracket_needs_order(self):
        with pytest.raises(ValueError):
            moyal_bracket(q, p)


class TestIntegralProduct:
    def test_ground_state_idempotent(self, wigner_grids):
        W0 = wigner_grids[0]
        prod = moyal_integral(W0, W0)
        assert_allclose(prod.data.real, W0.data / (2 * math.pi), rtol=1e-6,
                        atol=1e-6 * W0.max_abs() / (2 * math.pi))
        assert np.abs(prod.data.imag).max() < 1e-10

    def test_orthogonal_states(self, wigner_grids):
        W0, W1 = wigner_grids[:2]
        assert np.abs(moyal_integral(W0, W1).data).max() < 1e-6 * W0.max_abs()

    def test_closedness(self, wigner_grids, small_grid):
        a = on_grid(gaussian(0.5, -0.3, 1.5), small_grid)
        b = on_grid(wigner_eigenfunction(1, 1.0).numeric, small_grid)
        lhs = moyal_integral(a, b).integral()
        rhs = a.with_data(a.data * b.data).integral()
        assert_allclose(lhs.real, rhs, rtol=1e-8)
        assert abs(lhs.imag) < 1e-10

    def test_grid_mismatch(self, wigner_grids):
        other = GridFunction.symmetric(gaussian(0, 0, 1), 7.0, 256, 1.0)
        with pytest.raises(GridError):
            moyal_integral(wigner_grids[0], other)

    def test_boundary_warning(self, small_grid):
        g = on_grid(gaussian(0, 0, 20), small_grid)
        with pytest.warns(BoundaryMassWarning):
            moyal_integral(g, g)

    def test_resolution_warning(self):
        g = GridFunction.symmetric(gaussian(0, 0, 1), 8.0, 32, 1.0)
        with pytest.warns(ResolutionWarning):
            moyal_integral(g, g)

    def test_direct_reference(self):
        spec = dict(half_width=5.0, n=48, hbar=1.0)
        a = on_grid(gaussian(0.4, 0.2, 1.2), spec)
        b = on_grid(lambda Q, P: (Q + 0.5 * P) * gaussian(-0.3, 0.1, 1.0)(Q, P), spec)
        fast = moyal_integral(a, b)
        pts = [(0.0, 0.0), (0.6, -0.4), (-1.0, 0.8)]
        idx = [(int(round((x + 5) / a.dq)), int(round((y + 5) / a.dp))) for x, y in pts]
        grid_pts = [(a.q[i], a.p[j]) for i, j in idx]
        slow = moyal_integral_direct(a, b, grid_pts)
        got = np.array([fast.data[i, j] for i, j in idx])
        assert_allclose(got, slow, rtol=1e-6, atol=1e-8)

    @settings(max_examples=6, deadline=None)
    @given(gauss_params, gauss_params)
    def test_closedness_random(self, pa, pb):
        spec = dict(half_width=7.0, n=128, hbar=1.0)
        a = on_grid(gaussian(*pa), spec)
        b = on_grid(lambda Q, P: gaussian(*pb)(Q, P) + 0.5 * gaussian(-pb[0], pb[1], 1.0)(Q, P),
                    spec)
        ab = moyal_integral(a, b).integral()
        ba = moyal_integral(b, a).integral()
        plain = a.with_data(a.data * b.data).integral()
        assert_allclose([ab.real, ba.real], [plain, plain], rtol=1e-8)

    @settings(max_examples=4, deadline=None)
    @given(gauss_params, gauss_params, gauss_params)
    def test_associative(self, pa, pb, pc):
        spec = dict(half_width=7.0, n=128, hbar=1.0)
        a, b, c = (on_grid(gaussian(*x), spec) for x in (pa, pb, pc))
        left = moyal_integral(moyal_integral(a, b), c).data
        right = moyal_integral(a, moyal_integral(b, c)).data
        scale = np.abs(left).max()
        assert np.abs(left - right).max() <= 1e-5 * scale

    @pytest.mark.parametrize("poly", [q, p, q * p, q ** 2 - p, q ** 3])
    def test_matches_series(self, poly, small_grid):
        # polynomial against a Gaussian: the series terminates, so it is exact
        s = 1.3
        g_expr = sp.exp(-((q - sp.Rational(1, 4)) ** 2 + p ** 2) / s) / (sp.pi * s)
        series = moyal_differential(poly, g_expr, 3, (q, p))
        a = on_grid(to_numpy(poly, (q, p), 1.0), small_grid)
        b = on_grid(to_numpy(g_expr, (q, p), 1.0), small_grid)
        with pytest.warns(BoundaryMassWarning):
            grid = moyal_integral(a, b).data
        Q, P = a.mesh()
        exact = (to_numpy(series.re, (q, p), 1.0)(Q, P)
                 + 1j * to_numpy(series.im, (q, p), 1.0)(Q, P))
        scale = np.abs(exact).max()
        # compare where the product is not dominated by the window edge
        inner = (np.abs(Q) < 4) & (np.abs(P) < 4)
        assert np.abs(grid - exact)[inner].max() <= 1e-6 * scale


class TestGridBracket:
    @pytest.mark.parametrize("n", [0, 1, 2])
    def test_hamiltonian_commutes(self, wigner_grids, n):
        W = wigner_grids[n]
        Hg = W.with_data(0.5 * (W.mesh()[0] ** 2 + W.mesh()[1] ** 2))
        with pytest.warns(BoundaryMassWarning):
            b = moyal_bracket(Hg, W)
        assert b.max_abs() < 1e-6 * W.max_abs()

    def test_self(self, wigner_grids):
        W = wigner_grids[1]
        g = W.with_data(W.data * np.cos(W.mesh()[0]))
        assert moyal_bracket(g, g).max_abs() == 0.0


class TestExpectation:
    def test_ground_energy(self, wigner_grids):
        assert_allclose(expectation(wigner_grids[0], H_osc), 0.5, rtol=1e-6)

    @pytest.mark.parametrize("n", [0, 3])
    def test_unit(self, wigner_grids, n):
        assert_allclose(expectation(wigner_grids[n], sp.Integer(1)), 1.0, rtol=1e-9)

    def test_position_mean(self, wigner_grids):
        assert abs(expectation(wigner_grids[0], q)) < 1e-9

    def test_unnormalized_warns(self, wigner_grids):
        W = wigner_grids[0]
        with pytest.warns(NormalizationWarning, match="integral = 2"):
            expectation(W.with_data(2 * W.data), q)


class TestHamiltonianResiduals:
    @pytest.mark.parametrize("n", [0, 1, 2, 3])
    def test_eigenstates(self, wigner_grids, n):
        W = wigner_grids[n]
        ra, rb = hamiltonian_eigen_residuals(q ** 2 / 2, W, n + 0.5)
        assert ra.max_abs() < 1e-6 * W.max_abs()
        assert rb.max_abs() < 1e-6 * W.max_abs()

    @pytest.mark.parametrize("n", [1, 2])
    def test_shifted_energy(self, wigner_grids, n):
        W = wigner_grids[n]
        _, rb = hamiltonian_eigen_residuals(q ** 2 / 2, W, float(n))
        assert_allclose(rb.max_abs(), 0.5 * W.max_abs(), rtol=1e-6)

    def test_free_particle(self):
        g = GridFunction.symmetric(gaussian(0.3, 0.5, 1.0), 8.0, 128, 1.0)
        ra, _ = hamiltonian_eigen_residuals(sp.Integer(0), g, 1.0)
        Q, P = g.mesh()
        dW = -2 * (Q - 0.3) * g.data
        assert_allclose(ra.data, -P * dW, atol=1e-10)
        assert_allclose(ra.data, -P * spectral_derivative(g, 0, 1), atol=1e-14)

    def test_series_agreement_quartic(self):
        V = q ** 2 / 2 + q ** 4 / 10
        w_expr = sp.exp(-(q ** 2 + p ** 2)) / sp.pi
        E = 0.7
        series = moyal_differential(p ** 2 / 2 + V, w_expr, 4, (q, p))
        g = GridFunction.symmetric(to_numpy(w_expr, (q, p), 1.0), 7.0, 128, 1.0)
        ra, rb = hamiltonian_eigen_residuals(V, g, E)
        Q, P = g.mesh()
        real = to_numpy(series.re - E * w_expr, (q, p), 1.0)(Q, P)
        imag = to_numpy(series.im, (q, p), 1.0)(Q, P)
        assert_allclose(rb.data, real, atol=1e-10)
        # the bracket equation is -(2 / hbar) Im(H * W)
        assert_allclose(ra.data, -2 * imag, atol=1e-10)

    def test_underresolved_warns(self):
        g = GridFunction.symmetric(gaussian(0, 0, 0.02), 8.0, 32, 1.0)
        with pytest.warns(ResolutionWarning):
            hamiltonian_eigen_residuals(q ** 2 / 2, g, 0.5)

    def test_non_polynomial_needs_order(self, wigner_grids):
        with pytest.raises(ValueError):
            hamiltonian_eigen_residuals(sp.cos(q), wigner_grids[0], 0.5)


class TestGridFunction:
    def test_minimum_size(self):
        with pytest.raises(GridError):
            GridFunction(0, 1, 4, 0, 1, 8, np.zeros((4, 8)))

    def test_nonfinite(self):
        with pytest.raises(GridError):
            GridFunction(0, 1, 8, 0, 1, 8, np.full((8, 8), np.nan))

    def test_default_width(self):
        assert_allclose(default_half_width(0.25), 4.0)

    def test_save_load(self, tmp_path, wigner_grids):
        W = wigner_grids[2]
        manifest = W.save(tmp_path / "w2.json")
        back = GridFunction.load(manifest)
        assert back.same_grid(W)
        assert_allclose(back.data, W.data, rtol=0, atol=0)

    def test_csv(self, tmp_path, small_grid):
        g = on_grid(gaussian(0, 0, 1), small_grid)
        path = tmp_path / "g.csv"
        g.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "q,p,value"
        assert len(lines) == 1 + g.n_q * g.n_p
