"""Covariance, kernel, and sampler behavior of the fBm module."""

import numpy as np
import pytest
from scipy.stats import ks_2samp

from fracdev import fbm
from fracdev.grids import TimeGrid
from fracdev.rkhs import ControlL2
from fracdev.mckean import shift_ensemble

from _oracles import c_h_oracle, kernel_oracle

H = 0.75


class TestCovariance:
    def test_diagonal_is_power_law(self):
        assert fbm.cov(H, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
        assert fbm.cov(0.6, 2.0, 2.0) == pytest.approx(2.0 ** 1.2, rel=1e-14)

    def test_zero_time_vanishes(self):
        for t in (0.0, 0.3, 1.0):
            assert fbm.cov(H, 0.0, t) == 0.0

    def test_off_diagonal_value(self):
        # 0.5 * (1 + 2^{1.5} - 1) = sqrt(2)
        assert fbm.cov(H, 1.0, 2.0) == pytest.approx(1.4142135623730951, rel=1e-14)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for s, t in rng.uniform(0, 2, size=(20, 2)):
            assert fbm.cov(H, s, t) == fbm.cov(H, t, s)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            fbm.cov(H, -0.1, 0.5)

    def test_hurst_domain_is_strict(self):
        for bad in (0.5, 1.0, 0.3, 1.2):
            with pytest.raises(ValueError):
                fbm.check_hurst(bad)


class TestKernelConstant:
    def test_value_against_gamma_identity(self):
        assert fbm.c_h(H) == pytest.approx(c_h_oracle(H), rel=1e-12)
        assert fbm.c_h(H) == pytest.approx(0.2674111587579976, rel=1e-12)

    def test_finite_positive_across_range(self):
        for h in (0.55, 0.65, 0.85, 0.95):
            val = fbm.c_h(h)
            assert np.isfinite(val) and val > 0

    def test_vanishes_toward_half(self):
        vals = [fbm.c_h(h) for h in (0.51, 0.505, 0.501)]
        assert vals[0] > vals[1] > vals[2] > 0


class TestKernel:
    def test_zero_for_t_below_s(self):
        assert fbm.kernel_K(H, 0.3, 0.5) == 0.0
        assert fbm.kernel_K(H, 0.5, 0.5) == 0.0

    def test_rejects_zero_s(self):
        with pytest.raises(ValueError):
            fbm.kernel_K(H, 1.0, 0.0)

    def test_against_substitution_quadrature(self):
        for t, s in [(1.0, 0.5), (1.0, 0.1), (0.7, 0.3), (2.0, 1.5)]:
            ref = kernel_oracle(H, t, s)
            assert fbm.kernel_K(H, t, s) == pytest.approx(ref, rel=2e-3)
            assert fbm.kernel_K(H, t, s, n_cells=2048) == pytest.approx(ref, rel=1e-4)
            assert fbm.kernel_exact(H, t, s) == pytest.approx(ref, rel=1e-10)

    def test_increasing_in_t(self):
        vals = [fbm.kernel_K(H, t, 0.4) for t in (0.5, 0.8, 1.2, 2.0)]
        assert all(b > a > 0 for a, b in zip(vals, vals[1:]))

    def test_near_diagonal_finite_positive(self):
        val = fbm.kernel_K(H, 1.0, 0.999)
        assert np.isfinite(val) and val > 0

    def test_square_integral_identity(self):
        # int_0^t K(t,s)^2 ds = t^{2H}, midpoint rule on the outer integral
        def sq_quad(t, n_cells):
            mids = (np.arange(n_cells) + 0.5) * t / n_cells
            vals = np.array([fbm.kernel_K(H, t, s, n_cells=256) for s in mids])
            return np.sum(vals ** 2) * t / n_cells

        for t in (0.5, 1.0):
            err = abs(sq_quad(t, 512) / t ** (2 * H) - 1.0)
            assert err < 0.01
            err2 = abs(sq_quad(t, 1024) / t ** (2 * H) - 1.0)
            assert err2 < err

    def test_product_integral_converges_to_covariance(self):
        # int_0^{t^s} K(t,r) K(s,r) dr -> R(t,s); cell rule with the
        # r^{1-2H} factor integrated exactly and the rest frozen
        def prod_quad(t, s, n_cells):
            upper = min(t, s)
            edges = np.linspace(0.0, upper, n_cells + 1)
            mids = 0.5 * (edges[:-1] + edges[1:])
            wts = (edges[1:] ** (2 - 2 * H) - edges[:-1] ** (2 - 2 * H)) / (2 - 2 * H)
            f = np.array(
                [
                    fbm.kernel_exact(H, t, m) * fbm.kernel_exact(H, s, m) / m ** (1 - 2 * H)
                    for m in mids
                ]
            )
            return float(np.sum(wts * f))

        for t, s in [(0.5, 1.0), (1.0, 1.0)]:
            target = fbm.cov(H, s, t)
            e1 = abs(prod_quad(t, s, 128) - target)
            e2 = abs(prod_quad(t, s, 256) - target)
            assert e2 <= 0.5 * e1

    def test_fundamental_theorem_consistency(self):
        # K(t,s) = int_s^t dK/ds(u, s) du, integrated after v = (u-s)^{H-1/2}
        from scipy.special import roots_legendre

        p = H - 0.5
        x, w = roots_legendre(64)
        for t, s in [(1.0, 0.5), (0.8, 0.2)]:
            vmax = (t - s) ** p
            v = 0.5 * vmax * (x + 1.0)
            u = s + v ** (1.0 / p)
            dk = np.array([fbm.kernel_K_ds(H, ui, s) for ui in u])
            integral = 0.5 * vmax * np.sum(w * dk * (u - s) ** (1.5 - H)) / p
            assert integral == pytest.approx(fbm.kernel_K(H, t, s, 2048), rel=5e-4)


class TestKernelDerivative:
    def test_closed_form_value(self):
        expected = fbm.c_h(H) * 2 ** 0.25 * 0.5 ** -0.75
        assert fbm.kernel_K_ds(H, 1.0, 0.5) == pytest.approx(expected, rel=1e-14)
        assert fbm.kernel_K_ds(H, 1.0, 0.5) == pytest.approx(0.534822, abs=1e-6)

    def test_blows_up_at_diagonal(self):
        assert fbm.kernel_K_ds(H, 1.0, 1.0 - 1e-6) > 1e3

    def test_homogeneity(self):
        for s, r in [(1.0, 0.5), (0.9, 0.2)]:
            lhs = fbm.kernel_K_ds(H, 2 * s, 2 * r)
            rhs = 2 ** (H - 1.5) * fbm.kernel_K_ds(H, s, r)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            fbm.kernel_K_ds(H, 0.5, 0.7)
        with pytest.raises(ValueError):
            fbm.kernel_K_ds(H, 0.5, 0.0)


class TestDiscreteMap:
    def test_node_variances_exact(self):
        grid = TimeGrid(1.0, 64)
        for h in (0.6, 0.75, 0.9):
            W = fbm.volterra_weights(h, grid)
            var = (W ** 2).sum(axis=1) * grid.dt
            assert np.allclose(var, grid.nodes[1:] ** (2 * h), rtol=1e-12)

    def test_model_covariance_bias_small(self):
        # bias of the discrete map, in units of the n=4000 sampling error
        grid = TimeGrid(1.0, 64)
        for h in (0.6, 0.75, 0.9):
            W = fbm.volterra_weights(h, grid)
            R = fbm.covariance_matrix(h, grid)
            disc = (W @ W.T) * grid.dt
            se = np.sqrt((np.outer(np.diag(R), np.diag(R)) + R ** 2) / 4000.0)
            assert np.max(np.abs(disc - R) / se) < 1.0

    def test_covariance_factor_positive_definite(self):
        for h in (0.55, 0.75, 0.95):
            for n in (16, 64):
                grid = TimeGrid(1.0, n)
                L = fbm.cholesky_factor(h, grid)
                R = fbm.covariance_matrix(h, grid)
                assert np.allclose(L @ L.T, R, atol=1e-10)


class TestSamplers:
    def test_cholesky_terminal_variance(self):
        grid = TimeGrid(1.0, 64)
        ens = fbm.sample_cholesky(H, grid, 1, 4000, 2024)
        vals = ens.values[:, -1, 0]
        est = np.mean(vals ** 2)
        se = np.std(vals ** 2, ddof=1) / np.sqrt(vals.size)
        assert abs(est - 1.0) < 5 * se

    def test_cholesky_increment_stationarity(self):
        grid = TimeGrid(1.0, 64)
        ens = fbm.sample_cholesky(H, grid, 1, 4000, 7)
        k1, k05 = 64, 32
        inc = ens.values[:, k1, 0] - ens.values[:, k05, 0]
        est = np.mean(inc ** 2)
        se = np.std(inc ** 2, ddof=1) / np.sqrt(inc.size)
        assert abs(est - 0.5 ** (2 * H)) < 5 * se

    def test_determinism_bit_identical(self):
        grid = TimeGrid(1.0, 32)
        a = fbm.sample_cholesky(H, grid, 2, 50, 99).values
        b = fbm.sample_cholesky(H, grid, 2, 50, 99).values
        assert np.array_equal(a, b)
        c = fbm.sample_volterra(H, grid, 2, 50, 99).values
        d = fbm.sample_volterra(H, grid, 2, 50, 99).values
        assert np.array_equal(c, d)

    def test_batch_size_independence(self):
        grid = TimeGrid(1.0, 32)
        whole = fbm.sample_volterra(H, grid, 2, 100, 5).values
        part1 = fbm.sample_volterra(H, grid, 2, 37, 5).values
        part2 = fbm.sample_volterra(H, grid, 2, 63, 5, path_offset=37).values
        assert np.array_equal(whole, np.concatenate([part1, part2], axis=0))

    def test_volterra_cross_covariance(self):
        grid = TimeGrid(1.0, 64)
        ens = fbm.sample_volterra(H, grid, 1, 4000, 11)
        b_half = ens.values[:, 32, 0]
        b_one = ens.values[:, 64, 0]
        prod = b_half * b_one
        est = prod.mean()
        se = np.std(prod, ddof=1) / np.sqrt(prod.size)
        assert abs(est - fbm.cov(H, 0.5, 1.0)) < 5 * se

    def test_samplers_agree_in_law(self):
        grid = TimeGrid(1.0, 64)
        a = fbm.sample_volterra(H, grid, 1, 2000, 31).values[:, -1, 0]
        b = fbm.sample_cholesky(H, grid, 1, 2000, 31).values[:, -1, 0]
        assert ks_2samp(a, b).pvalue > 0.01

    def test_bundle_reproduces_from_increments(self):
        grid = TimeGrid(1.0, 32)
        ens = fbm.sample_volterra(H, grid, 2, 10, 3)
        rebuilt = fbm.volterra_map(H, grid, ens.wiener)
        assert np.allclose(rebuilt, ens.values, atol=1e-14)
        one = ens.bundle(4)
        assert np.array_equal(one.fbm.values, ens.values[4])

    def test_zero_shift_is_identity(self):
        grid = TimeGrid(1.0, 32)
        ens = fbm.sample_volterra(H, grid, 1, 20, 8)
        shifted = shift_ensemble(H, ens, ControlL2.zeros(grid, 1))
        assert np.array_equal(shifted.values, ens.values)
        assert np.array_equal(shifted.wiener, ens.wiener)

    def test_coordinates_independent(self):
        grid = TimeGrid(1.0, 32)
        ens = fbm.sample_volterra(H, grid, 2, 4000, 17)
        x = ens.values[:, -1, 0]
        y = ens.values[:, -1, 1]
        corr = np.corrcoef(x, y)[0, 1]
        assert abs(corr) < 5 / np.sqrt(4000)
