"""Operator identities of the Cameron-Martin machinery."""

import numpy as np
import pytest

from fracdev import rkhs
from fracdev.errors import SingularOperatorError
from fracdev.grids import TimeGrid, indicator_path, SamplePath

from _oracles import kernel_oracle

H = 0.75


def random_control(grid, dim=1, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return rkhs.ControlL2(grid, scale * rng.standard_normal((grid.n_steps, dim)))


class TestAdjoint:
    def test_zero_path_maps_to_zero(self):
        grid = TimeGrid(1.0, 128)
        psi = SamplePath(grid, np.zeros((129, 2)))
        assert np.all(rkhs.apply_k_star(H, psi).g == 0.0)

    def test_indicator_maps_to_kernel_column(self):
        grid = TimeGrid(1.0, 512)
        t = 1.0
        g = rkhs.apply_k_star(H, indicator_path(grid, t)).g[:, 0]
        ref = np.array([kernel_oracle(H, t, m) for m in grid.cell_midpoints])
        rel = np.sqrt(np.sum((g - ref) ** 2) / np.sum(ref ** 2))
        assert rel < 0.02

    def test_indicator_norm_matches_power_law(self):
        for n in (512, 1024):
            grid = TimeGrid(1.0, n)
            errs = []
            for t in (0.25, 0.5, 1.0):
                nrm = rkhs.apply_k_star(H, indicator_path(grid, t)).norm_sq()
                errs.append(abs(nrm / t ** (2 * H) - 1.0))
            assert max(errs) < 0.02
        # refinement decreases the full-interval error
        e512 = abs(rkhs.apply_k_star(H, indicator_path(TimeGrid(1.0, 512), 1.0)).norm_sq() - 1.0)
        e1024 = abs(rkhs.apply_k_star(H, indicator_path(TimeGrid(1.0, 1024), 1.0)).norm_sq() - 1.0)
        assert e1024 < e512


class TestWeightedInner:
    def test_constant_path_gives_horizon_power(self):
        grid = TimeGrid(1.0, 256)
        one = indicator_path(grid, 1.0)
        assert rkhs.h_inner_weighted(H, one, one) == pytest.approx(1.0, rel=1e-10)

    def test_l2_bound(self):
        # ||psi||_H^2 <= 2 H T^{2H-1} ||psi||_{L2}^2, constants saturate at 1.5
        grid = TimeGrid(1.0, 256)
        one = indicator_path(grid, 1.0)
        assert rkhs.h_inner_weighted(H, one, one) <= 1.5 * 1.01
        rng = np.random.default_rng(5)
        for _ in range(10):
            coef = rng.standard_normal(3)
            vals = sum(
                c * np.sin((k + 1) * np.pi * grid.nodes) for k, c in enumerate(coef)
            )
            psi = SamplePath(grid, vals[:, None])
            l2 = np.sum(psi.cell_averages() ** 2) * grid.dt
            assert rkhs.h_inner_weighted(H, psi, psi) <= 2 * H * l2 * 1.01 + 1e-12

    def test_matches_adjoint_route(self):
        grid = TimeGrid(1.0, 512)
        nodes = grid.nodes
        psi = SamplePath(grid, np.cos(2 * np.pi * nodes)[:, None])
        phi = SamplePath(grid, (nodes ** 2 - 0.3)[:, None])
        direct = rkhs.h_inner_weighted(H, psi, phi)
        ga = rkhs.apply_k_star(H, psi).g
        gb = rkhs.apply_k_star(H, phi).g
        adjoint = float(np.sum(ga * gb) * grid.dt)
        assert adjoint == pytest.approx(direct, rel=0.02)

    def test_grid_mismatch_rejected(self):
        a = indicator_path(TimeGrid(1.0, 64), 0.5)
        b = indicator_path(TimeGrid(1.0, 128), 0.5)
        with pytest.raises(ValueError):
            rkhs.h_inner_weighted(H, a, b)


class TestDensity:
    def test_zero_control(self):
        grid = TimeGrid(1.0, 128)
        cm = rkhs.rh_density(H, rkhs.ControlL2.zeros(grid, 2))
        assert np.all(cm.values == 0.0) and np.all(cm.density == 0.0)

    def test_linearity_exact(self):
        grid = TimeGrid(1.0, 128)
        c1 = random_control(grid, 2, seed=1)
        c2 = random_control(grid, 2, seed=2)
        mix = rkhs.ControlL2(grid, 0.7 * c1.g - 1.3 * c2.g)
        lhs = rkhs.rh_density(H, mix).values
        rhs = 0.7 * rkhs.rh_density(H, c1).values - 1.3 * rkhs.rh_density(H, c2).values
        assert np.allclose(lhs, rhs, atol=1e-13)

    def test_reproducing_terminal_value(self):
        # for g = K_H*(1_{[0,T]}), (R_H h)(T) equals ||1_{[0,T]}||_H^2
        grid = TimeGrid(1.0, 512)
        ctrl = rkhs.apply_k_star(H, indicator_path(grid, 1.0))
        cm = rkhs.rh_density(H, ctrl)
        assert cm.values[-1, 0] == pytest.approx(1.0, rel=0.02)

    def test_holder_ratio_stable_under_refinement(self):
        ratios = []
        for n in (256, 512):
            grid = TimeGrid(1.0, n)
            g = np.sin(2 * np.pi * grid.cell_midpoints)[:, None]
            cm = rkhs.rh_density(H, rkhs.ControlL2(grid, g))
            v = cm.values[:, 0]
            nodes = grid.nodes
            dv = np.abs(v[None, :] - v[:, None])
            dt = np.abs(nodes[None, :] - nodes[:, None])
            mask = dt > 0
            ratios.append(np.max(dv[mask] / dt[mask] ** H))
        assert np.isfinite(ratios).all()
        assert ratios[1] < 1.5 * ratios[0]


class TestInversion:
    def test_roundtrip(self):
        grid = TimeGrid(1.0, 256)
        for seed in range(50):
            ctrl = random_control(grid, 1, seed=seed)
            cm = rkhs.rh_density(H, ctrl)
            back = rkhs.rh_invert(H, grid, cm.density)
            scale = np.max(np.abs(ctrl.g))
            assert np.max(np.abs(back.g - ctrl.g)) < 1e-8 * scale

    def test_residual_tiny(self):
        grid = TimeGrid(1.0, 256)
        rng = np.random.default_rng(9)
        u = rng.standard_normal((256, 1))
        g = rkhs.rh_invert(H, grid, u)
        resid = rkhs.density_matrix(H, grid) @ g.g - u
        assert np.max(np.abs(resid)) <= 1e-10 * np.max(np.abs(u))

    def test_zero_maps_to_zero(self):
        grid = TimeGrid(1.0, 64)
        g = rkhs.rh_invert(H, grid, np.zeros((64, 1)))
        assert np.all(g.g == 0.0)

    def test_solver_well_posed_across_hurst(self):
        for h in (0.55, 0.75, 0.95):
            grid = TimeGrid(1.0, 512)
            L = rkhs.density_matrix(h, grid)
            assert np.min(np.diag(L)) > 1e-14
            ctrl = random_control(grid, 1, seed=3)
            cm = rkhs.rh_density(h, ctrl)
            back = rkhs.rh_invert(h, grid, cm.density)
            assert np.max(np.abs(back.g - ctrl.g)) < 1e-8 * np.max(np.abs(ctrl.g))


class TestNorm:
    def test_zero(self):
        grid = TimeGrid(1.0, 32)
        assert rkhs.h_norm_sq(rkhs.ControlL2.zeros(grid, 3)) == 0.0

    def test_unit_constant(self):
        grid = TimeGrid(1.0, 32)
        ctrl = rkhs.ControlL2(grid, np.ones((32, 1)))
        assert rkhs.h_norm_sq(ctrl) == pytest.approx(1.0, rel=1e-14)

    def test_quadratic_scaling(self):
        grid = TimeGrid(1.0, 32)
        ctrl = random_control(grid, 2, seed=4)
        scaled = rkhs.ControlL2(grid, 3.0 * ctrl.g)
        assert rkhs.h_norm_sq(scaled) == pytest.approx(9.0 * rkhs.h_norm_sq(ctrl), rel=1e-13)
