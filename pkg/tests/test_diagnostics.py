import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from evolvesurf import (
    ParameterError,
    decay_report,
    energy_report,
    make_chart,
    make_diffusion,
    make_grid,
    manufactured_solution,
    material_derivative,
    mms_convergence,
    regularity_report,
    solve_direct,
    surface_grad_sq,
    surface_integral,
    transport_identity_residual,
)
from evolvesurf.diagnostics import (
    _cell_center_gradients,
    surface_gradient_components,
    surface_mass,
)
from evolvesurf.timestepper import Trajectory


def sinsin(x1, x2, t):
    return np.sin(np.pi * x1) * np.sin(np.pi * x2)


class TestSurfaceIntegral:
    def test_flat_unit_area(self, flat, unit_grid):
        assert surface_integral(lambda a, b, t: 1.0, flat, unit_grid, 0.5) == pytest.approx(1.0)

    def test_isotropic_area_dilation(self, iso, unit_grid):
        t = 0.8
        out = surface_integral(lambda a, b, tt: 1.0, iso, unit_grid, t)
        assert out == pytest.approx(math.exp(2.0 * t), rel=1e-12)

    def test_sine_product_refinement(self, flat):
        target = 4.0 / math.pi ** 2
        errs = []
        for n in (15, 31, 63):
            g = make_grid((0, 1, 0, 1), n, n)
            errs.append(abs(surface_integral(sinsin, flat, g, 0.0) - target))
        assert errs[0] / errs[2] == pytest.approx(16.0, rel=0.2)


class TestSurfaceGradSq:
    def test_zero_field(self, flat, unit_grid):
        assert surface_grad_sq(np.zeros(unit_grid.ndof), flat, unit_grid, 0.0) == 0.0

    def test_eigenfunction_refinement(self, flat, eigenmode):
        target = math.pi ** 2 / 2.0
        errs = []
        for n in (15, 31, 63):
            g = make_grid((0, 1, 0, 1), n, n)
            errs.append(abs(surface_grad_sq(eigenmode(g), flat, g, 0.0) - target))
        assert errs[2] / target < 1e-3
        assert errs[0] / errs[2] == pytest.approx(16.0, rel=0.3)

    def test_componentwise_contraction_identity(self, graph, unit_grid, eigenmode):
        # ambient 3-component form vs contracted quadratic form, per node
        phi = eigenmode(unit_grid)
        comps, mf = surface_gradient_components(phi, graph, unit_grid, 0.9)
        sq_components = np.einsum("kij,kij->ij", comps, comps)
        d1, d2 = _cell_center_gradients(phi, unit_grid)
        sq_contracted = (mf.ginv11 * d1 * d1 + 2.0 * mf.ginv12 * d1 * d2
                         + mf.ginv22 * d2 * d2)
        assert np.max(np.abs(sq_components - sq_contracted)) < 1e-10

    def test_nonnegative_on_random_fields(self, graph, unit_grid):
        rng = np.random.default_rng(2)
        for _ in range(5):
            f = rng.standard_normal(unit_grid.ndof)
            assert surface_grad_sq(f, graph, unit_grid, 1.7) >= 0.0

    def test_dissipation_bracketed_by_metric_bounds(self, graph, unit_grid):
        # kappa_min * (flat energy * metric floor) <= dissipation <= the
        # analogous ceiling, with pointwise 2x2 eigenvalue bounds of the
        # weighted inverse metric
        from evolvesurf.diagnostics import _cell_center_mesh
        from evolvesurf.geometry import metric_fields

        kap = make_diffusion("sinusoidal", base=1.0, amp=0.3)
        t = 1.3
        C1, C2 = _cell_center_mesh(unit_grid)
        mf = metric_fields(graph, C1, C2, t, want_dGdt=False)
        tr = mf.ginv11 + mf.ginv22
        disc = np.sqrt((mf.ginv11 - mf.ginv22) ** 2 + 4.0 * mf.ginv12 ** 2)
        lo = float(np.min(0.5 * (tr - disc) * mf.sqrtG))
        hi = float(np.max(0.5 * (tr + disc) * mf.sqrtG))
        kvals = kap.value(C1, C2, t)
        kmin, kmax = float(np.min(kvals)), float(np.max(kvals))

        rng = np.random.default_rng(8)
        flat_chart = make_chart("flat_static", horizon=2.0)
        for _ in range(5):
            f = rng.standard_normal(unit_grid.ndof)
            flat_energy = surface_grad_sq(f, flat_chart, unit_grid, 0.0)
            diss = surface_grad_sq(f, graph, unit_grid, t, kappa=kap)
            assert kmin * lo * flat_energy <= diss * (1 + 1e-12)
            assert diss <= kmax * hi * flat_energy * (1 + 1e-12)


class TestEnergyReport:
    def test_flat_eigenmode_balance(self, flat, const_kappa, eigenmode):
        # closed form: mass(t) = e^{-4 pi^2 t}/8, dissipation = (1-e^{-4pi^2 t})/8
        grid = make_grid((0, 1, 0, 1), 63, 63)
        traj = solve_direct(flat, const_kappa, grid, eigenmode(grid), 0.05, 1e-3)
        led = energy_report(traj, flat, const_kappa, grid)
        assert led.mass[0] == pytest.approx(0.125, rel=1e-3)
        k = 25
        t = float(led.times[k])
        assert led.mass[k] == pytest.approx(0.125 * math.exp(-4 * math.pi ** 2 * t), rel=5e-3)
        assert led.max_rel_residual() <= 1e-3
        assert np.all(np.diff(led.dissipation) >= 0.0)

    def test_zero_trajectory_zero_residuals(self, flat, const_kappa, unit_grid):
        traj = solve_direct(flat, const_kappa, unit_grid,
                            np.zeros(unit_grid.ndof), 0.02, 2e-3)
        led = energy_report(traj, flat, const_kappa, unit_grid)
        assert_allclose(led.residual_abs, 0.0)

    def test_residual_refines_on_moving_surface(self, const_kappa, eigenmode):
        chart = make_chart("graph_oscillation", horizon=1.0, epsilon=0.05, omega=1.0)
        residuals = []
        for n, dt in ((15, 4e-3), (31, 2e-3)):
            g = make_grid((0, 1, 0, 1), n, n)
            traj = solve_direct(chart, const_kappa, g, eigenmode(g), 0.05, dt)
            residuals.append(energy_report(traj, chart, const_kappa, g).max_rel_residual())
        assert residuals[1] <= residuals[0] / 2.0  # order >= 1


class TestDecayReport:
    def test_flat_eigenmode_ratio_tiny_at_t1(self, flat, const_kappa, eigenmode):
        grid = make_grid((0, 1, 0, 1), 31, 31)
        traj = solve_direct(flat, const_kappa, grid, eigenmode(grid), 1.0, 5e-3)
        rep = decay_report(traj, flat, grid, t_min=0.99)
        # sqrt(1) * (e^{-2 pi^2}/2) / ||u0||_{W^{1,2}} ~ 5.9e-10
        assert rep["sup_bound"] == pytest.approx(5.9e-10, rel=0.3)

    def test_sup_bound_below_one_and_monotone(self, flat, const_kappa, eigenmode):
        grid = make_grid((0, 1, 0, 1), 31, 31)
        traj = solve_direct(flat, const_kappa, grid, eigenmode(grid), 1.0, 5e-3)
        rep = decay_report(traj, flat, grid, t_min=0.1)
        assert rep["sup_bound"] <= 1.0
        assert rep["monotone"]

    def test_ratio_decreasing_past_the_hump(self, flat, const_kappa, eigenmode):
        grid = make_grid((0, 1, 0, 1), 31, 31)
        traj = solve_direct(flat, const_kappa, grid, eigenmode(grid), 1.0, 5e-3)
        norms = [math.sqrt(surface_mass(traj.fields[k], flat, grid, 0.0))
                 for k in range(traj.nsteps + 1)]
        ratios = [math.sqrt(t) * n for t, n in zip(traj.times, norms)]
        k1 = np.searchsorted(traj.times, 0.2)
        k2 = np.searchsorted(traj.times, 0.4)
        assert ratios[k2] < ratios[k1]

    def test_zero_datum_rejected(self, flat, const_kappa, unit_grid):
        traj = solve_direct(flat, const_kappa, unit_grid,
                            np.zeros(unit_grid.ndof), 0.02, 2e-3)
        with pytest.raises(ParameterError):
            decay_report(traj, flat, unit_grid)


class TestMaterialDerivative:
    def test_constant_in_time_gives_zero(self, unit_grid, eigenmode):
        f = eigenmode(unit_grid)
        traj = Trajectory(np.linspace(0, 1, 11), np.tile(f, (11, 1)), 0.1, "x", unit_grid)
        assert_allclose(material_derivative(traj, 5).values, 0.0)

    def test_flat_eigenmode_rate(self, flat, const_kappa, eigenmode):
        grid = make_grid((0, 1, 0, 1), 31, 31)
        traj = solve_direct(flat, const_kappa, grid, eigenmode(grid), 0.05, 1e-3)
        md = material_derivative(traj, 25)
        ref = -2.0 * math.pi ** 2 * traj.fields[25]
        assert np.max(np.abs(md.values - ref)) / np.max(np.abs(ref)) < 5e-3

    def test_translation_invariance(self, flat, const_kappa, eigenmode):
        grid = make_grid((0, 1, 0, 1), 15, 15)
        moving = make_chart("translating_patch", horizon=1.0, c=1.0)
        phi = eigenmode(grid)
        t1 = solve_direct(flat, const_kappa, grid, phi, 0.05, 5e-3)
        t2 = solve_direct(moving, const_kappa, grid, phi, 0.05, 5e-3)
        assert_allclose(material_derivative(t2, 5).values,
                        material_derivative(t1, 5).values, atol=1e-13)

    def test_endpoint_rejected(self, flat, const_kappa, unit_grid, eigenmode):
        traj = solve_direct(flat, const_kappa, unit_grid, eigenmode(unit_grid),
                            0.02, 2e-3)
        with pytest.raises(ParameterError):
            material_derivative(traj, 0)


class TestTransportIdentity:
    @pytest.mark.parametrize("name,params", [
        ("flat_static", {}),
        ("isotropic_scaling", {"gamma": 1.0}),
        ("graph_oscillation", {"epsilon": 0.05, "omega": 1.0}),
        ("translating_patch", {"c": 1.5}),
    ])
    def test_presets(self, name, params):
        chart = make_chart(name, horizon=2.0, **params)
        grid = make_grid((0, 1, 0, 1), 24, 24)
        assert transport_identity_residual(chart, grid, 0.7) < 1e-5


class TestRegularityReport:
    def test_quotient_finite_and_stable(self, flat, const_kappa, eigenmode):
        grid = make_grid((0, 1, 0, 1), 24, 24)
        traj = solve_direct(flat, const_kappa, grid, eigenmode(grid), 0.2, 5e-3)
        rep = regularity_report(traj, flat, const_kappa, grid)
        assert np.isfinite(rep["quotient"])
        # eigenmode closed form: both time and diffusion norms equal
        # 2 pi^2 sqrt(int e^{-4pi^2 t} u0^2) ~ mild O(1) numbers
        assert 0.1 < rep["quotient"] < 10.0


class TestMMS:
    def test_flat_space_orders(self, flat, const_kappa):
        def smooth(X1, X2, t):
            import sympy as sp
            return sp.exp(-t) * sp.sin(sp.pi * X1) * sp.sin(sp.pi * X2)

        exact = manufactured_solution(smooth)
        tab = mms_convergence(flat, const_kappa, exact,
                              [(15, 2.5e-4), (31, 2.5e-4), (63, 2.5e-4)], T=0.05)
        assert 1.8 <= tab.order_space <= 2.2
        assert tab.monotone

    def test_flat_time_orders_via_bubble(self, flat, const_kappa):
        # per-direction cubic solution: the 5-point stencil is exact on it, so
        # the measured error is purely temporal
        def bubble(X1, X2, t):
            import sympy as sp
            return (sp.exp(-t) * (1 + sp.Rational(1, 2) * sp.sin(8 * t))
                    * X1 * (1 - X1) * X2 * (1 - X2))

        exact = manufactured_solution(bubble)
        tab = mms_convergence(flat, const_kappa, exact,
                              [(31, 0.02), (31, 0.01), (31, 0.005)], T=0.2)
        assert 1.8 <= tab.order_time <= 2.2

    def test_first_order_scheme_detected(self, flat, const_kappa):
        def bubble(X1, X2, t):
            import sympy as sp
            return (sp.exp(-t) * (1 + sp.Rational(1, 2) * sp.sin(8 * t))
                    * X1 * (1 - X1) * X2 * (1 - X2))

        exact = manufactured_solution(bubble)
        tab = mms_convergence(flat, const_kappa, exact,
                              [(31, 0.02), (31, 0.01), (31, 0.005)], T=0.2, theta=1.0)
        assert 0.8 <= tab.order_time <= 1.2

    def test_variable_coefficient_orders(self, const_kappa):
        chart = make_chart("graph_oscillation", horizon=1.0, epsilon=0.05, omega=1.0)

        def smooth(X1, X2, t):
            import sympy as sp
            return sp.exp(-t) * sp.sin(sp.pi * X1) * sp.sin(sp.pi * X2)

        exact = manufactured_solution(smooth)
        tab = mms_convergence(chart, const_kappa, exact,
                              [(7, 8e-3), (15, 4e-3), (31, 2e-3)], T=0.1)
        assert 1.8 <= tab.order_space <= 2.2
        assert 1.8 <= tab.order_time <= 2.2

    def test_boundary_incompatible_solution_rejected(self, flat, const_kappa):
        def bad(X1, X2, t):
            import sympy as sp
            return sp.cos(sp.pi * X1) * sp.sin(sp.pi * X2)

        with pytest.raises(ParameterError):
            mms_convergence(flat, const_kappa, manufactured_solution(bad),
                            [(7, 1e-2), (15, 1e-2), (31, 1e-2)], T=0.05)

    def test_needs_three_levels(self, flat, const_kappa):
        def smooth(X1, X2, t):
            import sympy as sp
            return sp.exp(-t) * sp.sin(sp.pi * X1) * sp.sin(sp.pi * X2)

        with pytest.raises(ParameterError):
            mms_convergence(flat, const_kappa, manufactured_solution(smooth),
                            [(7, 1e-2), (15, 1e-2)], T=0.05)
