import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from evolvesurf import (
    Field,
    ParameterError,
    PicardDivergenceError,
    assemble_A,
    lambda_select,
    make_chart,
    make_grid,
    solve_direct,
    solve_picard,
    theta_step,
    z_norm,
)
from evolvesurf.geometry import metric_fields
from evolvesurf.operator import field_l2
from evolvesurf.timestepper import Trajectory, make_L_provider

from test_operator import lowest_discrete_eigenvalue


class TestThetaStep:
    def test_crank_nicolson_eigenmode_amplification(self, flat, const_kappa,
                                                    unit_grid, eigenmode):
        phi = eigenmode(unit_grid)
        mu = lowest_discrete_eigenvalue(unit_grid, 1.0, 1.0)
        dt = 1e-3
        provider = make_L_provider(flat, const_kappa, unit_grid)
        out = theta_step(Field(phi, 0.0), 0.0, dt, 0.5, provider)
        rho = (1.0 - 0.5 * dt * mu) / (1.0 + 0.5 * dt * mu)
        assert_allclose(out.values, rho * phi, atol=1e-13)

    def test_zero_stays_zero(self, flat, const_kappa, unit_grid):
        provider = make_L_provider(flat, const_kappa, unit_grid)
        out = theta_step(Field(np.zeros(unit_grid.ndof), 0.0), 0.0, 1e-2, 1.0, provider)
        assert_allclose(out.values, 0.0)

    def test_backward_euler_consistency_order_one(self, flat, const_kappa,
                                                  unit_grid, eigenmode):
        # (v' - v)/dt -> -Lv with O(dt) defect for theta = 1
        phi = eigenmode(unit_grid)
        provider = make_L_provider(flat, const_kappa, unit_grid)
        L = provider(0.0)
        target = -(L.matrix @ phi)
        defects = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            out = theta_step(Field(phi, 0.0), 0.0, dt, 1.0, provider)
            defects.append(np.max(np.abs((out.values - phi) / dt - target)))
        assert defects[0] / defects[1] == pytest.approx(2.0, rel=0.1)
        assert defects[1] / defects[2] == pytest.approx(2.0, rel=0.1)

    def test_theta_range_enforced(self, flat, const_kappa, unit_grid):
        provider = make_L_provider(flat, const_kappa, unit_grid)
        with pytest.raises(ParameterError):
            theta_step(Field(np.zeros(unit_grid.ndof), 0.0), 0.0, 1e-2, 0.3, provider)


class TestSolveDirect:
    def test_flat_separable_solution(self, flat, const_kappa, eigenmode):
        grid = make_grid((0, 1, 0, 1), 31, 31)
        phi = eigenmode(grid)
        traj = solve_direct(flat, const_kappa, grid, phi, 0.05, 1e-3, theta=0.5)
        exact = math.exp(-2.0 * math.pi ** 2 * 0.05) * phi
        rel = np.max(np.abs(traj.fields[-1] - exact)) / np.max(np.abs(exact))
        assert rel < 2e-3

    def test_zero_datum_zero_trajectory(self, flat, const_kappa, unit_grid):
        traj = solve_direct(flat, const_kappa, unit_grid,
                            np.zeros(unit_grid.ndof), 0.02, 1e-2)
        assert_allclose(traj.fields, 0.0)
        snap = traj.snapshot(2)
        assert isinstance(snap, Field)
        assert snap.t == pytest.approx(0.02)

    def test_translating_patch_matches_flat(self, flat, const_kappa, eigenmode):
        grid = make_grid((0, 1, 0, 1), 15, 15)
        moving = make_chart("translating_patch", horizon=1.0, c=2.0)
        phi = eigenmode(grid)
        t_flat = solve_direct(flat, const_kappa, grid, phi, 0.05, 5e-3)
        t_move = solve_direct(moving, const_kappa, grid, phi, 0.05, 5e-3)
        assert_allclose(t_move.fields, t_flat.fields, atol=1e-14)

    @pytest.mark.parametrize("theta,expected", [(0.5, 2.0), (1.0, 1.0)])
    def test_time_order_on_semidiscrete_mode(self, flat, const_kappa, unit_grid,
                                             eigenmode, theta, expected):
        # compare against the exact semi-discrete decay e^{-mu_h t} so the
        # measured order is purely temporal
        phi = eigenmode(unit_grid)
        mu = lowest_discrete_eigenvalue(unit_grid, 1.0, 1.0)
        T = 0.1
        errs = []
        for dt in (T / 10, T / 20, T / 40):
            traj = solve_direct(flat, const_kappa, unit_grid, phi, T, dt, theta=theta)
            ref = math.exp(-mu * T) * phi
            errs.append(np.max(np.abs(traj.fields[-1] - ref)))
        order = math.log(errs[0] / errs[2]) / math.log(4.0)
        assert order == pytest.approx(expected, abs=0.2)

    @pytest.mark.parametrize("chart_name,gamma", [("flat_static", None),
                                                  ("isotropic_scaling", 1.0)])
    def test_weighted_norm_decays_per_step(self, const_kappa, unit_grid, eigenmode,
                                           chart_name, gamma):
        # non-negative dilation coefficient: sqrt(G)-weighted mass never grows
        params = {} if gamma is None else {"gamma": gamma}
        chart = make_chart(chart_name, horizon=1.0, **params)
        phi = eigenmode(unit_grid)
        for theta in (0.5, 1.0):
            traj = solve_direct(chart, const_kappa, unit_grid, phi, 0.05, 5e-3,
                                theta=theta)
            X1, X2 = unit_grid.interior_mesh()
            masses = []
            for k in range(traj.nsteps + 1):
                mf = metric_fields(chart, X1, X2, float(traj.times[k]), want_dGdt=False)
                v2 = unit_grid.to_grid(traj.fields[k] ** 2)
                masses.append(float(np.sum(v2 * mf.sqrtG)))
            assert all(b <= a * (1 + 1e-12) for a, b in zip(masses, masses[1:]))


class TestZNorm:
    def test_zero_trajectory(self, unit_grid):
        A = assemble_A(unit_grid, 1.0, 1.0)
        traj = Trajectory(np.linspace(0, 1, 11), np.zeros((11, unit_grid.ndof)),
                          0.1, "x", unit_grid)
        assert z_norm(traj, A, unit_grid) == 0.0

    def test_constant_trajectory_closed_form(self, unit_grid, eigenmode):
        A = assemble_A(unit_grid, 1.0, 1.0)
        f0 = eigenmode(unit_grid)
        T, n = 0.37, 100
        traj = Trajectory(np.linspace(0, T, n + 1), np.tile(f0, (n + 1, 1)),
                          T / n, "x", unit_grid)
        expected = field_l2(f0, unit_grid) + math.sqrt(T) * field_l2(A.matrix @ f0, unit_grid)
        assert z_norm(traj, A, unit_grid) == pytest.approx(expected, rel=1e-12)

    def test_positive_homogeneity(self, unit_grid, eigenmode, flat, const_kappa):
        A = assemble_A(unit_grid, 1.0, 1.0)
        traj = solve_direct(flat, const_kappa, unit_grid, eigenmode(unit_grid),
                            0.02, 2e-3)
        base = z_norm(traj, A, unit_grid)
        scaled = Trajectory(traj.times, -3.0 * traj.fields, traj.dt, "x", unit_grid)
        assert z_norm(scaled, A, unit_grid) == pytest.approx(3.0 * base, rel=1e-12)


class TestSolvePicard:
    def test_flat_fixed_point_after_one_correction(self, flat, const_kappa,
                                                   unit_grid, eigenmode):
        phi = eigenmode(unit_grid)
        traj, hist = solve_picard(flat, const_kappa, unit_grid, 1.0, 1.0,
                                  phi, 0.02, 2e-3, tol=1e-10)
        assert hist.converged
        assert hist.iterations == 1
        assert hist.diff_norms[0] == 0.0
        direct = solve_direct(flat, const_kappa, unit_grid, phi, 0.02, 2e-3)
        assert_allclose(traj.fields, direct.fields, atol=1e-14)

    def test_contraction_and_agreement_under_smallness(self, const_kappa, eigenmode):
        grid = make_grid((0, 1, 0, 1), 24, 24)
        chart = make_chart("graph_oscillation", horizon=1.0, epsilon=0.005, omega=1.0)
        lam1, lam2 = lambda_select(chart, const_kappa, grid,
                                   np.linspace(0, 1, 5), margin=0.005)
        phi = eigenmode(grid)
        tol = 1e-8
        traj, hist = solve_picard(chart, const_kappa, grid, lam1, lam2,
                                  phi, 0.05, 1e-3, tol=tol)
        assert hist.converged
        assert hist.ratios and all(r <= 0.55 for r in hist.ratios)
        direct = solve_direct(chart, const_kappa, grid, phi, 0.05, 1e-3)
        rel = np.max(np.abs(traj.fields - direct.fields)) / np.max(np.abs(direct.fields))
        assert rel <= 10.0 * tol

    def test_history_shape(self, flat, const_kappa, unit_grid, eigenmode):
        _, hist = solve_picard(flat, const_kappa, unit_grid, 1.0, 1.0,
                               eigenmode(unit_grid), 0.02, 2e-3)
        assert len(hist.diff_norms) == hist.iterations
        assert len(hist.z_norms) == hist.iterations
        assert len(hist.ratios) == max(0, hist.iterations - 1)
        assert all(np.isfinite(hist.ratios))

    def test_divergence_raises_with_hint(self, const_kappa, eigenmode):
        # large oscillation with weights far below the coefficients: the
        # perturbation dominates the comparison operator and the map expands
        grid = make_grid((0, 1, 0, 1), 12, 12)
        chart = make_chart("graph_oscillation", horizon=1.0, epsilon=0.4, omega=3.0)
        lam1, lam2 = lambda_select(chart, const_kappa, grid,
                                   np.linspace(0, 1, 5), margin=0.8)
        with pytest.raises(PicardDivergenceError, match="smallness"):
            solve_picard(chart, const_kappa, grid, lam1, lam2, eigenmode(grid),
                         0.3, 1e-2, tol=1e-12, max_iter=6)

    def test_stage_equations_satisfied(self, const_kappa, eigenmode):
        # the returned iterate satisfies its own stage recursion at solver
        # tolerance: (I + th dt A) v_{k+1} = (I - (1-th) dt A) v_k - dt Bbar v_prev
        grid = make_grid((0, 1, 0, 1), 12, 12)
        chart = make_chart("graph_oscillation", horizon=1.0, epsilon=0.01, omega=1.0)
        lam1, lam2 = lambda_select(chart, const_kappa, grid, np.linspace(0, 1, 5),
                                   margin=0.01)
        phi = eigenmode(grid)
        traj, hist = solve_picard(chart, const_kappa, grid, lam1, lam2, phi,
                                  0.03, 3e-3, tol=1e-12, max_iter=30)
        # at the fixed point the stage equation collapses onto the direct
        # theta-scheme with L = A + B
        from evolvesurf import assemble_L
        import scipy.sparse as sp
        theta, dt = 0.5, 3e-3
        ident = sp.identity(grid.ndof)
        worst = 0.0
        for k in range(traj.nsteps):
            Lo = assemble_L(chart, const_kappa, grid, float(traj.times[k])).matrix
            Ln = assemble_L(chart, const_kappa, grid, float(traj.times[k + 1])).matrix
            lhs = (ident + theta * dt * Ln) @ traj.fields[k + 1]
            rhs = (ident - (1 - theta) * dt * Lo) @ traj.fields[k]
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        assert worst <= 100 * hist.diff_norms[-1] + 1e-12
