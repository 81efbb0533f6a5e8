import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.testing import assert_allclose

from evolvesurf import (
    ParameterError,
    assemble_A,
    assemble_B,
    assemble_B_parts,
    assemble_L,
    half_power_norm,
    make_chart,
    make_diffusion,
    make_grid,
    verify_anisotropic_identities,
)
from evolvesurf.diagnostics import symbolic_operator_apply
from evolvesurf.operator import field_l2, weighted_symmetry_defect


def lowest_discrete_eigenvalue(grid, lam1, lam2):
    m1 = (2.0 - 2.0 * math.cos(math.pi * grid.h1)) / grid.h1 ** 2
    m2 = (2.0 - 2.0 * math.cos(math.pi * grid.h2)) / grid.h2 ** 2
    return lam1 * m1 + lam2 * m2


class TestAssembleA:
    def test_quarter_mesh_stencil_entries(self):
        grid = make_grid((0, 1, 0, 1), 3, 3)
        A = assemble_A(grid, 1.0, 1.0).matrix.toarray()
        k = grid.index(1, 1)
        assert A[k, k] == pytest.approx(64.0)
        for nb in (grid.index(0, 1), grid.index(2, 1), grid.index(1, 0), grid.index(1, 2)):
            assert A[k, nb] == pytest.approx(-16.0)

    def test_symmetric_positive_definite(self, unit_grid):
        A = assemble_A(unit_grid, 2.0, 0.5).matrix
        assert abs(A - A.T).max() == 0.0
        lo = spla.eigsh(A, k=1, sigma=0.0, which="LM")[0][0]
        floor = min(2.0, 0.5) * lowest_discrete_eigenvalue(unit_grid, 1.0, 1.0)
        assert lo > 0.0
        assert lo >= floor * (1.0 - 1e-12)

    def test_exact_lowest_eigenpair(self, unit_grid, eigenmode):
        A = assemble_A(unit_grid, 1.5, 0.5)
        phi = eigenmode(unit_grid)
        mu = lowest_discrete_eigenvalue(unit_grid, 1.5, 0.5)
        assert_allclose(A.matrix @ phi, mu * phi, rtol=1e-11)

    def test_quadratic_form_matches_half_power_norm(self, unit_grid):
        rng = np.random.default_rng(3)
        A = assemble_A(unit_grid, 1.3, 0.7).matrix
        for _ in range(5):
            f = rng.standard_normal(unit_grid.ndof)
            quad = float(f @ (A @ f)) * unit_grid.h1 * unit_grid.h2
            hp = half_power_norm(f, unit_grid, 1.3, 0.7)
            assert quad == pytest.approx(hp ** 2, rel=1e-12)

    def test_degenerate_coefficient_rejected(self, unit_grid):
        with pytest.raises(ParameterError):
            assemble_A(unit_grid, 0.0, 1.0)


class TestAssembleL:
    def test_flat_reduces_to_A_exactly(self, flat, const_kappa, unit_grid):
        L = assemble_L(flat, const_kappa, unit_grid, 0.4)
        A = assemble_A(unit_grid, 1.0, 1.0)
        assert abs(L.matrix - A.matrix).max() == 0.0

    @pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
    def test_isotropic_reduction(self, iso, const_kappa, unit_grid, t):
        L = assemble_L(iso, const_kappa, unit_grid, t)
        A = assemble_A(unit_grid, 1.0, 1.0)
        ref = math.exp(-2.0 * t) * A.matrix + 2.0 * sp.identity(unit_grid.ndof)
        assert abs(L.matrix - ref).max() < 1e-10

    def test_graph_at_time_zero_is_flat(self, graph, const_kappa, unit_grid):
        L = assemble_L(graph, const_kappa, unit_grid, 0.0)
        A = assemble_A(unit_grid, 1.0, 1.0)
        assert abs(L.matrix - A.matrix).max() < 1e-12

    def test_nine_point_pattern(self, graph, const_kappa, unit_grid):
        L = assemble_L(graph, const_kappa, unit_grid, 0.9)
        assert (L.matrix.getnnz(axis=1) <= 9).all()

    def test_weighted_selfadjointness(self, graph, unit_grid):
        kap = make_diffusion("sinusoidal", base=1.0, amp=0.3)
        defect, scale = weighted_symmetry_defect(graph, kap, unit_grid, 1.1)
        assert defect <= 1e-10 * max(scale, 1.0)

    @pytest.mark.parametrize("chart_name,kappa_name", [
        ("graph_oscillation", "constant"),
        ("graph_oscillation", "sinusoidal"),
        ("isotropic_scaling", "sinusoidal"),
    ])
    def test_consistency_order_two_against_symbolic(self, chart_name, kappa_name):
        chart = make_chart(chart_name, horizon=2.0)
        kap = make_diffusion(kappa_name)

        def u_builder(X1, X2, t):
            import sympy as sp_
            return sp_.sin(sp_.pi * X1) * sp_.sin(sp_.pi * X2) * (1 + X1 * X2 / 2)

        exact_L = symbolic_operator_apply(chart, kap, u_builder)
        t = 0.8
        errs = []
        for n in (15, 31, 63):
            g = make_grid(chart.domain, n, n)
            X1, X2 = g.interior_mesh()
            u = (np.sin(np.pi * X1) * np.sin(np.pi * X2) * (1 + X1 * X2 / 2)).ravel()
            L = assemble_L(chart, kap, g, t)
            ref = exact_L(X1, X2, t).ravel()
            errs.append(float(np.max(np.abs(L.matrix @ u - ref))))
        order = math.log(errs[0] / errs[2]) / math.log(4.0)
        assert 1.5 < order < 2.5


class TestBParts:
    def test_flat_parts_vanish(self, flat, const_kappa, unit_grid):
        parts = assemble_B_parts(flat, const_kappa, unit_grid, 1.0, 1.0, 0.2, norm_iters=5)
        for i in range(1, 6):
            assert abs(parts[f"B{i}"].matrix).max() == 0.0
        assert_allclose(parts["norms"], np.zeros(5))

    def test_isotropic_matched_lambda(self, iso, const_kappa, unit_grid):
        t0 = 0.5
        lam = math.exp(-2.0 * t0)
        parts = assemble_B_parts(iso, const_kappa, unit_grid, lam, lam, t0, norm_iters=5)
        assert abs(parts["B1"].matrix).max() < 1e-12
        ref = 2.0 * sp.identity(unit_grid.ndof)
        assert abs(parts["B5"].matrix - ref).max() < 1e-12

    @pytest.mark.parametrize("kappa_name", ["constant", "sinusoidal"])
    def test_sum_matches_L_minus_A(self, graph, unit_grid, kappa_name):
        kap = make_diffusion(kappa_name)
        lam1, lam2 = 0.9, 0.85
        A = assemble_A(unit_grid, lam1, lam2)
        for t in (0.0, 0.7, 1.4, 2.1, 2.8):
            parts = assemble_B_parts(graph, kap, unit_grid, lam1, lam2, t, norm_iters=5)
            total = sum(parts[f"B{i}"].matrix for i in range(1, 6))
            L = assemble_L(graph, kap, unit_grid, t)
            assert abs(total - (L.matrix - A.matrix)).max() <= 1e-10

    def test_norms_bound_matrix_action(self, graph, const_kappa, unit_grid):
        parts = assemble_B_parts(graph, const_kappa, unit_grid, 0.9, 0.9, 1.3)
        rng = np.random.default_rng(11)
        for i in range(1, 6):
            m = parts[f"B{i}"].matrix
            sigma = parts["norms"][i - 1]
            for _ in range(3):
                f = rng.standard_normal(unit_grid.ndof)
                assert np.linalg.norm(m @ f) <= (sigma + 1e-9) * np.linalg.norm(f) * 1.001


class TestPerturbationBound:
    def test_no_probe_violates_inflated_bound(self, unit_grid):
        from evolvesurf import smallness_report

        chart = make_chart("graph_oscillation", horizon=1.0, epsilon=0.05, omega=1.0)
        kap = make_diffusion("constant")
        rep = smallness_report(chart, kap, unit_grid, np.linspace(0, 1, 5), probes=4)
        bound = 2.0 * rep.C_sharp_est * rep.M.sum() * 1.1
        A = assemble_A(unit_grid, rep.lambda1, rep.lambda2)
        B = assemble_B(chart, kap, unit_grid, rep.lambda1, rep.lambda2, 0.9)
        rng = np.random.default_rng(42)
        for _ in range(100):
            f = rng.standard_normal(unit_grid.ndof)
            lhs = field_l2(B.matrix @ f, unit_grid)
            rhs = bound * field_l2(A.matrix @ f, unit_grid)
            assert lhs <= rhs


class TestHalfPowerNorm:
    def test_zero_field(self, unit_grid):
        assert half_power_norm(np.zeros(unit_grid.ndof), unit_grid, 1.0, 1.0) == 0.0

    def test_eigenfunction_limit(self, eigenmode):
        vals = []
        for n in (31, 63, 127):
            g = make_grid((0, 1, 0, 1), n, n)
            vals.append(half_power_norm(eigenmode(g), g, 1.0, 1.0))
        target = math.pi / math.sqrt(2.0)
        assert vals[-1] == pytest.approx(target, rel=2e-4)
        assert abs(vals[0] - target) > abs(vals[1] - target) > abs(vals[2] - target)

    def test_homogeneity_in_lambda(self, unit_grid):
        rng = np.random.default_rng(5)
        f = rng.standard_normal(unit_grid.ndof)
        base = half_power_norm(f, unit_grid, 1.0, 2.0)
        doubled = half_power_norm(f, unit_grid, 2.0, 4.0)
        assert doubled == pytest.approx(math.sqrt(2.0) * base, rel=1e-13)


class TestAnisotropicIdentities:
    def test_residuals_drop_by_factor_four(self):
        res = {}
        for n in (31, 63):
            g = make_grid((1, 2, 1, 2), n, n)
            res[n] = verify_anisotropic_identities(g, 1.0, 1.0)
        for key in ("fundsol_residual", "scaled_heat_residual"):
            factor = res[31][key] / res[63][key]
            assert 3.5 <= factor <= 4.5

    def test_anisotropic_weights(self):
        res = {}
        for n in (31, 63):
            g = make_grid((1, 2, 1, 2), n, n)
            res[n] = verify_anisotropic_identities(g, 2.0, 0.5)
        factor = res[31]["fundsol_residual"] / res[63]["fundsol_residual"]
        assert 3.5 <= factor <= 4.5

    def test_origin_in_domain_rejected(self):
        g = make_grid((-1, 1, -1, 1), 15, 15)
        with pytest.raises(ParameterError):
            verify_anisotropic_identities(g, 1.0, 1.0)
