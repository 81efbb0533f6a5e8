"""Sparse assembly of the pulled-back diffusion operator and its split parts.

Three operators live here, all on the interior nodes of a GridSpec with
homogeneous Dirichlet rows eliminated:

* ``assemble_A``   -- the constant anisotropic Laplacian
                      A f = -(lam1 d^2/dX1^2 + lam2 d^2/dX2^2) f,
                      standard 5-point stencil, symmetric positive definite;
* ``assemble_L``   -- the time-dependent pulled-back operator
                      L f = -(1/sqrtG) d_a(kappa sqrtG g^ab d_b f)
                            + (dG/dt)/(2G) f,
                      flux form with arithmetic face averages for the
                      diagonal terms and a centered cross stencil for the
                      mixed terms;
* ``assemble_B_parts`` -- the perturbation B(t) = L(t) - A split into five
                      matrices: the second-order remainder, the volume-factor
                      gradient term, the metric-derivative term, the
                      diffusivity-gradient term and the zeroth-order dilation
                      term.  Exact discrete product rules make the five parts
                      sum to L - A at roundoff level while each part stays a
                      consistent discretization of its continuous formula.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ParameterError
from .geometry import metric_fields

# ---------------------------------------------------------------------------
# basic containers


@dataclass
class Field:
    """Grid function on interior nodes at one time."""

    values: np.ndarray
    t: float = 0.0

    def copy(self):
        return Field(self.values.copy(), self.t)


@dataclass
class OperatorMatrix:
    """Sparse operator over interior nodes with provenance tag."""

    matrix: sp.csr_matrix
    tag: str
    grid: object
    t: Optional[float] = None

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other


def field_l2(values, grid):
    """Discrete L2(U) norm, h1*h2-weighted sum over interior nodes."""
    v = np.asarray(values).ravel()
    return float(np.sqrt(grid.h1 * grid.h2 * np.dot(v, v)))


# ---------------------------------------------------------------------------
# stencil machinery


def _stencil_matrix(grid, terms):
    """Assemble a CSR matrix from (di, dj, coefficient) stencil terms.

    ``coefficient`` is a scalar or an (n1, n2) array giving the entry that
    row (i, j) places on column (i+di, j+dj).  Neighbors outside the interior
    are dropped (homogeneous Dirichlet data).
    """
    n1, n2 = grid.n1, grid.n2
    idx = np.arange(n1 * n2).reshape(n1, n2)
    rows, cols, vals = [], [], []
    for di, dj, coeff in terms:
        i0, i1 = max(0, -di), n1 - max(0, di)
        j0, j1 = max(0, -dj), n2 - max(0, dj)
        if i0 >= i1 or j0 >= j1:
            continue
        carr = np.broadcast_to(np.asarray(coeff, dtype=float), (n1, n2))
        rows.append(idx[i0:i1, j0:j1].ravel())
        cols.append(idx[i0 + di:i1 + di, j0 + dj:j1 + dj].ravel())
        vals.append(carr[i0:i1, j0:j1].ravel())
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n1 * n2, n1 * n2),
    )
    return mat.tocsr()


def _shifts(full):
    """Center and neighbor views of a full-grid array, as interior blocks."""
    return {
        "c": full[1:-1, 1:-1],
        "ip": full[2:, 1:-1], "im": full[:-2, 1:-1],
        "jp": full[1:-1, 2:], "jm": full[1:-1, :-2],
    }


# second-difference and first-difference stencils used by the B-split
def _d11_terms(grid, rowcoeff):
    q = 1.0 / grid.h1 ** 2
    return [(1, 0, rowcoeff * q), (-1, 0, rowcoeff * q), (0, 0, -2.0 * rowcoeff * q)]


def _d22_terms(grid, rowcoeff):
    q = 1.0 / grid.h2 ** 2
    return [(0, 1, rowcoeff * q), (0, -1, rowcoeff * q), (0, 0, -2.0 * rowcoeff * q)]


def _d12_terms(grid, rowcoeff):
    q = 1.0 / (4.0 * grid.h1 * grid.h2)
    return [(1, 1, rowcoeff * q), (-1, -1, rowcoeff * q),
            (1, -1, -rowcoeff * q), (-1, 1, -rowcoeff * q)]


def _dc1_terms(grid, rowcoeff):
    q = 1.0 / (2.0 * grid.h1)
    return [(1, 0, rowcoeff * q), (-1, 0, -rowcoeff * q)]


def _dc2_terms(grid, rowcoeff):
    q = 1.0 / (2.0 * grid.h2)
    return [(0, 1, rowcoeff * q), (0, -1, -rowcoeff * q)]


def _m1d2_terms(grid, rowcoeff):
    # average over i+-1 of the centered X2 difference
    q = 1.0 / (4.0 * grid.h2)
    return [(1, 1, rowcoeff * q), (1, -1, -rowcoeff * q),
            (-1, 1, rowcoeff * q), (-1, -1, -rowcoeff * q)]


def _m2d1_terms(grid, rowcoeff):
    q = 1.0 / (4.0 * grid.h1)
    return [(1, 1, rowcoeff * q), (-1, 1, -rowcoeff * q),
            (1, -1, rowcoeff * q), (-1, -1, -rowcoeff * q)]


# ---------------------------------------------------------------------------
# operator assembly


def assemble_A(grid, lambda1, lambda2):
    """Constant anisotropic Dirichlet Laplacian on the interior grid."""
    if lambda1 <= 0 or lambda2 <= 0:
        raise ParameterError(f"lambda coefficients must be positive, got ({lambda1}, {lambda2})")
    q1 = lambda1 / grid.h1 ** 2
    q2 = lambda2 / grid.h2 ** 2
    terms = [
        (0, 0, 2.0 * q1 + 2.0 * q2),
        (1, 0, -q1), (-1, 0, -q1),
        (0, 1, -q2), (0, -1, -q2),
    ]
    return OperatorMatrix(_stencil_matrix(grid, terms), "A", grid)


def coefficient_fields(chart, kappa, grid, t):
    """Nodal coefficient data on the full grid at time t.

    Returns full-grid arrays K (diffusivity), R (sqrt G), the inverse-metric
    components, the flux coefficients C^ab = K R g^ab, and the interior
    arrays R_int and d0 = (dG/dt)/(2G).
    """
    X1, X2 = grid.full_mesh()
    mf = metric_fields(chart, X1, X2, t, h_fd=grid.h_fd)
    K = np.broadcast_to(np.asarray(kappa.value(X1, X2, t), dtype=float), X1.shape)
    R = mf.sqrtG
    fields = {
        "K": np.array(K), "R": R,
        "Ginv11": mf.ginv11, "Ginv12": mf.ginv12, "Ginv22": mf.ginv22,
        "C11": K * R * mf.ginv11,
        "C12": K * R * mf.ginv12,
        "C22": K * R * mf.ginv22,
        "R_int": R[1:-1, 1:-1],
        "d0": (0.5 * mf.dGdt / mf.G)[1:-1, 1:-1],
    }
    return fields


def assemble_L(chart, kappa, grid, t):
    """Flux-form discretization of the pulled-back diffusion operator."""
    cf = coefficient_fields(chart, kappa, grid, t)
    inv_r = 1.0 / cf["R_int"]
    c11 = _shifts(cf["C11"])
    c22 = _shifts(cf["C22"])
    c12 = _shifts(cf["C12"])

    face1p = 0.5 * (c11["c"] + c11["ip"])
    face1m = 0.5 * (c11["c"] + c11["im"])
    face2p = 0.5 * (c22["c"] + c22["jp"])
    face2m = 0.5 * (c22["c"] + c22["jm"])

    q1 = inv_r / grid.h1 ** 2
    q2 = inv_r / grid.h2 ** 2
    qx = inv_r / (4.0 * grid.h1 * grid.h2)

    terms = [
        # divergence-form diagonal fluxes
        (1, 0, -face1p * q1), (-1, 0, -face1m * q1),
        (0, 1, -face2p * q2), (0, -1, -face2m * q2),
        (0, 0, (face1p + face1m) * q1 + (face2p + face2m) * q2 + cf["d0"]),
        # centered cross differences of the mixed fluxes
        (1, 1, -(c12["ip"] + c12["jp"]) * qx),
        (-1, -1, -(c12["im"] + c12["jm"]) * qx),
        (1, -1, (c12["ip"] + c12["jm"]) * qx),
        (-1, 1, (c12["im"] + c12["jp"]) * qx),
    ]
    return OperatorMatrix(_stencil_matrix(grid, terms), "L", grid, t=t)


def assemble_B_parts(chart, kappa, grid, lambda1, lambda2, t, norm_iters=50, seed=0):
    """Split L(t) - A into the five-part perturbation decomposition.

    Returns {"B1"..."B5": OperatorMatrix, "norms": array of the five discrete
    L2->L2 operator norms estimated by power iteration}.  The parts sum to
    assemble_L - assemble_A exactly up to roundoff.
    """
    if lambda1 <= 0 or lambda2 <= 0:
        raise ParameterError("lambda coefficients must be positive")
    cf = coefficient_fields(chart, kappa, grid, t)
    inv_r = 1.0 / cf["R_int"]
    h1, h2 = grid.h1, grid.h2

    K = cf["K"]
    R = cf["R"]
    ginv = {"11": cf["Ginv11"], "12": cf["Ginv12"], "22": cf["Ginv22"]}
    C = {"11": cf["C11"], "12": cf["C12"], "22": cf["C22"]}

    def sh(arr, d):
        s = _shifts(arr)
        return (s["ip"], s["im"]) if d == 1 else (s["jp"], s["jm"])

    def bar(arr, d):
        p, m = sh(arr, d)
        return 0.5 * (p + m)

    def delta(arr, d):
        p, m = sh(arr, d)
        return (p - m) / (2.0 * (h1 if d == 1 else h2))

    # --- B1: second-order remainder with face-averaged coefficients
    c11 = _shifts(C["11"])
    c22 = _shifts(C["22"])
    s11 = 0.25 * (c11["im"] + 2.0 * c11["c"] + c11["ip"]) * inv_r
    s22 = 0.25 * (c22["jm"] + 2.0 * c22["c"] + c22["jp"]) * inv_r
    s12 = (bar(C["12"], 1) + bar(C["12"], 2)) * inv_r
    b1_terms = (_d11_terms(grid, -(s11 - lambda1))
                + _d22_terms(grid, -(s22 - lambda2))
                + _d12_terms(grid, -s12))
    B1 = _stencil_matrix(grid, b1_terms)

    # --- B2/B3/B4: exact three-way split of the first-order flux remainder.
    # For each index pair (a, b) the centered difference of C^ab = K*R*g^ab
    # splits exactly as  Kbar*Rbar*delta(g^ab)  (metric-derivative part, B3)
    #                  + Kbar*delta(R)*g^ab_bar (volume-factor part, B2)
    #                  + delta(K)*avg(R*g^ab)   (diffusivity part, B4).
    op_for_pair = {
        (1, "11"): _dc1_terms, (2, "22"): _dc2_terms,
        (1, "12"): _m1d2_terms, (2, "12"): _m2d1_terms,
    }
    b2_terms, b3_terms, b4_terms = [], [], []
    for (d, ab), op in op_for_pair.items():
        Q = R * ginv[ab]
        b3 = bar(K, d) * bar(R, d) * delta(ginv[ab], d) * inv_r
        b2 = bar(K, d) * delta(R, d) * bar(ginv[ab], d) * inv_r
        b4 = delta(K, d) * bar(Q, d) * inv_r
        b2_terms += op(grid, -b2)
        b3_terms += op(grid, -b3)
        b4_terms += op(grid, -b4)
    B2 = _stencil_matrix(grid, b2_terms)
    B3 = _stencil_matrix(grid, b3_terms)
    B4 = _stencil_matrix(grid, b4_terms)

    # --- B5: zeroth-order dilation term
    B5 = _stencil_matrix(grid, [(0, 0, cf["d0"])])

    mats = [B1, B2, B3, B4, B5]
    norms = np.array([operator_norm_est(m, iters=norm_iters, seed=seed) for m in mats])
    out = {f"B{i+1}": OperatorMatrix(m, f"B{i+1}", grid, t=t) for i, m in enumerate(mats)}
    out["norms"] = norms
    return out


def assemble_B(chart, kappa, grid, lambda1, lambda2, t):
    """Full perturbation B(t) = L(t) - A as one matrix."""
    L = assemble_L(chart, kappa, grid, t)
    A = assemble_A(grid, lambda1, lambda2)
    return OperatorMatrix((L.matrix - A.matrix).tocsr(), "B", grid, t=t)


def operator_norm_est(matrix, iters=50, seed=0):
    """Discrete L2->L2 operator norm by power iteration on M^T M."""
    m = matrix.matrix if isinstance(matrix, OperatorMatrix) else matrix
    n = m.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    v /= nv
    mt = m.T.tocsr()
    sigma2 = 0.0
    for _ in range(iters):
        w = mt @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        sigma2 = nw
        v = w / nw
    return float(np.sqrt(sigma2))


# ---------------------------------------------------------------------------
# norms of grid functions


def half_power_norm(values, grid, lambda1, lambda2):
    """Square root of lam1*||d1 f||^2 + lam2*||d2 f||^2.

    One-sided difference quotients on the faces of the grid, including the
    faces that touch the zero Dirichlet boundary; coincides with the discrete
    quadratic form <A f, f> h1 h2 of the 5-point operator.
    """
    full = grid.pad_dirichlet(values)
    d1 = np.diff(full[:, 1:-1], axis=0) / grid.h1
    d2 = np.diff(full[1:-1, :], axis=1) / grid.h2
    s = lambda1 * np.sum(d1 * d1) + lambda2 * np.sum(d2 * d2)
    return float(np.sqrt(grid.h1 * grid.h2 * s))


def gradient_norm(values, grid):
    return half_power_norm(values, grid, 1.0, 1.0)


def hessian_seminorm(values, grid):
    """Frobenius L2 norm of the discrete Hessian (centered quotients)."""
    p = grid.pad_dirichlet(values)
    d11 = (p[2:, 1:-1] - 2.0 * p[1:-1, 1:-1] + p[:-2, 1:-1]) / grid.h1 ** 2
    d22 = (p[1:-1, 2:] - 2.0 * p[1:-1, 1:-1] + p[1:-1, :-2]) / grid.h2 ** 2
    d12 = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4.0 * grid.h1 * grid.h2)
    s = np.sum(d11 * d11) + 2.0 * np.sum(d12 * d12) + np.sum(d22 * d22)
    return float(np.sqrt(grid.h1 * grid.h2 * s))


def sobolev_h1_norm(values, grid):
    """Discrete W^{1,2}(U) norm: sqrt(||f||^2 + ||grad f||^2)."""
    return float(np.hypot(field_l2(values, grid), gradient_norm(values, grid)))


# ---------------------------------------------------------------------------
# structural diagnostics


def weighted_symmetry_defect(chart, kappa, grid, t):
    """Asymmetry of W (L - D0) with W = diag(sqrtG h1 h2), relative scale.

    The divergence-form part of the operator is selfadjoint in L2(sqrtG dX);
    its flux discretization should reproduce that to roundoff.
    """
    L = assemble_L(chart, kappa, grid, t)
    cf = coefficient_fields(chart, kappa, grid, t)
    w = (cf["R_int"] * grid.h1 * grid.h2).ravel()
    M = sp.diags(w) @ (L.matrix - sp.diags(cf["d0"].ravel()))
    defect = np.abs((M - M.T)).max()
    scale = np.abs(M).max()
    return float(defect), float(scale)


def apply_stencil_full(values_full, grid, lambda1, lambda2):
    """Apply -(lam1 d11 + lam2 d22) to a full-grid sample, interior output."""
    p = np.asarray(values_full, dtype=float)
    d11 = (p[2:, 1:-1] - 2.0 * p[1:-1, 1:-1] + p[:-2, 1:-1]) / grid.h1 ** 2
    d22 = (p[1:-1, 2:] - 2.0 * p[1:-1, 1:-1] + p[1:-1, :-2]) / grid.h2 ** 2
    return -(lambda1 * d11 + lambda2 * d22)


def verify_anisotropic_identities(grid, lambda1, lambda2, heat_steps=3):
    """Residual checks of the two closed-form identities of the operator.

    * fundamental solution: E(X) = log(lam2 X1^2 + lam1 X2^2)/2 is annihilated
      by the continuous operator away from the origin; the discrete residual
      is O(h^2).  The grid rectangle must exclude the origin.
    * rescaled heat solution: Phi(X, t) = phi(X1/sqrt(lam1), X2/sqrt(lam2), t)
      with phi a heat kernel solves the anisotropic heat equation; the
      Crank-Nicolson residual is O(h^2 + dt^2) with dt tied to h.
    """
    if lambda1 <= 0 or lambda2 <= 0:
        raise ParameterError("lambda coefficients must be positive")
    a, b, c, d = grid.domain
    if a <= 0.0 <= b and c <= 0.0 <= d:
        raise ParameterError("fundamental-solution check needs a domain away from the origin")

    X1, X2 = grid.full_mesh()
    E = 0.5 * np.log(lambda2 * X1 ** 2 + lambda1 * X2 ** 2)
    fund = float(np.max(np.abs(apply_stencil_full(E, grid, lambda1, lambda2))))

    # rescaled heat kernel, centered on the image of the rectangle center;
    # the time offset keeps higher derivatives small so the O(h^2 + dt^2)
    # leading term dominates already on coarse grids
    t0 = 0.5
    c1 = 0.5 * (a + b) / np.sqrt(lambda1)
    c2 = 0.5 * (c + d) / np.sqrt(lambda2)

    def phi_pull(t):
        y1 = X1 / np.sqrt(lambda1)
        y2 = X2 / np.sqrt(lambda2)
        r2 = (y1 - c1) ** 2 + (y2 - c2) ** 2
        return np.exp(-r2 / (4.0 * (t + t0))) / (4.0 * np.pi * (t + t0))

    dt = min(grid.h1, grid.h2)
    heat = 0.0
    for k in range(heat_steps):
        t = k * dt
        f0, f1 = phi_pull(t), phi_pull(t + dt)
        resid = ((f1[1:-1, 1:-1] - f0[1:-1, 1:-1]) / dt
                 + 0.5 * (apply_stencil_full(f1, grid, lambda1, lambda2)
                          + apply_stencil_full(f0, grid, lambda1, lambda2)))
        heat = max(heat, float(np.max(np.abs(resid))))
    return {"fundsol_residual": fund, "scaled_heat_residual": heat}


# solver utility shared by the steppers and the estimators

def factorize(matrix):
    m = matrix.matrix if isinstance(matrix, OperatorMatrix) else matrix
    return spla.splu(m.tocsc())
