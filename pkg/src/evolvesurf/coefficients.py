"""Diffusivity presets, coefficient sup-norms and the smallness report.

The comparison operator A needs anisotropy weights lam1, lam2 sitting below
kappa*g^11 and kappa*g^22 on the whole space-time scan; the size of the
perturbation B = L - A is then controlled by five sup-norm quantities M1..M5
of the coefficients.  ``smallness_report`` bundles the scan, probe-based
estimates of the elliptic-regularity constant C_sharp and the maximal
L2-regularity constant C_A, the three smallness conditions and the two
existence-horizon formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import AssumptionViolationError, ParameterError
from .geometry import _fd1, metric_fields
from .operator import (
    OperatorMatrix,
    assemble_A,
    assemble_B_parts,
    factorize,
    field_l2,
    gradient_norm,
    hessian_seminorm,
)

SMALLNESS_THRESHOLD = 1.0 / (8.0 * math.sqrt(2.0))

DIFFUSION_PRESETS = ("constant", "sinusoidal")


@dataclass(frozen=True, eq=False)
class Diffusion:
    """Pulled-back diffusivity kappa(X, t) with optional analytic partials."""

    name: str
    value: Callable
    d1: Optional[Callable] = None
    d2: Optional[Callable] = None
    dt: Optional[Callable] = None
    time_independent: bool = False
    params: dict = field(default_factory=dict)
    sym_builder: Optional[Callable] = None

    def partial(self, key, domain, horizon, h_fd):
        """Analytic partial when supplied, FD fallback otherwise."""
        analytic = {"d1": self.d1, "d2": self.d2, "dt": self.dt}[key]
        if analytic is not None:
            return analytic
        which = {"d1": 0, "d2": 1, "dt": 2}[key]
        a, b, c, d = domain
        lo, hi = ((a, b), (c, d), (0.0, horizon))[which]
        return _fd1(self.value, which, lo, hi, h_fd)


def make_diffusion(name, **params):
    if name == "constant":
        v = float(params.get("value", 1.0))
        zero = lambda x1, x2, t: np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)

        def sym(X1, X2, t):
            import sympy as sp
            return sp.Float(v)

        return Diffusion("constant", lambda x1, x2, t: np.full_like(np.asarray(x1, dtype=float), v),
                         d1=zero, d2=zero, dt=zero, time_independent=True,
                         params={"value": v}, sym_builder=sym)
    if name == "sinusoidal":
        base = float(params.get("base", 1.0))
        amp = float(params.get("amp", 0.2))
        pi = math.pi

        def val(x1, x2, t):
            return base + amp * np.sin(pi * np.asarray(x1)) * np.sin(pi * np.asarray(x2))

        def d1(x1, x2, t):
            return amp * pi * np.cos(pi * np.asarray(x1)) * np.sin(pi * np.asarray(x2))

        def d2(x1, x2, t):
            return amp * pi * np.sin(pi * np.asarray(x1)) * np.cos(pi * np.asarray(x2))

        zero = lambda x1, x2, t: np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)

        def sym(X1, X2, t):
            import sympy as sp
            return base + amp * sp.sin(sp.pi * X1) * sp.sin(sp.pi * X2)

        return Diffusion("sinusoidal", val, d1=d1, d2=d2, dt=zero, time_independent=True,
                         params={"base": base, "amp": amp}, sym_builder=sym)
    raise ParameterError(f"unknown diffusion preset '{name}'")


def diffusion_bounds(kappa, chart, grid, times):
    """Scan kappa over the closure grid; enforce the positivity assumption."""
    X1, X2 = grid.full_mesh()
    kmin, kmax = math.inf, -math.inf
    for t in times:
        k = np.broadcast_to(np.asarray(kappa.value(X1, X2, t), dtype=float), X1.shape)
        kmin = min(kmin, float(k.min()))
        kmax = max(kmax, float(k.max()))
    if kmin <= 0.0:
        raise AssumptionViolationError(f"kappa must be strictly positive; scan minimum {kmin:.6g}")
    return kmin, kmax


# ---------------------------------------------------------------------------
# lambda selection and the M quantities


def coefficient_minima(chart, kappa, grid, times):
    """Raw scan minima of kappa*g^11, kappa*g^12 and kappa*g^22."""
    X1, X2 = grid.full_mesh()
    m11 = m12 = m22 = math.inf
    for t in times:
        mf = metric_fields(chart, X1, X2, t, h_fd=grid.h_fd, want_dGdt=False)
        k = np.broadcast_to(np.asarray(kappa.value(X1, X2, t), dtype=float), X1.shape)
        m11 = min(m11, float((k * mf.ginv11).min()))
        m12 = min(m12, float((k * mf.ginv12).min()))
        m22 = min(m22, float((k * mf.ginv22).min()))
    return {"min_kg11": m11, "min_kg12": m12, "min_kg22": m22}


def lambda_select(chart, kappa, grid, times, margin=0.05):
    """Anisotropy weights below the scan minima of kappa*g^11 and kappa*g^22.

    The second weight reads the diagonal component g^22 (the off-diagonal
    g^12 can vanish identically and cannot sit above a positive weight).
    """
    if not 0.0 <= margin < 1.0:
        raise ParameterError("margin must lie in [0, 1)")
    diffusion_bounds(kappa, chart, grid, times)
    minima = coefficient_minima(chart, kappa, grid, times)
    lam1 = (1.0 - margin) * minima["min_kg11"]
    lam2 = (1.0 - margin) * minima["min_kg22"]
    if lam1 <= 0.0 or lam2 <= 0.0:
        raise AssumptionViolationError(
            f"non-positive coefficient floor: min kappa*g^11 = {minima['min_kg11']:.6g}, "
            f"min kappa*g^22 = {minima['min_kg22']:.6g}"
        )
    return lam1, lam2


def m_quantities(chart, kappa, lambda1, lambda2, grid, times, with_mixed_factor2=False):
    """Sup-norm coefficient quantities M1..M5 over the space-time scan.

    M1 pairs kappa*g11/G with lam2 and kappa*g22/G with lam1 plus the mixed
    term; M2/M3 are the metric first-derivative combinations; M4 the
    diffusivity-gradient combinations; M5 the dilation rate.  With
    ``with_mixed_factor2`` the mixed term of M1 is doubled, which is the
    constant the second-order remainder bound actually uses; both values are
    reported by the smallness report.
    """
    X1, X2 = grid.full_mesh()
    M = np.zeros(5)
    m1_factor2 = 0.0
    dom, hor = chart.domain, chart.horizon
    k1 = kappa.partial("d1", dom, hor, grid.h_fd)
    k2 = kappa.partial("d2", dom, hor, grid.h_fd)
    for t in times:
        mf = metric_fields(chart, X1, X2, t, h_fd=grid.h_fd, want_derivs=True)
        k = np.broadcast_to(np.asarray(kappa.value(X1, X2, t), dtype=float), X1.shape)
        G = mf.G
        term_a = np.abs(k * mf.g11 / G - lambda2).max()
        term_b = np.abs(k * mf.g22 / G - lambda1).max()
        term_m = np.abs(k * mf.g12 / G).max()
        M[0] = max(M[0], term_a + term_b + term_m)
        m1_factor2 = max(m1_factor2, term_a + term_b + 2.0 * term_m)

        m2 = (k / G) * (mf.dg22_d1 - mf.dg12_d2) \
            - (k / (2.0 * G ** 2)) * (mf.g22 * mf.dG_d1 - mf.g12 * mf.dG_d2)
        M[1] = max(M[1], float(np.abs(m2).max()))

        m3 = (k / G) * (mf.dg11_d2 - mf.dg12_d1) \
            - (k / (2.0 * G ** 2)) * (mf.g11 * mf.dG_d2 - mf.g12 * mf.dG_d1)
        M[2] = max(M[2], float(np.abs(m3).max()))

        dk1 = np.broadcast_to(np.asarray(k1(X1, X2, t), dtype=float), X1.shape)
        dk2 = np.broadcast_to(np.asarray(k2(X1, X2, t), dtype=float), X1.shape)
        m4 = np.abs(mf.g22 / G * dk1 - mf.g12 / G * dk2).max() \
            + np.abs(mf.g11 / G * dk1 - mf.g12 / G * dk2).max()
        M[3] = max(M[3], float(m4))

        M[4] = max(M[4], float(np.abs(0.5 * mf.dGdt / G).max()))
    if with_mixed_factor2:
        return M, m1_factor2
    return M


# ---------------------------------------------------------------------------
# constant estimators


def estimate_C_sharp(A, grid, probes, seed=42):
    """Probe-based lower bound for the elliptic-regularity constant.

    Maximizes (||f|| + ||grad f|| + ||hess f||) / ||A f|| over random fields
    pushed through A^{-1} (so they live in the discrete operator domain) and
    over the lowest discrete eigenvector.
    """
    if probes < 1:
        raise ParameterError("need at least one probe")
    mat = A.matrix if isinstance(A, OperatorMatrix) else A
    lu = factorize(mat)
    rng = np.random.default_rng(seed)

    def ratio(f):
        af = mat @ f
        denom = field_l2(af, grid)
        if denom == 0.0:
            return 0.0
        num = field_l2(f, grid) + gradient_norm(f, grid) + hessian_seminorm(f, grid)
        return num / denom

    best = 0.0
    for _ in range(probes):
        g = rng.standard_normal(mat.shape[0])
        best = max(best, ratio(lu.solve(g)))

    import scipy.sparse.linalg as spla
    # fixed start vector keeps the estimate bit-reproducible across runs
    v0 = np.ones(mat.shape[0])
    vals, vecs = spla.eigsh(mat, k=1, sigma=0.0, which="LM", v0=v0)
    best = max(best, ratio(vecs[:, 0]))
    return float(best)


def maximal_regularity_ratio(A, grid, forcing_steps, dt):
    """Discrete maximal-regularity quotient for one forcing history.

    Marches dV/dt + A V = F from V(0) = 0 by Crank-Nicolson with the forcing
    sampled at step endpoints (array of shape (nsteps+1, ndof)) and returns
    sqrt(||dV/dt||^2 + ||A Vbar||^2) / ||Fbar||, all norms in L2(0,T; L2(U)).
    For the selfadjoint non-negative A this quotient never exceeds 1.
    """
    mat = A.matrix if isinstance(A, OperatorMatrix) else A
    F = np.asarray(forcing_steps, dtype=float)
    nsteps = F.shape[0] - 1
    n = mat.shape[0]
    import scipy.sparse as sp

    lu = factorize(sp.identity(n, format="csc") + 0.5 * dt * mat)
    expl = sp.identity(n, format="csr") - 0.5 * dt * mat

    v = np.zeros(n)
    num2 = 0.0
    den2 = 0.0
    w = grid.h1 * grid.h2
    for k in range(nsteps):
        fbar = 0.5 * (F[k] + F[k + 1])
        vn = lu.solve(expl @ v + dt * fbar)
        dv = (vn - v) / dt
        avbar = mat @ (0.5 * (v + vn))
        num2 += dt * w * (np.dot(dv, dv) + np.dot(avbar, avbar))
        den2 += dt * w * np.dot(fbar, fbar)
        v = vn
    if den2 == 0.0:
        return None
    return float(math.sqrt(num2 / den2))


def estimate_C_A(A, T, probes, grid=None, seed=42, nsteps=200, pieces=8):
    """Empirical maximal L2-regularity constant from random forcings.

    Forcing histories are piecewise constant in time over ``pieces``
    subintervals.  Probes with zero forcing are skipped.  The theoretical
    value for a non-negative selfadjoint generator is 1, which condition
    checks use by default; this estimator is the numerical cross-check.
    """
    if probes < 1:
        raise ParameterError("need at least one probe")
    if T <= 0:
        raise ParameterError("horizon must be positive")
    mat = A.matrix if isinstance(A, OperatorMatrix) else A
    if grid is None:
        grid = A.grid
    rng = np.random.default_rng(seed)
    n = mat.shape[0]
    dt = T / nsteps
    best = 0.0
    for _ in range(probes):
        blocks = rng.standard_normal((pieces, n))
        if np.all(blocks == 0.0):
            continue
        k_idx = np.minimum((np.arange(nsteps + 1) * pieces) // nsteps, pieces - 1)
        F = blocks[k_idx]
        r = maximal_regularity_ratio(mat, grid, F, dt)
        if r is not None:
            best = max(best, r)
    return float(best)


# ---------------------------------------------------------------------------
# the smallness report


@dataclass
class ConditionReport:
    """Estimated constants, smallness conditions and existence horizons."""

    lambda1: float
    lambda2: float
    M: np.ndarray
    m1_mixed2: float
    C_sharp_est: float
    C_A_est: float
    C_A_used: float
    C_star_est: float
    condition_thm24: bool
    condition_thm25: bool
    condition_thm26: bool
    T_star_24: float
    T_star_25: float
    min_kg11: float
    min_kg12: float
    min_kg22: float
    kappa_min: float
    kappa_max: float
    horizon: float

    def as_keyvalues(self):
        items = [
            ("lambda1", self.lambda1), ("lambda2", self.lambda2),
            ("M1", self.M[0]), ("M2", self.M[1]), ("M3", self.M[2]),
            ("M4", self.M[3]), ("M5", self.M[4]),
            ("M1_mixed_doubled", self.m1_mixed2),
            ("C_sharp_est", self.C_sharp_est),
            ("C_A_est", self.C_A_est), ("C_A_used", self.C_A_used),
            ("C_star_est", self.C_star_est),
            ("condition_thm24", self.condition_thm24),
            ("condition_thm25", self.condition_thm25),
            ("condition_thm26", self.condition_thm26),
            ("T_star_24", self.T_star_24), ("T_star_25", self.T_star_25),
            ("min_kg11", self.min_kg11), ("min_kg12", self.min_kg12),
            ("min_kg22", self.min_kg22),
            ("kappa_min", self.kappa_min), ("kappa_max", self.kappa_max),
            ("horizon", self.horizon),
        ]
        return items

    @staticmethod
    def csv_header():
        return [k for k, _ in _EMPTY_REPORT.as_keyvalues()]

    def csv_row(self):
        return [_fmt(v) for _, v in self.as_keyvalues()]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return repr(float(v)) if isinstance(v, (int, float, np.floating)) else str(v)


def horizon_thm24(C_star, C_A, T):
    """Existence horizon paired with the first smallness condition:
    T capped by log(1 + 1/(16 C_star (C_A+1)^2)) / 2."""
    if C_star <= 0.0:
        return T
    return min(T, 0.5 * math.log1p(1.0 / (16.0 * C_star * (C_A + 1.0) ** 2)))


def horizon_thm25(C_sharp, M5, C_A, T):
    """Existence horizon paired with the second smallness condition:
    T capped by log(1 + 1/(16 C_sharp^2 M5^2 (C_A+1)^2)) / 2."""
    q = 16.0 * (C_sharp ** 2) * (M5 ** 2) * (C_A + 1.0) ** 2
    if q <= 0.0:
        return T
    return min(T, 0.5 * math.log1p(1.0 / q))


def smallness_report(chart, kappa, grid, times, margin=0.05, probes=16, seed=42,
                     c_a_used=1.0, estimate_ca=True, norm_iters=50):
    """Evaluate the three smallness hypotheses with estimated constants.

    The empirical C_star is the discrete constant of the first-order/zeroth-
    order remainder: the sum of the power-iteration norms of the B2..B5 parts,
    maximized over the scanned times.
    """
    times = list(times)
    if not times:
        raise ParameterError("empty time sample")
    kmin, kmax = diffusion_bounds(kappa, chart, grid, times)
    minima = coefficient_minima(chart, kappa, grid, times)
    lam1, lam2 = lambda_select(chart, kappa, grid, times, margin=margin)
    M, m1_mixed2 = m_quantities(chart, kappa, lam1, lam2, grid, times, with_mixed_factor2=True)

    A = assemble_A(grid, lam1, lam2)
    c_sharp = estimate_C_sharp(A, grid, probes, seed=seed)
    c_a_est = estimate_C_A(A, min(chart.horizon, 1.0), max(1, probes // 4),
                           grid=grid, seed=seed) if estimate_ca else float("nan")

    c_star = 0.0
    for t in times:
        parts = assemble_B_parts(chart, kappa, grid, lam1, lam2, t,
                                 norm_iters=norm_iters, seed=seed)
        c_star = max(c_star, float(parts["norms"][1:].sum()))

    ca = c_a_used
    lhs24 = c_sharp * M[0] * (ca + 1.0)
    lhs25 = c_sharp * M[:4].sum() * (ca + 1.0)
    lhs26 = c_sharp * M.sum() * (ca + 1.0)

    return ConditionReport(
        lambda1=lam1, lambda2=lam2, M=M, m1_mixed2=m1_mixed2,
        C_sharp_est=c_sharp, C_A_est=c_a_est, C_A_used=ca, C_star_est=c_star,
        condition_thm24=bool(lhs24 <= SMALLNESS_THRESHOLD),
        condition_thm25=bool(lhs25 <= SMALLNESS_THRESHOLD),
        condition_thm26=bool(lhs26 <= SMALLNESS_THRESHOLD),
        T_star_24=horizon_thm24(c_star, ca, chart.horizon),
        T_star_25=horizon_thm25(c_sharp, M[4], ca, chart.horizon),
        min_kg11=minima["min_kg11"], min_kg12=minima["min_kg12"],
        min_kg22=minima["min_kg22"],
        kappa_min=kmin, kappa_max=kmax, horizon=chart.horizon,
    )


_EMPTY_REPORT = ConditionReport(
    lambda1=1.0, lambda2=1.0, M=np.zeros(5), m1_mixed2=0.0,
    C_sharp_est=0.0, C_A_est=0.0, C_A_used=1.0, C_star_est=0.0,
    condition_thm24=True, condition_thm25=True, condition_thm26=True,
    T_star_24=0.0, T_star_25=0.0, min_kg11=0.0, min_kg12=0.0, min_kg22=0.0,
    kappa_min=0.0, kappa_max=0.0, horizon=0.0,
)
