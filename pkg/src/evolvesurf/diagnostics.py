"""Surface-geometric diagnostics of trajectories and convergence studies.

Integrals over the evolving surface reduce to weighted integrals over the
parameter rectangle: areas through the factor sqrt(G), tangential-gradient
energies through the inverse metric.  On top of those reductions this module
checks the structural claims the solver is supposed to reproduce: the energy
balance, the t^{-1/2} decay of the surface mass, the regularity quotient, and
manufactured-solution convergence orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError
from .geometry import metric_fields
from .operator import (
    Field,
    assemble_L,
    coefficient_fields,
    field_l2,
    half_power_norm,
    sobolev_h1_norm,
)
from .timestepper import solve_direct


# ---------------------------------------------------------------------------
# quadrature on the parameter rectangle


def _trapezoid_weights(n1p2, n2p2):
    w1 = np.ones(n1p2)
    w1[0] = w1[-1] = 0.5
    w2 = np.ones(n2p2)
    w2[0] = w2[-1] = 0.5
    return np.outer(w1, w2)


def surface_integral(psi, chart, grid, t):
    """Integral of a scalar over the surface patch at time t.

    ``psi`` is an evaluator (x1, x2, t) -> array on the parameter rectangle;
    the surface integral is the trapezoid quadrature of psi * sqrt(G).
    """
    X1, X2 = grid.full_mesh()
    mf = metric_fields(chart, X1, X2, t, h_fd=grid.h_fd, want_dGdt=False)
    vals = np.broadcast_to(np.asarray(psi(X1, X2, t), dtype=float), X1.shape)
    w = _trapezoid_weights(*X1.shape)
    return float(grid.h1 * grid.h2 * np.sum(w * vals * mf.sqrtG))


def _cell_center_gradients(values, grid):
    """Bilinear-consistent difference quotients at cell centers.

    Returns (d1, d2) of shape (n1+1, n2+1); the zero Dirichlet ring enters
    through the padded field, so boundary strips carry their full gradient.
    """
    p = grid.pad_dirichlet(values)
    d1 = (p[1:, 1:] + p[1:, :-1] - p[:-1, 1:] - p[:-1, :-1]) / (2.0 * grid.h1)
    d2 = (p[1:, 1:] - p[1:, :-1] + p[:-1, 1:] - p[:-1, :-1]) / (2.0 * grid.h2)
    return d1, d2


def _cell_center_mesh(grid):
    x1 = grid.x1_full()
    x2 = grid.x2_full()
    c1 = 0.5 * (x1[1:] + x1[:-1])
    c2 = 0.5 * (x2[1:] + x2[:-1])
    return np.meshgrid(c1, c2, indexing="ij")


def surface_grad_sq(values, chart, grid, t, kappa=None):
    """Squared L2 norm of the tangential gradient of a grid function.

    Midpoint quadrature of g^ab d_a u d_b u sqrt(G) over the cells of the
    grid; with ``kappa`` the integrand is weighted by the diffusivity, giving
    the dissipation functional of the energy balance.
    """
    d1, d2 = _cell_center_gradients(values, grid)
    C1, C2 = _cell_center_mesh(grid)
    mf = metric_fields(chart, C1, C2, t, h_fd=grid.h_fd, want_dGdt=False)
    integrand = (mf.ginv11 * d1 * d1 + 2.0 * mf.ginv12 * d1 * d2
                 + mf.ginv22 * d2 * d2) * mf.sqrtG
    if kappa is not None:
        integrand = integrand * np.broadcast_to(
            np.asarray(kappa.value(C1, C2, t), dtype=float), C1.shape)
    return float(grid.h1 * grid.h2 * np.sum(integrand))


def surface_gradient_components(values, chart, grid, t):
    """Ambient components of the tangential gradient at cell centers.

    Uses the pull-back representation g^ab (d x_j / d X_a) d_b u, one array
    per ambient direction j; contracting the squares reproduces the integrand
    of ``surface_grad_sq`` pointwise.
    """
    d1, d2 = _cell_center_gradients(values, grid)
    C1, C2 = _cell_center_mesh(grid)
    mf = metric_fields(chart, C1, C2, t, h_fd=grid.h_fd, want_dGdt=False)
    du1 = mf.ginv11 * d1 + mf.ginv12 * d2   # contravariant components
    du2 = mf.ginv12 * d1 + mf.ginv22 * d2
    comps = mf.g1 * du1[None, ...] + mf.g2 * du2[None, ...]
    return comps, mf


def surface_mass(values, chart, grid, t):
    """L2(Gamma(t)) norm squared of a Dirichlet grid function."""
    v2 = grid.to_grid(np.asarray(values) ** 2)
    X1, X2 = grid.interior_mesh()
    mf = metric_fields(chart, X1, X2, t, h_fd=grid.h_fd, want_dGdt=False)
    return float(grid.h1 * grid.h2 * np.sum(v2 * mf.sqrtG))


# ---------------------------------------------------------------------------
# energy / decay / regularity reports


@dataclass
class EnergyLedger:
    """Both sides of the energy balance along a trajectory."""

    times: np.ndarray
    mass: np.ndarray          # 0.5 ||u(t)||^2 on the surface
    dissipation: np.ndarray   # cumulative integral of ||sqrt(kappa) grad u||^2
    residual_abs: np.ndarray
    residual_rel: np.ndarray

    def max_rel_residual(self):
        return float(np.max(self.residual_rel))


def energy_report(traj, chart, kappa, grid):
    """Evaluate mass(t) + cumulative dissipation - mass(0) per snapshot.

    The balance holds exactly for the continuous homogeneous system; the
    discrete residual combines the quadrature and time-stepping errors.
    """
    nt = len(traj.times)
    mass = np.empty(nt)
    diss_rate = np.empty(nt)
    for k in range(nt):
        t = float(traj.times[k])
        mass[k] = 0.5 * surface_mass(traj.fields[k], chart, grid, t)
        diss_rate[k] = surface_grad_sq(traj.fields[k], chart, grid, t, kappa=kappa)
    diss = np.concatenate([[0.0], np.cumsum(
        0.5 * traj.dt * (diss_rate[1:] + diss_rate[:-1]))])
    resid = np.abs(mass + diss - mass[0])
    scale = mass[0] if mass[0] > 0 else 1.0
    return EnergyLedger(traj.times.copy(), mass, diss, resid, resid / scale)


def decay_report(traj, chart, grid, lambda1=1.0, lambda2=1.0, t_min=None):
    """Decay quotient sup_t sqrt(t) ||u(t)|| / ||u0||_{W^{1,2}(U)}.

    The gradient part of the initial-datum norm is weighted by the anisotropy
    pair (the defaults give the plain Sobolev norm).  Snapshots at t = 0 (or
    below ``t_min``) are excluded from the sup; the flag ``monotone`` records
    whether the surface mass never increases.
    """
    w_norm = math.hypot(field_l2(traj.fields[0], grid),
                        half_power_norm(traj.fields[0], grid, lambda1, lambda2))
    if w_norm == 0.0:
        raise ParameterError("zero initial datum: decay quotient undefined")
    lo = 0.0 if t_min is None else float(t_min)
    norms = np.array([
        math.sqrt(surface_mass(traj.fields[k], chart, grid, float(traj.times[k])))
        for k in range(len(traj.times))
    ])
    mask = traj.times > max(lo, 0.0)
    if not np.any(mask):
        raise ParameterError("no snapshots above t_min")
    sup_bound = float(np.max(np.sqrt(traj.times[mask]) * norms[mask]) / w_norm)
    monotone = bool(np.all(np.diff(norms) <= 1e-12 * max(norms[0], 1.0)))
    return {"sup_bound": sup_bound, "monotone": monotone}


def material_derivative(traj, index):
    """Centered time difference of the pulled-back field at one snapshot.

    Under the pull-back the material derivative following the surface motion
    is the plain time derivative on the parameter rectangle.
    """
    if index <= 0 or index >= len(traj.times) - 1:
        raise ParameterError(f"index {index} is not an interior snapshot")
    vals = (traj.fields[index + 1] - traj.fields[index - 1]) / (2.0 * traj.dt)
    return Field(vals, float(traj.times[index]))


def regularity_report(traj, chart, kappa, grid):
    """Boundedness quotient of the regularity estimate.

    (||material derivative|| + ||surface diffusion term||) in L2-in-time of
    L2(Gamma), divided by the W^{1,2} norm of the initial datum.  The bound
    constant of the estimate is abstract, so only finiteness/boundedness of
    the quotient is meaningful.
    """
    nt = len(traj.times)
    if nt < 3:
        raise ParameterError("need at least three snapshots")
    w_norm = sobolev_h1_norm(traj.fields[0], grid)
    if w_norm == 0.0:
        raise ParameterError("zero initial datum")
    static = chart.static_metric and getattr(kappa, "time_independent", False)
    L = cf = None
    dt_sq = np.empty(nt - 2)
    div_sq = np.empty(nt - 2)
    for k in range(1, nt - 1):
        t = float(traj.times[k])
        mat = material_derivative(traj, k)
        dt_sq[k - 1] = surface_mass(mat.values, chart, grid, t)
        if L is None or not static:
            L = assemble_L(chart, kappa, grid, t)
            cf = coefficient_fields(chart, kappa, grid, t)
        # diffusion part of the operator: div_Gamma(kappa grad_Gamma u) = -(L - D0) u
        div_vals = -(L.matrix @ traj.fields[k] - cf["d0"].ravel() * traj.fields[k])
        div_sq[k - 1] = surface_mass(div_vals, chart, grid, t)
    dt_norm = math.sqrt(np.sum(traj.dt * dt_sq))
    div_norm = math.sqrt(np.sum(traj.dt * div_sq))
    return {"quotient": (dt_norm + div_norm) / w_norm,
            "material_norm": dt_norm, "diffusion_norm": div_norm}


def transport_identity_residual(chart, grid, t, dt_fd=1e-4):
    """Residual of the integrated dilation identity at time t.

    The surface integral of the velocity divergence, computed through the
    pulled-back dilation rate (dG/dt)/(2G), must equal the time derivative of
    the surface area; the latter is approximated by a centered difference.
    """
    def dil(x1, x2, tt):
        mf = metric_fields(chart, x1, x2, tt, h_fd=grid.h_fd)
        return 0.5 * mf.dGdt / mf.G

    lhs = surface_integral(dil, chart, grid, t)
    area = lambda tt: surface_integral(lambda a, b, c: 1.0, chart, grid, tt)
    t0 = max(0.0, t - dt_fd)
    t1 = min(chart.horizon, t + dt_fd)
    rhs = (area(t1) - area(t0)) / (t1 - t0)
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    """Exact solution prescribed for convergence studies.

    ``builder`` maps sympy symbols (X1, X2, t) to the solution expression;
    numeric evaluators for the solution and for the induced forcing
    F = du/dt + L u are generated symbolically per chart/diffusivity pair.
    """

    builder: Callable
    _value: Callable = None

    def value(self, x1, x2, t):
        return np.broadcast_to(
            np.asarray(self._value(np.asarray(x1, dtype=float),
                                   np.asarray(x2, dtype=float), t), dtype=float),
            np.broadcast(np.asarray(x1), np.asarray(x2)).shape)


def manufactured_solution(builder):
    import sympy as sp

    X1, X2, t = sp.symbols("X1 X2 t", real=True)
    expr = builder(X1, X2, t)
    fn = sp.lambdify((X1, X2, t), expr, "numpy")
    return ManufacturedSolution(builder=builder, _value=fn)


def symbolic_operator_apply(chart, kappa, builder):
    """Numeric evaluator of L(t) applied to a symbolic field.

    Requires the chart and diffusivity to carry symbolic forms (all presets
    do).  Used both for manufactured forcings and as the consistency oracle
    for the discrete assembly.
    """
    import sympy as sp

    if chart.sym_builder is None or kappa.sym_builder is None:
        raise ParameterError("chart or diffusivity has no symbolic form")
    X1, X2, t = sp.symbols("X1 X2 t", real=True)
    u = builder(X1, X2, t)
    x = chart.sym_builder(X1, X2, t)
    g1 = [sp.diff(c, X1) for c in x]
    g2 = [sp.diff(c, X2) for c in x]
    g11 = sum(a * b for a, b in zip(g1, g1))
    g12 = sum(a * b for a, b in zip(g1, g2))
    g22 = sum(a * b for a, b in zip(g2, g2))
    G = g11 * g22 - g12 * g12
    R = sp.sqrt(G)
    kap = kappa.sym_builder(X1, X2, t)
    ginv = ((g22 / G, -g12 / G), (-g12 / G, g11 / G))
    grads = (sp.diff(u, X1), sp.diff(u, X2))
    flux1 = kap * R * (ginv[0][0] * grads[0] + ginv[0][1] * grads[1])
    flux2 = kap * R * (ginv[1][0] * grads[0] + ginv[1][1] * grads[1])
    Lu = -(sp.diff(flux1, X1) + sp.diff(flux2, X2)) / R + sp.diff(G, t) / (2 * G) * u
    fn = sp.lambdify((X1, X2, t), Lu, "numpy")

    def apply(x1, x2, tt):
        return np.broadcast_to(
            np.asarray(fn(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float), tt),
                       dtype=float),
            np.broadcast(np.asarray(x1), np.asarray(x2)).shape)

    return apply


def manufactured_forcing(chart, kappa, exact):
    """Forcing F = du/dt + L u induced by a manufactured solution."""
    import sympy as sp

    X1, X2, t = sp.symbols("X1 X2 t", real=True)
    dudt = sp.diff(exact.builder(X1, X2, t), t)
    dudt_fn = sp.lambdify((X1, X2, t), dudt, "numpy")
    L_apply = symbolic_operator_apply(chart, kappa, exact.builder)

    def F(x1, x2, tt):
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        a = np.broadcast_to(np.asarray(dudt_fn(x1, x2, tt), dtype=float), shape)
        return a + L_apply(x1, x2, tt)

    return F


@dataclass
class ConvergenceTable:
    """Refinement-study errors with fitted orders."""

    rows: list                      # dicts with h, dt, err_max, err_l2
    order_space: float
    order_time: float
    monotone: bool

    def incremental_orders(self):
        """Per-row orders against whichever parameter was refined."""
        out = [(math.nan, math.nan)]
        for prev, cur in zip(self.rows[:-1], self.rows[1:]):
            o_s = o_t = math.nan
            if cur["h"] != prev["h"]:
                o_s = math.log(prev["err_l2"] / cur["err_l2"]) / math.log(prev["h"] / cur["h"])
            if cur["dt"] != prev["dt"]:
                o_t = math.log(prev["err_l2"] / cur["err_l2"]) / math.log(prev["dt"] / cur["dt"])
            out.append((o_s, o_t))
        return out


def _fit_order(params, errors):
    p = np.log(np.asarray(params))
    e = np.log(np.asarray(errors))
    if np.allclose(p, p[0]):
        return math.nan
    slope = np.polyfit(p, e, 1)[0]
    return float(slope)


def _check_boundary_compatible(exact, grid, horizon):
    X1, X2 = grid.full_mesh()
    edge = np.zeros_like(X1, dtype=bool)
    edge[0, :] = edge[-1, :] = True
    edge[:, 0] = edge[:, -1] = True
    for t in (0.0, 0.5 * horizon, horizon):
        vals = exact.value(X1, X2, t)
        scale = max(float(np.max(np.abs(vals))), 1.0)
        if float(np.max(np.abs(vals[edge]))) > 1e-9 * scale:
            raise ParameterError("manufactured solution does not vanish on the boundary")


def mms_convergence(chart, kappa, exact, levels, T=0.1, theta=0.5):
    """Manufactured-solution refinement study.

    ``levels`` is a sequence of (n, dt) pairs, n interior nodes per axis; the
    forcing is generated symbolically once and evaluated per level.  Errors
    are max-norm and L2-norm against the exact solution at the final time.
    Non-monotone error sequences are flagged, not fatal.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ParameterError("need at least 3 refinement levels for an order fit")
    from .geometry import make_grid

    F = manufactured_forcing(chart, kappa, exact)
    rows = []
    for n, dt in levels:
        grid_l = make_grid(chart.domain, n, n)
        _check_boundary_compatible(exact, grid_l, T)
        X1, X2 = grid_l.interior_mesh()
        v0 = exact.value(X1, X2, 0.0).ravel()
        traj = solve_direct(chart, kappa, grid_l, v0, T, dt, theta=theta, F_provider=F)
        t_end = float(traj.times[-1])
        ref = exact.value(X1, X2, t_end).ravel()
        diff = traj.fields[-1] - ref
        rows.append({
            "h": grid_l.h1, "dt": dt,
            "err_max": float(np.max(np.abs(diff))),
            "err_l2": field_l2(diff, grid_l),
        })
    hs = [r["h"] for r in rows]
    dts = [r["dt"] for r in rows]
    errs = [r["err_l2"] for r in rows]
    order_space = _fit_order(hs, errs) if len(set(hs)) > 1 else math.nan
    order_time = _fit_order(dts, errs) if len(set(dts)) > 1 else math.nan
    monotone = all(errs[i + 1] < errs[i] for i in range(len(errs) - 1))
    return ConvergenceTable(rows, order_space, order_time, monotone)
