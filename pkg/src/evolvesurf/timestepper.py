"""Time integration of the pulled-back system and the fixed-point iteration.

Two routes to the same discrete solution:

* ``solve_direct`` advances dv/dt + L(t) v = F with a theta-scheme, assembling
  the full operator at each step time;
* ``solve_picard`` iterates the linearized stages
      dv_{m+1}/dt + A v_{m+1} = -B(t) v_m + F,   B(t) = L(t) - A,
  each stage marched with the same theta-scheme and step size, so the exact
  fixed point of the iteration is the direct theta-scheme trajectory and
  contraction ratios are not polluted by discretization differences.

``z_norm`` is the discrete exponential-weighted graph norm used to monitor
the iteration: sup_t e^{-t} ||v|| plus the L2-in-time norms of dv/dt and A v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, PicardDivergenceError, StepSolveError
from .operator import Field, OperatorMatrix, assemble_A, assemble_L, factorize, field_l2

SOLVE_TOL = 1e-10


@dataclass
class Trajectory:
    """Uniform-step time history of a grid function."""

    times: np.ndarray           # (N+1,)
    fields: np.ndarray          # (N+1, ndof)
    dt: float
    scheme: str
    grid: object
    forcing: Optional[Callable] = None

    @property
    def nsteps(self):
        return len(self.times) - 1

    def snapshot(self, k):
        return Field(self.fields[k].copy(), float(self.times[k]))


@dataclass
class PicardHistory:
    """Per-correction records of the fixed-point iteration.

    ``z_norms`` and ``diff_norms`` carry one entry per correction stage;
    ``ratios`` holds the well-defined consecutive quotients, so it is one
    entry shorter.
    """

    z_norms: list = field(default_factory=list)
    diff_norms: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def make_L_provider(chart, kappa, grid):
    """Callable t -> OperatorMatrix.

    A static operator (rigid chart, time-independent diffusivity) is
    assembled once; otherwise only the two most recent assembly times are
    kept, which is what one theta step touches.
    """
    static = chart.static_metric and getattr(kappa, "time_independent", False)
    cache = {}

    def provider(t):
        key = 0.0 if static else float(t)
        if key not in cache:
            if not static and len(cache) >= 2:
                cache.pop(next(iter(cache)))
            cache[key] = assemble_L(chart, kappa, grid, t)
        return cache[key]

    return provider


def _checked_solve(lu, matrix, rhs, t):
    v = lu.solve(rhs)
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        return np.zeros_like(rhs)
    resid = np.linalg.norm(matrix @ v - rhs) / scale
    if not np.isfinite(resid) or resid > SOLVE_TOL:
        raise StepSolveError(t, resid, SOLVE_TOL)
    return v


def theta_step(v, t, dt, theta, L_provider, F_provider=None):
    """One theta-scheme step of dv/dt + L(t) v = F from time t to t + dt.

    Solves (I + theta dt L(t+dt)) v' = (I - (1-theta) dt L(t)) v
           + dt (theta F(t+dt) + (1-theta) F(t)).
    """
    if not 0.5 <= theta <= 1.0:
        raise ParameterError(f"theta must lie in [0.5, 1], got {theta}")
    if dt <= 0.0:
        raise ParameterError("dt must be positive")
    vals = v.values if isinstance(v, Field) else np.asarray(v, dtype=float)
    Lnew = L_provider(t + dt)
    n = Lnew.matrix.shape[0]
    ident = sp.identity(n, format="csr")
    rhs = vals.copy()
    if theta < 1.0:
        Lold = L_provider(t)
        rhs = rhs - (1.0 - theta) * dt * (Lold.matrix @ vals)
    if F_provider is not None:
        fnew = F_provider(t + dt)
        fold = F_provider(t)
        rhs = rhs + dt * (theta * np.asarray(fnew) + (1.0 - theta) * np.asarray(fold))
    impl = (ident + theta * dt * Lnew.matrix).tocsc()
    lu = factorize(impl)
    out = _checked_solve(lu, impl, rhs, t + dt)
    return Field(out, t + dt)


class _ThetaMarcher:
    """Shared stepping loop with factorization reuse for static operators."""

    def __init__(self, grid, dt, theta, L_provider):
        self.grid = grid
        self.dt = dt
        self.theta = theta
        self.L_provider = L_provider
        self.ident = sp.identity(grid.ndof, format="csr")
        self._impl_cache = {}

    def _implicit(self, t_new):
        L = self.L_provider(t_new)
        key = id(L)
        if key not in self._impl_cache:
            impl = (self.ident + self.theta * self.dt * L.matrix).tocsc()
            self._impl_cache = {key: (impl, factorize(impl))}  # keep only latest
        return L, self._impl_cache[key]

    def step(self, vals, t, forcing=None):
        dt, theta = self.dt, self.theta
        rhs = vals.copy()
        if theta < 1.0:
            Lold = self.L_provider(t)
            rhs = rhs - (1.0 - theta) * dt * (Lold.matrix @ vals)
        if forcing is not None:
            fold, fnew = forcing
            rhs = rhs + dt * (theta * fnew + (1.0 - theta) * fold)
        _, (impl, lu) = self._implicit(t + dt)
        return _checked_solve(lu, impl, rhs, t + dt)


def _prepare_v0(v0, grid):
    vals = v0.values if isinstance(v0, Field) else np.asarray(v0, dtype=float)
    vals = vals.ravel()
    if vals.size != grid.ndof:
        raise ParameterError(f"initial datum has {vals.size} values, grid has {grid.ndof}")
    if not np.all(np.isfinite(vals)):
        raise ParameterError("initial datum contains non-finite values")
    return vals.astype(float)


def _eval_forcing(F_provider, grid, t):
    if F_provider is None:
        return None
    X1, X2 = grid.interior_mesh()
    return np.asarray(F_provider(X1, X2, t), dtype=float).ravel()


def solve_direct(chart, kappa, grid, v0, T, dt, theta=0.5, F_provider=None):
    """March the pulled-back system with the time-dependent operator.

    ``F_provider`` is an optional manufactured forcing (x1, x2, t) -> array;
    the homogeneous system of the model has F = 0.  Returns a Trajectory of
    ceil(T/dt) uniform steps; the Dirichlet boundary stays identically zero by
    construction.
    """
    if T <= 0.0:
        raise ParameterError("horizon must be positive")
    vals = _prepare_v0(v0, grid)
    nsteps = int(math.ceil(T / dt - 1e-12))
    provider = make_L_provider(chart, kappa, grid)
    marcher = _ThetaMarcher(grid, dt, theta, provider)
    if not 0.5 <= theta <= 1.0:
        raise ParameterError(f"theta must lie in [0.5, 1], got {theta}")

    times = np.arange(nsteps + 1) * dt
    fields = np.empty((nsteps + 1, grid.ndof))
    fields[0] = vals
    f_old = _eval_forcing(F_provider, grid, 0.0)
    for k in range(nsteps):
        t = times[k]
        f_new = _eval_forcing(F_provider, grid, t + dt)
        forcing = None if F_provider is None else (f_old, f_new)
        fields[k + 1] = marcher.step(fields[k], t, forcing)
        f_old = f_new
    return Trajectory(times, fields, dt, f"theta={theta}", grid, forcing=F_provider)


def z_norm(traj, A, grid):
    """Discrete exponential-weighted graph norm of a trajectory.

    sup_t e^{-t} ||v(t)|| + ||dv/dt||_{L2(0,T;L2)} + ||A v||_{L2(0,T;L2)},
    with centered time differences (one-sided at the ends) and trapezoid
    quadrature in time.
    """
    times = traj.times
    fields = traj.fields
    nt = len(times)
    if nt == 0:
        raise ParameterError("empty trajectory")
    mat = A.matrix if isinstance(A, OperatorMatrix) else A

    sup_term = max(
        math.exp(-float(times[k])) * field_l2(fields[k], grid) for k in range(nt)
    )
    if nt == 1:
        return sup_term

    dt = traj.dt
    dvdt = np.empty_like(fields)
    dvdt[0] = (fields[1] - fields[0]) / dt
    dvdt[-1] = (fields[-1] - fields[-2]) / dt
    if nt > 2:
        dvdt[1:-1] = (fields[2:] - fields[:-2]) / (2.0 * dt)

    w = np.full(nt, dt)
    w[0] = w[-1] = 0.5 * dt
    dv_sq = np.array([field_l2(dvdt[k], grid) ** 2 for k in range(nt)])
    av_sq = np.array([field_l2(mat @ fields[k], grid) ** 2 for k in range(nt)])
    return float(sup_term + math.sqrt(np.dot(w, dv_sq)) + math.sqrt(np.dot(w, av_sq)))


def solve_picard(chart, kappa, grid, lambda1, lambda2, v0, T, dt,
                 tol=1e-8, max_iter=20, theta=0.5, F_provider=None,
                 condition_report=None):
    """Fixed-point iteration with the constant comparison operator.

    Stage one solves dv/dt + A v = F; stage m+1 solves
    dv/dt + A v = -B(t) v_m + F with B(t) = L(t) - A frozen per step time.
    Stops when the z-norm of a consecutive difference drops below ``tol``.
    Raises PicardDivergenceError when max_iter is hit while the last ratio is
    at or above one (the smallness condition is the quantity to check then).
    """
    if tol <= 0.0:
        raise ParameterError("tol must be positive")
    if not 0.5 <= theta <= 1.0:
        raise ParameterError(f"theta must lie in [0.5, 1], got {theta}")
    vals = _prepare_v0(v0, grid)
    nsteps = int(math.ceil(T / dt - 1e-12))
    times = np.arange(nsteps + 1) * dt

    A = assemble_A(grid, lambda1, lambda2)
    ident = sp.identity(grid.ndof, format="csr")
    impl = (ident + theta * dt * A.matrix).tocsc()
    lu = factorize(impl)
    expl = (ident - (1.0 - theta) * dt * A.matrix).tocsr()

    # B(t_k) frozen once per step time, shared across iterations
    B_mats = [assemble_L(chart, kappa, grid, float(t)).matrix - A.matrix for t in times]
    F_vals = None
    if F_provider is not None:
        F_vals = np.array([_eval_forcing(F_provider, grid, float(t)) for t in times])

    def march(prev_fields):
        fields = np.empty((nsteps + 1, grid.ndof))
        fields[0] = vals
        for k in range(nsteps):
            rhs = expl @ fields[k]
            if prev_fields is not None:
                rhs = rhs - dt * (theta * (B_mats[k + 1] @ prev_fields[k + 1])
                                  + (1.0 - theta) * (B_mats[k] @ prev_fields[k]))
            if F_vals is not None:
                rhs = rhs + dt * (theta * F_vals[k + 1] + (1.0 - theta) * F_vals[k])
            fields[k + 1] = _checked_solve(lu, impl, rhs, times[k + 1])
        return fields

    scheme = f"picard-theta={theta}"
    history = PicardHistory()
    current = march(None)   # v_1
    prev_diff = None
    for m in range(1, max_iter + 1):
        nxt = march(current)
        diff_traj = Trajectory(times, nxt - current, dt, scheme, grid)
        diff = z_norm(diff_traj, A, grid)
        znext = z_norm(Trajectory(times, nxt, dt, scheme, grid), A, grid)
        history.z_norms.append(znext)
        history.diff_norms.append(diff)
        if prev_diff is not None:
            history.ratios.append(diff / prev_diff if prev_diff > 0 else 0.0)
        history.iterations = m
        current = nxt
        if diff <= tol:
            history.converged = True
            break
        prev_diff = diff
    else:
        if history.ratios and history.ratios[-1] >= 1.0:
            hint = ""
            if condition_report is not None:
                hint = (f" (smallness report: condition_thm26 = "
                        f"{condition_report.condition_thm26})")
            raise PicardDivergenceError(
                f"no contraction after {max_iter} iterations, last ratio "
                f"{history.ratios[-1]:.3f} >= 1; check the smallness conditions{hint}"
            )

    traj = Trajectory(times, current, dt, scheme, grid, forcing=F_provider)
    return traj, history
