"""Exception types shared across the package."""


class DomainError(ValueError):
    """Evaluation point lies outside the parameter rectangle or time horizon."""


class DegenerateChartError(RuntimeError):
    """The metric determinant is non-positive at some sample point."""

    def __init__(self, X, t, value):
        self.X = tuple(float(x) for x in X)
        self.t = float(t)
        self.value = float(value)
        super().__init__(
            f"degenerate chart: G = {self.value:.6g} <= 0 at X = {self.X}, t = {self.t:.6g}"
        )


class AssumptionViolationError(RuntimeError):
    """A coefficient assumption (positivity of kappa or of kappa*g^aa) fails on the scan."""


class ParameterError(ValueError):
    """An argument is outside its documented range."""


class StepSolveError(RuntimeError):
    """A linear solve inside a time step did not reach the required residual."""

    def __init__(self, t, residual, tol):
        self.t = float(t)
        self.residual = float(residual)
        super().__init__(
            f"step at t = {t:.6g} reached relative residual {residual:.3e} > {tol:.1e}"
        )


class PicardDivergenceError(RuntimeError):
    """The fixed-point iteration hit max_iter without contracting."""


class ConfigError(ValueError):
    """Configuration file is malformed or fails validation."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
