"""Exception hierarchy shared across the package."""


class SignedBetaError(Exception):
    """Base class for all errors raised by signed_beta."""


class DomainError(SignedBetaError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularSystemError(SignedBetaError, ArithmeticError):
    def __init__(self, pivot_index, pivot_value, threshold):
        self.pivot_index = int(pivot_index)
        self.pivot_value = float(pivot_value)
        self.threshold = float(threshold)
        super().__init__(
            f"singular system: |pivot| at index {self.pivot_index} is "
            f"{abs(self.pivot_value):.3e} < {self.threshold:.3e}"
        )


class ZeroProbabilityError(DomainError):
    """Log of a zero-probability outcome was requested."""

    def __init__(self, y, m, kappa):
        self.y, self.m, self.kappa = y, m, kappa
        super().__init__(
            f"outcome y={y} has zero probability at m={m!r}, kappa={kappa!r}"
        )


class NonConvergenceError(SignedBetaError, RuntimeError):
    def __init__(self, message, residual_norm):
        self.residual_norm = float(residual_norm)
        super().__init__(f"{message} (last ||F||_inf = {self.residual_norm:.3e})")


class DegenerateDegreeError(SignedBetaError, ValueError):
    """Degree sequence for which the estimating equations have no root."""

    def __init__(self, out_nodes, in_nodes):
        self.out_nodes = sorted(int(i) for i in out_nodes)
        self.in_nodes = sorted(int(j) for j in in_nodes)
        super().__init__(
            "degenerate degrees: out-degree infeasible for nodes "
            f"{_preview(self.out_nodes)}, in-degree infeasible for nodes "
            f"{_preview(self.in_nodes)}"
        )


class CurvatureError(SignedBetaError, ValueError):
    def __init__(self, index, value):
        self.index = int(index)
        self.value = float(value)
        super().__init__(f"non-positive curvature u[{self.index}] = {self.value!r}")


class ReferenceNodeError(SignedBetaError, ValueError):
    """The pinned in-status of the last node has no standard error."""


class InsufficientDataError(SignedBetaError, ValueError):
    pass


class EdgeListError(SignedBetaError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class PreprocessingEmptyError(SignedBetaError, ValueError):
    pass


def _preview(items, limit=10):
    if len(items) <= limit:
        return str(items)
    return str(items[:limit])[:-1] + f", ... (+{len(items) - limit} more)]"
