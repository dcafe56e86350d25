"""Exception hierarchy shared by the lab modules.

Invalid input raises a ``ValueError`` subclass, numerical breakdown a
``RuntimeError`` subclass. Every class also derives from ``GelfandError`` so
the CLI can tell lab failures apart from programming errors.
"""

from __future__ import annotations

from typing import Any, List, Optional


class GelfandError(Exception):
    """Base mixin for all lab errors."""


class ConfigurationError(GelfandError, ValueError):
    """Bad run configuration, grid parameters or file layout."""


class DomainError(GelfandError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InfeasibleFrequencyError(DomainError):
    """|xi| exceeds 2*sqrt(E + rho^2): no pair in Theta_E reaches it."""


class InfeasibleParametersError(DomainError):
    """Side condition of a stability estimate violated (tau, E, Lambda)."""


class SingularityError(DomainError):
    """Evaluation at a singular point of a closed-form kernel."""


class IncompatibilityError(GelfandError, ValueError):
    """Objects built on different discretisations or energies."""


class InvalidStateError(GelfandError, ValueError):
    """A solver state that may not be used (e.g. not converged)."""


class IncompleteDataError(GelfandError, ValueError):
    """Sample set does not cover the required frequency ball."""


class NearEigenvalueError(GelfandError, RuntimeError):
    """E is (numerically) a Dirichlet eigenvalue of -Laplace + v."""

    def __init__(self, margin: float, threshold: float, energy: float):
        self.margin = margin
        self.threshold = threshold
        self.energy = energy
        super().__init__(
            f"E={energy:g} is within {margin:.3e} of a Dirichlet eigenvalue "
            f"(threshold {threshold:.3e}); re-seed E"
        )


class SolverError(GelfandError, RuntimeError):
    """Linear solve failed or missed its residual target."""

    def __init__(self, message: str, condition_estimate: Optional[float] = None):
        self.condition_estimate = condition_estimate
        if condition_estimate is not None:
            message = f"{message} (condition estimate {condition_estimate:.3e})"
        super().__init__(message)


class NoConvergenceError(GelfandError, RuntimeError):
    """Neumann series for mu does not contract."""

    def __init__(self, contraction: float, iterations: int, k_modulus: float):
        self.contraction = contraction
        self.iterations = iterations
        self.k_modulus = k_modulus
        super().__init__(
            f"Neumann series did not converge after {iterations} iterations "
            f"(measured contraction {contraction:.3f} at |k|={k_modulus:.3g}); "
            "try a larger |k|"
        )


class CalibrationError(GelfandError, RuntimeError):
    """No constants satisfy the training rows, or the training set is degenerate."""

    def __init__(self, message: str, violations: Optional[List[Any]] = None):
        self.violations = list(violations or [])
        if self.violations:
            message = f"{message}; violating rows: {self.violations}"
        super().__init__(message)
