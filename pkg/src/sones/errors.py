"""Exception hierarchy shared by the library and the CLI."""


class SonesError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(SonesError, ValueError):
    """Shape, dimension or range mismatch in an argument."""


class FrequencyError(SonesError, ValueError):
    """Probing frequencies violate the required conditions."""

    def __init__(self, violations, level):
        self.violations = list(violations)
        self.level = level
        lines = "\n".join(str(v) for v in self.violations)
        super().__init__(f"probing frequencies fail {level} validation:\n{lines}")


class SearchExhaustedError(SonesError):
    """No frequency tuple in the searched range passes validation."""


class QuadratureError(SonesError, ArithmeticError):
    """Periodic average failed to converge."""


class DivergenceError(SonesError, ArithmeticError):
    """Integrator produced a non-finite state."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"non-finite state at t={t:.6g} s")


class ConvergenceError(SonesError, ArithmeticError):
    """Iteration did not reach its tolerance within the allowed budget."""


class SingularityError(SonesError, ArithmeticError):
    """A matrix that must be inverted is singular."""


class NumericalError(SonesError, ArithmeticError):
    """Eigenvalue computation or other numeric kernel failed."""


class ScenarioError(SonesError, ValueError):
    """Malformed or inconsistent scenario file."""
