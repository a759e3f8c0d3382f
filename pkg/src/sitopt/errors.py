"""Exception types shared across the package.

The hierarchy distinguishes user/configuration mistakes (ValueError family,
CLI exit code 2) from infeasibility and numerical failures discovered at run
time (RuntimeError family, CLI exit code 1).
"""


class HypothesisViolation(ValueError):
    """Parameter set breaks the standing model assumptions.

    Raised when the sterile-male death rate does not exceed the fertile-male
    death rate, or when the basic offspring number is not above one, so the
    persistence/extinction structure the rest of the package relies on is
    absent.
    """


class DomainError(ValueError):
    """Argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """Malformed or inconsistent parameter file / override."""


class OutOfRange(ValueError):
    """Sample time outside the span covered by a trajectory."""


class StepSizeUnderflow(RuntimeError):
    """Adaptive step fell below 1e-12 of the integration span."""


class InvariantBreach(RuntimeError):
    """A model state left its forward-invariant box beyond tolerance.

    Signals an internal inconsistency (bad initial state or a bug), not a
    user error.
    """


class NoMinimum(RuntimeError):
    """Closed-loop run never produced a rebound of the female population."""


class InfeasibleHorizon(RuntimeError):
    """Horizon too short for the off/singular/off schedule to exist."""


class ShiftOverflow(RuntimeError):
    """Located population minimum lies beyond the requested horizon."""


class NotReached(RuntimeError):
    """Constant-rate release never drove the females to the target level."""


class Infeasible(RuntimeError):
    """No admissible control can satisfy the terminal constraint."""


class StructureViolation(RuntimeError):
    """Planner diagnostics invalidate the off/singular/off control form."""


class StructureMismatch(RuntimeError):
    """Switching-function classification contradicts the control iterate.

    Carries the offending report on the ``report`` attribute.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
