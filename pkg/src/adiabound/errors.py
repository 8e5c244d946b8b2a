"""Exception hierarchy.

Two families matter to callers: :class:`InputError` for bad models, configs
or arguments (CLI exit code 1) and :class:`NumericalError` for failures of
the numerics on otherwise valid input (CLI exit code 2).
"""


class AdiabaticError(Exception):
    """Base class for all errors raised by this package."""


class InputError(AdiabaticError):
    pass


class NumericalError(AdiabaticError):
    pass


class ParseError(InputError):
    pass


class ValidationError(InputError):
    """Raised with the full list of violations found in a config."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnknownModel(InputError):
    pass


class NonHermitian(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class TimesNotOnGrid(InputError):
    pass


class NoAnalytics(InputError):
    pass


class NotApplicable(InputError):
    pass


class NoConvergence(NumericalError):
    pass


class AmbiguousMatching(NumericalError):
    pass


class DegenerateGroundState(NumericalError):
    pass


class DifferentiationFailure(NumericalError):
    pass


class BudgetExceeded(NumericalError):
    pass


class StepUnderflow(NumericalError):
    pass


class QuadratureBudget(NumericalError):
    pass
