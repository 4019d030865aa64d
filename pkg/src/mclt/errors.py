"""Exception hierarchy.

``ConfigError`` and its subclasses are caller mistakes (CLI exit code 1);
``NumericalError`` covers failures of the numerics themselves (exit code 2).
"""


class MCLTError(Exception):
    pass


class ConfigError(MCLTError, ValueError):
    pass


class NumericalError(MCLTError, ArithmeticError):
    pass


class DomainError(ConfigError):
    pass


class DegenerateModel(NumericalError):
    pass


class Condition2Violated(ConfigError):
    pass


class InsufficientReplicates(ConfigError):
    pass


class EmptySample(ConfigError):
    pass


class LengthMismatch(ConfigError):
    pass


class BetaTooSmall(ConfigError):
    pass


class SingularTerm(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class MartingaleViolation(NumericalError):
    pass


class CompletionInvariantViolated(NumericalError):
    def __init__(self, message, path_index=None):
        super().__init__(message)
        self.path_index = path_index
