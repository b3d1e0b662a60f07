"""Exception hierarchy.

The CLI maps ``InputError`` subclasses to exit status 1 and
``EstimationError`` subclasses to exit status 2.
"""


class BargainLabError(Exception):
    pass


class InputError(BargainLabError):
    """Bad input: malformed files, invalid records, bad configuration."""


class EstimationError(BargainLabError):
    """A statistical stage could not produce a valid result."""


class RowError(InputError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(InputError):
    """One or more records violate a data invariant.

    ``violations`` is a list of ``(record_id, rule)`` pairs.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        shown = "; ".join(f"record {rid}: {rule}" for rid, rule in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            shown += f"; ... and {more} more"
        super().__init__(shown)


class EmptySampleError(InputError):
    pass


class ConfigError(InputError):
    pass


class PrerequisiteError(InputError):
    pass


class SingularDesignError(EstimationError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ConvergenceError(EstimationError):
    pass


class NoSupportError(EstimationError):
    pass


class BootstrapError(EstimationError):
    pass


class RecoveryError(EstimationError):
    pass


class DegenerateRegimesError(RecoveryError):
    pass


class AmbiguousRootError(RecoveryError):
    pass


class NestingError(EstimationError):
    pass
