"""Exception hierarchy shared by every construction."""


class GencompError(Exception):
    """Base class for all errors raised by this package."""


class BudgetExceeded(GencompError):
    """A stage beyond an oracle's budget was requested."""


class BudgetExhausted(GencompError):
    """A stage search ran out of budget before finding what it looked for.

    ``partial`` carries whatever the construction had certified so far.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InvariantViolation(GencompError):
    """A relation claimed to be an equivalence is not one."""


class ContainmentError(GencompError):
    """A set required to be a subset of another is not."""


class ScenarioError(GencompError):
    """Declared scenario metadata is inconsistent with what is observed."""


class PreconditionError(GencompError):
    """An operation was called on inputs outside its declared domain."""


class ScheduleError(PreconditionError):
    """A dyadic schedule violates the arithmetic the construction needs."""


class UnsupportedStructure(GencompError):
    """The structure satisfies none of the clauses a construction handles."""


class ValidationError(GencompError):
    """A table or scenario failed validation; ``problems`` lists every issue."""

    def __init__(self, message, problems=()):
        super().__init__(message)
        self.problems = list(problems)
