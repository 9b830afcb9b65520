"""Exception hierarchy shared by every module."""


class CpsError(Exception):
    """Base class for all errors raised by cpsflow."""


class DomainViolation(CpsError, ValueError):
    """A component value lies outside its declared finite domain."""


class InvalidModel(CpsError, ValueError):
    """A model, attacker or fixture configuration is malformed."""


InvalidConfig = InvalidModel


class UnknownComponent(CpsError, KeyError):
    """A component name or id does not exist in the model."""


class BudgetExceeded(CpsError):
    """Reachability exploration hit its state budget.

    ``partial`` holds the layers completed before the limit was hit and
    ``layer`` the index of the layer that could not be completed.
    """

    def __init__(self, message, partial=None, layer=None):
        super().__init__(message)
        self.partial = partial
        self.layer = layer


class NoLoopWithinBudget(CpsError):
    """An attack-free run did not revisit a state within its step budget."""


class ConfigError(CpsError, ValueError):
    """A configuration file failed to parse or validate."""


class DimensionMismatch(CpsError, ValueError):
    pass


class UnstableObserver(CpsError, ValueError):
    pass


class NonConvergent(CpsError, ArithmeticError):
    pass


class NonPositiveSigma(CpsError, ValueError):
    pass
