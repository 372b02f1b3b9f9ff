"""Exception hierarchy.

Configuration problems (unknown catalog names, parameters out of range,
malformed config files) derive from :class:`ConfigError`; everything else
is a :class:`DomainError` raised when a numerical or geometric assumption
fails.  The CLI maps the two families to distinct exit statuses.
"""


class WeylbandError(Exception):
    pass


class ConfigError(WeylbandError, ValueError):
    pass


class DomainError(WeylbandError):
    pass


class UnknownFamily(ConfigError):
    pass


class ParamOutOfRange(ConfigError):
    pass


class UnknownObservable(ConfigError):
    pass


class QuadratureFailure(DomainError):
    pass


class DegenerateTorus(DomainError):
    pass


class StepFailure(DomainError):
    pass


class UndecidedRationality(DomainError):
    pass


class TangentCrossing(DomainError):
    """A level F_j meets the torus-average function with vanishing slope."""

    def __init__(self, message, a=None, level=None):
        super().__init__(message)
        self.a = a
        self.level = level


class LevelHitsSingularLeaf(DomainError):
    """A level F_j lies in the limit-average set of a non-crossing leaf."""

    def __init__(self, message, leaf=None, level=None):
        super().__init__(message)
        self.leaf = leaf
        self.level = level


class RootBracketFailure(DomainError):
    pass


class NonSeparableObservable(DomainError):
    pass


class ConvergenceFailure(DomainError):
    pass


class IOFailure(DomainError):
    pass
