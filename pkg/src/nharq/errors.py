"""Exception hierarchy shared by all modules."""


class NharqError(Exception):
    """Base class for every error raised by this package."""


class EmptySegments(NharqError, ValueError):
    pass


class InvalidCode(NharqError, ValueError):
    pass


class InvalidConfig(NharqError, ValueError):
    pass


class InvalidInterval(NharqError, ValueError):
    pass


class NoConvergence(NharqError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InfeasibleBlockDuration(NharqError, ValueError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NegativeProbability(NharqError, ValueError):
    pass


class SingularChain(NharqError, RuntimeError):
    pass


class SupportExplosion(NharqError, RuntimeError):
    pass


class EvaluatorFailure(NharqError, RuntimeError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ConfigMismatch(NharqError, ValueError):
    pass


class ShapeMismatch(NharqError, ValueError):
    pass


class ParseError(NharqError, ValueError):
    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
