"""Exception hierarchy shared by all modules."""


class NehariLabError(Exception):
    """Base class for every error raised by the package."""


class InvalidGrid(NehariLabError):
    pass


class SpecError(NehariLabError):
    pass


class AssemblyError(NehariLabError):
    pass


class DomainError(NehariLabError):
    pass


class ModeError(NehariLabError):
    pass


class BracketError(NehariLabError):
    pass


class NoRoots(NehariLabError):
    """The fibering map of a field has no critical point on the requested branch."""


class EmptyBranch(NehariLabError):
    """No start field admits a projection onto the requested Nehari branch."""


class InsufficientPoints(NehariLabError):
    pass


class ConvergenceError(NehariLabError):
    """Iteration budget exhausted; ``best`` carries the best iterate found."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


class NotOnManifold(NehariLabError):
    pass
