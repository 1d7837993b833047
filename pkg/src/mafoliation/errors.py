"""Exception hierarchy shared by all modules."""


class MafoliationError(Exception):
    """Base class for every error raised by this package."""

    stage = None


class ExpressionError(MafoliationError):
    pass


class ParseError(ExpressionError):
    """Syntax error; ``offset`` is the 1-based character position."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    pass


class ArityError(ParseError):
    pass


class DomainError(MafoliationError):
    """A partial function was evaluated outside its domain."""


class OrderError(MafoliationError):
    """A jet of insufficient (or excessive) order was supplied."""


class SingularSystemError(MafoliationError):
    pass


class ConvergenceError(MafoliationError):
    pass


class TrustRegionError(MafoliationError):
    """Continuation left the region where the Taylor data can be trusted."""

    def __init__(self, message, reachable_fraction=0.0):
        super().__init__(message)
        self.reachable_fraction = reachable_fraction


class FrameError(MafoliationError):
    pass


class TransversalityError(MafoliationError):
    pass


class TangencyError(MafoliationError):
    pass


class CollarError(MafoliationError):
    """A query point lies outside the collar covered by a foliation model."""


class ConfigError(MafoliationError):
    pass


class GridError(MafoliationError):
    """A sample grid is too small for the requested stencil or classification."""
