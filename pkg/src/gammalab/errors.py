"""Exception hierarchy shared by all gammalab modules."""


class GammalabError(Exception):
    """Base class for every error raised by gammalab."""


class DomainError(GammalabError, ValueError):
    """A point was evaluated outside the closed box of a coefficient field."""


class ConfigurationError(GammalabError, ValueError):
    """Unknown family, preset or malformed experiment configuration."""


class ContractError(GammalabError, ValueError):
    """Arguments violate an operation's precondition (shapes, grids, certificates)."""


class ResolutionError(GammalabError, ValueError):
    """A mollifier or cutoff is too small to be resolved on the working grid."""

    def __init__(self, message, required_radius=None):
        super().__init__(message)
        self.required_radius = required_radius


class IterationError(GammalabError, RuntimeError):
    """An iterative method ran out of its iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DataError(GammalabError, ValueError):
    """Not enough usable data to compute a derived quantity (e.g. a rate fit)."""
