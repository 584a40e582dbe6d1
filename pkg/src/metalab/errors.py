"""Exception types raised across the package."""


class MetalabError(Exception):
    """Base class for all package errors."""


class OutOfDomain(MetalabError):
    pass


class UnknownComponent(MetalabError):
    pass


class NonAdjacent(MetalabError):
    pass


class OverlapError(MetalabError):
    pass


class DegenerateCell(MetalabError):
    pass


class QuadratureBudget(MetalabError):
    pass


class NoConvergence(MetalabError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class GridMismatch(MetalabError):
    pass


class GridAlignment(MetalabError):
    """A component boundary does not fall on a grid node."""


class ZeroMassCell(MetalabError):
    def __init__(self, cells):
        super().__init__(f"{len(cells)} cells carry no stationary mass")
        self.cells = cells


class Disconnected(MetalabError):
    pass


class Reducible(MetalabError):
    pass


class SingularSystem(MetalabError):
    pass


class StepCapExceeded(MetalabError):
    pass


class CoverageFailure(MetalabError):
    pass


class Budget(MetalabError):
    pass


class ConfigError(MetalabError):
    pass
