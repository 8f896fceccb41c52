"""Exception types raised across the package."""


class CellShapeError(Exception):
    """Base class for all package errors."""


class GeometryError(CellShapeError):
    """Requested domain geometry is not realizable (overlap, boundary contact)."""


class ConfigurationError(CellShapeError):
    """Invalid or incomplete configuration (missing materials, bad parameters)."""


class ElementInversion(CellShapeError):
    """A mesh deformation produced a triangle with non-positive signed area."""

    def __init__(self, element, area=None):
        self.element = int(element)
        self.area = area
        msg = f"element {self.element} inverted"
        if area is not None:
            msg += f" (signed area {area:.3e})"
        super().__init__(msg)


class NonConvergence(CellShapeError):
    """An iterative solver hit its iteration cap before meeting its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class Breakdown(CellShapeError):
    """BiCGStab breakdown (vanishing rho or omega)."""


class SingularCoarseMatrix(CellShapeError):
    """The coarsest multigrid level could not be LU-factorized."""
