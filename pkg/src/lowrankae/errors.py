"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DataFormatError(ValueError):
    """A data file does not match the expected wire format."""


class NumericalError(RuntimeError):
    """An iterative numerical routine failed (non-convergence, bad pivot, ...)."""


class TrainingError(NumericalError):
    """Training produced a non-finite gradient or loss."""
