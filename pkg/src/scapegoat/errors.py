"""Exception types shared across the package."""


class ScapegoatError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(ScapegoatError):
    """Operands have incompatible dimensions for an operation."""


class ContractError(ScapegoatError):
    """An argument violates an operation's precondition."""


class NonFiniteError(ScapegoatError):
    """A NaN or infinity appeared where finite values are required."""


class DegenerateVectorError(ScapegoatError):
    """A vector that must have positive norm collapsed to (near) zero."""


class DegenerateTestError(ScapegoatError):
    """A statistical test received data it cannot rank (e.g. all-zero differences)."""


class OptimizationError(ScapegoatError):
    """Objective evaluation failed during an optimization run."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class FormatError(ScapegoatError):
    """Malformed serialized file.  ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class WorldFitError(ScapegoatError):
    """A fitted toy world failed its fidelity requirement."""


class EmptyReportError(ScapegoatError):
    """Every sweep sample was excluded; there is nothing to aggregate."""


class UsageError(ScapegoatError):
    """Bad command-line usage that argparse cannot catch (CLI exit code 2)."""
