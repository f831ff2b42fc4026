"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numeric failures with 3, optimizer divergence with 4.
"""


class SpdcError(Exception):
    """Base class for all package errors."""


class ConfigError(SpdcError, ValueError):
    """Invalid configuration value (bad grid size, wavelengths, schema, ...)."""


class GridMismatchError(SpdcError, ValueError):
    """Two objects that must share a grid (or shape) do not."""


class DegenerateInputError(SpdcError, ValueError):
    """An input that must carry structure is identically zero."""


class NormalizationError(SpdcError, ValueError):
    """A quantity that must be normalized is not."""


class EstimatorError(SpdcError, ValueError):
    """Moment estimation asked for with an unusable ensemble."""


class UnsupportedDimensionError(SpdcError, ValueError):
    """Tomography dimension outside the supported set."""


class MissingProjectionError(SpdcError, ValueError):
    """Tomography reconstruction called with an incomplete projection set."""

    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__(
            f"projection data incomplete; {len(self.missing)} entries absent: "
            + ", ".join(map(str, self.missing[:8]))
            + ("..." if len(self.missing) > 8 else "")
        )


class EvaluationError(SpdcError, ArithmeticError):
    """A loss or gradient evaluation returned a non-finite value."""


class NumericBlowupError(SpdcError, FloatingPointError):
    """Non-finite values appeared during propagation."""

    def __init__(self, step_index, message=None):
        self.step_index = step_index
        super().__init__(
            message or f"non-finite field values appeared at propagation step {step_index}"
        )


class DivergenceError(SpdcError, RuntimeError):
    """Optimization diverged; carries the partial training history."""

    def __init__(self, message, history=None):
        self.history = history
        super().__init__(message)
