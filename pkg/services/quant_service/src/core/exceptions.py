from typing import Any, Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class QuantError(Exception):
    """
    Base class for all errors raised by the quantification toolkit.
    The CLI maps the family of an error to its process exit code.
    """

    exit_code: int = EXIT_DATA

    def __init__(self, message: str, original_exception: Optional[Exception] = None):
        super().__init__(message)
        self.message = message
        self.original_exception = original_exception


class UsageError(QuantError):
    """Raised when command-line arguments are missing or malformed."""

    exit_code = EXIT_USAGE


class NumericalError(QuantError):
    """Base class for numerical failures (divergence, non-convergence)."""

    exit_code = EXIT_NUMERICAL


# ------------------------
# Signal errors
# ------------------------
class SignalError(QuantError):
    """Base class for spectral transform failures."""

    pass


class InvalidSignalError(SignalError):
    """Raised when a time-domain signal is empty or too short to transform."""

    pass


class WindowOutOfRangeError(SignalError):
    """Raised when a ppm window lies outside the acquired bandwidth."""

    pass


class AxisMismatchError(SignalError):
    """Raised when two spectra do not share one ppm axis."""

    pass


# ------------------------
# Basis errors
# ------------------------
class BasisError(QuantError):
    """Base class for basis construction failures."""

    pass


class EmptyModelError(BasisError):
    """Raised when a metabolite model has no edit-off signal to normalise."""

    pass


class InvalidLinewidthError(BasisError):
    """Raised when a linewidth is not strictly positive or none is given."""

    pass


class DuplicateMetaboliteError(BasisError):
    """Raised when a basis definition names the same metabolite twice."""

    pass


class InvalidDefinitionError(BasisError):
    """Raised when a basis definition file does not parse or validate."""

    pass


# ------------------------
# Dataset errors
# ------------------------
class DatasetError(QuantError):
    """Base class for dataset generation failures."""

    pass


class UnsupportedDimensionError(DatasetError):
    """Raised when a Sobol dimension outside [1, 16] is requested."""

    pass


class UnknownMetaboliteError(DatasetError):
    """Raised when a concentration names a metabolite absent from the basis."""

    pass


class DegenerateSampleError(DatasetError):
    """Raised when every concentration of a sample is zero."""

    pass


class NoBasisError(DatasetError):
    """Raised when no basis set is available for synthesis or fitting."""

    pass


# ------------------------
# Pre-processing errors
# ------------------------
class PreprocessError(QuantError):
    """Base class for pre-processing failures."""

    pass


class PeakNotFoundError(PreprocessError):
    """Raised when no reference peak stands out of the B0 search window."""

    pass


class InvalidCutoffError(PreprocessError):
    """Raised when a filter cutoff is not inside (0, 1) of Nyquist."""

    pass


class MissingAcquisitionError(PreprocessError):
    """Raised when a sample lacks an acquisition the input config needs."""

    pass


# ------------------------
# Network errors
# ------------------------
class ShapeError(QuantError):
    """Raised when tensor shapes are inconsistent with a layer or loss."""

    pass


class DegenerateBatchError(QuantError):
    """Raised when batch normalisation sees a batch of one in training mode."""

    pass


class ArchitectureError(QuantError):
    """Raised when a network configuration reduces the frequency axis to nothing."""

    pass


class DivergenceError(NumericalError):
    """Raised when the training loss becomes NaN; carries the history so far."""

    def __init__(
        self,
        message: str,
        history: Any = None,
        original_exception: Optional[Exception] = None,
    ):
        super().__init__(message, original_exception)
        self.history = history


# ------------------------
# Fitting errors
# ------------------------
class ConvergenceError(NumericalError):
    """Raised when the active-set solver exhausts its iterations; carries the best iterate."""

    def __init__(
        self,
        message: str,
        best: Any = None,
        original_exception: Optional[Exception] = None,
    ):
        super().__init__(message, original_exception)
        self.best = best


# ------------------------
# Evaluation errors
# ------------------------
class EvaluationError(QuantError):
    """Base class for metric failures."""

    pass


class InvalidReductionError(EvaluationError):
    """Raised when a reduced metabolite set is empty or names unknown labels."""

    pass


class DegenerateRegressionError(EvaluationError):
    """Raised when a regression has fewer than three points or constant x."""

    pass


# ------------------------
# Storage errors
# ------------------------
class StorageError(QuantError):
    """Base class for archive read/write failures."""

    pass


class FormatError(StorageError):
    """Raised when an archive is malformed; `offset` locates the problem."""

    def __init__(
        self,
        message: str,
        offset: Optional[int] = None,
        original_exception: Optional[Exception] = None,
    ):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message, original_exception)
        self.offset = offset


class VersionError(StorageError):
    """Raised when an archive was written by an unsupported format version."""

    pass
