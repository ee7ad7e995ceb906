"""Exception types shared across the package."""


class NnmfError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(NnmfError):
    """A dataset file line could not be parsed."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class DuplicateObservationError(NnmfError):
    """The same (row, col) pair appears more than once in a dataset."""


class EmptyDatasetError(NnmfError):
    """A dataset or split partition ended up with no observations."""


class DimensionError(NnmfError):
    """Array shapes are inconsistent with the declared dimensions."""


class NumericalError(NnmfError):
    """A non-finite value appeared where a finite one is required."""


class TrainingDivergedError(NnmfError):
    """The training objective became non-finite.

    Carries the last epoch with a finite objective (-1 if it diverged on
    the very first evaluation) and the trace collected so far.
    """

    def __init__(self, last_finite_epoch, trace=None):
        super().__init__(f"training diverged after epoch {last_finite_epoch}")
        self.last_finite_epoch = last_finite_epoch
        self.trace = trace


class SweepError(NnmfError):
    """Every run of a hyperparameter sweep failed."""

    def __init__(self, failures):
        lines = ", ".join(f"lambda={lam}: {err}" for lam, err in failures)
        super().__init__(f"all sweep runs failed ({lines})")
        self.failures = failures


class ConfigError(NnmfError):
    """A run configuration key is missing or invalid."""


class UnsupportedError(NnmfError):
    """The requested operation is outside the supported parameter range."""


class CheckpointError(NnmfError):
    """Base class for checkpoint container problems."""


class CheckpointFormatError(CheckpointError):
    """The file does not start with the expected magic bytes."""


class CheckpointVersionError(CheckpointError):
    """The file declares an unsupported container version."""


class CheckpointTruncatedError(CheckpointError):
    """The file ended before all declared fields were read."""


class CheckpointShapeError(CheckpointError):
    """Stored dimensions do not match what the caller expects."""
