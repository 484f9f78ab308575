"""Exception and warning types shared across the package."""


class SynpilError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SynpilError):
    """Matrix shapes are incompatible with the requested operation."""


class NumericalError(SynpilError):
    """A numerical routine failed (non-finite input, SVD non-convergence)."""


class DegenerateInputError(SynpilError):
    """Input is degenerate for the requested solver (e.g. all-zero features)."""


class ResourceLimitError(SynpilError):
    """A configured resource ceiling would be exceeded."""


class DataFormatError(SynpilError):
    """A data file does not conform to its declared format."""


class ConfigError(SynpilError):
    """A run configuration failed validation; message names the key path."""


class MemberTrainingError(SynpilError):
    """A subsystem failed to train; carries the member index."""

    def __init__(self, member_index: int, message: str):
        super().__init__(f"subsystem {member_index}: {message}")
        self.member_index = member_index


class SynpilWarning(UserWarning):
    """Base class for warnings emitted by this package."""


class IllConditionedWarning(SynpilWarning):
    """A linear system was near-singular; a pseudoinverse fallback was used."""


class UnderdeterminedWarning(SynpilWarning):
    """A fit has more unknowns than samples; regularization carries it."""


class DataWarning(SynpilWarning):
    """A dataset quirk was handled in a documented but lossy way."""
