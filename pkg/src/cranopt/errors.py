"""Exception types shared across the package."""


class CranoptError(Exception):
    """Base class for package-specific failures."""


class ConfigurationError(CranoptError):
    """Invalid configuration value, flag combination, or file content."""


class DegenerateInputError(CranoptError):
    """Input is structurally valid but degenerate (e.g. all-zero beamformer)."""


class ContractViolationError(CranoptError):
    """An API was called outside its contract (stale cache, wrong mode, ...)."""


class OracleSizeError(CranoptError):
    """Exhaustive search refused: problem too large to enumerate honestly."""


class DatasetFormatError(CranoptError):
    """Dataset file is malformed or has an unsupported version."""


class ChecksumError(CranoptError):
    """Stored checksum does not match the recomputed one."""


class TrainingDivergedError(CranoptError):
    """Non-finite loss during training; carries the place it happened."""

    def __init__(self, iteration: int, sample_index: int | None, message: str = ""):
        self.iteration = iteration
        self.sample_index = sample_index
        detail = f"non-finite loss at iteration {iteration}"
        if sample_index is not None:
            detail += f" (sample index {sample_index} in the batch)"
        if message:
            detail += f": {message}"
        super().__init__(detail)
