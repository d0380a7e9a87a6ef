"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated a documented precondition (shape, range, mode)."""


class IngestError(ValueError):
    """External data (frames, labels, tracks, checkpoints, configs) is malformed."""


class IoError(RuntimeError):
    """A filesystem read or write failed."""


class NumericError(RuntimeError):
    """Training produced a non-finite loss and was aborted."""
