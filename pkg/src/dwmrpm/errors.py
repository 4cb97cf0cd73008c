"""Exception types shared across the package."""


class DwmrpmError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DwmrpmError):
    """An array has the wrong shape or an incompatible dimension."""


class InvalidParameterError(DwmrpmError):
    """A layer or config parameter is outside its legal range."""


class ContractError(DwmrpmError):
    """A caller violated a documented precondition."""


class DegenerateRangeError(ContractError):
    """Normalization range collapsed (max == min)."""


class TrainingDivergedError(DwmrpmError):
    """Loss or a gradient became non-finite during training."""


class IngestionFailedError(DwmrpmError):
    """Too many malformed rows, or the file does not match the declared format."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
