"""Exception types shared across the toolkit.

Every error raised on a violated operation contract derives from
``ToolkitError`` so callers (notably the CLI) can distinguish input
validation problems from genuine runtime failures.
"""


class ToolkitError(Exception):
    """Base class for all toolkit-specific errors."""


# --- data loading / preprocessing -------------------------------------------

class MissingColumn(ToolkitError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"required column {name!r} not found in CSV header")


class NonNumericCell(ToolkitError):
    def __init__(self, row: int, col: str):
        self.row = row
        self.col = col
        super().__init__(f"non-numeric cell at data row {row}, column {col!r}")


class EmptyFile(ToolkitError):
    pass


class AllSamplesRemoved(ToolkitError):
    pass


class AllMissingFeature(ToolkitError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"feature {name!r} has no observed values to impute from")


class InsufficientClassSamples(ToolkitError):
    def __init__(self, cls: int, needed: int, available: int):
        self.cls = cls
        self.needed = needed
        self.available = available
        super().__init__(
            f"class {cls}: need {needed} samples but only {available} available"
        )


# --- numerics (clustering, autoencoder) --------------------------------------

class DegenerateInput(ToolkitError):
    pass


class DimensionMismatch(ToolkitError):
    pass


class SingularCovariance(ToolkitError):
    pass


class InvalidDimension(ToolkitError):
    pass


class StaleCache(ToolkitError):
    pass


class NonFiniteLoss(ToolkitError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"loss or parameters became non-finite at epoch {epoch}")


# --- ensembles ----------------------------------------------------------------

class LengthMismatch(ToolkitError):
    pass


class UnsupportedK(ToolkitError):
    pass


class EmptyRuns(ToolkitError):
    pass


# --- metrics ------------------------------------------------------------------

class NonSquare(ToolkitError):
    pass


class TooFewSamples(ToolkitError):
    pass


class IncompleteGrid(ToolkitError):
    def __init__(self, method: str, cell: str):
        self.method = method
        self.cell = cell
        super().__init__(f"method {method!r} has no score for cell {cell}")


# --- configuration ------------------------------------------------------------

class ConfigError(ToolkitError):
    pass
