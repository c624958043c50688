"""Exception types shared across the package."""


class ConquantError(Exception):
    """Base class for all package errors."""


class SingularDesign(ConquantError):
    """Design matrix is rank-deficient after intercept augmentation."""

    def __init__(self, collinear_columns):
        self.collinear_columns = list(collinear_columns)
        super().__init__(
            f"design matrix is rank-deficient; collinear columns: {self.collinear_columns}"
        )


class EmptyData(ConquantError):
    pass


class LevelNotFitted(ConquantError):
    pass


class DimensionMismatch(ConquantError):
    pass


class InsufficientCalibration(ConquantError):
    """The requested score quantile rank exceeds the calibration size."""

    def __init__(self, rank, m, level):
        self.rank = rank
        self.m = m
        self.level = level
        super().__init__(
            f"rank ceil({level} * {m + 1}) = {rank} exceeds calibration size {m}; "
            f"the finite-sample guarantee is unattainable at this size"
        )


class TooFewRows(ConquantError):
    pass


class TooShort(ConquantError):
    pass


class LengthMismatch(ConquantError):
    pass


class EmptyInput(ConquantError):
    pass


class InvalidCounts(ConquantError):
    pass


class UnsortedGrid(ConquantError):
    pass


class SchemaMismatch(ConquantError):
    pass


class NonMonotoneDates(ConquantError):
    pass


class DegenerateMatrix(ConquantError):
    pass


class ConfigError(ConquantError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class MissingArtifacts(ConquantError):
    pass
