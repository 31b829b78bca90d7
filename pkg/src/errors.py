"""Exception hierarchy shared by the synthesis, polarimetry, topology and pipeline modules."""

from __future__ import annotations


class SkyrmionError(Exception):
    """Base class for every failure raised by the library."""


class InvalidParameterError(SkyrmionError, ValueError):
    pass


class EmptyMaskError(SkyrmionError):
    pass


class CoverageError(SkyrmionError):
    def __init__(self, message: str, coverage: float):
        super().__init__(message)
        self.coverage = coverage


class IngestError(SkyrmionError):
    def __init__(self, message: str, path):
        super().__init__(f"{message}: {path}")
        self.path = path


class CalibrationError(SkyrmionError):
    pass


class StageError(SkyrmionError):
    """A pipeline stage failed; ``stage`` names it and ``cause`` is the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class OutputExistsError(SkyrmionError):
    def __init__(self, path):
        super().__init__(f"output directory is not empty (use --force to overwrite): {path}")
        self.path = path
