"""
Error hierarchy shared by every app.

Invalid domain objects and configuration raise Django's ValidationError.
Malformed inputs raise DataError subclasses; learning failures raise
TrainingError subclasses. The management commands map the three families to
exit codes 2, 3 and 4.
"""

from __future__ import annotations

from typing import Optional


class DataError(ValueError):
    """Input data (files, images, rectangles, models) could not be used."""


class ImageFormatError(DataError):
    """Base class for PGM/PPM parse failures. Carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class MalformedHeaderError(ImageFormatError):
    pass


class TruncatedPayloadError(ImageFormatError):
    pass


class UnsupportedMaxvalError(ImageFormatError):
    pass


class RectBoundsError(DataError):
    """A rectangle does not fit inside the image it is evaluated against."""


class MissingScaleError(DataError):
    """No feature LUT is available for a window size."""


class ModelFormatError(DataError):
    """A cascade model file is corrupt or bound to another feature pool."""


class AnnotationFormatError(DataError):
    """An annotation line could not be parsed."""


class TrainingError(RuntimeError):
    """A learner could not produce a usable classifier."""


class SingleClassError(TrainingError):
    """Training data (or a resample of it) holds only one class."""


class LearnerError(TrainingError):
    """A component learner failed inside a boosting round."""

    def __init__(self, message: str, round_index: Optional[int] = None):
        prefix = f"round {round_index}: " if round_index is not None else ""
        super().__init__(f"{prefix}{message}")
        self.round_index = round_index


class ScheduleExhaustedError(TrainingError):
    """The sigma schedule reached sigma_min before any round was accepted."""


class StageGoalError(TrainingError):
    """A cascade stage cannot meet its detection-rate goal."""


class BoostingBoundError(TrainingError):
    """Training error exceeded the product of the round normalizers."""
