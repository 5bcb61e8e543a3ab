"""
Error hierarchy for the tube synopsis engine
"""


class TubeSynopsisError(Exception):
    """Base class for every error raised by the package"""


class ValidationError(TubeSynopsisError, ValueError):
    """Input failed an invariant check (bad file, illegal mapping, bad flag)"""


class OutOfRangeError(ValidationError, IndexError):
    """A frame index or interval lies outside a tube's span"""


class DimensionMismatchError(ValidationError):
    """Frame or image dimensions disagree with the model they are fed to"""


class StaleReferenceError(ValidationError):
    """A schedule file points at a tube database with different content"""


class InstanceTooLargeError(ValidationError):
    """Exhaustive search refused because the instance is too large"""


class FrameFormatError(ValidationError):
    """An image file is not a readable PGM/PPM frame"""


class SourceFrameMissingError(TubeSynopsisError, FileNotFoundError):
    """A source frame needed for stitching does not exist"""

    def __init__(self, frame: int, directory: str):
        super().__init__(f"Source frame {frame} not found in {directory}")
        self.frame = frame
        self.directory = directory


class SchedulingError(TubeSynopsisError):
    """No placement satisfies the collision budget within the search bounds"""
