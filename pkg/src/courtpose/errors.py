"""Exception hierarchy.

``DomainError`` subclasses signal that the inputs were readable but describe
something the pipeline cannot work with (a degenerate calibration, a player
that never appears). ``InputError`` subclasses signal unreadable or malformed
inputs. The CLI maps the two families to different exit codes.
"""


class CourtPoseError(Exception):
    """Base class for all package errors."""


class DomainError(CourtPoseError):
    pass


class InputError(CourtPoseError):
    pass


# geometry
class DegenerateConfiguration(DomainError):
    pass


class InsufficientPoints(DomainError):
    pass


class PointAtInfinity(DomainError):
    pass


class SingularMatrix(DomainError):
    pass


# model / ingest
class ParseError(InputError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class DuplicateFrame(ParseError):
    pass


class NonMonotonicFrameIds(ParseError):
    pass


# tracker
class EmptyTrack(DomainError):
    pass


# pose
class AllFramesOutliers(DomainError):
    pass


class UnfillableGap(DomainError):
    pass


class InvalidPose(DomainError):
    pass


# eval
class NoOverlap(DomainError):
    pass


# synth
class InvalidConfig(InputError):
    pass
