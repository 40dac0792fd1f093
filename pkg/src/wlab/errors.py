"""Exception hierarchy shared by every wlab module."""


class WlabError(Exception):
    """Base class for all library errors."""


class InvalidSpec(WlabError):
    pass


class OutOfRange(WlabError):
    pass


class StructureViolation(WlabError):
    pass


class DegenerateImmersion(WlabError):
    pass


class UmbilicDegeneracy(WlabError):
    pass


class NotWeingarten(WlabError):
    """Neither normal orientation makes the mean curvature sum positive."""


class NotConformalizable(WlabError):
    pass


class GridFormatError(WlabError):
    """Malformed or schema-incompatible grid file."""


class NoRoot(WlabError):
    pass


class ConvergenceFailure(WlabError):
    pass


class BandExit(WlabError):
    pass


class StepFailure(WlabError):
    pass


class NotFound(WlabError):
    def __init__(self, message, attained=None):
        super().__init__(message)
        self.attained = attained


class OpenProfile(WlabError):
    pass


class DivisionDegeneracy(WlabError):
    pass


class NotNonnegativeAtMax(WlabError):
    pass


class NoTouchingPair(WlabError):
    pass


class RangeError(WlabError):
    pass


class IllConditioned(WlabError):
    pass
