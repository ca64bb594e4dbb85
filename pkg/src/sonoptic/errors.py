"""Exception hierarchy.

Every error raised by the library derives from :class:`SonopticError`, so
callers (and the CLI) can catch a single type and report ``type(err).__name__``
as a machine-parsable error code.
"""


class SonopticError(Exception):
    """Base class for all library errors."""


# -- file formats / core model -------------------------------------------------

class MalformedFile(SonopticError):
    pass


class DimensionTooSmall(SonopticError):
    pass


class IllegalLabelValue(SonopticError):
    pass


class DimensionMismatch(SonopticError):
    pass


class InconsistentDimensions(DimensionMismatch):
    pass


class MissingFile(SonopticError, FileNotFoundError):
    pass


class UnknownLabel(SonopticError, ValueError):
    pass


class InvalidValue(SonopticError, ValueError):
    pass


# -- regions -------------------------------------------------------------------

class EmptyRegion(SonopticError):
    pass


class EmptyHighlight(EmptyRegion):
    pass


class EmptyShadow(EmptyRegion):
    pass


class RegionTooSmall(SonopticError):
    pass


# -- optic-to-SAS --------------------------------------------------------------

class ObjectAboveSensor(SonopticError):
    pass


# -- descriptors ---------------------------------------------------------------

class RankDeficientFit(SonopticError):
    pass


# -- classifier ----------------------------------------------------------------

class ZeroWeights(SonopticError):
    pass


class MissingClass(SonopticError):
    pass


class SingularCovariance(SonopticError):
    pass


# -- harness -------------------------------------------------------------------

class InvalidSpec(SonopticError, ValueError):
    pass


class DegenerateSplit(SonopticError):
    pass
