"""Exception types raised across ridecast."""


class RidecastError(Exception):
    """Base class for all ridecast errors."""


# ingestion
class MalformedFile(RidecastError):
    pass


class EmptyTrack(RidecastError):
    pass


class InsufficientData(RidecastError):
    pass


class ZeroLengthTrack(RidecastError):
    pass


class EmptySeries(RidecastError):
    pass


# topology
class NonPositiveInput(RidecastError, ValueError):
    pass


class RouteTooShort(RidecastError):
    pass


# athlete state
class SeriesTooShort(RidecastError):
    pass


class NonPositiveFTP(RidecastError, ValueError):
    pass


class DuplicateDay(RidecastError):
    pass


class UnknownZone(RidecastError, KeyError):
    pass


# dataset / models
class MissingProfile(RidecastError, KeyError):
    pass


class MissingLoadHistory(RidecastError):
    pass


class SchemaMismatch(RidecastError):
    pass


class TooFewRows(RidecastError):
    pass


class SingularSystem(RidecastError):
    pass


class ZeroVariance(RidecastError):
    pass


class SizeExceedsData(RidecastError):
    pass


class InvalidFraction(RidecastError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    """Coordinate descent hit ``max_iter`` before meeting its tolerance."""
