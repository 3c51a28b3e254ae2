"""Exception hierarchy shared by the CLI and the API.

ConfigError maps to exit code 2, DataError to exit code 3.
"""


class BenchError(Exception):
    """Base class for every error raised by the benchmark."""


class ConfigError(BenchError, ValueError):
    pass


class DataError(BenchError):
    pass


# --- configuration ---
class InvalidConfig(ConfigError):
    pass


class UnknownDetector(ConfigError):
    pass


class UnknownDescriptor(ConfigError):
    pass


class IncompatibleDistance(ConfigError):
    pass


# --- image decoding ---
class UnknownMagic(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class DimensionOverflow(DataError):
    pass


class UnsupportedMaxval(DataError):
    pass


# --- homography files ---
class WrongTokenCount(DataError):
    pass


class NonNumericToken(DataError):
    pass


class SingularMatrix(DataError):
    pass


# --- dataset layout ---
class MissingImage(DataError):
    pass


class MissingHomography(DataError):
    pass


class UnclassifiablePrefix(DataError):
    pass


class DecodeFailure(DataError):
    pass


class IlluminationNotIdentity(DataError):
    pass


class EmptyDataset(DataError):
    pass


# --- FEATB files ---
class HeaderMismatch(DataError):
    pass


class RowArityError(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MissingFeatures(DataError):
    pass


# --- computational preconditions ---
class ImageTooSmall(BenchError, ValueError):
    pass


class RectOutOfBounds(BenchError, ValueError):
    pass


class OutOfBounds(BenchError, ValueError):
    pass


class PointAtInfinity(BenchError, ValueError):
    pass


class EmptyCandidateSet(BenchError, ValueError):
    pass


class EmptyKeypointSet(BenchError, ValueError):
    pass


class NoPositives(BenchError, ValueError):
    pass


class ClockResolutionError(BenchError, RuntimeError):
    pass


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return 2
    if isinstance(error, DataError):
        return 3
    return 1
