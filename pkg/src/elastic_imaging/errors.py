"""Exception hierarchy shared by every module of the package."""


class ElasticImagingError(ValueError):
    """Base class; ``code`` is the machine-readable name used by the CLI."""

    @property
    def code(self):
        return type(self).__name__


# grid / fields
class StabilityViolation(ElasticImagingError):
    pass


class InvalidLame(ElasticImagingError):
    pass


class DimMismatch(ElasticImagingError):
    pass


class BadMagic(ElasticImagingError):
    pass


class TruncatedFile(ElasticImagingError):
    pass


class NonFiniteData(ElasticImagingError):
    pass


# forward / time reversal
class SupportViolation(ElasticImagingError):
    pass


class SingularPoint(ElasticImagingError):
    pass


class NotDivisor(ElasticImagingError):
    pass


class EmptyMeasurements(ElasticImagingError):
    pass


# hankel / framelets / pooling
class BadPencil(ElasticImagingError):
    pass


class DuplicateFrequency(ElasticImagingError):
    pass


class IndexOutOfRange(ElasticImagingError):
    pass


class ChannelMismatch(ElasticImagingError):
    pass


class OddLength(ElasticImagingError):
    pass


class FrameConditionViolation(ElasticImagingError):
    pass


# sensing
class TooLarge(ElasticImagingError):
    pass


class FactorizationFailure(ElasticImagingError):
    pass


class NullSpaceTooSmall(ElasticImagingError):
    pass


# learning
class Diverged(ElasticImagingError):
    pass


class BadShape(ElasticImagingError):
    pass


class NearKink(ElasticImagingError):
    pass


# tv / phantoms / metrics
class NonFinite(ElasticImagingError):
    pass


class DegenerateImage(ElasticImagingError):
    pass


class ZeroSignal(ElasticImagingError):
    pass


class IdenticalImages(ElasticImagingError):
    pass


class InvalidGrid(ElasticImagingError):
    pass
