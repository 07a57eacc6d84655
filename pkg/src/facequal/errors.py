"""Exception hierarchy shared by all facequal modules."""


class FacequalError(Exception):
    """Base class for all errors raised by this package."""


class ChannelMismatch(FacequalError):
    """Operation received an image with the wrong number of channels."""


class KernelLargerThanImage(FacequalError):
    """Convolution kernel does not fit inside the image."""


class ImageTooSmall(FacequalError):
    """Image is below the minimum size an operation requires."""


class EmptyRegion(FacequalError):
    """A region mask selects zero pixels."""


class EmptyHistogram(FacequalError):
    """Histogram holds no counts."""


class TooFewSamples(FacequalError):
    """Fewer samples than clusters requested."""


class NoFaceDetected(FacequalError):
    """No candidate face passed the detector's gates."""


class LandmarkFailure(FacequalError):
    """Landmark estimation could not find facial structure."""


class DegenerateGeometry(FacequalError):
    """Landmark geometry violates a precondition (e.g. chin above brows)."""


class SingleClassOnly(FacequalError):
    """Labeled score set contains only one class; ROC undefined."""


class NoFeasibleThreshold(FacequalError):
    """No ROC point satisfies the FPR constraint."""


class EmptyCorpus(FacequalError):
    """Corpus contains no usable images."""


class SchemaMismatch(FacequalError):
    """A config, label, or threshold file violates its schema."""


class RegionUnavailable(FacequalError):
    """A region-targeted degradation could not derive its target region."""


class IOFailure(FacequalError):
    """Filesystem read/write failed while building a corpus."""
