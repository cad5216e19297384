"""Domain errors raised by the pipeline stages.

Every error maps to CLI exit code 1; usage errors exit 2.
"""


class HoloforgeError(Exception):
    """Base class for all domain errors."""


class FewerThanThreePairs(HoloforgeError):
    """Affine fitting needs at least three point correspondences."""


class DegenerateConfiguration(HoloforgeError):
    """Source points are collinear/coincident, or a transform is singular."""


class TileLargerThanImage(HoloforgeError):
    """Requested tile size exceeds the image along some axis."""


class GrainLargerThanPatch(HoloforgeError):
    """A grain crop does not fit inside the background patch."""


class DegenerateGrainMask(HoloforgeError):
    """A grain whose alpha mask is zero everywhere would emit unbacked labels."""


class EmptyPool(HoloforgeError):
    """A background or grain pool required for compositing is empty."""


class TooFewItems(HoloforgeError):
    """Split construction needs at least three items."""


class InsufficientSyntheticPool(HoloforgeError):
    """The synthetic pool cannot cover the requested mixing ratio."""


class MissingSource(HoloforgeError):
    """A file referenced by a manifest does not exist."""


class CollisionAtDestination(HoloforgeError):
    """Emission would overwrite an existing file with different content."""


class ZeroGroundTruth(HoloforgeError):
    """Average precision is undefined without ground-truth boxes."""


class DimensionMismatch(HoloforgeError):
    """Embedding sets must share one feature dimension."""


class NonFiniteInput(HoloforgeError):
    """Embedding matrices must be finite."""


class IndefiniteProduct(HoloforgeError):
    """Covariance product eigenvalues are negative beyond the clamp tolerance."""


class EmptyInput(HoloforgeError):
    """An operation received an empty collection it cannot act on."""
