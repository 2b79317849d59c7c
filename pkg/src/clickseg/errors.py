"""Exception hierarchy shared across the package."""


class ClickSegError(Exception):
    """Base class for all clickseg errors."""


class EmptyMask(ClickSegError):
    """Operation needs at least one foreground pixel."""


class AllForeground(ClickSegError):
    """Operation needs at least one background pixel."""


class OutOfBounds(ClickSegError):
    """Click coordinates fall outside the image."""


class NoBoundary(ClickSegError):
    """Mask is empty or full, so no foreground/background boundary exists."""


class ShapeMismatch(ClickSegError):
    """Arrays that must share a shape do not."""


class DegenerateWeights(ClickSegError):
    """Weight map sums to zero."""


class InvalidSpec(ClickSegError):
    """Network spec or input geometry is invalid."""


class ChannelMismatch(ClickSegError):
    """Input channel count does not match the network spec."""


class InvalidParams(ClickSegError):
    """Parameters violate a documented precondition."""


class FileMissing(ClickSegError):
    """Expected input file does not exist."""


class GridMismatch(ClickSegError):
    """Image and label volumes have different voxel grids."""


class UnknownLabel(ClickSegError):
    """Requested ROI label does not occur in the label volume."""


class CacheMiss(ClickSegError):
    """No cached entry for the requested key."""


class NonFiniteLoss(ClickSegError):
    """Training loss became NaN or infinite."""


class EmptyTestSplit(ClickSegError):
    """Evaluation requires a nonempty test split."""


class BadImage(ClickSegError):
    """Uploaded payload could not be decoded as an image."""


class UnknownCheckpoint(ClickSegError):
    """Requested checkpoint id is not available."""


class UnknownSession(ClickSegError):
    """Requested session id does not exist (or expired)."""


class UnknownRevision(ClickSegError):
    """Requested revision does not exist for this session."""
