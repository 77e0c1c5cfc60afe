"""Exception types shared across the package."""


class MammoposError(Exception):
    """Base class for all package-specific errors."""


class DegenerateLine(MammoposError):
    """Two points meant to define a line are (numerically) coincident."""


class NoIntersection(MammoposError):
    """A line does not cross the region it was being clipped to."""


class InvalidAnnotation(MammoposError):
    """Raw annotation violates its structural invariants."""


class EmptyForeground(MammoposError):
    """No foreground component found when cropping."""


class LandmarkOutsideCrop(MammoposError):
    """A landmark fell outside the cropped region."""


class SchemaError(MammoposError):
    """Annotation file does not match the expected schema."""


class IoError(MammoposError):
    """File could not be read or written in the expected format."""


class ConfigMismatch(MammoposError):
    """Stored parameters were produced under a different model config."""


class ShapeMismatch(MammoposError):
    """Tensor shape does not match what the operation requires."""


class NonFinite(MammoposError):
    """A NaN or Inf appeared where only finite values are allowed."""


class EmptyClass(MammoposError):
    """A metric denominator class has no members."""


class EmptyInput(MammoposError):
    """Statistic requested over an empty sample."""
