"""Posterior nipple line geometry in pixel coordinates.

Convention: x grows rightward (columns), y grows downward (rows). A point is
inside an image of width W and height H iff 0 <= x <= W-1 and 0 <= y <= H-1,
bounds inclusive. All operations are closed-form; no iteration, no tolerance
loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import DegenerateLine

# Below this squared-distance between defining points a line is degenerate.
DEGENERATE_EPS = 1e-9


class Laterality(str, Enum):
    LEFT = "L"
    RIGHT = "R"


class QualityLabel(str, Enum):
    GOOD = "good"
    POOR = "poor"


@dataclass(frozen=True)
class Point2:
    """A 2-D point in pixel coordinates (x = column, y = row)."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class ImageShape:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"image shape must be at least 2x2, got {self.width}x{self.height}")


@dataclass(frozen=True)
class PixelSpacing:
    """Physical size of one pixel in millimetres, per axis."""

    sx: float
    sy: float

    def __post_init__(self):
        if not (self.sx > 0 and self.sy > 0):
            raise ValueError(f"pixel spacing must be positive, got ({self.sx}, {self.sy})")


@dataclass(frozen=True)
class LandmarkSet:
    """The three landmarks of one MLO view.

    pec1 is the lower pectoral point (larger y), pec2 the upper one. Use
    :meth:`canonical` when the ordering of the two pectoral points is unknown.
    """

    nipple: Point2
    pec1: Point2
    pec2: Point2

    def __post_init__(self):
        if self.pec1.y < self.pec2.y:
            raise ValueError("pec1 must be the lower pectoral point (pec1.y >= pec2.y)")

    @classmethod
    def canonical(cls, nipple: Point2, a: Point2, b: Point2) -> "LandmarkSet":
        """Build a LandmarkSet ordering the two pectoral points by y."""
        if a.y >= b.y:
            return cls(nipple=nipple, pec1=a, pec2=b)
        return cls(nipple=nipple, pec1=b, pec2=a)


@dataclass(frozen=True)
class QualityVerdict:
    """Outcome of the positioning check for one view.

    label is GOOD exactly when the perpendicular foot lies inside the image.
    angle_deg is the pectoral line angle from vertical in the laterality's
    canonical frame, in [0, 180).
    """

    foot: Point2
    in_bounds: bool
    label: QualityLabel
    angle_deg: float

    def __post_init__(self):
        if (self.label is QualityLabel.GOOD) != self.in_bounds:
            raise ValueError("label must be GOOD iff the foot is in bounds")


def _line_direction(p1: Point2, p2: Point2) -> tuple[float, float, float]:
    """Return (dx, dy, squared length), raising DegenerateLine if too short."""
    dx = p2.x - p1.x
    dy = p2.y - p1.y
    d2 = dx * dx + dy * dy
    if d2 < DEGENERATE_EPS * DEGENERATE_EPS:
        raise DegenerateLine(f"line endpoints coincide: ({p1.x}, {p1.y}) and ({p2.x}, {p2.y})")
    return dx, dy, d2


def perpendicular_foot(p1: Point2, p2: Point2, nipple: Point2) -> Point2:
    """Orthogonal projection of the nipple onto the infinite line through p1, p2.

    The segment endpoints only fix the line; the foot may land outside the
    segment. Raises DegenerateLine when p1 and p2 coincide.
    """
    dx, dy, d2 = _line_direction(p1, p2)
    t = ((nipple.x - p1.x) * dx + (nipple.y - p1.y) * dy) / d2
    return Point2(p1.x + t * dx, p1.y + t * dy)


def in_bounds(shape: ImageShape, p: Point2) -> bool:
    """True iff p lies inside the image, bounds [0, dim-1] inclusive."""
    return 0.0 <= p.x <= shape.width - 1 and 0.0 <= p.y <= shape.height - 1


def angle_from_vertical(p1: Point2, p2: Point2, laterality: Laterality) -> float:
    """Pectoral line angle from the vertical axis, degrees in [0, 180).

    The line is first oriented downward (dy >= 0) so the answer does not
    depend on endpoint order. For right-laterality views dx is mirrored, so
    mirrored images of the same anatomy report the same angle. 0 is vertical,
    90 horizontal.
    """
    dx, dy, _ = _line_direction(p1, p2)
    if dy < 0 or (dy == 0 and dx < 0):
        dx, dy = -dx, -dy
    if laterality is Laterality.RIGHT:
        dx = -dx
    return math.degrees(math.atan2(dx, dy)) % 180.0


def angular_error(
    pred: tuple[Point2, Point2],
    truth: tuple[Point2, Point2],
    laterality: Laterality,
) -> float:
    """Absolute angle difference between two lines, folded into [0, 90]."""
    e = abs(
        angle_from_vertical(pred[0], pred[1], laterality)
        - angle_from_vertical(truth[0], truth[1], laterality)
    )
    return min(e, 180.0 - e)


def mm_distance(a: Point2, b: Point2, spacing: PixelSpacing) -> float:
    """Euclidean distance in millimetres under anisotropic pixel spacing."""
    return math.hypot((a.x - b.x) * spacing.sx, (a.y - b.y) * spacing.sy)


def classify_positioning(
    landmarks: LandmarkSet,
    shape: ImageShape,
    laterality: Laterality = Laterality.LEFT,
) -> QualityVerdict:
    """Full positioning check: project the nipple onto the pectoral line and
    test whether the foot lies inside the image.

    Raises DegenerateLine when the two pectoral points coincide.
    """
    foot = perpendicular_foot(landmarks.pec1, landmarks.pec2, landmarks.nipple)
    ok = in_bounds(shape, foot)
    angle = angle_from_vertical(landmarks.pec1, landmarks.pec2, laterality)
    return QualityVerdict(
        foot=foot,
        in_bounds=ok,
        label=QualityLabel.GOOD if ok else QualityLabel.POOR,
        angle_deg=angle,
    )
