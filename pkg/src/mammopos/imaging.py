"""Annotation extraction and the image preprocessing chain.

The chain runs on the native image and ends at a fixed square model input:

    extract_landmarks -> standardize_pectoral_line -> crop_breast_region
        -> pad_square -> resize_with_landmarks

Every geometric side effect is recorded in a TransformLog so landmark
coordinates can be mapped processed <-> native exactly, and millimetre
distances are preserved through the effective pixel spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from .errors import (
    EmptyForeground,
    InvalidAnnotation,
    LandmarkOutsideCrop,
    NoIntersection,
)
from .geometry import ImageShape, LandmarkSet, PixelSpacing, Point2, _line_direction


@dataclass(frozen=True)
class RawAnnotation:
    """What the reader drew: a nipple bounding box and two pectoral points.

    nipple_bbox is (x0, y0, x1, y1) with x0 < x1 and y0 < y1. The two
    pectoral points carry no ordering guarantee.
    """

    nipple_bbox: tuple[float, float, float, float]
    pec_a: Point2
    pec_b: Point2


@dataclass(frozen=True)
class PreprocessConfig:
    out_size: int = 512
    margin: int = 10
    opening_radius: int = 5

    def __post_init__(self):
        if self.out_size < 8:
            raise ValueError(f"out_size too small: {self.out_size}")
        if self.margin < 0:
            raise ValueError(f"margin must be non-negative: {self.margin}")
        if self.opening_radius < 0:
            raise ValueError(f"opening radius must be non-negative: {self.opening_radius}")


@dataclass(frozen=True)
class TransformLog:
    """Record of the coordinate changes applied by the preprocessing chain.

    Processed coords relate to native coords by
        processed = (native - crop_offset) * scale
    (padding extends only right/bottom, so it shifts nothing). The effective
    spacing compensates the resize so millimetre distances computed in
    processed space match native space.
    """

    crop_offset: Point2
    pad_right: int
    pad_bottom: int
    scale: float
    native_spacing: PixelSpacing

    @property
    def effective_spacing(self) -> PixelSpacing:
        return PixelSpacing(
            sx=self.native_spacing.sx / self.scale,
            sy=self.native_spacing.sy / self.scale,
        )

    def to_processed(self, p: Point2) -> Point2:
        return Point2((p.x - self.crop_offset.x) * self.scale, (p.y - self.crop_offset.y) * self.scale)

    def to_native(self, p: Point2) -> Point2:
        return Point2(p.x / self.scale + self.crop_offset.x, p.y / self.scale + self.crop_offset.y)

    def landmarks_to_processed(self, lm: LandmarkSet) -> LandmarkSet:
        return LandmarkSet(
            nipple=self.to_processed(lm.nipple),
            pec1=self.to_processed(lm.pec1),
            pec2=self.to_processed(lm.pec2),
        )

    def landmarks_to_native(self, lm: LandmarkSet) -> LandmarkSet:
        return LandmarkSet(
            nipple=self.to_native(lm.nipple),
            pec1=self.to_native(lm.pec1),
            pec2=self.to_native(lm.pec2),
        )

    def to_dict(self) -> dict:
        return {
            "crop_offset": [self.crop_offset.x, self.crop_offset.y],
            "pad": [self.pad_right, self.pad_bottom],
            "scale": self.scale,
            "native_spacing": [self.native_spacing.sx, self.native_spacing.sy],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformLog":
        return cls(
            crop_offset=Point2(*d["crop_offset"]),
            pad_right=int(d["pad"][0]),
            pad_bottom=int(d["pad"][1]),
            scale=float(d["scale"]),
            native_spacing=PixelSpacing(*d["native_spacing"]),
        )


def extract_landmarks(ann: RawAnnotation) -> LandmarkSet:
    """Reduce a raw annotation to point landmarks.

    The nipple is the bbox centre; the pectoral points are ordered so pec1 is
    the lower one. Raises InvalidAnnotation for a malformed bbox or
    coincident pectoral points.
    """
    x0, y0, x1, y1 = ann.nipple_bbox
    if not (x0 < x1 and y0 < y1):
        raise InvalidAnnotation(f"nipple bbox not ordered: {ann.nipple_bbox}")
    dx = ann.pec_b.x - ann.pec_a.x
    dy = ann.pec_b.y - ann.pec_a.y
    if dx * dx + dy * dy < 1e-18:
        raise InvalidAnnotation("pectoral points coincide")
    nipple = Point2((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    return LandmarkSet.canonical(nipple, ann.pec_a, ann.pec_b)


def standardize_pectoral_line(
    landmarks: LandmarkSet, shape: ImageShape, margin: int = 10
) -> LandmarkSet:
    """Replace the annotated pectoral segment by the intersection of its
    infinite line with the margin-inset rectangle.

    The inset rectangle is [margin, W-1-margin] x [margin, H-1-margin].
    Different annotated segments on the same line standardize to the same
    endpoints, and the operation is idempotent. Raises NoIntersection when
    the line misses the rectangle (cannot happen for lines through interior
    content, handled defensively), DegenerateLine for coincident points.
    """
    if not 0 <= margin < min(shape.width, shape.height) / 2:
        raise ValueError(f"margin {margin} invalid for shape {shape.width}x{shape.height}")
    p1, p2 = landmarks.pec1, landmarks.pec2
    dx, dy, _ = _line_direction(p1, p2)
    lo = (float(margin), float(margin))
    hi = (float(shape.width - 1 - margin), float(shape.height - 1 - margin))

    t0, t1 = -np.inf, np.inf
    for start, d, lo_a, hi_a in ((p1.x, dx, lo[0], hi[0]), (p1.y, dy, lo[1], hi[1])):
        if abs(d) < 1e-12:
            if not lo_a <= start <= hi_a:
                raise NoIntersection("pectoral line misses the inset rectangle")
            continue
        ta, tb = (lo_a - start) / d, (hi_a - start) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
    if not np.isfinite(t0) or not np.isfinite(t1) or t0 > t1:
        raise NoIntersection("pectoral line misses the inset rectangle")

    a = Point2(p1.x + t0 * dx, p1.y + t0 * dy)
    b = Point2(p1.x + t1 * dx, p1.y + t1 * dy)
    return LandmarkSet.canonical(landmarks.nipple, a, b)


def _disk(radius: int) -> np.ndarray:
    if radius == 0:
        return np.ones((1, 1), dtype=bool)
    r = np.arange(-radius, radius + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius * radius


def crop_breast_region(
    image: np.ndarray, opening_radius: int = 5
) -> tuple[np.ndarray, Point2]:
    """Crop to the bounding box of the largest bright connected component.

    Foreground is everything strictly above the image mean, cleaned by a
    morphological opening with a disk structuring element, then labelled with
    8-connectivity. Returns the crop and its top-left offset in the input.
    Raises EmptyForeground when nothing survives the opening.
    """
    mask = image > image.mean()
    if opening_radius > 0:
        mask = ndimage.binary_opening(mask, structure=_disk(opening_radius))
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        raise EmptyForeground("no foreground component after opening")
    areas = np.bincount(labels.ravel())[1:]
    component = labels == (int(np.argmax(areas)) + 1)
    rows = np.flatnonzero(component.any(axis=1))
    cols = np.flatnonzero(component.any(axis=0))
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    return image[y0 : y1 + 1, x0 : x1 + 1], Point2(float(x0), float(y0))


def pad_square(image: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """Zero-pad on the right and bottom only, up to a square.

    Padding this way keeps every pixel coordinate unchanged. Returns the
    padded image and (pad_right, pad_bottom).
    """
    h, w = image.shape
    side = max(h, w)
    pad_right, pad_bottom = side - w, side - h
    if pad_right == 0 and pad_bottom == 0:
        return image, (0, 0)
    out = np.zeros((side, side), dtype=image.dtype)
    out[:h, :w] = image
    return out, (pad_right, pad_bottom)


def resize_with_landmarks(
    image: np.ndarray,
    landmarks: LandmarkSet,
    spacing: PixelSpacing,
    out_size: int = 512,
) -> tuple[np.ndarray, LandmarkSet, PixelSpacing]:
    """Bilinear-resize a square image to out_size, scaling landmarks and
    spacing consistently.

    With scale s = out_size / N, coordinates map to p*s and spacing to
    spacing/s, so millimetre distances between landmarks are unchanged.
    """
    h, w = image.shape
    if h != w:
        raise ValueError(f"resize requires a square input, got {w}x{h}")
    s = out_size / w
    resized = cv2.resize(image, (out_size, out_size), interpolation=cv2.INTER_LINEAR)

    def scale_pt(p: Point2) -> Point2:
        return Point2(p.x * s, p.y * s)

    lm = LandmarkSet(scale_pt(landmarks.nipple), scale_pt(landmarks.pec1), scale_pt(landmarks.pec2))
    return resized, lm, PixelSpacing(spacing.sx / s, spacing.sy / s)


def _check_inside_crop(lm: LandmarkSet, crop_shape: tuple[int, int], offset: Point2) -> None:
    h, w = crop_shape
    for name, p in (("nipple", lm.nipple), ("pec1", lm.pec1), ("pec2", lm.pec2)):
        x, y = p.x - offset.x, p.y - offset.y
        if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
            raise LandmarkOutsideCrop(
                f"{name} at ({p.x:.2f}, {p.y:.2f}) outside crop "
                f"offset ({offset.x:.0f}, {offset.y:.0f}) size {w}x{h}"
            )


def preprocess_image_and_landmarks(
    image: np.ndarray,
    landmarks: LandmarkSet,
    spacing: PixelSpacing,
    cfg: PreprocessConfig = PreprocessConfig(),
) -> tuple[np.ndarray, LandmarkSet, TransformLog]:
    """Run standardize -> crop -> pad -> resize on one annotated image.

    Returns the model-ready square image, the landmarks in processed
    coordinates, and the TransformLog tying the two frames together. Raises
    LandmarkOutsideCrop if cropping would lose a landmark.
    """
    shape = ImageShape(width=image.shape[1], height=image.shape[0])
    std = standardize_pectoral_line(landmarks, shape, margin=cfg.margin)
    cropped, offset = crop_breast_region(image, opening_radius=cfg.opening_radius)
    _check_inside_crop(std, cropped.shape, offset)
    shifted = LandmarkSet(
        nipple=Point2(std.nipple.x - offset.x, std.nipple.y - offset.y),
        pec1=Point2(std.pec1.x - offset.x, std.pec1.y - offset.y),
        pec2=Point2(std.pec2.x - offset.x, std.pec2.y - offset.y),
    )
    padded, (pad_r, pad_b) = pad_square(cropped)
    resized, lm, _ = resize_with_landmarks(padded, shifted, spacing, out_size=cfg.out_size)
    log = TransformLog(
        crop_offset=offset,
        pad_right=pad_r,
        pad_bottom=pad_b,
        scale=cfg.out_size / padded.shape[0],
        native_spacing=spacing,
    )
    return resized, lm, log


def preprocess_image(
    image: np.ndarray,
    spacing: PixelSpacing,
    cfg: PreprocessConfig = PreprocessConfig(),
) -> tuple[np.ndarray, TransformLog]:
    """Annotation-free variant of the chain (crop -> pad -> resize) for
    inference on unannotated images."""
    cropped, offset = crop_breast_region(image, opening_radius=cfg.opening_radius)
    padded, (pad_r, pad_b) = pad_square(cropped)
    resized = cv2.resize(padded, (cfg.out_size, cfg.out_size), interpolation=cv2.INTER_LINEAR)
    log = TransformLog(
        crop_offset=offset,
        pad_right=pad_r,
        pad_bottom=pad_b,
        scale=cfg.out_size / padded.shape[0],
        native_spacing=spacing,
    )
    return resized, log
