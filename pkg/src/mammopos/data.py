"""Dataset plumbing: annotation files, quality labels, splits, and the
synthetic MLO generator.

Annotation files are JSON arrays of per-case records; image paths inside are
resolved relative to the annotation file. Splits are grouped by exam (both
views of an exam travel together) and stratified by label when labels exist.

The synthetic generator draws geometry in a canonical left-laterality frame
(chest wall on the left edge, pectoral muscle a bright wedge in the upper
left) and mirrors for right-laterality cases. Each case's verdict is decided
first and the geometry rejection-sampled to match it with a safety margin, so
both labels are well represented and never borderline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .geometry import (
    ImageShape,
    LandmarkSet,
    Laterality,
    PixelSpacing,
    Point2,
    QualityLabel,
    classify_positioning,
)
from .imaging import (
    PreprocessConfig,
    RawAnnotation,
    TransformLog,
    extract_landmarks,
    preprocess_image_and_landmarks,
    standardize_pectoral_line,
)
from .imgio import read_image, read_image_shape, shape_of, write_pgm

# Label counts (good, poor) of the clinical reference splits, for report
# context only; nothing in the pipeline depends on them.
REFERENCE_SPLIT_COUNTS = {
    "train": (967, 633),
    "val": (108, 92),
    "test": (123, 77),
}


@dataclass(frozen=True)
class CaseRecord:
    """One row of an annotation file, with the image path resolved."""

    case_id: str
    exam_id: str
    laterality: Laterality
    image_path: Path
    pixel_spacing: PixelSpacing
    annotation: RawAnnotation
    label: QualityLabel | None = None


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing field '{key}'")
    return obj[key]


def _as_pair(v, where: str) -> tuple[float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise SchemaError(f"{where}: expected a pair, got {v!r}")
    try:
        return float(v[0]), float(v[1])
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: non-numeric pair {v!r}") from e


def parse_record(obj: dict, base_dir: Path, where: str) -> CaseRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: record must be an object")
    case_id = str(_require(obj, "case_id", where))
    where = f"case '{case_id}'"
    lat_raw = str(_require(obj, "laterality", where))
    try:
        laterality = Laterality(lat_raw)
    except ValueError as e:
        raise SchemaError(f"{where}: laterality must be 'L' or 'R', got {lat_raw!r}") from e
    sx, sy = _as_pair(_require(obj, "pixel_spacing", where), f"{where}: pixel_spacing")
    try:
        spacing = PixelSpacing(sx, sy)
    except ValueError as e:
        raise SchemaError(f"{where}: {e}") from e
    bbox = _require(obj, "nipple_bbox", where)
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise SchemaError(f"{where}: nipple_bbox must have 4 numbers")
    line = _require(obj, "pectoral_line", where)
    if not isinstance(line, (list, tuple)) or len(line) != 2:
        raise SchemaError(f"{where}: pectoral_line must have 2 points")
    pa = _as_pair(line[0], f"{where}: pectoral_line[0]")
    pb = _as_pair(line[1], f"{where}: pectoral_line[1]")
    label = None
    if obj.get("label") is not None:
        try:
            label = QualityLabel(obj["label"])
        except ValueError as e:
            raise SchemaError(f"{where}: label must be 'good' or 'poor'") from e
    try:
        ann = RawAnnotation(
            nipple_bbox=tuple(float(v) for v in bbox),
            pec_a=Point2(*pa),
            pec_b=Point2(*pb),
        )
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: {e}") from e
    return CaseRecord(
        case_id=case_id,
        exam_id=str(_require(obj, "exam_id", where)),
        laterality=laterality,
        image_path=(base_dir / str(_require(obj, "image", where))).resolve(),
        pixel_spacing=spacing,
        annotation=ann,
        label=label,
    )


def load_annotations(path: str | Path) -> list[CaseRecord]:
    """Load an annotation file, validating structure field by field.

    Raises SchemaError with the offending case id and field on any problem,
    including duplicate case ids.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as e:
        raise SchemaError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(payload, list):
        raise SchemaError(f"{path}: top level must be a JSON array")
    records = [parse_record(obj, path.parent, f"record #{i}") for i, obj in enumerate(payload)]
    seen: set[str] = set()
    for r in records:
        if r.case_id in seen:
            raise SchemaError(f"duplicate case_id '{r.case_id}'")
        seen.add(r.case_id)
    return records


def record_to_dict(record: CaseRecord, base_dir: Path | None = None) -> dict:
    image = record.image_path
    if base_dir is not None:
        try:
            image = image.relative_to(Path(base_dir).resolve())
        except ValueError:
            pass
    d = {
        "case_id": record.case_id,
        "exam_id": record.exam_id,
        "laterality": record.laterality.value,
        "image": str(image),
        "pixel_spacing": [record.pixel_spacing.sx, record.pixel_spacing.sy],
        "nipple_bbox": list(record.annotation.nipple_bbox),
        "pectoral_line": [
            [record.annotation.pec_a.x, record.annotation.pec_a.y],
            [record.annotation.pec_b.x, record.annotation.pec_b.y],
        ],
    }
    if record.label is not None:
        d["label"] = record.label.value
    return d


def save_annotations(path: str | Path, records: list[CaseRecord]) -> None:
    path = Path(path)
    base = path.parent.resolve()
    payload = [record_to_dict(r, base) for r in records]
    path.write_text(json.dumps(payload, indent=1) + "\n")


def derive_quality_label(record: CaseRecord, shape: ImageShape | None = None) -> QualityLabel:
    """Positioning label of a case from its annotation and native image size.

    Standardization does not move the pectoral line, so the raw extracted
    landmarks give the same verdict as the standardized ones. The image is
    only consulted for its dimensions (header read) unless a shape is given.
    """
    if shape is None:
        shape = read_image_shape(record.image_path)
    lm = extract_landmarks(record.annotation)
    return classify_positioning(lm, shape, record.laterality).label


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"train": list(self.train), "val": list(self.val), "test": list(self.test)}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(tuple(d["train"]), tuple(d["val"]), tuple(d["test"]))

    def select(self, records: list[CaseRecord], which: str) -> list[CaseRecord]:
        wanted = set(getattr(self, which))
        return [r for r in records if r.case_id in wanted]


def _integer_quotas(total: int, ratios: tuple[float, float, float]) -> list[int]:
    # Largest-remainder rounding so the quotas sum exactly to total.
    raw = [total * r for r in ratios]
    quotas = [int(math.floor(v)) for v in raw]
    rest = total - sum(quotas)
    order = sorted(range(3), key=lambda i: raw[i] - quotas[i], reverse=True)
    for i in order[:rest]:
        quotas[i] += 1
    return quotas


def split_dataset(
    records: list[CaseRecord],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Deterministic exam-grouped train/val/test split.

    All cases of an exam land in the same split. When every record carries a
    label, exams are stratified by how many poor views they contain so label
    proportions carry over. Exam counts per split hit the largest-remainder
    quotas of the ratios exactly, so with a uniform number of images per exam
    the case counts do too.
    """
    if len(records) == 0:
        raise ValueError("cannot split an empty dataset")
    if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must be non-negative and sum to 1, got {ratios}")

    by_exam: dict[str, list[CaseRecord]] = {}
    for r in records:
        by_exam.setdefault(r.exam_id, []).append(r)
    exam_ids = sorted(by_exam)

    labelled = all(r.label is not None for r in records)
    strata: dict[int, list[str]] = {}
    for eid in exam_ids:
        key = sum(1 for r in by_exam[eid] if r.label is QualityLabel.POOR) if labelled else 0
        strata.setdefault(key, []).append(eid)

    rng = np.random.default_rng(seed)

    # Quotas are counted in exams, the unit actually being dealt out; image
    # quotas would drift whenever a stratum's rounding lands mid-exam. Each
    # stratum gets largest-remainder quotas at the requested ratios, and the
    # largest stratum absorbs whatever rounding drift is left against the
    # global quota.
    stratum_keys = sorted(strata)
    global_quota = _integer_quotas(len(exam_ids), ratios)
    quota: dict[int, list[int]] = {
        key: _integer_quotas(len(strata[key]), ratios) for key in stratum_keys
    }
    drift = [global_quota[i] - sum(quota[key][i] for key in stratum_keys) for i in range(3)]
    for key in sorted(stratum_keys, key=lambda k: -len(strata[k])):
        for i in range(3):
            take = max(drift[i], -quota[key][i]) if drift[i] < 0 else drift[i]
            quota[key][i] += take
            drift[i] -= take

    buckets: tuple[list[str], ...] = ([], [], [])
    for key in stratum_keys:
        ids = strata[key]
        rng.shuffle(ids)
        remaining = quota[key]
        for eid in ids:
            s = max(range(3), key=lambda i: remaining[i])
            remaining[s] -= 1
            buckets[s].extend(r.case_id for r in by_exam[eid])
    return DatasetSplit(train=tuple(buckets[0]), val=tuple(buckets[1]), test=tuple(buckets[2]))


# ---------------------------------------------------------------------------
# Synthetic generation


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs of the synthetic MLO generator.

    Fractions are of the image side. The angle is the pectoral line's tilt
    from vertical in degrees. Each case derives its RNG from (seed, index),
    so any case regenerates identically in isolation.
    """

    image_size: int = 160
    pectoral_angle_deg: tuple[float, float] = (10.0, 40.0)
    nipple_x: tuple[float, float] = (0.40, 0.80)
    nipple_y: tuple[float, float] = (0.20, 0.80)
    noise_sigma: float = 0.015
    pixel_spacing: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 64:
            raise ValueError("image_size must be at least 64")
        lo, hi = self.pectoral_angle_deg
        if not 0 < lo <= hi < 90:
            raise ValueError(f"pectoral angle range invalid: {self.pectoral_angle_deg}")
        if self.noise_sigma < 0 or self.pixel_spacing <= 0:
            raise ValueError("noise_sigma must be >= 0 and pixel_spacing > 0")


@dataclass
class AnnotatedImage:
    """An in-memory case: pixels plus everything an annotation row holds."""

    case_id: str
    exam_id: str
    laterality: Laterality
    pixel_spacing: PixelSpacing
    annotation: RawAnnotation
    image: np.ndarray
    label: QualityLabel | None = None

    def to_record(self, image_path: Path) -> CaseRecord:
        return CaseRecord(
            case_id=self.case_id,
            exam_id=self.exam_id,
            laterality=self.laterality,
            image_path=image_path,
            pixel_spacing=self.pixel_spacing,
            annotation=self.annotation,
            label=self.label,
        )


@dataclass(frozen=True)
class _Geometry:
    theta: float  # radians from vertical
    o_x: float  # content offset from the left edge
    o_y: float  # content offset from the top edge
    x_q: float  # pectoral line x at y = o_y
    nipple: tuple[float, float]
    t_foot: float
    label: QualityLabel


# Known-accepting geometries used if rejection sampling runs dry
# (fractions of the image side; angles in degrees).
_FALLBACK = {
    QualityLabel.GOOD: (25.0, 0.45, 0.60, 0.55),
    QualityLabel.POOR: (38.0, 0.35, 0.30, 0.75),
}

_MAX_TRIES = 600
_MARGIN_FRAC = 0.05  # along-the-line safety margin separating labels


def _accepts(theta, o_x, o_y, x_q, nx, ny, wanted: QualityLabel, size: int):
    s, c = math.sin(theta), math.cos(theta)
    m = _MARGIN_FRAC * size
    u = (nx - x_q) * c + (ny - o_y) * s
    if u < 0.10 * size:
        return None
    t = -s * (nx - x_q) + c * (ny - o_y)
    t_left_img = x_q / s
    t_left_content = (x_q - o_x) / s
    t_bottom = (size - 1 - o_y) / c
    foot_y = o_y + t * c
    if wanted is QualityLabel.GOOD:
        # Foot inside the image and inside the breast component with margin,
        # so the verdict survives cropping and prediction noise.
        hi = min(t_left_content - max(m, 3.0 / s), t_bottom - m)
        if m <= t <= hi and foot_y <= 0.88 * size:
            return t
        return None
    # Poor feet exit through the chest-wall side or above the top edge;
    # beyond-bottom feet cannot coexist with an in-image nipple.
    if t_left_img < t_bottom and t >= t_left_img + m:
        return t
    if t <= -(o_y / c) - m:
        return t
    return None


def _sample_geometry(rng: np.random.Generator, spec: SyntheticSpec, wanted: QualityLabel) -> _Geometry:
    size = spec.image_size
    lo, hi = spec.pectoral_angle_deg
    o_cap = min(0.05 * size, 8.0)
    for _ in range(_MAX_TRIES):
        theta = math.radians(rng.uniform(lo, hi))
        o_x = rng.uniform(0.0, o_cap)
        o_y = rng.uniform(0.0, o_cap)
        x_q = o_x + rng.uniform(0.33, 0.52) * size
        nx = rng.uniform(*spec.nipple_x) * size
        ny = rng.uniform(*spec.nipple_y) * size
        t = _accepts(theta, o_x, o_y, x_q, nx, ny, wanted, size)
        if t is not None:
            return _Geometry(theta, o_x, o_y, x_q, (nx, ny), t, wanted)
    deg, fx, fnx, fny = _FALLBACK[wanted]
    theta = math.radians(deg)
    t = _accepts(theta, 0.0, 0.0, fx * size, fnx * size, fny * size, wanted, size)
    assert t is not None, "fallback geometry must accept"
    return _Geometry(theta, 0.0, 0.0, fx * size, (fnx * size, fny * size), t, wanted)


def _render(rng: np.random.Generator, spec: SyntheticSpec, g: _Geometry) -> np.ndarray:
    size = spec.image_size
    s, c = math.sin(g.theta), math.cos(g.theta)
    nx, ny = g.nipple
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    img = np.full((size, size), 0.03)

    # Breast: half-ellipse against the chest wall, nipple on its contour.
    a = max(nx - g.o_x, 1.0)
    b = max(0.97 * size - ny, 0.30 * size) + rng.uniform(0.0, 0.03 * size)
    ellipse = ((xx - g.o_x) / a) ** 2 + ((yy - ny) / b) ** 2 <= 1.0
    np.maximum(img, np.where(ellipse & (xx >= g.o_x), 0.46, 0.0), out=img)

    # Pectoral wedge with a small axillary bulge at the very top. The bulge
    # keeps the component bbox clear of the standardized upper endpoint; the
    # annotated segment starts below it, on the straight edge.
    bulge_h = 0.05 * size
    frac = np.clip((yy - g.o_y) / bulge_h, 0.0, 1.0)
    bulge = 0.05 * size * (1.0 - frac) ** 1.5
    x_line = g.x_q - (yy - g.o_y) * (s / c)
    wedge = (yy >= g.o_y) & (xx >= g.o_x) & (xx <= x_line + bulge)
    np.maximum(img, np.where(wedge, 0.75, 0.0), out=img)

    # Chest-wall band joining wedge and ellipse into one component; must be
    # wide enough to survive the morphological opening (radius <= 3).
    band_w = max(0.05 * size, 8.0)
    band = (xx >= g.o_x) & (xx < g.o_x + band_w) & (yy >= g.o_y) & (yy <= ny)
    np.maximum(img, np.where(band, 0.55, 0.0), out=img)

    # Nipple: bright Gaussian blob centred exactly on the landmark.
    sigma = 0.022 * size
    blob = np.exp(-((xx - nx) ** 2 + (yy - ny) ** 2) / (2.0 * sigma * sigma))
    np.maximum(img, blob, out=img)

    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
    np.clip(img, 0.0, 1.0, out=img)
    return (img * 65535.0).round().astype(np.uint16)


def generate_synthetic_case(spec: SyntheticSpec, index: int) -> AnnotatedImage:
    """Generate case number `index`: image, annotation, and oracle label.

    Cases pair into exams (two views, alternating laterality). The stored
    label comes from the construction and is cross-checked against the
    geometric verdict before returning.
    """
    rng = np.random.default_rng([spec.seed, index])
    size = spec.image_size
    laterality = Laterality.LEFT if index % 2 == 0 else Laterality.RIGHT
    wanted = QualityLabel.GOOD if rng.random() < 0.5 else QualityLabel.POOR
    g = _sample_geometry(rng, spec, wanted)
    img = _render(rng, spec, g)

    s, c = math.sin(g.theta), math.cos(g.theta)

    def line_pt(t: float) -> tuple[float, float]:
        return g.x_q - t * s, g.o_y + t * c

    t_left_content = (g.x_q - g.o_x) / s
    t_bottom = (size - 1 - g.o_y) / c
    t_span = min(t_left_content, t_bottom)
    t_min_a = (0.05 * size + 3.0) / c
    t_max_a = max(0.25 * t_span, t_min_a + 2.0)
    t_a = rng.uniform(t_min_a, t_max_a)
    t_usable = min((g.x_q - g.o_x - 1.0) / s, (size - 2 - g.o_y) / c)
    t_b = rng.uniform(0.60, 0.90) * t_usable

    nx, ny = g.nipple
    hx = rng.uniform(0.025, 0.045) * size
    hy = rng.uniform(0.025, 0.045) * size
    pa, pb = line_pt(t_a), line_pt(t_b)
    if rng.random() < 0.5:
        pa, pb = pb, pa

    if laterality is Laterality.RIGHT:
        mirror = lambda p: (size - 1 - p[0], p[1])
        img = np.ascontiguousarray(img[:, ::-1])
        pa, pb = mirror(pa), mirror(pb)
        bbox = (size - 1 - (nx + hx), ny - hy, size - 1 - (nx - hx), ny + hy)
    else:
        bbox = (nx - hx, ny - hy, nx + hx, ny + hy)

    ann = RawAnnotation(nipple_bbox=bbox, pec_a=Point2(*pa), pec_b=Point2(*pb))
    case = AnnotatedImage(
        case_id=f"syn-{index:05d}",
        exam_id=f"exam-{index // 2:04d}",
        laterality=laterality,
        pixel_spacing=PixelSpacing(spec.pixel_spacing, spec.pixel_spacing),
        annotation=ann,
        image=img,
        label=wanted,
    )
    check = classify_positioning(
        extract_landmarks(ann), ImageShape(size, size), laterality
    ).label
    assert check is wanted, f"generator produced a {check} case while targeting {wanted}"
    return case


def generate_dataset(spec: SyntheticSpec, count: int) -> list[AnnotatedImage]:
    return [generate_synthetic_case(spec, i) for i in range(count)]


def write_dataset(cases: list[AnnotatedImage], out_dir: str | Path) -> list[CaseRecord]:
    """Write images as PGM plus an annotations.json; returns the records."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for case in cases:
        path = out_dir / "images" / f"{case.case_id}.pgm"
        write_pgm(path, case.image)
        records.append(case.to_record(path.resolve()))
    save_annotations(out_dir / "annotations.json", records)
    return records


def load_dataset(data_dir: str | Path) -> list[AnnotatedImage]:
    """Load a written dataset back into memory."""
    records = load_annotations(Path(data_dir) / "annotations.json")
    return [
        AnnotatedImage(
            case_id=r.case_id,
            exam_id=r.exam_id,
            laterality=r.laterality,
            pixel_spacing=r.pixel_spacing,
            annotation=r.annotation,
            image=read_image(r.image_path),
            label=r.label,
        )
        for r in records
    ]


# ---------------------------------------------------------------------------
# Model-ready preparation


@dataclass
class PreparedCase:
    """One case after preprocessing, carrying both coordinate frames."""

    case_id: str
    exam_id: str
    laterality: Laterality
    image: np.ndarray  # float32 in [0, 1], (S, S)
    targets: np.ndarray  # float32 (6,): nipple, pec1, pec2 in processed coords
    landmarks: LandmarkSet  # processed frame
    native_landmarks: LandmarkSet  # standardized, native frame
    native_shape: ImageShape
    log: TransformLog
    label: QualityLabel | None


def _normalize(image: np.ndarray) -> np.ndarray:
    if image.dtype == np.uint8:
        return image.astype(np.float32) / 255.0
    if image.dtype == np.uint16:
        return image.astype(np.float32) / 65535.0
    return np.clip(image.astype(np.float32), 0.0, 1.0)


def prepare_case(case: AnnotatedImage, cfg: PreprocessConfig) -> PreparedCase:
    native_shape = shape_of(case.image)
    lm_raw = extract_landmarks(case.annotation)
    std = standardize_pectoral_line(lm_raw, native_shape, margin=cfg.margin)
    processed, lm, log = preprocess_image_and_landmarks(
        case.image, lm_raw, case.pixel_spacing, cfg
    )
    targets = np.array(
        [lm.nipple.x, lm.nipple.y, lm.pec1.x, lm.pec1.y, lm.pec2.x, lm.pec2.y],
        dtype=np.float32,
    )
    return PreparedCase(
        case_id=case.case_id,
        exam_id=case.exam_id,
        laterality=case.laterality,
        image=_normalize(processed),
        targets=targets,
        landmarks=lm,
        native_landmarks=std,
        native_shape=native_shape,
        log=log,
        label=case.label,
    )


def prepare_cases(cases: list[AnnotatedImage], cfg: PreprocessConfig) -> list[PreparedCase]:
    return [prepare_case(c, cfg) for c in cases]


def images_array(cases: list[PreparedCase]) -> np.ndarray:
    """Stack prepared images into a (N, 1, S, S) float32 batch."""
    return np.stack([c.image for c in cases])[:, None, :, :]


def targets_array(cases: list[PreparedCase]) -> np.ndarray:
    return np.stack([c.targets for c in cases])
