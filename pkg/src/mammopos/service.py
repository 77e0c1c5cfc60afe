"""HTTP backend for the review workstation.

Endpoints (JSON unless noted):
    POST /api/verdict                geometry verdict for placed landmarks
    POST /api/predict                model inference: multipart image upload,
                                     or {"case_id": ...} to predict a stored
                                     case and compare against its annotation
    GET  /api/cases                  case listing with annotation state
    GET  /api/annotations/{case_id}  effective annotation + revision
    PUT  /api/annotations/{case_id}  save annotation (revision-checked)
    GET  /api/images/{case_id}       case image as PNG
    /                                static review-ui bundle, when present

Verdicts always go through geometry.classify_positioning; the service adds
no geometry of its own. Schema violations return 400; a degenerate pectoral
line returns 422; writes with a stale revision return 409.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field, ValidationError
from starlette.datastructures import UploadFile

from .data import CaseRecord, load_annotations
from .errors import DegenerateLine, IoError, MammoposError
from .evaluation import landmark_errors, predict_image
from .geometry import (
    ImageShape,
    LandmarkSet,
    Laterality,
    PixelSpacing,
    Point2,
    QualityVerdict,
    classify_positioning,
)
from .imaging import PreprocessConfig, RawAnnotation, extract_landmarks
from .imgio import decode_image, encode_png, read_image, read_image_shape
from .models import ModelConfig, load_params, model_from_params


class LandmarksIn(BaseModel):
    nipple: tuple[float, float]
    pec1: tuple[float, float]
    pec2: tuple[float, float]


class VerdictIn(BaseModel):
    landmarks: LandmarksIn
    shape: tuple[int, int] = Field(description="width, height")
    laterality: str = "L"
    pixel_spacing: tuple[float, float] | None = None


class AnnotationIn(BaseModel):
    nipple_bbox: tuple[float, float, float, float]
    pectoral_line: tuple[tuple[float, float], tuple[float, float]]
    revision: int = Field(ge=0, description="revision this edit is based on")


class PredictByCaseIn(BaseModel):
    case_id: str


class StaleRevision(MammoposError):
    def __init__(self, current: int):
        super().__init__(f"stale revision, current is {current}")
        self.current = current


@dataclass
class StoreEntry:
    revision: int
    timestamp: float
    nipple_bbox: tuple[float, float, float, float]
    pectoral_line: tuple[tuple[float, float], tuple[float, float]]


class AnnotationStore:
    """Append-log annotation persistence with per-case revisions.

    Each line of the log is one revision; the newest revision per case wins.
    Writes are serialized by a process-local lock, which is sufficient for
    the single-process deployment this service targets.
    """

    def __init__(self, path: str | Path | None):
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self._entries: dict[str, StoreEntry] = {}
        if self._path is not None and self._path.exists():
            for line in self._path.read_text().splitlines():
                if not line.strip():
                    continue
                d = json.loads(line)
                self._entries[d["case_id"]] = StoreEntry(
                    revision=d["revision"],
                    timestamp=d["timestamp"],
                    nipple_bbox=tuple(d["nipple_bbox"]),
                    pectoral_line=(tuple(d["pectoral_line"][0]), tuple(d["pectoral_line"][1])),
                )

    def get(self, case_id: str) -> StoreEntry | None:
        with self._lock:
            return self._entries.get(case_id)

    def put(self, case_id: str, ann: AnnotationIn) -> int:
        with self._lock:
            current = self._entries[case_id].revision if case_id in self._entries else 0
            if ann.revision != current:
                raise StaleRevision(current)
            entry = StoreEntry(
                revision=current + 1,
                timestamp=time.time(),
                nipple_bbox=ann.nipple_bbox,
                pectoral_line=ann.pectoral_line,
            )
            if self._path is not None:
                record = {
                    "case_id": case_id,
                    "revision": entry.revision,
                    "timestamp": entry.timestamp,
                    "nipple_bbox": list(entry.nipple_bbox),
                    "pectoral_line": [list(entry.pectoral_line[0]), list(entry.pectoral_line[1])],
                }
                with open(self._path, "a") as f:
                    f.write(json.dumps(record) + "\n")
            self._entries[case_id] = entry
            return entry.revision


def _verdict_payload(v: QualityVerdict, nipple: Point2) -> dict:
    return {
        "foot": [v.foot.x, v.foot.y],
        "in_bounds": v.in_bounds,
        "label": v.label.value,
        "angle_deg": v.angle_deg,
        "pnl": {"start": [nipple.x, nipple.y], "end": [v.foot.x, v.foot.y]},
    }


def _landmarks_payload(lm: LandmarkSet) -> dict:
    return {
        "nipple": [lm.nipple.x, lm.nipple.y],
        "pec1": [lm.pec1.x, lm.pec1.y],
        "pec2": [lm.pec2.x, lm.pec2.y],
    }


def load_model_bundle(model_path: str | Path) -> tuple[ModelConfig, "object"]:
    """Load a trained model from <stem>.json (config) + the params file."""
    model_path = Path(model_path)
    cfg_path = model_path.with_suffix(".json")
    if not cfg_path.exists():
        raise IoError(f"model config {cfg_path} not found")
    cfg = ModelConfig.from_dict(json.loads(cfg_path.read_text()))
    store = load_params(model_path, cfg)
    return cfg, model_from_params(cfg, store)


def create_app(
    data_dir: str | Path | None = None,
    model_path: str | Path | None = None,
    store_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
    opening_radius: int = 5,
) -> FastAPI:
    """Assemble the service.

    data_dir holds an annotations.json dataset to browse; model_path points
    at trained params (with a .json config sidecar); store_path is the
    annotation log; ui_dir a static frontend bundle.
    """
    app = FastAPI(title="mammopos review service")
    records: dict[str, CaseRecord] = {}
    if data_dir is not None:
        for r in load_annotations(Path(data_dir) / "annotations.json"):
            records[r.case_id] = r
    store = AnnotationStore(store_path)
    model_cfg = model = None
    if model_path is not None:
        model_cfg, model = load_model_bundle(model_path)

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(ValidationError)
    async def _bad_body(request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(ValueError)
    async def _bad_value(request: Request, exc: ValueError):
        # Laterality, ImageShape etc. validate in their constructors; a
        # rejected value is a malformed request, not a server fault.
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(DegenerateLine)
    async def _degenerate(request: Request, exc: DegenerateLine):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(StaleRevision)
    async def _stale(request: Request, exc: StaleRevision):
        return JSONResponse(
            status_code=409, content={"detail": str(exc), "revision": exc.current}
        )

    def _effective_annotation(case_id: str) -> tuple[RawAnnotation, int]:
        entry = store.get(case_id)
        if entry is not None:
            return (
                RawAnnotation(
                    nipple_bbox=entry.nipple_bbox,
                    pec_a=Point2(*entry.pectoral_line[0]),
                    pec_b=Point2(*entry.pectoral_line[1]),
                ),
                entry.revision,
            )
        rec = records[case_id]
        return rec.annotation, 0

    @app.post("/api/verdict")
    def verdict(req: VerdictIn):
        lm = LandmarkSet.canonical(
            Point2(*req.landmarks.nipple),
            Point2(*req.landmarks.pec1),
            Point2(*req.landmarks.pec2),
        )
        v = classify_positioning(
            lm, ImageShape(*req.shape), Laterality(req.laterality)
        )
        return _verdict_payload(v, lm.nipple)

    @app.post("/api/predict")
    async def predict(request: Request):
        if model is None:
            return JSONResponse(status_code=503, content={"detail": "no model loaded"})
        preproc = PreprocessConfig(
            out_size=model_cfg.input_size, opening_radius=opening_radius
        )
        content_type = request.headers.get("content-type", "")

        if content_type.startswith("application/json"):
            body = PredictByCaseIn(**(await request.json()))
            rec = records.get(body.case_id)
            if rec is None:
                return JSONResponse(status_code=404, content={"detail": "unknown case"})
            image = read_image(rec.image_path)
            outcome = predict_image(
                model_cfg, model, image, rec.pixel_spacing, rec.laterality, preproc
            )
            ann, revision = _effective_annotation(body.case_id)
            truth = extract_landmarks(ann)
            errs = landmark_errors(
                outcome.landmarks, truth, rec.pixel_spacing, rec.laterality
            )
            return {
                "case_id": body.case_id,
                "landmarks": _landmarks_payload(outcome.landmarks),
                "verdict": _verdict_payload(outcome.verdict, outcome.landmarks.nipple),
                "annotation": _landmarks_payload(truth),
                "annotation_revision": revision,
                "errors": {
                    "perp_mm": errs.perp_mm,
                    "pec1_mm": errs.pec1_mm,
                    "pec2_mm": errs.pec2_mm,
                    "nipple_mm": errs.nipple_mm,
                    "angular_deg": errs.angular_deg,
                },
            }

        form = await request.form()
        upload = form.get("file")
        if not isinstance(upload, UploadFile):
            return JSONResponse(status_code=415, content={"detail": "expected an image upload"})
        data = await upload.read()
        try:
            image = decode_image(data)
        except IoError as e:
            return JSONResponse(status_code=415, content={"detail": str(e)})
        lat = Laterality(str(form.get("laterality", "L")))
        sx = float(form.get("spacing_x", 1.0))
        sy = float(form.get("spacing_y", 1.0))
        outcome = predict_image(
            model_cfg, model, image, PixelSpacing(sx, sy), lat, preproc
        )
        return {
            "landmarks": _landmarks_payload(outcome.landmarks),
            "verdict": _verdict_payload(outcome.verdict, outcome.landmarks.nipple),
        }

    @app.get("/api/cases")
    def cases():
        out = []
        for case_id in sorted(records):
            rec = records[case_id]
            shape = read_image_shape(rec.image_path)
            entry = store.get(case_id)
            out.append(
                {
                    "case_id": case_id,
                    "exam_id": rec.exam_id,
                    "laterality": rec.laterality.value,
                    "width": shape.width,
                    "height": shape.height,
                    "pixel_spacing": [rec.pixel_spacing.sx, rec.pixel_spacing.sy],
                    "revision": entry.revision if entry else 0,
                    "label": rec.label.value if rec.label else None,
                }
            )
        return out

    @app.get("/api/annotations/{case_id}")
    def get_annotation(case_id: str):
        if case_id not in records:
            return JSONResponse(status_code=404, content={"detail": "unknown case"})
        ann, revision = _effective_annotation(case_id)
        return {
            "case_id": case_id,
            "revision": revision,
            "nipple_bbox": list(ann.nipple_bbox),
            "pectoral_line": [
                [ann.pec_a.x, ann.pec_a.y],
                [ann.pec_b.x, ann.pec_b.y],
            ],
        }

    @app.put("/api/annotations/{case_id}")
    def put_annotation(case_id: str, ann: AnnotationIn):
        if case_id not in records:
            return JSONResponse(status_code=404, content={"detail": "unknown case"})
        revision = store.put(case_id, ann)
        return {"case_id": case_id, "revision": revision}

    @app.get("/api/images/{case_id}")
    def image(case_id: str):
        rec = records.get(case_id)
        if rec is None:
            return JSONResponse(status_code=404, content={"detail": "unknown case"})
        png = encode_png(read_image(rec.image_path))
        return Response(content=png, media_type="image/png")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
