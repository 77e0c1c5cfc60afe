"""Model evaluation: per-case landmark errors, verdict confusion metrics,
and report formatting.

Poor positioning is the positive class throughout: sensitivity is the
fraction of poor cases caught, specificity the fraction of good cases
passed. Predictions are mapped back to native pixel coordinates through each
case's TransformLog before anything is measured, so millimetre errors and
verdicts refer to the original image.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .data import PreparedCase, images_array
from .errors import EmptyClass, EmptyInput, NonFinite
from .geometry import (
    ImageShape,
    LandmarkSet,
    Laterality,
    PixelSpacing,
    Point2,
    QualityLabel,
    QualityVerdict,
    angular_error,
    classify_positioning,
    mm_distance,
    perpendicular_foot,
)
from .models import ModelConfig, model_from_params

# Clinical full-scale reference (512px inputs, ~2000-case dataset), kept for
# report context next to desk-scale numbers. Metrics are percent mean/std
# over seeds; landmark rows are (mean, std, median).
REFERENCE_METRICS = {
    "accuracy": (88.63, 2.84),
    "specificity": (90.25, 4.04),
    "sensitivity": (86.04, 3.41),
}
REFERENCE_LANDMARK_STATS = {
    "perp_mm": (4.99, 4.88, 3.82),
    "pec1_mm": (5.62, 5.29, 4.14),
    "pec2_mm": (6.49, 7.37, 4.26),
    "nipple_mm": (2.97, 2.46, 2.45),
    "angular_deg": (2.42, 2.56, 1.75),
}


@dataclass(frozen=True)
class ConfusionCounts:
    """2x2 confusion over verdicts, poor = positive class."""

    tp_poor: int
    fn_poor: int
    tn_good: int
    fp_good: int

    @property
    def total(self) -> int:
        return self.tp_poor + self.fn_poor + self.tn_good + self.fp_good


def confusion_metrics(c: ConfusionCounts) -> dict[str, float]:
    """Accuracy, sensitivity, specificity in [0, 1].

    Raises EmptyInput with no cases at all, EmptyClass when the class a
    metric conditions on is absent.
    """
    if c.total == 0:
        raise EmptyInput("no cases to score")
    n_poor = c.tp_poor + c.fn_poor
    n_good = c.tn_good + c.fp_good
    if n_poor == 0:
        raise EmptyClass("sensitivity undefined: no poor cases")
    if n_good == 0:
        raise EmptyClass("specificity undefined: no good cases")
    return {
        "accuracy": (c.tp_poor + c.tn_good) / c.total,
        "sensitivity": c.tp_poor / n_poor,
        "specificity": c.tn_good / n_good,
    }


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    std: float  # population (divide by N)
    median: float  # midpoint of the two central values for even N
    n: int


def error_stats(values) -> ErrorStats:
    """Mean, population std, and midpoint median of a sample."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("statistics over an empty sample")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("sample contains NaN or Inf")
    return ErrorStats(
        mean=float(arr.mean()),
        std=float(arr.std()),
        median=float(np.median(arr)),
        n=int(arr.size),
    )


@dataclass(frozen=True)
class CaseErrors:
    """Millimetre and angular errors of one prediction against truth."""

    perp_mm: float
    pec1_mm: float
    pec2_mm: float
    nipple_mm: float
    angular_deg: float


def landmark_errors(
    pred: LandmarkSet,
    truth: LandmarkSet,
    spacing: PixelSpacing,
    laterality: Laterality,
) -> CaseErrors:
    """Distance errors between predicted and true landmarks.

    perp_mm compares the two perpendicular feet (each set's own nipple
    projected onto its own pectoral line). The landmark roles follow the
    canonical ordering, so pec1 always means the lower endpoint.
    """
    foot_pred = perpendicular_foot(pred.pec1, pred.pec2, pred.nipple)
    foot_true = perpendicular_foot(truth.pec1, truth.pec2, truth.nipple)
    return CaseErrors(
        perp_mm=mm_distance(foot_pred, foot_true, spacing),
        pec1_mm=mm_distance(pred.pec1, truth.pec1, spacing),
        pec2_mm=mm_distance(pred.pec2, truth.pec2, spacing),
        nipple_mm=mm_distance(pred.nipple, truth.nipple, spacing),
        angular_deg=angular_error(
            (pred.pec1, pred.pec2), (truth.pec1, truth.pec2), laterality
        ),
    )


@dataclass
class CaseResult:
    case_id: str
    label_true: QualityLabel
    label_pred: QualityLabel
    errors: CaseErrors


@dataclass
class EvalReport:
    n_cases: int
    counts: ConfusionCounts
    metrics: dict[str, float]
    stats: dict[str, ErrorStats]
    cases: list[CaseResult]

    def to_json(self) -> str:
        payload = {
            "n_cases": self.n_cases,
            "counts": asdict(self.counts),
            "metrics": self.metrics,
            "stats": {k: asdict(v) for k, v in self.stats.items()},
            "cases": [
                {
                    "case_id": c.case_id,
                    "label_true": c.label_true.value,
                    "label_pred": c.label_pred.value,
                    **asdict(c.errors),
                }
                for c in self.cases
            ],
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(
            n_cases=d["n_cases"],
            counts=ConfusionCounts(**d["counts"]),
            metrics=d["metrics"],
            stats={k: ErrorStats(**v) for k, v in d["stats"].items()},
            cases=[
                CaseResult(
                    case_id=c["case_id"],
                    label_true=QualityLabel(c["label_true"]),
                    label_pred=QualityLabel(c["label_pred"]),
                    errors=CaseErrors(
                        perp_mm=c["perp_mm"],
                        pec1_mm=c["pec1_mm"],
                        pec2_mm=c["pec2_mm"],
                        nipple_mm=c["nipple_mm"],
                        angular_deg=c["angular_deg"],
                    ),
                )
                for c in d["cases"]
            ],
        )

    def per_case_csv(self) -> str:
        lines = ["case_id,label_true,label_pred,perp_mm,pec1_mm,pec2_mm,nipple_mm,angular_deg"]
        for c in self.cases:
            e = c.errors
            lines.append(
                f"{c.case_id},{c.label_true.value},{c.label_pred.value},"
                f"{e.perp_mm:.4f},{e.pec1_mm:.4f},{e.pec2_mm:.4f},"
                f"{e.nipple_mm:.4f},{e.angular_deg:.4f}"
            )
        return "\n".join(lines) + "\n"

    def format_tables(self) -> str:
        """Aligned text tables: verdict metrics and landmark error stats,
        with the clinical full-scale reference alongside."""
        out = []
        out.append("Verdict metrics (poor = positive class)")
        out.append(f"{'metric':<14}{'value %':>10}{'reference %':>16}")
        for k in ("accuracy", "specificity", "sensitivity"):
            ref_m, ref_s = REFERENCE_METRICS[k]
            out.append(f"{k:<14}{100 * self.metrics[k]:>10.2f}{ref_m:>10.2f} ± {ref_s:<5.2f}")
        out.append("")
        out.append("Landmark errors")
        out.append(
            f"{'landmark':<14}{'mean':>8}{'std':>8}{'median':>8}    "
            f"{'ref mean':>8}{'ref std':>8}{'ref med':>8}"
        )
        for k, s in self.stats.items():
            rm, rs, rmed = REFERENCE_LANDMARK_STATS[k]
            out.append(
                f"{k:<14}{s.mean:>8.2f}{s.std:>8.2f}{s.median:>8.2f}    "
                f"{rm:>8.2f}{rs:>8.2f}{rmed:>8.2f}"
            )
        counts = self.counts
        out.append("")
        out.append(
            f"n={self.n_cases}  tp_poor={counts.tp_poor} fn_poor={counts.fn_poor} "
            f"tn_good={counts.tn_good} fp_good={counts.fp_good}"
        )
        return "\n".join(out) + "\n"


def outputs_to_landmarks(vec: np.ndarray) -> LandmarkSet:
    """Interpret a raw 6-vector as landmarks, canonicalizing the pectoral
    endpoint order."""
    v = np.asarray(vec, dtype=np.float64).reshape(6)
    return LandmarkSet.canonical(
        Point2(float(v[0]), float(v[1])),
        Point2(float(v[2]), float(v[3])),
        Point2(float(v[4]), float(v[5])),
    )


def predict_batch(model, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Eval-mode forward over (N, 1, S, S) images; returns (N, 6) float64."""
    model.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            x = torch.from_numpy(np.ascontiguousarray(images[start : start + batch_size]))
            outs.append(model(x).double().numpy())
    return np.concatenate(outs, axis=0)


def evaluate_predictions(
    cases: list[PreparedCase], predictions: np.ndarray
) -> EvalReport:
    """Score processed-frame coordinate predictions against the cases' truth.

    predictions is (N, 6) in processed coordinates, matching cases order.
    """
    if len(cases) == 0:
        raise EmptyInput("no cases to evaluate")
    if len(predictions) != len(cases):
        raise ValueError(f"{len(predictions)} predictions for {len(cases)} cases")
    results = []
    tp = fn = tn = fp = 0
    for case, row in zip(cases, predictions):
        pred_native = case.log.landmarks_to_native(outputs_to_landmarks(row))
        truth = case.native_landmarks
        errs = landmark_errors(pred_native, truth, case.log.native_spacing, case.laterality)
        label_pred = classify_positioning(pred_native, case.native_shape, case.laterality).label
        label_true = classify_positioning(truth, case.native_shape, case.laterality).label
        if label_true is QualityLabel.POOR:
            if label_pred is QualityLabel.POOR:
                tp += 1
            else:
                fn += 1
        else:
            if label_pred is QualityLabel.GOOD:
                tn += 1
            else:
                fp += 1
        results.append(CaseResult(case.case_id, label_true, label_pred, errs))

    counts = ConfusionCounts(tp_poor=tp, fn_poor=fn, tn_good=tn, fp_good=fp)
    stats = {
        key: error_stats([getattr(r.errors, key) for r in results])
        for key in ("perp_mm", "pec1_mm", "pec2_mm", "nipple_mm", "angular_deg")
    }
    return EvalReport(
        n_cases=len(cases),
        counts=counts,
        metrics=confusion_metrics(counts),
        stats=stats,
        cases=results,
    )


def evaluate_model(
    model_cfg: ModelConfig,
    store,
    cases: list[PreparedCase],
    batch_size: int = 64,
) -> EvalReport:
    """Run the model over prepared cases and score it; see
    evaluate_predictions for semantics."""
    if len(cases) == 0:
        raise EmptyInput("no cases to evaluate")
    model = model_from_params(model_cfg, store)
    preds = predict_batch(model, images_array(cases), batch_size)
    return evaluate_predictions(cases, preds)


@dataclass
class PredictOutcome:
    """Single-image inference result in native coordinates."""

    landmarks: LandmarkSet
    verdict: "QualityVerdict"
    log: "TransformLog"


def predict_image(
    model_cfg: ModelConfig,
    model,
    image: np.ndarray,
    spacing: PixelSpacing,
    laterality: Laterality,
    preproc: "PreprocessConfig | None" = None,
):
    """Annotation-free inference on one native image.

    Runs the crop/pad/resize chain, a forward pass, and maps the outputs back
    through the TransformLog; the verdict is computed on the native frame.
    The model input size fixes the preprocessing output size.
    """
    from .imaging import PreprocessConfig, preprocess_image

    if preproc is None:
        preproc = PreprocessConfig(out_size=model_cfg.input_size)
    elif preproc.out_size != model_cfg.input_size:
        raise ValueError(
            f"preprocess out_size {preproc.out_size} != model input {model_cfg.input_size}"
        )
    processed, log = preprocess_image(image, spacing, preproc)
    from .data import _normalize

    batch = _normalize(processed)[None, None, :, :]
    pred = predict_batch(model, batch)[0]
    native = log.landmarks_to_native(outputs_to_landmarks(pred))
    shape = ImageShape(width=image.shape[1], height=image.shape[0])
    verdict = classify_positioning(native, shape, laterality)
    return PredictOutcome(landmarks=native, verdict=verdict, log=log)


@dataclass
class AggregateReport:
    """Across-seed summary: mean and std (population) per metric."""

    n_runs: int
    metrics: dict[str, tuple[float, float]]

    def format_table(self) -> str:
        out = [f"Aggregate over {self.n_runs} runs"]
        out.append(f"{'metric':<14}{'mean':>10}{'std':>10}")
        for k, (m, s) in self.metrics.items():
            out.append(f"{k:<14}{m:>10.4f}{s:>10.4f}")
        return "\n".join(out) + "\n"


def aggregate_reports(reports: list[EvalReport]) -> AggregateReport:
    """Combine per-seed reports into mean ± std of every scalar metric and
    of each landmark error mean."""
    if len(reports) == 0:
        raise EmptyInput("no reports to aggregate")
    metrics: dict[str, tuple[float, float]] = {}
    for key in reports[0].metrics:
        vals = np.array([r.metrics[key] for r in reports])
        metrics[key] = (float(vals.mean()), float(vals.std()))
    for key in reports[0].stats:
        vals = np.array([r.stats[key].mean for r in reports])
        metrics[key] = (float(vals.mean()), float(vals.std()))
    return AggregateReport(n_runs=len(reports), metrics=metrics)
