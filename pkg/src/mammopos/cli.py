"""Command-line entry points.

Every subcommand takes --config pointing at a TOML or JSON file whose
sections (synth, preprocess, model, train) supply defaults; explicit flags
win over the file. See README for desk-scale and full-scale invocations.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .data import (
    SyntheticSpec,
    generate_dataset,
    images_array,
    load_dataset,
    prepare_cases,
    split_dataset,
    targets_array,
    write_dataset,
)
from .errors import MammoposError
from .geometry import ImageShape, LandmarkSet, Laterality, PixelSpacing, Point2, classify_positioning
from .imaging import PreprocessConfig
from .imgio import read_image, write_pgm
from .models import ModelConfig, ModelVariant, load_params, model_from_params, save_params
from .training import TrainConfig, train as run_training, write_history_csv
from .evaluation import evaluate_model, predict_image


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    text = p.read_bytes()
    if p.suffix == ".json":
        return json.loads(text)
    return tomllib.loads(text.decode())


def _pick(flag, config: dict, key: str, default):
    """Explicit flag > config file entry > built-in default."""
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


@click.group()
def main():
    """MLO positioning-quality toolkit."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", type=int, default=None)
@click.option("--size", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def synth(out_dir, count, size, seed, config_path):
    """Generate a synthetic annotated dataset."""
    section = _load_config(config_path).get("synth", {})
    spec = SyntheticSpec(
        image_size=_pick(size, section, "image_size", 160),
        seed=_pick(seed, section, "seed", 0),
    )
    n = _pick(count, section, "count", 200)
    cases = generate_dataset(spec, n)
    records = write_dataset(cases, out_dir)
    poor = sum(1 for c in cases if c.label and c.label.value == "poor")
    click.echo(f"wrote {len(records)} cases to {out_dir} ({poor} poor, {n - poor} good)")


def _preprocess_cfg(section: dict, size, margin, radius) -> PreprocessConfig:
    return PreprocessConfig(
        out_size=_pick(size, section, "out_size", 512),
        margin=_pick(margin, section, "margin", 10),
        opening_radius=_pick(radius, section, "opening_radius", 5),
    )


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--size", type=int, default=None)
@click.option("--margin", type=int, default=None)
@click.option("--radius", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def preprocess(data_dir, out_dir, size, margin, radius, config_path):
    """Preprocess a dataset to model-ready square images."""
    cfg = _preprocess_cfg(_load_config(config_path).get("preprocess", {}), size, margin, radius)
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    cases = load_dataset(data_dir)
    prepared = prepare_cases(cases, cfg)
    rows = []
    for case, prep in zip(cases, prepared):
        img_path = out / "images" / f"{case.case_id}.pgm"
        write_pgm(img_path, (prep.image * 65535.0).round().astype(np.uint16))
        lm = prep.landmarks
        rows.append(
            {
                "case_id": case.case_id,
                "image": f"images/{case.case_id}.pgm",
                "landmarks": {
                    "nipple": [lm.nipple.x, lm.nipple.y],
                    "pec1": [lm.pec1.x, lm.pec1.y],
                    "pec2": [lm.pec2.x, lm.pec2.y],
                },
                "transform": prep.log.to_dict(),
                "label": prep.label.value if prep.label else None,
            }
        )
    (out / "processed.json").write_text(json.dumps(rows, indent=1) + "\n")
    click.echo(f"preprocessed {len(rows)} cases to {out_dir}")


@main.command(name="train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--variant", type=click.Choice([v.value for v in ModelVariant]), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--base-channels", type=int, default=None)
@click.option("--size", type=int, default=None, help="preprocessed input size")
@click.option("--margin", type=int, default=None)
@click.option("--radius", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--resume", is_flag=True, help="continue from the checkpoint in --out")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def train_cmd(data_dir, out_dir, variant, epochs, batch_size, base_channels,
              size, margin, radius, seed, resume, config_path):
    """Train a landmark model on an annotated dataset."""
    config = _load_config(config_path)
    pp = _preprocess_cfg(config.get("preprocess", {}), size, margin, radius)
    msec = config.get("model", {})
    model_cfg = ModelConfig(
        variant=ModelVariant(_pick(variant, msec, "variant", ModelVariant.COORD_ATT_UNET.value)),
        input_size=pp.out_size,
        base_channels=_pick(base_channels, msec, "base_channels", 64),
    )
    tsec = config.get("train", {})
    train_cfg = TrainConfig(
        epochs=_pick(epochs, tsec, "epochs", 300),
        batch_size=_pick(batch_size, tsec, "batch_size", 8),
        seed=_pick(seed, tsec, "seed", 0),
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = load_dataset(data_dir)
    prepared = prepare_cases(cases, pp)
    by_id = {p.case_id: p for p in prepared}
    records = [c.to_record(Path("unused")) for c in cases]
    split = split_dataset(records, seed=train_cfg.seed)
    (out / "split.json").write_text(json.dumps(split.to_dict(), indent=1) + "\n")
    tr = [by_id[i] for i in split.train]
    va = [by_id[i] for i in split.val]
    click.echo(f"training {model_cfg.variant.value} on {len(tr)} cases, validating on {len(va)}")

    result = run_training(
        model_cfg,
        images_array(tr), targets_array(tr),
        images_array(va), targets_array(va),
        train_cfg,
        checkpoint_path=out / "checkpoint.pt",
        resume=resume,
        log_fn=lambda s: click.echo(
            f"epoch {s.epoch:3d}  train {s.train_loss:9.4f}  val {s.val_loss:9.4f}  lr {s.lr:.2e}"
        ),
    )
    save_params(out / "model.params", result.params, model_cfg)
    (out / "model.json").write_text(json.dumps(model_cfg.to_dict(), indent=1) + "\n")
    write_history_csv(out / "history.csv", result.history)
    click.echo(
        f"best epoch {result.best_epoch} (val loss {result.best_val_loss:.4f}); "
        f"model written to {out / 'model.params'}"
    )


def _load_model(model_path: str):
    path = Path(model_path)
    cfg = ModelConfig.from_dict(json.loads(path.with_suffix(".json").read_text()))
    return cfg, load_params(path, cfg)


@main.command(name="eval")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split-file", type=click.Path(exists=True), default=None,
              help="split.json from training; defaults to a fresh split")
@click.option("--split", "which", type=click.Choice(["train", "val", "test", "all"]), default="test")
@click.option("--seed", type=int, default=0, help="split seed when no --split-file")
@click.option("--size", type=int, default=None)
@click.option("--margin", type=int, default=None)
@click.option("--radius", type=int, default=None)
@click.option("--out", "report_path", type=click.Path(), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def eval_cmd(data_dir, model_path, split_file, which, seed, size, margin, radius,
             report_path, csv_path, config_path):
    """Evaluate a trained model and print the report tables."""
    from .data import DatasetSplit

    model_cfg, store = _load_model(model_path)
    pp = _preprocess_cfg(_load_config(config_path).get("preprocess", {}), size, margin, radius)
    pp = replace(pp, out_size=model_cfg.input_size)
    cases = load_dataset(data_dir)
    prepared = prepare_cases(cases, pp)
    if which != "all":
        if split_file is not None:
            split = DatasetSplit.from_dict(json.loads(Path(split_file).read_text()))
        else:
            records = [c.to_record(Path("unused")) for c in cases]
            split = split_dataset(records, seed=seed)
        wanted = set(getattr(split, which))
        prepared = [p for p in prepared if p.case_id in wanted]
    report = evaluate_model(model_cfg, store, prepared)
    if report_path:
        Path(report_path).write_text(report.to_json() + "\n")
    if csv_path:
        Path(csv_path).write_text(report.per_case_csv())
    click.echo(report.format_tables())


@main.command()
@click.argument("image_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--laterality", type=click.Choice(["L", "R"]), default="L")
@click.option("--spacing", default="1.0,1.0", help="sx,sy in mm per pixel")
@click.option("--radius", type=int, default=5)
def predict(image_path, model_path, laterality, spacing, radius):
    """Predict landmarks and verdict for one image."""
    model_cfg, store = _load_model(model_path)
    model = model_from_params(model_cfg, store)
    sx, sy = (float(v) for v in spacing.split(","))
    image = read_image(image_path)
    outcome = predict_image(
        model_cfg, model, image, PixelSpacing(sx, sy), Laterality(laterality),
        PreprocessConfig(out_size=model_cfg.input_size, opening_radius=radius),
    )
    lm, v = outcome.landmarks, outcome.verdict
    click.echo(json.dumps(
        {
            "landmarks": {
                "nipple": [lm.nipple.x, lm.nipple.y],
                "pec1": [lm.pec1.x, lm.pec1.y],
                "pec2": [lm.pec2.x, lm.pec2.y],
            },
            "verdict": {
                "foot": [v.foot.x, v.foot.y],
                "in_bounds": v.in_bounds,
                "label": v.label.value,
                "angle_deg": v.angle_deg,
            },
        },
        indent=1,
    ))


def _parse_point(text: str) -> Point2:
    x, y = (float(v) for v in text.split(","))
    return Point2(x, y)


@main.command()
@click.option("--nipple", required=True, help="x,y")
@click.option("--pec1", required=True, help="x,y")
@click.option("--pec2", required=True, help="x,y")
@click.option("--width", type=int, required=True)
@click.option("--height", type=int, required=True)
@click.option("--laterality", type=click.Choice(["L", "R"]), default="L")
def verdict(nipple, pec1, pec2, width, height, laterality):
    """Positioning verdict for explicit landmark coordinates."""
    lm = LandmarkSet.canonical(_parse_point(nipple), _parse_point(pec1), _parse_point(pec2))
    v = classify_positioning(lm, ImageShape(width, height), Laterality(laterality))
    click.echo(json.dumps(
        {
            "foot": [v.foot.x, v.foot.y],
            "in_bounds": v.in_bounds,
            "label": v.label.value,
            "angle_deg": v.angle_deg,
        },
        indent=1,
    ))


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--store", "store_path", type=click.Path(), default=None)
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False), default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--radius", type=int, default=5)
def serve(data_dir, model_path, store_path, ui_dir, host, port, radius):
    """Run the review service."""
    import uvicorn

    from .service import create_app

    app = create_app(
        data_dir=data_dir,
        model_path=model_path,
        store_path=store_path,
        ui_dir=ui_dir,
        opening_radius=radius,
    )
    uvicorn.run(app, host=host, port=port)


def cli_main():
    try:
        main(standalone_mode=True)
    except MammoposError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    cli_main()
