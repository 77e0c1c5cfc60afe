"""Shared fixtures.

Trained desk-scale models are expensive (tens of seconds each), so they are
cached on disk under .cache/trained keyed by a digest of everything that
influences the result (model config, train config, dataset recipe). Delete
.cache/ to force honest retraining.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, replace
from pathlib import Path

import pytest

from mammopos.data import (
    SyntheticSpec,
    generate_dataset,
    images_array,
    prepare_cases,
    targets_array,
)
from mammopos.imaging import PreprocessConfig
from mammopos.models import ModelConfig, ModelVariant, load_params, save_params
from mammopos.training import TrainConfig, train

CACHE_DIR = Path(__file__).resolve().parent.parent / ".cache" / "trained"

# Desk-scale recipe: 300 synthetic cases at 160 px native, preprocessed to
# 64 px (opening radius 2: native structures here are thinner than on real
# mammograms), split 200/50/50 on even indices so exam pairs stay together.
DESK_SPEC = SyntheticSpec(image_size=160, seed=11)
DESK_PREP = PreprocessConfig(out_size=64, margin=10, opening_radius=2)
DESK_COUNTS = (200, 50, 50)


def desk_model_config(variant: ModelVariant) -> ModelConfig:
    return ModelConfig(variant=variant, input_size=DESK_PREP.out_size, base_channels=8)


@pytest.fixture(scope="session")
def desk_splits():
    cases = generate_dataset(DESK_SPEC, sum(DESK_COUNTS))
    prepared = prepare_cases(cases, DESK_PREP)
    n_train, n_val, _ = DESK_COUNTS
    return (
        prepared[:n_train],
        prepared[n_train : n_train + n_val],
        prepared[n_train + n_val :],
    )


@pytest.fixture(scope="session")
def desk_trainer(desk_splits):
    """Returns run(variant, seed) -> (params, meta dict with train_seconds)."""
    tr, va, _ = desk_splits
    tr_im, tr_t = images_array(tr), targets_array(tr)
    va_im, va_t = images_array(va), targets_array(va)

    def run(variant: ModelVariant, seed: int):
        model_cfg = desk_model_config(variant)
        cfg = replace(TrainConfig.toy(), seed=seed)
        key_src = {
            "model": model_cfg.to_dict(),
            "train": asdict(cfg),
            "data": {
                "seed": DESK_SPEC.seed,
                "size": DESK_SPEC.image_size,
                "counts": list(DESK_COUNTS),
                "prep": [DESK_PREP.out_size, DESK_PREP.margin, DESK_PREP.opening_radius],
            },
        }
        key = hashlib.sha256(json.dumps(key_src, sort_keys=True).encode()).hexdigest()[:16]
        path = CACHE_DIR / f"{variant.value}-seed{seed}-{key}.params"
        meta_path = path.with_suffix(".meta.json")
        if path.exists() and meta_path.exists():
            try:
                return load_params(path, model_cfg), json.loads(meta_path.read_text())
            except Exception:
                path.unlink()

        t0 = time.monotonic()
        result = train(model_cfg, tr_im, tr_t, va_im, va_t, cfg)
        seconds = time.monotonic() - t0
        CACHE_DIR.mkdir(parents=True, exist_ok=True)
        save_params(path, result.params, model_cfg)
        meta = {
            "train_seconds": seconds,
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
        }
        meta_path.write_text(json.dumps(meta))
        return result.params, meta

    return run


@pytest.fixture(scope="session")
def eval_pool():
    """500 prepared cases for statistics-flavored evaluation tests."""
    cases = generate_dataset(SyntheticSpec(image_size=160, seed=21), 500)
    return prepare_cases(cases, DESK_PREP)
