"""Training loop for the landmark networks.

Everything optimizer-shaped is explicit here: a hand-rolled Adam step over
named parameter tensors, and a triangular cyclic learning-rate schedule
recomputed per iteration. Epoch shuffles are keyed by (seed, epoch), so a
resumed run replays the exact batch order without carrying RNG state.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import NonFinite
from .losses import LawWeights, WingParams, law_loss_torch
from .models import ModelConfig, build_model, init_params, load_store, param_store


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.

    init_lr is the optimizer's construction rate; the cyclic schedule takes
    over from the first iteration (its value at iteration 0 is base_lr). The
    cycle's half period is half_cycle_epochs worth of iterations.
    """

    epochs: int = 300
    batch_size: int = 8
    init_lr: float = 1e-4
    base_lr: float = 1e-5
    max_lr: float = 5e-4
    half_cycle_epochs: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    wing: WingParams = field(default_factory=WingParams)
    weights: LawWeights = field(default_factory=LawWeights)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.half_cycle_epochs < 1:
            raise ValueError("epochs, batch_size and half_cycle_epochs must be positive")
        if not 0 < self.base_lr <= self.max_lr:
            raise ValueError(f"need 0 < base_lr <= max_lr, got {self.base_lr}, {self.max_lr}")

    @classmethod
    def toy(cls, **kw) -> "TrainConfig":
        kw.setdefault("epochs", 30)
        return cls(**kw)


def cyclic_lr(iteration: int, step_size: int, base_lr: float, max_lr: float) -> float:
    """Triangular cyclic learning rate at a given iteration.

    Rises linearly from base_lr to max_lr over step_size iterations, falls
    back over the next step_size, and repeats. iteration 0 gives base_lr,
    iteration step_size gives max_lr.
    """
    if step_size < 1:
        raise ValueError("step_size must be positive")
    cycle = math.floor(1 + iteration / (2 * step_size))
    x = abs(iteration / step_size - 2 * cycle + 1)
    return base_lr + (max_lr - base_lr) * max(0.0, 1.0 - x)


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]
    step: int = 0


def init_adam(params: dict[str, torch.Tensor]) -> AdamState:
    return AdamState(
        m={k: torch.zeros_like(p) for k, p in params.items()},
        v={k: torch.zeros_like(p) for k, p in params.items()},
    )


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One Adam update, in place on the parameter tensors.

    Uses bias-corrected moments: p -= lr * m_hat / (sqrt(v_hat) + eps).
    Zero gradients leave parameters untouched (only the step counter moves).
    Raises NonFinite on NaN/Inf gradients.
    """
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not torch.isfinite(g).all():
            raise NonFinite(f"non-finite gradient for parameter '{name}'")
        m = state.m[name].mul_(beta1).add_(g, alpha=1.0 - beta1)
        v = state.v[name].mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
        with torch.no_grad():
            p.addcdiv_(m / bc1, (v / bc2).sqrt_().add_(eps), value=-lr)
    return state


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float  # schedule value at the epoch's last iteration


@dataclass
class TrainResult:
    params: "OrderedDict[str, torch.Tensor]"  # weights at the best val epoch
    history: list[EpochStats]
    best_epoch: int
    best_val_loss: float


def _loss_over(model, images: torch.Tensor, targets: torch.Tensor, cfg: TrainConfig) -> float:
    model.eval()
    total, n = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(images), 64):
            x = images[start : start + 64]
            y = targets[start : start + 64]
            loss = law_loss_torch(model(x), y, cfg.wing, cfg.weights)
            total += float(loss) * len(x)
            n += len(x)
    return total / n


def write_history_csv(path: str | Path, history: list[EpochStats]) -> None:
    lines = ["epoch,train_loss,val_loss,lr"]
    lines += [f"{h.epoch},{h.train_loss:.6f},{h.val_loss:.6f},{h.lr:.8f}" for h in history]
    Path(path).write_text("\n".join(lines) + "\n")


def _save_checkpoint(path: Path, model, adam: AdamState, epoch: int, iteration: int,
                     best_val: float, best_epoch: int, best_params, history) -> None:
    torch.save(
        {
            "model": model.state_dict(),
            "adam_m": adam.m,
            "adam_v": adam.v,
            "adam_step": adam.step,
            "next_epoch": epoch,
            "iteration": iteration,
            "best_val": best_val,
            "best_epoch": best_epoch,
            "best_params": best_params,
            "history": [asdict(h) for h in history],
        },
        path,
    )


def train(
    model_cfg: ModelConfig,
    train_images: np.ndarray,
    train_targets: np.ndarray,
    val_images: np.ndarray,
    val_targets: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    checkpoint_path: str | Path | None = None,
    resume: bool = False,
    log_fn=None,
) -> TrainResult:
    """Train a landmark network, keeping the weights with the lowest
    validation loss.

    Arrays are (N, 1, S, S) float32 images and (N, 6) float32 coordinate
    targets. Deterministic in (model_cfg, arrays, cfg): reruns reproduce
    losses bit for bit. With checkpoint_path set, progress is saved every
    epoch; resume=True continues an interrupted run and yields the same
    result as an uninterrupted one.
    """
    if len(train_images) == 0 or len(val_images) == 0:
        raise ValueError("train and val sets must be non-empty")
    xtr = torch.from_numpy(np.ascontiguousarray(train_images))
    ytr = torch.from_numpy(np.ascontiguousarray(train_targets))
    xva = torch.from_numpy(np.ascontiguousarray(val_images))
    yva = torch.from_numpy(np.ascontiguousarray(val_targets))

    model = build_model(model_cfg)
    n = len(xtr)
    iters_per_epoch = math.ceil(n / cfg.batch_size)
    step_size = cfg.half_cycle_epochs * iters_per_epoch

    history: list[EpochStats] = []
    best_val = math.inf
    best_epoch = -1
    best_params = None
    start_epoch = 0
    iteration = 0

    ckpt = Path(checkpoint_path) if checkpoint_path else None
    if resume and ckpt is not None and ckpt.exists():
        saved = torch.load(ckpt, weights_only=False)
        model.load_state_dict(saved["model"])
        params = dict(model.named_parameters())
        adam = AdamState(m=saved["adam_m"], v=saved["adam_v"], step=saved["adam_step"])
        start_epoch = saved["next_epoch"]
        iteration = saved["iteration"]
        best_val = saved["best_val"]
        best_epoch = saved["best_epoch"]
        best_params = saved["best_params"]
        history = [EpochStats(**h) for h in saved["history"]]
    else:
        load_store(model, init_params(model_cfg, cfg.seed))
        params = dict(model.named_parameters())
        adam = init_adam(params)

    lr = cfg.init_lr
    for epoch in range(start_epoch, cfg.epochs):
        model.train()
        perm = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        epoch_loss, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(perm[start : start + cfg.batch_size])
            out = model(xtr[idx])
            loss = law_loss_torch(out, ytr[idx], cfg.wing, cfg.weights)
            if not torch.isfinite(loss):
                raise NonFinite(f"training loss diverged at iteration {iteration}")
            model.zero_grad(set_to_none=True)
            loss.backward()
            lr = cyclic_lr(iteration, step_size, cfg.base_lr, cfg.max_lr)
            grads = {k: p.grad for k, p in params.items()}
            adam_step(params, grads, adam, lr, cfg.beta1, cfg.beta2, cfg.eps)
            iteration += 1
            epoch_loss += float(loss.detach()) * len(idx)
            seen += len(idx)

        val_loss = _loss_over(model, xva, yva, cfg)
        stats = EpochStats(epoch=epoch, train_loss=epoch_loss / seen, val_loss=val_loss, lr=lr)
        history.append(stats)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = param_store(model)
        if log_fn is not None:
            log_fn(stats)
        if ckpt is not None:
            _save_checkpoint(ckpt, model, adam, epoch + 1, iteration,
                             best_val, best_epoch, best_params, history)

    if best_params is None:
        best_params = param_store(model)
    return TrainResult(
        params=best_params, history=history, best_epoch=best_epoch, best_val_loss=best_val
    )
