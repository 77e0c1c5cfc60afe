"""Landmark regression networks.

One trunk, three variants: a plain UNet, the same UNet with attention-gated
skip connections, and additionally coordinate channels at the stem. The
decoder's finest feature map feeds a small head (1x1 conv, fixed-size average
pool, fully connected) that regresses the six landmark coordinates in input
pixels.

Parameters live in a ParamStore, an ordered name->float32-tensor map with a
binary file format tied to the producing ModelConfig by digest.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigMismatch, IoError, NonFinite, ShapeMismatch

ParamStore = "OrderedDict[str, torch.Tensor]"


class ModelVariant(str, Enum):
    UNET = "unet"
    ATTENTION_UNET = "attention_unet"
    COORD_ATT_UNET = "coordatt_unet"


class AttentionForm(str, Enum):
    """Two shapes of the additive attention gate.

    PER_CHANNEL: 1x1 convs with bias and no normalisation, gate computed at
    the skip's full channel width, psi = sigmoid(relu(Wg*g + Wx*x)) applied
    channelwise. Because relu clamps at zero, psi lives in [0.5, 1): the gate
    attenuates by at most half. With all-zero parameters the gate returns
    exactly 0.5 * x, which makes it a convenient characterisation point.

    SINGLE_CHANNEL: the common formulation with a narrowed intermediate
    width, batch-norm after each projection, and a one-channel psi map
    broadcast over channels.
    """

    PER_CHANNEL = "per_channel"
    SINGLE_CHANNEL = "single_channel"


@dataclass(frozen=True)
class ModelConfig:
    variant: ModelVariant = ModelVariant.COORD_ATT_UNET
    input_size: int = 512
    in_channels: int = 1
    base_channels: int = 64
    depth: int = 4
    pool_size: int = 8
    n_landmarks: int = 3
    attention_form: AttentionForm = AttentionForm.PER_CHANNEL

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.input_size % (1 << self.depth) != 0:
            raise ValueError(
                f"input_size {self.input_size} must be divisible by 2^depth = {1 << self.depth}"
            )
        if self.base_channels < 1 or self.pool_size < 1 or self.n_landmarks < 1:
            raise ValueError("base_channels, pool_size and n_landmarks must be positive")
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")

    @property
    def out_features(self) -> int:
        return 2 * self.n_landmarks

    @classmethod
    def toy(cls, variant: ModelVariant = ModelVariant.COORD_ATT_UNET, **kw) -> "ModelConfig":
        """Desk-scale config: 64x64 inputs, 8 base channels."""
        kw.setdefault("input_size", 64)
        kw.setdefault("base_channels", 8)
        return cls(variant=variant, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["attention_form"] = self.attention_form.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["variant"] = ModelVariant(d["variant"])
        d["attention_form"] = AttentionForm(d["attention_form"])
        return cls(**d)

    def digest(self) -> bytes:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).digest()


def add_coord_channels(x: torch.Tensor) -> torch.Tensor:
    """Append two channels holding each pixel's normalized x and y position.

    Values run 0 at the first row/column to 1 at the last, uniformly spaced:
    column j holds j/(W-1). Degenerate single-pixel axes get 0.
    """
    if x.ndim != 4:
        raise ShapeMismatch(f"expected a (B, C, H, W) tensor, got shape {tuple(x.shape)}")
    b, _, h, w = x.shape
    xs = torch.arange(w, dtype=x.dtype, device=x.device) / max(w - 1, 1)
    ys = torch.arange(h, dtype=x.dtype, device=x.device) / max(h - 1, 1)
    xc = xs.view(1, 1, 1, w).expand(b, 1, h, w)
    yc = ys.view(1, 1, h, 1).expand(b, 1, h, w)
    return torch.cat([x, xc, yc], dim=1)


class CoordConv2d(nn.Module):
    """3x3 convolution whose input is first augmented with coordinate
    channels, letting the filter condition on absolute position."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels + 2, out_channels, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(add_coord_channels(x))


class ConvBlock(nn.Module):
    """(conv3x3 -> BN -> ReLU) twice, optionally with coordinate channels
    ahead of the first convolution."""

    def __init__(self, in_channels: int, out_channels: int, coord: bool = False):
        super().__init__()
        self.conv1 = CoordConv2d(in_channels, out_channels) if coord else nn.Conv2d(
            in_channels, out_channels, kernel_size=3, padding=1
        )
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.act(self.bn1(self.conv1(x)))
        return self.act(self.bn2(self.conv2(x)))


class AttentionGate(nn.Module):
    """Additive attention over a skip connection.

    Args:
        gate_channels: channels of the gating signal (decoder feature).
        skip_channels: channels of the skip feature being attenuated.
        form: PER_CHANNEL or SINGLE_CHANNEL, see AttentionForm.
    """

    def __init__(self, gate_channels: int, skip_channels: int, form: AttentionForm):
        super().__init__()
        self.form = form
        if form is AttentionForm.PER_CHANNEL:
            self.w_gate = nn.Conv2d(gate_channels, skip_channels, kernel_size=1)
            self.w_skip = nn.Conv2d(skip_channels, skip_channels, kernel_size=1)
        else:
            inter = max(skip_channels // 2, 1)
            self.w_gate = nn.Sequential(
                nn.Conv2d(gate_channels, inter, kernel_size=1), nn.BatchNorm2d(inter)
            )
            self.w_skip = nn.Sequential(
                nn.Conv2d(skip_channels, inter, kernel_size=1), nn.BatchNorm2d(inter)
            )
            self.psi = nn.Sequential(
                nn.Conv2d(inter, 1, kernel_size=1), nn.BatchNorm2d(1)
            )

    def forward(self, skip: torch.Tensor, gate: torch.Tensor) -> torch.Tensor:
        mixed = torch.relu(self.w_gate(gate) + self.w_skip(skip))
        if self.form is AttentionForm.PER_CHANNEL:
            return skip * torch.sigmoid(mixed)
        return skip * torch.sigmoid(self.psi(mixed))


class LandmarkNet(nn.Module):
    """UNet trunk plus pooled regression head; see module docstring.

    Outputs raw landmark coordinates, shape (B, 2 * n_landmarks), laid out
    [nipple_x, nipple_y, pec1_x, pec1_y, pec2_x, pec2_y] in input pixels.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        chans = [cfg.base_channels << i for i in range(cfg.depth + 1)]
        coord = cfg.variant is ModelVariant.COORD_ATT_UNET
        gated = cfg.variant in (ModelVariant.ATTENTION_UNET, ModelVariant.COORD_ATT_UNET)

        self.encoders = nn.ModuleList()
        cin = cfg.in_channels
        for i in range(cfg.depth):
            self.encoders.append(ConvBlock(cin, chans[i], coord=coord and i == 0))
            cin = chans[i]
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = ConvBlock(chans[cfg.depth - 1], chans[cfg.depth])

        self.ups = nn.ModuleList()
        self.gates = nn.ModuleList() if gated else None
        self.decoders = nn.ModuleList()
        for i in reversed(range(cfg.depth)):
            self.ups.append(
                nn.Sequential(
                    nn.Upsample(scale_factor=2, mode="nearest"),
                    nn.Conv2d(chans[i + 1], chans[i], kernel_size=3, padding=1),
                    nn.BatchNorm2d(chans[i]),
                    nn.ReLU(inplace=True),
                )
            )
            if gated:
                self.gates.append(AttentionGate(chans[i], chans[i], cfg.attention_form))
            self.decoders.append(ConvBlock(2 * chans[i], chans[i]))

        self.head_conv = nn.Conv2d(chans[0], cfg.out_features, kernel_size=1)
        self.head_pool = nn.AdaptiveAvgPool2d(cfg.pool_size)
        self.head_fc = nn.Linear(cfg.out_features * cfg.pool_size**2, cfg.out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        expected = (cfg.in_channels, cfg.input_size, cfg.input_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeMismatch(
                f"expected input (B, {expected[0]}, {expected[1]}, {expected[2]}), "
                f"got {tuple(x.shape)}"
            )
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for i, (up, dec) in enumerate(zip(self.ups, self.decoders)):
            x = up(x)
            skip = skips[-(i + 1)]
            if self.gates is not None:
                skip = self.gates[i](skip, x)
            x = dec(torch.cat([skip, x], dim=1))
        out = self.head_fc(torch.flatten(self.head_pool(self.head_conv(x)), 1))
        if not torch.isfinite(out).all():
            raise NonFinite("network output contains NaN or Inf")
        return out


def build_model(cfg: ModelConfig) -> LandmarkNet:
    return LandmarkNet(cfg)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


_COUNTER_SUFFIX = "num_batches_tracked"


def param_store(model: nn.Module) -> "OrderedDict[str, torch.Tensor]":
    """Snapshot the model's float parameters and buffers by name.

    Batch-norm step counters are excluded: they are integer bookkeeping with
    no effect under momentum-based statistics, and the store holds float32
    tensors only.
    """
    return OrderedDict(
        (k, v.detach().clone())
        for k, v in model.state_dict().items()
        if not k.endswith(_COUNTER_SUFFIX)
    )


def load_store(model: nn.Module, store: "OrderedDict[str, torch.Tensor]") -> nn.Module:
    result = model.load_state_dict(store, strict=False)
    if result.unexpected_keys:
        raise ConfigMismatch(f"store holds unknown tensors: {result.unexpected_keys[:3]}")
    real_missing = [k for k in result.missing_keys if not k.endswith(_COUNTER_SUFFIX)]
    if real_missing:
        raise ConfigMismatch(f"store is missing tensors: {real_missing[:3]}")
    return model


def init_params(cfg: ModelConfig, seed: int) -> "OrderedDict[str, torch.Tensor]":
    """Freshly initialised parameters, deterministic in (config, seed)."""
    torch.manual_seed(seed)
    model = build_model(cfg)
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_uniform_(m.weight, nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
    return param_store(model)


def model_from_params(cfg: ModelConfig, store: "OrderedDict[str, torch.Tensor]") -> LandmarkNet:
    return load_store(build_model(cfg), store)


_MAGIC = b"MPPARAM1"


def save_params(path: str | Path, store: "OrderedDict[str, torch.Tensor]", cfg: ModelConfig) -> None:
    """Write a ParamStore: magic, config digest, then per-tensor records of
    name, shape, and little-endian float32 data."""
    out = bytearray()
    out += _MAGIC
    out += cfg.digest()
    out += struct.pack("<I", len(store))
    for name, tensor in store.items():
        if tensor.dtype != torch.float32:
            raise IoError(f"store tensor '{name}' is {tensor.dtype}, expected float32")
        encoded = name.encode()
        out += struct.pack("<H", len(encoded))
        out += encoded
        shape = tuple(tensor.shape)
        out += struct.pack("<B", len(shape))
        out += struct.pack(f"<{len(shape)}I", *shape) if shape else b""
        out += tensor.detach().cpu().numpy().astype("<f4").tobytes()
    try:
        Path(path).write_bytes(bytes(out))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def load_params(path: str | Path, cfg: ModelConfig) -> "OrderedDict[str, torch.Tensor]":
    """Read a ParamStore written by save_params, verifying the config digest.

    Raises ConfigMismatch for a digest produced by a different config and
    IoError for a malformed or truncated file.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise IoError(f"{path}: truncated at byte {pos}")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(len(_MAGIC))) != _MAGIC:
        raise IoError(f"{path}: not a parameter store")
    if bytes(take(32)) != cfg.digest():
        raise ConfigMismatch(f"{path} was produced under a different model config")
    (count,) = struct.unpack("<I", take(4))
    store: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        numel = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(4 * numel), dtype="<f4").reshape(shape).copy()
        store[name] = torch.from_numpy(arr)
    if pos != len(view):
        raise IoError(f"{path}: {len(view) - pos} trailing bytes")
    return store
