"""Encoder-decoder segmentation network.

A 4-level U-Net: each encoder block is two 3x3 convolutions with ReLU and
dropout followed by 2x2 max pooling; each decoder block upsamples with a 3x3
transpose convolution, concatenates the same-resolution encoder features and
applies two 3x3 convolutions with ReLU. A 1x1 convolution with sigmoid maps
to the single-channel probability of the region of interest. The interactive
variant takes 3 input channels (image + FG guidance + BG guidance) instead
of 1.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .errors import ChannelMismatch, InvalidSpec

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class NetworkSpec:
    levels: int = 4
    base_channels: int = 32
    dropout_rate: float = 0.1
    in_channels: int = 3
    out_channels: int = 1

    def __post_init__(self):
        if self.levels < 1:
            raise InvalidSpec("levels must be >= 1")
        if self.base_channels < 1:
            raise InvalidSpec("base_channels must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise InvalidSpec("dropout_rate must be in [0, 1)")
        if self.in_channels not in (1, 3):
            raise InvalidSpec("in_channels must be 1 (plain) or 3 (interactive)")

    @property
    def stride(self) -> int:
        return 2**self.levels

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(**d)


class _EncoderBlock(nn.Module):
    def __init__(self, cin, cout, dropout):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout),
        )

    def forward(self, x):
        return self.body(x)


class _DecoderBlock(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.up = nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=1,
                                     output_padding=1)
        self.body = nn.Sequential(
            nn.Conv2d(2 * cout, cout, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x, skip):
        x = self.up(x)
        return self.body(torch.cat([skip, x], dim=1))


class SegmentationUNet(nn.Module):
    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        widths = [spec.base_channels * 2**i for i in range(spec.levels)]
        self.encoders = nn.ModuleList()
        cin = spec.in_channels
        for w in widths:
            self.encoders.append(_EncoderBlock(cin, w, spec.dropout_rate))
            cin = w
        self.pool = nn.MaxPool2d(2)
        bottleneck_w = widths[-1] * 2
        self.bottleneck = _EncoderBlock(widths[-1], bottleneck_w,
                                        spec.dropout_rate)
        self.decoders = nn.ModuleList()
        cin = bottleneck_w
        for w in reversed(widths):
            self.decoders.append(_DecoderBlock(cin, w))
            cin = w
        self.head = nn.Conv2d(widths[0], spec.out_channels, 1)

    def forward(self, x):
        if x.shape[1] != self.spec.in_channels:
            raise ChannelMismatch(
                f"expected {self.spec.in_channels} input channels, "
                f"got {x.shape[1]}")
        h, w = x.shape[-2], x.shape[-1]
        if h % self.spec.stride or w % self.spec.stride:
            raise InvalidSpec(
                f"spatial dims {h}x{w} not divisible by {self.spec.stride}")
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for dec, skip in zip(self.decoders, reversed(skips)):
            x = dec(x, skip)
        return torch.sigmoid(self.head(x))


def build_network(spec: NetworkSpec, seed: int | None = None) -> SegmentationUNet:
    """Construct the network, optionally with seeded weight initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    return SegmentationUNet(spec)


def predict(model: SegmentationUNet, batch: np.ndarray) -> np.ndarray:
    """Eval-mode forward pass on a (B, C, H, W) numpy batch.

    Deterministic (dropout disabled); returns probabilities in (0, 1).
    """
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            t = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
            out = model(t)
        return out.numpy()
    finally:
        if was_training:
            model.train()


def predict_slice(model: SegmentationUNet, channels: list[np.ndarray]) -> np.ndarray:
    """Convenience: stack single-slice channels and return the 2D probability map."""
    batch = np.stack(channels)[None, ...]
    return predict(model, batch)[0, 0]


def save_checkpoint(path, model: SegmentationUNet, training_meta: dict | None = None) -> None:
    """Write the single-file checkpoint container.

    The container is an npz archive holding one float array per named
    parameter/buffer plus a ``__meta__`` JSON entry with the format version,
    the network spec and the training metadata.
    """
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "training_meta": training_meta or {},
    }
    arrays = {name: t.detach().cpu().numpy()
              for name, t in model.state_dict().items()}
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[SegmentationUNet, dict]:
    """Rebuild a model from a checkpoint; inference is bit-identical to the
    saved model. Returns (model, training_meta)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise InvalidSpec(
                f"unsupported checkpoint version {meta.get('format_version')}")
        spec = NetworkSpec.from_dict(meta["spec"])
        model = SegmentationUNet(spec)
        state = {name: torch.from_numpy(data[name])
                 for name in data.files if name != "__meta__"}
    model.load_state_dict(state)
    model.eval()
    return model, meta["training_meta"]


def checkpoint_meta(path) -> dict:
    """Read a checkpoint's metadata block without rebuilding the model."""
    with np.load(path) as data:
        return json.loads(bytes(data["__meta__"]).decode())


def checkpoint_digest(path) -> str:
    """Content hash of a checkpoint: parameter bytes + metadata, independent
    of archive timestamps."""
    h = hashlib.sha256()
    with np.load(path) as data:
        for name in sorted(data.files):
            h.update(name.encode())
            h.update(np.ascontiguousarray(data[name]).tobytes())
    return h.hexdigest()


def parameter_count(model: SegmentationUNet) -> int:
    return sum(p.numel() for p in model.parameters())
