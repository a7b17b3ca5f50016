"""Training and inference for the segmentation network.

Training is a deterministic function of the data bytes and the two seeds
(network init, shuffling/dropout): epochs shuffle with a seeded
Fisher-Yates, batches keep the trailing partial batch, the batch loss is
the mean of per-sample binary cross-entropies, and parameters follow the
bias-corrected Adam update.  Checkpoints round-trip bitwise.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dataio.formats import atomic_write_bytes
from .errors import (
    BadMagic,
    ConfigMismatch,
    DimMismatch,
    EmptyDataset,
    ShapeMismatch,
    StateShapeMismatch,
    TruncatedData,
)
from .rng import SplitMix64, derive_seed
from .samplekit import Sample, crop_from_reference
from .tensornet import ParamStore, Tensor, UNetConfig, backward, build_unet, no_grad
from .tensornet.tensor import clamp, log, mean

CHECKPOINT_MAGIC = b"UNCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 10
    epochs: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must be in (0, 0.5)")


def bce_loss(pred: Tensor, target: np.ndarray, clamp_eps: float = 1e-7) -> Tensor:
    """Mean binary cross-entropy; predictions are clamped away from 0/1."""
    t = np.asarray(target, dtype=pred.data.dtype)
    if t.shape != pred.data.shape:
        raise ShapeMismatch(f"prediction {pred.data.shape} vs target {t.shape}")
    p = clamp(pred, clamp_eps, 1.0 - clamp_eps)
    ll = log(p) * t + log(p * -1.0 + 1.0) * (1.0 - t)
    return mean(ll) * -1.0


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: ParamStore) -> "AdamState":
        state = cls()
        for name, tensor in params.items():
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        return state


def adam_step(params: ParamStore, state: AdamState, cfg: TrainConfig) -> None:
    """Bias-corrected Adam update from the gradients currently in `params`.

    Gradients are left untouched; the caller zeroes them between steps."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, tensor in params.items():
        g = tensor.grad
        if g is None:
            g = np.zeros_like(tensor.data)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None or m.shape != tensor.data.shape:
            raise StateShapeMismatch(f"optimizer state missing or wrong shape for {name}")
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        tensor.data = tensor.data - cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


@dataclass(frozen=True)
class Checkpoint:
    config: UNetConfig
    values: dict[str, np.ndarray]


def train(
    data: Sequence[tuple[Sample, np.ndarray]],
    unet_cfg: UNetConfig,
    train_cfg: TrainConfig,
    log_fn: Optional[Callable[[int, float], None]] = None,
) -> Checkpoint:
    """Train on (sample, target) pairs; targets are {0,1} masks padded to
    the same reference frame as the samples.  Calls log_fn(epoch, mean_loss)
    after each epoch and returns the final checkpoint."""
    if len(data) == 0:
        raise EmptyDataset("no training samples")
    ref_shape = data[0][0].values.shape
    for i, (sample, target) in enumerate(data):
        if sample.values.shape != ref_shape:
            raise DimMismatch(
                f"sample {i} has dims {sample.values.shape}, expected {ref_shape}"
            )
        if target.shape != ref_shape[1:]:
            raise DimMismatch(
                f"target {i} has dims {target.shape}, expected {ref_shape[1:]}"
            )

    net, params = build_unet(unet_cfg)
    state = AdamState.for_params(params)
    n = len(data)
    for epoch in range(train_cfg.epochs):
        order = list(range(n))
        SplitMix64(derive_seed(train_cfg.seed, epoch)).shuffle(order)
        epoch_losses = []
        for batch_no, start in enumerate(range(0, n, train_cfg.batch_size)):
            batch = order[start : start + train_cfg.batch_size]
            params.zero_grad()
            for k, idx in enumerate(batch):
                sample, target = data[idx]
                out = net.forward(
                    sample.values,
                    training=True,
                    seed=derive_seed(train_cfg.seed, epoch, batch_no, k),
                )
                loss = bce_loss(out, target[None, :, :], train_cfg.clamp_eps)
                backward(loss, grad=1.0 / len(batch))
                epoch_losses.append(loss.item())
            adam_step(params, state, train_cfg)
        if log_fn is not None:
            log_fn(epoch, float(np.mean(epoch_losses)))
    return Checkpoint(unet_cfg, params.values())


def predict(
    cp: Checkpoint,
    sample: Sample,
    threshold: float = 0.5,
    roi_clamp: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Probability map and binary mask, both in the scan's original dims.

    The mask thresholds at `threshold` (>= rule) and, when roi_clamp is on,
    is intersected with the sample's ROI channel support."""
    div = 2**cp.config.depth
    ch, rows, cols = sample.values.shape
    if ch != cp.config.input_channels or rows % div or cols % div:
        raise DimMismatch(
            f"sample dims {sample.values.shape} incompatible with checkpoint "
            f"(needs {cp.config.input_channels} channels, dims divisible by {div})"
        )
    net, params = build_unet(cp.config)
    params.set_values(cp.values)
    with no_grad():
        out = net.forward(sample.values, training=False)
    prob = crop_from_reference(out.data[0], sample.offset, sample.orig_dims)
    mask = (prob >= threshold).astype(np.uint8)
    if roi_clamp:
        roi = crop_from_reference(sample.roi_channel, sample.offset, sample.orig_dims)
        mask &= roi != 0
    return prob.astype(np.float32), mask


def _config_lines(cfg: UNetConfig) -> str:
    return (
        f"input_channels={cfg.input_channels}\n"
        f"base_channels={cfg.base_channels}\n"
        f"depth={cfg.depth}\n"
        f"bottleneck_channels={cfg.bottleneck_channels}\n"
        f"aspp_rates={','.join(str(r) for r in cfg.aspp_rates)}\n"
        f"dropout_per_level={','.join(repr(p) for p in cfg.dropout_per_level)}\n"
        f"seed={cfg.seed}\n"
    )


def _parse_config_lines(text: str) -> UNetConfig:
    fields: dict[str, str] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigMismatch(f"malformed config line: {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        return UNetConfig(
            input_channels=int(fields["input_channels"]),
            base_channels=int(fields["base_channels"]),
            depth=int(fields["depth"]),
            bottleneck_channels=int(fields["bottleneck_channels"]),
            aspp_rates=tuple(int(r) for r in fields["aspp_rates"].split(",")),
            dropout_per_level=tuple(
                float(p) for p in fields["dropout_per_level"].split(",")
            ),
            seed=int(fields["seed"]),
        )
    except (KeyError, ValueError) as e:
        raise ConfigMismatch(f"bad checkpoint config: {e}") from e


def save_checkpoint(cp: Checkpoint, path) -> None:
    """Binary layout: magic, version, config text, then tensors in
    lexicographic name order as (name, rank, dims, float32 values)."""
    config = _config_lines(cp.config).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<I", len(config)),
        config,
        struct.pack("<I", len(cp.values)),
    ]
    for name in sorted(cp.values):
        arr = np.asarray(cp.values[name], dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    atomic_write_bytes(path, b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedData(f"{self.path}: truncated at byte {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file")
    r = _Reader(data, path)
    r.take(4)
    (version,) = struct.unpack("<I", r.take(4))
    if version != CHECKPOINT_VERSION:
        raise ConfigMismatch(f"{path}: checkpoint version {version} unsupported")
    (config_len,) = struct.unpack("<I", r.take(4))
    cfg = _parse_config_lines(r.take(config_len).decode("utf-8"))
    cfg.validate()
    (count,) = struct.unpack("<I", r.take(4))
    values: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2))
        name = r.take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", r.take(1))
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        values[name] = (
            np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
        )
    return Checkpoint(cfg, values)
