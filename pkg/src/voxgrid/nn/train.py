"""Training loop, history, and the checkpoint file format.

The loop is deterministic for a fixed seed: one generator drawn from the
seed drives the per-epoch shuffles and augmentation rotations, batches
are assembled in shuffle order, and the model/optimizer see exactly the
same arithmetic on every rerun. The returned parameters are the best
checkpoint by validation loss.

Checkpoint layout (little-endian): magic ``VOXC``, u32 version 1, u32
JSON header length, the UTF-8 JSON header (preset, channels, width,
label statistics, anything the caller adds), u64 parameter count, f32
parameter vector, u8 has-adam flag, and when set: u64 step, 4 x f64
(lr, beta1, beta2, eps), f32 first moments, f32 second moments.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..errors import ArgumentError, FormatError, TrainingError
from ..grid import Rotation, random_rotation
from .model import ModelConfig, Params, build_model
from .optim import AdamState, adam_step, mse_loss

__all__ = [
    "TrainConfig",
    "TrainSample",
    "TrainResult",
    "train",
    "predict_samples",
    "history_csv",
    "save_checkpoint",
    "load_checkpoint",
]

_CKPT_MAGIC = b"VOXC"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    patience: int | None = None
    seed: int = 0
    augment: bool = False
    lr: float = 1e-5
    min_train_loss: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience is not None and self.patience < 1:
            raise ArgumentError(f"patience must be >= 1 when set, got {self.patience}")


@dataclass(frozen=True)
class TrainSample:
    """One training example: grids come from ``realize`` so augmentation
    can re-derive them under a fresh rotation every epoch."""

    id: str
    label: float
    realize: Callable[[Rotation | None], list[np.ndarray]]


@dataclass
class TrainResult:
    params: Params
    history: list[tuple[int, float, float]]
    best_epoch: int
    best_val_loss: float
    adam: AdamState | None = None
    stopped_early: bool = False


def _batches(order: np.ndarray, batch_size: int):
    for lo in range(0, order.size, batch_size):
        yield order[lo:lo + batch_size]


def _assemble(samples: Sequence[TrainSample], idx: np.ndarray,
              rotations: list[Rotation | None]):
    grids = [samples[i].realize(rotations[i]) for i in idx]
    n_inputs = len(grids[0])
    inputs = [np.stack([g[k] for g in grids]).astype(np.float32) for k in range(n_inputs)]
    targets = np.array([samples[i].label for i in idx], dtype=np.float32)
    return inputs, targets


def _epoch_loss(config: ModelConfig, params: Params, samples: Sequence[TrainSample],
                batch_size: int) -> float:
    """Mean squared error over a sample set, without augmentation."""
    total = 0.0
    none_rot: list[Rotation | None] = [None] * len(samples)
    for idx in _batches(np.arange(len(samples)), batch_size):
        inputs, targets = _assemble(samples, idx, none_rot)
        pred = config.predict(inputs, params)
        loss, _ = mse_loss(pred, targets)
        total += loss * idx.size
    return total / len(samples)


def train(config: ModelConfig, params: Params, train_samples: Sequence[TrainSample],
          val_samples: Sequence[TrainSample], cfg: TrainConfig) -> TrainResult:
    """Optimize ``params`` on the training stream; return the best-val state."""
    if not train_samples or not val_samples:
        raise ArgumentError("train and validation streams must both be non-empty")

    rng = np.random.default_rng(cfg.seed)
    adam = AdamState.for_params(params.size, lr=cfg.lr)
    grads = params.zeros_like()

    # without augmentation the voxel grids never change; realize once
    if not cfg.augment:
        cached = [s.realize(None) for s in train_samples]
        train_samples = [
            TrainSample(s.id, s.label, (lambda g: (lambda rot: g))(g))
            for s, g in zip(train_samples, cached)
        ]

    history: list[tuple[int, float, float]] = []
    best_val = np.inf
    best_epoch = 0
    best_params = params.copy()
    best_adam = adam.copy()
    bad_epochs = 0
    stopped = False

    n = len(train_samples)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        rotations: list[Rotation | None] = [
            random_rotation(rng) if cfg.augment else None for _ in range(n)
        ]
        running = 0.0
        for idx in _batches(order, cfg.batch_size):
            inputs, targets = _assemble(train_samples, idx, rotations)
            pred, cache = config.forward(inputs, params)
            loss, dpred = mse_loss(pred, targets)
            running += loss * idx.size
            grads.flat[...] = 0.0
            config.backward(dpred, cache, params, grads)
            adam_step(params.flat, grads.flat, adam)
        train_loss = running / n
        val_loss = _epoch_loss(config, params, val_samples, cfg.batch_size)
        if not np.isfinite(train_loss) or not np.isfinite(val_loss):
            raise TrainingError("loss became non-finite", epoch=epoch)
        history.append((epoch, train_loss, val_loss))

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = params.copy()
            best_adam = adam.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if cfg.patience is not None and bad_epochs >= cfg.patience:
                stopped = True
                break
        if cfg.min_train_loss is not None and train_loss < cfg.min_train_loss:
            break

    return TrainResult(best_params, history, best_epoch, best_val, best_adam, stopped)


def predict_samples(config: ModelConfig, params: Params,
                    samples: Sequence[TrainSample], batch_size: int = 32) -> np.ndarray:
    """Model predictions for a sample sequence, in order."""
    preds = []
    none_rot: list[Rotation | None] = [None] * len(samples)
    for idx in _batches(np.arange(len(samples)), batch_size):
        inputs, _ = _assemble(samples, idx, none_rot)
        preds.append(config.predict(inputs, params))
    return np.concatenate(preds)


def history_csv(history: list[tuple[int, float, float]]) -> str:
    lines = ["epoch,train_loss,val_loss"]
    for epoch, train_loss, val_loss in history:
        lines.append(f"{epoch},{train_loss!r},{val_loss!r}")
    return "\n".join(lines) + "\n"


def save_checkpoint(path, config: ModelConfig, params: Params,
                    adam: AdamState | None = None, extra: dict | None = None) -> None:
    header = {
        "preset": config.preset,
        "in_channels": list(config.in_channels),
        "n_ch": config.n_ch,
        "grid_dim": config.meta.get("grid_dim"),
        "n_parameters": params.size,
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += _CKPT_MAGIC
    out += struct.pack("<I", _CKPT_VERSION)
    out += struct.pack("<I", len(blob))
    out += blob
    out += struct.pack("<Q", params.size)
    out += params.flat.astype("<f4").tobytes()
    if adam is None:
        out += struct.pack("<B", 0)
    else:
        out += struct.pack("<B", 1)
        out += struct.pack("<Q", adam.step)
        out += struct.pack("<dddd", adam.lr, adam.beta1, adam.beta2, adam.eps)
        out += adam.m.astype("<f4").tobytes()
        out += adam.v.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> tuple[ModelConfig, Params, AdamState | None, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != _CKPT_MAGIC:
        raise FormatError(f"not a checkpoint file {path}: bad magic {raw[:4]!r}", offset=0)
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    (hlen,) = struct.unpack_from("<I", raw, 8)
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    off = 12 + hlen
    (count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    flat = np.frombuffer(raw, dtype="<f4", count=count, offset=off).copy()
    off += 4 * count

    config, params = build_model(
        header["preset"],
        in_channels=tuple(header["in_channels"]),
        n_ch=header.get("n_ch"),
        grid_dim=header.get("grid_dim"),
    )
    if params.size != count:
        raise FormatError(
            f"checkpoint has {count} parameters but preset "
            f"{header['preset']!r} needs {params.size}"
        )
    params.flat[...] = flat

    (has_adam,) = struct.unpack_from("<B", raw, off)
    off += 1
    adam = None
    if has_adam:
        (step,) = struct.unpack_from("<Q", raw, off)
        off += 8
        lr, b1, b2, eps = struct.unpack_from("<dddd", raw, off)
        off += 32
        m = np.frombuffer(raw, dtype="<f4", count=count, offset=off).copy()
        off += 4 * count
        v = np.frombuffer(raw, dtype="<f4", count=count, offset=off).copy()
        adam = AdamState(m, v, step, lr, b1, b2, eps)
    return config, params, adam, header
