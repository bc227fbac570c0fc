"""Model presets, parameter storage, and whole-model forward/backward.

Six presets cover the two tasks at three capacities. The complex models
run two identical encoders (ligand and pocket), sum their outputs
elementwise, and feed a trunk: a compact five-convolution head for the
tiny variant, or a four-stage U-Net-style encoder (channel widths
``n_ch * [1, 2, 4, 16]``, two residual blocks per stage, strided
downsampling, middle pair of residual blocks) followed by an MLP for the
larger ones. The molecule presets use the same four-stage encoder with
self-attention in the last two stages and an MLP head.

Parameters live in one flat float32 vector; each learnable array is a
reshaped view into it, so the optimizer and checkpoints treat the model
as a single vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError
from .layers import (
    AvgPool3d,
    Conv3d,
    Flatten,
    GlobalAvgPool,
    GroupNorm,
    LayerNorm,
    Linear,
    Module,
    ParamSpec,
    ReLU,
    ResidualBlock,
    SelfAttention3d,
    Sequential,
    SiLU,
    Sum2,
    Tanhshrink,
    bind_modules,
)

__all__ = ["Params", "ModelConfig", "PRESETS", "build_model", "preset_info"]

PRESETS = (
    "pdbbind_tiny", "pdbbind_small", "pdbbind_default",
    "qm9_tiny", "qm9_small", "qm9_default",
)

# Stage width multipliers of the encoder, applied cumulatively: the listed
# per-stage factors [1, 2, 2, 4] compose to widths n_ch * [1, 2, 4, 16].
STAGE_FACTORS = (1, 2, 2, 4)


class Params:
    """Flat parameter vector with named per-layer views."""

    def __init__(self, specs: list[ParamSpec], dtype=np.float32):
        self.specs = specs
        self.dtype = dtype
        total = sum(s.size for s in specs)
        self.flat = np.zeros(total, dtype=dtype)
        self.views: list[np.ndarray] = []
        offset = 0
        for s in specs:
            self.views.append(self.flat[offset:offset + s.size].reshape(s.shape))
            offset += s.size

    @property
    def size(self) -> int:
        return self.flat.size

    def initialize(self, rng: np.random.Generator) -> "Params":
        for spec, view in zip(self.specs, self.views):
            view[...] = spec.initial(rng, self.dtype)
        return self

    def copy(self) -> "Params":
        clone = Params(self.specs, self.dtype)
        clone.flat[...] = self.flat
        return clone

    def astype(self, dtype) -> "Params":
        clone = Params(self.specs, dtype)
        clone.flat[...] = self.flat.astype(dtype)
        return clone

    def zeros_like(self) -> "Params":
        return Params(self.specs, self.dtype)


class DualEncoderModel(Module):
    """Two branch encoders merged by elementwise sum, then a trunk."""

    def __init__(self, ligand_encoder: Module, pocket_encoder: Module, trunk: Module):
        super().__init__()
        self.ligand_encoder = ligand_encoder
        self.pocket_encoder = pocket_encoder
        self.fuse = Sum2()
        self.trunk = trunk

    def children(self):
        return [self.ligand_encoder, self.pocket_encoder, self.fuse, self.trunk]

    def forward(self, xs, params):
        lig, poc = xs
        a, ca = self.ligand_encoder.forward(lig, params)
        b, cb = self.pocket_encoder.forward(poc, params)
        fused, cf = self.fuse.forward((a, b), params)
        y, ct = self.trunk.forward(fused, params)
        return y, (ca, cb, cf, ct)

    def backward(self, dy, cache, params, grads):
        ca, cb, cf, ct = cache
        dfused = self.trunk.backward(dy, ct, params, grads)
        da, db = self.fuse.backward(dfused, cf, params, grads)
        dlig = self.ligand_encoder.backward(da, ca, params, grads)
        dpoc = self.pocket_encoder.backward(db, cb, params, grads)
        return dlig, dpoc


@dataclass
class ModelConfig:
    """A bound layer graph plus the metadata needed to rebuild it."""

    preset: str
    root: Module
    specs: list[ParamSpec]
    in_channels: tuple[int, ...]
    n_ch: int | None = None
    encoder: Module | None = None
    head: Module | None = None
    encoder_in_channels: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_inputs(self) -> int:
        return len(self.in_channels)

    @property
    def n_parameters(self) -> int:
        return sum(s.size for s in self.specs)

    def forward(self, inputs: list[np.ndarray], params: Params):
        x = inputs if self.n_inputs > 1 else inputs[0]
        y, cache = self.root.forward(x, params.views)
        return y.reshape(-1), cache

    def backward(self, dpred: np.ndarray, cache, params: Params, grads: Params):
        dy = dpred.reshape(-1, 1).astype(params.dtype, copy=False)
        return self.root.backward(dy, cache, params.views, grads.views)

    def predict(self, inputs: list[np.ndarray], params: Params) -> np.ndarray:
        pred, _ = self.forward(inputs, params)
        return pred

    def bottleneck_shape(self, input_dims: tuple[int, int, int]) -> tuple[int, ...]:
        """Shape (C, D, H, W) entering the head, for one input geometry."""
        if self.encoder is None:
            raise ArgumentError(f"preset {self.preset!r} has no encoder/head split")
        c_in = self.encoder_in_channels or self.in_channels[0]
        return self.encoder.out_shape((c_in,) + tuple(input_dims))


def _branch_encoder(in_ch: int, width: int = 16) -> Sequential:
    """Projection conv then one plain residual block with SiLU activations."""
    return Sequential(Conv3d(in_ch, width), ResidualBlock(width))


def _gnina_trunk(in_ch: int, grid_dim: int) -> Sequential:
    """Compact five-convolution head with interleaved average pooling."""
    final_dim = grid_dim // 16
    return Sequential(
        AvgPool3d(2), Conv3d(in_ch, 32), ReLU(),
        AvgPool3d(2), Conv3d(32, 32), ReLU(),
        AvgPool3d(2), Conv3d(32, 64), ReLU(),
        Conv3d(64, 64), ReLU(),
        Conv3d(64, 128), ReLU(),
        AvgPool3d(2),
        Flatten(),
        Linear(128 * final_dim ** 3, 1),
    )


def _unet_encoder(in_ch: int, n_ch: int, groups: int,
                  attn_stages: tuple[int, ...] = ()) -> Sequential:
    """Four-stage downsampling encoder plus the middle block pair."""
    widths = []
    w = n_ch
    for f in STAGE_FACTORS:
        w *= f
        widths.append(w)

    layers: list[Module] = [Conv3d(in_ch, widths[0])]
    for stage, width in enumerate(widths):
        for _ in range(2):
            layers.append(ResidualBlock(width, groups))
            if stage in attn_stages:
                layers.append(SelfAttention3d(width, groups))
        if stage + 1 < len(widths):
            layers.append(Conv3d(width, widths[stage + 1], stride=2))
    # middle block pair at the bottleneck width
    layers.append(ResidualBlock(widths[-1], groups))
    if attn_stages:
        layers.append(SelfAttention3d(widths[-1], groups))
    layers.append(ResidualBlock(widths[-1], groups))
    return Sequential(*layers)


def _mlp_head(dims: tuple[int, ...]) -> Sequential:
    """Global pool then Linear/LayerNorm/SiLU/Tanhshrink blocks to a scalar."""
    layers: list[Module] = [GlobalAvgPool()]
    for i in range(len(dims) - 1):
        layers.append(Linear(dims[i], dims[i + 1]))
        if i + 2 < len(dims):  # hidden layers only
            layers.extend([LayerNorm(dims[i + 1]), SiLU(), Tanhshrink()])
    return Sequential(*layers)


def build_model(preset: str, in_channels: tuple[int, ...] | None = None,
                n_ch: int | None = None, seed: int = 0,
                grid_dim: int | None = None) -> tuple[ModelConfig, Params]:
    """Instantiate a preset and its initialized parameters.

    ``in_channels`` overrides the default atom-type channel counts (one
    entry per input grid); ``n_ch`` overrides the encoder base width for
    reduced-size runs; ``grid_dim`` fixes the cube edge assumed by the
    fixed-size tiny complex head (default 64).
    """
    if preset not in PRESETS:
        raise ArgumentError(f"unknown preset {preset!r}; choose from {PRESETS}")
    task = preset.split("_")[0]
    size = preset.split("_")[1]

    if task == "pdbbind":
        in_channels = tuple(in_channels) if in_channels else (7, 4)
        if len(in_channels) != 2:
            raise ArgumentError("complex presets take two input channel counts")
        grid_dim = grid_dim or 64
        enc_l = _branch_encoder(in_channels[0])
        enc_p = _branch_encoder(in_channels[1])
        if size == "tiny":
            encoder = None
            trunk: Module = _gnina_trunk(16, grid_dim)
            head = None
            width = None
        else:
            width = n_ch or {"small": 8, "default": 32}[size]
            groups = n_groups_for(width, {"small": 4, "default": 16}[size])
            encoder = _unet_encoder(16, width, groups)
            head = _mlp_head((16 * width, 16 * width, 64, 1))
            trunk = Sequential(encoder, head)
        root: Module = DualEncoderModel(enc_l, enc_p, trunk)
    else:
        in_channels = tuple(in_channels) if in_channels else (5,)
        if len(in_channels) != 1:
            raise ArgumentError("molecule presets take one input channel count")
        width = n_ch or {"tiny": 8, "small": 16, "default": 32}[size]
        groups = n_groups_for(width, {"tiny": 4, "small": 8, "default": 16}[size])
        encoder = _unet_encoder(in_channels[0], width, groups, attn_stages=(2, 3))
        head = _mlp_head((16 * width, 64, 32, 1))
        root = Sequential(encoder, head)

    specs = bind_modules(root)
    config = ModelConfig(
        preset=preset,
        root=root,
        specs=specs,
        in_channels=in_channels,
        n_ch=width,
        encoder=encoder,
        head=head,
        encoder_in_channels=16 if task == "pdbbind" else in_channels[0],
        meta={"seed": seed, "grid_dim": grid_dim},
    )
    params = Params(specs).initialize(np.random.default_rng(seed))
    return config, params


def n_groups_for(width: int, preferred: int) -> int:
    """Largest group count <= preferred that divides the base width."""
    g = min(preferred, width)
    while width % g:
        g -= 1
    return g


def preset_info(preset: str, in_channels: tuple[int, ...] | None = None) -> dict:
    """Parameter count and (where defined) bottleneck shape of a preset."""
    config, _ = build_model(preset, in_channels=in_channels)
    info = {"preset": preset, "parameters": config.n_parameters}
    if config.encoder is not None:
        dims = (64, 64, 64) if preset.startswith("pdbbind") else (32, 32, 32)
        info["bottleneck"] = config.bottleneck_shape(dims)
    return info
