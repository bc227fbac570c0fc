"""Density maps, the VOXB volumetric file format, and a synthetic density oracle.

VOXB layout (all multi-byte values little-endian):

======  =====================================================
offset  field
======  =====================================================
0       magic ``b"VOXB"``
4       u32 version (currently 1)
8       u32 channel count C
12      u32 nx, u32 ny, u32 nz
24      f64 spacing (Angstrom per voxel edge)
32      3 x f64 origin (world position of voxel (0,0,0) center)
56      u32 byte length of source tag, then that many UTF-8 bytes
..      C*nx*ny*nz f32 payload, channel-major then x, y, z
        row-major (z varies fastest; the in-memory raster order)
======  =====================================================

Round trips are bitwise lossless for every finite float32 payload.
``native_resolution`` is in-memory metadata only and is not persisted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError
from .grid import VoxelGrid
from .voxelize import ELECTRON_COUNT, TRUNCATION_SIGMAS, Structure, _splat_kernel

__all__ = [
    "DensityMap",
    "write_voxb",
    "read_voxb",
    "write_map",
    "read_map",
    "synth_density",
    "DEFAULT_ELECTRON_SIGMA",
]

_MAGIC = b"VOXB"
_VERSION = 1

# Width of the per-atom electron Gaussian in the synthetic oracle (Angstrom).
DEFAULT_ELECTRON_SIGMA = 0.4


@dataclass(frozen=True)
class DensityMap:
    """Single-channel scalar field tagged with its provenance.

    ``source_tag`` is free-form ("2mFo-DFc", "xtb", "synthetic", ...).
    ``native_resolution`` records the experimental resolution when known;
    it is not stored in VOXB files.
    """

    grid: VoxelGrid
    source_tag: str = "synthetic"
    native_resolution: float | None = None

    def __post_init__(self):
        if self.grid.channels != 1:
            raise ArgumentError(
                f"density maps are single-channel, got {self.grid.channels} channels"
            )


def write_voxb(grid: VoxelGrid, path, source_tag: str = "") -> None:
    """Write any grid (C channels) to ``path`` in VOXB format."""
    tag = source_tag.encode("utf-8")
    header = _MAGIC + struct.pack(
        "<IIIII", _VERSION, grid.channels, *grid.dims
    ) + struct.pack("<dddd", grid.spacing, *grid.origin)
    header += struct.pack("<I", len(tag)) + tag
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_voxb(path) -> tuple[VoxelGrid, str]:
    """Read a VOXB file back into a grid plus its source tag."""
    raw = Path(path).read_bytes()

    def need(offset: int, count: int, what: str) -> bytes:
        if offset + count > len(raw):
            raise FormatError(
                f"truncated VOXB file {path}: {what} needs {count} bytes, "
                f"file has {len(raw) - offset}",
                offset=offset,
            )
        return raw[offset:offset + count]

    if need(0, 4, "magic") != _MAGIC:
        raise FormatError(f"not a VOXB file {path}: bad magic {raw[:4]!r}", offset=0)
    (version,) = struct.unpack("<I", need(4, 4, "version"))
    if version != _VERSION:
        raise FormatError(f"unsupported VOXB version {version}", offset=4)
    channels, nx, ny, nz = struct.unpack("<IIII", need(8, 16, "dims"))
    spacing, ox, oy, oz = struct.unpack("<dddd", need(24, 32, "geometry"))
    (tag_len,) = struct.unpack("<I", need(56, 4, "tag length"))
    tag = need(60, tag_len, "source tag").decode("utf-8")
    payload_off = 60 + tag_len
    count = channels * nx * ny * nz
    expected = count * 4
    actual = len(raw) - payload_off
    if actual < expected:
        raise FormatError(
            f"VOXB payload of {path}: expected {expected} bytes "
            f"({count} f32 values), got {actual}",
            offset=payload_off,
        )
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=payload_off)
    grid = VoxelGrid((nx, ny, nz), spacing, (ox, oy, oz),
                     data.reshape(channels, nx, ny, nz))
    return grid, tag


def write_map(density: DensityMap, path) -> None:
    """Serialize a density map to VOXB."""
    write_voxb(density.grid, path, density.source_tag)


def read_map(path) -> DensityMap:
    """Load a density map from VOXB."""
    grid, tag = read_voxb(path)
    return DensityMap(grid, source_tag=tag)


def synth_density(structure: Structure, dims: tuple[int, int, int], spacing: float,
                  origin, role: str | None = None,
                  electron_sigma: float = DEFAULT_ELECTRON_SIGMA) -> DensityMap:
    """Analytic stand-in for a computed electron density map.

    Each atom contributes a normalized Gaussian carrying its electron
    count: ``Z * (2 pi sigma_e^2)^(-3/2) * exp(-d^2 / (2 sigma_e^2))`` in
    electrons per cubic Angstrom, truncated like the splat kernels. The
    integral over an enclosing grid therefore recovers the total electron
    count of the structure to well within 1%.
    """
    dims = tuple(int(d) for d in dims)
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    buffer = np.zeros((1,) + dims, dtype=np.float32)
    norm = (2.0 * np.pi * electron_sigma * electron_sigma) ** -1.5
    for atom in structure.select(role):
        amplitude = ELECTRON_COUNT[atom.element] * norm
        _splat_kernel(buffer, 0, atom.position, electron_sigma, amplitude, spacing,
                      origin, dims, TRUNCATION_SIGMAS)
    grid = VoxelGrid(dims, spacing, origin, buffer)
    return DensityMap(grid, source_tag="synthetic")
