"""Voxel grids and the spatial field operations built on them.

A :class:`VoxelGrid` is a C-channel scalar field on a regular isotropic
lattice. ``data`` is a C-contiguous float32 array of shape
``(C, nx, ny, nz)``; the world position of voxel ``(i, j, k)`` is
``origin + spacing * (i, j, k)``. Grids are immutable after construction
and every operation here is a pure function, so they are safe to share
across threads.

Sampling uses the zero-fill convention: points outside the voxel-center
bounding box evaluate to 0. Interpolation arithmetic runs in float64 and
results are rounded once to float32, which keeps trilinear outputs inside
the convex hull of their eight neighbours even after rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError

__all__ = [
    "VoxelGrid",
    "Rotation",
    "trilinear_sample",
    "resample",
    "gradient_magnitude",
    "rotate_resample",
    "random_rotation",
    "octahedral_rotations",
]


@dataclass(frozen=True)
class VoxelGrid:
    """C-channel 3D scalar field with physical spacing and origin.

    Attributes:
        dims: lattice extents (nx, ny, nz), all >= 1.
        spacing: isotropic voxel edge length in Angstrom, > 0.
        origin: world position (Angstrom) of the center of voxel (0, 0, 0).
        data: float32 array of shape (C, nx, ny, nz), C-contiguous,
            all values finite. Marked read-only.
    """

    dims: tuple[int, int, int]
    spacing: float
    origin: np.ndarray
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ArgumentError(f"grid dims must be three positive integers, got {self.dims}")
        spacing = float(self.spacing)
        if not np.isfinite(spacing) or spacing <= 0:
            raise ArgumentError(f"grid spacing must be positive and finite, got {self.spacing}")
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3).copy()
        if not np.all(np.isfinite(origin)):
            raise ArgumentError(f"grid origin must be finite, got {origin}")
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 4 or data.shape[1:] != dims:
            raise ArgumentError(
                f"grid data shape {data.shape} does not match (C, {dims[0]}, {dims[1]}, {dims[2]})"
            )
        if data.shape[0] < 1:
            raise ArgumentError("grid must have at least one channel")
        if not np.all(np.isfinite(data)):
            raise ArgumentError("grid data contains non-finite values")
        origin.flags.writeable = False
        data.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def voxel_center(self, i: int, j: int, k: int) -> np.ndarray:
        """World coordinate of the center of voxel (i, j, k)."""
        return self.origin + self.spacing * np.array([i, j, k], dtype=np.float64)

    def center(self) -> np.ndarray:
        """World coordinate of the geometric center of the voxel-center box."""
        half = self.spacing * (np.array(self.dims, dtype=np.float64) - 1.0) / 2.0
        return self.origin + half

    def same_geometry(self, other: "VoxelGrid") -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.origin, other.origin)
        )


@dataclass(frozen=True)
class Rotation:
    """Proper rotation: 3x3 orthonormal matrix with determinant +1."""

    matrix: np.ndarray

    _TOL = 1e-6

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3).copy()
        if not np.all(np.isfinite(m)):
            raise ArgumentError("rotation matrix must be finite")
        if np.max(np.abs(m @ m.T - np.eye(3))) > self._TOL:
            raise ArgumentError("rotation matrix is not orthonormal within 1e-6")
        if abs(np.linalg.det(m) - 1.0) > self._TOL:
            raise ArgumentError("rotation matrix determinant is not +1 within 1e-6")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Rotate one point (3,) or a batch (M, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix.T

    def is_identity(self) -> bool:
        return np.array_equal(self.matrix, np.eye(3))


def _sample_channel(data_c: np.ndarray, dims: tuple[int, int, int],
                    t: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of one channel at lattice coordinates ``t``.

    ``t`` is (M, 3) in units of voxels relative to the origin voxel center.
    Points outside [0, n-1] on any axis return 0.
    """
    n = np.array(dims, dtype=np.int64)
    inside = np.all((t >= 0.0) & (t <= (n - 1)), axis=1)

    # Clamp base indices so the +1 corner stays in range; at t == n-1 the
    # fractional weight becomes exactly 1 and the value is still exact.
    i0 = np.floor(t).astype(np.int64)
    i0 = np.minimum(np.maximum(i0, 0), np.maximum(n - 2, 0))
    f = t - i0
    i1 = np.minimum(i0 + 1, n - 1)

    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]

    d = data_c.astype(np.float64, copy=False)
    c000 = d[x0, y0, z0]
    c001 = d[x0, y0, z1]
    c010 = d[x0, y1, z0]
    c011 = d[x0, y1, z1]
    c100 = d[x1, y0, z0]
    c101 = d[x1, y0, z1]
    c110 = d[x1, y1, z0]
    c111 = d[x1, y1, z1]

    c00 = c000 * (1.0 - fz) + c001 * fz
    c01 = c010 * (1.0 - fz) + c011 * fz
    c10 = c100 * (1.0 - fz) + c101 * fz
    c11 = c110 * (1.0 - fz) + c111 * fz
    c0 = c00 * (1.0 - fy) + c01 * fy
    c1 = c10 * (1.0 - fy) + c11 * fy
    out = c0 * (1.0 - fx) + c1 * fx
    out[~inside] = 0.0
    return out


def sample_points(grid: VoxelGrid, channel: int, points: np.ndarray) -> np.ndarray:
    """Trilinear-sample one channel at world positions ``points`` (M, 3).

    Returns float32 values; zero outside the voxel-center bounding box.
    """
    if not 0 <= channel < grid.channels:
        raise ArgumentError(
            f"channel {channel} out of range for grid with {grid.channels} channels"
        )
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    t = (pts - grid.origin) / grid.spacing
    vals = _sample_channel(grid.data[channel], grid.dims, t)
    return vals.astype(np.float32)


def trilinear_sample(grid: VoxelGrid, channel: int, point) -> float:
    """Trilinear interpolation of ``channel`` at a single world position."""
    return float(sample_points(grid, channel, np.asarray(point, dtype=np.float64))[0])


def _target_centers(dims: tuple[int, int, int], spacing: float,
                    origin: np.ndarray) -> np.ndarray:
    """World centers of every voxel of a target geometry, shape (M, 3)."""
    axes = [origin[a] + spacing * np.arange(dims[a], dtype=np.float64) for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


# Sampling works on blocks of target points to bound transient memory on
# large grids (the gather stage holds ~11 float64 arrays per point).
_SAMPLE_BLOCK = 1 << 20


def _sample_all_channels(grid: VoxelGrid, t: np.ndarray,
                         dims: tuple[int, int, int]) -> np.ndarray:
    out = np.empty((grid.channels,) + dims, dtype=np.float32)
    flat = out.reshape(grid.channels, -1)
    for lo in range(0, t.shape[0], _SAMPLE_BLOCK):
        hi = min(lo + _SAMPLE_BLOCK, t.shape[0])
        for c in range(grid.channels):
            flat[c, lo:hi] = _sample_channel(grid.data[c], grid.dims, t[lo:hi])
    return out


def resample(grid: VoxelGrid, dims: tuple[int, int, int], spacing: float,
             origin) -> VoxelGrid:
    """Resample ``grid`` onto a new geometry by trilinear interpolation.

    Each target voxel holds the source field sampled at that voxel's world
    center; channels are resampled independently. Resampling a grid onto
    its own geometry is a bitwise identity (taken as a fast path).
    """
    dims = tuple(int(d) for d in dims)
    spacing = float(spacing)
    if spacing <= 0 or not np.isfinite(spacing):
        raise ArgumentError(f"target spacing must be positive, got {spacing}")
    origin = np.asarray(origin, dtype=np.float64).reshape(3)

    if (dims == grid.dims and spacing == grid.spacing
            and np.array_equal(origin, grid.origin)):
        return VoxelGrid(dims, spacing, origin, grid.data)

    pts = _target_centers(dims, spacing, origin)
    t = (pts - grid.origin) / grid.spacing
    return VoxelGrid(dims, spacing, origin, _sample_all_channels(grid, t, dims))


def gradient_magnitude(grid: VoxelGrid) -> VoxelGrid:
    """Per-voxel Euclidean norm of the spatial gradient, per channel.

    Central differences at interior voxels, one-sided first-order
    differences at the faces; derivatives are in field units per Angstrom.
    """
    if any(d < 2 for d in grid.dims):
        raise ArgumentError(f"gradient_magnitude needs every dim >= 2, got {grid.dims}")
    out = np.empty_like(grid.data)
    for c in range(grid.channels):
        vol = grid.data[c].astype(np.float64)
        gx, gy, gz = np.gradient(vol, grid.spacing, edge_order=1)
        out[c] = np.sqrt(gx * gx + gy * gy + gz * gz).astype(np.float32)
    return VoxelGrid(grid.dims, grid.spacing, grid.origin, out)


def rotate_resample(grid: VoxelGrid, rot: Rotation, pivot) -> VoxelGrid:
    """Rotate the field by ``rot`` about ``pivot``, on the same geometry.

    The output voxel at world point p holds the source sampled at
    ``pivot + R^T (p - pivot)``; outside the source box the value is 0.
    """
    if rot.is_identity():
        return VoxelGrid(grid.dims, grid.spacing, grid.origin, grid.data)
    pivot = np.asarray(pivot, dtype=np.float64).reshape(3)
    pts = _target_centers(grid.dims, grid.spacing, grid.origin)
    src = (pts - pivot) @ rot.matrix + pivot  # (p - pivot) @ R == R^T (p - pivot)
    t = (src - grid.origin) / grid.spacing
    return VoxelGrid(grid.dims, grid.spacing, grid.origin,
                     _sample_all_channels(grid, t, grid.dims))


def random_rotation(rng: np.random.Generator, octahedral: bool = False) -> Rotation:
    """Draw a rotation uniformly over SO(3) via a uniform unit quaternion.

    With ``octahedral=True`` the draw is uniform over the 24 axis-aligned
    cube rotations instead.
    """
    if octahedral:
        group = octahedral_rotations()
        return group[int(rng.integers(len(group)))]
    while True:
        q = rng.normal(size=4)
        norm = np.linalg.norm(q)
        if norm > 1e-12:
            break
    w, x, y, z = q / norm
    m = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
    return Rotation(m)


_OCTAHEDRAL: list[Rotation] | None = None


def octahedral_rotations() -> list[Rotation]:
    """The 24 proper rotations of the cube (signed permutations, det +1)."""
    global _OCTAHEDRAL
    if _OCTAHEDRAL is None:
        from itertools import permutations, product

        mats = []
        for perm in permutations(range(3)):
            for signs in product((1.0, -1.0), repeat=3):
                m = np.zeros((3, 3))
                for row, (col, s) in enumerate(zip(perm, signs)):
                    m[row, col] = s
                if np.linalg.det(m) > 0:
                    mats.append(Rotation(m))
        assert len(mats) == 24
        _OCTAHEDRAL = mats
    return list(_OCTAHEDRAL)
