"""voxgrid: voxel-based molecular representations and a desk-scale 3D CNN pipeline."""

__version__ = "0.1.0"

from .grid import (
    VoxelGrid,
    Rotation,
    trilinear_sample,
    resample,
    gradient_magnitude,
    rotate_resample,
    random_rotation,
)
from .voxelize import (
    Atom,
    Structure,
    ChannelScheme,
    ReprMode,
    splat_atoms,
    pdbbind_schemes,
    qm9_scheme,
    voxelize_sample,
    center_of_mass,
)
from .density import DensityMap, write_map, read_map, write_voxb, read_voxb, synth_density
from .manifest import Manifest, SampleRecord, load_manifest, iterate_samples

__all__ = [
    "VoxelGrid",
    "Rotation",
    "trilinear_sample",
    "resample",
    "gradient_magnitude",
    "rotate_resample",
    "random_rotation",
    "Atom",
    "Structure",
    "ChannelScheme",
    "ReprMode",
    "splat_atoms",
    "pdbbind_schemes",
    "qm9_scheme",
    "voxelize_sample",
    "center_of_mass",
    "DensityMap",
    "write_map",
    "read_map",
    "write_voxb",
    "read_voxb",
    "synth_density",
    "Manifest",
    "SampleRecord",
    "load_manifest",
    "iterate_samples",
]
