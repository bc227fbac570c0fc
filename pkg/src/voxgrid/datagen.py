"""Synthetic dataset generation for desk-scale experiments and tests.

Molecules are random heavy-atom clouds with a minimum separation;
complexes add a shell of pocket atoms around the ligand plus a synthetic
receptor sequence (drawn from mutated family prototypes, so the splitter
has real linkage structure to find) and a random fingerprint.

The standard molecule label is analytic: total electron count plus a
shape term proportional to the radius of gyration. A density-based input
can read the electron count directly off the grid; a shape-only input
cannot, which is what makes the representation comparison meaningful on
synthetic data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .density import synth_density, write_map
from .manifest import save_manifest, save_structure
from .splitter import AMINO_ACIDS
from .voxelize import ELECTRON_COUNT, Atom, Structure, molecule_grid_origin

__all__ = [
    "random_molecule",
    "electron_shape_label",
    "radius_of_gyration",
    "generate_molecule_dataset",
    "generate_complex_dataset",
]


def _scatter_positions(rng: np.random.Generator, n: int, radius: float,
                       min_sep: float) -> np.ndarray:
    """Rejection-sample n points in a ball with pairwise separation."""
    points: list[np.ndarray] = []
    while len(points) < n:
        p = rng.uniform(-radius, radius, size=3)
        if np.linalg.norm(p) > radius:
            continue
        if all(np.linalg.norm(p - q) >= min_sep for q in points):
            points.append(p)
    return np.stack(points)


def random_molecule(rng: np.random.Generator, mol_id: str,
                    n_atoms: tuple[int, int] = (5, 9),
                    elements: tuple[str, ...] = ("H", "C", "N", "O", "F"),
                    radius: float = 1.6, min_sep: float = 1.1,
                    role: str = "ligand") -> Structure:
    """Random atom cloud; composition drawn independently of geometry.

    The default element pool spans electron counts 1..9, so labels built
    on the electron count have plenty of composition variance that a
    chemically blind representation cannot see.
    """
    n = int(rng.integers(n_atoms[0], n_atoms[1] + 1))
    pos = _scatter_positions(rng, n, radius, min_sep)
    chosen = rng.choice(elements, size=n)
    atoms = tuple(Atom(str(e), p, role) for e, p in zip(chosen, pos))
    return Structure(mol_id, atoms)


def radius_of_gyration(structure: Structure) -> float:
    pos = structure.positions()
    centroid = pos.mean(axis=0)
    return float(np.sqrt(((pos - centroid) ** 2).sum(axis=1).mean()))


def electron_shape_label(structure: Structure, shape_weight: float = 2.0) -> float:
    """Total electron count plus shape_weight * radius of gyration."""
    electrons = sum(ELECTRON_COUNT[a.element] for a in structure.atoms)
    return float(electrons + shape_weight * radius_of_gyration(structure))


def generate_molecule_dataset(out_dir, n: int, seed: int = 0,
                              label_name: str = "y",
                              with_maps: bool = True,
                              dims: tuple[int, int, int] = (32, 32, 32),
                              spacing: float = 0.25,
                              shape_weight: float = 2.0) -> Path:
    """Write structures, optional synthetic density maps, and a manifest.

    Returns the manifest path. Maps are generated on a geometry centered
    on each molecule's centroid so any later crop stays inside.
    """
    out = Path(out_dir)
    (out / "structures").mkdir(parents=True, exist_ok=True)
    if with_maps:
        (out / "maps").mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        mol_id = f"mol-{i:04d}"
        structure = random_molecule(rng, mol_id)
        label = electron_shape_label(structure, shape_weight)
        structure = Structure(mol_id, structure.atoms, {label_name: label})
        save_structure(structure, out / "structures" / f"{mol_id}.json")
        record = {
            "id": mol_id,
            "structure": f"structures/{mol_id}.json",
            "labels": {label_name: label},
        }
        if with_maps:
            centroid = structure.positions().mean(axis=0)
            origin = molecule_grid_origin(centroid, dims, spacing)
            dmap = synth_density(structure, dims, spacing, origin)
            write_map(dmap, out / "maps" / f"{mol_id}.voxb")
            record["density_map"] = f"maps/{mol_id}.voxb"
        records.append(record)
    manifest_path = out / "manifest.json"
    save_manifest(records, manifest_path)
    return manifest_path


def _family_sequence(rng: np.random.Generator, prototype: str, n_mut: int) -> str:
    seq = list(prototype)
    for pos in rng.choice(len(seq), size=min(n_mut, len(seq)), replace=False):
        seq[pos] = AMINO_ACIDS[int(rng.integers(len(AMINO_ACIDS)))]
    return "".join(seq)


def generate_complex_dataset(out_dir, n: int, seed: int = 0,
                             n_families: int = 10, seq_length: int = 24,
                             fingerprint_bits: int = 32,
                             with_maps: bool = False,
                             dims: tuple[int, int, int] = (32, 32, 32),
                             spacing: float = 0.25) -> Path:
    """Write synthetic protein-ligand complexes with split metadata.

    Each sample has ligand atoms in the core, pocket atoms in a shell, a
    receptor sequence mutated from one of ``n_families`` prototypes, a
    random fingerprint, and a synthetic pK label.
    """
    out = Path(out_dir)
    (out / "structures").mkdir(parents=True, exist_ok=True)
    if with_maps:
        (out / "maps").mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    prototypes = [
        "".join(rng.choice(list(AMINO_ACIDS), size=seq_length)) for _ in range(n_families)
    ]
    records = []
    for i in range(n):
        cid = f"cx-{i:04d}"
        ligand = random_molecule(rng, cid, n_atoms=(4, 8),
                                 elements=("C", "N", "O", "S", "F", "Cl", "P"),
                                 radius=1.4, role="ligand")
        n_pocket = int(rng.integers(6, 12))
        shell = []
        while len(shell) < n_pocket:
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            p = direction * rng.uniform(2.4, 3.4)
            if all(np.linalg.norm(p - q) >= 1.1 for q in shell):
                shell.append(p)
        pocket_elements = rng.choice(["C", "N", "O", "S"], size=n_pocket)
        atoms = ligand.atoms + tuple(
            Atom(str(e), p, "pocket") for e, p in zip(pocket_elements, shell)
        )
        label = float(rng.normal(6.0, 1.5))  # synthetic pK
        structure = Structure(cid, atoms, {"pK": label})
        save_structure(structure, out / "structures" / f"{cid}.json")
        family = int(rng.integers(n_families))
        sequence = _family_sequence(rng, prototypes[family], int(rng.integers(0, 8)))
        fingerprint = format(
            int(rng.integers(0, 2 ** fingerprint_bits)), f"0{fingerprint_bits // 4}x"
        )
        record = {
            "id": cid,
            "structure": f"structures/{cid}.json",
            "labels": {"pK": label},
            "sequence": sequence,
            "fingerprint": fingerprint,
        }
        if with_maps:
            origin = molecule_grid_origin(np.zeros(3), dims, spacing)
            lig_map = synth_density(structure, dims, spacing, origin, role="ligand")
            poc_map = synth_density(structure, dims, spacing, origin, role="pocket")
            write_map(lig_map, out / "maps" / f"{cid}-ligand.voxb")
            write_map(poc_map, out / "maps" / f"{cid}-pocket.voxb")
            record["density_map_ligand"] = f"maps/{cid}-ligand.voxb"
            record["density_map_pocket"] = f"maps/{cid}-pocket.voxb"
        records.append(record)
    manifest_path = out / "manifest.json"
    save_manifest(records, manifest_path)
    return manifest_path
