"""Sample manifests: the JSON index binding ids to files, labels, and splits.

Manifest schema (see README for the full description)::

    {
      "samples": [
        {
          "id": "mol-0001",
          "structure": "structures/mol-0001.json",
          "labels": {"y": 1.25},
          "density_map": "maps/mol-0001.voxb",          # optional
          "density_map_ligand": "...", "density_map_pocket": "...",  # complexes
          "sequence": "ACDEFG...",                       # optional
          "fingerprint": "0f3a9c",                       # optional, hex bitset
          "split": "train"                               # optional
        }
      ]
    }

Relative paths are resolved against the manifest's directory. Structure
files are JSON documents with ``id``, ``atoms`` (element/position/role),
and optional ``labels``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DataError, ManifestError
from .voxelize import Atom, Structure

__all__ = [
    "SampleRecord",
    "Manifest",
    "load_manifest",
    "save_manifest",
    "iterate_samples",
    "load_structure",
    "save_structure",
]

_SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SampleRecord:
    """One manifest entry; paths are absolute after loading."""

    id: str
    structure_path: Path
    labels: dict[str, float]
    density_map_path: Path | None = None
    density_map_ligand_path: Path | None = None
    density_map_pocket_path: Path | None = None
    sequence: str | None = None
    fingerprint_hex: str | None = None
    split: str | None = None

    def map_paths(self, complex_sample: bool) -> tuple[Path, ...]:
        """Density map paths in grid order, or () when none are recorded."""
        if complex_sample:
            if self.density_map_ligand_path and self.density_map_pocket_path:
                return (self.density_map_ligand_path, self.density_map_pocket_path)
            return ()
        if self.density_map_path:
            return (self.density_map_path,)
        return ()


@dataclass(frozen=True)
class Manifest:
    """Ordered, validated collection of sample records."""

    records: tuple[SampleRecord, ...]
    path: Path | None = None
    by_id: dict[str, SampleRecord] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        index = {r.id: r for r in self.records}
        object.__setattr__(self, "by_id", index)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]


def _resolve(base: Path, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else (base / p)


def load_manifest(path, check_files: bool = True) -> Manifest:
    """Load and validate a manifest; errors carry the record index."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    samples = doc.get("samples")
    if not isinstance(samples, list):
        raise ManifestError(f"manifest {path} has no 'samples' list")

    base = path.parent
    records: list[SampleRecord] = []
    seen: set[str] = set()
    for idx, raw in enumerate(samples):
        if not isinstance(raw, dict):
            raise ManifestError("sample entry is not an object", record=idx)
        sid = raw.get("id")
        if not isinstance(sid, str) or not sid:
            raise ManifestError("missing or empty 'id'", record=idx)
        if sid in seen:
            raise ManifestError(f"duplicate id {sid!r}", record=idx)
        seen.add(sid)
        if "structure" not in raw:
            raise ManifestError(f"sample {sid!r} has no 'structure' path", record=idx)
        structure_path = _resolve(base, raw["structure"])
        labels_raw = raw.get("labels", {})
        if not isinstance(labels_raw, dict):
            raise ManifestError(f"sample {sid!r}: 'labels' must be an object", record=idx)
        labels: dict[str, float] = {}
        for k, v in labels_raw.items():
            try:
                val = float(v)
            except (TypeError, ValueError):
                raise ManifestError(
                    f"sample {sid!r}: label {k!r} is not a number ({v!r})", record=idx
                ) from None
            if not np.isfinite(val):
                raise ManifestError(f"sample {sid!r}: label {k!r} is not finite", record=idx)
            labels[k] = val
        split = raw.get("split")
        if split is not None and split not in _SPLITS:
            raise ManifestError(
                f"sample {sid!r}: split must be one of {_SPLITS}, got {split!r}",
                record=idx,
            )

        def opt_path(key: str) -> Path | None:
            return _resolve(base, raw[key]) if raw.get(key) else None

        record = SampleRecord(
            id=sid,
            structure_path=structure_path,
            labels=labels,
            density_map_path=opt_path("density_map"),
            density_map_ligand_path=opt_path("density_map_ligand"),
            density_map_pocket_path=opt_path("density_map_pocket"),
            sequence=raw.get("sequence") or None,
            fingerprint_hex=raw.get("fingerprint") or None,
            split=split,
        )
        if check_files:
            for p in (record.structure_path, record.density_map_path,
                      record.density_map_ligand_path, record.density_map_pocket_path):
                if p is not None and not p.exists():
                    raise ManifestError(
                        f"sample {sid!r}: referenced file does not exist: {p}",
                        record=idx,
                    )
        records.append(record)
    return Manifest(tuple(records), path=path)


def save_manifest(records: list[dict], path) -> None:
    """Write a manifest document; records are raw JSON-ready dicts."""
    path = Path(path)
    path.write_text(json.dumps({"samples": records}, indent=2) + "\n")


def iterate_samples(manifest: Manifest, split: str | None = None) -> Iterator[SampleRecord]:
    """Stream records in manifest order, optionally filtered by split tag."""
    if split is not None and split not in _SPLITS:
        raise ManifestError(f"split filter must be one of {_SPLITS}, got {split!r}")
    for record in manifest.records:
        if split is None or record.split == split:
            yield record


def load_structure(path) -> Structure:
    """Load a structure JSON file (id, atoms, optional labels)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read structure {path}: {exc}") from exc
    try:
        atoms = tuple(
            Atom(a["element"], a["position"], a.get("role", "ligand"))
            for a in doc["atoms"]
        )
        return Structure(doc["id"], atoms, doc.get("labels", {}))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed structure file {path}: {exc}") from exc


def save_structure(structure: Structure, path) -> None:
    """Write a structure to its JSON representation."""
    doc = {
        "id": structure.id,
        "atoms": [
            {
                "element": a.element,
                "position": [float(x) for x in a.position],
                "role": a.role,
            }
            for a in structure.atoms
        ],
        "labels": structure.labels,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
