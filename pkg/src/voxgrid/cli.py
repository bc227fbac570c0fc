"""Command-line front-end for the full pipeline.

Subcommands: ``generate`` (synthetic datasets), ``synth-density``,
``voxelize``, ``split``, ``train``, ``eval``, and ``curve`` (the
data-efficiency sweep). Every command writes its outputs under ``--out``
(``grids/``, ``checkpoints/``, ``reports/``) plus a run record JSON with
the config snapshot, seed, output paths, wall time, and metric results.

Exit codes: 0 success, 2 input/data error, 3 numerical failure.
``VOXGRID_THREADS`` bounds the worker count for voxelization and curve
cells (default 1, fully sequential).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .density import DensityMap, read_map, synth_density, write_map, write_voxb
from .errors import ConfigError, DataError, InputError, TrainingError, VoxgridError
from .grid import VoxelGrid
from .manifest import (
    Manifest,
    SampleRecord,
    iterate_samples,
    load_manifest,
    load_structure,
    save_manifest,
)
from .metrics import LabelStats, denormalize, fit_labels, mae, normalize, spearman
from .nn.model import build_model
from .nn.train import (
    TrainConfig,
    TrainSample,
    history_csv,
    load_checkpoint,
    predict_samples,
    save_checkpoint,
    train,
)
from .splitter import (
    ComplexMeta,
    Fingerprint,
    SplitAssignment,
    assign_splits,
    build_linkage,
    subset,
    verify_no_leakage,
)
from .voxelize import (
    ReprMode,
    center_of_mass,
    molecule_grid_origin,
    realize_sample,
)
from . import datagen

DEFAULT_GEOMETRY = {"complex": ((64, 64, 64), 0.25), "molecule": ((32, 32, 32), 0.25)}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("VOXGRID_THREADS", "1")))
    except ValueError:
        return 1


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise ConfigError(f"--dims wants one or three integers, got {text!r}")
    return tuple(parts)


def _geometry(args) -> tuple[tuple[int, int, int], float]:
    dims, spacing = DEFAULT_GEOMETRY[args.task]
    if args.dims:
        dims = _parse_dims(args.dims)
    if args.spacing:
        spacing = float(args.spacing)
    return dims, spacing


def _in_channels(task: str, mode: ReprMode) -> tuple[int, ...]:
    if task == "complex":
        return (7, 4) if mode is ReprMode.ATOM_TYPE else (1, 1)
    return (5,) if mode is ReprMode.ATOM_TYPE else (1,)


def _out_dirs(out: Path) -> dict[str, Path]:
    dirs = {name: out / name for name in ("grids", "checkpoints", "reports")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    return dirs


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _run_record(out: Path, command: str, args_dict: dict, seed, outputs: dict,
                wall_time: float, metrics: dict | None = None) -> None:
    record = {
        "command": command,
        "config": {k: v for k, v in args_dict.items() if k != "func"},
        "seed": seed,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "wall_time_s": wall_time,
        "metrics": metrics or {},
    }
    _write_json(out / f"run_{command}.json", record)


def _load_sample(record: SampleRecord, task: str, mode: ReprMode):
    """(structure, pocket-or-None, maps-or-None) for one manifest record."""
    structure = load_structure(record.structure_path)
    pocket = structure if task == "complex" else None
    maps = None
    if mode.needs_maps:
        paths = record.map_paths(task == "complex")
        if not paths:
            missing = (
                "density_map_ligand/density_map_pocket" if task == "complex"
                else "density_map"
            )
            raise ConfigError(
                f"sample {record.id!r}: representation {mode.value!r} requires "
                f"manifest field {missing}"
            )
        maps = tuple(read_map(p) for p in paths)
    return structure, pocket, maps


def _sample_origin(structure, task: str, dims, spacing) -> np.ndarray:
    center = center_of_mass(structure, role="ligand" if task == "complex" else None)
    return molecule_grid_origin(center, dims, spacing)


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    out = Path(args.out)
    t0 = time.monotonic()
    dims = _parse_dims(args.dims) if args.dims else (32, 32, 32)
    spacing = float(args.spacing) if args.spacing else 0.25
    if args.kind == "molecule":
        manifest = datagen.generate_molecule_dataset(
            out, args.n, seed=args.seed, with_maps=not args.no_maps,
            dims=dims, spacing=spacing, shape_weight=args.shape_weight,
        )
    else:
        manifest = datagen.generate_complex_dataset(
            out, args.n, seed=args.seed, with_maps=not args.no_maps,
            dims=dims, spacing=spacing,
        )
    (out / "reports").mkdir(exist_ok=True)
    _run_record(out / "reports", "generate", vars(args), args.seed,
                {"manifest": manifest}, time.monotonic() - t0)
    print(f"wrote {args.n} {args.kind} samples under {out}")
    return 0


# ---------------------------------------------------------------------------
# synth-density


def cmd_synth_density(args) -> int:
    t0 = time.monotonic()
    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    dims = _parse_dims(args.dims) if args.dims else (32, 32, 32)
    spacing = float(args.spacing) if args.spacing else 0.25

    records = []
    for rec in manifest:
        structure = load_structure(rec.structure_path)
        entry = {
            "id": rec.id,
            "structure": os.path.relpath(rec.structure_path, out),
            "labels": rec.labels,
        }
        if rec.sequence:
            entry["sequence"] = rec.sequence
        if rec.fingerprint_hex:
            entry["fingerprint"] = rec.fingerprint_hex
        if rec.split:
            entry["split"] = rec.split
        has_pocket = any(a.role == "pocket" for a in structure.atoms)
        center = center_of_mass(structure, role="ligand" if has_pocket else None)
        origin = molecule_grid_origin(center, dims, spacing)
        if has_pocket:
            for role in ("ligand", "pocket"):
                dmap = synth_density(structure, dims, spacing, origin, role=role,
                                     electron_sigma=args.sigma)
                path = maps_dir / f"{rec.id}-{role}.voxb"
                write_map(dmap, path)
                entry[f"density_map_{role}"] = f"maps/{rec.id}-{role}.voxb"
        else:
            dmap = synth_density(structure, dims, spacing, origin,
                                 electron_sigma=args.sigma)
            path = maps_dir / f"{rec.id}.voxb"
            write_map(dmap, path)
            entry["density_map"] = f"maps/{rec.id}.voxb"
        records.append(entry)

    manifest_path = out / "manifest.json"
    save_manifest(records, manifest_path)
    (out / "reports").mkdir(exist_ok=True)
    _run_record(out / "reports", "synth-density", vars(args), None,
                {"manifest": manifest_path}, time.monotonic() - t0)
    print(f"wrote {len(records)} synthetic maps under {maps_dir}")
    return 0


# ---------------------------------------------------------------------------
# voxelize


def _voxelize_one(record: SampleRecord, task: str, mode: ReprMode, dims, spacing,
                  grids_dir: Path) -> dict:
    structure, pocket, maps = _load_sample(record, task, mode)
    origin = _sample_origin(structure, task, dims, spacing)
    grids = realize_sample(structure, pocket, mode, maps, dims, spacing, origin)
    data = np.concatenate([g.data for g in grids], axis=0)
    combined = VoxelGrid(dims, spacing, origin, data)
    filename = f"{record.id}.voxb"
    write_voxb(combined, grids_dir / filename, source_tag=mode.value)
    return {
        "file": filename,
        "channels": [g.channels for g in grids],
        "labels": record.labels,
    }


def cmd_voxelize(args) -> int:
    t0 = time.monotonic()
    manifest = load_manifest(args.manifest)
    mode = ReprMode.parse(args.repr)
    dims, spacing = _geometry(args)
    out = Path(args.out)
    dirs = _out_dirs(out)

    records = list(iterate_samples(manifest, args.split_tag))
    workers = _threads()
    results: list[dict]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda r: _voxelize_one(r, args.task, mode, dims, spacing, dirs["grids"]),
                records,
            ))
    else:
        results = [
            _voxelize_one(r, args.task, mode, dims, spacing, dirs["grids"])
            for r in records
        ]

    index = {
        "task": args.task,
        "repr": mode.value,
        "dims": list(dims),
        "spacing": spacing,
        "samples": {r.id: res for r, res in zip(records, results)},
    }
    index_path = dirs["grids"] / "index.json"
    _write_json(index_path, index)
    _run_record(dirs["reports"], "voxelize", vars(args), None,
                {"index": index_path, "grids": dirs["grids"]},
                time.monotonic() - t0,
                metrics={"n_samples": len(records)})
    print(f"voxelized {len(records)} samples ({mode.value}) into {dirs['grids']}")
    return 0


# ---------------------------------------------------------------------------
# split


def _complex_meta(manifest: Manifest) -> list[ComplexMeta]:
    items = []
    for rec in manifest:
        fp = Fingerprint.from_hex(rec.fingerprint_hex) if rec.fingerprint_hex else None
        label = next(iter(rec.labels.values())) if rec.labels else 0.0
        items.append(ComplexMeta(rec.id, rec.sequence, fp, label))
    return items


def cmd_split(args) -> int:
    t0 = time.monotonic()
    manifest = load_manifest(args.manifest)
    fractions = tuple(float(f) for f in args.fractions.split(","))
    pinned: set[str] = set()
    if args.pinned:
        pinned = {
            line.strip() for line in Path(args.pinned).read_text().splitlines()
            if line.strip()
        }
    out = Path(args.out)
    dirs = _out_dirs(out)

    items = _complex_meta(manifest)
    thresholds = {"seq_hi": args.seq_hi, "seq_lo": args.seq_lo, "tanimoto": args.tanimoto}
    clusters = build_linkage(items, args.seq_hi, args.seq_lo, args.tanimoto)
    assignment = assign_splits(clusters, fractions, pinned_test=pinned,
                               seed=args.seed, thresholds=thresholds)
    report = verify_no_leakage(assignment, items, args.seq_hi, args.seq_lo,
                               args.tanimoto)

    split_path = out / "split.json"
    assignment.write(split_path)
    leakage_path = dirs["reports"] / "leakage.json"
    leakage_path.write_text(report.to_json())
    _run_record(dirs["reports"], "split", vars(args), args.seed,
                {"split": split_path, "leakage": leakage_path},
                time.monotonic() - t0,
                metrics={
                    "violations": len(report.violations),
                    "sizes": {s: len(assignment.ids(s)) for s in ("train", "val", "test")},
                })
    if not report.clean:
        print(f"warning: {len(report.violations)} leakage violations", file=sys.stderr)
    print(f"split written to {split_path} "
          f"(train/val/test = {len(assignment.ids('train'))}/"
          f"{len(assignment.ids('val'))}/{len(assignment.ids('test'))})")
    return 0


# ---------------------------------------------------------------------------
# train


def _records_by_split(manifest: Manifest, split_path: str | None) -> dict[str, list[SampleRecord]]:
    groups: dict[str, list[SampleRecord]] = {"train": [], "val": [], "test": []}
    if split_path:
        assignment = SplitAssignment.load(split_path)
        for rec in manifest:
            tag = assignment.assignment.get(rec.id)
            if tag in groups:
                groups[tag].append(rec)
    else:
        for rec in manifest:
            if rec.split in groups:
                groups[rec.split].append(rec)
    return groups


def _label_name(records: list[SampleRecord], requested: str | None) -> str:
    if requested:
        return requested
    keys = sorted({k for rec in records for k in rec.labels})
    if len(keys) != 1:
        raise ConfigError(
            f"--label is required when records carry {len(keys)} label keys ({keys})"
        )
    return keys[0]


def _build_samples(records: list[SampleRecord], task: str, mode: ReprMode,
                   dims, spacing, label_name: str,
                   stats: LabelStats | None) -> list[TrainSample]:
    samples = []
    for rec in records:
        if label_name not in rec.labels:
            raise DataError(f"sample {rec.id!r} has no label {label_name!r}")
        structure, pocket, maps = _load_sample(rec, task, mode)
        origin = _sample_origin(structure, task, dims, spacing)
        label = rec.labels[label_name]
        if stats is not None:
            label = float(normalize(label, stats))

        def realize(rot, structure=structure, pocket=pocket, maps=maps, origin=origin):
            grids = realize_sample(structure, pocket, mode, maps, dims, spacing,
                                   origin, rotation=rot)
            return [g.data for g in grids]

        samples.append(TrainSample(rec.id, label, realize))
    return samples


def _train_once(manifest: Manifest, args, seed: int, fraction: float,
                out_dirs: dict[str, Path], tag: str):
    """Shared by cmd_train and cmd_curve; returns paths and the result."""
    mode = ReprMode.parse(args.repr)
    dims, spacing = _geometry(args)
    groups = _records_by_split(manifest, args.split)
    if not groups["train"] or not groups["val"]:
        raise ConfigError("split has an empty train or val set")
    label_name = _label_name(groups["train"], args.label)

    train_records = groups["train"]
    if fraction < 1.0:
        chosen = set(subset([r.id for r in train_records], fraction, seed=seed))
        train_records = [r for r in train_records if r.id in chosen]
    stats = None
    if not args.no_normalize:
        stats = fit_labels([r.labels[label_name] for r in train_records], label_name)

    train_set = _build_samples(train_records, args.task, mode, dims, spacing,
                               label_name, stats)
    val_set = _build_samples(groups["val"], args.task, mode, dims, spacing,
                             label_name, stats)

    config, params = build_model(
        args.preset,
        in_channels=_in_channels(args.task, mode),
        n_ch=args.nch,
        seed=seed,
        grid_dim=dims[0],
    )
    cfg = TrainConfig(
        batch_size=args.batch,
        epochs=args.epochs,
        patience=args.patience,
        seed=seed,
        augment=args.augment,
        lr=args.lr,
        min_train_loss=args.min_train_loss,
    )
    result = train(config, params, train_set, val_set, cfg)

    ckpt_path = out_dirs["checkpoints"] / f"{tag}.ckpt"
    extra = {
        "repr": mode.value,
        "task": args.task,
        "dims": list(dims),
        "spacing": spacing,
        "label": label_name,
        "trained_on": len(train_set),
        "fraction": fraction,
        "train_seed": seed,
    }
    if stats is not None:
        extra["label_mean"] = stats.mean
        extra["label_std"] = stats.std
    save_checkpoint(ckpt_path, config, result.params, result.adam, extra=extra)
    history_path = out_dirs["reports"] / f"history_{tag}.csv"
    history_path.write_text(history_csv(result.history))
    return ckpt_path, history_path, result, len(train_set)


def cmd_train(args) -> int:
    t0 = time.monotonic()
    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    dirs = _out_dirs(out)
    tag = f"{args.preset}_{args.repr}_f{args.fraction:g}_s{args.seed}"
    ckpt, history, result, n_train = _train_once(
        manifest, args, args.seed, args.fraction, dirs, tag
    )
    _run_record(dirs["reports"], "train", vars(args), args.seed,
                {"checkpoint": ckpt, "history": history},
                time.monotonic() - t0,
                metrics={
                    "n_train": n_train,
                    "best_epoch": result.best_epoch,
                    "best_val_loss": result.best_val_loss,
                    "final_train_loss": result.history[-1][1],
                })
    print(f"trained on {n_train} samples; best val loss "
          f"{result.best_val_loss:.6g} at epoch {result.best_epoch}; "
          f"checkpoint {ckpt}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _evaluate_checkpoint(manifest: Manifest, args, checkpoint_path) -> dict:
    config, params, _, header = load_checkpoint(checkpoint_path)
    mode = ReprMode.parse(header["repr"])
    task = header["task"]
    dims = tuple(header["dims"])
    spacing = header["spacing"]
    label_name = header["label"]
    groups = _records_by_split(manifest, args.split)
    records = groups[args.split_tag]
    if not records:
        raise ConfigError(f"split tag {args.split_tag!r} selects no samples")

    samples = _build_samples(records, task, mode, dims, spacing, label_name, None)
    targets = np.array([r.labels[label_name] for r in records])
    pred = predict_samples(config, params, samples, batch_size=args.batch)
    if "label_mean" in header:
        stats = LabelStats(header["label_mean"], header["label_std"], label_name)
        pred = denormalize(pred, stats)
    value = spearman(pred, targets) if args.metric == "spearman" else mae(pred, targets)
    return {
        "metric": args.metric,
        "value": value,
        "n": len(records),
        "split_tag": args.split_tag,
        "label": label_name,
        "checkpoint": str(checkpoint_path),
    }


def _evaluate_baseline(manifest: Manifest, args) -> dict:
    groups = _records_by_split(manifest, args.split)
    records = groups[args.split_tag]
    train_records = groups["train"]
    if not records or not train_records:
        raise ConfigError("baseline eval needs non-empty train and eval splits")
    label_name = _label_name(train_records, args.label)
    targets = np.array([r.labels[label_name] for r in records])
    mean = float(np.mean([r.labels[label_name] for r in train_records]))
    pred = np.full(targets.shape, mean)
    if args.metric == "spearman":
        raise ConfigError("the mean-predictor baseline has no ranking; use --metric mae")
    return {
        "metric": args.metric,
        "value": mae(pred, targets),
        "n": len(records),
        "split_tag": args.split_tag,
        "label": label_name,
        "baseline": "mean",
    }


def cmd_eval(args) -> int:
    t0 = time.monotonic()
    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    dirs = _out_dirs(out)
    if args.baseline:
        doc = _evaluate_baseline(manifest, args)
        name = f"metric_baseline_{args.metric}.json"
    else:
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required unless --baseline is given")
        if not Path(args.checkpoint).exists():
            raise ConfigError(f"checkpoint file does not exist: {args.checkpoint}")
        doc = _evaluate_checkpoint(manifest, args, args.checkpoint)
        name = f"metric_{Path(args.checkpoint).stem}_{args.metric}.json"
    metric_path = dirs["reports"] / name
    _write_json(metric_path, doc)
    _run_record(dirs["reports"], "eval", vars(args), None,
                {"metric": metric_path}, time.monotonic() - t0, metrics=doc)
    print(f"{doc['metric']} = {doc['value']:.6g} on {doc['n']} samples "
          f"({args.split_tag}); wrote {metric_path}")
    return 0


# ---------------------------------------------------------------------------
# curve


def _curve_svg(points: dict[float, tuple[float, float]], metric: str) -> str:
    """Line chart with per-fraction mean and std error bars.

    Plotted values are embedded as data-* attributes so downstream checks
    can recompute them without parsing coordinates.
    """
    width, height, margin = 480, 320, 50
    fractions = sorted(points)
    lo_x, hi_x = np.log10(fractions[0]), np.log10(fractions[-1])
    if hi_x == lo_x:
        hi_x = lo_x + 1.0
    values = [points[f][0] for f in fractions]
    stds = [points[f][1] for f in fractions]
    lo_y = min(v - s for v, s in zip(values, stds))
    hi_y = max(v + s for v, s in zip(values, stds))
    if hi_y == lo_y:
        hi_y = lo_y + 1.0
    pad = 0.05 * (hi_y - lo_y)
    lo_y, hi_y = lo_y - pad, hi_y + pad

    def sx(f):
        return margin + (np.log10(f) - lo_x) / (hi_x - lo_x) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - lo_y) / (hi_y - lo_y) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">training fraction (log scale)</text>',
        f'<text x="14" y="{height / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2})">{metric}</text>',
    ]
    coords = " ".join(f"{sx(f):.2f},{sy(points[f][0]):.2f}" for f in fractions)
    parts.append(f'<polyline points="{coords}" fill="none" stroke="#1f6fb2" '
                 f'stroke-width="1.5"/>')
    for f in fractions:
        v, s = points[f]
        x, y = sx(f), sy(v)
        parts.append(
            f'<line x1="{x:.2f}" y1="{sy(v - s):.2f}" x2="{x:.2f}" '
            f'y2="{sy(v + s):.2f}" stroke="#1f6fb2"/>'
        )
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="#1f6fb2" '
            f'data-fraction="{f!r}" data-mean="{v!r}" data-std="{s!r}"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{height - margin + 16}" text-anchor="middle" '
            f'font-size="10">{f:g}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_curve(args) -> int:
    t0 = time.monotonic()
    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    dirs = _out_dirs(out)
    fractions = [float(f) for f in args.fractions.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]

    cells = [(f, s) for f in fractions for s in seeds]

    def run_cell(cell):
        fraction, seed = cell
        tag = f"{args.preset}_{args.repr}_f{fraction:g}_s{seed}"
        ckpt, _, _, _ = _train_once(manifest, args, seed, fraction, dirs, tag)
        eval_args = argparse.Namespace(
            split=args.split, split_tag=args.split_tag, metric=args.metric,
            batch=args.batch, baseline=False, checkpoint=str(ckpt), label=args.label,
        )
        doc = _evaluate_checkpoint(manifest, eval_args, ckpt)
        return fraction, seed, doc["value"]

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    csv_lines = ["fraction,seed,metric"]
    for fraction, seed, value in rows:
        csv_lines.append(f"{fraction!r},{seed},{value!r}")
    csv_path = dirs["reports"] / "curve.csv"
    csv_path.write_text("\n".join(csv_lines) + "\n")

    points = {}
    for f in fractions:
        vals = np.array([v for ff, _, v in rows if ff == f], dtype=np.float64)
        points[f] = (float(vals.mean()), float(vals.std()))
    svg_path = dirs["reports"] / "curve.svg"
    svg_path.write_text(_curve_svg(points, args.metric))

    _run_record(dirs["reports"], "curve", vars(args), args.seeds,
                {"csv": csv_path, "svg": svg_path}, time.monotonic() - t0,
                metrics={"cells": len(rows)})
    print(f"curve over {len(rows)} cells written to {csv_path} and {svg_path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_geometry_flags(p: argparse.ArgumentParser):
    p.add_argument("--dims", help="grid dims as 'n' or 'nx,ny,nz' (default per task)")
    p.add_argument("--spacing", type=float, help="voxel edge in Angstrom")


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", help="split JSON from the split command")
    p.add_argument("--preset", required=True)
    p.add_argument("--repr", required=True,
                   choices=[m.value for m in ReprMode])
    p.add_argument("--task", default="molecule", choices=["complex", "molecule"])
    p.add_argument("--label", help="label key (defaults to the only key present)")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--augment", action="store_true")
    p.add_argument("--nch", type=int, help="override encoder base width")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip label z-scoring")
    p.add_argument("--min-train-loss", type=float,
                   help="stop once train MSE drops below this")
    _add_geometry_flags(p)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxgrid",
        description="Voxel representations, leakage-controlled splits, 3D CNN training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--kind", choices=["molecule", "complex"], default="molecule")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-maps", action="store_true")
    p.add_argument("--shape-weight", type=float, default=2.0)
    _add_geometry_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("synth-density", help="generate synthetic density maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sigma", type=float, default=0.4)
    _add_geometry_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_density)

    p = sub.add_parser("voxelize", help="write VOXB grids for every sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--repr", required=True, choices=[m.value for m in ReprMode])
    p.add_argument("--task", default="molecule", choices=["complex", "molecule"])
    p.add_argument("--split-tag", choices=["train", "val", "test"])
    _add_geometry_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("split", help="leakage-controlled split assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fractions", default="0.68,0.06,0.26")
    p.add_argument("--pinned", help="newline-delimited ids pinned to test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seq-hi", type=float, default=0.5)
    p.add_argument("--seq-lo", type=float, default=0.4)
    p.add_argument("--tanimoto", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model")
    _add_train_flags(p)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", help="split JSON from the split command")
    p.add_argument("--split-tag", default="test", choices=["train", "val", "test"])
    p.add_argument("--checkpoint")
    p.add_argument("--metric", default="mae", choices=["spearman", "mae"])
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--baseline", choices=["mean"],
                   help="evaluate the train-mean predictor instead of a checkpoint")
    p.add_argument("--label")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="data-efficiency sweep (fractions x seeds)")
    _add_train_flags(p)
    p.add_argument("--fractions", default="0.01,0.05,0.1,0.25,0.5,1.0")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--split-tag", default="test", choices=["train", "val", "test"])
    p.add_argument("--metric", default="mae", choices=["spearman", "mae"])
    p.set_defaults(func=cmd_curve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VoxgridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
