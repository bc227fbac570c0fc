import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from voxgrid.cli import main
from voxgrid.density import read_voxb
from voxgrid.manifest import load_manifest

FAST_TRAIN = [
    "--preset", "qm9_tiny", "--nch", "2",
    "--dims", "12", "--spacing", "0.5",
    "--epochs", "3", "--batch", "4", "--lr", "1e-3",
]


@pytest.fixture(scope="module")
def molecule_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("mols")
    assert main(["generate", "--kind", "molecule", "--n", "12", "--seed", "3",
                 "--dims", "16", "--spacing", "0.5", "--out", str(root)]) == 0
    assert main(["split", "--manifest", str(root / "manifest.json"),
                 "--fractions", "0.5,0.25,0.25", "--seed", "1",
                 "--out", str(root)]) == 0
    return root


@pytest.fixture(scope="module")
def complex_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cplx")
    assert main(["generate", "--kind", "complex", "--n", "6", "--seed", "5",
                 "--dims", "24", "--spacing", "0.35", "--out", str(root)]) == 0
    return root


class TestGenerateAndVoxelize:
    def test_molecule_shape_repr(self, molecule_dataset, tmp_path):
        out = tmp_path / "vox"
        code = main(["voxelize", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--repr", "shape", "--task", "molecule", "--out", str(out)])
        assert code == 0
        index = json.loads((out / "grids" / "index.json").read_text())
        assert len(index["samples"]) == 12
        one = next(iter(index["samples"].values()))
        grid, tag = read_voxb(out / "grids" / one["file"])
        assert tag == "shape"
        assert grid.shape == (1, 32, 32, 32)

    def test_complex_atomtype_channel_blocks(self, complex_dataset, tmp_path):
        out = tmp_path / "vox"
        code = main(["voxelize", "--manifest", str(complex_dataset / "manifest.json"),
                     "--repr", "atomtype", "--task", "complex",
                     "--dims", "24", "--spacing", "0.35", "--out", str(out)])
        assert code == 0
        index = json.loads((out / "grids" / "index.json").read_text())
        one = next(iter(index["samples"].values()))
        assert one["channels"] == [7, 4]
        grid, _ = read_voxb(out / "grids" / one["file"])
        assert grid.channels == 11

    def test_gradmag_without_maps_exits_2(self, tmp_path):
        root = tmp_path / "nomaps"
        assert main(["generate", "--kind", "molecule", "--n", "2", "--no-maps",
                     "--out", str(root)]) == 0
        code = main(["voxelize", "--manifest", str(root / "manifest.json"),
                     "--repr", "gradmag", "--task", "molecule",
                     "--out", str(tmp_path / "v")])
        assert code == 2

    def test_density_mode_uses_manifest_maps(self, molecule_dataset, tmp_path):
        out = tmp_path / "dens"
        code = main(["voxelize", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--repr", "density", "--task", "molecule",
                     "--dims", "16", "--spacing", "0.5", "--out", str(out)])
        assert code == 0
        index = json.loads((out / "grids" / "index.json").read_text())
        one = next(iter(index["samples"].values()))
        grid, _ = read_voxb(out / "grids" / one["file"])
        assert grid.channels == 1
        assert float(grid.data.sum()) > 0.0


class TestSplitCommand:
    def test_hundred_singletons_hit_targets_exactly(self, tmp_path):
        # molecules carry no sequences, so every item is its own cluster
        # and greedy packing lands exactly on the target fractions
        root = tmp_path / "m100"
        assert main(["generate", "--kind", "molecule", "--n", "100", "--no-maps",
                     "--seed", "0", "--out", str(root)]) == 0
        out = tmp_path / "s100"
        assert main(["split", "--manifest", str(root / "manifest.json"),
                     "--fractions", "0.8,0.1,0.1", "--seed", "5",
                     "--out", str(out)]) == 0
        split = json.loads((out / "split.json").read_text())
        from collections import Counter
        counts = Counter(split["assignment"].values())
        assert counts == {"train": 80, "val": 10, "test": 10}
        leakage = json.loads((out / "reports" / "leakage.json").read_text())
        assert leakage["violations"] == []

    def test_split_sizes_and_clean_report(self, tmp_path):
        root = tmp_path / "many"
        assert main(["generate", "--kind", "complex", "--n", "40", "--no-maps",
                     "--seed", "11", "--out", str(root)]) == 0
        out = tmp_path / "split"
        code = main(["split", "--manifest", str(root / "manifest.json"),
                     "--fractions", "0.8,0.1,0.1", "--seed", "4", "--out", str(out)])
        assert code == 0
        split = json.loads((out / "split.json").read_text())
        assert len(split["assignment"]) == 40
        leakage = json.loads((out / "reports" / "leakage.json").read_text())
        assert leakage["violations"] == []

    def test_rerun_same_seed_identical_bytes(self, tmp_path):
        root = tmp_path / "ds"
        assert main(["generate", "--kind", "complex", "--n", "15", "--no-maps",
                     "--seed", "2", "--out", str(root)]) == 0

        def run(out):
            assert main(["split", "--manifest", str(root / "manifest.json"),
                         "--fractions", "0.7,0.15,0.15", "--seed", "9",
                         "--out", str(out)]) == 0
            return (out / "split.json").read_bytes()

        assert run(tmp_path / "a") == run(tmp_path / "b")

    def test_unknown_pinned_id_exits_2(self, tmp_path):
        root = tmp_path / "p"
        assert main(["generate", "--kind", "complex", "--n", "4", "--no-maps",
                     "--out", str(root)]) == 0
        pinned = tmp_path / "pinned.txt"
        pinned.write_text("cx-9999\n")
        code = main(["split", "--manifest", str(root / "manifest.json"),
                     "--pinned", str(pinned), "--out", str(tmp_path / "s")])
        assert code == 2

    def test_pinned_ids_reserved_for_test(self, tmp_path):
        root = tmp_path / "pin2"
        assert main(["generate", "--kind", "complex", "--n", "10", "--no-maps",
                     "--seed", "8", "--out", str(root)]) == 0
        pinned = tmp_path / "pinned.txt"
        pinned.write_text("cx-0003\ncx-0007\n")
        out = tmp_path / "s2"
        assert main(["split", "--manifest", str(root / "manifest.json"),
                     "--pinned", str(pinned), "--out", str(out)]) == 0
        split = json.loads((out / "split.json").read_text())
        assert split["assignment"]["cx-0003"] == "test"
        assert split["assignment"]["cx-0007"] == "test"


class TestTrainEval:
    def test_train_writes_checkpoint_and_history(self, molecule_dataset, tmp_path):
        out = tmp_path / "run"
        code = main(["train", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--split", str(molecule_dataset / "split.json"),
                     "--repr", "shape", "--task", "molecule", "--seed", "1",
                     *FAST_TRAIN, "--out", str(out)])
        assert code == 0
        ckpts = list((out / "checkpoints").glob("*.ckpt"))
        assert len(ckpts) == 1
        hist = list((out / "reports").glob("history_*.csv"))
        assert len(hist) == 1
        lines = hist[0].read_text().strip().split("\n")
        assert lines[0] == "epoch,train_loss,val_loss"
        assert len(lines) == 4  # 3 epochs

    def test_fraction_subsets_training_set(self, molecule_dataset, tmp_path):
        out = tmp_path / "frac"
        code = main(["train", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--split", str(molecule_dataset / "split.json"),
                     "--repr", "shape", "--task", "molecule", "--seed", "1",
                     "--fraction", "0.34", *FAST_TRAIN, "--out", str(out)])
        assert code == 0
        record = json.loads((out / "reports" / "run_train.json").read_text())
        # 6 train samples * 0.34 rounds to 2
        assert record["metrics"]["n_train"] == 2

    def test_train_determinism_bitwise_history(self, molecule_dataset, tmp_path):
        def run(out):
            code = main(["train", "--manifest", str(molecule_dataset / "manifest.json"),
                         "--split", str(molecule_dataset / "split.json"),
                         "--repr", "atomtype", "--task", "molecule", "--seed", "7",
                         "--augment", *FAST_TRAIN, "--out", str(out)])
            assert code == 0
            (hist,) = (out / "reports").glob("history_*.csv")
            return hist.read_bytes()

        assert run(tmp_path / "r1") == run(tmp_path / "r2")

    def test_eval_and_metric_json_deterministic(self, molecule_dataset, tmp_path):
        out = tmp_path / "ev"
        assert main(["train", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--split", str(molecule_dataset / "split.json"),
                     "--repr", "shape", "--task", "molecule", "--seed", "2",
                     *FAST_TRAIN, "--out", str(out)]) == 0
        (ckpt,) = (out / "checkpoints").glob("*.ckpt")

        def evaluate(dest):
            assert main(["eval", "--manifest", str(molecule_dataset / "manifest.json"),
                         "--split", str(molecule_dataset / "split.json"),
                         "--checkpoint", str(ckpt), "--metric", "mae",
                         "--out", str(dest)]) == 0
            (metric,) = (dest / "reports").glob("metric_*.json")
            return metric.read_bytes()

        a = evaluate(tmp_path / "e1")
        b = evaluate(tmp_path / "e2")
        assert a == b
        doc = json.loads(a)
        assert doc["metric"] == "mae"
        assert doc["n"] == 3

    def test_missing_checkpoint_exits_2(self, molecule_dataset, tmp_path):
        code = main(["eval", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--split", str(molecule_dataset / "split.json"),
                     "--checkpoint", str(tmp_path / "ghost.ckpt"),
                     "--out", str(tmp_path / "e")])
        assert code == 2

    def test_mean_baseline_matches_mad(self, molecule_dataset, tmp_path):
        out = tmp_path / "base"
        assert main(["eval", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--split", str(molecule_dataset / "split.json"),
                     "--baseline", "mean", "--metric", "mae",
                     "--out", str(out)]) == 0
        (metric,) = (out / "reports").glob("metric_baseline_*.json")
        doc = json.loads(metric.read_text())

        manifest = load_manifest(molecule_dataset / "manifest.json")
        split = json.loads((molecule_dataset / "split.json").read_text())["assignment"]
        train_labels = [r.labels["y"] for r in manifest if split[r.id] == "train"]
        test_labels = [r.labels["y"] for r in manifest if split[r.id] == "test"]
        expect = float(np.mean(np.abs(np.array(test_labels) - np.mean(train_labels))))
        assert doc["value"] == pytest.approx(expect, rel=1e-12)

    def test_complex_task_dual_encoder_trains(self, complex_dataset, tmp_path):
        ds = complex_dataset
        assert main(["split", "--manifest", str(ds / "manifest.json"),
                     "--fractions", "0.5,0.25,0.25", "--seed", "2",
                     "--out", str(tmp_path / "sp")]) == 0
        out = tmp_path / "cx"
        code = main(["train", "--manifest", str(ds / "manifest.json"),
                     "--split", str(tmp_path / "sp" / "split.json"),
                     "--repr", "atomtype", "--task", "complex",
                     "--preset", "pdbbind_tiny", "--dims", "16",
                     "--spacing", "0.5", "--epochs", "2", "--batch", "2",
                     "--lr", "1e-3", "--augment", "--seed", "4",
                     "--out", str(out)])
        assert code == 0
        (ckpt,) = (out / "checkpoints").glob("*.ckpt")
        assert main(["eval", "--manifest", str(ds / "manifest.json"),
                     "--split", str(tmp_path / "sp" / "split.json"),
                     "--checkpoint", str(ckpt), "--metric", "mae",
                     "--split-tag", "val", "--out", str(out)]) == 0

    def test_divergence_exits_3(self, molecule_dataset, tmp_path):
        code = main(["train", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--split", str(molecule_dataset / "split.json"),
                     "--repr", "shape", "--task", "molecule", "--seed", "1",
                     "--preset", "qm9_tiny", "--nch", "2", "--dims", "12",
                     "--spacing", "0.5", "--epochs", "30", "--batch", "4",
                     "--lr", "1e24", "--out", str(tmp_path / "x")])
        assert code == 3


class TestCurve:
    def test_grid_of_cells_and_svg(self, molecule_dataset, tmp_path):
        out = tmp_path / "curve"
        code = main(["curve", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--split", str(molecule_dataset / "split.json"),
                     "--repr", "shape", "--task", "molecule",
                     "--fractions", "0.5,1.0", "--seeds", "1,2",
                     "--metric", "mae", *FAST_TRAIN, "--out", str(out)])
        assert code == 0
        csv_lines = (out / "reports" / "curve.csv").read_text().strip().split("\n")
        assert csv_lines[0] == "fraction,seed,metric"
        assert len(csv_lines) == 5  # 2 fractions x 2 seeds

        # SVG means must match a recomputation from the CSV rows
        rows = [line.split(",") for line in csv_lines[1:]]
        by_fraction = {}
        for fraction, _, value in rows:
            by_fraction.setdefault(float(fraction), []).append(float(value))
        svg = ET.parse(out / "reports" / "curve.svg").getroot()
        circles = [e for e in svg.iter() if e.tag.endswith("circle")]
        assert len(circles) == 2
        for c in circles:
            f = float(c.attrib["data-fraction"])
            mean = float(c.attrib["data-mean"])
            assert mean == pytest.approx(np.mean(by_fraction[f]), rel=1e-12)

    def test_single_cell_still_valid_svg(self, molecule_dataset, tmp_path):
        out = tmp_path / "c1"
        code = main(["curve", "--manifest", str(molecule_dataset / "manifest.json"),
                     "--split", str(molecule_dataset / "split.json"),
                     "--repr", "shape", "--task", "molecule",
                     "--fractions", "1.0", "--seeds", "3",
                     "--metric", "mae", *FAST_TRAIN, "--out", str(out)])
        assert code == 0
        svg = ET.parse(out / "reports" / "curve.svg").getroot()
        assert svg.tag.endswith("svg")


class TestThreadedVoxelize:
    def test_worker_pool_matches_sequential_output(self, molecule_dataset,
                                                   tmp_path, monkeypatch):
        manifest = str(molecule_dataset / "manifest.json")

        def run(out, threads):
            monkeypatch.setenv("VOXGRID_THREADS", threads)
            assert main(["voxelize", "--manifest", manifest, "--repr", "shape",
                         "--task", "molecule", "--dims", "16", "--spacing",
                         "0.5", "--out", str(out)]) == 0
            index = json.loads((out / "grids" / "index.json").read_text())
            blobs = {
                sid: (out / "grids" / entry["file"]).read_bytes()
                for sid, entry in index["samples"].items()
            }
            return blobs

        sequential = run(tmp_path / "seq", "1")
        threaded = run(tmp_path / "par", "2")
        assert sequential == threaded


class TestSubprocessEntry:
    def test_module_invocation_smoke(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "voxgrid.cli", "generate", "--kind", "molecule",
             "--n", "2", "--no-maps", "--out", str(tmp_path / "d")],
            capture_output=True, text=True,
        )
        assert result.returncode == 0, result.stderr
        assert (tmp_path / "d" / "manifest.json").exists()

    def test_bad_flags_exit_2(self):
        result = subprocess.run(
            [sys.executable, "-m", "voxgrid.cli", "voxelize", "--repr", "bogus"],
            capture_output=True, text=True,
        )
        assert result.returncode == 2
