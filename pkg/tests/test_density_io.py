import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voxgrid.density import DensityMap, read_map, read_voxb, synth_density, write_map, write_voxb
from voxgrid.errors import ArgumentError, FormatError
from voxgrid.grid import VoxelGrid
from voxgrid.voxelize import ELECTRON_COUNT, Atom, Structure, molecule_grid_origin


def random_map(rng, dims=(4, 5, 6), channels=1):
    data = rng.normal(size=(channels,) + dims).astype(np.float32)
    grid = VoxelGrid(dims, 0.25, (0.5, -1.0, 2.0), data)
    return DensityMap(grid, source_tag="synthetic")


class TestVoxbRoundTrip:
    def test_fields_and_payload_bitwise(self, tmp_path):
        m = random_map(np.random.default_rng(0))
        path = tmp_path / "m.voxb"
        write_map(m, path)
        back = read_map(path)
        assert back.grid.dims == m.grid.dims
        assert back.grid.spacing == m.grid.spacing
        assert np.array_equal(back.grid.origin, m.grid.origin)
        assert back.source_tag == m.source_tag
        assert back.grid.data.tobytes() == m.grid.data.tobytes()

    def test_multichannel_grid_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.normal(size=(7, 3, 4, 5)).astype(np.float32)
        grid = VoxelGrid((3, 4, 5), 0.25, (0, 0, 0), data)
        path = tmp_path / "g.voxb"
        write_voxb(grid, path, "ligand+pocket")
        back, tag = read_voxb(path)
        assert tag == "ligand+pocket"
        assert back.data.tobytes() == grid.data.tobytes()

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 31 - 1))
    def test_arbitrary_finite_bit_patterns(self, seed, tmp_path_factory):
        # round trip must preserve every finite f32 bit pattern, including
        # negative zero and denormals
        rng = np.random.default_rng(seed)
        bits = rng.integers(0, 2 ** 32, size=2 * 2 * 3 * 2, dtype=np.uint64).astype(np.uint32)
        vals = bits.view(np.float32).copy()
        vals[~np.isfinite(vals)] = np.float32(-0.0)
        vals[0] = np.float32(-0.0)
        grid = VoxelGrid((2, 3, 2), 1.0, (0, 0, 0), vals.reshape(2, 2, 3, 2))
        path = tmp_path_factory.mktemp("voxb") / "bits.voxb"
        write_voxb(grid, path, "")
        back, _ = read_voxb(path)
        assert back.data.tobytes() == grid.data.tobytes()


class TestVoxbErrors:
    def test_bad_magic_offset_zero(self, tmp_path):
        path = tmp_path / "bad.voxb"
        path.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(FormatError, match="offset 0") as err:
            read_voxb(path)
        assert err.value.offset == 0

    def test_truncated_payload_names_byte_counts(self, tmp_path):
        m = random_map(np.random.default_rng(2), dims=(3, 3, 3))
        path = tmp_path / "short.voxb"
        write_map(m, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(FormatError, match=r"expected 108 bytes"):
            read_voxb(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "tiny.voxb"
        path.write_bytes(b"VOXB" + struct.pack("<I", 1))
        with pytest.raises(FormatError):
            read_voxb(path)

    def test_unsupported_version(self, tmp_path):
        m = random_map(np.random.default_rng(3))
        path = tmp_path / "v9.voxb"
        write_map(m, path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version 9"):
            read_voxb(path)

    def test_multichannel_density_map_rejected(self):
        grid = VoxelGrid((2, 2, 2), 1.0, (0, 0, 0), np.zeros((2, 2, 2, 2), np.float32))
        with pytest.raises(ArgumentError):
            DensityMap(grid)


class TestSynthDensity:
    def test_carbon_integral_is_six_electrons(self):
        s = Structure("c", (Atom("C", (0.05, -0.03, 0.08)),))
        dims = (32, 32, 32)
        origin = molecule_grid_origin((0, 0, 0), dims, 0.25)
        m = synth_density(s, dims, 0.25, origin)
        integral = float(m.grid.data.astype(np.float64).sum()) * 0.25 ** 3
        assert abs(integral - 6.0) / 6.0 < 0.01

    def test_total_electron_count_multi_atom(self):
        atoms = (Atom("C", (0.4, 0, 0)), Atom("O", (-0.4, 0.3, 0)), Atom("H", (0, -0.5, 0.2)))
        s = Structure("m", atoms)
        dims = (40, 40, 40)
        origin = molecule_grid_origin((0, 0, 0), dims, 0.25)
        m = synth_density(s, dims, 0.25, origin)
        integral = float(m.grid.data.astype(np.float64).sum()) * 0.25 ** 3
        expect = sum(ELECTRON_COUNT[a.element] for a in atoms)
        assert abs(integral - expect) / expect < 0.01

    def test_far_region_below_threshold(self):
        s = Structure("c", (Atom("C", (0, 0, 0)),))
        dims = (48, 48, 48)
        origin = molecule_grid_origin((0, 0, 0), dims, 0.25)
        m = synth_density(s, dims, 0.25, origin)
        ax = origin[0] + 0.25 * np.arange(48)
        x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
        far = np.sqrt(x * x + y * y + z * z) > 3.0
        assert np.all(m.grid.data[0][far] < 1e-6)

    def test_superposed_atoms_double_exactly(self):
        one = Structure("a", (Atom("N", (0.2, 0.1, 0.0)),))
        two = Structure("aa", (Atom("N", (0.2, 0.1, 0.0)), Atom("N", (0.2, 0.1, 0.0))))
        dims = (24, 24, 24)
        origin = molecule_grid_origin((0, 0, 0), dims, 0.25)
        m1 = synth_density(one, dims, 0.25, origin)
        m2 = synth_density(two, dims, 0.25, origin)
        assert np.array_equal(m2.grid.data, 2.0 * m1.grid.data)

    def test_translation_equivariance_bitwise(self):
        # exactly representable shift: same relative geometry, same bits
        shift = np.array([1.25, -0.5, 2.0])
        atoms = (Atom("C", (0.25, 0.5, -0.25)), Atom("O", (-0.5, 0.0, 0.75)))
        s1 = Structure("s", atoms)
        s2 = Structure("s", tuple(Atom(a.element, a.position + shift) for a in atoms))
        dims = (20, 20, 20)
        origin = molecule_grid_origin((0, 0, 0), dims, 0.25)
        m1 = synth_density(s1, dims, 0.25, origin)
        m2 = synth_density(s2, dims, 0.25, origin + shift)
        assert np.array_equal(m1.grid.data, m2.grid.data)
