"""Block partition/assembly: counts, ordering, padding, round trips, errors."""

import numpy as np
import pytest

from sparsebeam.errors import AssemblyError, ConfigurationError, ShapeError
from sparsebeam.grid import SubVolume, SubVolumeGrid, assemble, partition


class TestGridGeometry:
    def test_padding_of_20_cube(self):
        grid = SubVolumeGrid((20, 20, 20))
        assert grid.padded_dims == (32, 32, 32)
        assert grid.blocks_per_axis == (2, 2, 2)
        assert grid.count == 8

    def test_exact_multiple_needs_no_padding(self):
        grid = SubVolumeGrid((32, 48, 16))
        assert grid.padded_dims == (32, 48, 16)
        assert grid.count == 2 * 3 * 1

    def test_lexicographic_ordering(self):
        grid = SubVolumeGrid((16, 32, 48))
        assert grid.blocks_per_axis == (1, 2, 3)
        coords = [grid.block_coords(i) for i in range(grid.count)]
        assert coords == sorted(coords)
        assert coords == [(0, 0, 0), (0, 0, 1), (0, 0, 2),
                          (0, 1, 0), (0, 1, 1), (0, 1, 2)]

    def test_stride_must_equal_sub_size(self):
        with pytest.raises(ConfigurationError):
            SubVolumeGrid((32, 32, 32), sub_size=(16, 16, 16), stride=(8, 8, 8))

    def test_bad_dims(self):
        with pytest.raises(ConfigurationError):
            SubVolumeGrid((0, 16, 16))
        with pytest.raises(ConfigurationError):
            SubVolumeGrid((16, 16))

    def test_dict_round_trip(self):
        grid = SubVolumeGrid((60, 96, 96))
        back = SubVolumeGrid.from_dict(grid.to_dict())
        assert back.source_dims == grid.source_dims
        assert back.padded_dims == grid.padded_dims


class TestPartitionAssemble:
    @pytest.mark.parametrize("dims", [(16, 16, 16), (20, 20, 20), (47, 33, 20),
                                      (60, 96, 96), (5, 5, 5)])
    def test_round_trip_bit_exact(self, dims):
        grid = SubVolumeGrid(dims)
        field = np.random.default_rng(sum(dims)).normal(size=dims).astype(np.float32)
        blocks = partition(field, grid)
        assert len(blocks) == grid.count
        back = assemble(blocks, grid)
        assert back.dtype == field.dtype
        np.testing.assert_array_equal(back, field)

    def test_blocks_match_manual_slices_and_padding_is_zero(self):
        grid = SubVolumeGrid((20, 20, 20))
        field = np.arange(20 ** 3, dtype=np.float32).reshape(20, 20, 20)
        blocks = partition(field, grid)
        first = blocks[0]
        np.testing.assert_array_equal(first.data, field[:16, :16, :16])
        last = blocks[-1]
        assert last.coords == (1, 1, 1)
        np.testing.assert_array_equal(last.data[:4, :4, :4], field[16:, 16:, 16:])
        assert np.all(last.data[4:, :, :] == 0)
        assert np.all(last.data[:, 4:, :] == 0)
        assert np.all(last.data[:, :, 4:] == 0)

    def test_assembly_order_does_not_matter(self):
        grid = SubVolumeGrid((32, 32, 32))
        field = np.random.default_rng(3).normal(size=(32, 32, 32))
        blocks = partition(field, grid)
        np.testing.assert_array_equal(assemble(blocks[::-1], grid), field)

    def test_wrong_field_shape(self):
        with pytest.raises(ShapeError):
            partition(np.zeros((8, 8, 8)), SubVolumeGrid((16, 16, 16)))

    def test_missing_block(self):
        grid = SubVolumeGrid((32, 16, 16))
        blocks = partition(np.zeros((32, 16, 16)), grid)
        with pytest.raises(AssemblyError, match="missing"):
            assemble(blocks[:1], grid)

    def test_duplicate_block(self):
        grid = SubVolumeGrid((32, 16, 16))
        blocks = partition(np.zeros((32, 16, 16)), grid)
        with pytest.raises(AssemblyError, match="duplicate"):
            assemble([blocks[0], blocks[0]], grid)

    def test_alien_block_index(self):
        grid = SubVolumeGrid((16, 16, 16))
        bad = SubVolume(index=5, coords=(0, 0, 0), data=np.zeros((16, 16, 16)))
        with pytest.raises(AssemblyError):
            assemble([bad], grid)

    def test_wrong_block_shape(self):
        grid = SubVolumeGrid((16, 16, 16))
        bad = SubVolume(index=0, coords=(0, 0, 0), data=np.zeros((8, 8, 8)))
        with pytest.raises(AssemblyError):
            assemble([bad], grid)
