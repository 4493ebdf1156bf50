"""Bin arithmetic of the staged depth search.

The subdivision keeps, per pixel, a window of n_bins contiguous bins that
halves in width every stage while padding extra bins around the chosen one
so a single misclassification stays recoverable. These tests pin the width
law, the label/validity rules, the window reconstruction, and the padding
behavior, mostly against hand-computed columns.
"""

import numpy as np
import pytest

from binsweep import (
    DepthRange,
    SearchConfig,
    bin_centers,
    bin_labels,
    initial_bins,
    neutral_params,
    stage_bin_width,
    update_bins,
)
from binsweep.search import stage_level, upsample_edges, upsample_map


def column(values):
    return np.asarray(values, dtype=np.float64).reshape(-1, 1, 1)


class TestInitialBins:
    def test_uniform_partition_of_range(self):
        rng = DepthRange(2.0, 10.0)
        edges = initial_bins(rng, 4, (3, 5))
        assert edges.shape == (5, 3, 5)
        np.testing.assert_allclose(edges[0], 2.0, atol=0)
        np.testing.assert_allclose(edges[-1], 10.0, atol=0)
        np.testing.assert_allclose(np.diff(edges, axis=0), 2.0, atol=1e-12)

    def test_range_rejects_nonpositive_min(self):
        with pytest.raises(ValueError):
            DepthRange(0.0, 10.0)
        with pytest.raises(ValueError):
            DepthRange(5.0, 5.0)


class TestWidthLaw:
    def test_matches_repeated_subdivision(self):
        """stage_bin_width(k) equals the width actually produced by k - 1
        applications of update_bins."""
        rng = DepthRange(1.0, 511.0)
        edges = initial_bins(rng, 4, (1, 1))
        for stage in range(1, 9):
            widths = np.diff(edges, axis=0)
            np.testing.assert_allclose(widths, stage_bin_width(rng, 4, stage),
                                       rtol=1e-12)
            labels, valid = bin_labels(edges, np.full((1, 1), 300.0))
            assert valid.all()
            edges = update_bins(edges, labels, rng.d_min)

    def test_two_bin_width_law(self):
        rng = DepthRange(1.0, 9.0)
        assert stage_bin_width(rng, 2, 1) == 4.0
        assert stage_bin_width(rng, 2, 4) == 0.5


class TestBinLabels:
    def test_hand_computed_column(self):
        edges = column([10.0, 20.0, 30.0, 40.0, 50.0])
        cases = [(45.0, 3, True), (10.0, 0, True), (20.0, 1, True),
                 (29.999, 1, True), (5.0, None, False), (50.0, None, False),
                 (120.0, None, False)]
        for depth, want_label, want_valid in cases:
            labels, valid = bin_labels(edges, np.full((1, 1), depth))
            assert bool(valid[0, 0]) is want_valid, depth
            if want_valid:
                assert labels[0, 0] == want_label, depth

    def test_lower_edge_inclusive_upper_exclusive(self):
        edges = column([1.0, 2.0, 3.0])
        for depth, valid_want in [(1.0, True), (3.0, False)]:
            _, valid = bin_labels(edges, np.full((1, 1), depth))
            assert bool(valid[0, 0]) is valid_want

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(21)
        edges = initial_bins(DepthRange(4.0, 36.0), 4, (6, 7))
        depth = rng.uniform(0.0, 40.0, size=(6, 7))
        labels, valid = bin_labels(edges, depth)
        for y in range(6):
            for x in range(7):
                col = edges[:, y, x]
                d = depth[y, x]
                inside = bool(col[0] <= d < col[-1])
                assert bool(valid[y, x]) is inside
                if inside:
                    assert col[labels[y, x]] <= d < col[labels[y, x] + 1]


class TestUpdateBins:
    def test_four_bin_window_hand_computed(self):
        """Chosen bin [30, 40) halves; one new-width bin pads each side."""
        edges = column([10.0, 20.0, 30.0, 40.0, 50.0])
        new = update_bins(edges, np.full((1, 1), 2, dtype=np.int64), 1.0)
        np.testing.assert_allclose(new[:, 0, 0], [25.0, 30.0, 35.0, 40.0, 45.0],
                                   atol=1e-12)

    def test_two_bin_window_halves_chosen_bin(self):
        edges = column([10.0, 30.0, 50.0])
        new = update_bins(edges, np.zeros((1, 1), dtype=np.int64), 1.0)
        np.testing.assert_allclose(new[:, 0, 0], [10.0, 20.0, 30.0], atol=1e-12)

    def test_padded_window_keeps_depth_after_off_by_one(self):
        """A depth just inside the neighbor of the chosen bin stays inside
        the padded four-bin window."""
        edges = column([10.0, 20.0, 30.0, 40.0, 50.0])
        depth = np.full((1, 1), 31.0)
        wrong = np.full((1, 1), 1, dtype=np.int64)
        new = update_bins(edges, wrong, 1.0)
        _, valid = bin_labels(new, depth)
        assert valid.all()

    def test_low_window_shifts_to_keep_centers_positive(self):
        edges = column([0.1, 2.1, 4.1, 6.1, 8.1])
        new = update_bins(edges, np.zeros((1, 1), dtype=np.int64), 0.1)
        centers = bin_centers(new)
        np.testing.assert_allclose(centers[0, 0, 0], 0.05, atol=1e-12)
        np.testing.assert_allclose(np.diff(new[:, 0, 0]), 1.0, atol=1e-12)
        assert (centers > 0).all()

    def test_odd_bin_count_rejected(self):
        edges = column([1.0, 2.0, 3.0, 4.0])
        with pytest.raises(ValueError):
            update_bins(edges, np.zeros((1, 1), dtype=np.int64), 1.0)


class TestStageLevel:
    def test_two_stages_per_level_coarsest_first(self):
        got = [stage_level(s, 4) for s in range(1, 9)]
        assert got == [3, 3, 2, 2, 1, 1, 0, 0]

    def test_clamps_at_finest_level(self):
        assert stage_level(9, 4) == 0
        assert stage_level(30, 4) == 0

    def test_stage_count_starts_at_one(self):
        with pytest.raises(ValueError):
            stage_level(0, 4)


class TestUpsampling:
    def test_edges_duplicate_to_double_resolution(self):
        edges = initial_bins(DepthRange(1.0, 9.0), 4, (2, 3))
        up = upsample_edges(edges)
        assert up.shape == (5, 4, 6)
        for y in range(4):
            for x in range(6):
                np.testing.assert_array_equal(up[:, y, x], edges[:, y // 2, x // 2])

    def test_map_duplicates_pixels(self):
        grid = np.arange(6.0).reshape(2, 3)
        up = upsample_map(grid, 2)
        assert up.shape == (4, 6)
        np.testing.assert_array_equal(up[::2, ::2], grid)
        np.testing.assert_array_equal(up[1::2, 1::2], grid)
        np.testing.assert_array_equal(upsample_map(grid, 1), grid)


class TestSearchConfig:
    def test_defaults_are_consistent(self):
        config = SearchConfig()
        assert config.n_bins == 4
        assert config.n_stages == 8
        assert len(config.agg_radius) == config.n_levels

    def test_invalid_settings_rejected(self):
        with pytest.raises(ValueError):
            SearchConfig(n_bins=3)
        with pytest.raises(ValueError):
            SearchConfig(n_channels=8, n_groups=3)
        with pytest.raises(ValueError):
            SearchConfig(conf_stages=9)
        with pytest.raises(ValueError):
            SearchConfig(agg_radius=(1, 1))

    def test_neutral_params_shapes(self):
        config = SearchConfig()
        params = neutral_params(config)
        assert len(params) == config.n_levels
        for p in params:
            assert p.group_weights.shape == (config.n_groups,)
            assert p.hypothesis_biases.shape == (config.n_bins,)
            np.testing.assert_array_equal(p.hypothesis_biases, 0.0)


class TestBinCenters:
    def test_midpoints(self):
        edges = column([2.0, 4.0, 8.0])
        np.testing.assert_allclose(bin_centers(edges)[:, 0, 0], [3.0, 6.0],
                                   atol=0)
