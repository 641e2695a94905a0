"""Mask distribution analyzer tests, including the exhaustive-count oracle."""

import io

import numpy as np
from maskbench import masks
from maskbench.dsp import ComplexSpectrogram

from conftest import random_spec


def brute_force_fraction(M, X, floor_db):
    """Independent per-bin loop implementing the counting contract."""
    xmag = np.abs(X.data)
    threshold = xmag.max() * 10.0 ** (floor_db / 20.0)
    counted = over = 0
    for c in range(M.shape[0]):
        for t in range(M.shape[1]):
            for f in range(M.shape[2]):
                if abs(X.data[c, t, f]) > threshold:
                    counted += 1
                    if abs(M[c, t, f]) > 1.0:
                        over += 1
    return counted, over


class TestMaskStats:
    def test_unit_mask_fraction_zero(self, rng):
        X = random_spec(rng)
        stats = masks.mask_stats(np.ones(X.data.shape, dtype=complex), X)
        assert stats.fraction_over_unit == 0.0
        assert stats.bins_over_unit == 0

    def test_constructed_three_of_ten(self):
        # 10 bins all above the energy floor; exactly 3 carry |M| = 1.5
        X = ComplexSpectrogram(np.full((1, 5, 2), 1.0 + 0j), 2, 1)
        M = np.full((1, 5, 2), 0.5 + 0j)
        M[0, 0, 0] = 1.5
        M[0, 2, 1] = -1.5
        M[0, 4, 0] = 1.5j
        stats = masks.mask_stats(M, X, energy_floor_db=-60.0)
        counted, over = brute_force_fraction(M, X, -60.0)
        assert (stats.total_bins, stats.bins_over_unit) == (counted, over) == (10, 3)
        assert stats.fraction_over_unit == 0.3

    def test_matches_exhaustive_count_on_random_grids(self, rng):
        for _ in range(5):
            S = random_spec(rng, frames=7)
            X = random_spec(rng, frames=7)
            M = masks.compute_cirm(S, X, eps=1e-10)
            stats = masks.mask_stats(M, X, energy_floor_db=-40.0)
            counted, over = brute_force_fraction(M, X, -40.0)
            assert stats.total_bins == counted
            assert stats.bins_over_unit == over

    def test_energy_floor_excludes_quiet_bins(self):
        X = ComplexSpectrogram(np.array([[[1.0, 1e-9]]], dtype=complex), 2, 1)
        M = np.full((1, 1, 2), 5.0 + 0j)
        stats = masks.mask_stats(M, X, energy_floor_db=-60.0)
        assert stats.total_bins == 1
        assert stats.fraction_over_unit == 1.0
        unfiltered = masks.mask_stats(M, X, energy_floor_db=None)
        assert unfiltered.total_bins == 2

    def test_empty_counted_set(self):
        X = ComplexSpectrogram(np.zeros((1, 2, 2), dtype=complex), 2, 1)
        stats = masks.mask_stats(np.ones((1, 2, 2), dtype=complex), X)
        assert stats.total_bins == 0
        assert stats.fraction_over_unit == 0.0

    def test_histogram_sums_to_counted(self, rng):
        X = random_spec(rng, frames=9)
        M = random_spec(rng, frames=9).data
        stats = masks.mask_stats(M, X, energy_floor_db=-50.0)
        assert stats.angle_histogram.sum() == stats.total_bins
        assert stats.angle_histogram.shape == (masks.ANGLE_BUCKETS,)

    def test_percentiles_monotone(self, rng):
        X = random_spec(rng, frames=9)
        M = random_spec(rng, frames=9).data
        stats = masks.mask_stats(M, X)
        assert stats.magnitude_percentiles[50] <= stats.magnitude_percentiles[90]
        assert stats.magnitude_percentiles[90] <= stats.magnitude_percentiles[99]

    def test_scatter_sample_capped_and_deterministic(self, rng):
        X = random_spec(rng, frames=40, window=64)
        M = random_spec(rng, frames=40, window=64).data
        a = masks.mask_stats(M, X, max_scatter=50, seed=7)
        b = masks.mask_stats(M, X, max_scatter=50, seed=7)
        assert a.scatter_sample.shape == (50, 2)
        np.testing.assert_array_equal(a.scatter_sample, b.scatter_sample)


class TestScatterExport:
    def test_csv_format(self):
        out = io.StringIO()
        masks.write_scatter_csv(out, {"vocals": np.array([[1.25, -0.5]])})
        lines = out.getvalue().splitlines()
        assert lines[0] == "re,im,source"
        assert lines[1] == "1.25,-0.5,vocals"

    def test_svg_has_unit_circle(self):
        svg = masks.render_scatter_svg({"vocals": np.array([[0.5, 0.5], [3.0, 3.0]])},
                                       size=100, plot_radius=2.0, comment="prov")
        assert svg.splitlines()[0] == "<!-- prov -->"
        assert svg.count('stroke="red"') == 1
        # unit circle radius maps to size/2 / plot_radius
        assert 'r="25.00"' in svg
