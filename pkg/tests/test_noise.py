"""Synthetic data generation and residual-region analysis."""

import numpy as np
import pytest

from mmbsn.noise import (
    AREA_BUCKETS,
    NoiseSpec,
    analyze_regions,
    gen_clean,
    gen_correlated_noise,
)


def lag_correlation(field, dy, dx):
    """Sample correlation of a (1, c, h, w) field with a shifted copy."""
    a = field[0, 0]
    b = np.roll(np.roll(a, dy, axis=0), dx, axis=1)
    return float(np.corrcoef(a.ravel(), b.ravel())[0, 1])


class TestGenClean:
    def test_checker_period_four(self):
        img = gen_clean("checker", 32)
        assert img[0, 0, 0, 0] == 0.0
        assert img[0, 0, 0, 4] == 1.0

    def test_gradient_rows_nondecreasing(self):
        img = gen_clean("gradient", 32)
        assert np.all(np.diff(img[0, 0], axis=1) >= 0)

    @pytest.mark.parametrize("pattern", ["stripes", "checker", "gradient", "disks"])
    def test_deterministic_and_bounded(self, pattern):
        a = gen_clean(pattern, 32, seed=5)
        b = gen_clean(pattern, 32, seed=5)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (1, 3, 32, 32)
        assert a.min() >= 0.0 and a.max() <= 1.0

    def test_size_floor(self):
        with pytest.raises(ValueError, match="size"):
            gen_clean("checker", 8)

    def test_unknown_pattern(self):
        with pytest.raises(ValueError, match="pattern"):
            gen_clean("plasma", 32)


class TestCorrelatedNoise:
    def test_white_kernel_has_no_lag_correlation(self):
        field = gen_correlated_noise(NoiseSpec(0.2, "white", 1, seed=0), 256)
        assert abs(lag_correlation(field, 0, 1)) < 0.05

    def test_slash_kernel_correlates_antidiagonal(self):
        field = gen_correlated_noise(NoiseSpec(0.2, "slash", 5, seed=1), 256)
        anti = lag_correlation(field, 1, -1)
        main = lag_correlation(field, 1, 1)
        assert anti > main + 0.3

    def test_sigma_zero_gives_zeros(self):
        field = gen_correlated_noise(NoiseSpec(0.0, "iso", 5, seed=2), 64)
        assert not field.any()

    @pytest.mark.parametrize("kernel", ["white", "iso", "square", "slash"])
    def test_std_matches_sigma(self, kernel):
        spec = NoiseSpec(0.2, kernel, 5, seed=3)
        field = gen_correlated_noise(spec, 128)
        assert abs(field.std() / 0.2 - 1.0) < 0.05

    def test_mean_vanishes_with_size(self):
        for kernel in ("white", "slash"):
            field = gen_correlated_noise(NoiseSpec(0.2, kernel, 5, seed=4), 256)
            assert abs(field.mean()) < 3 * 0.2 / 256

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="kernel"):
            NoiseSpec(0.1, "blob", 5)
        with pytest.raises(ValueError, match="support"):
            NoiseSpec(0.1, "iso", 4)
        with pytest.raises(ValueError, match="sigma"):
            NoiseSpec(-0.1, "iso", 5)


def block_residual(blocks, size=32):
    """Residual map with unit-amplitude rectangular blocks."""
    r = np.zeros((1, 1, size, size))
    for y, x, h, w in blocks:
        r[0, 0, y : y + h, x : x + w] = 1.0
    return r


class TestAnalyzeRegions:
    def test_all_zero_residual(self):
        stats = analyze_regions(np.zeros((1, 3, 16, 16)))
        assert stats.areas == []
        assert stats.large_fraction == 0.0
        assert stats.total_noisy_pixels == 0

    def test_single_6x6_block(self):
        stats = analyze_regions(block_residual([(4, 4, 6, 6)]), threshold=0.5)
        assert stats.areas == [36]
        assert stats.large_fraction == 1.0

    def test_two_blocks_large_fraction(self):
        stats = analyze_regions(block_residual([(2, 2, 3, 3), (12, 12, 6, 6)]), threshold=0.5)
        assert stats.areas == [9, 36]
        assert stats.large_fraction == 36 / 45
        np.testing.assert_allclose(sum(stats.proportions), 1.0, atol=1e-9)
        assert stats.proportions == (9 / 45, 0.0, 36 / 45, 0.0)

    def test_diagonal_chain_is_one_component(self):
        # 8-connectivity: a diagonal line is a single region.
        r = np.zeros((1, 1, 16, 16))
        for t in range(6):
            r[0, 0, 2 + t, 2 + t] = 1.0
        stats = analyze_regions(r, threshold=0.5)
        assert stats.areas == [6]

    def test_merging_blocks_grows_large_fraction(self):
        apart = analyze_regions(
            block_residual([(2, 2, 4, 4), (2, 8, 4, 4)]), threshold=0.5
        )
        merged = analyze_regions(
            block_residual([(2, 2, 4, 4), (2, 8, 4, 4), (2, 6, 4, 2)]), threshold=0.5
        )
        assert merged.large_fraction >= apart.large_fraction
        assert merged.areas == [40]

    def test_area_histogram(self):
        stats = analyze_regions(
            block_residual([(1, 1, 2, 2), (1, 10, 2, 2), (10, 10, 3, 3)]), threshold=0.5
        )
        assert stats.area_histogram() == [(4, 2), (9, 1)]

    def test_auto_threshold_scales_with_residual(self):
        rng = np.random.default_rng(5)
        residual = rng.normal(0, 0.1, (1, 3, 64, 64))
        stats = analyze_regions(residual)
        assert 0.1 < stats.threshold < 0.3  # ~2 sigma

    def test_explicit_threshold_must_be_positive(self):
        with pytest.raises(ValueError, match="threshold"):
            analyze_regions(np.ones((1, 1, 16, 16)), threshold=-1.0)

    def test_batch_must_be_single(self):
        with pytest.raises(ValueError, match="single image"):
            analyze_regions(np.zeros((2, 1, 16, 16)))

    def test_bucket_edges(self):
        assert AREA_BUCKETS == ((1, 9), (10, 25), (26, 100), (101, None))
