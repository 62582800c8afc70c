"""
Resampling Engine Tests

Tests substream derivation, pair indices, the quantile and p-value
conventions, KS distances and scheduling-independent replicate runs
"""

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from src.api.models import BootstrapConfig
from src.exceptions import DegenerateResampling, SingularDesign
from src.models.resampling import (
    MAX_REDRAWS,
    BootstrapDistribution,
    derive_seed,
    derive_substream,
    draw_pair_indices,
    empirical_quantile,
    ks_uniform_distance,
    parallel_map,
    run_replicates,
    two_sided_pvalue,
)

FIVE = [-3.0, -1.0, 0.0, 2.0, 4.0]


@pytest.mark.unit
class TestSubstreams:
    """Test counter-based substream derivation"""

    def test_distinct_indices(self):
        first = derive_substream(7, 0).integers(0, 2 ** 62)
        second = derive_substream(7, 1).integers(0, 2 ** 62)
        assert first != second

    def test_replay(self):
        a = derive_substream(7, 3).random(10)
        b = derive_substream(7, 3).random(10)
        np.testing.assert_array_equal(a, b)

    def test_distinct_seeds(self):
        assert derive_substream(7, 0).random() != derive_substream(8, 0).random()

    def test_first_draws_uniform(self):
        """First draws of 10^4 substreams pass a chi-square check at 0.001"""
        draws = np.array([derive_substream(42, r).random() for r in range(10_000)])
        counts, _ = np.histogram(draws, bins=20, range=(0.0, 1.0))
        assert stats.chisquare(counts).pvalue > 0.001

    def test_negative_index(self):
        with pytest.raises(ValueError):
            derive_substream(7, -1)

    def test_derive_seed_paths(self):
        assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)
        assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)
        assert 0 <= derive_seed(5, 0) < 2 ** 64


@pytest.mark.unit
class TestPairIndices:
    """Test pairs-bootstrap row draws"""

    def test_single_row(self):
        np.testing.assert_array_equal(draw_pair_indices(1, derive_substream(1, 0)), [0])

    def test_replay(self):
        a = draw_pair_indices(50, derive_substream(9, 4))
        b = draw_pair_indices(50, derive_substream(9, 4))
        np.testing.assert_array_equal(a, b)

    def test_frequencies(self):
        """Each of five indices appears with frequency near 0.2"""
        rng = derive_substream(123, 0)
        draws = np.concatenate([draw_pair_indices(5, rng) for _ in range(20_000)])
        freq = np.bincount(draws, minlength=5) / draws.size
        sd = np.sqrt(0.2 * 0.8 / draws.size)
        assert np.all(np.abs(freq - 0.2) <= 4 * sd)

    def test_zero_rows(self):
        with pytest.raises(ValueError):
            draw_pair_indices(0, derive_substream(1, 0))


@pytest.mark.unit
class TestQuantilesAndPValues:
    """Test the order-statistic and add-one conventions"""

    def test_quantile_examples(self):
        samples = np.arange(1.0, 101.0)
        assert empirical_quantile(samples, 0.05) == 5
        assert empirical_quantile(samples, 0.5) == 50
        assert empirical_quantile(FIVE, 0.975) == 4

    def test_quantile_clamped(self):
        assert empirical_quantile(FIVE, 0.001) == -3
        with pytest.raises(ValueError):
            empirical_quantile(FIVE, 1.0)

    def test_quantile_monotone(self):
        samples = derive_substream(3, 0).normal(size=99)
        grid = np.linspace(0.01, 0.99, 50)
        values = [empirical_quantile(samples, p) for p in grid]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_pvalue_examples(self):
        assert two_sided_pvalue(FIVE, 4) == pytest.approx(2 / 3)
        assert two_sided_pvalue(FIVE, 10) == pytest.approx(1 / 3)

    def test_pvalue_symmetric_median(self):
        assert two_sided_pvalue([-2.0, -1.0, 0.0, 1.0, 2.0], 0.0) == 1.0

    def test_pvalue_range(self):
        samples = derive_substream(3, 1).normal(size=49)
        for t in (-100.0, -1.0, 0.0, 0.3, 100.0):
            p = two_sided_pvalue(samples, t)
            assert 2 / 50 <= p <= 1

    def test_distribution_sorted(self, tmp_path):
        distribution = BootstrapDistribution([3.0, -1.0, 2.0], method="poc-ab", config=BootstrapConfig(b=3))
        np.testing.assert_array_equal(distribution.samples, [-1.0, 2.0, 3.0])
        assert distribution.b == 3
        assert distribution.quantile(0.5) == 2.0

        path = tmp_path / "draws.csv"
        distribution.to_csv(path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["poc-ab"]
        assert frame["poc-ab"].tolist() == [-1.0, 2.0, 3.0]


@pytest.mark.unit
class TestKsDistance:
    """Test the Kolmogorov-Smirnov distance to U[0, 1]"""

    def test_single_value(self):
        assert ks_uniform_distance([0.5]) == pytest.approx(0.5)

    def test_two_values(self):
        assert ks_uniform_distance([0.25, 0.75]) == pytest.approx(0.25)

    @pytest.mark.parametrize("m", [1, 4, 19, 100])
    def test_even_grid(self, m):
        values = np.arange(1, m + 1) / (m + 1)
        assert ks_uniform_distance(values) == pytest.approx(1 / (m + 1))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            ks_uniform_distance([0.5, 1.5])


@pytest.mark.unit
class TestRunReplicates:
    """Test the parallel replicate engine"""

    def test_parallel_map_order(self):
        assert parallel_map(lambda i: i * i, range(20), workers=4) == [i * i for i in range(20)]

    def test_worker_count_does_not_matter(self):
        def replicate(rng):
            return float(rng.normal())

        serial, _ = run_replicates(replicate, BootstrapConfig(b=64, seed=5, workers=1))
        threaded, _ = run_replicates(replicate, BootstrapConfig(b=64, seed=5, workers=4))
        assert serial == threaded

    def test_replicate_r_uses_substream_r(self):
        results, _ = run_replicates(lambda rng: float(rng.random()), BootstrapConfig(b=5, seed=17))
        expected = [float(derive_substream(17, r).random()) for r in range(5)]
        assert results == expected

    def test_degenerate_draws_are_redrawn(self):
        def replicate(rng):
            u = float(rng.random())
            if u < 0.3:
                raise SingularDesign("degenerate resample")
            return u

        results, redraws = run_replicates(replicate, BootstrapConfig(b=50, seed=8))
        assert len(results) == 50
        assert min(results) >= 0.3
        assert redraws > 0

    def test_persistent_failure(self):
        def replicate(rng):
            raise SingularDesign("always degenerate")

        with pytest.raises(DegenerateResampling) as info:
            run_replicates(replicate, BootstrapConfig(b=3, seed=8))
        assert info.value.attempts == MAX_REDRAWS
