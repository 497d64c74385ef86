import math

import numpy as np
import pytest
from scipy import stats

from conftest import normal_pair
from knnorder.densities import posterior_psi
from knnorder.sampling import (BINOMIAL, INVERSION_CUTOFF, POISSON, TrainingSet, derive_seed,
                               draw_binomial_training, draw_poisson_training, draw_training,
                               sample_poisson_count, split_stream)

LEVEL = 0.01


def chisquare_pvalue(observed, probs):
    """Pearson test with cells of expectation < 5 pooled into one."""
    observed, probs = np.asarray(observed, dtype=float), np.asarray(probs, dtype=float)
    n = observed.sum()
    keep = probs * n >= 5
    if probs[~keep].sum() > 0:
        observed = np.append(observed[keep], observed[~keep].sum())
        probs = np.append(probs[keep], probs[~keep].sum())
    else:
        observed, probs = observed[keep], probs[keep]
    return stats.chisquare(observed, probs / probs.sum() * n).pvalue


def poisson_draws(mean, n, seed):
    rng = split_stream(seed, 0)
    return np.array([sample_poisson_count(mean, rng) for _ in range(n)])


class TestSplitStream:
    def test_repeatable(self):
        np.testing.assert_array_equal(split_stream(42, 0).random(100), split_stream(42, 0).random(100))

    def test_sibling_streams_uncorrelated(self):
        a = split_stream(42, 0).random(10_000)
        b = split_stream(42, 1).random(10_000)
        r, p = stats.pearsonr(a, b)
        assert p > LEVEL
        # lag-one serial correlation within each stream
        for x in (a, b):
            assert stats.pearsonr(x[:-1], x[1:])[1] > LEVEL

    def test_first_draws_distinct(self):
        firsts = {split_stream(42, k).random() for k in range(101)}
        assert len(firsts) == 101

    def test_nested_paths_distinct(self):
        assert split_stream(1, 2, 3).random() != split_stream(1, 2).random()
        assert derive_seed(1, 2, 3) != derive_seed(1, 2, 4)
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            split_stream(1, -1)


class TestPoissonCount:
    def test_mean_300(self):
        x = poisson_draws(300, 100_000, 1)
        assert abs(x.mean() - 300) < 3 * math.sqrt(300 / len(x))  # +/- 0.164
        assert abs(x.var(ddof=1) / 300 - 1) < 0.05

    @pytest.mark.parametrize("mean", [0.3, 4.0, INVERSION_CUTOFF - 0.5, INVERSION_CUTOFF, 75.0, 5000.0])
    def test_moments_within_three_sigma(self, mean):
        n = 40_000
        x = poisson_draws(mean, n, 2)
        assert abs(x.mean() - mean) < 3 * math.sqrt(mean / n)
        # var of the sample variance is about (mu4 - sigma^4)/n = (mean + 2 mean^2)/n
        assert abs(x.var(ddof=1) - mean) < 3 * math.sqrt((mean + 2 * mean ** 2) / n)

    @pytest.mark.parametrize("mean", [6.0, 45.0])
    def test_pmf_goodness_of_fit(self, mean):
        n = 50_000
        x = poisson_draws(mean, n, 3)
        lo, hi = stats.poisson.ppf([0.001, 0.999], mean).astype(int)
        edges = np.arange(lo, hi + 1)
        observed = np.array([np.sum(x < lo)] + [np.sum(x == k) for k in edges] + [np.sum(x > hi)])
        probs = np.concatenate([[stats.poisson.cdf(lo - 1, mean)], stats.poisson.pmf(edges, mean),
                                [stats.poisson.sf(hi, mean)]])
        assert chisquare_pvalue(observed, probs) > LEVEL

    def test_tiny_mean_mostly_zero(self):
        x = poisson_draws(1e-6, 2000, 4)
        assert np.count_nonzero(x) <= 1

    @pytest.mark.parametrize("mean", [0.0, -1.0, float("nan")])
    def test_rejects_nonpositive(self, mean):
        with pytest.raises(ValueError):
            sample_poisson_count(mean, split_stream(0, 0))


class TestPoissonTraining:
    def test_equal_intensities(self):
        pair = normal_pair([-0.5], [0.5], 100, 100)
        sizes, fx = [], []
        for r in range(500):
            ts = draw_poisson_training(pair, split_stream(5, r))
            sizes.append(len(ts))
            fx.append(ts.is_x.sum())
        assert abs(np.mean(sizes) - 200) < 3 * math.sqrt(200 / 500)
        assert abs(np.sum(fx) / np.sum(sizes) - 0.5) < 3 * math.sqrt(0.25 / np.sum(sizes))

    def test_pooled_x_fraction(self):
        pair = normal_pair([-0.5], [0.5], 100, 200)
        n = x = 0
        for r in range(500):
            ts = draw_poisson_training(pair, split_stream(6, r))
            n += len(ts)
            x += ts.is_x.sum()
        assert abs(x / n - 1 / 3) < 3 * math.sqrt((1 / 3) * (2 / 3) / 150_000)

    def test_psi_marking_equals_component_labelling(self):
        pair = normal_pair([-0.5], [0.5], 100, 200)
        pooled = {"psi": ([], []), "component": ([], [])}
        for scheme, (xs, counts) in pooled.items():
            for r in range(400):
                ts = draw_poisson_training(pair, split_stream(7, r, 0 if scheme == "psi" else 1), scheme=scheme)
                xs.append(ts.x_points[:, 0])
                counts.append(ts.is_x.sum())
        a, b = pooled["psi"], pooled["component"]
        assert stats.ks_2samp(np.concatenate(a[0]), np.concatenate(b[0])).pvalue > LEVEL
        assert stats.ks_2samp(a[1], b[1]).pvalue > LEVEL

    def test_marks_follow_posterior(self):
        pair = normal_pair([-0.5], [0.5], 100, 200)
        pts, marks = [], []
        for r in range(300):
            ts = draw_poisson_training(pair, split_stream(8, r))
            pts.append(ts.points[:, 0])
            marks.append(ts.is_x)
        pts, marks = np.concatenate(pts), np.concatenate(marks)
        psi = posterior_psi(pair, pts.reshape(-1, 1))
        bins = np.digitize(pts, np.linspace(-2.5, 2.5, 11))
        chi2, dof = 0.0, 0
        for b in np.unique(bins):
            sel = bins == b
            expected = psi[sel].sum()
            var = np.sum(psi[sel] * (1 - psi[sel]))
            chi2 += (marks[sel].sum() - expected) ** 2 / var
            dof += 1
        assert stats.chi2.sf(chi2, dof) > LEVEL

    def test_replicate_is_pure_function_of_stream(self):
        pair = normal_pair([0.5, -0.5], [-0.5, 0.5], 100, 200)
        a = draw_poisson_training(pair, split_stream(9, 3))
        b = draw_poisson_training(pair, split_stream(9, 3))
        assert a.points.tobytes() == b.points.tobytes()
        np.testing.assert_array_equal(a.is_x, b.is_x)


class TestBinomialTraining:
    def test_single_point(self):
        ts = draw_binomial_training(normal_pair([0.0], [1.0], 1, 1), 1, split_stream(1, 0))
        assert len(ts) == 1 and ts.model == BINOMIAL

    def test_exact_size_and_label_mean(self):
        pair = normal_pair([-0.5], [0.5], 100, 200)
        counts = []
        for r in range(500):
            ts = draw_binomial_training(pair, 300, split_stream(10, r))
            assert len(ts) == 300
            counts.append(ts.is_x.sum())
        assert abs(np.mean(counts) - 100) < 3 * math.sqrt(300 * (1 / 3) * (2 / 3) / 500)

    def test_poisson_conditioned_on_total_is_binomial(self):
        pair = normal_pair([-0.5], [0.5], 5, 10)
        T = 15
        pois_x, pois_counts = [], []
        r = 0
        while len(pois_counts) < 1500:
            ts = draw_poisson_training(pair, split_stream(11, r))
            r += 1
            if len(ts) == T:
                pois_x.append(ts.points[:, 0])
                pois_counts.append(ts.is_x.sum())
        bin_x, bin_counts = [], []
        for r in range(1500):
            ts = draw_binomial_training(pair, T, split_stream(12, r))
            bin_x.append(ts.points[:, 0])
            bin_counts.append(ts.is_x.sum())
        assert stats.ks_2samp(np.concatenate(pois_x), np.concatenate(bin_x)).pvalue > LEVEL
        assert stats.ks_2samp(pois_counts, bin_counts).pvalue > LEVEL
        # and the X count is Binomial(T, p)
        observed = np.bincount(pois_counts, minlength=T + 1)
        probs = stats.binom.pmf(np.arange(T + 1), T, pair.p)
        assert chisquare_pvalue(observed, probs) > LEVEL

    @pytest.mark.parametrize("T", [0, -3, 2.5])
    def test_rejects_bad_size(self, T):
        with pytest.raises(ValueError):
            draw_binomial_training(normal_pair([0.0], [1.0]), T, split_stream(1, 0))


class TestDrawTraining:
    def test_binomial_default_total(self):
        ts = draw_training(normal_pair([0.0], [1.0], 3.4, 4.0), BINOMIAL, split_stream(1, 0))
        assert len(ts) == 7

    def test_records_seed(self):
        ts = draw_training(normal_pair([0.0], [1.0]), POISSON, split_stream(1, 0), seed_record=(1, 0))
        assert ts.seed_record == (1, 0)

    def test_unknown_model(self):
        with pytest.raises(ValueError, match="model"):
            draw_training(normal_pair([0.0], [1.0]), "uniform", split_stream(1, 0))


class TestTrainingSet:
    def test_labels_roundtrip(self):
        ts = TrainingSet.from_labels([[0.0], [1.0], [2.0]], ["X", "Y", "X"])
        assert ts.labels == ["X", "Y", "X"]
        np.testing.assert_array_equal(ts.x_points[:, 0], [0.0, 2.0])
        np.testing.assert_array_equal(ts.y_points[:, 0], [1.0])

    def test_empty_allowed(self):
        ts = TrainingSet(np.empty((0, 2)), np.empty(0, bool))
        assert len(ts) == 0 and ts.d == 2

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="equal length"):
            TrainingSet([[0.0], [1.0]], [True])

    def test_bad_label(self):
        with pytest.raises(ValueError, match="labels"):
            TrainingSet.from_labels([[0.0]], ["Z"])
