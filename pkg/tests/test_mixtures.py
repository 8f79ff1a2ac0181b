"""EM fitting and BIC model selection on 2-D angle samples."""
import numpy as np
import pytest

import taskgrasp as tg
from taskgrasp.errors import InvalidInputError
from taskgrasp.mixtures import COVARIANCE_FLOOR, GaussianMixture2D


def cluster(rng, mean, sigma, n):
    return rng.normal(mean, sigma, size=(n, 2))


class TestFitEm:
    def test_single_tight_cluster(self):
        rng = np.random.default_rng(0)
        pts = cluster(rng, (0.8, 1.4), 1e-3, 60)
        result = tg.fit_em(pts, 1, seed=1)
        assert result.mixture.n_components == 1
        assert np.linalg.norm(result.mixture.means[0] - (0.8, 1.4)) < 0.01

    def test_log_likelihood_nondecreasing(self):
        rng = np.random.default_rng(1)
        pts = np.vstack([cluster(rng, (-0.5, 1.0), 0.15, 120),
                         cluster(rng, (0.9, 1.8), 0.2, 80)])
        for seed in range(12):
            result = tg.fit_em(pts, 2, seed=seed, n_init=2)
            for trace in result.all_traces:
                diffs = np.diff(trace)
                assert np.all(diffs >= -1e-9)

    def test_determinism(self):
        rng = np.random.default_rng(2)
        pts = np.vstack([cluster(rng, (0.0, 1.0), 0.1, 50),
                         cluster(rng, (1.5, 1.0), 0.1, 50)])
        a = tg.fit_em(pts, 2, seed=7)
        b = tg.fit_em(pts, 2, seed=7)
        np.testing.assert_array_equal(a.mixture.means, b.mixture.means)
        np.testing.assert_array_equal(a.mixture.covariances, b.mixture.covariances)
        assert a.log_likelihoods == b.log_likelihoods

    def test_covariance_floor_on_degenerate_data(self):
        pts = np.column_stack([np.linspace(0, 1, 40), np.zeros(40)])  # a line
        result = tg.fit_em(pts, 1, seed=0)
        eigvals = np.linalg.eigvalsh(result.mixture.covariances[0])
        assert eigvals.min() >= COVARIANCE_FLOOR * (1 - 1e-12)

    def test_too_many_components_rejected(self):
        with pytest.raises(InvalidInputError):
            tg.fit_em(np.zeros((3, 2)), 5, seed=0)

    def test_wrong_dimensionality_rejected(self):
        with pytest.raises(InvalidInputError):
            tg.fit_em(np.zeros((10, 3)), 1, seed=0)


class TestBicSelection:
    def test_two_separated_clusters(self):
        rng = np.random.default_rng(3)
        pts = np.vstack([cluster(rng, (-0.75, 1.2), 0.1, 150),
                         cluster(rng, (0.75, 1.2), 0.1, 150)])
        result, table = tg.fit_best_bic(pts, 4, seed=5)
        assert result.mixture.n_components == 2
        means = result.mixture.means[np.argsort(result.mixture.means[:, 0])]
        assert np.linalg.norm(means[0] - (-0.75, 1.2)) < 0.05
        assert np.linalg.norm(means[1] - (0.75, 1.2)) < 0.05
        assert [k for k, _ in table] == [1, 2, 3, 4]

    def test_single_cluster_prefers_one_component(self):
        rng = np.random.default_rng(4)
        pts = cluster(rng, (0.3, 1.5), 0.12, 200)
        result, _ = tg.fit_best_bic(pts, 4, seed=5)
        assert result.mixture.n_components == 1

    def test_table_deterministic(self):
        rng = np.random.default_rng(5)
        pts = np.vstack([cluster(rng, (0.0, 1.0), 0.1, 60),
                         cluster(rng, (1.2, 1.7), 0.1, 60)])
        _, t1 = tg.fit_best_bic(pts, 3, seed=9)
        _, t2 = tg.fit_best_bic(pts, 3, seed=9)
        assert t1 == t2

    def test_component_counts_capped_by_samples(self):
        rng = np.random.default_rng(6)
        pts = cluster(rng, (0, 1), 0.1, 3)
        _, table = tg.fit_best_bic(pts, 5, seed=0)
        assert [k for k, _ in table] == [1, 2, 3]


class TestMixtureValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvalidInputError):
            GaussianMixture2D(weights=[0.5, 0.6], means=np.zeros((2, 2)),
                              covariances=np.tile(np.eye(2), (2, 1, 1))).validate()

    def test_covariance_below_floor_rejected(self):
        with pytest.raises(InvalidInputError):
            GaussianMixture2D(weights=[1.0], means=np.zeros((1, 2)),
                              covariances=np.eye(2)[None] * 1e-9).validate()

    def test_pdf_integrates_roughly_to_one(self):
        mix = GaussianMixture2D(weights=[0.4, 0.6],
                                means=np.array([[0.0, 0.0], [1.0, 1.0]]),
                                covariances=np.tile(np.eye(2) * 0.04, (2, 1, 1))
                                ).validate()
        xs = np.linspace(-2, 3, 220)
        grid = np.array([[x, y] for x in xs for y in xs])
        total = mix.pdf(grid).sum() * (xs[1] - xs[0]) ** 2
        assert total == pytest.approx(1.0, abs=0.01)

    def test_peak_density_positive(self):
        mix = GaussianMixture2D(weights=[1.0], means=np.array([[0.2, 0.4]]),
                                covariances=np.eye(2)[None] * 0.01).validate()
        assert mix.peak_density() == pytest.approx(mix.pdf([[0.2, 0.4]])[0])
