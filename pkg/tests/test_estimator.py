"""Anchor-point estimation: constructed probes, pass-through estimates and
end-to-end recovery on synthetic data."""

import numpy as np
import pytest

import estimator
import nn
import transition
from dataset import LabeledDataset, SyntheticSpec, inject_noise, synthesize
from estimator import AnchorSet
from trainer import TrainConfig


def _one_hot_pool(repeats=4):
    """Three pure-class feature vectors plus one mixed vector, repeated."""
    features = np.tile(np.eye(4), (repeats, 1))
    labels = np.tile([0, 1, 2, 0], repeats)
    return LabeledDataset(features, labels, 3)


def _oracle_probe(T):
    """Linear probe whose softmax is the exact noisy posterior of each feature vector.

    Feature k < 3 is an anchor of class k (clean posterior e_k, noisy posterior
    T[k]); feature 3 has a uniform clean posterior.
    """
    noisy = np.vstack([T.entries, T.entries.mean(axis=0)])
    return nn.MlpParams([(np.log(noisy).T.copy(), np.zeros(3))])


class TestPickAnchors:

    def test_constructed_probe(self):
        pool = _one_hot_pool()
        probe = nn.MlpParams([(np.hstack([20 * np.eye(3), np.zeros((3, 1))]), np.zeros(3))])
        anchors = estimator.pick_anchors(probe, pool, top_k=1)
        assert [r.tolist() for r in anchors.rows] == [[0], [1], [2]]
        assert anchors.num_classes == 3

    def test_ties_go_to_lower_row(self):
        pool = _one_hot_pool(repeats=3)
        probe = nn.MlpParams([(np.hstack([20 * np.eye(3), np.zeros((3, 1))]), np.zeros(3))])
        anchors = estimator.pick_anchors(probe, pool, top_k=2)
        assert anchors.rows[1].tolist() == [1, 5]
        assert len(anchors.candidates(1)) == 2

    def test_top_k_validation(self):
        pool = _one_hot_pool(repeats=1)
        probe = nn.init([4, 3], seed=0)
        with pytest.raises(ValueError):
            estimator.pick_anchors(probe, pool, top_k=0)
        with pytest.raises(ValueError):
            estimator.pick_anchors(probe, pool, top_k=5)

    def test_anchors_may_coincide(self):
        pool = _one_hot_pool(repeats=1)
        probe = nn.MlpParams([(np.zeros((3, 4)), np.zeros(3))])
        anchors = estimator.pick_anchors(probe, pool, top_k=1)
        assert [r.tolist() for r in anchors.rows] == [[0], [0], [0]]

    def test_ranked_by_class_probability(self):
        pool = LabeledDataset(np.arange(100, dtype=float)[:, None], np.arange(100) % 3, 3)
        # class 0 rises with the feature, classes 1 and 2 fall with it
        probe = nn.MlpParams([(np.array([[1.0], [0.0], [0.0]]), np.zeros(3))])
        anchors = estimator.pick_anchors(probe, pool, top_k=2)
        assert anchors.rows[0].tolist() == [99, 98]
        assert anchors.rows[1].tolist() == [0, 1] and anchors.rows[2].tolist() == [0, 1]


class TestEstimateT:

    def test_pass_through(self):
        T = transition.known("fashion05")
        anchors = AnchorSet(rows=[np.array([i]) for i in range(3)],
                            posteriors=[T.entries[[i]] for i in range(3)], top_k=1)
        matrix, report = estimator.estimate_T(anchors)
        np.testing.assert_array_equal(matrix, T.entries)
        assert report.diagonal_dominant and not report.near_singular

    def test_near_singular_is_reported(self):
        flat = np.full((1, 3), 1 / 3)
        anchors = AnchorSet(rows=[np.array([0])] * 3, posteriors=[flat] * 3, top_k=1)
        matrix, report = estimator.estimate_T(anchors)
        assert report.near_singular
        assert not report.diagonal_dominant
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("name", ["fashion05", "fashion06"])
    def test_oracle_probe_recovers_T(self, name):
        T = transition.known(name)
        pool = _one_hot_pool()
        anchors = estimator.pick_anchors(_oracle_probe(T), pool, top_k=1)
        matrix, report = estimator.estimate_T(anchors)
        np.testing.assert_allclose(matrix, T.entries, atol=1e-12)
        assert report.max_row_sum_error < 1e-9


class TestFitNoisyPosterior:
    CFG = TrainConfig(epochs=2, hidden_dims=[8], batch_size=16, seed=4)

    def _data(self):
        return synthesize(SyntheticSpec(3, 4, 30, 5.0, 1.0, seed=1))

    def test_zero_epochs_returns_initial_probe(self):
        ds = self._data()
        probe = estimator.fit_noisy_posterior(ds, self.CFG.replace(epochs=0))
        for a, b in zip(probe.arrays(), nn.init([4, 8, 3], seed=4).arrays()):
            np.testing.assert_array_equal(a, b)

    def test_deterministic(self):
        ds = self._data()
        a, b = estimator.fit_noisy_posterior(ds, self.CFG), estimator.fit_noisy_posterior(ds, self.CFG)
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)

    def test_estimate_rows_are_distributions(self):
        result = estimator.estimate_transition(self._data(), self.CFG, top_k=3)
        np.testing.assert_allclose(result.matrix.sum(axis=1), 1.0, atol=1e-9)
        assert np.all((result.matrix >= 0) & (result.matrix <= 1))
        assert result.top_k == 3 and result.probe_seed == 4
        again = estimator.estimate_transition(self._data(), self.CFG, top_k=3)
        np.testing.assert_array_equal(result.matrix, again.matrix)


# Training budget for recovery. Short runs leave the estimator network close to
# linear, so its most confident row sits at the edge of the class and overshoots
# the diagonal.
RECOVERY_BUDGET = TrainConfig(lr=0.01, epochs=40)


def _separable_noisy(name, per_class=6000, seed=7):
    clean = synthesize(SyntheticSpec(3, 8, per_class, 10.0, 1.0, seed=seed))
    T = transition.known(name) if name != "identity" else transition.identity(3)
    return clean, inject_noise(clean, T, seed=seed + 1), T


@pytest.mark.slow
class TestRecovery:

    def test_probe_matches_average_posterior(self):
        clean, noisy, T = _separable_noisy("fashion05", per_class=2000)
        probe = estimator.fit_noisy_posterior(noisy, TrainConfig())
        probs = nn.predict_proba(probe, clean.features)
        for i in range(3):
            np.testing.assert_allclose(probs[clean.labels == i].mean(axis=0), T[i], atol=0.05)

    @pytest.mark.parametrize("name, bound", [("fashion05", 0.15), ("fashion06", 0.12)])
    def test_end_to_end(self, name, bound):
        _, noisy, T = _separable_noisy(name)
        result = estimator.estimate_transition(noisy, RECOVERY_BUDGET, top_k=1)
        assert transition.sum_average_error(T, result.matrix) <= bound

    def test_clean_labels_give_identity(self):
        _, noisy, T = _separable_noisy("identity", per_class=2000)
        result = estimator.estimate_transition(noisy, TrainConfig(), top_k=1)
        assert transition.sum_average_error(T, result.matrix) <= 0.05
