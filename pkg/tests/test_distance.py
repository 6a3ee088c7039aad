import numpy as np
import pytest

from fedclust.distance import (
    DistanceKind,
    Entity,
    dist_cross_loss,
    dist_l2,
    expected_kl_closed_form,
    expected_kl_monte_carlo,
    pairwise_matrix,
)
from fedclust.errors import ConfigError, DimensionError
from fedclust.models import ModelKind, Split, TrainConfig, local_train, loss


def test_l2_basics():
    assert dist_l2(np.ones(3), np.ones(3)) == 0.0
    assert dist_l2(np.zeros(2), np.array([3.0, 4.0])) == 5.0
    with pytest.raises(DimensionError):
        dist_l2(np.zeros(2), np.zeros(3))


def test_l2_triangle_inequality():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, b, c = rng.standard_normal((3, 4)) * rng.uniform(0.1, 10)
        assert dist_l2(a, c) <= dist_l2(a, b) + dist_l2(b, c) + 1e-12


class TestCrossLoss:
    kind = ModelKind.linear(3)

    def test_identical(self):
        rng = np.random.default_rng(1)
        data = Split(rng.standard_normal((6, 3)), rng.standard_normal(6))
        w = rng.standard_normal(3)
        assert dist_cross_loss(self.kind, w, data, w, data) == pytest.approx(loss(self.kind, w, data))

    def test_arithmetic_mean(self):
        # one sample each so losses are easy: 0.5 * r^2
        data_a = Split(np.array([[1.0, 0, 0]]), np.array([np.sqrt(0.4)]))  # loss of zeros: 0.2
        data_b = Split(np.array([[1.0, 0, 0]]), np.array([np.sqrt(0.8)]))  # loss of zeros: 0.4
        z = np.zeros(3)
        assert dist_cross_loss(self.kind, z, data_a, z, data_b) == pytest.approx(0.3)

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        a = (rng.standard_normal(3), Split(rng.standard_normal((5, 3)), rng.standard_normal(5)))
        b = (rng.standard_normal(3), Split(rng.standard_normal((5, 3)), rng.standard_normal(5)))
        assert dist_cross_loss(self.kind, *a, *b) == dist_cross_loss(self.kind, *b, *a)

    def test_same_model_clients_near_zero(self):
        rng = np.random.default_rng(3)
        w_star = rng.standard_normal(3)
        cfg = TrainConfig(steps=500, learning_rate=0.3)
        models, splits = [], []
        for _ in range(2):
            X = rng.standard_normal((20, 3))
            splits.append(Split(X, X @ w_star))
            models.append(local_train(self.kind, np.zeros(3), splits[-1], cfg))
        assert dist_cross_loss(self.kind, models[0], splits[0], models[1], splits[1]) < 1e-12


class TestPairwise:
    def test_two_entities(self):
        M = pairwise_matrix([Entity(np.zeros(2)), Entity(np.array([3.0, 4.0]))], DistanceKind.L2)
        np.testing.assert_array_equal(M, [[0, 5], [5, 0]])

    def test_identical_entities(self):
        M = pairwise_matrix([Entity(np.ones(3))] * 4, "l2")
        np.testing.assert_array_equal(M, np.zeros((4, 4)))

    @pytest.mark.parametrize("metric", ["l2", "cross-loss"])
    def test_matches_pairs_symmetric_zero_diagonal(self, metric):
        rng = np.random.default_rng(4)
        kind = ModelKind.linear(3)
        ents = [Entity(rng.standard_normal(3), Split(rng.standard_normal((4, 3)), rng.standard_normal(4))) for _ in range(5)]
        M = pairwise_matrix(ents, metric, kind)
        np.testing.assert_array_equal(M, M.T)
        np.testing.assert_array_equal(np.diag(M), 0)
        for i in range(5):
            for j in range(5):
                if i == j:
                    continue
                if metric == "l2":
                    expect = dist_l2(ents[i].params, ents[j].params)
                else:
                    expect = dist_cross_loss(kind, ents[i].params, ents[i].data, ents[j].params, ents[j].data)
                assert M[i, j] == expect

    def test_needs_two(self):
        with pytest.raises(ConfigError):
            pairwise_matrix([Entity(np.zeros(2))], "l2")

    def test_cross_loss_needs_data(self):
        with pytest.raises(ConfigError):
            pairwise_matrix([Entity(np.zeros(2)), Entity(np.zeros(2))], "cross-loss", ModelKind.linear(2))


def test_expected_kl_matches_exact_expectation():
    # the correct identity E_x <v, x>^2 = ||v||^2 (no factor d)
    rng = np.random.default_rng(5)
    w_i, w_j = rng.standard_normal(5), rng.standard_normal(5)
    mc = expected_kl_monte_carlo(w_i, w_j, 1.0, 1_000_000, np.random.default_rng(6))
    assert mc == pytest.approx(expected_kl_closed_form(w_i, w_j, 1.0), rel=0.01)
