import json

import numpy as np
import pytest

from fedclust.data import (
    ClientDataset,
    FederatedDataset,
    SyntheticSpec,
    apply_transform,
    derive_rng,
    gen_mixture_linreg,
    load_federated_csv,
    make_transform_splits,
    resample_clients,
    save_federated_csv,
)
from fedclust.errors import ConfigError, DataFormatError, NotSyntheticError
from fedclust.models import ModelKind, loss


@pytest.fixture(scope="module")
def small_spec():
    return SyntheticSpec(m=6, n=10, d=4, clusters=2, sigma=0.0, seed=11)


def test_large_instance_shape():
    fd = gen_mixture_linreg(SyntheticSpec(m=100, n=100, d=1000, clusters=2, sigma=0.001, seed=0))
    assert fd.m == 100
    assert fd.ground_truth.sizes() == [50, 50]
    assert all(c.features.shape == (100, 1000) for c in fd.clients)
    assert set(np.unique(fd.cluster_models)) <= {0.0, 1.0}


def test_noiseless_loss_zero(small_spec):
    fd = gen_mixture_linreg(small_spec)
    for c in fd.clients:
        w = fd.cluster_models[fd.ground_truth.labels[c.client_id]]
        assert loss(fd.kind, w, c.train) == 0.0
        assert loss(fd.kind, w, c.test) == 0.0


def test_deterministic(small_spec):
    a, b = gen_mixture_linreg(small_spec), gen_mixture_linreg(small_spec)
    for ca, cb in zip(a.clients, b.clients):
        assert ca.features.tobytes() == cb.features.tobytes()
        assert ca.targets.tobytes() == cb.targets.tobytes()


def test_indivisible_m():
    with pytest.raises(ConfigError):
        SyntheticSpec(m=5, clusters=2)


def test_split_partition(small_spec):
    c = gen_mixture_linreg(small_spec).clients[0]
    assert len(c.train.y) + len(c.test.y) == c.n
    assert len(c.train.y) == 8


def test_feature_statistics():
    x = derive_rng(0, "client-data").standard_normal(1_000_000)
    assert abs(x.mean()) < 0.01
    assert abs(x.var() - 1) < 0.01


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cluster_model_separation(seed):
    w = SyntheticSpec(d=1000, seed=seed).cluster_models()
    assert np.linalg.norm(w[0] - w[1]) > 15


def test_client_streams_independent_of_order():
    spec = SyntheticSpec(m=4, n=5, d=3, seed=2)
    fd = gen_mixture_linreg(spec)
    shuffled = FederatedDataset(list(reversed(fd.clients)), fd.kind, fd.ground_truth)
    assert [c.client_id for c in shuffled.clients] == [0, 1, 2, 3]


class TestResample:
    def test_models_unchanged_data_fresh(self, small_spec):
        fd = gen_mixture_linreg(small_spec)
        r1, r2 = resample_clients(fd, 1), resample_clients(fd, 2)
        np.testing.assert_array_equal(r1.cluster_models, fd.cluster_models)
        assert not np.array_equal(r1.clients[0].features, r2.clients[0].features)
        assert r1.ground_truth == r2.ground_truth == fd.ground_truth

    def test_noiseless(self, small_spec):
        r = resample_clients(gen_mixture_linreg(small_spec), 3)
        for c in r.clients:
            assert loss(r.kind, r.cluster_models[r.ground_truth.labels[c.client_id]], c.train) == 0.0

    def test_requires_synthetic(self):
        fd = FederatedDataset([ClientDataset(0, np.ones((2, 1)), np.ones(2), 1)], ModelKind.linear(1))
        with pytest.raises(NotSyntheticError):
            resample_clients(fd, 1)


class TestTransforms:
    def test_rotate_2x2(self):
        a, b, c, d = 1.0, 2.0, 3.0, 4.0
        out = apply_transform(np.array([[a, b, c, d]]), "rot90")
        np.testing.assert_array_equal(out, [[c, a, d, b]])

    def test_invert_involution(self):
        x = np.random.default_rng(0).uniform(0, 1, (5, 9))
        np.testing.assert_allclose(apply_transform(x, "invert"), 1 - x)
        np.testing.assert_allclose(apply_transform(apply_transform(x, "invert"), "invert"), x)

    def test_rotations_are_bijections(self):
        x = np.random.default_rng(1).uniform(0, 1, (3, 16))
        back = apply_transform(apply_transform(x, "rot90"), "rot270")
        np.testing.assert_array_equal(back, x)
        np.testing.assert_array_equal(apply_transform(apply_transform(x, "rot180"), "rot180"), x)

    def test_round_robin(self):
        rng = np.random.default_rng(2)
        X, y = rng.uniform(0, 1, (100, 4)), rng.integers(0, 3, 100)
        fd = make_transform_splits(X, y, ["identity", "rot90", "rot180", "invert"], m=8, n=10, seed=0)
        assert fd.ground_truth.sizes() == [2, 2, 2, 2]
        assert fd.kind == ModelKind.logistic(4, 3)
        rows = np.vstack([c.features for c in fd.clients[:1]])
        assert rows.shape == (10, 4)

    def test_non_square_rotation(self):
        X, y = np.zeros((20, 5)), np.zeros(20)
        with pytest.raises(ConfigError):
            make_transform_splits(X, y, ["rot90"], m=2, n=5)
        # inversion alone is fine on any width
        make_transform_splits(X, y, ["invert", "identity"], m=2, n=5, n_classes=2)

    def test_too_few_rows(self):
        with pytest.raises(ConfigError):
            make_transform_splits(np.zeros((5, 4)), np.zeros(5), ["identity"], m=2, n=5, n_classes=2)


class TestCsv:
    def test_round_trip(self, tmp_path, small_spec):
        fd = gen_mixture_linreg(SyntheticSpec(m=4, n=6, d=3, sigma=0.1, seed=5))
        save_federated_csv(fd, tmp_path)
        back = load_federated_csv(tmp_path)
        assert back.ground_truth == fd.ground_truth
        assert back.kind == fd.kind
        for a, b in zip(fd.clients, back.clients):
            assert np.max(np.abs(a.features - b.features)) <= 1e-12
            assert np.max(np.abs(a.targets - b.targets)) <= 1e-12
            assert a.n_train == b.n_train
        assert back.synthetic == fd.synthetic

    def test_classifier_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        fd = make_transform_splits(rng.uniform(0, 1, (40, 4)), rng.integers(0, 2, 40), ["identity", "invert"], 4, 10)
        save_federated_csv(fd, tmp_path)
        back = load_federated_csv(tmp_path)
        np.testing.assert_array_equal(back.clients[1].targets, fd.clients[1].targets)

    def test_missing_ground_truth(self, tmp_path):
        fd = gen_mixture_linreg(SyntheticSpec(m=2, n=4, d=2, seed=1))
        save_federated_csv(fd, tmp_path)
        (tmp_path / "ground_truth.csv").unlink()
        assert load_federated_csv(tmp_path).ground_truth is None

    def test_width_mismatch_names_file(self, tmp_path):
        fd = gen_mixture_linreg(SyntheticSpec(m=2, n=4, d=2, seed=1))
        save_federated_csv(fd, tmp_path)
        f = tmp_path / "client_1.csv"
        f.write_text("x0,x1,x2,y\n1,2,3,4\n")
        with pytest.raises(DataFormatError, match="client_1.csv:1"):
            load_federated_csv(tmp_path)

    def test_bad_row_names_line(self, tmp_path):
        fd = gen_mixture_linreg(SyntheticSpec(m=2, n=4, d=2, seed=1))
        save_federated_csv(fd, tmp_path)
        f = tmp_path / "client_0.csv"
        lines = f.read_text().splitlines()
        lines[2] = "1.0,oops,3.0"
        f.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match="client_0.csv:3"):
            load_federated_csv(tmp_path)

    def test_meta_contents(self, tmp_path):
        save_federated_csv(gen_mixture_linreg(SyntheticSpec(m=2, n=4, d=2, seed=1)), tmp_path)
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert meta["m"] == 2 and meta["d"] == 2 and meta["ground_truth"] is True
