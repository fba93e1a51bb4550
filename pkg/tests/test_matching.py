import csv

import numpy as np
import pytest

from oracles import average_precision_oracle, brute_cosine_match
from zslembed.data import HyperParams
from zslembed.embedding import ClassEmbeddingTable
from zslembed.errors import DataError
from zslembed.matching import (
    accuracy,
    match_distributed,
    match_latent,
    mean_average_precision,
    save_predictions,
)
from zslembed.regressors import MtlModel


def table_from(V):
    return ClassEmbeddingTable(
        V=V, class_names=tuple(f"c{i}" for i in range(V.shape[1])), kind="attribute"
    )


def test_exact_embedding_matches_its_class():
    rng = np.random.default_rng(0)
    V = rng.standard_normal((4, 3))
    pred = match_distributed(V[:, [1]], table_from(V))
    assert pred.indices[0] == 1
    assert pred.distances[1, 0] == pytest.approx(0.0, abs=1e-12)


def test_scale_invariance_of_argmin():
    rng = np.random.default_rng(1)
    V = rng.standard_normal((5, 4))
    P = rng.standard_normal((5, 9))
    base = match_distributed(P, table_from(V))
    scaled = match_distributed(3.7 * P, table_from(V))
    assert np.array_equal(base.indices, scaled.indices)


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(4)
    V = rng.standard_normal((6, 3))
    P = rng.standard_normal((6, 5))
    pred = match_distributed(P, table_from(V))
    oracle_idx, oracle_dist = brute_cosine_match(P, V)
    assert np.array_equal(pred.indices, oracle_idx)
    assert np.abs(pred.distances - oracle_dist).max() < 1e-12


def test_zero_prediction_warns_and_gets_max_distance():
    rng = np.random.default_rng(2)
    V = rng.standard_normal((3, 2))
    P = np.zeros((3, 1))
    with pytest.warns(UserWarning, match="zero-norm"):
        pred = match_distributed(P, table_from(V))
    assert np.all(pred.distances[:, 0] == 2.0)
    assert pred.indices[0] == 0  # tie broken toward the lowest class


def test_latent_matching_orthonormal_combination():
    rng = np.random.default_rng(3)
    d_z, T = 5, 3
    Q, _ = np.linalg.qr(rng.standard_normal((d_z, T)))
    A = rng.standard_normal((T, 4))
    model = MtlModel(S=Q, A=A, variant="mte", hyper=HyperParams(latent_t=T))
    V = rng.standard_normal((d_z, 6))
    X = rng.standard_normal((4, 8))
    pred = match_latent(model, X, table_from(V))
    # with orthonormal S the prototypes reduce to S^T V
    direct = match_distributed(A @ X, table_from(Q.T @ V))
    assert np.array_equal(pred.indices, direct.indices)
    assert np.abs(pred.distances - direct.distances).max() < 1e-12


def test_latent_prototypes_match_least_squares():
    rng = np.random.default_rng(5)
    S = rng.standard_normal((4, 2))
    V = rng.standard_normal((4, 3))
    model = MtlModel(
        S=S, A=rng.standard_normal((2, 3)), variant="mte", hyper=HyperParams(latent_t=2)
    )
    prototypes = np.linalg.solve(S.T @ S, S.T @ V)
    for j in range(3):
        expected = np.linalg.lstsq(S, V[:, j], rcond=None)[0]
        assert np.abs(prototypes[:, j] - expected).max() <= 1e-10
    # an instance whose latent equals a projected prototype matches exactly
    X = np.linalg.pinv(model.A) @ prototypes[:, [1]]
    pred = match_latent(model, X, table_from(V))
    assert pred.indices[0] == 1
    assert pred.distances[1, 0] == pytest.approx(0.0, abs=1e-9)


def test_latent_matching_rejects_rank_deficient():
    S = np.ones((3, 2))  # rank 1
    model = MtlModel(
        S=S, A=np.ones((2, 2)), variant="mte", hyper=HyperParams(latent_t=2)
    )
    with pytest.raises(DataError, match="rank-deficient"):
        match_latent(model, np.ones((2, 2)), table_from(np.eye(3)))


def test_accuracy_values():
    rng = np.random.default_rng(6)
    V = np.eye(3)
    pred = match_distributed(V, table_from(V))
    assert accuracy(pred, [0, 1, 2]) == 1.0
    assert accuracy(pred, [1, 2, 0]) == 0.0
    P = V[:, [0, 1, 2, 2, 1]]
    pred5 = match_distributed(P, table_from(V))
    assert accuracy(pred5, [0, 1, 2, 0, 0]) == pytest.approx(0.6)


def test_map_perfect_separation():
    distances = np.array([[0.1, 0.2, 0.9, 0.8], [0.9, 0.8, 0.1, 0.2]])
    truth = np.array([0, 0, 1, 1])
    assert mean_average_precision(distances, truth) == 1.0


def test_map_single_instance():
    assert mean_average_precision(np.array([[0.3]]), np.array([0])) == 1.0


def test_map_matches_hand_enumerated_oracle():
    rng = np.random.default_rng(7)
    distances = rng.uniform(size=(2, 4))
    truth = np.array([0, 1, 0, 1])
    expected = np.mean(
        [
            average_precision_oracle(distances[0], truth == 0),
            average_precision_oracle(distances[1], truth == 1),
        ]
    )
    assert mean_average_precision(distances, truth) == pytest.approx(expected)


def test_map_skips_empty_class_with_warning():
    distances = np.array([[0.1, 0.2], [0.5, 0.4]])
    truth = np.array([0, 0])
    with pytest.warns(UserWarning, match="no positive"):
        value = mean_average_precision(distances, truth)
    assert value == 1.0


def test_predictions_csv_export(tmp_path):
    rng = np.random.default_rng(8)
    V = rng.standard_normal((3, 2))
    pred = match_distributed(V[:, [1, 0]], table_from(V))
    path = save_predictions(pred, tmp_path / "pred.csv", class_names=("a", "b"))
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["predicted_class"] == "b"
    assert rows[1]["predicted_class"] == "a"
    assert float(rows[0]["distance"]) == pytest.approx(0.0, abs=1e-12)
