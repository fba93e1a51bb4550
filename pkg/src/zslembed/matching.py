"""Nearest-neighbour zero-shot prediction and evaluation metrics.

Test instances are assigned to the class whose embedding (or latent
projection of it) is nearest in cosine distance.  Cosine distance is
1 - u.v/(|u||v|); a zero-norm vector gets the maximal distance 2
with a warning.  Ties break toward the lowest class index.
"""

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .matrix_io import as_matrix
from .regressors import MtlModel, latent_project, predict


@dataclass(frozen=True)
class Prediction:
    """Per-instance predicted class plus the full distance matrix.

    ``distances`` is n_classes x n_instances; ``indices[i]`` is the
    argmin of column i (first minimum on ties).
    """

    indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "distances", np.asarray(self.distances, dtype=np.float64))


def cosine_distances(queries, references):
    """n_ref x n_query matrix of cosine distances between columns."""
    q_norm = np.linalg.norm(queries, axis=0)
    r_norm = np.linalg.norm(references, axis=0)
    zero_q = q_norm == 0
    zero_r = r_norm == 0
    if zero_q.any() or zero_r.any():
        warnings.warn(
            "zero-norm vector in cosine distance; treated as maximally distant",
            stacklevel=2,
        )
    sims = references.T @ queries
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = sims / np.where(r_norm == 0, 1.0, r_norm)[:, None]
        sims = sims / np.where(q_norm == 0, 1.0, q_norm)[None, :]
    dists = 1.0 - sims
    dists[zero_r, :] = 2.0
    dists[:, zero_q] = 2.0
    return dists


def match_distributed(predictions, table):
    """Nearest class embedding to each predicted semantic vector."""
    predictions = as_matrix(predictions, "predictions")
    if predictions.shape[0] != table.dim:
        raise DataError(
            f"predictions are {predictions.shape[0]}-d, class embeddings "
            f"{table.dim}-d"
        )
    distances = cosine_distances(predictions, table.V)
    return Prediction(indices=np.argmin(distances, axis=0), distances=distances)


def match_latent(model, x_test, table):
    """Nearest-neighbour matching in the latent task space.

    Class prototypes are the least-squares preimages of the class
    embeddings under the combination matrix S (its Moore-Penrose
    pseudoinverse applied to V); instances are projected by the latent
    regressors A.
    """
    if not isinstance(model, MtlModel):
        raise DataError("latent matching requires a multi-task model")
    S = model.S
    rank = np.linalg.matrix_rank(S)
    if rank < S.shape[1]:
        raise DataError(
            f"combination matrix is rank-deficient ({rank} < {S.shape[1]}); "
            "latent prototypes are not identifiable"
        )
    if S.shape[0] != table.dim:
        raise DataError(
            f"model outputs are {S.shape[0]}-d, class embeddings {table.dim}-d"
        )
    prototypes = np.linalg.solve(S.T @ S, S.T @ table.V)
    latents = latent_project(model, x_test)
    distances = cosine_distances(latents, prototypes)
    return Prediction(indices=np.argmin(distances, axis=0), distances=distances)


def match(model, x_test, table, strategy="distributed"):
    """Dispatch on the matching strategy; see the two match_* functions."""
    if strategy == "distributed":
        return match_distributed(predict(model, x_test), table)
    if strategy == "latent":
        return match_latent(model, x_test, table)
    raise DataError(f"unknown matching strategy {strategy!r}")


def accuracy(prediction, truth):
    """Fraction of instances whose predicted class index is correct."""
    truth = np.asarray(truth)
    if truth.shape[0] != prediction.indices.shape[0]:
        raise DataError("prediction/label length mismatch")
    return float(np.mean(prediction.indices == truth))


def mean_average_precision(distances, truth):
    """Mean over classes of average precision at the positive ranks.

    For each class, instances are ranked by ascending distance and the
    precision at every positive's rank is averaged.  Classes with no
    positive instances are skipped with a warning.
    """
    distances = as_matrix(distances, "distances")
    truth = np.asarray(truth)
    if truth.shape[0] != distances.shape[1]:
        raise DataError("distance matrix/label length mismatch")
    per_class = []
    for c in range(distances.shape[0]):
        relevant = truth == c
        n_pos = int(relevant.sum())
        if n_pos == 0:
            warnings.warn(f"class {c} has no positive instances; skipped", stacklevel=2)
            continue
        order = np.argsort(distances[c], kind="stable")
        hits = relevant[order]
        ranks = np.flatnonzero(hits) + 1
        precisions = np.cumsum(hits)[hits.astype(bool)] / ranks
        per_class.append(float(precisions.mean()))
    if not per_class:
        raise DataError("no class has positive instances")
    return float(np.mean(per_class))


def save_predictions(prediction, path, class_names=None):
    """Export per-instance predictions as CSV (id, class, distance)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "predicted_class", "distance"])
        for i, cls in enumerate(prediction.indices):
            label = class_names[cls] if class_names else int(cls)
            writer.writerow([i, label, repr(float(prediction.distances[cls, i]))])
    return path
