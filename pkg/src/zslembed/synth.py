"""Controllable synthetic zero-shot problems.

The generator draws class embeddings from a unit Gaussian (rejection
sampling keeps pairwise cosine similarity below 0.8), builds a
rank-limited ground-truth map with orthonormal factors, and emits
features x = A*^T S*^T v_class + Gaussian noise.  With full rank and no
noise the map is exactly invertible, so learned regressors can reach
perfect matching; raising the noise degrades accuracy toward chance.

``generate_augmentation`` produces an auxiliary pool in which a chosen
fraction of classes shares the target's generating map (relevant) while
the rest run through an independent map (distractors whose features
live in a different subspace).  Relevant class embeddings are drawn
correlated with target classes so they are also semantically close.
"""

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .data import Dataset
from .embedding import ClassEmbeddingTable
from .errors import ConfigError, DataError

COSINE_SEPARATION = 0.8
RELEVANT_MIX = 0.8  # correlation of a relevant aux embedding with its anchor class
DISTRACTOR_SHIFT = 1.5  # offset of a distractor embedding, in units of sqrt(d_z)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape, noise and seed of one synthetic problem."""

    n_classes: int = 10
    d_x: int = 20
    d_z: int = 8
    instances_per_class: int = 10
    noise_sigma: float = 0.0
    mapping_rank: int = 8
    aux_relevant_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.mapping_rank > min(self.d_x, self.d_z):
            raise ConfigError(
                f"mapping_rank {self.mapping_rank} exceeds min(d_x, d_z)="
                f"{min(self.d_x, self.d_z)}"
            )
        if self.mapping_rank < 1:
            raise ConfigError("mapping_rank must be at least 1")
        if not 0.0 <= self.aux_relevant_fraction <= 1.0:
            raise ConfigError("aux_relevant_fraction must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if self.instances_per_class < 1:
            raise ConfigError("instances_per_class must be at least 1")


@dataclass(frozen=True)
class TruthMap:
    """Ground-truth factors of the generating map W = S @ A."""

    S: np.ndarray
    A: np.ndarray

    @property
    def W(self):
        return self.S @ self.A


def _separated_embeddings(rng, n_classes, d_z, max_tries=2000):
    cols = []
    for c in range(n_classes):
        for _ in range(max_tries):
            v = rng.standard_normal(d_z)
            norm = np.linalg.norm(v)
            if norm == 0:
                continue
            if all(
                float(v @ u) / (norm * np.linalg.norm(u)) < COSINE_SEPARATION
                for u in cols
            ):
                cols.append(v)
                break
        else:
            raise DataError(
                f"could not place {n_classes} classes with cosine similarity "
                f"< {COSINE_SEPARATION} in {d_z} dimensions"
            )
    return np.stack(cols, axis=1)


def _orthonormal_map(rng, d_z, d_x, rank):
    G = rng.standard_normal((d_z, d_x))
    U, _, Vt = np.linalg.svd(G, full_matrices=False)
    return TruthMap(S=U[:, :rank].copy(), A=Vt[:rank, :].copy())


def _target_world(spec):
    """Embeddings and map of the target problem; a pure function of the
    spec so the augmentation generator can re-derive them."""
    rng = np.random.default_rng(spec.seed)
    V = _separated_embeddings(rng, spec.n_classes, spec.d_z)
    truth = _orthonormal_map(rng, spec.d_z, spec.d_x, spec.mapping_rank)
    return V, truth, rng


def _instances(rng, truth, V, labels, noise_sigma, d_x):
    clean = truth.A.T @ (truth.S.T @ V[:, labels])
    return clean + noise_sigma * rng.standard_normal((d_x, labels.size))


def generate(spec):
    """Build (dataset, class embedding table, ground-truth map)."""
    V, truth, rng = _target_world(spec)
    labels = np.repeat(np.arange(spec.n_classes), spec.instances_per_class)
    features = _instances(rng, truth, V, labels, spec.noise_sigma, spec.d_x)
    names = tuple(f"class_{c:03d}" for c in range(spec.n_classes))
    dataset = Dataset(features=features, labels=labels, class_names=names)
    table = ClassEmbeddingTable(V=V, class_names=names, kind="attribute")
    return dataset, table, truth


def generate_augmentation(spec, target):
    """Build an auxiliary pool mixing relevant and distractor classes.

    ``round(aux_relevant_fraction * n_classes)`` classes share the
    target's generating map, with embeddings correlated to randomly
    chosen target classes; the remainder get fresh embeddings pushed
    through an independent map of the same rank.  Class names carry
    ``aux_rel_``/``aux_irr_`` prefixes so the groups stay identifiable.
    Returns the pool and its class-embedding table.
    """
    V_target, truth, _ = _target_world(spec)
    if target.dim != spec.d_x:
        raise DataError(
            f"target features are {target.dim}-d but the spec says {spec.d_x}"
        )
    rng = np.random.default_rng([spec.seed, 1])
    n_rel = int(round(spec.aux_relevant_fraction * spec.n_classes))
    n_irr = spec.n_classes - n_rel

    cols = []
    names = []
    for c in range(n_rel):
        anchor = V_target[:, rng.integers(spec.n_classes)]
        mix = RELEVANT_MIX * anchor + np.sqrt(1 - RELEVANT_MIX**2) * rng.standard_normal(
            spec.d_z
        )
        cols.append(mix)
        names.append(f"aux_rel_{c:03d}")
    # distractors: embeddings from a shifted Gaussian (a semantic
    # neighbourhood away from the targets), features through the shared
    # latent regressors but an independently drawn combination matrix,
    # so their visual-semantic relation contradicts the target's
    scrambled = _orthonormal_map(rng, spec.d_z, spec.d_x, spec.mapping_rank)
    other = TruthMap(S=scrambled.S, A=truth.A)
    offset = DISTRACTOR_SHIFT * np.sqrt(spec.d_z)
    for c in range(n_irr):
        direction = rng.standard_normal(spec.d_z)
        direction /= np.linalg.norm(direction)
        cols.append(offset * direction + rng.standard_normal(spec.d_z))
        names.append(f"aux_irr_{c:03d}")
    V_aux = np.stack(cols, axis=1)

    labels = np.repeat(np.arange(spec.n_classes), spec.instances_per_class)
    features = np.empty((spec.d_x, labels.size))
    rel_mask = labels < n_rel
    features[:, rel_mask] = _instances(
        rng, truth, V_aux, labels[rel_mask], spec.noise_sigma, spec.d_x
    )
    if (~rel_mask).any():
        features[:, ~rel_mask] = _instances(
            rng, other, V_aux, labels[~rel_mask], spec.noise_sigma, spec.d_x
        )
    dataset = Dataset(features=features, labels=labels, class_names=tuple(names))
    table = ClassEmbeddingTable(V=V_aux, class_names=tuple(names), kind="attribute")
    return dataset, table


def load_synthetic_spec(path):
    """Read a spec from flat key=value text (keys = field names)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"synthetic spec not found: {path}")
    known = {f.name: f.type for f in fields(SyntheticSpec)}
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown spec field {key!r}")
        try:
            values[key] = float(raw) if key in (
                "noise_sigma",
                "aux_relevant_fraction",
            ) else int(raw)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}") from None
    return SyntheticSpec(**values)


def save_synthetic_spec(spec, path):
    lines = [f"{f.name}={getattr(spec, f.name)}" for f in fields(SyntheticSpec)]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)
