"""Core data containers: feature sets, class splits, and hyper-parameters.

All containers are immutable after construction (arrays are marked
read-only), so they can be shared freely across parallel workers.
Randomness flows from a single 64-bit master seed through NumPy's
PCG64 generator; per-split seeds are drawn from the master stream so
splits are reproducible from the seed alone.
"""

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataError
from .matrix_io import as_matrix, load_matrix, save_matrix


def _freeze(arr):
    # own a copy so marking it read-only cannot affect a caller's array
    arr = np.array(arr, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with per-instance class labels.

    ``features`` is d_x x n (one column per instance), ``labels`` holds
    0-based class indices of length n, and ``class_names`` lists the
    n_c class names in index order.  Every class must be populated.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple

    def __post_init__(self):
        feats = _freeze(as_matrix(self.features, origin="features"))
        labels = _freeze(np.asarray(self.labels, dtype=np.int64))
        names = tuple(str(n) for n in self.class_names)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)
        if labels.ndim != 1 or labels.shape[0] != feats.shape[1]:
            raise DataError(
                f"labels length {labels.shape} does not match "
                f"{feats.shape[1]} feature columns"
            )
        if len(set(names)) != len(names):
            raise DataError("duplicate class names")
        if labels.size == 0:
            raise DataError("dataset has no instances")
        if labels.min() < 0 or labels.max() >= len(names):
            raise DataError(
                f"label index out of range for {len(names)} classes"
            )
        present = np.bincount(labels, minlength=len(names))
        if (present == 0).any():
            empty = [names[i] for i in np.flatnonzero(present == 0)]
            raise DataError(f"classes with no instances: {empty}")

    @property
    def n_instances(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def dim(self):
        return self.features.shape[0]

    def subset_by_classes(self, class_indices):
        """Restrict to the given classes, relabelling to 0..k-1.

        Class order (and hence the new indices) follows the sorted
        original indices, so the mapping is deterministic.
        """
        keep = sorted(set(int(c) for c in class_indices))
        if not keep:
            raise DataError("empty class subset")
        remap = {c: i for i, c in enumerate(keep)}
        mask = np.isin(self.labels, keep)
        if not mask.any():
            raise DataError("class subset selects no instances")
        labels = np.array([remap[int(c)] for c in self.labels[mask]])
        return Dataset(
            features=self.features[:, mask],
            labels=labels,
            class_names=tuple(self.class_names[c] for c in keep),
        )


def concat_datasets(first, second):
    """Append ``second``'s instances and classes after ``first``'s.

    Feature dimensions must agree and class names must not collide
    (merging a class across sources would blur their provenance).
    """
    if first.dim != second.dim:
        raise DataError(
            f"feature dimension mismatch: {first.dim} vs {second.dim}"
        )
    overlap = set(first.class_names) & set(second.class_names)
    if overlap:
        raise DataError(f"class names present in both datasets: {sorted(overlap)}")
    return Dataset(
        features=np.hstack([first.features, second.features]),
        labels=np.concatenate([first.labels, second.labels + first.n_classes]),
        class_names=first.class_names + second.class_names,
    )


@dataclass(frozen=True)
class ClassSplit:
    """Disjoint train/test partition of a dataset's class indices."""

    train_classes: tuple
    test_classes: tuple
    seed: int

    def __post_init__(self):
        train = tuple(sorted(set(int(c) for c in self.train_classes)))
        test = tuple(sorted(set(int(c) for c in self.test_classes)))
        object.__setattr__(self, "train_classes", train)
        object.__setattr__(self, "test_classes", test)
        if set(train) & set(test):
            raise DataError("train and test classes overlap")


def make_splits(dataset, n_splits, seed):
    """Partition classes evenly into train/test, ``n_splits`` times.

    Train receives ceil(n_c / 2) classes.  Each split draws its own
    seed from the master seed, and the whole list is a pure function
    of (class count, n_splits, seed).
    """
    n_c = dataset.n_classes
    if n_c < 2:
        raise DataError("need at least 2 classes to split")
    master = np.random.default_rng(seed)
    split_seeds = master.integers(0, 2**63 - 1, size=n_splits)
    n_train = -(-n_c // 2)
    splits = []
    for split_seed in split_seeds:
        perm = np.random.default_rng(int(split_seed)).permutation(n_c)
        splits.append(
            ClassSplit(
                train_classes=tuple(perm[:n_train]),
                test_classes=tuple(perm[n_train:]),
                seed=int(split_seed),
            )
        )
    return splits


def one_hot(dataset):
    """n_c x n binary indicator matrix; column i is 1 at labels[i]."""
    out = np.zeros((dataset.n_classes, dataset.n_instances))
    out[dataset.labels, np.arange(dataset.n_instances)] = 1.0
    return out


@dataclass(frozen=True)
class HyperParams:
    """Regularisation strengths and solver controls for all fits.

    ``lambda_ridge`` drives the single-task fit; ``lambda_s``,
    ``lambda_a`` and ``lambda_l`` penalise the combination matrix,
    the latent regressors and the latent codes of the multi-task
    fits (``lambda_a`` doubles as the GOMTL/RMTL gamma).
    ``gamma_shared``/``gamma_task`` optionally split the RMTL penalty
    between the shared and per-output vectors.
    """

    lambda_ridge: float = 0.1
    lambda_s: float = 0.01
    lambda_a: float = 0.01
    lambda_l: float = 0.01
    latent_t: int = 2
    admm_rho: float = 1.0
    max_iters: int = 500
    rel_tol: float = 1e-8
    gamma_shared: float = None
    gamma_task: float = None

    def __post_init__(self):
        for name in ("lambda_ridge", "lambda_s", "lambda_a", "lambda_l"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.latent_t < 1:
            raise ValueError("latent_t must be at least 1")
        if self.admm_rho <= 0:
            raise ValueError("admm_rho must be positive")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    def with_latent_t(self, t):
        return replace(self, latent_t=int(t))


def load_manifest(path):
    """Load a dataset from a plain-text manifest.

    The manifest holds ``features=<path>``, ``labels=<path>`` (one
    class-name string per instance per line) and ``classes=<path>``
    (ordered class names).  Relative paths resolve against the
    manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    entries = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    for key in ("features", "labels", "classes"):
        if key not in entries:
            raise DataError(f"{path}: missing '{key}=' entry")
    base = path.parent
    features = load_matrix(base / entries["features"])
    class_names = _read_lines(base / entries["classes"])
    if len(set(class_names)) != len(class_names):
        raise DataError(f"{entries['classes']}: duplicate class names")
    index = {name: i for i, name in enumerate(class_names)}
    labels = []
    for lineno, name in enumerate(_read_lines(base / entries["labels"]), start=1):
        if name not in index:
            raise DataError(
                f"{entries['labels']}:{lineno}: unknown class {name!r}"
            )
        labels.append(index[name])
    return Dataset(features=features, labels=np.array(labels), class_names=tuple(class_names))


def save_manifest(dataset, out_dir, stem="data"):
    """Write a dataset as manifest + feature/label/class files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    features_name = f"{stem}_features.dmat"
    labels_name = f"{stem}_labels.txt"
    classes_name = f"{stem}_classes.txt"
    save_matrix(dataset.features, out_dir / features_name)
    with open(out_dir / labels_name, "w") as fh:
        for lab in dataset.labels:
            fh.write(dataset.class_names[lab] + "\n")
    with open(out_dir / classes_name, "w") as fh:
        for name in dataset.class_names:
            fh.write(name + "\n")
    manifest = out_dir / f"{stem}_manifest.txt"
    with open(manifest, "w") as fh:
        fh.write(f"features={features_name}\n")
        fh.write(f"labels={labels_name}\n")
        fh.write(f"classes={classes_name}\n")
    return manifest


def _read_lines(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path) as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]
