"""Class-name semantic embeddings.

Builds the d_z x n_c table V mapping class names to vectors, either
from a word-vector text file (compound names averaged over their
tokens) or from a per-class attribute matrix.
"""

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .matrix_io import as_matrix, load_matrix

_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_PUNCT = re.compile(r"[^A-Za-z0-9\s]+")


def tokenize(name):
    """Split a class name into lower-case tokens.

    Handles whitespace, punctuation and camel-case boundaries, so
    "Apply Eye Makeup" and "HandstandPushups" both come apart.
    """
    spaced = _CAMEL_BOUNDARY.sub(" ", _PUNCT.sub(" ", name))
    return [tok.lower() for tok in spaced.split() if tok]


@dataclass(frozen=True)
class WordVectorTable:
    """token -> vector map; all vectors share one dimension."""

    dim: int
    entries: dict

    def __post_init__(self):
        for token, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise DataError(
                    f"vector for {token!r} has length {vec.shape}, expected {self.dim}"
                )

    def __contains__(self, token):
        return token in self.entries


def load_word_vectors(path):
    """Read a text word-vector file: ``token v1 ... vd`` per line.

    An optional first line carrying just the vocabulary size and the
    dimension (two integers) is auto-detected and skipped.  Tokens are
    lower-cased; the first occurrence of a token wins.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"word-vector file not found: {path}")
    entries = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # count header
                except ValueError:
                    pass
            token = parts[0].lower()
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if dim is None:
                dim = vec.size
                if dim == 0:
                    raise DataError(f"{path}:{lineno}: token with no vector")
            elif vec.size != dim:
                raise DataError(
                    f"{path}:{lineno}: vector length {vec.size}, expected {dim}"
                )
            entries.setdefault(token, vec)
    if not entries:
        raise DataError(f"{path}: no vectors found")
    return WordVectorTable(dim=dim, entries=entries)


def embed_class_name(table, name, combine="mean"):
    """Embed one class name as the mean of its tokens' vectors.

    Unknown tokens are skipped; it is an error if every token is
    out-of-vocabulary.  ``combine="sum"`` adds the vectors instead of
    averaging (the two differ by the found-token count).
    """
    tokens = tokenize(name)
    if not tokens:
        raise DataError(f"class name {name!r} has no tokens")
    found = [table.entries[t] for t in tokens if t in table.entries]
    if not found:
        raise DataError(f"class name {name!r}: all tokens out of vocabulary")
    stacked = np.stack(found)
    if combine == "mean":
        return stacked.mean(axis=0)
    if combine == "sum":
        return stacked.sum(axis=0)
    raise ValueError(f"unknown combine mode {combine!r}")


@dataclass(frozen=True)
class ClassEmbeddingTable:
    """Semantic embedding matrix V (d_z x n_c) with its class names."""

    V: np.ndarray
    class_names: tuple
    kind: str = "word_vector"

    def __post_init__(self):
        V = as_matrix(self.V, origin="class embedding table").copy()
        V.setflags(write=False)
        names = tuple(str(n) for n in self.class_names)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "class_names", names)
        if V.shape[1] != len(names):
            raise DataError(
                f"embedding table has {V.shape[1]} columns for {len(names)} classes"
            )
        if self.kind not in ("word_vector", "attribute"):
            raise DataError(f"unknown embedding kind {self.kind!r}")
        norms = np.linalg.norm(V, axis=0)
        if (norms == 0).any():
            zero = [names[i] for i in np.flatnonzero(norms == 0)]
            raise DataError(f"all-zero embedding for classes: {zero}")

    @property
    def dim(self):
        return self.V.shape[0]

    def column(self, name):
        try:
            idx = self.class_names.index(name)
        except ValueError:
            raise DataError(f"class {name!r} not in embedding table") from None
        return self.V[:, idx]

    def subset(self, class_indices):
        keep = sorted(set(int(c) for c in class_indices))
        return ClassEmbeddingTable(
            V=self.V[:, keep],
            class_names=tuple(self.class_names[c] for c in keep),
            kind=self.kind,
        )


def build_class_table(source, class_names, kind="word_vector", normalize=None, combine="mean"):
    """Build the class embedding table for ``class_names``.

    ``source`` is a :class:`WordVectorTable` (kind ``word_vector``) or a
    matrix with one attribute row per class, in class order (kind
    ``attribute``).  Columns are L2-normalised by default for word
    vectors and left as-is for attributes; pass ``normalize`` to
    override.
    """
    names = list(class_names)
    if not names:
        raise DataError("no class names given")
    if kind == "word_vector":
        cols = []
        for name in names:
            try:
                cols.append(embed_class_name(source, name, combine=combine))
            except DataError as exc:
                raise DataError(f"class {name!r}: {exc}") from None
        V = np.stack(cols, axis=1)
    elif kind == "attribute":
        attrs = as_matrix(source, origin="attribute table")
        if attrs.shape[0] != len(names):
            raise DataError(
                f"attribute table has {attrs.shape[0]} rows for {len(names)} classes"
            )
        V = attrs.T.copy()
    else:
        raise ValueError(f"unknown embedding kind {kind!r}")
    if normalize is None:
        normalize = kind == "word_vector"
    if normalize:
        norms = np.linalg.norm(V, axis=0)
        if (norms == 0).any():
            zero = [names[i] for i in np.flatnonzero(norms == 0)]
            raise DataError(f"cannot normalise all-zero embedding for: {zero}")
        V = V / norms
    return ClassEmbeddingTable(V=V, class_names=tuple(names), kind=kind)


def load_attribute_table(matrix_path, classes_path, normalize=None):
    """Load an attribute embedding table: matrix file + class-name sidecar."""
    attrs = load_matrix(matrix_path)
    with open(classes_path) as fh:
        names = [line.strip() for line in fh if line.strip()]
    return build_class_table(attrs, names, kind="attribute", normalize=normalize)


def instance_embeddings(table, dataset):
    """d_z x n matrix whose column i is V's column for labels[i]."""
    if tuple(table.class_names) != tuple(dataset.class_names):
        raise DataError(
            "embedding table class names do not match the dataset's"
        )
    return table.V[:, dataset.labels]
