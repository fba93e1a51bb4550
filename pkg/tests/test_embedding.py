import numpy as np
import pytest

from zslembed.data import Dataset
from zslembed.embedding import (
    WordVectorTable,
    build_class_table,
    embed_class_name,
    instance_embeddings,
    load_attribute_table,
    load_word_vectors,
    tokenize,
)
from zslembed.errors import DataError
from zslembed.matrix_io import save_matrix


def small_table():
    return WordVectorTable(
        dim=3,
        entries={
            "apply": np.array([1.0, 0.0, 0.0]),
            "eye": np.array([0.0, 1.0, 0.0]),
            "makeup": np.array([0.0, 0.0, 1.0]),
            "hug": np.array([2.0, 2.0, 2.0]),
        },
    )


def test_tokenize_camel_case_and_punctuation():
    assert tokenize("HandstandPushups") == ["handstand", "pushups"]
    assert tokenize("Apply Eye Makeup") == ["apply", "eye", "makeup"]
    assert tokenize("salsa-spin!") == ["salsa", "spin"]


def test_single_token_is_exact():
    table = small_table()
    assert np.array_equal(embed_class_name(table, "Hug"), table.entries["hug"])


def test_compound_name_is_token_mean():
    vec = embed_class_name(small_table(), "Apply Eye Makeup")
    assert np.allclose(vec, [1 / 3, 1 / 3, 1 / 3])


def test_sum_combine_mode():
    vec = embed_class_name(small_table(), "Apply Eye Makeup", combine="sum")
    assert np.allclose(vec, [1.0, 1.0, 1.0])


def test_unknown_tokens_skipped_but_all_unknown_fails():
    table = small_table()
    assert np.array_equal(
        embed_class_name(table, "apply xqzt9"), table.entries["apply"]
    )
    with pytest.raises(DataError, match="out of vocabulary"):
        embed_class_name(table, "xqzt9")
    with pytest.raises(DataError, match="no tokens"):
        embed_class_name(table, "!!!")


def test_token_order_irrelevant():
    table = small_table()
    assert np.allclose(
        embed_class_name(table, "eye apply"), embed_class_name(table, "apply eye")
    )


def test_build_table_normalises_word_vectors():
    table = build_class_table(small_table(), ["Hug", "ApplyEye"])
    norms = np.linalg.norm(table.V, axis=0)
    assert np.all(np.abs(norms - 1.0) < 1e-12)
    assert table.kind == "word_vector"


def test_identical_names_identical_columns():
    table = build_class_table(small_table(), ["Hug", "Hug"], normalize=False)
    assert np.array_equal(table.V[:, 0], table.V[:, 1])


def test_attribute_kind_not_normalised_by_default():
    attrs = np.array([[3.0, 0.0], [0.0, 5.0]])
    table = build_class_table(attrs, ["a", "b"], kind="attribute")
    assert np.array_equal(table.V, attrs.T)


def test_instance_embeddings_match_labels():
    rng = np.random.default_rng(0)
    ds = Dataset(
        features=rng.standard_normal((4, 6)),
        labels=[0, 1, 2, 0, 1, 2],
        class_names=("a", "b", "c"),
    )
    table = build_class_table(
        rng.standard_normal((3, 5)), ["a", "b", "c"], kind="attribute"
    )
    Z = instance_embeddings(table, ds)
    assert Z.shape == (5, 6)
    assert np.array_equal(Z[:, 0], Z[:, 3])
    assert np.array_equal(Z[:, 1], table.V[:, 1])
    norms = np.linalg.norm(Z, axis=0)
    expected = np.linalg.norm(table.V, axis=0)[ds.labels]
    assert np.allclose(norms, expected)


def test_instance_embeddings_identity_when_one_per_class():
    rng = np.random.default_rng(1)
    ds = Dataset(
        features=rng.standard_normal((2, 3)),
        labels=[0, 1, 2],
        class_names=("a", "b", "c"),
    )
    table = build_class_table(
        rng.standard_normal((3, 4)), ["a", "b", "c"], kind="attribute"
    )
    assert np.array_equal(instance_embeddings(table, ds), table.V)


def test_instance_embeddings_class_mismatch():
    rng = np.random.default_rng(2)
    ds = Dataset(
        features=rng.standard_normal((2, 2)),
        labels=[0, 1],
        class_names=("a", "b"),
    )
    table = build_class_table(
        rng.standard_normal((2, 3)), ["a", "x"], kind="attribute"
    )
    with pytest.raises(DataError, match="do not match"):
        instance_embeddings(table, ds)


def test_load_word_vectors_with_count_header(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("2 3\nHug 1 2 3\neye 4 5 6\n")
    table = load_word_vectors(path)
    assert table.dim == 3
    assert np.array_equal(table.entries["hug"], [1.0, 2.0, 3.0])


def test_load_word_vectors_plain(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("hug 1 2\neye 3 4\n")
    table = load_word_vectors(path)
    assert table.dim == 2
    assert set(table.entries) == {"hug", "eye"}


def test_load_word_vectors_length_mismatch(tmp_path):
    path = tmp_path / "vecs.txt"
    path.write_text("hug 1 2\neye 3\n")
    with pytest.raises(DataError, match="length"):
        load_word_vectors(path)


def test_attribute_table_file_loading(tmp_path):
    attrs = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    save_matrix(attrs, tmp_path / "attrs.dmat")
    (tmp_path / "classes.txt").write_text("a\nb\nc\n")
    table = load_attribute_table(tmp_path / "attrs.dmat", tmp_path / "classes.txt")
    assert table.class_names == ("a", "b", "c")
    assert np.array_equal(table.V, attrs.T)
