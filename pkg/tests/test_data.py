import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from declml.config import compile_config
from declml.data import (
    CategoryMetadata,
    ColumnarDataset,
    NumericMetadata,
    SetMetadata,
    assign_splits,
    decode_column,
    decode_predictions,
    encode_column,
    encode_dataset,
    fit_feature,
    fit_metadata,
    ingest_table,
    metadata_from_dict,
    metadata_to_dict,
    tokenize,
)
from declml.errors import (
    AllMissingColumn,
    BadBinaryLiteral,
    BadRatios,
    BadSplitLabel,
    BadVectorLength,
    EmptyTrainSplit,
    MalformedRow,
    MissingColumn,
    MissingFile,
    ShapeMismatch,
)
from synthetic import BOOK_CONFIG, book_rows, write_csv

BOOK = compile_config(BOOK_CONFIG)


# --- ingest_table -------------------------------------------------------------


def test_ingest_book_table(tmp_path):
    path = tmp_path / "books.csv"
    write_csv(path, book_rows(20))
    ds = ingest_table(path, BOOK)
    assert ds.column_names == ["title", "sales", "user_score", "tags"]
    assert ds.row_count == 20
    assert all(isinstance(c, str) for c in ds.column("sales"))


def test_ingest_missing_column(tmp_path):
    path = tmp_path / "books.csv"
    rows = [{k: v for k, v in r.items() if k != "tags"} for r in book_rows(5)]
    write_csv(path, rows)
    with pytest.raises(MissingColumn) as ei:
        ingest_table(path, BOOK)
    assert ei.value.column == "tags"
    # outputs are optional for prediction-time reads
    assert ingest_table(path, BOOK, require_outputs=False).row_count == 5


def test_ingest_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("title,sales,user_score,tags\n")
    ds = ingest_table(path, BOOK)
    assert ds.row_count == 0
    with pytest.raises(EmptyTrainSplit):
        fit_metadata(ds, BOOK)


def test_ingest_quoted_fields_and_delimiter(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text('a;b\n"x;y";"say ""hi"""\n')
    ds = ingest_table(path, delimiter=";")
    assert ds.column("a") == ("x;y",) and ds.column("b") == ('say "hi"',)


def test_ingest_ragged_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3\n")
    with pytest.raises(MalformedRow) as ei:
        ingest_table(path)
    assert ei.value.row == 3


def test_ingest_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        ingest_table(tmp_path / "nope.csv")


def test_unequal_columns_rejected():
    with pytest.raises(ValueError):
        ColumnarDataset({"a": ("1", "2"), "b": ("1",)})


# --- assign_splits ------------------------------------------------------------


def _ds(n):
    return ColumnarDataset({"x": tuple(str(i) for i in range(n))})


def test_exact_split_counts():
    a = assign_splits(_ds(100), (0.7, 0.1, 0.2), seed=7)
    assert a.counts() == {"train": 70, "validation": 10, "test": 20}
    assert a == assign_splits(_ds(100), (0.7, 0.1, 0.2), seed=7)
    assert a != assign_splits(_ds(100), (0.7, 0.1, 0.2), seed=8)


def test_split_column_passthrough():
    labels = ("train", "test", "validation", "train")
    ds = ColumnarDataset({"x": ("a", "b", "c", "d"), "split": labels})
    for seed in (0, 1, 99):
        assert assign_splits(ds, seed=seed, split_column="split").labels == labels


def test_bad_split_label():
    ds = ColumnarDataset({"split": ("train", "dev")})
    with pytest.raises(BadSplitLabel):
        assign_splits(ds, split_column="split")


@pytest.mark.parametrize("ratios", [(0.5, 0.5, 0.0), (0.7, 0.2, 0.2), (1.0,), (-0.1, 0.6, 0.5)])
def test_bad_ratios(ratios):
    with pytest.raises(BadRatios):
        assign_splits(_ds(10), ratios)


@st.composite
def ratio_triples(draw):
    a = draw(st.integers(1, 98))
    b = draw(st.integers(1, 99 - a))
    return (a / 100, b / 100, (100 - a - b) / 100)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 300), ratio_triples(), st.integers(0, 2**32 - 1))
def test_split_fractions_within_one_row(n, ratios, seed):
    a = assign_splits(_ds(n), ratios, seed=seed)
    assert len(a.labels) == n
    counts = a.counts()
    assert sum(counts.values()) == n
    for (name, k), r in zip(counts.items(), ratios):
        assert abs(k - n * r) <= 1.0 + 1e-9


# --- fit_metadata ---------------------------------------------------------------


def test_category_vocabulary_order():
    meta = fit_feature("category", ["a", "b", "a", "c"])
    assert meta.index == {"<UNK>": 0, "a": 1, "b": 2, "c": 3}


def test_category_vocab_cap_ties_lexicographic():
    meta = fit_feature("category", ["z", "y", "y", "x", "z"], vocab_size=2)
    assert meta.vocab[1:] == ("y", "z")


def test_numeric_stats():
    meta = fit_feature("numeric", ["1", "2", "3", "4"])
    assert meta.mean == 2.5
    assert meta.std == pytest.approx(math.sqrt(1.25))
    assert fit_feature("numeric", ["3", "3"]).std == 1.0


def test_numeric_all_missing():
    with pytest.raises(AllMissingColumn):
        fit_feature("numeric", ["", "n/a"])


def test_text_vocabulary():
    meta = fit_feature("text", ["The cat", "the dog"])
    assert meta.index == {"<PAD>": 0, "<UNK>": 1, "the": 2, "cat": 3, "dog": 4}


def test_tokenizer():
    assert tokenize("Hello, WORLD!! 42x") == ["hello", "world", "42x"]
    assert tokenize("  ...  ") == []


def test_max_sequence_length_auto():
    meta = fit_feature("text", ["a b c", "a", "a b"])
    assert meta.max_sequence_length == 3
    assert fit_feature("text", [" ".join(["w"] * 400)]).max_sequence_length == 256
    assert fit_feature("text", ["", ""]).max_sequence_length == 1


def test_metadata_dict_roundtrip():
    for t, cells in [("category", ["a"]), ("text", ["x y"]), ("set", ["p q"]), ("numeric", ["1", "2"]), ("binary", ["1"]), ("vector", ["1 2"])]:
        meta = fit_feature(t, cells)
        assert metadata_from_dict(metadata_to_dict(meta)) == meta


# --- encode -------------------------------------------------------------------


def test_encode_category_with_unk():
    meta = fit_feature("category", ["a", "b", "a", "c"])
    assert encode_column(["b", "zzz"], meta).tolist() == [2, 0]


def test_encode_text_padding():
    meta = fit_feature("text", ["The cat", "the dog"], max_sequence_length=5)
    assert encode_column(["the the cat"], meta).tolist() == [[2, 2, 3, 0, 0]]
    assert encode_column(["the bird"], meta).tolist() == [[2, 1, 0, 0, 0]]


def test_encode_numeric_zscore():
    meta = NumericMetadata(mean=2.5, std=1.118, fill_value=2.5)
    assert encode_column(["4.0"], meta)[0, 0] == pytest.approx(1.3416, abs=1e-4)
    assert encode_column([""], meta)[0, 0] == 0.0


def test_encode_set_multi_hot():
    meta = fit_feature("set", ["x y", "y z"])
    assert meta.vocab == ("y", "x", "z")
    assert encode_column(["z x", "", "w"], meta).tolist() == [[0, 1, 1], [0, 0, 0], [0, 0, 0]]


def test_encode_binary_literals():
    meta = fit_feature("binary", ["true"])
    cells = ["True", "1", "yes", "t", "FALSE", "0", "no", "f"]
    assert encode_column(cells, meta)[:, 0].tolist() == [1, 1, 1, 1, 0, 0, 0, 0]
    with pytest.raises(BadBinaryLiteral):
        encode_column(["maybe"], meta)


def test_encode_vector_length():
    meta = fit_feature("vector", ["1 2 3"])
    assert encode_column(["0.5 1 2"], meta).tolist() == [[0.5, 1, 2]]
    with pytest.raises(BadVectorLength):
        encode_column(["1 2"], meta)


def test_encode_dataset_shapes_and_determinism():
    ds = ColumnarDataset.from_rows(book_rows(30))
    meta = fit_metadata(ds, BOOK)
    enc = encode_dataset(ds, meta, BOOK)
    assert enc.inputs["title"].shape[0] == enc.inputs["sales"].shape[0] == 30
    assert enc.targets["user_score"].shape == (30, 1)
    assert enc.targets["tags"].shape == (30, meta["tags"].size)
    batches = [list(enc.batches(7, np.random.default_rng(3))) for _ in range(2)]
    for a, b in zip(*batches):
        assert np.array_equal(a.indices, b.indices)
        for k in a.inputs:
            assert a.inputs[k].tobytes() == b.inputs[k].tobytes()
    again = encode_dataset(ds, fit_metadata(ds, BOOK), BOOK)
    assert all(enc.inputs[k].tobytes() == again.inputs[k].tobytes() for k in enc.inputs)


def test_batch_leading_dims_equal():
    ds = ColumnarDataset.from_rows(book_rows(10))
    enc = encode_dataset(ds, fit_metadata(ds, BOOK), BOOK)
    for b in enc.batches(4):
        dims = {len(b)} | {v.shape[0] for v in b.inputs.values()} | {v.shape[0] for v in b.targets.values()}
        assert len(dims) == 1


# --- decode -------------------------------------------------------------------


def test_decode_examples():
    cat = fit_feature("category", ["a", "b", "a", "c"])
    assert decode_column(np.array([[0.1, 0.2, 0.6, 0.1]]), cat) == ["b"]
    s = SetMetadata(("x", "y", "z"))
    assert decode_column(np.array([[0.9, 0.4, 0.7]]), s) == [["x", "z"]]
    num = NumericMetadata(mean=2.5, std=1.118, fill_value=2.5)
    assert decode_column(np.array([[1.3416]]), num)[0] == pytest.approx(4.0, abs=1e-3)
    b = fit_feature("binary", ["1"])
    assert decode_column(np.array([[0.5], [0.49]]), b) == [True, False]


def test_decode_shape_mismatch():
    cat = CategoryMetadata(("<UNK>", "a"))
    with pytest.raises(ShapeMismatch):
        decode_predictions({"c": np.zeros((2, 3))}, {"c": cat})


labels = st.text("abcdef", min_size=1, max_size=3)


@given(st.lists(labels, min_size=1, max_size=30))
def test_category_round_trip(cells):
    meta = fit_feature("category", cells)
    idx = encode_column(cells, meta)
    onehot = np.eye(meta.size)[idx]
    assert decode_column(onehot, meta) == list(cells)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30))
def test_numeric_round_trip(values):
    cells = [repr(v) for v in values]
    meta = fit_feature("numeric", cells)
    back = decode_column(encode_column(cells, meta), meta)
    scale = max(1.0, max(abs(v) for v in values))
    for v, w in zip(values, back):
        assert abs(v - w) <= 1e-5 * scale


@given(st.lists(st.text("ab ", max_size=20), min_size=1, max_size=10), st.integers(1, 6))
def test_padding(cells, L):
    meta = fit_feature("text", cells, max_sequence_length=L)
    enc = encode_column(cells, meta)
    assert enc.shape == (len(cells), L)
    for row, cell in zip(enc, cells):
        n = min(len(tokenize(cell)), L)
        assert (row[:n] > 0).all() and (row[n:] == 0).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_no_leakage(seed):
    rng = np.random.default_rng(seed)
    ds = ColumnarDataset.from_rows(book_rows(40, seed=seed % 7))
    split = assign_splits(ds, seed=1)
    train = ds.take(split.indices("train"))
    meta = fit_metadata(train, BOOK)
    cols = {k: list(v) for k, v in ds.columns.items()}
    for i in split.indices("validation") + split.indices("test"):
        cols["title"][i] = "zz" + str(rng.integers(1000))
        cols["sales"][i] = str(rng.normal() * 1e6)
        cols["tags"][i] = "unseen item"
    mutated = ColumnarDataset({k: tuple(v) for k, v in cols.items()})
    assert fit_metadata(mutated.take(split.indices("train")), BOOK) == meta
