import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from declml.autodiff import Tape
from declml.config import canonical_render, compile_config
from declml.data import ColumnarDataset, NumericMetadata, encode_dataset, fit_feature, fit_metadata
from declml.errors import EmptySplit, LengthMismatch, UnknownMetric
from declml.evaluate import R2_DEGENERATE, EvalReport, compute_metric, evaluate_split, head_metrics
from declml.model import build_model, multi_task_loss
from synthetic import BOOK_CONFIG, book_rows

BOOK = compile_config(BOOK_CONFIG)


def test_metric_examples():
    assert compute_metric("jaccard", [{"a", "b"}], [{"b", "c"}]) == pytest.approx(1 / 3)
    assert compute_metric("accuracy", ["a", "b", "a"], ["a", "a", "a"]) == pytest.approx(2 / 3)
    assert compute_metric("micro_f1", [{"x"}, {"y", "z"}], [{"x"}, {"y", "z"}]) == 1.0
    assert compute_metric("mse", [1.0, 3.0], [2.0, 1.0]) == 2.5
    assert compute_metric("mae", [1.0, 3.0], [2.0, 1.0]) == 1.5


def test_empty_set_conventions():
    assert compute_metric("jaccard", [set()], [set()]) == 1.0
    assert compute_metric("micro_f1", [set(), set()], [set(), set()]) == 1.0
    assert compute_metric("micro_f1", [{"a"}], [set()]) == 0.0


def test_r2_degenerate_cases():
    assert compute_metric("r2", [2.0, 2.0], [2.0, 2.0]) == 0.0
    assert compute_metric("r2", [1.0, 2.0], [2.0, 2.0]) == R2_DEGENERATE
    assert compute_metric("r2", [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0


def test_constant_mean_regressor_r2_zero():
    t = np.random.default_rng(0).normal(size=50)
    assert compute_metric("r2", np.full(50, t.mean()), t) == pytest.approx(0.0, abs=1e-6)


def test_metric_errors():
    with pytest.raises(UnknownMetric):
        compute_metric("auc", [1], [1])
    with pytest.raises(LengthMismatch):
        compute_metric("mse", [1.0, 2.0], [1.0])


def test_indicator_matrices_match_sets():
    p = np.array([[1, 0, 1], [0, 0, 0]], dtype=float)
    t = np.array([[1, 1, 0], [0, 0, 0]], dtype=float)
    assert compute_metric("jaccard", p, t) == compute_metric("jaccard", [{0, 2}, set()], [{0, 1}, set()])


def test_perfect_predictions_per_head():
    cat = fit_feature("category", ["a", "b", "c"])
    idx = np.array([1, 2, 3, 1])
    assert head_metrics("category", ["accuracy"], np.eye(4)[idx], idx, cat) == {"accuracy": 1.0}
    num = NumericMetadata(mean=3.0, std=2.0, fill_value=3.0)
    z = np.array([[0.5], [-1.0], [2.0]])
    assert head_metrics("numeric", ["mse", "mae"], z, z, num) == {"mse": 0.0, "mae": 0.0}
    s = fit_feature("set", ["x y", "z"])
    multi = np.array([[1, 0, 1], [0, 1, 0], [0, 0, 0]], dtype=float)
    assert head_metrics("set", ["jaccard", "micro_f1"], multi, multi, s) == {"jaccard": 1.0, "micro_f1": 1.0}
    b = fit_feature("binary", ["1"])
    y = np.array([[1.0], [0.0]])
    assert head_metrics("binary", ["accuracy"], y, y, b) == {"accuracy": 1.0}


def test_numeric_metrics_in_raw_space():
    num = NumericMetadata(mean=10.0, std=4.0, fill_value=10.0)
    m = head_metrics("numeric", ["mse", "mae"], np.array([[1.0]]), np.array([[0.0]]), num)
    assert m == {"mse": 16.0, "mae": 4.0}


def test_perfect_identity_model():
    raw = {
        "input_features": [{"name": "x", "type": "numeric"}],
        "output_features": [{"name": "y", "type": "numeric"}],
        "combiner": {"num_fc_layers": 0},
    }
    c = compile_config(raw)
    ds = ColumnarDataset.from_rows([{"x": str(v), "y": str(v)} for v in (1.0, 2.0, 4.0, 8.0)])
    meta = fit_metadata(ds, c)
    m = build_model(c, meta)
    m.load_state_dict({"y.decoder.logits.weight": np.array([[1.0]]), "y.decoder.logits.bias": np.array([0.0])})
    rep = evaluate_split(m, encode_dataset(ds, meta, c))
    assert rep.metrics["y"]["mse"] == pytest.approx(0.0, abs=1e-10)
    assert rep.metrics["y"]["r2"] == pytest.approx(1.0, abs=1e-9)


@pytest.fixture(scope="module")
def book():
    ds = ColumnarDataset.from_rows(book_rows(40))
    meta = fit_metadata(ds, BOOK)
    return build_model(BOOK, meta), encode_dataset(ds, meta, BOOK)


def test_book_report_keys(book):
    m, enc = book
    rep = evaluate_split(m, enc, "validation")
    assert set(rep.metrics) == {"user_score", "tags"}
    assert set(rep.metrics["user_score"]) == {"mse", "mae", "r2"}
    assert set(rep.metrics["tags"]) == {"jaccard", "micro_f1"}
    assert set(rep.losses) == {"user_score", "tags"}
    assert rep.row_count == 40 and rep.split == "validation"
    assert rep.config_fingerprint == hashlib.sha256(canonical_render(BOOK).encode()).hexdigest()
    assert EvalReport.from_dict(rep.to_dict()) == rep


def test_combined_loss_agrees_with_multi_task_loss(book):
    m, enc = book
    rep = evaluate_split(m, enc)
    b = enc.batch()
    with Tape():
        out = m.forward(b)
        total, _ = multi_task_loss(out.logits, b.targets, m.loss_weights, m.output_types)
    assert rep.combined_loss == pytest.approx(float(total.data), rel=1e-6)


def test_evaluate_deterministic(book):
    m, enc = book
    assert evaluate_split(m, enc).to_dict() == evaluate_split(m, enc).to_dict()


def test_empty_split(book):
    m, enc = book
    with pytest.raises(EmptySplit):
        evaluate_split(m, enc.subset([]))


# --- properties -----------------------------------------------------------------


def _sets(n):
    return st.lists(st.frozensets(st.integers(0, 5), max_size=4), min_size=n, max_size=n)


@st.composite
def set_pairs(draw):
    n = draw(st.integers(1, 50))
    return draw(_sets(n)), draw(_sets(n))


@st.composite
def float_pairs(draw):
    n = draw(st.integers(1, 50))
    f = st.floats(-1e3, 1e3, allow_nan=False)
    return draw(st.lists(f, min_size=n, max_size=n)), draw(st.lists(f, min_size=n, max_size=n))


@st.composite
def label_pairs(draw):
    n = draw(st.integers(1, 50))
    lab = st.sampled_from("abc")
    return draw(st.lists(lab, min_size=n, max_size=n)), draw(st.lists(lab, min_size=n, max_size=n))


def brute_jaccard(p, t):
    return sum(1.0 if not (a | b) else len(a & b) / len(a | b) for a, b in zip(p, t)) / len(p)


def brute_micro_f1(p, t):
    tp = sum(1 for a, b in zip(p, t) for x in a if x in b)
    fp = sum(1 for a, b in zip(p, t) for x in a if x not in b)
    fn = sum(1 for a, b in zip(p, t) for x in b if x not in a)
    return 1.0 if tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)


def brute_r2(p, t):
    mean = sum(t) / len(t)
    res = sum((a - b) ** 2 for a, b in zip(p, t))
    tot = sum((b - mean) ** 2 for b in t)
    if tot == 0:
        return 0.0 if res == 0 else R2_DEGENERATE
    return 1 - res / tot


@given(set_pairs())
def test_set_metrics_oracle_and_bounds(pair):
    p, t = pair
    j, f = compute_metric("jaccard", p, t), compute_metric("micro_f1", p, t)
    assert 0.0 <= j <= 1.0 and 0.0 <= f <= 1.0
    assert j == pytest.approx(brute_jaccard(p, t), abs=1e-9)
    assert f == pytest.approx(brute_micro_f1(p, t), abs=1e-9)


@given(float_pairs())
def test_numeric_metrics_oracle_and_bounds(pair):
    p, t = pair
    n = len(p)
    m, a, r = (compute_metric(k, p, t) for k in ("mse", "mae", "r2"))
    assert m >= 0 and a >= 0 and r <= 1.0
    assert m == pytest.approx(sum((x - y) ** 2 for x, y in zip(p, t)) / n, rel=1e-9, abs=1e-9)
    assert a == pytest.approx(sum(abs(x - y) for x, y in zip(p, t)) / n, rel=1e-9, abs=1e-9)
    want = brute_r2(p, t)
    if want != R2_DEGENERATE and r != R2_DEGENERATE:
        assert r == pytest.approx(want, rel=1e-9, abs=1e-9)


@given(label_pairs())
def test_accuracy_oracle_and_bounds(pair):
    p, t = pair
    acc = compute_metric("accuracy", p, t)
    assert 0.0 <= acc <= 1.0
    assert acc == pytest.approx(sum(a == b for a, b in zip(p, t)) / len(p), abs=1e-12)


@settings(max_examples=50)
@given(st.data())
def test_permutation_invariance(data):
    kind = data.draw(st.sampled_from(["sets", "floats", "labels"]))
    p, t = data.draw({"sets": set_pairs(), "floats": float_pairs(), "labels": label_pairs()}[kind])
    perm = data.draw(st.permutations(range(len(p))))
    pp, tp = [p[i] for i in perm], [t[i] for i in perm]
    ids = {"sets": ["jaccard", "micro_f1"], "floats": ["mse", "mae", "r2"], "labels": ["accuracy"]}[kind]
    for mid in ids:
        assert compute_metric(mid, pp, tp) == pytest.approx(compute_metric(mid, p, t), rel=1e-9, abs=1e-9)
