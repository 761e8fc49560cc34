import contextlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from declml.autodiff import Parameter, Tape, Tensor, backward, check_mode, float_dtype, gradients, ops
from declml.autodiff.gradcheck import numerical_gradient, relative_error
from declml.errors import IndexOutOfRange, NotScalar, ShapeMismatch
from gradutil import PRIMITIVE_CASES, case_arrays, grad_errors, weighted_sum

RNG = np.random.default_rng(1234)


# --- forward values -----------------------------------------------------------


def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ops.matmul(a, Tensor(np.eye(2))).data, a.data)


def test_matmul_arithmetic():
    out = ops.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
    assert out.data.tolist() == [[17.0], [39.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        ops.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))


def test_elementwise_shape_discipline():
    a, b = Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2)))
    for op in (ops.add, ops.sub, ops.mul):
        with pytest.raises(ShapeMismatch):
            op(a, b)
    with pytest.raises(ShapeMismatch):
        ops.add_bias(a, Tensor(np.ones(2)))
    with pytest.raises(ShapeMismatch):
        ops.concat([a, Tensor(np.ones((3, 3)))])
    with pytest.raises(ShapeMismatch):
        ops.sigmoid_bce(a, np.ones((2, 2)))
    with pytest.raises(ShapeMismatch):
        ops.mse(a, np.ones((3, 2)))


def test_embedding_lookup_gathers_rows():
    table = Tensor(np.arange(6.0).reshape(3, 2))
    out = ops.embedding_lookup(table, np.array([[0, 2]]))
    assert out.shape == (1, 2, 2)
    assert out.data.tolist() == [[[0.0, 1.0], [4.0, 5.0]]]


def test_embedding_lookup_duplicate_indices_accumulate():
    table = Parameter("t", np.zeros((3, 2)))
    with Tape() as tape:
        out = ops.embedding_lookup(table, np.array([[1, 1]]))
        loss = ops.sum(ops.mul(out, Tensor([[[1.0, 2.0], [3.0, 4.0]]])))
    g = backward(loss, tape, [table])["t"]
    assert g.tolist() == [[0.0, 0.0], [4.0, 6.0], [0.0, 0.0]]


def test_embedding_lookup_out_of_range():
    table = Tensor(np.zeros((3, 2)))
    with pytest.raises(IndexOutOfRange):
        ops.embedding_lookup(table, np.array([[3]]))
    with pytest.raises(IndexOutOfRange):
        ops.embedding_lookup(table, np.array([-1]))


def test_softmax_cross_entropy_uniform():
    loss, probs = ops.softmax_cross_entropy(Tensor([[0.0, 0.0, 0.0, 0.0]]), np.array([2]))
    assert float(loss.data) == pytest.approx(math.log(4), rel=1e-6)
    assert np.allclose(probs.data, 0.25)


def test_softmax_cross_entropy_stable():
    loss, probs = ops.softmax_cross_entropy(Tensor([[1000.0, 0.0]]), np.array([0]))
    assert np.isfinite(loss.data) and float(loss.data) == pytest.approx(0.0, abs=1e-6)
    assert np.all(np.isfinite(probs.data))


def test_softmax_cross_entropy_bad_target():
    with pytest.raises(IndexOutOfRange):
        ops.softmax_cross_entropy(Tensor([[0.0, 1.0]]), np.array([2]))


def test_sigmoid_bce_values():
    assert float(ops.sigmoid_bce(Tensor([[0.0]]), np.array([[1.0]])).data) == pytest.approx(math.log(2), rel=1e-6)
    low = float(ops.sigmoid_bce(Tensor([[-1000.0]]), np.array([[0.0]])).data)
    assert np.isfinite(low) and low == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_fused_losses_finite_at_extremes(dtype):
    logits = np.array([[1e6, -1e6, 0.0], [-1e6, 1e6, 3.0]], dtype=dtype)
    with check_mode() if dtype == np.float64 else contextlib.nullcontext():
        ce, probs = ops.softmax_cross_entropy(Tensor(logits), np.array([1, 0]))
        bce = ops.sigmoid_bce(Tensor(logits), np.array([[0, 1, 1], [1, 0, 0]]))
    assert np.isfinite(ce.data) and np.isfinite(bce.data)
    assert np.all(np.isfinite(probs.data))


# --- tape semantics -------------------------------------------------------------


def test_backward_sum_is_ones():
    p = Parameter("p", np.array([[1.0, -2.0], [3.0, 0.5]]))
    with Tape() as tape:
        loss = ops.sum(p)
    assert np.array_equal(backward(loss, tape, [p])["p"], np.ones((2, 2)))


def test_unused_parameter_gets_zero_gradient():
    p, q = Parameter("p", np.ones(3)), Parameter("q", np.ones((2, 2)))
    with Tape() as tape:
        loss = ops.sum(p)
    g = backward(loss, tape, [p, q])
    assert np.array_equal(g["q"], np.zeros((2, 2)))
    assert np.array_equal(q.grad, np.zeros((2, 2)))


def test_backward_requires_scalar():
    p = Parameter("p", np.ones(3))
    with Tape() as tape:
        out = ops.scale(p, 2.0)
    with pytest.raises(NotScalar):
        backward(out, tape, [p])


def test_tape_is_topological():
    p = Parameter("p", np.ones((2, 2)))
    with Tape() as tape:
        h = ops.tanh(ops.matmul(p, p))
        ops.sum(ops.add(h, p))
    produced = set()
    leaves = {id(p)}
    for rec in tape.records:
        for inp in rec.inputs:
            if inp.requires_grad:
                assert id(inp) in produced or id(inp) in leaves
        produced.add(id(rec.output))


def test_no_recording_outside_tape():
    p = Parameter("p", np.ones(2))
    with Tape() as tape:
        pass
    ops.sum(p)
    assert len(tape) == 0


def test_gradient_reused_tensor_accumulates():
    # d/dp sum(p*p + p) = 2p + 1
    p = Parameter("p", np.array([1.0, 2.0, -3.0]))
    with Tape() as tape:
        loss = ops.sum(ops.add(ops.mul(p, p), p))
    g = backward(loss, tape, [p])["p"]
    assert np.allclose(g, 2 * p.data + 1)


def test_check_mode_switches_dtype():
    assert float_dtype() == np.float32
    assert Tensor([1.0]).dtype == np.float32
    with check_mode():
        assert float_dtype() == np.float64
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1, 2]).dtype == np.int64


def test_gradients_for_non_parameter_tensor():
    x = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(ops.scale(x, 3.0))
    (g,) = gradients(loss, tape, [x])
    assert np.array_equal(g, np.full((1, 2), 3.0, dtype=np.float32))


def test_deterministic_outputs():
    a = RNG.normal(size=(4, 5))
    b = RNG.normal(size=(5, 3))
    r1 = ops.tanh(ops.matmul(Tensor(a), Tensor(b))).data
    r2 = ops.tanh(ops.matmul(Tensor(a), Tensor(b))).data
    assert r1.tobytes() == r2.tobytes()


# --- finite-difference checks for every primitive ------------------------------

@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradients_match_finite_differences(name):
    e64, e32 = grad_errors(PRIMITIVE_CASES[name][0], case_arrays(name))
    assert e64 <= 1e-6
    assert e32 <= 1e-3


def test_relu_gradient_away_from_kink():
    x = np.array([[0.7, -0.4, 1.3], [-2.0, 0.25, -0.9]])
    e64, e32 = grad_errors(lambda p: weighted_sum(ops.relu(p[0])), [x])
    assert e64 <= 1e-6 and e32 <= 1e-3


def test_matmul_sum_gradient_is_ones_times_bt():
    A = Parameter("A", RNG.normal(size=(2, 3)))
    B = Parameter("B", RNG.normal(size=(3, 4)))
    with Tape() as tape:
        loss = ops.sum(ops.matmul(A, B))
    g = backward(loss, tape, [A])["A"]
    assert np.allclose(g, np.ones((2, 4), dtype=np.float32) @ B.data.T, rtol=1e-6)


def test_fourth_order_stencil_beats_second_order():
    # f(x) = sum(tanh(x)**3); exact gradient 3 tanh^2 (1 - tanh^2)
    with check_mode():
        x = Parameter("x", np.array([0.3, -1.1, 0.8]))
        f = lambda: float(ops.sum(ops.mul(ops.mul(ops.tanh(x), ops.tanh(x)), ops.tanh(x))).data)
        y = np.tanh(x.data)
        exact = 3 * y**2 * (1 - y**2)
        e2 = relative_error(numerical_gradient(f, [x], order=2)[0], exact)
        e4 = relative_error(numerical_gradient(f, [x], order=4)[0], exact)
    assert e4 < e2
    assert e4 <= 1e-9


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == pytest.approx(1.0)


# --- properties -------------------------------------------------------------------

floats = st.floats(-3, 3, allow_nan=False, width=64)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 4), elements=floats), arrays(np.float64, (3, 4), elements=floats))
def test_gradient_sum_rule(a, b):
    """grad(f + g) equals grad f + grad g."""
    with check_mode():
        p = Parameter("p", a.copy())
        with Tape() as t1:
            l1 = ops.sum(ops.tanh(p))
        g1 = backward(l1, t1, [p])["p"]
        with Tape() as t2:
            l2 = ops.sum(ops.mul(p, Tensor(b)))
        g2 = backward(l2, t2, [p])["p"]
        with Tape() as t3:
            l3 = ops.add(ops.sum(ops.tanh(p)), ops.sum(ops.mul(p, Tensor(b))))
        g3 = backward(l3, t3, [p])["p"]
    assert np.allclose(g3, g1 + g2, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(-1e6, 1e6, allow_nan=False, width=64)), st.integers(0, 4))
def test_fused_losses_never_nonfinite(logits, target):
    ce, probs = ops.softmax_cross_entropy(Tensor(logits), np.full(4, target))
    bce = ops.sigmoid_bce(Tensor(logits), (logits > 0).astype(np.float64))
    assert np.isfinite(ce.data) and np.isfinite(bce.data)
    assert np.all(np.isfinite(probs.data))
    assert np.allclose(probs.data.sum(axis=1), 1.0, atol=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_softmax_ce_gradient_rows_sum_to_zero(b, c, seed):
    rng = np.random.default_rng(seed)
    with check_mode():
        p = Parameter("p", rng.normal(size=(b, c)))
        with Tape() as tape:
            loss, _ = ops.softmax_cross_entropy(p, rng.integers(0, c, size=b))
        g = backward(loss, tape, [p])["p"]
    assert np.allclose(g.sum(axis=1), 0.0, atol=1e-12)
