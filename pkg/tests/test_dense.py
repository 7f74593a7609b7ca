import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gmcn.dense import (
    AdamHyper,
    LayerParams,
    adam_step,
    glorot_init,
    matmul,
    relu,
    relu_grad,
    softmax,
    softmax_cross_entropy,
    sparse_matmul,
)
from gmcn.errors import ValidationError

from conftest import central_diff, rel_error


def test_glorot_bounds_and_determinism():
    p = glorot_init(3, 3, seed=0)
    assert np.all(np.abs(p.theta) <= 1.0)
    np.testing.assert_array_equal(p.theta, glorot_init(3, 3, seed=0).theta)
    assert not p.adam_m.any() and not p.adam_v.any() and p.step_count == 0


def test_glorot_variance():
    theta = glorot_init(100, 100, seed=7).theta
    assert theta.size == 10_000
    assert abs(theta.var() - 0.01) < 0.1 * 0.01


def test_cross_entropy_uniform():
    loss, _ = softmax_cross_entropy(np.zeros((4, 6)), np.array([0, 1, 2, 3]), np.ones(4, bool))
    assert loss == pytest.approx(math.log(6), abs=1e-12)


def test_cross_entropy_saturated():
    logits = np.zeros((2, 3))
    logits[0, 1] = 50.0
    logits[1, 2] = 50.0
    loss, _ = softmax_cross_entropy(logits, np.array([1, 2]), np.array([0, 1]))
    assert loss < 1e-20


def test_cross_entropy_gradient_matches_fd(rng):
    logits = rng.normal(size=(5, 3))
    labels = np.array([0, 2, 1, 1, 0])
    mask = np.array([True, False, True, True, False])
    _, grad = softmax_cross_entropy(logits, labels, mask)
    fd = central_diff(lambda x: softmax_cross_entropy(x, labels, mask)[0], logits)
    assert not grad[~mask].any()
    assert rel_error(grad, fd) < 1e-7


def test_cross_entropy_empty_mask():
    with pytest.raises(ValidationError):
        softmax_cross_entropy(np.zeros((3, 2)), np.zeros(3, int), np.zeros(3, bool))


@settings(max_examples=50, deadline=None)
@given(
    logits=arrays(np.float64, (6, 4), elements=st.floats(-30, 30)),
    shift=arrays(np.float64, (6, 1), elements=st.floats(-100, 100)),
)
def test_softmax_properties(logits, shift):
    np.testing.assert_allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-12)
    labels = np.arange(6) % 4
    mask = np.ones(6, bool)
    a, _ = softmax_cross_entropy(logits, labels, mask)
    b, _ = softmax_cross_entropy(logits + shift, labels, mask)
    assert abs(a - b) < 1e-10


def test_adam_zero_grad_is_noop():
    p = LayerParams(np.array([[1.0, -2.0]]))
    q = adam_step(p, np.zeros((1, 2)), AdamHyper())
    np.testing.assert_array_equal(q.theta, p.theta)
    assert q.step_count == 1


def test_adam_first_step_magnitude():
    p = LayerParams(np.zeros((3, 2)))
    q = adam_step(p, np.full((3, 2), -3.7), AdamHyper(learning_rate=0.01))
    np.testing.assert_allclose(q.theta, 0.01, rtol=1e-8)


def _scalar_adam(x, grads, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    trace = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        trace.append(x)
    return trace


def test_adam_three_step_trace():
    # frozen from the scalar loop above
    frozen = [0.4900000001, 0.48000000020000005, 0.47738007402693733]
    np.testing.assert_allclose(_scalar_adam(0.5, [1.0, 1.0, -1.0]), frozen, rtol=0, atol=1e-15)
    p = LayerParams(np.array([[0.5]]))
    got = []
    for g in (1.0, 1.0, -1.0):
        p = adam_step(p, np.array([[g]]), AdamHyper())
        got.append(p.theta[0, 0])
    np.testing.assert_allclose(got, frozen, rtol=0, atol=1e-15)
    assert p.step_count == 3


def test_adam_shape_mismatch():
    with pytest.raises(ValidationError):
        adam_step(LayerParams(np.zeros((2, 2))), np.zeros((2, 3)), AdamHyper())


def test_adam_hyper_defaults():
    h = AdamHyper()
    assert (h.learning_rate, h.beta1, h.beta2, h.eps_stability) == (0.01, 0.9, 0.999, 1e-8)


def test_matmul_identity(rng):
    h = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(matmul(np.eye(4), h), h)
    with pytest.raises(ValidationError):
        matmul(h, h)


def test_sparse_matmul_cycle(cycle3_hat):
    onehot = np.eye(3)
    np.testing.assert_allclose(
        sparse_matmul(cycle3_hat, onehot), cycle3_hat.toarray() @ onehot, atol=1e-14
    )


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 50), d=st.integers(1, 6), seed=st.integers(0, 10**6))
def test_sparse_matmul_equals_dense(n, d, seed):
    rng = np.random.default_rng(seed)
    a = sp.random(n, n, density=0.2, random_state=seed, format="csr")
    b = rng.normal(size=(n, d))
    np.testing.assert_allclose(sparse_matmul(a, b), a.toarray() @ b, rtol=0, atol=1e-12)


def test_relu_and_grad():
    x = np.array([-2.0, -0.0, 0.0, 1.5])
    np.testing.assert_array_equal(relu(x), [0, 0, 0, 1.5])
    np.testing.assert_array_equal(relu_grad(x), [0, 0, 0, 1])
    np.testing.assert_array_equal(relu(-np.abs(x)), 0)


def test_relu_grad_matches_fd_away_from_kink(rng):
    x = rng.normal(size=20)
    x = x[np.abs(x) > 1e-3]
    fd = central_diff(lambda z: relu(z).sum(), x)
    assert rel_error(relu_grad(x), fd, floor=1e-6) < 1e-6
