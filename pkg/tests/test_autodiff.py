import numpy as np
import pytest

from centaur_sim import autodiff as ad
from centaur_sim.autodiff import Tensor


def numeric_grad(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (fn(up) - fn(down)) / (2 * h)
    return g


def check(fn, x, rtol=1e-6, atol=1e-8):
    t = Tensor(x, requires_grad=True)
    out = fn(t).sum()
    out.backward()
    expected = numeric_grad(lambda v: fn(Tensor(v)).sum().item(), x)
    assert np.allclose(t.grad, expected, rtol=rtol, atol=atol)


RNG = np.random.default_rng(0)
X = RNG.normal(size=(3, 4))
POS = RNG.uniform(0.5, 2.0, size=(3, 4))


@pytest.mark.parametrize(
    "fn",
    [
        lambda t: t * t + t * 3.0 - 1.0,
        lambda t: (t - 2.0) / (t * t + 1.0),
        lambda t: 1.0 / (t * t + 2.0),
        lambda t: ad.exp(t * 0.5),
        lambda t: ad.tanh(t),
        lambda t: ad.sigmoid(t),
        lambda t: ad.softplus(t),
        lambda t: ad.logsumexp(t, axis=-1),
        lambda t: ad.log_softmax(t, axis=0),
        lambda t: t.mean(axis=0) * t.sum(axis=1, keepdims=True),
        lambda t: t[1:, ::2] * 2.0,
        lambda t: t.reshape(4, 3).T @ t.reshape(4, 3),
        lambda t: ad.concat([t, t * t], axis=-1),
        lambda t: -t + np.arange(4.0),  # broadcast constant
        lambda t: ad.clip(t, -0.5, 0.5),
    ],
)
def test_gradients_match_finite_differences(fn):
    check(fn, X)


@pytest.mark.parametrize(
    "fn",
    [lambda t: ad.log(t), lambda t: t ** 1.5, lambda t: ad.lgamma(t), lambda t: ad.abs_(t - 1.0), lambda t: ad.maximum(t, 1.0)],
)
def test_gradients_on_positive_inputs(fn):
    x = POS.copy()
    x[np.abs(x - 1.0) < 1e-3] += 0.01  # stay away from kinks
    check(fn, x)


def test_matmul_and_broadcast_bias():
    w = RNG.normal(size=(4, 2))
    b = RNG.normal(size=(2,))
    tw, tb = Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)
    x = Tensor(X)
    ad.tanh(x @ tw + tb).sum().backward()
    gw = numeric_grad(lambda v: np.tanh(X @ v + b).sum(), w)
    gb = numeric_grad(lambda v: np.tanh(X @ w + v).sum(), b)
    assert np.allclose(tw.grad, gw, atol=1e-8) and np.allclose(tb.grad, gb, atol=1e-8)


def test_shared_node_accumulates():
    a = Tensor(np.array(3.0), requires_grad=True)
    y = a * a
    (y + y).backward()
    assert a.grad == pytest.approx(12.0)


def test_backward_twice_does_not_double_intermediate_grads():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = (a * 2.0).sum()
    y.backward()
    first = a.grad.copy()
    a.grad = None
    y.backward()
    assert np.array_equal(a.grad, first)


def test_no_graph_without_requires_grad():
    out = ad.tanh(Tensor(X) * 2.0)
    assert not out.requires_grad and out._parents == ()


@pytest.mark.parametrize("shapes", [((4,), (4, 3)), ((3, 4), (4,)), ((4,), (4,)), ((2, 3, 4), (4, 5))])
def test_matmul_with_vector_operands(shapes):
    a0, b0 = RNG.normal(size=shapes[0]), RNG.normal(size=shapes[1])
    a, b = Tensor(a0, requires_grad=True), Tensor(b0, requires_grad=True)
    (ad.tanh(a @ b)).sum().backward()
    assert np.allclose(a.grad, numeric_grad(lambda v: np.tanh(v @ b0).sum(), a0), atol=1e-8)
    assert np.allclose(b.grad, numeric_grad(lambda v: np.tanh(a0 @ v).sum(), b0), atol=1e-8)
