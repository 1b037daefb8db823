import hashlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import central_difference, relative_error
from ddfprobe import tensor as T
from ddfprobe.errors import ContractError, DimensionError


def triple_loop(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


# -- matmul --------------------------------------------------------------


def test_identity_matmul(rng):
    m = rng.uniform(-1, 1, (3, 3))
    out = T.matmul(T.Tensor(np.eye(3)), T.Tensor(m))
    assert np.array_equal(out.data, m)


def test_scalar_matmul():
    assert T.matmul(T.Tensor([[2.0]]), T.Tensor([[3.0]])).data.tolist() == [[6.0]]


def test_matmul_matches_triple_loop(rng):
    a, b = rng.uniform(-1, 1, (4, 5)), rng.uniform(-1, 1, (5, 3))
    np.testing.assert_allclose((T.Tensor(a) @ T.Tensor(b)).data, triple_loop(a, b), atol=1e-12, rtol=0)


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))


# -- relu ----------------------------------------------------------------


def test_relu_values():
    assert T.relu(T.Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]


def test_relu_all_negative_blocks_gradient():
    x = T.Tensor([-3.0, -0.5, -1e-9], requires_grad=True)
    y = T.relu(x)
    T.backward(T.mse_loss(y, T.Tensor(np.ones(3))))
    assert np.array_equal(y.data, np.zeros(3))
    assert np.array_equal(x.grad, np.zeros(3))


def test_relu_subgradient_at_zero():
    x = T.Tensor([0.0], requires_grad=True)
    T.backward(T.mse_loss(T.relu(x), T.Tensor([1.0])))
    assert x.grad[0] == 0.0


def test_relu_gradient_at_three():
    x = T.Tensor([3.0], requires_grad=True)
    y = T.relu(x)
    T.backward(_sum(y))
    h = 1e-5
    fd = (max(3.0 + h, 0) - max(3.0 - h, 0)) / (2 * h)
    assert x.grad[0] == 1.0
    assert abs(x.grad[0] - fd) < 1e-6


def _sum(t):
    # sum via matmul with ones, keeps the scalar-loss contract
    flat = T.reshape(t, (1, t.size))
    return T.reshape(T.matmul(flat, T.Tensor(np.ones((t.size, 1)))), ())


# -- backward ------------------------------------------------------------


def test_square_gradient():
    x = T.Tensor(3.0, requires_grad=True)
    T.backward(x * x)
    assert x.grad == 6.0


def test_unused_parameter_gets_zero_gradient():
    x = T.Parameter(np.array([1.0, 2.0]), "x")
    p = T.Parameter(np.array([4.0]), "p")
    T.backward(T.mse_loss(x, T.Tensor([0.0, 0.0])))
    assert p.grad is None or np.array_equal(p.grad, np.zeros(1))
    g = p.grad if p.grad is not None else np.zeros_like(p.data)
    assert np.array_equal(g, np.zeros(1))


def test_backward_requires_scalar():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        T.backward(x * x)


def test_fan_out_accumulates():
    x = T.Tensor(2.0, requires_grad=True)
    y = x * x + x * 3.0  # dy/dx = 2x + 3
    T.backward(y)
    assert x.grad == 7.0


def test_repeated_backward_accumulates_until_cleared():
    x = T.Parameter(np.array(1.5), "x")
    T.backward(x * x)
    T.backward(x * x)
    assert x.grad == 6.0
    opt = T.SGD([x], lr=0.0)
    opt.step()
    assert x.grad is None


def _mlp_loss(params, x, y):
    w1, b1, w2, b2 = params
    h = T.relu(T.add(T.matmul(x, w1), b1))
    z = T.sigmoid(T.add(T.matmul(h, w2), b2))
    out = T.concatenate([z, T.transpose(T.transpose(z)) * 0.5], axis=1)
    return T.mse_loss(T.reshape(out, (out.size,)), y)


def test_small_model_matches_finite_differences(rng):
    # 7*10 + 10 + 10*6 + 6 = 146 parameters
    shapes = [(7, 10), (10,), (10, 6), (6,)]
    params = [T.Parameter(rng.uniform(-1, 1, s), f"p{i}") for i, s in enumerate(shapes)]
    x = T.Tensor(rng.uniform(-1, 1, (5, 7)))
    y = T.Tensor(rng.uniform(0, 1, 5 * 12))
    T.backward(_mlp_loss(params, x, y))
    worst = 0.0
    for p in params:
        analytic = np.array(p.grad)
        with T.no_grad():
            numeric = central_difference(lambda: _mlp_loss(params, x, y).item(), p.data)
        worst = max(worst, relative_error(analytic, numeric))
    assert worst < 1e-5


@given(
    arrays(np.float64, (3, 4), elements=st.floats(-1, 1)),
    arrays(np.float64, (4, 2), elements=st.floats(-1, 1)),
)
def test_matmul_gradient_property(a, b):
    ta, tb = T.Tensor(a, requires_grad=True), T.Tensor(b, requires_grad=True)
    target = T.Tensor(np.zeros((3, 2)))
    T.backward(T.mse_loss(T.matmul(ta, tb), target))
    # closed form: L = mean((AB)^2) => dL/dA = 2/6 (AB) B^T
    ab = a @ b
    np.testing.assert_allclose(ta.grad, (2 / 6) * ab @ b.T, atol=1e-12)
    np.testing.assert_allclose(tb.grad, (2 / 6) * a.T @ ab, atol=1e-12)


@given(arrays(np.float64, (6,), elements=st.floats(-1, 1)))
def test_sigmoid_mul_gradient_property(v):
    x = T.Tensor(v, requires_grad=True)
    def f():
        s = T.sigmoid(x)
        return T.mse_loss(T.mul(s, s), T.Tensor(np.full(6, 0.3)))
    T.backward(f())
    analytic = np.array(x.grad)
    with T.no_grad():
        numeric = central_difference(lambda: f().item(), x.data)
    assert relative_error(analytic, numeric) < 1e-5


def test_batch_broadcast_add_gradient(rng):
    x = T.Tensor(rng.uniform(-1, 1, (4, 3)))
    b = T.Parameter(rng.uniform(-1, 1, 3), "b")
    T.backward(T.mse_loss(T.add(x, b), T.Tensor(np.zeros((4, 3)))))
    np.testing.assert_allclose(b.grad, (2 / 12) * (x.data + b.data).sum(axis=0), atol=1e-14)


def test_incompatible_broadcast_raises():
    with pytest.raises(DimensionError):
        T.add(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones(2)))


def test_no_grad_records_nothing():
    x = T.Tensor(2.0, requires_grad=True)
    with T.no_grad():
        y = x * x
    assert not y.requires_grad


def test_forward_has_no_hidden_state(rng):
    params = [T.Parameter(rng.uniform(-1, 1, s), "p") for s in [(7, 10), (10,), (10, 6), (6,)]]
    x = T.Tensor(rng.uniform(-1, 1, (5, 7)))
    y = T.Tensor(rng.uniform(0, 1, 60))
    assert _mlp_loss(params, x, y).item() == _mlp_loss(params, x, y).item()


def test_determinism():
    def run():
        r = np.random.default_rng(5)
        params = [T.Parameter(r.uniform(-1, 1, s), "p") for s in [(7, 10), (10,), (10, 6), (6,)]]
        loss = _mlp_loss(params, T.Tensor(r.uniform(-1, 1, (5, 7))), T.Tensor(r.uniform(0, 1, 60)))
        T.backward(loss)
        return loss.item(), [p.grad.tobytes() for p in params]

    assert run() == run()


def test_outputs_finite(rng):
    x = T.Tensor(rng.uniform(-50, 50, (4, 4)), requires_grad=True)
    s = T.sigmoid(x)
    assert np.all(np.isfinite(s.data))
    T.backward(T.mse_loss(s, T.Tensor(np.zeros((4, 4)))))
    assert np.all(np.isfinite(x.grad)) and x.grad.shape == x.shape


# -- optimizer -----------------------------------------------------------


def test_plain_descent_step():
    w = T.Parameter(np.array([1.0]), "w")
    w.grad = np.array([2.0])
    T.optimizer_step([w], 0.1)
    assert w.data[0] == pytest.approx(0.8, abs=1e-15)


def test_frozen_parameter_untouched():
    w = T.Parameter(np.array([1.0, -2.0]), "w", frozen=True)
    before = hashlib.sha256(w.data.tobytes()).hexdigest()
    T.backward(T.mse_loss(w, T.Tensor([0.0, 0.0])))
    assert np.any(w.grad != 0)
    T.optimizer_step([w], 0.5)
    assert hashlib.sha256(w.data.tobytes()).hexdigest() == before
    with pytest.raises(ValueError):
        w.data[0] = 3.0


def test_quadratic_converges():
    w = T.Parameter(np.array(0.0), "w")
    five = T.Tensor(5.0)
    for _ in range(200):
        d = w - five
        T.backward(d * d)
        T.optimizer_step([w], 0.1)
    assert abs(w.data - 5.0) < 1e-6


def test_optimizer_rejects_bad_lr():
    w = T.Parameter(np.array(0.0), "w")
    w.grad = np.array(1.0)
    with pytest.raises(ContractError):
        T.optimizer_step([w], 0.0)


def test_momentum_matches_hand_rolled():
    w = T.Parameter(np.array(0.0), "w")
    opt = T.SGD([w], lr=0.1, momentum=0.9)
    ref_w, ref_v = 0.0, 0.0
    for _ in range(20):
        d = w - T.Tensor(5.0)
        T.backward(d * d)
        g = 2 * (ref_w - 5.0)
        ref_v = 0.9 * ref_v + g
        ref_w -= 0.1 * ref_v
        opt.step()
        assert w.data == pytest.approx(ref_w, abs=1e-12)


def _textbook_adam(w, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return w


def test_adam_matches_textbook(rng):
    start = rng.normal(size=(4, 3))
    grads = [rng.normal(size=(4, 3)) for _ in range(50)]
    w = T.Parameter(start.copy(), "w")
    opt = T.Adam([w], lr=0.01)
    for g in grads:
        w.grad = g
        opt.step()
    np.testing.assert_allclose(w.data, _textbook_adam(start, grads, 0.01), rtol=0, atol=1e-13)


def test_adam_fused_equals_reference_bitwise(rng):
    start = rng.normal(size=(7, 5))
    grads = [rng.normal(scale=10.0 ** rng.uniform(-6, 2), size=(7, 5)) for _ in range(30)]
    fused = T.Parameter(start.copy(), "a")
    plain = T.Parameter(start.copy(), "b")
    opts = T.Adam([fused], lr=1e-3), T.Adam([plain], lr=1e-3, fused=False)
    for g in grads:
        fused.grad, plain.grad = g.copy(), g.copy()
        for opt in opts:
            opt.step()
    assert fused.data.tobytes() == plain.data.tobytes()


def test_adam_skips_frozen_and_clears_grads():
    w = T.Parameter(np.array([1.0, 2.0]), "w")
    f = T.Parameter(np.array([3.0]), "f", frozen=True)
    opt = T.Adam([w, f], lr=0.1)
    w.grad, f.grad = np.array([1.0, -1.0]), np.array([5.0])
    opt.step()
    # the first bias-corrected step moves each weight by lr against its gradient sign
    np.testing.assert_allclose(w.data, [0.9, 2.1], atol=1e-9)
    assert f.data[0] == 3.0
    assert w.grad is None and f.grad is None


def test_adam_requires_gradients():
    w = T.Parameter(np.array([1.0]), "w")
    with pytest.raises(ContractError):
        T.Adam([w], lr=0.1).step()
    with pytest.raises(ContractError):
        T.Adam([w], lr=-1.0)
