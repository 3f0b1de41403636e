import hashlib

import numpy as np
import pytest

from timemoe.autodiff import Tape, Tensor, nn, optim
from timemoe.autodiff import tensor as T

from gradcheck import check_gradients, scalarize

SEEDS = list(range(20))


def rand(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def test_softmax_symmetry():
    out = T.softmax(Tensor([0.0, 0.0]))
    assert np.allclose(out.data, [0.5, 0.5])


def test_relu_definition():
    out = T.relu(Tensor([-1.0, 2.0]))
    assert np.allclose(out.data, [0.0, 2.0])


def test_sum_grad_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    with Tape() as tape:
        tape.backward(T.sum(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_dot_grad():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.mul(x, x))
        tape.backward(loss)
    assert np.allclose(x.grad, [2.0, 4.0])


def test_gradient_accumulation_across_uses():
    x = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        y = T.add(T.mul(x, 2.0), T.mul(x, 5.0))
        tape.backward(T.sum(y))
    assert np.allclose(x.grad, [7.0])


def test_shape_mismatch_messages_both_shapes():
    with pytest.raises(T.ShapeError) as exc:
        T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
    assert "(2, 3)" in str(exc.value) and "(3, 2)" in str(exc.value)


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = T.mul(x, 2.0)
        with pytest.raises(T.ShapeError):
            tape.backward(y)


@pytest.mark.parametrize("seed", SEEDS)
def test_elementwise_and_reduction_grads(seed):
    rng = np.random.default_rng(seed)
    a, b = rand(rng, 3, 4), rand(rng, 3, 4)
    check_gradients(lambda a, b: scalarize(T.add(a, b)), [a, b])
    check_gradients(lambda a, b: scalarize(T.mul(a, b)), [a, b])
    check_gradients(lambda a, b: scalarize(T.sub(a, b)), [a, b])
    bpos = Tensor(np.abs(b.data) + 0.5, requires_grad=True)
    check_gradients(lambda a, b: scalarize(T.div(a, b)), [a, bpos])
    check_gradients(lambda a: scalarize(T.mean(a, axis=1)), [a])
    check_gradients(lambda a: T.sum(T.exp(T.mul(a, 0.3))), [a])


@pytest.mark.parametrize("seed", SEEDS)
def test_nonlinearity_grads(seed):
    rng = np.random.default_rng(100 + seed)
    a = rand(rng, 2, 5)
    check_gradients(lambda a: scalarize(T.tanh(a)), [a])
    check_gradients(lambda a: scalarize(T.sigmoid(a)), [a])
    apos = Tensor(np.abs(a.data) + 0.2, requires_grad=True)
    check_gradients(lambda a: scalarize(T.log(a)), [apos])
    # relu away from the kink
    ar = Tensor(a.data + np.sign(a.data) * 0.1, requires_grad=True)
    check_gradients(lambda a: scalarize(T.relu(a)), [ar])


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_grads(seed):
    rng = np.random.default_rng(200 + seed)
    a = rand(rng, 3, 4)
    check_gradients(lambda a: scalarize(T.softmax(a, axis=-1)), [a])
    check_gradients(lambda a: scalarize(T.log_softmax(a, axis=-1)), [a])


@pytest.mark.parametrize("seed", SEEDS)
def test_matmul_grads(seed):
    rng = np.random.default_rng(300 + seed)
    a, b = rand(rng, 3, 4), rand(rng, 4, 2)
    check_gradients(lambda a, b: scalarize(T.matmul(a, b)), [a, b])
    # batched against shared weight
    ab = rand(rng, 2, 3, 4)
    check_gradients(lambda a, b: scalarize(T.matmul(a, b)), [ab, b])
    bb = rand(rng, 2, 4, 3)
    check_gradients(lambda a, b: scalarize(T.matmul(a, b)), [ab, bb])


@pytest.mark.parametrize("seed", SEEDS)
def test_structural_grads(seed):
    rng = np.random.default_rng(400 + seed)
    a, b = rand(rng, 2, 3), rand(rng, 2, 2)
    check_gradients(lambda a, b: scalarize(T.concatenate([a, b], axis=1)), [a, b])
    check_gradients(lambda a: scalarize(T.narrow(a, 1, 1, 2)), [a])
    check_gradients(lambda a: scalarize(T.reshape(a, (3, 2))), [a])
    check_gradients(lambda a: scalarize(T.transpose(a, (1, 0))), [a])
    idx = rng.integers(0, 3, size=(2, 1))
    check_gradients(lambda a: scalarize(T.take_along_axis(a, idx, axis=1)), [a])
    table = rand(rng, 5, 3)
    rows = rng.integers(0, 5, size=4)
    check_gradients(lambda t: scalarize(T.embedding(t, rows)), [table])


@pytest.mark.parametrize("seed", SEEDS)
def test_layer_norm_grads(seed):
    rng = np.random.default_rng(500 + seed)
    x = rand(rng, 2, 4)
    gamma = Tensor(rng.uniform(0.5, 1.5, 4), requires_grad=True)
    beta = Tensor(rng.standard_normal(4), requires_grad=True)
    check_gradients(lambda x, g, b: scalarize(T.layer_norm(x, g, b)), [x, gamma, beta])


@pytest.mark.parametrize("seed", SEEDS)
def test_cross_entropy_grads(seed):
    rng = np.random.default_rng(600 + seed)
    logits = rand(rng, 6, 4)
    labels = rng.integers(0, 4, size=6)
    check_gradients(lambda l: T.cross_entropy(l, labels), [logits])


@pytest.mark.parametrize("seed", SEEDS)
def test_conv1d_grads(seed):
    rng = np.random.default_rng(700 + seed)
    x = rand(rng, 2, 5, 3)
    w = rand(rng, 3, 3, 2)
    b = rand(rng, 2)
    check_gradients(lambda x, w, b: scalarize(T.conv1d(x, w, b)), [x, w, b])


@pytest.mark.parametrize("seed", range(5))
def test_attention_grads(seed):
    rng = np.random.default_rng(800 + seed)
    q, k, v = rand(rng, 2, 3, 4), rand(rng, 2, 5, 4), rand(rng, 2, 5, 4)
    check_gradients(
        lambda q, k, v: scalarize(nn.scaled_dot_product_attention(q, k, v)), [q, k, v])


@pytest.mark.parametrize("seed", range(5))
def test_dropout_grad_uses_mask(seed):
    rng_data = np.random.default_rng(900 + seed)
    x = rand(rng_data, 4, 4)

    def fn(x):
        return T.sum(T.dropout(x, 0.5, np.random.default_rng(seed), training=True))

    check_gradients(fn, [x])


def test_dropout_eval_mode_identity():
    x = Tensor(np.arange(8.0).reshape(2, 4))
    out = T.dropout(x, 0.9, np.random.default_rng(0), training=False)
    assert np.array_equal(out.data, x.data)


def test_gru_cell_matches_hand_computed_step():
    rng = np.random.default_rng(42)
    cell = nn.GRUCell(rng, 2, 3)
    x = np.array([[0.3, -0.7]])
    h = np.array([[0.1, -0.2, 0.5]])

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    z = sig(x @ cell.wz.w.data + cell.wz.b.data + h @ cell.uz.w.data + cell.uz.b.data)
    r = sig(x @ cell.wr.w.data + cell.wr.b.data + h @ cell.ur.w.data + cell.ur.b.data)
    n = np.tanh(x @ cell.wn.w.data + cell.wn.b.data
                + (r * h) @ cell.un.w.data + cell.un.b.data)
    expected = (1 - z) * h + z * n

    out = cell(Tensor(x), Tensor(h))
    assert np.allclose(out.data, expected, atol=1e-12)


def test_gru_zero_weights_zero_state():
    rng = np.random.default_rng(0)
    cell = nn.GRUCell(rng, 2, 3)
    for _, p in cell.parameters():
        p.data[...] = 0.0
    out = cell(Tensor([[5.0, -3.0]]), Tensor(np.zeros((1, 3))))
    # z = r = 1/2, n = tanh(0) = 0, h' = (1/2)*0 + (1/2)*0 = 0
    assert np.allclose(out.data, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_gru_cell_grads(seed):
    rng = np.random.default_rng(1000 + seed)
    cell = nn.GRUCell(rng, 2, 3)
    x = rand(rng, 4, 2)
    h = rand(rng, 4, 3)
    params = [p for _, p in cell.parameters()]
    check_gradients(lambda x, h, *ps: scalarize(cell(x, h)), [x, h] + params)


def _run_forward_backward(seed):
    rng = np.random.default_rng(seed)
    layer = nn.TransformerLayer(rng, 8, 2, 16, p_drop=0.1)
    x = Tensor(np.random.default_rng(seed + 1).standard_normal((2, 4, 8)),
               requires_grad=True)
    drop_rng = np.random.default_rng(seed + 2)
    with Tape() as tape:
        out = layer(x, drop_rng, training=True)
        loss = T.sum(out)
        tape.backward(loss)
    h = hashlib.sha256()
    h.update(out.data.tobytes())
    h.update(x.grad.tobytes())
    for _, p in layer.parameters():
        h.update((p.grad if p.grad is not None else np.zeros(1)).tobytes())
    return h.hexdigest()


def test_determinism_bit_identical():
    assert _run_forward_backward(7) == _run_forward_backward(7)


def test_sgd_momentum_step():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = optim.SGD([("p", p)], lr=0.1, momentum=0.9)
    p.grad = np.array([2.0])
    opt.step()
    assert np.allclose(p.data, 1.0 - 0.2)
    p.grad = np.array([2.0])
    opt.step()
    assert np.allclose(p.data, 0.8 - (0.9 * 0.2 + 0.2))


def test_finite_check_raises_in_debug(monkeypatch):
    monkeypatch.setenv("TIMEMOE_DEBUG", "1")
    with pytest.raises(FloatingPointError):
        T.log(Tensor([0.0]))
