"""Primitive-level checks: trivial identities plus independent oracles."""

import numpy as np
import pytest

from airstreams import Tensor, backward, tape_scope
from airstreams import ops
from airstreams.errors import ConfigurationError, InputError, UsageError
from airstreams.optim import SGD


def tensor(values, rg=False, dtype=np.float64):
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=rg)


# ---------------------------------------------------------------------------
# oracles


def conv2d_loops(x, k, stride=1, dilation=1, zero_pad=False):
    """Naive nested-loop "same" convolution used as the reference."""
    F, C, H, W = x.shape
    Co, _, kH, kW = k.shape
    effH, effW = (kH - 1) * dilation + 1, (kW - 1) * dilation + 1
    outH = -(-H // stride)
    outW = -(-W // stride)
    pt = max((outH - 1) * stride + effH - H, 0) // 2
    pl = max((outW - 1) * stride + effW - W, 0) // 2
    out = np.zeros((F, Co, outH, outW), dtype=x.dtype)
    for f in range(F):
        for co in range(Co):
            for oy in range(outH):
                for ox in range(outW):
                    acc = 0.0
                    for c in range(C):
                        for i in range(kH):
                            for j in range(kW):
                                yy = oy * stride + i * dilation - pt
                                xx = ox * stride + j * dilation - pl
                                if zero_pad:
                                    if 0 <= yy < H and 0 <= xx < W:
                                        acc += x[f, c, yy, xx] * k[co, c, i, j]
                                else:
                                    yy = min(max(yy, 0), H - 1)
                                    xx = min(max(xx, 0), W - 1)
                                    acc += x[f, c, yy, xx] * k[co, c, i, j]
                    out[f, co, oy, ox] = acc
    return out


def temporal_conv_loops(x, k):
    N, T, C, H, W = x.shape
    kT = k.shape[1]
    p = kT // 2
    out = np.zeros_like(x)
    for t in range(T):
        for j in range(kT):
            src = min(max(t + j - p, 0), T - 1)
            out[:, t] += x[:, src] * k[None, :, j, None, None]
    return out


def sce_oracle(logits, targets):
    logits = logits.astype(np.float64)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    return float(np.mean([-np.log(p[i, t]) for i, t in enumerate(targets)]))


# ---------------------------------------------------------------------------
# conv2d


def test_conv2d_identity_kernel():
    x = np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3)
    k = np.ones((1, 1, 1, 1))
    out = ops.conv2d(tensor(x), tensor(k))
    np.testing.assert_array_equal(out.data, x)


def test_conv2d_constant_field_replicate():
    rng = np.random.default_rng(0)
    x = np.full((1, 2, 6, 6), 3.5)
    k = rng.standard_normal((4, 2, 3, 3))
    out = ops.conv2d(tensor(x), tensor(k), padding="same-replicate")
    expected = 3.5 * k.sum(axis=(1, 2, 3))
    for co in range(4):
        np.testing.assert_allclose(out.data[0, co], expected[co], rtol=1e-12)


@pytest.mark.parametrize("stride,dilation,padding", [
    (1, 1, "same-replicate"),
    (1, 1, "same-zero"),
    (2, 1, "same-zero"),
    (1, 2, "same-replicate"),
])
def test_conv2d_matches_loop_oracle(stride, dilation, padding):
    rng = np.random.default_rng(7)
    x = rng.random((1, 2, 5, 5)).astype(np.float32)
    k = (rng.random((3, 2, 3, 3)) - 0.5).astype(np.float32)
    out = ops.conv2d(tensor(x, dtype=np.float32), tensor(k, dtype=np.float32),
                     stride=stride, dilation=dilation, padding=padding)
    ref = conv2d_loops(x.astype(np.float64), k.astype(np.float64),
                       stride=stride, dilation=dilation,
                       zero_pad=(padding == "same-zero"))
    assert np.abs(out.data - ref).max() < 1e-6


def test_conv2d_channel_mismatch():
    with pytest.raises(ConfigurationError):
        ops.conv2d(tensor(np.zeros((1, 2, 4, 4))), tensor(np.zeros((1, 3, 3, 3))))


# ---------------------------------------------------------------------------
# conv1d_temporal


def test_temporal_conv_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 5, 3, 4, 4))
    k = np.zeros((3, 3))
    k[:, 1] = 1.0
    out = ops.conv1d_temporal(tensor(x), tensor(k))
    np.testing.assert_allclose(out.data, x, atol=1e-12)


def test_temporal_conv_mean_on_ramp():
    # frames increase linearly: interior frames equal the mean of neighbours
    T = 6
    base = np.arange(T, dtype=np.float64)
    x = np.tile(base[None, :, None, None, None], (1, 1, 2, 3, 3))
    k = np.full((2, 3), 1.0 / 3.0)
    out = ops.conv1d_temporal(tensor(x), tensor(k))
    np.testing.assert_allclose(out.data[0, 1:-1], x[0, 1:-1], atol=1e-12)


def test_temporal_conv_matches_loop_oracle():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 7, 3, 4, 5))
    k = rng.standard_normal((3, 5))
    out = ops.conv1d_temporal(tensor(x), tensor(k))
    np.testing.assert_allclose(out.data, temporal_conv_loops(x, k), atol=1e-6)


def test_temporal_conv_kernel_too_long():
    with pytest.raises(ConfigurationError):
        ops.conv1d_temporal(tensor(np.zeros((1, 2, 1, 2, 2))), tensor(np.zeros((1, 3))))


# ---------------------------------------------------------------------------
# losses


def test_sce_symmetric_two_logits():
    loss = ops.softmax_cross_entropy(tensor([[0.0, 0.0]]), np.array([0]))
    assert abs(loss.item() - np.log(2.0)) < 1e-12


def test_sce_confident_limit():
    loss = ops.softmax_cross_entropy(tensor([[50.0, 0.0, 0.0]]), np.array([0]))
    assert loss.item() < 1e-12


def test_sce_matches_f64_oracle():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal((16, 9)) * 4
    targets = rng.integers(0, 9, size=16)
    loss = ops.softmax_cross_entropy(tensor(logits), targets)
    assert abs(loss.item() - sce_oracle(logits, targets)) < 1e-10


def test_sce_target_out_of_range():
    with pytest.raises(InputError):
        ops.softmax_cross_entropy(tensor([[0.0, 1.0]]), np.array([2]))


def test_sigmoid_ce_zero_logits():
    targets = np.array([[0, 1], [1, 0]])
    loss = ops.sigmoid_cross_entropy(tensor(np.zeros((2, 2))), targets)
    assert abs(loss.item() - np.log(2.0)) < 1e-12


def test_sigmoid_ce_confident_limit():
    loss = ops.sigmoid_cross_entropy(tensor([[40.0]]), np.array([[1]]))
    assert loss.item() < 1e-12


def test_sigmoid_ce_matches_f64_oracle():
    rng = np.random.default_rng(4)
    logits = rng.standard_normal((8, 5)) * 3
    targets = rng.integers(0, 2, size=(8, 5))
    loss = ops.sigmoid_cross_entropy(tensor(logits), targets)
    p = 1.0 / (1.0 + np.exp(-logits))
    ref = float(np.mean(-(targets * np.log(p) + (1 - targets) * np.log(1 - p))))
    assert abs(loss.item() - ref) < 1e-10


def test_sigmoid_ce_rejects_nonbinary():
    with pytest.raises(InputError):
        ops.sigmoid_cross_entropy(tensor(np.zeros((1, 2))), np.array([[0.5, 1.0]]))


def test_pixelwise_sce_uniform_logits():
    logits = np.zeros((2, 2, 3, 3))
    labels = np.zeros((2, 3, 3), dtype=np.int64)
    loss = ops.pixelwise_softmax_cross_entropy(tensor(logits), labels)
    assert abs(loss.item() - np.log(2.0)) < 1e-12


def test_pixelwise_sce_confident_limit():
    labels = np.array([[[0, 1], [1, 0]]])
    logits = np.zeros((1, 2, 2, 2))
    for y in range(2):
        for x in range(2):
            logits[0, labels[0, y, x], y, x] = 60.0
    loss = ops.pixelwise_softmax_cross_entropy(tensor(logits), labels)
    assert loss.item() < 1e-12


def test_pixelwise_sce_matches_per_pixel_oracle():
    rng = np.random.default_rng(5)
    F, K, h, w = 2, 4, 3, 5
    logits = rng.standard_normal((F, K, h, w)) * 2
    labels = rng.integers(0, K, size=(F, h, w))
    labels[0, 0, 0] = 255  # one ignored pixel
    loss = ops.pixelwise_softmax_cross_entropy(tensor(logits), labels, ignore_label=255)
    acc, n = 0.0, 0
    for f in range(F):
        for y in range(h):
            for x in range(w):
                if labels[f, y, x] == 255:
                    continue
                z = logits[f, :, y, x]
                p = np.exp(z - z.max())
                p /= p.sum()
                acc += -np.log(p[labels[f, y, x]])
                n += 1
    assert abs(loss.item() - acc / n) < 1e-10


def test_pixelwise_sce_all_ignored_warns():
    labels = np.full((1, 2, 2), 255, dtype=np.int64)
    with pytest.warns(UserWarning):
        loss = ops.pixelwise_softmax_cross_entropy(tensor(np.zeros((1, 2, 2, 2))), labels)
    assert loss.item() == 0.0


# ---------------------------------------------------------------------------
# elementwise suite


def test_stop_gradient_identity_and_zero_grad():
    with tape_scope() as t:
        x = tensor([1.0, -2.0, 3.0], rg=True)
        y = ops.stop_gradient(x)
        np.testing.assert_array_equal(y.data, x.data)
        z = ops.sum_reduce(ops.add(ops.multiply(x, x), y))
        backward(z, t)
    np.testing.assert_array_equal(x.grad, 2 * x.data)  # only the x*x path


def test_sigmoid_at_zero():
    assert ops.sigmoid(tensor([0.0])).data[0] == 0.5


def test_softmax_rows_sum_to_one_f32():
    rng = np.random.default_rng(6)
    logits = (rng.standard_normal((32, 11)) * 10).astype(np.float32)
    p = ops.softmax_np(logits)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_where_routes_gradients():
    with tape_scope() as t:
        a = tensor([1.0, 2.0], rg=True)
        b = tensor([3.0, 4.0], rg=True)
        out = ops.sum_reduce(ops.where(np.array([True, False]), a, b))
        backward(out, t)
    np.testing.assert_array_equal(a.grad, [1.0, 0.0])
    np.testing.assert_array_equal(b.grad, [0.0, 1.0])


def test_add_shape_mismatch():
    with pytest.raises(ConfigurationError):
        ops.add(tensor([1.0]), tensor([1.0, 2.0]))


def test_max_pool2d_and_backward_routing():
    with tape_scope() as t:
        x = tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), rg=True)
        out = ops.max_pool2d(x, k=2)
        assert out.data.reshape(-1)[0] == 4.0
        backward(ops.sum_reduce(out), t)
    np.testing.assert_array_equal(x.grad[0, 0], [[0, 0], [0, 1.0]])


def test_concat_channels_roundtrip_gradient():
    with tape_scope() as t:
        a = tensor(np.ones((1, 2, 2, 2)), rg=True)
        b = tensor(np.ones((1, 3, 2, 2)), rg=True)
        out = ops.concat_channels([a, b])
        assert out.shape == (1, 5, 2, 2)
        backward(ops.mean_reduce(out), t)
    assert a.grad.shape == a.shape and b.grad.shape == b.shape


# ---------------------------------------------------------------------------
# backward mechanics


def test_backward_sum_gives_ones():
    with tape_scope() as t:
        x = tensor(np.random.default_rng(0).standard_normal((3, 4)), rg=True)
        backward(ops.sum_reduce(x), t)
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_backward_quadratic():
    with tape_scope() as t:
        x = tensor([1.0, 2.0, 3.0], rg=True)
        backward(ops.sum_reduce(ops.multiply(x, x)), t)
    np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])


def test_backward_accumulates_over_consumers():
    with tape_scope() as t:
        x = tensor([2.0], rg=True)
        f = ops.multiply(x, x)            # x^2, df/dx = 4
        g = ops.scale_by_scalar(x, 3.0)   # 3x, dg/dx = 3
        backward(ops.sum_reduce(ops.add(f, g)), t)
    np.testing.assert_array_equal(x.grad, [7.0])


def test_backward_rejects_nonscalar_root():
    with tape_scope() as t:
        x = tensor([1.0, 2.0], rg=True)
        y = ops.add(x, x)
        with pytest.raises(UsageError):
            backward(y, t)


def test_backward_tape_single_use():
    with tape_scope() as t:
        x = tensor([1.0], rg=True)
        y = ops.sum_reduce(x)
        backward(y, t)
        with pytest.raises(UsageError):
            backward(y, t)


def test_determinism_bitwise_across_graph_builds():
    def run():
        rng = np.random.default_rng(123)
        with tape_scope() as t:
            x = Tensor(rng.standard_normal((2, 3, 8, 8)).astype(np.float32), requires_grad=True)
            k = Tensor(rng.standard_normal((4, 3, 3, 3)).astype(np.float32), requires_grad=True)
            out = ops.relu(ops.conv2d(x, k))
            loss = ops.mean_reduce(out)
            backward(loss, t)
        return loss.item(), x.grad.copy(), k.grad.copy()

    l1, gx1, gk1 = run()
    l2, gx2, gk2 = run()
    assert l1 == l2
    np.testing.assert_array_equal(gx1, gx2)
    np.testing.assert_array_equal(gk1, gk2)


# ---------------------------------------------------------------------------
# SGD


def test_sgd_simple_step():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    p.grad = np.array([0.5, -0.5])
    SGD([p], lr=1.0, momentum=0.0).step()
    np.testing.assert_array_equal(p.data, [0.5, 2.5])
    assert p.grad is None


def test_sgd_zero_grad_keeps_params():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = np.zeros(1)
    SGD([p], lr=10.0).step()
    np.testing.assert_array_equal(p.data, [1.0])


def test_sgd_momentum_matches_hand_unrolled():
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = SGD([p], lr=0.1, momentum=0.9)
    g1, g2 = 1.0, 2.0
    p.grad = np.array([g1])
    opt.step()
    p.grad = np.array([g2])
    opt.step()
    # v1 = g1; p1 = -lr*g1; v2 = 0.9*g1 + g2; p2 = p1 - lr*v2
    expected = -0.1 * g1 - 0.1 * (0.9 * g1 + g2)
    np.testing.assert_allclose(p.data, [expected], rtol=1e-12)


def test_sgd_missing_grad_errors():
    p = Tensor(np.array([1.0]), requires_grad=True)
    with pytest.raises(UsageError):
        SGD([p], lr=0.1).step()
