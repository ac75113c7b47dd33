"""Differentiable primitives composing every model in the package.

All ops execute eagerly on numpy arrays and register a backward closure on
the active tape (see tensor.py). Shape alignment is explicit everywhere:
binary ops demand identical shapes, and the only broadcasting allowed is
scalar-times-tensor plus the dedicated channel_scale / channel_bias ops.
"""

import warnings

import numpy as np

from .errors import ConfigurationError, InputError
from .tensor import Tensor, as_tensor, record

# ---------------------------------------------------------------------------
# helpers


def _require_same_shape(a, b, op):
    if a.shape != b.shape:
        raise ConfigurationError(
            f"{op}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}"
        )


def _result(data, inputs, backward_fn):
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    record(out, inputs, backward_fn)
    return out


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def subtract(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape(a, b, "subtract")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def multiply(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape(a, b, "multiply")
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def divide(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape(a, b, "divide")
    ad, bd = a.data, b.data
    out = ad / bd

    def backward_fn(g):
        return g / bd, -g * out / bd

    return _result(out, (a, b), backward_fn)


def add_scalar(x, c):
    x = as_tensor(x)
    return _result(x.data + x.dtype.type(c), (x,), lambda g: (g,))


def scale_by_scalar(x, s):
    """x * s where s is a python float or a scalar tensor (size 1).

    The only broadcasting rule in the engine; gradients reach both sides.
    """
    x = as_tensor(x)
    if isinstance(s, Tensor):
        if s.size != 1:
            raise ConfigurationError("scale_by_scalar expects a scalar multiplier")
        xd, sd = x.data, s.data

        def backward_fn(g):
            return g * sd, np.sum(g * xd).reshape(s.shape).astype(sd.dtype)

        return _result(xd * sd, (x, s), backward_fn)
    c = x.dtype.type(s)
    return _result(x.data * c, (x,), lambda g: (g * c,))


def negative(x):
    x = as_tensor(x)
    return _result(-x.data, (x,), lambda g: (-g,))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def _sigmoid(values):
    out = np.empty_like(values)
    pos = values >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-values[pos]))
    ev = np.exp(values[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return _result(s, (x,), lambda g: (g * s * (1.0 - s),))


def sqrt(x):
    x = as_tensor(x)
    r = np.sqrt(x.data)
    return _result(r, (x,), lambda g: (g * (0.5 / r),))


def square(x):
    x = as_tensor(x)
    xd = x.data
    return _result(xd * xd, (x,), lambda g: (g * (2.0 * xd),))


def where(mask, a, b):
    """Select a where mask else b. The mask is a constant, not a tensor."""
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape(a, b, "where")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ConfigurationError("where: mask shape mismatch")

    def backward_fn(g):
        return np.where(mask, g, 0.0), np.where(mask, 0.0, g)

    return _result(np.where(mask, a.data, b.data), (a, b), backward_fn)


def stop_gradient(x):
    """Identity in forward; contributes zero gradient to its input."""
    x = as_tensor(x)
    return Tensor(x.data, requires_grad=False)


def flip3(x):
    """Reverse a 3-tap kernel (any tensor is flipped along its last axis)."""
    x = as_tensor(x)
    return _result(
        np.ascontiguousarray(x.data[..., ::-1]),
        (x,),
        lambda g: (np.ascontiguousarray(g[..., ::-1]),),
    )


def channel_mean(x):
    """Mean over the channel axis, kept as a singleton: [.., C, H, W] -> [.., 1, H, W]."""
    x = as_tensor(x)
    ch_axis = x.ndim - 3
    C = x.shape[ch_axis]

    def backward_fn(g):
        reps = [1] * x.ndim
        reps[ch_axis] = C
        return (np.tile(g / C, reps),)

    return _result(x.data.mean(axis=ch_axis, keepdims=True), (x,), backward_fn)


# ---------------------------------------------------------------------------
# structural


def reshape(x, shape):
    x = as_tensor(x)
    old_shape = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old_shape),))


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        return tuple(
            np.ascontiguousarray(piece) for piece in np.split(g, offsets[1:-1], axis=axis)
        )

    return _result(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn
    )


def concat_channels(tensors):
    """Concatenate along the channel axis (ndim-3: works for 4D and 5D)."""
    first = as_tensor(tensors[0])
    return concat(tensors, axis=first.ndim - 3)


def take_slice(x, axis, start, stop):
    x = as_tensor(x)
    index = tuple(
        slice(start, stop) if d == axis else slice(None) for d in range(x.ndim)
    )
    in_shape = x.shape

    def backward_fn(g):
        full = np.zeros(in_shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return _result(np.ascontiguousarray(x.data[index]), (x,), backward_fn)


# ---------------------------------------------------------------------------
# reductions and pooling


def sum_reduce(x):
    x = as_tensor(x)
    shape, dtype = x.shape, x.dtype

    def backward_fn(g):
        return (np.full(shape, g, dtype=dtype),)

    return _result(np.asarray(x.data.sum(), dtype=dtype), (x,), backward_fn)


def mean_reduce(x):
    x = as_tensor(x)
    shape, dtype, n = x.shape, x.dtype, x.size

    def backward_fn(g):
        return (np.full(shape, g / n, dtype=dtype),)

    return _result(np.asarray(x.data.mean(), dtype=dtype), (x,), backward_fn)


def global_average_pool(x):
    """Mean over all spatial (and temporal) axes.

    [F, C, H, W] -> [F, C]; [N, T, C, H, W] -> [N, C].
    """
    x = as_tensor(x)
    if x.ndim == 4:
        axes, out_expand = (2, 3), (slice(None), slice(None), None, None)
    elif x.ndim == 5:
        axes, out_expand = (1, 3, 4), (slice(None), None, slice(None), None, None)
    else:
        raise ConfigurationError(f"global_average_pool expects 4D/5D, got {x.ndim}D")
    count = 1
    for ax in axes:
        count *= x.shape[ax]
    in_shape = x.shape

    def backward_fn(g):
        return (np.broadcast_to(g[out_expand] / count, in_shape).astype(g.dtype),)

    return _result(x.data.mean(axis=axes), (x,), backward_fn)


def max_pool2d(x, k=2):
    """Non-overlapping spatial max pool over the last two axes."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise ConfigurationError("max_pool2d expects at least 3 dims")
    *lead, H, W = x.shape
    if H % k or W % k:
        raise ConfigurationError(f"max_pool2d: {H}x{W} not divisible by {k}")
    H2, W2 = H // k, W // k
    B = int(np.prod(lead)) if lead else 1
    flat = np.ascontiguousarray(x.data).reshape(B, H, W)
    sB, sH, sW = flat.strides
    windows = np.lib.stride_tricks.as_strided(
        flat, shape=(B, H2, W2, k, k), strides=(sB, sH * k, sW * k, sH, sW),
        writeable=False,
    ).reshape(B, H2, W2, k * k)
    idx = np.argmax(windows, axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    in_shape = x.shape

    def backward_fn(g):
        gr = np.zeros((B, H2, W2, k, k), dtype=g.dtype)
        np.put_along_axis(
            gr.reshape(B, H2, W2, k * k), idx[..., None], g.reshape(B, H2, W2, 1), axis=-1
        )
        gx = gr.transpose(0, 1, 3, 2, 4).reshape(in_shape)
        return (gx,)

    return _result(out.reshape(*lead, H2, W2), (x,), backward_fn)


def temporal_max_pool(x, k=2):
    """Non-overlapping max pool along the time axis of [N, T, C, H, W]."""
    x = as_tensor(x)
    if x.ndim != 5:
        raise ConfigurationError("temporal_max_pool expects [N, T, C, H, W]")
    N, T, C, H, W = x.shape
    if T % k:
        raise ConfigurationError(f"temporal_max_pool: T={T} not divisible by {k}")
    T2 = T // k
    xr = x.data.reshape(N, T2, k, C, H, W)
    idx = np.argmax(xr, axis=2)
    out = np.take_along_axis(xr, idx[:, :, None], axis=2)[:, :, 0]
    in_shape = x.shape

    def backward_fn(g):
        gr = np.zeros((N, T2, k, C, H, W), dtype=g.dtype)
        np.put_along_axis(gr, idx[:, :, None], g[:, :, None], axis=2)
        return (gr.reshape(in_shape),)

    return _result(out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# channel-wise affine plumbing


def channel_scale(x, s):
    """Multiply each channel by a per-sample scalar: the gating primitive.

    x: [F, C, H, W] with s: [F, C], or x: [N, T, C, H, W] with s: [N, C].
    """
    x, s = as_tensor(x), as_tensor(s)
    if x.ndim == 4:
        expand = (slice(None), slice(None), None, None)
        axes = (2, 3)
    elif x.ndim == 5:
        expand = (slice(None), None, slice(None), None, None)
        axes = (1, 3, 4)
    else:
        raise ConfigurationError("channel_scale expects 4D/5D input")
    if s.shape != (x.shape[0], x.shape[x.ndim - 3]):
        raise ConfigurationError(
            f"channel_scale: scale shape {tuple(s.shape)} does not match input"
        )
    xd, sd = x.data, s.data[expand]

    def backward_fn(g):
        return g * sd, (g * xd).sum(axis=axes)

    return _result(xd * sd, (x, s), backward_fn)


def channel_bias(x, b):
    """Add a per-channel bias vector over the channel axis (ndim-3)."""
    x, b = as_tensor(x), as_tensor(b)
    ch_axis = x.ndim - 3
    if b.shape != (x.shape[ch_axis],):
        raise ConfigurationError("channel_bias: bias length must equal channels")
    expand = tuple(
        slice(None) if d == ch_axis else None for d in range(x.ndim)
    )
    sum_axes = tuple(d for d in range(x.ndim) if d != ch_axis)

    def backward_fn(g):
        return g, g.sum(axis=sum_axes)

    return _result(x.data + b.data[expand], (x, b), backward_fn)


def linear(x, w, b=None):
    """Fully connected layer: x [N, Cin] @ w [Cout, Cin]^T (+ b [Cout])."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ConfigurationError(
            f"linear: incompatible shapes {tuple(x.shape)} and {tuple(w.shape)}"
        )
    xd, wd = x.data, w.data
    out = xd @ wd.T
    if b is None:

        def backward_fn(g):
            return g @ wd, g.T @ xd

        return _result(out, (x, w), backward_fn)
    b = as_tensor(b)
    if b.shape != (w.shape[0],):
        raise ConfigurationError("linear: bias length must equal output features")

    def backward_fn_bias(g):
        return g @ wd, g.T @ xd, g.sum(axis=0)

    return _result(out + b.data, (x, w, b), backward_fn_bias)


# ---------------------------------------------------------------------------
# convolutions

_PAD_MODES = ("same-replicate", "same-zero")


def _same_padding(size, k, stride, dilation):
    eff = (k - 1) * dilation + 1
    out = -(-size // stride)
    total = max((out - 1) * stride + eff - size, 0)
    return out, total // 2, total - total // 2


def _pad2d(values, pt, pb, pl, pr, mode):
    if pt == pb == pl == pr == 0:
        return values
    pad = [(0, 0)] * (values.ndim - 2) + [(pt, pb), (pl, pr)]
    if mode == "same-replicate":
        return np.pad(values, pad, mode="edge")
    return np.pad(values, pad, mode="constant")


def _fold_pad2d(g, pt, pb, pl, pr, H, W, mode):
    """Adjoint of _pad2d: route padded-cell gradients back to edge pixels."""
    if pt == pb == pl == pr == 0:
        return g
    if mode == "same-zero":
        return np.ascontiguousarray(g[..., pt : pt + H, pl : pl + W])
    if pt:
        g[..., pt, :] += g[..., :pt, :].sum(axis=-2)
    if pb:
        g[..., pt + H - 1, :] += g[..., pt + H :, :].sum(axis=-2)
    g = g[..., pt : pt + H, :]
    if pl:
        g[..., pl] += g[..., :pl].sum(axis=-1)
    if pr:
        g[..., pl + W - 1] += g[..., pl + W :].sum(axis=-1)
    return np.ascontiguousarray(g[..., pl : pl + W])


def _im2col(xp, kH, kW, stride, dilation, outH, outW):
    F, C, Hp, Wp = xp.shape
    s = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(F, C, kH, kW, outH, outW),
        strides=(s[0], s[1], s[2] * dilation, s[3] * dilation, s[2] * stride, s[3] * stride),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(F, C * kH * kW, outH * outW)


def conv2d(x, kernel, stride=1, dilation=1, padding="same-replicate"):
    """2D convolution (cross-correlation) with "same" output for stride 1.

    x: [F, C_in, H, W]; kernel: [C_out, C_in, kH, kW] with odd kH, kW.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ConfigurationError("conv2d expects 4D input and 4D kernel")
    F, C, H, W = x.shape
    Co, Ck, kH, kW = kernel.shape
    if Ck != C:
        raise ConfigurationError(f"conv2d: input has {C} channels, kernel expects {Ck}")
    if kH % 2 == 0 or kW % 2 == 0:
        raise ConfigurationError("conv2d: kernel sides must be odd")
    if padding not in _PAD_MODES:
        raise ConfigurationError(f"conv2d: unknown padding mode {padding!r}")
    outH, pt, pb = _same_padding(H, kH, stride, dilation)
    outW, pl, pr = _same_padding(W, kW, stride, dilation)
    xp = _pad2d(x.data, pt, pb, pl, pr, padding)
    cols = _im2col(xp, kH, kW, stride, dilation, outH, outW)
    k2 = kernel.data.reshape(Co, C * kH * kW)
    out = np.matmul(k2, cols).reshape(F, Co, outH, outW)
    Hp, Wp = xp.shape[2], xp.shape[3]

    def backward_fn(g):
        gf = g.reshape(F, Co, outH * outW)
        grad_k = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape)
        gcols = np.matmul(k2.T, gf).reshape(F, C, kH, kW, outH, outW)
        gxp = np.zeros((F, C, Hp, Wp), dtype=g.dtype)
        for i in range(kH):
            hi = i * dilation
            for j in range(kW):
                wj = j * dilation
                gxp[:, :, hi : hi + stride * outH : stride, wj : wj + stride * outW : stride] += gcols[:, :, i, j]
        grad_x = _fold_pad2d(gxp, pt, pb, pl, pr, H, W, padding)
        return grad_x, grad_k

    return _result(out, (x, kernel), backward_fn)


def conv1d_temporal(x, kernel):
    """Depthwise 1D convolution along T of [N, T, C, H, W], replicate padded.

    kernel: [C, kT] with odd kT <= T; T is preserved.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 5 or kernel.ndim != 2:
        raise ConfigurationError("conv1d_temporal expects 5D input and [C, kT] kernel")
    N, T, C, H, W = x.shape
    Ck, kT = kernel.shape
    if Ck != C:
        raise ConfigurationError(f"conv1d_temporal: {C} channels vs kernel {Ck}")
    if kT % 2 == 0:
        raise ConfigurationError("conv1d_temporal: kT must be odd")
    if kT > T:
        raise ConfigurationError(f"conv1d_temporal: kT={kT} exceeds T={T}")
    p = kT // 2
    xp = np.pad(x.data, [(0, 0), (p, p), (0, 0), (0, 0), (0, 0)], mode="edge")
    kd = kernel.data
    out = np.zeros_like(x.data)
    for j in range(kT):
        out += xp[:, j : j + T] * kd[None, None, :, j, None, None]

    def backward_fn(g):
        grad_k = np.empty_like(kd)
        for j in range(kT):
            grad_k[:, j] = (g * xp[:, j : j + T]).sum(axis=(0, 1, 3, 4))
        gxp = np.zeros_like(xp)
        for j in range(kT):
            gxp[:, j : j + T] += g * kd[None, None, :, j, None, None]
        gx = np.ascontiguousarray(gxp[:, p : p + T])
        if p:
            gx[:, 0] += gxp[:, :p].sum(axis=1)
            gx[:, T - 1] += gxp[:, p + T :].sum(axis=1)
        return gx, grad_k

    return _result(out, (x, kernel), backward_fn)


def directional_conv3(x, kernel, axis):
    """3-tap convolution along one spatial axis of [F, C, H, W].

    The same length-3 kernel is applied depthwise to every channel with
    replicate padding; gradients reach both the image and the kernel taps.
    axis: "x" (width) or "y" (height).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.size != 3:
        raise ConfigurationError("directional_conv3 expects a 3-tap kernel")
    if x.ndim != 4:
        raise ConfigurationError("directional_conv3 expects [F, C, H, W]")
    if axis not in ("x", "y"):
        raise ConfigurationError("axis must be 'x' or 'y'")
    ax = 3 if axis == "x" else 2
    n = x.shape[ax]
    pad = [(0, 0)] * 4
    pad[ax] = (1, 1)
    xp = np.pad(x.data, pad, mode="edge")
    kd = kernel.data.reshape(3)

    def shifted(arr, j):
        index = [slice(None)] * 4
        index[ax] = slice(j, j + n)
        return arr[tuple(index)]

    out = kd[0] * shifted(xp, 0) + kd[1] * shifted(xp, 1) + kd[2] * shifted(xp, 2)

    def backward_fn(g):
        grad_k = np.array(
            [np.einsum("fchw,fchw->", g, shifted(xp, j)) for j in range(3)],
            dtype=kd.dtype,
        ).reshape(kernel.shape)
        gxp = np.zeros_like(xp)
        for j in range(3):
            index = [slice(None)] * 4
            index[ax] = slice(j, j + n)
            gxp[tuple(index)] += g * kd[j]
        gx = np.ascontiguousarray(shifted(gxp, 1))
        edge_lo = [slice(None)] * 4
        edge_lo[ax] = 0
        edge_hi = [slice(None)] * 4
        edge_hi[ax] = n - 1
        first = [slice(None)] * 4
        first[ax] = 0
        last = [slice(None)] * 4
        last[ax] = n + 1
        gx[tuple(edge_lo)] += gxp[tuple(first)]
        gx[tuple(edge_hi)] += gxp[tuple(last)]
        return gx, grad_k

    return _result(out, (x, kernel), backward_fn)


# ---------------------------------------------------------------------------
# losses


def softmax_np(logits):
    """Plain numpy softmax over the last axis (evaluation utility)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, targets):
    """Mean over rows of -log softmax(logits)[target], max-stabilized."""
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.ndim != 2:
        raise ConfigurationError("softmax_cross_entropy expects [N, K] logits")
    N, K = logits.shape
    if targets.shape != (N,):
        raise InputError(f"targets must have shape ({N},)")
    if not np.issubdtype(targets.dtype, np.integer):
        raise InputError("targets must be integer class indices")
    if targets.min() < 0 or targets.max() >= K:
        raise InputError("target class out of range")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(N)
    loss = (lse[:, 0] - z[rows, targets]).mean()

    def backward_fn(g):
        p = np.exp(z - lse)
        p[rows, targets] -= 1.0
        return (p * (g / N),)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), backward_fn)


def sigmoid_cross_entropy(logits, targets):
    """Mean binary cross-entropy between sigmoid(logits) and 0/1 targets."""
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.ndim != 2:
        raise ConfigurationError("sigmoid_cross_entropy expects [N, K] logits")
    if targets.shape != logits.shape:
        raise InputError("targets must match logits shape")
    if not np.isin(targets, (0, 1)).all():
        raise InputError("targets must be binary")
    t = targets.astype(logits.dtype)
    x = logits.data
    per_entry = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    n = x.size

    def backward_fn(g):
        return ((_sigmoid(x) - t) * (g / n),)

    return _result(np.asarray(per_entry.mean(), dtype=logits.dtype), (logits,), backward_fn)


def pixelwise_softmax_cross_entropy(logits, labels, ignore_label=255):
    """Mean softmax cross-entropy over non-ignored pixels of all frames.

    logits: [F, K, h, w]; labels: int [F, h, w] in [0, K) or == ignore_label.
    Returns a zero constant (with a warning) when every pixel is ignored.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 4:
        raise ConfigurationError("pixelwise loss expects [F, K, h, w] logits")
    F, K, h, w = logits.shape
    if labels.shape != (F, h, w):
        raise InputError(f"labels must have shape {(F, h, w)}")
    valid = labels != ignore_label
    lv = labels[valid]
    if lv.size and (lv.min() < 0 or lv.max() >= K):
        raise InputError("segmentation label out of range")
    n_valid = int(valid.sum())
    if n_valid == 0:
        warnings.warn("pixelwise loss: every pixel ignored, returning zero loss")
        return Tensor(np.asarray(0.0, dtype=logits.dtype))
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    safe = np.where(valid, labels, 0)
    picked = np.take_along_axis(z, safe[:, None], axis=1)[:, 0]
    loss = ((lse[:, 0] - picked) * valid).sum() / n_valid

    def backward_fn(g):
        p = np.exp(z - lse)
        onehot_rows = np.zeros_like(p)
        np.put_along_axis(onehot_rows, safe[:, None], 1.0, axis=1)
        p -= onehot_rows
        p *= valid[:, None]
        return (p * (g / n_valid),)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), backward_fn)
