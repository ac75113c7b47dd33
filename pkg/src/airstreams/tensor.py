"""Reverse-mode autodiff core: Tensor values plus an explicit gradient tape.

Every differentiable primitive in ops.py executes its forward pass eagerly
on numpy arrays and, when a tape is active, appends one node holding a
backward closure. backward() replays the tape strictly in reverse recorded
order, which makes gradient computation deterministic: same seed, same
recorded order, bitwise-identical gradients.

One tape lives for one training step and is discarded after backward.
"""

from contextlib import contextmanager

import numpy as np

from .errors import UsageError

DEFAULT_DTYPE = np.float32


class Tensor:
    """A shaped numeric array participating in the gradient graph.

    `data` is always a numpy array (f32 or f64 for differentiable values,
    integer arrays are allowed for labels but can never require grad).
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif requires_grad and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        if requires_grad and not np.issubdtype(self.data.dtype, np.floating):
            raise UsageError("only float tensors can require grad")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data

    def accumulate_grad(self, g):
        """Add `g` into this tensor's grad buffer (summation over consumers).

        The first contribution is copied (backward closures may hand out
        views or shared buffers); later ones accumulate in place.
        """
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{tag})"

    # Minimal operator sugar; the primitive suite lives in ops.py.
    def __add__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.add_scalar(self, float(other))

    def __mul__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.multiply(self, other)
        return ops.scale_by_scalar(self, float(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.subtract(self, other)
        return ops.add_scalar(self, -float(other))


class _TapeNode:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class GradientTape:
    """Ordered record of executed primitives for one forward pass."""

    __slots__ = ("nodes", "consumed")

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def record(self, out, inputs, backward_fn):
        self.nodes.append(_TapeNode(out, inputs, backward_fn))

    def __len__(self):
        return len(self.nodes)


_ACTIVE_TAPE = None


def active_tape():
    return _ACTIVE_TAPE


@contextmanager
def tape_scope(tape=None):
    """Make `tape` (a fresh one by default) the recording target.

    Yields the tape. Nesting replaces the active tape for the inner scope.
    """
    global _ACTIVE_TAPE
    if tape is None:
        tape = GradientTape()
    prev = _ACTIVE_TAPE
    _ACTIVE_TAPE = tape
    try:
        yield tape
    finally:
        _ACTIVE_TAPE = prev


@contextmanager
def no_grad():
    """Disable recording: forward passes inside build no graph."""
    global _ACTIVE_TAPE
    prev = _ACTIVE_TAPE
    _ACTIVE_TAPE = None
    try:
        yield
    finally:
        _ACTIVE_TAPE = prev


def record(out, inputs, backward_fn):
    """Record one primitive if a tape is active and the output needs grad."""
    if _ACTIVE_TAPE is not None and out.requires_grad:
        _ACTIVE_TAPE.record(out, inputs, backward_fn)


def backward(root, tape=None):
    """Populate grads of everything reachable from the scalar `root`.

    Multiple consumers accumulate by summation. A tape can be consumed by
    backward only once.
    """
    if tape is None:
        tape = _ACTIVE_TAPE
    if tape is None:
        raise UsageError("backward called with no active or explicit tape")
    if tape.consumed:
        raise UsageError("tape already consumed by a previous backward")
    if root.size != 1:
        raise UsageError(f"backward root must be scalar, got shape {tuple(root.shape)}")
    tape.consumed = True
    root.grad = np.ones_like(root.data)
    for node in reversed(tape.nodes):
        out_grad = node.out.grad
        if out_grad is None:
            continue
        grads = node.backward_fn(out_grad)
        for inp, g in zip(node.inputs, grads):
            if g is not None and inp.requires_grad:
                inp.accumulate_grad(g)


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def parameter(data, dtype=DEFAULT_DTYPE, name=None):
    """A leaf tensor that receives gradients and is updated by SGD."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True, name=name)


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=DEFAULT_DTYPE, name=None):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    values = rng.uniform(-bound, bound, size=shape)
    return parameter(values.astype(dtype), dtype=dtype, name=name)
