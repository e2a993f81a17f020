"""Dense-tensor engine with reverse-mode automatic differentiation.

Values are `Tensor`s wrapping contiguous float32/float64 numpy arrays in
the canonical N x C x H x W image layout. Operations executed inside a
`Tape` context are recorded; `backward(loss, tape)` replays the record
in reverse and populates `.grad` on every tensor that requires it.

There is no implicit broadcasting: binary ops demand identical shapes,
and the only scalar interactions are the explicit `scale`/`shift`
(python-float) and `scale_by`/`shift_by` (scalar-tensor) ops.

Every op checks its forward output, and `backward` every produced
gradient, for NaN/Inf; a non-finite value raises `NumericError` naming
the op instead of propagating silently.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A dense n-dimensional float array with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        """Same data, no gradient tracking."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def numpy(self):
        return self.data

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype.name}{flag})"


class Node:
    """One executed op on a tape: output, inputs, and the pullback."""

    __slots__ = ("name", "output", "inputs", "backward_fn")

    def __init__(self, name, output, inputs, backward_fn):
        self.name = name
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed ops for one forward pass.

    A tape is confined to the thread that created it and is meant to be
    cleared after each optimizer step.
    """

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack.pop()
        assert popped is self, "tape contexts must nest"
        return False

    def __len__(self):
        return len(self._nodes)

    def append(self, node):
        self._nodes.append(node)

    def nodes(self):
        return self._nodes

    def clear(self):
        self._nodes.clear()


_tape_stack: list[Tape] = []


def _active_tape():
    return _tape_stack[-1] if _tape_stack else None


def _check_finite(arr, opname):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{opname} produced a non-finite value")


def _same_dtype(opname, *tensors):
    dt = tensors[0].dtype
    for t in tensors[1:]:
        if t.dtype != dt:
            raise ShapeError(f"{opname}: mixed dtypes {dt} and {t.dtype}")
    return dt


# Names of all differentiable primitives, filled in by @_register and by
# the wavelet module. The gradient-check suite iterates over this.
REGISTERED_OPS: dict[str, object] = {}


def _register(name):
    def deco(fn):
        REGISTERED_OPS[name] = fn
        return fn
    return deco


def register_external_op(name, fn):
    """Register a primitive defined outside this module (e.g. dwt2)."""
    REGISTERED_OPS[name] = fn


def apply_op(name, inputs, out_data, backward_fn):
    """Wrap an op result, validating it and recording it when taping.

    `backward_fn(gout) -> list[np.ndarray | None]` returns one gradient
    per input (None for inputs that need none).
    """
    _check_finite(out_data, name)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = _active_tape()
    if tape is not None and requires:
        tape.append(Node(name, out, tuple(inputs), backward_fn))
    return out


def backward(loss, tape):
    """Populate `.grad` with d(loss)/d(tensor) for every recorded tensor.

    The loss must be a scalar produced on `tape`. Replays the record in
    reverse execution order; gradients accumulate, so tensors used
    several times receive the sum of their contributions.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not any(node.output is loss for node in tape.nodes()):
        raise ShapeError("loss tensor is not recorded on this tape (detached?)")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes()):
        gout = node.output.grad
        if gout is None:
            continue
        grads = node.backward_fn(gout)
        for t, g in zip(node.inputs, grads):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.data.shape:
                raise ShapeError(
                    f"{node.name} backward: gradient shape {g.shape} != {t.data.shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"{node.name} backward produced a non-finite gradient")
            if t.grad is None:
                # adopt without copying; accumulation below never mutates
                t.grad = g if g.dtype == t.dtype else g.astype(t.dtype)
            else:
                t.grad = t.grad + g


# ---------------------------------------------------------------------------
# primitives


@_register("conv2d")
def conv2d(x, w, b, stride=1, padding=0):
    """2-D cross-correlation with zero padding.

    x: (N, Cin, H, W), w: (Cout, Cin, kh, kw), b: (Cout,).
    Output spatial size floor((H + 2p - kh)/stride) + 1.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: input ndim {x.data.ndim}, weight ndim {w.data.ndim}, want 4")
    n, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {cin_w}")
    if b.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.shape}, want ({cout},)")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError(f"conv2d: padded input {h + 2 * padding}x{wd + 2 * padding} "
                         f"smaller than kernel {kh}x{kw}")
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    _same_dtype("conv2d", x, w, b)

    # pad once; forward and both backward kernels share the padded array
    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    out = kernels.conv2d_forward(xp, w.data, b.data, stride)
    w_data, w_shape = w.data, w.shape

    def bwd(g):
        gx = gw = gb = None
        if x.requires_grad:
            gxp = kernels.conv2d_grad_input(g, w_data, xp.shape, stride)
            if padding:
                gx = np.ascontiguousarray(
                    gxp[:, :, padding:padding + h, padding:padding + wd])
            else:
                gx = gxp
        if w.requires_grad:
            gw = kernels.conv2d_grad_weight(g, xp, w_shape, stride)
        if b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return [gx, gw, gb]

    return apply_op("conv2d", [x, w, b], out, bwd)


@_register("dense")
def dense(x, w, b):
    """Fully connected layer: out[n, g] = sum_f x[n, f] w[g, f] + b[g]."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ShapeError(f"dense: x ndim {x.data.ndim}, w ndim {w.data.ndim}, want 2")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"dense: inner dims {x.shape[1]} vs {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"dense: bias shape {b.shape}, want ({w.shape[0]},)")
    _same_dtype("dense", x, w, b)
    out = x.data @ w.data.T + b.data

    def bwd(g):
        gx = g @ w.data if x.requires_grad else None
        gw = g.T @ x.data if w.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return [gx, gw, gb]

    return apply_op("dense", [x, w, b], out, bwd)


@_register("leaky_relu")
def leaky_relu(x, slope=0.2):
    out = np.where(x.data >= 0, x.data, slope * x.data)
    mask = np.where(x.data >= 0, 1.0, slope).astype(x.dtype)
    return apply_op("leaky_relu", [x], out, lambda g: [g * mask])


@_register("sigmoid")
def sigmoid(x):
    # tanh form is overflow-free for large |x|
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return apply_op("sigmoid", [x], out, lambda g: [g * out * (1.0 - out)])


def _binary_check(name, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ "
                         "(no implicit broadcasting)")
    _same_dtype(name, a, b)


@_register("add")
def add(a, b):
    _binary_check("add", a, b)
    return apply_op("add", [a, b], a.data + b.data, lambda g: [g, g])


@_register("sub")
def sub(a, b):
    _binary_check("sub", a, b)
    return apply_op("sub", [a, b], a.data - b.data, lambda g: [g, -g])


@_register("mul")
def mul(a, b):
    _binary_check("mul", a, b)
    return apply_op("mul", [a, b], a.data * b.data,
                    lambda g: [g * b.data, g * a.data])


@_register("scale")
def scale(x, c):
    """Multiply by a python-float constant."""
    c = float(c)
    return apply_op("scale", [x], x.data * np.asarray(c, dtype=x.dtype),
                    lambda g: [g * c])


@_register("shift")
def shift(x, c):
    """Add a python-float constant."""
    c = float(c)
    return apply_op("shift", [x], x.data + np.asarray(c, dtype=x.dtype),
                    lambda g: [g])


@_register("abs")
def abs_(x):
    out = np.abs(x.data)
    sign = np.sign(x.data)
    return apply_op("abs", [x], out, lambda g: [g * sign])


@_register("sqrt")
def sqrt(x):
    if np.any(x.data < 0):
        raise NumericError("sqrt of a negative value")
    out = np.sqrt(x.data)
    return apply_op("sqrt", [x], out, lambda g: [g * (0.5 / out)])


@_register("log")
def log(x):
    if np.any(x.data <= 0):
        raise NumericError("log of a non-positive value")
    return apply_op("log", [x], np.log(x.data), lambda g: [g / x.data])


@_register("clamp")
def clamp(x, lo, hi):
    """Clip to [lo, hi]; gradient passes only through unclipped entries."""
    out = np.clip(x.data, lo, hi)
    mask = ((x.data >= lo) & (x.data <= hi)).astype(x.dtype)
    return apply_op("clamp", [x], out, lambda g: [g * mask])


@_register("upsample_nearest")
def upsample_nearest(x, factor):
    """Replicate each pixel into a factor x factor block."""
    if factor < 1:
        raise ShapeError(f"upsample_nearest: factor must be >= 1, got {factor}")
    if x.data.ndim != 4:
        raise ShapeError("upsample_nearest expects an N x C x H x W tensor")
    f = int(factor)
    out = x.data.repeat(f, axis=2).repeat(f, axis=3)
    n, c, h, w = x.shape

    def bwd(g):
        return [g.reshape(n, c, h, f, w, f).sum(axis=(3, 5))]

    return apply_op("upsample_nearest", [x], out, bwd)


@_register("mean")
def mean(x):
    if x.size == 0:
        raise ShapeError("mean of an empty tensor")
    out = np.asarray(x.data.mean(), dtype=x.dtype)
    inv = 1.0 / x.size
    return apply_op("mean", [x], out,
                    lambda g: [np.full(x.shape, g * inv, dtype=x.dtype)])


@_register("sum")
def tsum(x):
    if x.size == 0:
        raise ShapeError("sum of an empty tensor")
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return apply_op("sum", [x], out,
                    lambda g: [np.full(x.shape, g, dtype=x.dtype)])


@_register("concat")
def concat(tensors, axis=1):
    """Concatenate along one axis; all other extents must agree."""
    if not tensors:
        raise ShapeError("concat of nothing")
    _same_dtype("concat", *tensors)
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        s = list(t.shape)
        s[axis] = ref[axis]
        if s != ref:
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} vs {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return np.split(g, splits, axis=axis)

    return apply_op("concat", list(tensors), out, bwd)


@_register("reshape")
def reshape(x, shape):
    out = x.data.reshape(shape)
    orig = x.shape
    return apply_op("reshape", [x], np.ascontiguousarray(out),
                    lambda g: [g.reshape(orig)])


@_register("instance_norm")
def instance_norm(x, gamma, beta, eps=1e-5):
    """Per-sample, per-channel standardization over H x W with affine."""
    if x.data.ndim != 4:
        raise ShapeError("instance_norm expects an N x C x H x W tensor")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"instance_norm: affine shapes {gamma.shape}/{beta.shape}, want ({c},)")
    _same_dtype("instance_norm", x, gamma, beta)
    m = h * w
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def bwd(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = (g * xhat).sum(axis=(0, 2, 3))
        if beta.requires_grad:
            gbeta = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gxhat = g * gamma.data[None, :, None, None]
            s1 = gxhat.sum(axis=(2, 3), keepdims=True)
            s2 = (gxhat * xhat).sum(axis=(2, 3), keepdims=True)
            gx = inv_std * (gxhat - (s1 + xhat * s2) / m)
        return [gx, ggamma, gbeta]

    return apply_op("instance_norm", [x, gamma, beta], out, bwd)


@_register("softmax_vec")
def softmax_vec(x):
    """Softmax of a 1-D tensor."""
    if x.data.ndim != 1:
        raise ShapeError("softmax_vec expects a 1-D tensor")
    z = x.data - x.data.max()
    e = np.exp(z)
    out = e / e.sum()

    def bwd(g):
        return [out * (g - float(g @ out))]

    return apply_op("softmax_vec", [x], out, bwd)


@_register("pick")
def pick(x, i):
    """Extract element i of a 1-D tensor as a scalar tensor."""
    if x.data.ndim != 1:
        raise ShapeError("pick expects a 1-D tensor")
    i = int(i)
    out = np.asarray(x.data[i], dtype=x.dtype)

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[i] = g
        return [gx]

    return apply_op("pick", [x], out, bwd)


@_register("scale_by")
def scale_by(x, s):
    """Multiply a tensor by a scalar tensor (the one explicit broadcast)."""
    if s.size != 1:
        raise ShapeError(f"scale_by: scalar operand has shape {s.shape}")
    _same_dtype("scale_by", x, s)
    sv = s.data.reshape(())
    out = x.data * sv

    def bwd(g):
        gx = g * sv if x.requires_grad else None
        gs = None
        if s.requires_grad:
            gs = np.asarray((g * x.data).sum(), dtype=s.dtype).reshape(s.shape)
        return [gx, gs]

    return apply_op("scale_by", [x, s], out, bwd)


@_register("shift_by")
def shift_by(x, s):
    """Add a scalar tensor to every element."""
    if s.size != 1:
        raise ShapeError(f"shift_by: scalar operand has shape {s.shape}")
    _same_dtype("shift_by", x, s)
    out = x.data + s.data.reshape(())

    def bwd(g):
        gx = g if x.requires_grad else None
        gs = None
        if s.requires_grad:
            gs = np.asarray(g.sum(), dtype=s.dtype).reshape(s.shape)
        return [gx, gs]

    return apply_op("shift_by", [x, s], out, bwd)
