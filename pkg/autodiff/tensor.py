# autodiff/tensor.py

import threading
from contextlib import contextmanager

import numpy as np

from exceptions import TensorError

_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def set_grad_enabled(enabled):
    previous = is_grad_enabled()
    _state.enabled = enabled
    try:
        yield
    finally:
        _state.enabled = previous


def no_grad():
    """Context in which new results record no graph."""
    return set_grad_enabled(False)


class Tensor:
    """
    n-dimensional value taking part in reverse-mode differentiation.

    Each non-leaf tensor stores its parents and a backward rule that maps the
    output gradient (itself a Tensor) to one gradient per parent. Because those
    rules are written with Tensor operations, gradients can be differentiated
    again (``grad(..., create_graph=True)``).
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None):
        data = np.asarray(data, dtype=dtype)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = ""

    # ------------------------------------------------------------------ basics
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._backward is None

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    # ------------------------------------------------------------- arithmetic
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def backward(self):
        backward(self)


# ---------------------------------------------------------------- plumbing
def as_tensor(value, like=None):
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    array = np.asarray(value)
    if dtype is not None and (
        not np.issubdtype(array.dtype, np.floating) or array.dtype != dtype
    ):
        array = array.astype(dtype)
    return Tensor(array)


def _result(data, parents, backward_fn, op):
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


def _binary(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    b = as_tensor(b)
    return as_tensor(a, b), b


def _needed(parent, compute):
    """Skip gradient work for constant operands."""
    return compute() if parent.requires_grad else None


def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    axes = axis if isinstance(axis, tuple) else (axis,)
    result = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise TensorError(f"axis {ax} out of range for {ndim}-d tensor")
        result.append(ax % ndim)
    return tuple(result)


# ------------------------------------------------------------- elementwise
def add(a, b):
    a, b = _binary(a, b)

    def backward_fn(g):
        return _needed(a, lambda: sum_to(g, a.shape)), _needed(b, lambda: sum_to(g, b.shape))

    return _result(a.data + b.data, (a, b), backward_fn, "add")


def sub(a, b):
    a, b = _binary(a, b)

    def backward_fn(g):
        return _needed(a, lambda: sum_to(g, a.shape)), _needed(b, lambda: sum_to(neg(g), b.shape))

    return _result(a.data - b.data, (a, b), backward_fn, "sub")


def mul(a, b):
    a, b = _binary(a, b)

    def backward_fn(g):
        return _needed(a, lambda: sum_to(g * b, a.shape)), _needed(b, lambda: sum_to(g * a, b.shape))

    return _result(a.data * b.data, (a, b), backward_fn, "mul")


def div(a, b):
    a, b = _binary(a, b)

    def backward_fn(g):
        return (
            _needed(a, lambda: sum_to(g / b, a.shape)),
            _needed(b, lambda: sum_to(neg(g) * a / (b * b), b.shape)),
        )

    return _result(a.data / b.data, (a, b), backward_fn, "div")


def neg(a):
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (neg(g),), "neg")


def power(a, exponent):
    a = as_tensor(a)
    if isinstance(exponent, Tensor):
        raise TensorError("power only supports constant exponents")
    exponent = float(exponent)

    def backward_fn(g):
        return (g * (exponent * power(a, exponent - 1.0)),)

    return _result(a.data**exponent, (a,), backward_fn, "pow")


def exp(a):
    a = as_tensor(a)
    out = _result(np.exp(a.data), (a,), lambda g: (g * out,), "exp")
    return out


def log(a):
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a,), "log")


def sqrt(a):
    a = as_tensor(a)
    out = _result(np.sqrt(a.data), (a,), lambda g: (g * 0.5 / out,), "sqrt")
    return out


def l2_norm(a, axis=None, keepdims=False):
    """Euclidean norm whose gradient is 0 (not NaN) where the norm vanishes."""
    a = as_tensor(a)
    squares = sum_(a * a, axis=axis, keepdims=keepdims)
    vanished = Tensor((squares.data == 0.0).astype(a.dtype))
    return sqrt(squares + vanished) - vanished


# -------------------------------------------------------------- reductions
def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)
    kept_shape = np.sum(a.data, axis=axes, keepdims=True).shape

    def backward_fn(g):
        return (broadcast_to(reshape(g, kept_shape), a.shape),)

    return _result(np.sum(a.data, axis=axes, keepdims=keepdims), (a,), backward_fn, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)
    count = a.size if axes is None else int(np.prod([a.shape[ax] for ax in axes]))
    return sum_(a, axes, keepdims) / float(max(count, 1))


# ------------------------------------------------------------------- shape
def reshape(a, shape):
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise TensorError(f"cannot reshape {a.shape} into {shape}: {e}")
    return _result(data, (a,), lambda g: (reshape(g, a.shape),), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = _normalize_axis(tuple(axes), a.ndim)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (transpose(g, inverse),), "transpose")


def swap_last(a):
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def broadcast_to(a, shape):
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError as e:
        raise TensorError(f"cannot broadcast {a.shape} to {shape}: {e}")
    return _result(data, (a,), lambda g: (sum_to(g, a.shape),), "broadcast_to")


def sum_to(a, shape):
    """Sum a broadcast result back down to ``shape``."""
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    lead = a.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, size in enumerate(shape) if size == 1 and a.shape[lead + i] != 1
    )
    data = np.sum(a.data, axis=axes, keepdims=True).reshape(shape)
    return _result(data, (a,), lambda g: (broadcast_to(g, a.shape),), "sum_to")


def matmul(a, b):
    a, b = _binary(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise TensorError("matmul expects operands with at least two dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise TensorError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward_fn(g):
        return (
            _needed(a, lambda: sum_to(matmul(g, swap_last(b)), a.shape)),
            _needed(b, lambda: sum_to(matmul(swap_last(a), g), b.shape)),
        )

    return _result(np.matmul(a.data, b.data), (a, b), backward_fn, "matmul")


def slice_axis(a, axis, start, stop):
    a = as_tensor(a)
    (axis,) = _normalize_axis(axis, a.ndim)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    before, after = start, a.shape[axis] - stop

    def backward_fn(g):
        return (pad_axis(g, axis, before, after),)

    return _result(a.data[tuple(index)], (a,), backward_fn, "slice")


def pad_axis(a, axis, before, after):
    """Zero-pad one axis."""
    a = as_tensor(a)
    (axis,) = _normalize_axis(axis, a.ndim)
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    size = a.shape[axis]

    def backward_fn(g):
        return (slice_axis(g, axis, before, before + size),)

    return _result(np.pad(a.data, widths), (a,), backward_fn, "pad")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise TensorError("concat needs at least one tensor")
    (axis,) = _normalize_axis(axis, tensors[0].ndim)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise TensorError(f"concat shape mismatch: {e}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward_fn(g):
        return tuple(slice_axis(g, axis, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _result(data, tuple(tensors), backward_fn, "concat")


# ------------------------------------------------------------ convolution
def pair(value):
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def conv_output_size(size, kernel, stride, dilation, padding):
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _window_slices(i, j, geometry):
    (sh, sw), (dh, dw), out_h, out_w = geometry
    hi, wj = i * dh, j * dw
    return (
        slice(None),
        slice(None),
        slice(hi, hi + sh * (out_h - 1) + 1, sh),
        slice(wj, wj + sw * (out_w - 1) + 1, sw),
    )


def im2col(x, kernel, stride=1, dilation=1, padding=0):
    """(N, C, H, W) -> (N, C*kh*kw, Ho*Wo) patch matrix; adjoint of col2im."""
    x = as_tensor(x)
    kh, kw = pair(kernel)
    stride, dilation, (ph, pw) = pair(stride), pair(dilation), pair(padding)
    n, c, h, w = x.shape
    out_h = conv_output_size(h, kh, stride[0], dilation[0], ph)
    out_w = conv_output_size(w, kw, stride[1], dilation[1], pw)
    if out_h < 1 or out_w < 1:
        raise TensorError(f"convolution output would be empty for input {x.shape}")
    geometry = (stride, dilation, out_h, out_w)

    padded = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((n, c, kh, kw, out_h, out_w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = padded[_window_slices(i, j, geometry)]
    cols = cols.reshape(n, c * kh * kw, out_h * out_w)

    def backward_fn(g):
        return (col2im(g, x.shape, (kh, kw), stride, dilation, (ph, pw)),)

    return _result(cols, (x,), backward_fn, "im2col")


def col2im(cols, input_shape, kernel, stride=1, dilation=1, padding=0):
    """Scatter-add a patch matrix back onto an (N, C, H, W) grid."""
    cols = as_tensor(cols)
    kh, kw = pair(kernel)
    stride, dilation, (ph, pw) = pair(stride), pair(dilation), pair(padding)
    n, c, h, w = input_shape
    out_h = conv_output_size(h, kh, stride[0], dilation[0], ph)
    out_w = conv_output_size(w, kw, stride[1], dilation[1], pw)
    geometry = (stride, dilation, out_h, out_w)

    blocks = cols.data.reshape(n, c, kh, kw, out_h, out_w)
    padded = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            padded[_window_slices(i, j, geometry)] += blocks[:, :, i, j]
    image = padded[:, :, ph : ph + h, pw : pw + w]

    def backward_fn(g):
        return (im2col(g, (kh, kw), stride, dilation, (ph, pw)),)

    return _result(np.ascontiguousarray(image), (cols,), backward_fn, "col2im")


# ----------------------------------------------------------------- graph
def _topological_order(root):
    """Post-order over nodes that require grad; each node appears once."""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _propagate(output, seed, create_graph):
    grads = {id(output): seed}
    order = _topological_order(output)
    with set_grad_enabled(create_graph):
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad
    return order, grads


def grad(output, inputs, grad_output=None, create_graph=False):
    """
    Gradients of ``output`` with respect to each tensor in ``inputs``.

    :param output: Tensor to differentiate (scalar unless grad_output is given)
    :param inputs: Sequence of tensors
    :param grad_output: Seed gradient, defaults to ones
    :param create_graph: Record the backward pass so the result is differentiable
    :return: List of Tensors shaped like ``inputs`` (zeros for unreachable inputs)
    """
    if grad_output is None:
        if output.size != 1:
            raise TensorError(f"grad of a non-scalar output {output.shape} needs grad_output")
        grad_output = Tensor(np.ones_like(output.data))
    grad_output = as_tensor(grad_output, output)
    if not output.requires_grad:
        return [Tensor(np.zeros_like(t.data)) for t in inputs]
    _, grads = _propagate(output, grad_output, create_graph)
    result = []
    for tensor in inputs:
        g = grads.get(id(tensor))
        result.append(g if g is not None else Tensor(np.zeros_like(tensor.data)))
    return result


def backward(loss):
    """
    Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires grad.

    :param loss: Scalar tensor
    """
    if loss.size != 1:
        raise TensorError(f"backward requires a scalar loss, got shape {loss.shape}")
    seed = Tensor(np.ones_like(loss.data))
    loss.grad = seed.data.copy()
    if not loss.requires_grad:
        return
    order, grads = _propagate(loss, seed, create_graph=False)
    for node in order:
        if node.is_leaf and node is not loss:
            g = grads.get(id(node))
            if g is None:
                continue
            node.grad = g.data.copy() if node.grad is None else node.grad + g.data
