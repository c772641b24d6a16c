"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every differentiable operation returns a new :class:`Tensor` that remembers
its inputs and a closure computing the local vector-Jacobian product.
Calling ``backward()`` on a scalar result walks the recorded graph in
reverse topological order and accumulates gradients into every tensor
created with ``requires_grad=True``.

Two float precisions are supported: float32 (training, evaluation) and
float64 (gradient checking). The dtype of an operation's result follows
numpy promotion of its inputs.
"""

import numpy as np

from .errors import ShapeError, UsageError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """An n-dimensional array with optional gradient tracking.

    Attributes:
        data: the numpy value (float32 or float64).
        grad: accumulated gradient of the same shape, or None before any
            backward pass has reached this tensor.
        requires_grad: whether backward() should deposit a gradient here.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, _op="leaf"):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = tuple(_parents)
        self._backward = _backward if self.requires_grad else None
        self._op = _op

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

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A view of the same data outside the graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar, got shape {self.shape}")
        graph = Graph.trace(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(graph.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, op={self._op!r})"

    # Operator sugar. Scalars are coerced to this tensor's dtype so that
    # float32 graphs stay float32.
    def __add__(self, other):
        return add(self, _coerce(other, self.dtype))

    __radd__ = __add__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_coerce(other, self.dtype)))

    def __rsub__(self, other):
        return add(_coerce(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, _coerce(other, self.dtype))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return mul(self, Tensor(np.asarray(1.0 / float(scalar), dtype=self.dtype)))

    def __matmul__(self, other):
        return matmul(self, other)


class Graph:
    """Topologically ordered record of the operations behind one result.

    ``nodes`` lists every tensor reachable from the root, parents before
    children, so a reverse sweep visits each operation after all of its
    consumers.
    """

    __slots__ = ("nodes",)

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)


def _coerce(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape of a broadcast operand."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def _bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return Tensor(out_data, _parents=(a, b), _backward=_bw, _op="add")


def neg(a: Tensor) -> Tensor:
    def _bw(g):
        _accumulate(a, -g)

    return Tensor(-a.data, _parents=(a,), _backward=_bw, _op="neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def _bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return Tensor(out_data, _parents=(a, b), _backward=_bw, _op="mul")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, batched over leading axes like numpy.matmul.

    Backward accumulates g @ b^T into a and a^T @ g into b, summing over
    broadcast batch axes.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def _bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return Tensor(out_data, _parents=(a, b), _backward=_bw, _op="matmul")


def fc(x: Tensor, weight: Tensor, bias: Tensor = None) -> Tensor:
    """Fully connected layer y = W x (+ b) with W of shape (out, in).

    A 1-d input gives a 1-d output; a 2-d input is treated as a stack of
    row vectors, one per sample.
    """
    if weight.ndim != 2:
        raise ShapeError(f"fc weight must be a matrix, got {weight.shape}")
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"fc input width {x.shape} does not match weight {weight.shape}")
    if x.ndim == 1:
        out_data = weight.data @ x.data
    elif x.ndim == 2:
        out_data = x.data @ weight.data.T
    else:
        raise ShapeError(f"fc input must be 1-d or 2-d, got {x.shape}")
    if bias is not None:
        out_data = out_data + bias.data

    def _bw(g):
        if x.ndim == 1:
            if weight.requires_grad:
                _accumulate(weight, np.outer(g, x.data))
            if x.requires_grad:
                _accumulate(x, weight.data.T @ g)
            if bias is not None:
                _accumulate(bias, g)
        else:
            if weight.requires_grad:
                _accumulate(weight, g.T @ x.data)
            if x.requires_grad:
                _accumulate(x, g @ weight.data)
            if bias is not None:
                _accumulate(bias, g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor(out_data, _parents=parents, _backward=_bw, _op="fc")


# ---------------------------------------------------------------------------
# convolution and pooling


def _same_padding(k: int) -> tuple:
    # total k-1; the extra row/column of an even kernel goes to the top/left
    return (k // 2, (k - 1) // 2)


def _im2col(xpad_t: np.ndarray, kh: int, kw: int, out_h: int, out_w: int) -> np.ndarray:
    """(C, N, Hp, Wp) -> (C*kh*kw, N*out_h*out_w) patch matrix."""
    c, n = xpad_t.shape[:2]
    cols = np.empty((c, kh, kw, n, out_h, out_w), dtype=xpad_t.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xpad_t[:, :, i : i + out_h, j : j + out_w]
    return cols.reshape(c * kh * kw, n * out_h * out_w)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """2-d cross-correlation with stride 1 and "same" zero padding.

    x: (Cin, H, W) or batched (N, Cin, H, W); kernels: (Cout, Cin, kh, kw);
    bias: (Cout,). Output spatial size equals input spatial size. Even
    kernels pad one extra row/column on the top/left.
    """
    if kernels.ndim != 4:
        raise ShapeError(f"conv2d kernels must be 4-d, got {kernels.shape}")
    if x.ndim not in (3, 4):
        raise ShapeError(f"conv2d input must be (Cin,H,W) or (N,Cin,H,W), got {x.shape}")
    batched = x.ndim == 4
    xd = x.data if batched else x.data[None]
    n, cin, h, w = xd.shape
    cout, ck, kh, kw = kernels.shape
    if ck != cin:
        raise ShapeError(f"conv2d channels disagree: input {x.shape} vs kernels {kernels.shape}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d bias must be ({cout},), got {bias.shape}")
    if kh < 1 or kw < 1 or h < 1 or w < 1:
        raise ShapeError(f"conv2d kernel {kernels.shape} does not fit padded input {x.shape}")
    pt, pb = _same_padding(kh)
    pl, pr = _same_padding(kw)
    # channel-major copies let both passes run as single flat matmuls
    xpad_t = np.ascontiguousarray(
        np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr))).transpose(1, 0, 2, 3)
    )
    cols = _im2col(xpad_t, kh, kw, h, w)  # (Cin*kh*kw, N*h*w)
    kmat = kernels.data.reshape(cout, cin * kh * kw)
    out = (kmat @ cols + bias.data[:, None]).reshape(cout, n, h, w).transpose(1, 0, 2, 3)
    out_data = out if batched else out[0]

    def _bw(g):
        g4 = g if batched else g[None]
        g2 = np.ascontiguousarray(g4.transpose(1, 0, 2, 3)).reshape(cout, n * h * w)
        _accumulate(bias, g2.sum(axis=1))
        if kernels.requires_grad:
            _accumulate(kernels, (g2 @ cols.T).reshape(cout, cin, kh, kw))
        if x.requires_grad:
            gcols = (kmat.T @ g2).reshape(cin, kh, kw, n, h, w)
            gxpad_t = np.zeros_like(xpad_t)
            for i in range(kh):
                for j in range(kw):
                    gxpad_t[:, :, i : i + h, j : j + w] += gcols[:, i, j]
            gx = gxpad_t.transpose(1, 0, 2, 3)[:, :, pt : pt + h, pl : pl + w]
            _accumulate(x, gx if batched else gx[0])

    return Tensor(out_data, _parents=(x, kernels, bias), _backward=_bw, _op="conv2d")


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; a trailing odd row/column is dropped.

    The gradient flows to the first (row-major) maximum of each window.
    """
    if x.ndim not in (3, 4):
        raise ShapeError(f"maxpool2 input must be (C,H,W) or (N,C,H,W), got {x.shape}")
    batched = x.ndim == 4
    xd = x.data if batched else x.data[None]
    n, c, h, w = xd.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2 needs spatial size >= 2, got {x.shape}")
    h2, w2 = h // 2, w // 2
    windows = (
        xd[:, :, : 2 * h2, : 2 * w2]
        .reshape(n, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2, w2, 4)
    )
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    out_data = out if batched else out[0]

    def _bw(g):
        g4 = g if batched else g[None]
        gwin = np.zeros_like(windows)
        np.put_along_axis(gwin, idx[..., None], g4[..., None], axis=-1)
        gx = np.zeros_like(xd)
        gx[:, :, : 2 * h2, : 2 * w2] = (
            gwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
        )
        _accumulate(x, gx if batched else gx[0])

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="maxpool2")


# ---------------------------------------------------------------------------
# activations


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    out_data = np.maximum(x.data, 0)

    def _bw(g):
        _accumulate(x, g * (x.data > 0))

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="relu")


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def _bw(g):
        _accumulate(x, g * (1 - out_data * out_data))

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="tanh")


def sigmoid(x: Tensor) -> Tensor:
    out_data = _sigmoid(x.data)

    def _bw(g):
        _accumulate(x, g * out_data * (1 - out_data))

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="sigmoid")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # evaluate on the safe side of the exponential to avoid overflow
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the last axis, independently per row."""
    if x.ndim < 2:
        raise ShapeError(f"softmax_rows needs at least 2 dimensions, got {x.shape}")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        _accumulate(x, out_data * (g - dot))

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="softmax_rows")


def log(x: Tensor) -> Tensor:
    out_data = np.log(x.data)

    def _bw(g):
        _accumulate(x, g / x.data)

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="log")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only where x was inside the range."""
    out_data = np.clip(x.data, lo, hi)

    def _bw(g):
        _accumulate(x, g * ((x.data >= lo) & (x.data <= hi)))

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="clip")


# ---------------------------------------------------------------------------
# shape manipulation


def concat(parts, axis: int = -1) -> Tensor:
    """Concatenate tensors along an existing axis."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat needs at least one part")
    try:
        out_data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat shapes disagree: {[p.shape for p in parts]}") from exc
    ax = axis if axis >= 0 else out_data.ndim + axis
    offsets = np.cumsum([p.shape[ax] for p in parts])[:-1]

    def _bw(g):
        for part, piece in zip(parts, np.split(g, offsets, axis=ax)):
            _accumulate(part, piece)

    return Tensor(out_data, _parents=tuple(parts), _backward=_bw, _op="concat")


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def _bw(g):
        _accumulate(x, g.reshape(x.shape))

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="reshape")


def swap_last_axes(x: Tensor) -> Tensor:
    """Transpose the last two axes (matrix transpose, batched)."""
    out_data = np.swapaxes(x.data, -1, -2)

    def _bw(g):
        _accumulate(x, np.swapaxes(g, -1, -2))

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="swap_last_axes")


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Rows [start, stop) along the first axis."""
    out_data = x.data[start:stop]

    def _bw(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        _accumulate(x, gx)

    return Tensor(out_data, _parents=(x,), _backward=_bw, _op="slice_rows")


# ---------------------------------------------------------------------------
# reductions


def sum_all(x: Tensor) -> Tensor:
    def _bw(g):
        _accumulate(x, np.broadcast_to(g, x.shape).copy())

    return Tensor(np.asarray(x.data.sum(), dtype=x.dtype), _parents=(x,), _backward=_bw, _op="sum")


def mean_all(x: Tensor) -> Tensor:
    scale = 1.0 / x.size

    def _bw(g):
        _accumulate(x, np.broadcast_to(g * scale, x.shape).astype(x.dtype, copy=True))

    return Tensor(np.asarray(x.data.mean(), dtype=x.dtype), _parents=(x,), _backward=_bw, _op="mean")
