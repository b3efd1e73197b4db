"""Dense float64 tensors with reverse-mode automatic differentiation.

The engine keeps a dynamic graph: every operation records its inputs and a
closure that routes the output gradient back to them.  Values are 64-bit
floats throughout so finite-difference verification is meaningful.

Broadcasting in binary operations is deliberately narrow: equal shapes,
scalars, numpy-style size-1 axes (as produced by keepdims reductions), and
the per-channel convention that a 1-d vector of length C combines with a
B×C×H×W map along the channel axis.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


_DIV_GUARD = 1e-30


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


class Tensor:
    """A dense float64 array plus an optional gradient buffer.

    Tensors produced by operations hold references to their inputs and a
    backward closure; calling :func:`backward` on a scalar loss fills the
    ``grad`` buffer of every reachable tensor with ``requires_grad`` set.
    Data is treated as immutable once created (the optimizer mutates
    parameter data between graphs, never inside one).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        grad = "grad" if self.requires_grad else "no-grad"
        return f"Tensor(shape={self.shape}, {grad})"

    # -- gradient plumbing ----------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """A view of the same data severed from the graph."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward = None
        return out

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def relu(self):
        return relu(self)


class Parameter:
    """A named leaf tensor that always tracks gradients."""

    __slots__ = ("tensor", "name")

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(data, requires_grad=True)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, values) -> None:
        arr = _as_array(values)
        if arr.shape != self.tensor.data.shape:
            raise ShapeError(
                f"parameter {self.name}: cannot assign shape {arr.shape} "
                f"over {self.tensor.data.shape}"
            )
        self.tensor.data = arr

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.data.shape

    @property
    def size(self) -> int:
        return self.tensor.data.size

    def zero_grad(self) -> None:
        self.tensor.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


# ---------------------------------------------------------------------------
# graph construction helpers


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(out_data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(out_data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        # own the buffer: the same array object may be routed to two parents
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _channel_view(x: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Reshape a length-C vector to 1×C×1×1 when paired with a B×C×H×W map."""
    if x.ndim == 1 and other.ndim == 4 and x.shape[0] == other.shape[1]:
        return x.reshape(1, -1, 1, 1)
    return x


def _check_broadcast(a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"operands are not broadcast-compatible: {a.shape} vs {b.shape}"
        ) from None


def _binary(a, b, forward, grad_a, grad_b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    av = _channel_view(a.data, b.data)
    bv = _channel_view(b.data, a.data)
    _check_broadcast(av, bv)
    out_data = forward(av, bv)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            _accum(a, _unbroadcast(grad_a(g, av, bv), av.shape).reshape(a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(grad_b(g, av, bv), bv.shape).reshape(b.shape))

    return _make(out_data, (a, b), backward)


# ---------------------------------------------------------------------------
# elementwise operations


def add(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary(
        a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x
    )


def div(a, b) -> Tensor:
    b = _as_tensor(b)
    if np.abs(b.data).min() < _DIV_GUARD:
        raise ZeroDivisionError(
            f"division by a value with magnitude below {_DIV_GUARD:g}"
        )
    return _binary(
        a,
        b,
        lambda x, y: x / y,
        lambda g, x, y: g / y,
        lambda g, x, y: -g * x / (y * y),
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: _accum(a, -g))


def scale(a, factor: float) -> Tensor:
    """Multiply by a plain Python scalar without creating a constant node."""
    a = _as_tensor(a)
    factor = float(factor)
    return _make(a.data * factor, (a,), lambda g: _accum(a, g * factor))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: _accum(a, g * mask))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out_data = np.exp(a.data)
    return _make(out_data, (a,), lambda g: _accum(a, g * out_data))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.min() <= 0.0:
        raise ValueError("log requires strictly positive inputs")
    return _make(np.log(a.data), (a,), lambda g: _accum(a, g / a.data))


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.min() < 0.0:
        raise ValueError("sqrt requires non-negative inputs")
    out_data = np.sqrt(a.data)
    return _make(out_data, (a,), lambda g: _accum(a, g * (0.5 / out_data)))


def softplus(a) -> Tensor:
    """log(1 + exp(x)), computed without overflow; gradient is sigmoid(x)."""
    a = _as_tensor(a)
    out_data = np.logaddexp(0.0, a.data)
    sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out_data, (a,), lambda g: _accum(a, g * sig))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "relu": relu,
    "scale": scale,
}


def elementwise(op: str, a, b=None) -> Tensor:
    """Dispatch an elementwise operation by name (add/sub/mul/div/relu/scale)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(a) if op == "relu" else fn(a, b)


# ---------------------------------------------------------------------------
# reductions and reshaping


def _norm_axes(axis, ndim: int):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out_data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> None:
        gg = g
        if not keepdims:
            for ax in sorted(axes):
                gg = np.expand_dims(gg, ax)
        _accum(a, np.broadcast_to(gg, a.shape))

    return _make(out_data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if a.ndim else 1
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out_data = a.data.reshape(shape)
    return _make(out_data, (a,), lambda g: _accum(a, g.reshape(a.shape)))


def transpose(a, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(
        np.transpose(a.data, axes), (a,), lambda g: _accum(a, np.transpose(g, inverse))
    )


def concat(tensors, axis: int) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> None:
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            _accum(t, piece)

    return _make(out_data, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs at least 2-d operands")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(
            f"matmul batch dimensions differ: {a.shape[:-2]} vs {b.shape[:-2]}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.shape} @ {b.shape}"
        )
    out_data = np.matmul(a.data, b.data)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            _accum(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            _accum(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _make(out_data, (a, b), backward)


def softmax(a, axis: int) -> Tensor:
    """Numerically stable softmax along ``axis``; rows sum to one."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> None:
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(a, out_data * (g - inner))

    return _make(out_data, (a,), backward)


def log_softmax(a, axis: int) -> Tensor:
    a = _as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def backward(g: np.ndarray) -> None:
        _accum(a, g - np.exp(out_data) * g.sum(axis=axis, keepdims=True))

    return _make(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# convolution


def _conv_out_size(n: int, k: int, stride: int, padding: int) -> int:
    span = n + 2 * padding - k
    if span < 0:
        raise ShapeError(
            f"kernel size {k} exceeds padded input extent {n + 2 * padding}"
        )
    return span // stride + 1


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0,
           groups: int = 1) -> Tensor:
    """Cross-correlation of a B×C×H×W input with an O×(C/groups)×kh×kw kernel.

    Zero padding only; reflect padding composes via :func:`pad_reflect`.
    Supported groupings are 1 (dense) and C (depthwise).
    """
    x = _as_tensor(x)
    weight = _as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(
            f"conv2d expects 4-d input and weight, got {x.shape} and {weight.shape}"
        )
    batch, in_ch, h, w = x.shape
    out_ch, wc, kh, kw = weight.shape
    if stride < 1 or padding < 0:
        raise ShapeError("stride must be >= 1 and padding >= 0")
    if groups == 1:
        if wc != in_ch:
            raise ShapeError(
                f"weight expects {wc} input channels, input has {in_ch}"
            )
    elif groups == in_ch:
        if wc != 1 or out_ch != in_ch:
            raise ShapeError(
                "depthwise conv needs weight shaped C×1×kh×kw matching input channels"
            )
    else:
        raise ShapeError(f"unsupported group count {groups} for {in_ch} channels")
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (out_ch,):
            raise ShapeError(f"bias shape {bias.shape} != ({out_ch},)")

    oh = _conv_out_size(h, kh, stride, padding)
    ow = _conv_out_size(w, kw, stride, padding)
    xp = (
        np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        if padding
        else x.data
    )

    if groups == 1:
        # im2col: one GEMM for the whole map
        cols = np.empty((batch, oh, ow, in_ch, kh, kw), dtype=np.float64)
        for i in range(kh):
            for j in range(kw):
                block = xp[:, :, i : i + stride * oh : stride,
                           j : j + stride * ow : stride]
                cols[:, :, :, :, i, j] = block.transpose(0, 2, 3, 1)
        cols2 = cols.reshape(batch * oh * ow, in_ch * kh * kw)
        wmat = weight.data.reshape(out_ch, in_ch * kh * kw)
        out_data = (cols2 @ wmat.T).reshape(batch, oh, ow, out_ch)
        out_data = out_data.transpose(0, 3, 1, 2)
    else:
        out_data = np.zeros((batch, out_ch, oh, ow), dtype=np.float64)
        for i in range(kh):
            for j in range(kw):
                block = xp[:, :, i : i + stride * oh : stride,
                           j : j + stride * ow : stride]
                out_data += block * weight.data[None, :, 0, i, j, None, None]
        cols2 = None

    if bias is not None:
        out_data = out_data + bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g: np.ndarray) -> None:
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2, 3)))
        if groups == 1:
            gmat = g.transpose(0, 2, 3, 1).reshape(batch * oh * ow, out_ch)
            if weight.requires_grad:
                dw = gmat.T @ cols2
                _accum(weight, dw.reshape(weight.shape))
            if x.requires_grad:
                dcols = (gmat @ weight.data.reshape(out_ch, -1)).reshape(
                    batch, oh, ow, in_ch, kh, kw
                )
                dxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, :, i : i + stride * oh : stride,
                            j : j + stride * ow : stride] += dcols[
                            :, :, :, :, i, j
                        ].transpose(0, 3, 1, 2)
                _accum(x, dxp[:, :, padding : padding + h, padding : padding + w]
                       if padding else dxp)
        else:
            if weight.requires_grad:
                dw = np.zeros_like(weight.data)
                for i in range(kh):
                    for j in range(kw):
                        block = xp[:, :, i : i + stride * oh : stride,
                                   j : j + stride * ow : stride]
                        dw[:, 0, i, j] = (g * block).sum(axis=(0, 2, 3))
                _accum(weight, dw)
            if x.requires_grad:
                dxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, :, i : i + stride * oh : stride,
                            j : j + stride * ow : stride] += (
                            g * weight.data[None, :, 0, i, j, None, None]
                        )
                _accum(x, dxp[:, :, padding : padding + h, padding : padding + w]
                       if padding else dxp)

    return _make(out_data, parents, backward)


def pad_reflect(x, pad: int) -> Tensor:
    """Reflect-pad the two spatial axes of a B×C×H×W tensor."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"pad_reflect expects a 4-d tensor, got {x.shape}")
    if pad == 0:
        return x
    batch, ch, h, w = x.shape
    if pad >= h or pad >= w:
        raise ShapeError(f"reflect pad {pad} too large for spatial dims {h}x{w}")
    out_data = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                      mode="reflect")
    idx = np.pad(np.arange(h * w).reshape(h, w), pad, mode="reflect").ravel()

    def backward(g: np.ndarray) -> None:
        dx = np.zeros((batch * ch, h * w), dtype=np.float64)
        np.add.at(dx, (slice(None), idx), g.reshape(batch * ch, -1))
        _accum(x, dx.reshape(x.shape))

    return _make(out_data, (x,), backward)


# ---------------------------------------------------------------------------
# resampling


def _bilinear_grid(n_in: int, n_out: int):
    if n_in == 1 or n_out == 1:
        lo = np.zeros(n_out, dtype=np.intp)
        return lo, lo.copy(), np.ones(n_out), np.zeros(n_out)
    src = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.floor(src).astype(np.intp)
    lo = np.minimum(lo, n_in - 2)
    frac = src - lo
    return lo, lo + 1, 1.0 - frac, frac


def upsample(x, factor: int, mode: str = "nearest") -> Tensor:
    """Scale the spatial dims of a B×C×H×W tensor by an integer factor.

    ``nearest`` replicates values; ``bilinear`` interpolates with corner
    alignment (the endpoints of each axis map onto one another exactly).
    """
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"upsample expects a 4-d tensor, got {x.shape}")
    if factor < 1:
        raise ShapeError("upsample factor must be >= 1")
    if factor == 1:
        return x
    batch, ch, h, w = x.shape

    if mode == "nearest":
        out_data = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

        def backward(g: np.ndarray) -> None:
            gg = g.reshape(batch, ch, h, factor, w, factor).sum(axis=(3, 5))
            _accum(x, gg)

        return _make(out_data, (x,), backward)

    if mode != "bilinear":
        raise ValueError(f"unknown upsample mode {mode!r}")

    i0, i1, wi0, wi1 = _bilinear_grid(h, h * factor)
    j0, j1, wj0, wj1 = _bilinear_grid(w, w * factor)
    corners = (
        (i0, j0, np.outer(wi0, wj0)),
        (i0, j1, np.outer(wi0, wj1)),
        (i1, j0, np.outer(wi1, wj0)),
        (i1, j1, np.outer(wi1, wj1)),
    )
    out_data = np.zeros((batch, ch, h * factor, w * factor), dtype=np.float64)
    for ii, jj, ww in corners:
        out_data += ww * x.data[:, :, ii[:, None], jj[None, :]]

    def backward(g: np.ndarray) -> None:
        dx = np.zeros_like(x.data)
        for ii, jj, ww in corners:
            np.add.at(dx, (slice(None), slice(None), ii[:, None], jj[None, :]),
                      g * ww)
        _accum(x, dx)

    return _make(out_data, (x,), backward)


# ---------------------------------------------------------------------------
# 2x2 block access (wavelet support)


def pick2x2(x, row_offset: int, col_offset: int) -> Tensor:
    """Select every second pixel starting at the given offsets (0 or 1)."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"pick2x2 expects a 4-d tensor, got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"pick2x2 needs even spatial dims, got {x.shape}")
    out_data = x.data[:, :, row_offset::2, col_offset::2].copy()

    def backward(g: np.ndarray) -> None:
        dx = np.zeros_like(x.data)
        dx[:, :, row_offset::2, col_offset::2] = g
        _accum(x, dx)

    return _make(out_data, (x,), backward)


def assemble2x2(top_left, top_right, bottom_left, bottom_right) -> Tensor:
    """Interleave four equally shaped maps back into 2x2 pixel blocks."""
    parts = [_as_tensor(t) for t in
             (top_left, top_right, bottom_left, bottom_right)]
    shape = parts[0].shape
    if any(p.shape != shape for p in parts):
        raise ShapeError("assemble2x2 needs four identically shaped maps")
    batch, ch, h, w = shape
    out_data = np.empty((batch, ch, 2 * h, 2 * w), dtype=np.float64)
    slots = ((0, 0), (0, 1), (1, 0), (1, 1))
    for part, (oi, oj) in zip(parts, slots):
        out_data[:, :, oi::2, oj::2] = part.data

    def backward(g: np.ndarray) -> None:
        for part, (oi, oj) in zip(parts, slots):
            _accum(part, g[:, :, oi::2, oj::2])

    return _make(out_data, tuple(parts), backward)


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor) -> None:
    """Populate gradients of every tensor reachable from a scalar loss.

    Repeated calls without clearing gradients accumulate, matching the
    usual minibatch convention.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("backward called on a non-finite loss")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    # interior grads are transient per pass; only leaves accumulate across calls
    for node in topo:
        if node._backward is not None:
            node.grad = None
    if loss._backward is None:
        _accum(loss, np.ones_like(loss.data))
    else:
        loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _clear_graph_grads(loss: Tensor) -> None:
    stack = [loss]
    seen: set[int] = set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        node.grad = None
        stack.extend(node._parents)


def grad_check(fn, inputs, step: float = 1e-5, sample: int | None = None,
               seed: int = 0, floor: float = 1e-3) -> dict:
    """Compare analytic gradients of ``fn(*inputs)`` with central differences.

    Error per coordinate is |analytic - numeric| / max(|analytic|, |numeric|,
    floor); the floor keeps near-zero gradients from inflating the ratio.
    When ``sample`` is given, at most that many coordinates per input are
    probed (seeded), keeping large-model checks affordable.
    """
    inputs = list(inputs)
    for t in inputs:
        if not isinstance(t, Tensor):
            raise TypeError("grad_check inputs must be Tensors")
        t.requires_grad = True
        t.zero_grad()

    loss = fn(*inputs)
    backward(loss)
    analytic = [None if t.grad is None else t.grad.copy() for t in inputs]
    _clear_graph_grads(loss)
    for t in inputs:  # numeric phase needs no graph recording
        t.requires_grad = False

    rng = np.random.default_rng(seed)
    max_err = 0.0
    checked = 0
    worst = None
    for idx, t in enumerate(inputs):
        grad = analytic[idx]
        if grad is None:
            grad = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if sample is not None and flat.size > sample:
            coords = rng.choice(flat.size, size=sample, replace=False)
        for c in coords:
            original = flat[c]
            flat[c] = original + step
            hi = fn(*inputs).item()
            flat[c] = original - step
            lo = fn(*inputs).item()
            flat[c] = original
            numeric = (hi - lo) / (2.0 * step)
            a = grad.reshape(-1)[c]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            checked += 1
            if err > max_err:
                max_err = err
                worst = {"input": idx, "coord": int(c),
                         "analytic": float(a), "numeric": float(numeric)}
    for t in inputs:
        t.requires_grad = True
    return {"max_rel_err": max_err, "checked": checked, "worst": worst}
