"""Reverse-mode differentiation over dense numpy arrays.

Every forward operation returns a ``Tensor`` node that remembers its
differentiable inputs and a backward rule. ``backward(loss)`` walks the
recorded graph once in reverse topological order and accumulates
cotangents into each node that requires gradients; ``Parameter`` nodes
keep a persistent gradient buffer across calls.

Conventions baked in here:
  * image layout is channels x height x width, batched as n x c x h x w
  * reductions run in numpy's fixed sequential order, so identical inputs
    give bit-identical outputs
  * ReLU uses subgradient 0 at 0; sigmoid is evaluated in the numerically
    stable split form
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, NonFiniteError, ShapeError

Array = np.ndarray

_grad_enabled = True


def grad_enabled() -> bool:
    return _grad_enabled


class no_grad:
    """Context manager that disables graph recording inside the block."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def assert_finite(data: Array, where: str = "tensor") -> None:
    # one fused reduction, no boolean temporary; any nan/inf poisons the sum
    if data.size and not np.isfinite(float(np.sum(data))):
        raise NonFiniteError(f"non-finite values in {where}")


class Tensor:
    """Dense float array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward: Callable | None = None):
        if isinstance(data, np.ndarray):
            self.data = data
        elif isinstance(data, np.generic):
            # numpy scalar (ufuncs return these for 0-d inputs): keep dtype
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=np.float32)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # small operator sugar used by the loss code
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __neg__(self):
        return scale(self, -1.0)


class Parameter(Tensor):
    """Trainable tensor with a name and a persistent gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, value, name: str):
        arr = np.array(value) if not isinstance(value, np.ndarray) else value
        super().__init__(arr, requires_grad=True)
        assert_finite(self.data, f"parameter {name!r}")
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)


def tensor(data, dtype=np.float32) -> Tensor:
    """Build a leaf tensor from external data, validating finiteness."""
    arr = np.asarray(data, dtype=dtype)
    assert_finite(arr, "input tensor")
    return Tensor(arr)


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _node(data: Array, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if _grad_enabled:
        needing = tuple(p for p in parents if p.requires_grad)
        if needing:
            return Tensor(data, requires_grad=True, _parents=needing, _backward=backward)
    return Tensor(data)


def _accum(t: Tensor, g: Array) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into every gradient-requiring ancestor."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    _accum(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# pointwise and broadcasting ops
# ---------------------------------------------------------------------------

def _broadcast_binary(a: Tensor, b: Tensor, op: str) -> Array:
    try:
        if op == "add":
            return a.data + b.data
        if op == "sub":
            return a.data - b.data
        return a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from exc


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _broadcast_binary(a, b, "add")

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _broadcast_binary(a, b, "sub")

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _node(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _broadcast_binary(a, b, "mul")

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = a.data * c

    def bwd(g):
        _accum(a, g * c)

    return _node(out, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)

    def bwd(g):
        _accum(a, g * (a.data > 0))

    return _node(out, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def bwd(g):
        _accum(a, g * out * (1.0 - out))

    return _node(out, (a,), bwd)


def abs_(a: Tensor) -> Tensor:
    out = np.abs(a.data)

    def bwd(g):
        _accum(a, g * np.sign(a.data))

    return _node(out, (a,), bwd)


def sqrt_(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise ContractError("sqrt of negative values")
    out = np.sqrt(a.data)

    def bwd(g):
        # subgradient 0 where the input is exactly 0 (loss minima live there)
        safe = np.where(out > 0, out, 1.0)
        _accum(a, np.where(out > 0, g / (2.0 * safe), 0.0))

    return _node(out, (a,), bwd)


def sum_(a: Tensor) -> Tensor:
    out = a.data.sum(dtype=a.data.dtype)

    def bwd(g):
        _accum(a, np.broadcast_to(g, a.shape).astype(a.data.dtype) if np.ndim(g) else np.full(a.shape, g, dtype=a.data.dtype))

    return _node(np.asarray(out), (a,), bwd)


def mean_(a: Tensor) -> Tensor:
    n = a.data.size
    out = a.data.sum(dtype=a.data.dtype) / n

    def bwd(g):
        _accum(a, np.full(a.shape, g / n, dtype=a.data.dtype))

    return _node(np.asarray(out), (a,), bwd)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from exc

    def bwd(g):
        _accum(a, g.reshape(a.shape))

    return _node(out, (a,), bwd)


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    """Slice a 1-d tensor; the backward rule zero-pads the cotangent."""
    if a.data.ndim != 1:
        raise ShapeError(f"narrow expects a vector, got shape {a.shape}")
    if start < 0 or start + length > a.data.shape[0]:
        raise ShapeError(f"narrow [{start}:{start + length}] out of bounds for {a.shape}")
    out = a.data[start:start + length].copy()

    def bwd(g):
        full = np.zeros_like(a.data)
        full[start:start + length] = g
        _accum(a, full)

    return _node(out, (a,), bwd)


def rot90_hw(a: Tensor, k: int) -> Tensor:
    """Rotate the last two axes counterclockwise k quarter turns."""
    k = k % 4
    out = np.ascontiguousarray(np.rot90(a.data, k, axes=(-2, -1)))

    def bwd(g):
        _accum(a, np.ascontiguousarray(np.rot90(g, -k, axes=(-2, -1))))

    return _node(out, (a,), bwd)


def flip_w(a: Tensor) -> Tensor:
    """Mirror the last (width) axis."""
    out = np.ascontiguousarray(np.flip(a.data, axis=-1))

    def bwd(g):
        _accum(a, np.ascontiguousarray(np.flip(g, axis=-1)))

    return _node(out, (a,), bwd)


# ---------------------------------------------------------------------------
# neural-network ops
# ---------------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y[j] = sum_k weight[j, k] * x[k] + bias[j] for a flat input vector."""
    xd, wd, bd = x.data, weight.data, bias.data
    if xd.ndim != 1:
        raise ShapeError(f"linear expects a vector input, got {x.shape}")
    if wd.ndim != 2 or wd.shape[1] != xd.shape[0]:
        raise ShapeError(f"linear weight {weight.shape} does not match input {x.shape}")
    if bd.shape != (wd.shape[0],):
        raise ShapeError(f"linear bias {bias.shape} does not match weight {weight.shape}")
    out = wd @ xd + bd

    def bwd(g):
        _accum(weight, np.outer(g, xd))
        _accum(bias, g)
        _accum(x, wd.T @ g)

    return _node(out, (x, weight, bias), bwd)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Standard 2-d convolution with zero padding.

    Accepts (c, h, w) or (n, c, h, w) input; weight is (c_out, c_in, kh, kw).
    Runs as im2col plus one matmul; the backward rule emits cotangents for
    input, weight, and bias.
    """
    xd, wd = x.data, weight.data
    if wd.ndim != 4:
        raise ShapeError(f"conv2d weight must be 4-d, got {weight.shape}")
    batched = xd.ndim == 4
    if not batched and xd.ndim != 3:
        raise ShapeError(f"conv2d input must be 3-d or 4-d, got {x.shape}")
    x4 = xd if batched else xd[None]
    n, c_in, h, w = x4.shape
    c_out, wc_in, kh, kw = wd.shape
    if wc_in != c_in:
        raise ShapeError(f"conv2d: input has {c_in} channels, weight expects {wc_in}")
    if bias is not None and bias.data.shape != (c_out,):
        raise ShapeError(f"conv2d bias {bias.shape} does not match {c_out} output channels")
    if stride < 1 or padding < 0:
        raise ConfigError(f"conv2d: bad stride={stride} or padding={padding}")
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out < 1 or w_out < 1 or (h + 2 * padding) < kh or (w + 2 * padding) < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} too large for input {h}x{w} with padding {padding}")

    xp = np.pad(x4, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x4
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # rows ordered (c, i, j) to match weight.reshape(c_out, -1)
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c_in * kh * kw, h_out * w_out)
    wmat = wd.reshape(c_out, -1)
    y = np.matmul(wmat, cols)
    if bias is not None:
        y = y + bias.data[:, None]
    y = y.reshape(n, c_out, h_out, w_out)
    out = y if batched else y[0]

    def bwd(g):
        g4 = g if batched else g[None]
        gmat = g4.reshape(n, c_out, h_out * w_out)
        if bias is not None and bias.requires_grad:
            _accum(bias, g4.sum(axis=(0, 2, 3)))
        if weight.requires_grad:
            dw = np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0)
            _accum(weight, dw.reshape(wd.shape))
        if x.requires_grad:
            dcols = np.matmul(wmat.T, gmat).reshape(n, c_in, kh, kw, h_out, w_out)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + (h_out - 1) * stride + 1:stride,
                        j:j + (w_out - 1) * stride + 1:stride] += dcols[:, :, i, j]
            dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
            _accum(x, dx if batched else dx[0])

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _node(out, parents, bwd)


def depthwise_conv2d_dynamic(x: Tensor, kernels: Tensor, groups: int) -> Tensor:
    """Depthwise convolution whose kernels are a runtime input.

    ``kernels`` has shape (c, 1, kh, kw) and is typically produced by
    another network, so the backward rule emits a cotangent for it as well
    as for the input. Padding (k-1)/2 keeps the spatial size; channel c of
    the output depends only on channel c of the input.
    """
    xd, kd = x.data, kernels.data
    if xd.ndim != 3:
        raise ShapeError(f"depthwise input must be (c, h, w), got {x.shape}")
    c, h, w = xd.shape
    if kd.ndim != 4 or kd.shape[0] != c or kd.shape[1] != 1:
        raise ShapeError(f"depthwise kernels must be ({c}, 1, kh, kw), got {kernels.shape}")
    if groups != c:
        raise ConfigError(f"depthwise requires groups == channels ({c}), got {groups}")
    kh, kw = kd.shape[2], kd.shape[3]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"depthwise kernel size must be odd, got {kh}x{kw}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(xd, ((0, 0), (ph, ph), (pw, pw))) if (ph or pw) else xd
    k2 = kd[:, 0]
    out = np.zeros(xd.shape, dtype=np.result_type(xd, kd))
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i:i + h, j:j + w] * k2[:, i, j][:, None, None]

    def bwd(g):
        if kernels.requires_grad:
            dk = np.empty_like(k2)
            for i in range(kh):
                for j in range(kw):
                    dk[:, i, j] = (xp[:, i:i + h, j:j + w] * g).sum(axis=(1, 2))
            _accum(kernels, dk[:, None])
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + h, j:j + w] += g * k2[:, i, j][:, None, None]
            dx = dxp[:, ph:ph + h, pw:pw + w] if (ph or pw) else dxp
            _accum(x, dx)

    return _node(out, (x, kernels), bwd)


def instance_norm(x: Tensor, eps: float = 1e-5):
    """Normalize each channel over its spatial extent.

    Uses population (biased) variance with ``eps`` added under the square
    root. Returns ``(normalized, mean, std)``; the statistics come back as
    plain arrays of shape (c,) (or (n, c) for batched input).
    """
    xd = x.data
    if xd.ndim not in (3, 4):
        raise ShapeError(f"instance_norm expects (c, h, w) or (n, c, h, w), got {x.shape}")
    axes = (-2, -1)
    n_px = xd.shape[-2] * xd.shape[-1]
    mu = xd.mean(axis=axes, keepdims=True)
    var = np.mean((xd - mu) ** 2, axis=axes, keepdims=True)
    sd = np.sqrt(var + eps)
    y = (xd - mu) / sd

    def bwd(g):
        gm = g.mean(axis=axes, keepdims=True)
        gy = (g * y).mean(axis=axes, keepdims=True)
        _accum(x, (g - gm - y * gy) / sd)

    out = _node(y, (x,), bwd)
    return out, np.squeeze(mu, axis=axes).copy(), np.squeeze(sd, axis=axes).copy()


def channel_mean(x: Tensor) -> Tensor:
    """Per-channel spatial mean, differentiable, shape (c,) or (n, c)."""
    xd = x.data
    if xd.ndim not in (3, 4):
        raise ShapeError(f"channel_mean expects 3-d or 4-d input, got {x.shape}")
    n_px = xd.shape[-2] * xd.shape[-1]
    out = xd.mean(axis=(-2, -1))

    def bwd(g):
        _accum(x, np.broadcast_to(g[..., None, None] / n_px, xd.shape).astype(xd.dtype).copy())

    return _node(out, (x,), bwd)


def channel_std(x: Tensor, eps: float = 1e-8) -> Tensor:
    """Per-channel population standard deviation, sqrt(var + eps)."""
    xd = x.data
    if xd.ndim not in (3, 4):
        raise ShapeError(f"channel_std expects 3-d or 4-d input, got {x.shape}")
    n_px = xd.shape[-2] * xd.shape[-1]
    mu = xd.mean(axis=(-2, -1), keepdims=True)
    var = np.mean((xd - mu) ** 2, axis=(-2, -1), keepdims=True)
    sd = np.sqrt(var + eps)
    out = np.squeeze(sd, axis=(-2, -1)).copy()

    def bwd(g):
        _accum(x, g[..., None, None] * (xd - mu) / (n_px * sd))

    return _node(out, (x,), bwd)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; cotangents route to the argmax."""
    xd = x.data
    if xd.ndim < 2:
        raise ShapeError(f"maxpool2 expects spatial input, got {x.shape}")
    h, w = xd.shape[-2], xd.shape[-1]
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    lead = xd.shape[:-2]
    ho, wo = h // 2, w // 2
    win = xd.reshape(lead + (ho, 2, wo, 2))
    win = np.swapaxes(win, -3, -2).reshape(lead + (ho, wo, 4))
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def bwd(g):
        flat = np.zeros(lead + (ho, wo, 4), dtype=g.dtype)
        np.put_along_axis(flat, idx[..., None], g[..., None], axis=-1)
        dx = np.swapaxes(flat.reshape(lead + (ho, wo, 2, 2)), -3, -2)
        _accum(x, dx.reshape(xd.shape))

    return _node(np.ascontiguousarray(out), (x,), bwd)


def nearest_up2(x: Tensor) -> Tensor:
    """Nearest-neighbor upsampling by 2 in both spatial dims."""
    xd = x.data
    if xd.ndim < 2:
        raise ShapeError(f"nearest_up2 expects spatial input, got {x.shape}")
    out = xd.repeat(2, axis=-2).repeat(2, axis=-1)

    def bwd(g):
        lead = xd.shape[:-2]
        h, w = xd.shape[-2], xd.shape[-1]
        _accum(x, g.reshape(lead + (h, 2, w, 2)).sum(axis=(-3, -1)))

    return _node(out, (x,), bwd)


def resample(x: Tensor, kind: str) -> Tensor:
    """Dispatch helper: kind is 'nearest_up2' or 'maxpool2'."""
    if kind == "nearest_up2":
        return nearest_up2(x)
    if kind == "maxpool2":
        return maxpool2(x)
    raise ConfigError(f"unknown resample kind {kind!r}")


def add_n(terms: Iterable[Tensor]) -> Tensor:
    """Sum a non-empty sequence of same-shape tensors."""
    terms = list(terms)
    if not terms:
        raise ContractError("add_n of empty sequence")
    acc = terms[0]
    for t in terms[1:]:
        acc = add(acc, t)
    return acc
