"""Minimal tape-based reverse-mode autodiff over float64 numpy arrays.

Every op records its parents and a closure that maps the output gradient
to parent gradients. ``Tensor.backward`` walks the graph in reverse
topological order. Any op that produces a NaN or infinity raises
``NumericError`` immediately, naming the op.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from quadvuln.errors import NumericError

Backward = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple[Tensor, ...] = (),
        _backward: Backward | None = None,
    ) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.name = name
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if not np.isfinite(pg).all():
                    raise NumericError(f"non-finite gradient flowing into {parent.name or 'intermediate'}")
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other) -> Tensor:
        return add(self, other)

    def __mul__(self, other) -> Tensor:
        return mul(self, other)

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, data: np.ndarray, parents: tuple[Tensor, ...], backward: Backward) -> Tensor:
    if not np.isfinite(data).all():
        raise NumericError(f"{op} produced a non-finite value")
    return Tensor(data, _parents=parents, _backward=backward)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise --------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    on = a.data > 0
    return _make("relu", np.where(on, a.data, 0.0), (a,), lambda g: (g * on,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


# -- linear algebra and shape ops -----------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if a.data.ndim > 2 and b.data.ndim == 2:
                # shared weight: contract batch and row axes in one BLAS call
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _make("matmul", a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    return _make("transpose", np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def take(a: Tensor, index) -> Tensor:
    """Basic (slice) indexing; gradient scatters back into zeros."""

    def backward(g: np.ndarray):
        out = np.zeros_like(a.data)
        out[index] = g
        return (out,)

    return _make("take", a.data[index], (a,), backward)


def permute_rows(a: Tensor, order: np.ndarray) -> Tensor:
    """out[..., i, :] = a[..., order[..., i], :] for a permutation ``order``."""
    index = order[..., None]
    inverse = np.argsort(order, axis=-1)[..., None]
    return _make(
        "permute_rows",
        np.take_along_axis(a.data, index, axis=-2),
        (a,),
        lambda g: (np.take_along_axis(g, inverse, axis=-2),),
    )


def pad_axis(a: Tensor, axis: int, total: int) -> Tensor:
    """Zero-pad ``axis`` at the end up to length ``total``."""
    extra = total - a.shape[axis]
    if extra < 0:
        raise ValueError(f"cannot pad axis of length {a.shape[axis]} to {total}")
    if extra == 0:
        return a
    widths = [(0, 0)] * a.data.ndim
    widths[axis] = (0, extra)
    keep = [slice(None)] * a.data.ndim
    keep[axis] = slice(0, a.shape[axis])
    keep = tuple(keep)
    return _make("pad", np.pad(a.data, widths), (a,), lambda g: (g[keep],))


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def backward(g: np.ndarray):
        out = []
        for i in range(len(parts)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(sl)])
        return out

    return _make("concat", np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _make("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def mean(a: Tensor, axis) -> Tensor:
    axes = axis if isinstance(axis, tuple) else (axis,)
    count = int(np.prod([a.shape[ax] for ax in axes]))

    def backward(g: np.ndarray):
        g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape) / count,)

    return _make("mean", a.data.mean(axis=axes), (a,), backward)


# -- model-specific ops ---------------------------------------------------------


def masked_softmax(scores: Tensor, key_mask: np.ndarray | None) -> Tensor:
    """Softmax over the last axis; masked keys get exactly zero weight.

    Rows whose keys are all masked come out as all zeros.
    """
    x = scores.data
    if key_mask is not None:
        key_mask = np.broadcast_to(key_mask, x.shape)
        x = np.where(key_mask, x, -np.inf)
    peak = x.max(axis=-1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    e = np.exp(x - peak)
    denom = e.sum(axis=-1, keepdims=True)
    out = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)

    def backward(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make("softmax", out, (scores,), backward)


def gather_rows(table: Tensor, ids: np.ndarray, mask: np.ndarray) -> Tensor:
    """Embedding lookup: out[..., t, :] = table[ids[..., t]] where mask, else 0."""
    m = mask[..., None].astype(np.float64)
    out = table.data[ids] * m

    def backward(g: np.ndarray):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids[mask], g[mask])
        return (gt,)

    return _make("gather", out, (table,), backward)


def conv2d_valid(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Single-channel valid cross-correlation with C kernels.

    x: (B, H, W), kernels: (C, kh, kw), bias: (C,) -> (B, H-kh+1, W-kw+1, C)
    """
    c, kh, kw = kernels.shape
    b, h, w = x.shape
    if kh > h or kw > w:
        raise ValueError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    oh, ow = h - kh + 1, w - kw + 1
    windows = sliding_window_view(x.data, (kh, kw), axis=(1, 2))  # (B, oh, ow, kh, kw)
    out = np.tensordot(windows, kernels.data, axes=([3, 4], [1, 2])) + bias.data

    def backward(g: np.ndarray):
        gk = np.tensordot(g, windows, axes=([0, 1, 2], [0, 1, 2])) if kernels.requires_grad else None
        gb = g.sum(axis=(0, 1, 2)) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    gx[:, i : i + oh, j : j + ow] += g @ kernels.data[:, i, j]
        return gx, gk, gb

    return _make("conv2d", out, (x, kernels, bias), backward)


def _live_segments(zero_rows: np.ndarray, kh: int) -> list[tuple[int, int]]:
    """Contiguous output-row ranges whose kh-row window touches a non-zero row."""
    oh = zero_rows.size - kh + 1
    touched = np.convolve(~zero_rows, np.ones(kh, dtype=int), mode="valid")[:oh] > 0
    segments, start = [], None
    for r, live in enumerate(touched):
        if live and start is None:
            start = r
        elif not live and start is not None:
            segments.append((start, r))
            start = None
    if start is not None:
        segments.append((start, oh))
    return segments


def conv_relu_mean(x: Tensor, kernels: Tensor, bias: Tensor, zero_rows: np.ndarray | None = None) -> Tensor:
    """mean over positions of relu(conv2d_valid(x)), shape (B, C).

    ``zero_rows`` (length H) flags input rows that are constant zeros for
    every sample. Output rows whose window lies entirely in such rows equal
    the bias, so they are counted in closed form instead of convolved.
    No gradient flows into flagged rows.
    """
    c, kh, kw = kernels.shape
    b, h, w = x.shape
    if kh > h or kw > w:
        raise ValueError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    oh, ow = h - kh + 1, w - kw + 1
    if zero_rows is None:
        zero_rows = np.zeros(h, dtype=bool)
    segments = _live_segments(np.asarray(zero_rows, dtype=bool), kh)
    dead = oh - sum(e - s for s, e in segments)
    total = oh * ow
    pieces = []
    acc = np.zeros((b, c))
    for s, e in segments:
        windows = sliding_window_view(x.data[:, s : e + kh - 1], (kh, kw), axis=(1, 2))
        pre = np.tensordot(windows, kernels.data, axes=([3, 4], [1, 2])) + bias.data
        on = pre > 0
        acc += np.where(on, pre, 0.0).sum(axis=(1, 2))
        pieces.append((s, e, windows, on))
    bias_on = bias.data > 0
    acc += dead * ow * np.where(bias_on, bias.data, 0.0)
    out = acc / total

    def backward(g: np.ndarray):
        g = g / total  # (B, C), same for every position
        gk = np.zeros_like(kernels.data)
        gb = dead * ow * bias_on * g.sum(axis=0)
        gx = np.zeros_like(x.data) if x.requires_grad else None
        for s, e, windows, on in pieces:
            gpos = on * g[:, None, None, :]  # (B, rows, ow, C)
            gk += np.tensordot(gpos, windows, axes=([0, 1, 2], [0, 1, 2]))
            gb += gpos.sum(axis=(0, 1, 2))
            if gx is not None:
                rows = e - s
                for i in range(kh):
                    for j in range(kw):
                        gx[:, s + i : s + i + rows, j : j + ow] += gpos @ kernels.data[:, i, j]
        if gx is not None:
            gx[:, zero_rows] = 0.0
        return gx, gk, gb

    return _make("conv_relu_mean", out, (x, kernels, bias), backward)


def binary_cross_entropy(p: Tensor, y: np.ndarray, eps: float = 1e-12) -> Tensor:
    """Mean of -[y log p + (1-y) log(1-p)] with p clamped to [eps, 1-eps]."""
    if not np.all((p.data >= 0.0) & (p.data <= 1.0)):
        raise NumericError("probability outside [0, 1] passed to cross-entropy")
    q = np.clip(p.data, eps, 1.0 - eps)
    y = np.asarray(y, dtype=np.float64)
    n = q.size
    loss = -np.mean(y * np.log(q) + (1.0 - y) * np.log1p(-q))

    def backward(g: np.ndarray):
        return (g * (-(y / q) + (1.0 - y) / (1.0 - q)) / n,)

    return _make("cross_entropy", np.asarray(loss), (p,), backward)
