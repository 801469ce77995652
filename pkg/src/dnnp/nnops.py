"""Activation, softmax, and pooling primitives, forward and backward.

All ops accept arbitrarily strided tensors. Reductions run on canonical
copies, so two views holding the same logical values produce identical
results regardless of memory layout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .conv import output_extent
from .errors import EmptyWindow, MissingArgmax, ShapeMismatch
from .tensor import TensorView


class ActivationKind(enum.Enum):
    SIGMOID = "sigmoid"
    RELU = "relu"
    TANH = "tanh"


class SoftmaxMode(enum.Enum):
    PER_IMAGE = "per_image"        # normalize over (c, h, w) per image
    PER_SPATIAL = "per_spatial"    # normalize over c at each (n, h, w)


class PoolKind(enum.Enum):
    MAX = "max"
    AVERAGE = "average"


def _as_enum(cls, value):
    if isinstance(value, cls):
        return value
    try:
        return cls(str(value).lower())
    except ValueError:
        raise ShapeMismatch(f"unknown {cls.__name__} {value!r}") from None


def _check_like(a: TensorView, b: TensorView, what: str):
    if a.desc.extents != b.desc.extents:
        raise ShapeMismatch(
            f"{what}: extents {a.desc.extents} vs {b.desc.extents}")
    if a.desc.dtype != b.desc.dtype:
        raise ShapeMismatch(
            f"{what}: element types {a.desc.dtype} vs {b.desc.dtype}")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # exp only ever sees non-positive arguments
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activation_forward(kind, x: TensorView, y: TensorView) -> None:
    """y = activation(x), elementwise."""
    kind = _as_enum(ActivationKind, kind)
    _check_like(x, y, "activation")
    xa = x.array
    if kind is ActivationKind.SIGMOID:
        y.array[...] = _stable_sigmoid(xa)
    elif kind is ActivationKind.RELU:
        np.maximum(xa, 0, out=y.array)
    else:
        np.tanh(xa, out=y.array)


def activation_backward(kind, y: TensorView, dy: TensorView,
                        dx: TensorView) -> None:
    """dx = dy * activation'(x), with the derivative expressed in y.

    sigmoid: y(1-y); relu: 1 where y > 0; tanh: 1 - y^2.
    """
    kind = _as_enum(ActivationKind, kind)
    _check_like(y, dy, "activation backward")
    _check_like(y, dx, "activation backward")
    ya, dya = y.array, dy.array
    if kind is ActivationKind.SIGMOID:
        dx.array[...] = dya * ya * (1.0 - ya)
    elif kind is ActivationKind.RELU:
        dx.array[...] = dya * (ya > 0)
    else:
        dx.array[...] = dya * (1.0 - ya * ya)


def _group_axes(mode: SoftmaxMode):
    return (1, 2, 3) if mode is SoftmaxMode.PER_IMAGE else (1,)


def softmax_forward(mode, x: TensorView, y: TensorView) -> None:
    """Numerically stable softmax over the mode's normalization group."""
    mode = _as_enum(SoftmaxMode, mode)
    _check_like(x, y, "softmax")
    axes = _group_axes(mode)
    xc = np.ascontiguousarray(x.array)
    m = xc.max(axis=axes, keepdims=True)
    e = np.exp(xc - m)
    e /= e.sum(axis=axes, keepdims=True)
    y.array[...] = e


def softmax_backward(mode, y: TensorView, dy: TensorView,
                     dx: TensorView) -> None:
    """dx_i = y_i * (dy_i - sum_group(dy * y))."""
    mode = _as_enum(SoftmaxMode, mode)
    _check_like(y, dy, "softmax backward")
    _check_like(y, dx, "softmax backward")
    axes = _group_axes(mode)
    yc = np.ascontiguousarray(y.array)
    dyc = np.ascontiguousarray(dy.array)
    dot = (yc * dyc).sum(axis=axes, keepdims=True)
    dx.array[...] = yc * (dyc - dot)


@dataclass(frozen=True)
class PoolingDesc:
    """Window, stride, and padding of a pooling op."""

    kind: PoolKind = PoolKind.MAX
    window_h: int = 2
    window_w: int = 2
    stride_h: int = 1
    stride_w: int = 1
    pad_h: int = 0
    pad_w: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", _as_enum(PoolKind, self.kind))
        if self.window_h < 1 or self.window_w < 1:
            raise ShapeMismatch(f"pooling window must be >= 1: {self}")
        if self.stride_h < 1 or self.stride_w < 1:
            raise ShapeMismatch(f"pooling stride must be >= 1: {self}")
        if self.pad_h < 0 or self.pad_w < 0:
            raise ShapeMismatch(f"pooling padding must be >= 0: {self}")


def pool_out_shape(pd: PoolingDesc, x) -> tuple[int, int, int, int]:
    """(N, C, P, Q) of the pooled output."""
    d = x.desc if isinstance(x, TensorView) else x
    p = output_extent(d.h, pd.window_h, pd.stride_h, pd.pad_h)
    q = output_extent(d.w, pd.window_w, pd.stride_w, pd.pad_w)
    return (d.n, d.c, p, q)


def _window_bounds(pd: PoolingDesc, p: int, q: int, h: int, w: int):
    hs = p * pd.stride_h - pd.pad_h
    ws = q * pd.stride_w - pd.pad_w
    return (max(0, hs), min(h, hs + pd.window_h),
            max(0, ws), min(w, ws + pd.window_w))


def pool_forward(pd: PoolingDesc, x: TensorView, y: TensorView,
                 argmax_out: np.ndarray | None = None) -> None:
    """Max or average over each window's in-image elements.

    Average divides by the in-image count (padding excluded). For max,
    argmax_out (int64, output-shaped) receives the flat logical input
    index of the first maximum in row-major (h, w) scan order, which
    pool_backward needs to route gradients.
    """
    n, c, p_ext, q_ext = pool_out_shape(pd, x)
    if y.desc.extents != (n, c, p_ext, q_ext) or y.desc.dtype != x.desc.dtype:
        raise ShapeMismatch(
            f"pooled output must be {(n, c, p_ext, q_ext)} {x.desc.dtype}, "
            f"got {y.desc.extents} {y.desc.dtype}")
    if argmax_out is not None and (
            argmax_out.shape != (n, c, p_ext, q_ext)
            or argmax_out.dtype != np.int64):
        raise ShapeMismatch("argmax buffer must be int64 and output-shaped")
    h_ext, w_ext = x.desc.h, x.desc.w
    xc = np.ascontiguousarray(x.array)
    ya = np.empty((n, c, p_ext, q_ext), dtype=xc.dtype)
    for p in range(p_ext):
        for q in range(q_ext):
            hs, he, ws, we = _window_bounds(pd, p, q, h_ext, w_ext)
            if hs >= he or ws >= we:
                raise EmptyWindow(
                    f"pooling window at ({p}, {q}) lies entirely in padding")
            win = xc[:, :, hs:he, ws:we]
            if pd.kind is PoolKind.MAX:
                flat = win.reshape(n, c, -1)
                am = flat.argmax(axis=2)
                ya[:, :, p, q] = np.take_along_axis(
                    flat, am[:, :, None], axis=2)[:, :, 0]
                if argmax_out is not None:
                    wh = we - ws
                    hh = hs + am // wh
                    ww = ws + am % wh
                    nn = np.arange(n)[:, None]
                    cc = np.arange(c)[None, :]
                    argmax_out[:, :, p, q] = (
                        ((nn * c + cc) * h_ext + hh) * w_ext + ww)
            else:
                ya[:, :, p, q] = win.sum(axis=(2, 3)) / ((he - hs) * (we - ws))
    y.array[...] = ya


def pool_backward(pd: PoolingDesc, y: TensorView, dy: TensorView,
                  x: TensorView, dx: TensorView,
                  argmax: np.ndarray | None = None) -> None:
    """Route output gradients back through the pooling windows.

    Max pooling sends each dy element to its recorded argmax position
    (windows may overlap; contributions accumulate). Average pooling
    spreads dy/count over the window's in-image elements.
    """
    n, c, p_ext, q_ext = pool_out_shape(pd, x)
    _check_like(x, dx, "pool backward")
    for t in (y, dy):
        if t.desc.extents != (n, c, p_ext, q_ext) or t.desc.dtype != x.desc.dtype:
            raise ShapeMismatch("pooled gradient shape mismatch")
    h_ext, w_ext = x.desc.h, x.desc.w
    dxa = dx.array
    dxa[...] = 0
    dyc = np.ascontiguousarray(dy.array)
    if pd.kind is PoolKind.MAX:
        if argmax is None:
            raise MissingArgmax("max pooling backward needs the forward argmax")
        if argmax.shape != (n, c, p_ext, q_ext) or argmax.dtype != np.int64:
            raise ShapeMismatch("argmax buffer must be int64 and output-shaped")
        d = dx.desc
        flat = argmax.reshape(-1)
        ww = flat % w_ext
        rest = flat // w_ext
        hh = rest % h_ext
        rest = rest // h_ext
        cc = rest % c
        nn = rest // c
        off = (nn * d.stride_n + cc * d.stride_c
               + hh * d.stride_h + ww * d.stride_w)
        np.add.at(dx.buf, off, dyc.reshape(-1))
    else:
        for p in range(p_ext):
            for q in range(q_ext):
                hs, he, ws, we = _window_bounds(pd, p, q, h_ext, w_ext)
                count = (he - hs) * (we - ws)
                if count == 0:
                    raise EmptyWindow(
                        f"pooling window at ({p}, {q}) lies entirely in padding")
                dxa[:, :, hs:he, ws:we] += (
                    dyc[:, :, p:p + 1, q:q + 1] / count)
