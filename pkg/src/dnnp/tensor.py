"""Strided 4-D tensor descriptors and views.

A descriptor is shape (n, c, h, w) plus one signed element stride per
dimension; it never owns data. A view binds a descriptor to a flat buffer
and is the unit every operation works on. Layout is fully caller-chosen:
NCHW, NHWC, or anything else whose index map does not alias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AliasingStrides,
    IncompatibleBroadcast,
    OverlappingBuffers,
    ShapeMismatch,
    ZeroExtent,
)

ELEM_TYPES = {
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
}

_CHECK_EXHAUSTIVE_LIMIT = 1 << 22  # offsets hashed directly below this box size


def as_dtype(elem_type) -> np.dtype:
    """Normalize an element type ('f32'/'f64' or a numpy float dtype)."""
    if isinstance(elem_type, str):
        try:
            return ELEM_TYPES[elem_type]
        except KeyError:
            raise ShapeMismatch(f"unsupported element type {elem_type!r}") from None
    dt = np.dtype(elem_type)
    if dt not in ELEM_TYPES.values():
        raise ShapeMismatch(f"unsupported element type {elem_type!r}")
    return dt


def _sorted_spans_disjoint(extents, strides) -> bool:
    # Sufficient condition: ordered by |stride|, each dimension's stride
    # exceeds the total span of the finer dimensions. All conventional
    # layouts (NCHW, NHWC, padded rows, ...) pass here.
    dims = sorted(
        (abs(s), e) for e, s in zip(extents, strides) if e > 1
    )
    span = 0
    for stride, extent in dims:
        if stride <= span:
            return False
        span += (extent - 1) * stride
    return True


def _aliases_exhaustive(extents, strides) -> bool:
    offs = np.zeros(1, dtype=np.int64)
    for e, s in zip(extents, strides):
        offs = (offs[:, None] + np.arange(e, dtype=np.int64) * s).ravel()
    return np.unique(offs).size != offs.size


def _aliases_delta(extents, strides) -> bool:
    # Aliasing exists iff a nonzero delta vector with |delta_i| < extent_i
    # hits offset zero. Solve for the largest-extent dimension and sweep
    # the delta box of the other three.
    dims = [(e, s) for e, s in zip(extents, strides) if e > 1]
    solve = max(range(len(dims)), key=lambda i: dims[i][0])
    e_t, s_t = dims[solve]
    rest = [dims[i] for i in range(len(dims)) if i != solve]
    total = np.zeros(1, dtype=np.int64)
    for e, s in rest:
        deltas = np.arange(-(e - 1), e, dtype=np.int64) * s
        total = (total[:, None] + deltas).ravel()
    hit = (total % s_t == 0) & (np.abs(total // s_t) <= e_t - 1)
    # delta 0 on the swept dims solving to delta 0 on the target is trivial
    trivial = total == 0
    return bool(np.any(hit & ~trivial))


def check_injective(extents, strides) -> None:
    """Raise AliasingStrides unless the strided index map is one-to-one."""
    for e, s in zip(extents, strides):
        if e > 1 and s == 0:
            raise AliasingStrides("zero stride on a dimension with extent > 1")
    if _sorted_spans_disjoint(extents, strides):
        return
    box = 1
    for e in extents:
        box *= e
    if box <= _CHECK_EXHAUSTIVE_LIMIT:
        aliased = _aliases_exhaustive(extents, strides)
    else:
        aliased = _aliases_delta(extents, strides)
    if aliased:
        raise AliasingStrides(
            f"strides {tuple(strides)} alias over extents {tuple(extents)}"
        )


@dataclass(frozen=True)
class TensorDesc:
    """Shape, strides, and element type of a 4-D tensor. Owns no data."""

    n: int
    c: int
    h: int
    w: int
    stride_n: int
    stride_c: int
    stride_h: int
    stride_w: int
    dtype: np.dtype

    @property
    def extents(self) -> tuple[int, int, int, int]:
        return (self.n, self.c, self.h, self.w)

    @property
    def strides(self) -> tuple[int, int, int, int]:
        return (self.stride_n, self.stride_c, self.stride_h, self.stride_w)

    @property
    def size(self) -> int:
        return self.n * self.c * self.h * self.w

    def min_offset(self) -> int:
        return sum(min(0, (e - 1) * s) for e, s in zip(self.extents, self.strides))

    def max_offset(self) -> int:
        return sum(max(0, (e - 1) * s) for e, s in zip(self.extents, self.strides))

    def offset(self, n: int, c: int, h: int, w: int) -> int:
        return (
            n * self.stride_n + c * self.stride_c + h * self.stride_h + w * self.stride_w
        )


def make_desc(
    n: int,
    c: int,
    h: int,
    w: int,
    layout: str = "nchw",
    strides=None,
    elem_type="f32",
) -> TensorDesc:
    """Build a validated descriptor.

    layout is one of 'nchw', 'nhwc', or 'custom'; custom requires explicit
    per-dimension strides (and forbids them otherwise).
    """
    extents = (n, c, h, w)
    for e in extents:
        if not isinstance(e, (int, np.integer)) or e < 1:
            raise ZeroExtent(f"extents must be >= 1, got {extents}")
    layout = layout.lower()
    if layout == "custom":
        if strides is None:
            raise ShapeMismatch("custom layout requires strides")
        if len(strides) != 4:
            raise ShapeMismatch("need exactly 4 strides")
        strides = tuple(int(s) for s in strides)
    else:
        if strides is not None:
            raise ShapeMismatch("strides only allowed with layout='custom'")
        if layout == "nchw":
            strides = (c * h * w, h * w, w, 1)
        elif layout == "nhwc":
            strides = (h * w * c, 1, w * c, c)
        else:
            raise ShapeMismatch(f"unknown layout {layout!r}")
    check_injective(extents, strides)
    return TensorDesc(n, c, h, w, *strides, dtype=as_dtype(elem_type))


class TensorView:
    """A descriptor bound to a flat buffer, with bounds verified once."""

    def __init__(self, desc: TensorDesc, buf: np.ndarray):
        buf = np.asarray(buf)
        if buf.ndim != 1:
            raise ShapeMismatch("buffer must be one-dimensional")
        if buf.dtype != desc.dtype:
            raise ShapeMismatch(
                f"buffer dtype {buf.dtype} does not match descriptor {desc.dtype}"
            )
        if desc.min_offset() < 0:
            raise ShapeMismatch("descriptor maps below the start of the buffer")
        if desc.max_offset() >= buf.size:
            raise ShapeMismatch(
                f"buffer of {buf.size} elements too small for max offset "
                f"{desc.max_offset()}"
            )
        self.desc = desc
        self.buf = buf

    @property
    def array(self) -> np.ndarray:
        """Writable 4-D ndarray aliasing the buffer through the strides."""
        itemsize = self.desc.dtype.itemsize
        return np.lib.stride_tricks.as_strided(
            self.buf,
            shape=self.desc.extents,
            strides=tuple(s * itemsize for s in self.desc.strides),
        )

    @classmethod
    def from_array(cls, arr: np.ndarray, layout: str = "nchw") -> "TensorView":
        """Copy a 4-D array into a fresh tensor of the given layout."""
        arr = np.asarray(arr)
        if arr.ndim != 4:
            raise ShapeMismatch("expected a 4-D array")
        dt = as_dtype(arr.dtype)
        desc = make_desc(*arr.shape, layout=layout, elem_type=dt)
        view = empty_view(desc)
        view.array[...] = arr
        return view


def empty_view(desc: TensorDesc) -> TensorView:
    """Allocate an uninitialized tensor for a descriptor."""
    return TensorView(desc, np.empty(desc.max_offset() + 1, dtype=desc.dtype))


def zeros_view(desc: TensorDesc) -> TensorView:
    """Allocate a zero-filled tensor for a descriptor."""
    return TensorView(desc, np.zeros(desc.max_offset() + 1, dtype=desc.dtype))


def _check_same_extents(a: TensorView, b: TensorView) -> None:
    if a.desc.extents != b.desc.extents:
        raise ShapeMismatch(f"extents {a.desc.extents} vs {b.desc.extents}")
    if a.desc.dtype != b.desc.dtype:
        raise ShapeMismatch(f"element types {a.desc.dtype} vs {b.desc.dtype}")


def transform(src: TensorView, dst: TensorView, alpha: float = 1.0, beta: float = 0.0):
    """dst := alpha*src + beta*dst, coordinate-wise, across any two layouts."""
    _check_same_extents(src, dst)
    if np.may_share_memory(src.buf, dst.buf):
        raise OverlappingBuffers("transform requires disjoint buffers")
    s, d = src.array, dst.array
    if beta == 0:
        np.multiply(s, alpha, out=d)
    else:
        d *= beta
        d += alpha * s


def add_broadcast(bias: TensorView, out: TensorView, alpha: float = 1.0, beta: float = 1.0):
    """out := alpha*bias + beta*out with size-1 bias dimensions broadcast."""
    if bias.desc.dtype != out.desc.dtype:
        raise ShapeMismatch(
            f"element types {bias.desc.dtype} vs {out.desc.dtype}"
        )
    for eb, eo in zip(bias.desc.extents, out.desc.extents):
        if eb != 1 and eb != eo:
            raise IncompatibleBroadcast(
                f"bias extents {bias.desc.extents} do not broadcast onto "
                f"{out.desc.extents}"
            )
    b, o = bias.array, out.array
    if beta == 0:
        o[...] = alpha * b
    else:
        o *= beta
        o += alpha * b
