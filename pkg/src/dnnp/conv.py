"""Batched 2-D convolution: forward, backward-data, backward-filter, bias.

Three engines compute the same math behind one descriptor API:

* direct       - the plain loop nest over filter taps, vectorized per tap;
* explicit     - materialize the lowered data matrix in memory, then one
                 stored-matrix multiply;
* implicit     - the same multiply, but the lowered matrix is a virtual
                 operand whose tiles are generated on demand from the input
                 tensor, so nothing of its size is ever allocated. Tile
                 index decode uses magic-number division throughout.

The output extent rule, the tap accessing rule, and the zero-extension of
out-of-image reads are shared by all engines and by pooling.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

import numpy as np

from . import scratch
from .errors import AllocTooLarge, EmptyOutput, ShapeMismatch, ZeroExtent
from .gemm import StoredMatrix, TileConfig, VirtualMatrix, gemm, gemm_stream
from .intdiv import MagicDivider, make_divider
from .tensor import TensorDesc, TensorView, as_dtype, empty_view, make_desc

DEFAULT_LOWERED_LIMIT = 4 << 30  # bytes of explicitly materialized data matrix


class ConvMode(enum.Enum):
    CONVOLUTION = "convolution"
    CROSS_CORRELATION = "cross_correlation"


class Engine(enum.Enum):
    DIRECT = "direct"
    EXPLICIT = "explicit_lowering"
    IMPLICIT = "implicit_gemm"


_ENGINE_ALIASES = {
    "direct": Engine.DIRECT,
    "explicit": Engine.EXPLICIT,
    "explicit_lowering": Engine.EXPLICIT,
    "implicit": Engine.IMPLICIT,
    "implicit_gemm": Engine.IMPLICIT,
}


def as_engine(engine) -> Engine:
    if isinstance(engine, Engine):
        return engine
    try:
        return _ENGINE_ALIASES[str(engine).lower()]
    except KeyError:
        raise ShapeMismatch(f"unknown engine {engine!r}") from None


def as_mode(mode) -> ConvMode:
    if isinstance(mode, ConvMode):
        return mode
    try:
        return ConvMode(str(mode).lower())
    except ValueError:
        raise ShapeMismatch(f"unknown convolution mode {mode!r}") from None


@dataclass(frozen=True)
class FilterDesc:
    """Filter shape (k, c, r, s), dense KCRS layout."""

    k: int
    c: int
    r: int
    s: int
    dtype: np.dtype

    def __post_init__(self):
        for e in (self.k, self.c, self.r, self.s):
            if e < 1:
                raise ZeroExtent(f"filter extents must be >= 1: {self}")

    @property
    def extents(self):
        return (self.k, self.c, self.r, self.s)

    @property
    def strides(self):
        return (self.c * self.r * self.s, self.r * self.s, self.s, 1)

    @property
    def size(self) -> int:
        return self.k * self.c * self.r * self.s


def make_filter_desc(k: int, c: int, r: int, s: int, elem_type="f32") -> FilterDesc:
    return FilterDesc(k, c, r, s, as_dtype(elem_type))


class FilterView:
    """A filter descriptor bound to a dense buffer."""

    def __init__(self, desc: FilterDesc, buf: np.ndarray):
        buf = np.asarray(buf)
        if buf.ndim != 1:
            raise ShapeMismatch("filter buffer must be one-dimensional")
        if buf.dtype != desc.dtype:
            raise ShapeMismatch(
                f"filter buffer dtype {buf.dtype} does not match {desc.dtype}")
        if buf.size < desc.size:
            raise ShapeMismatch(
                f"filter buffer of {buf.size} elements, need {desc.size}")
        self.desc = desc
        self.buf = buf

    @property
    def array(self) -> np.ndarray:
        return self.buf[: self.desc.size].reshape(self.desc.extents)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FilterView":
        arr = np.asarray(arr)
        if arr.ndim != 4:
            raise ShapeMismatch("expected a 4-D (k, c, r, s) array")
        desc = FilterDesc(*arr.shape, dtype=as_dtype(arr.dtype))
        return cls(desc, np.ascontiguousarray(arr).reshape(-1))


@dataclass(frozen=True)
class ConvDesc:
    """Strides, padding, mode, and gradient-accumulation flag."""

    u: int = 1
    v: int = 1
    pad_h: int = 0
    pad_w: int = 0
    mode: ConvMode = ConvMode.CONVOLUTION
    accumulate: bool = False

    def __post_init__(self):
        if self.u < 1 or self.v < 1:
            raise ShapeMismatch(f"strides must be >= 1: u={self.u}, v={self.v}")
        if self.pad_h < 0 or self.pad_w < 0:
            raise ShapeMismatch(
                f"padding must be >= 0: {self.pad_h}, {self.pad_w}")
        object.__setattr__(self, "mode", as_mode(self.mode))


def pad_preset(preset: str, r: int, s: int) -> tuple[int, int]:
    """MATLAB-style padding presets: valid, same, full."""
    preset = preset.lower()
    if preset == "valid":
        return (0, 0)
    if preset == "same":
        return (r // 2, s // 2)
    if preset == "full":
        return (r - 1, s - 1)
    raise ShapeMismatch(f"unknown padding preset {preset!r}")


def output_extent(in_extent: int, filt_extent: int, stride: int, pad: int) -> int:
    """Output length of a strided, zero-padded sliding window.

    ceil((H - R + 1 + 2*pad) / u); an empty output is an error rather than
    a zero-extent tensor.
    """
    if in_extent < 1 or filt_extent < 1 or stride < 1 or pad < 0:
        raise ShapeMismatch(
            f"bad window parameters ({in_extent}, {filt_extent}, {stride}, {pad})")
    numer = in_extent - filt_extent + 1 + 2 * pad
    if numer < 1:
        raise EmptyOutput(
            f"window of {filt_extent} over extent {in_extent} with pad {pad} "
            "produces no output")
    return -(-numer // stride)


def access(p: int, stride: int, filt_extent: int, tap: int, pad: int,
           mode: ConvMode = ConvMode.CONVOLUTION) -> int:
    """Input index read by output position p at filter tap `tap`.

    Convolution inverts the filter (p*u + R - tap - 1 - pad); the
    cross-correlation variant is flip-free (p*u + tap - pad). The result
    may fall outside the input; such reads are zero by convention.
    """
    if as_mode(mode) is ConvMode.CONVOLUTION:
        return p * stride + filt_extent - tap - 1 - pad
    return p * stride + tap - pad


def conv_out_shape(x: TensorDesc, f: FilterDesc, conv: ConvDesc):
    """(N, K, P, Q) of the convolution output; validates channel agreement."""
    if x.c != f.c:
        raise ShapeMismatch(f"input channels {x.c} vs filter channels {f.c}")
    p = output_extent(x.h, f.r, conv.u, conv.pad_h)
    q = output_extent(x.w, f.s, conv.v, conv.pad_w)
    return (x.n, f.k, p, q)


@dataclass(frozen=True)
class DividerSet:
    """Magic dividers for the four decode divisors of a lowered problem."""

    rs: MagicDivider
    s: MagicDivider
    pq: MagicDivider
    q: MagicDivider

    @classmethod
    def for_problem(cls, r: int, s: int, p: int, q: int) -> "DividerSet":
        return cls(make_divider(r * s), make_divider(s),
                   make_divider(p * q), make_divider(q))


def _check_triplet(x: TensorView, f: FilterView, conv: ConvDesc):
    if x.desc.dtype != f.desc.dtype:
        raise ShapeMismatch(
            f"element types {x.desc.dtype} vs {f.desc.dtype}")
    return conv_out_shape(x.desc, f.desc, conv)


def _check_out(out: TensorView, extents, dtype, what: str):
    if out.desc.extents != tuple(extents):
        raise ShapeMismatch(
            f"{what} extents {out.desc.extents}, expected {tuple(extents)}")
    if out.desc.dtype != dtype:
        raise ShapeMismatch(
            f"{what} element type {out.desc.dtype}, expected {dtype}")


class _LoweredMap:
    """Index arithmetic of the lowered data matrix.

    Row index i encodes (c, r, s) over the filter box; column index j
    encodes (n, p, q) over the output box. Decoding runs through magic
    dividers; the (h, w) input coordinates then come from the tap
    accessing rule, with out-of-image positions masked to zero.
    """

    def __init__(self, x: TensorView, f: FilterDesc, conv: ConvDesc,
                 out_shape, dividers: DividerSet | None = None):
        n, k, p, q = out_shape
        self.x = x
        self.conv = conv
        self.C, self.H, self.W = x.desc.c, x.desc.h, x.desc.w
        self.R, self.S = f.r, f.s
        self.N, self.P, self.Q = n, p, q
        self.rows = self.C * self.R * self.S
        self.cols = self.N * self.P * self.Q
        if max(self.rows, self.cols) >= 1 << 31:
            raise ShapeMismatch("lowered index space exceeds 32-bit decode range")
        self.div = dividers or DividerSet.for_problem(self.R, self.S, p, q)
        self._tls = threading.local()

    def decode_rows(self, i: np.ndarray):
        c, rem = self.div.rs.div_mod(i)
        r, s = self.div.s.div_mod(rem)
        return c, r, s

    def decode_cols(self, j: np.ndarray):
        n, rem = self.div.pq.div_mod(j)
        p, q = self.div.q.div_mod(rem)
        return n, p, q

    def row_terms(self, i: np.ndarray):
        """Per-row offset contribution and tap components of (h, w)."""
        c, r, s = self.decode_rows(i)
        if self.conv.mode is ConvMode.CONVOLUTION:
            hr = self.R - 1 - r
            wr = self.S - 1 - s
        else:
            hr = r
            wr = s
        sd = self.x.desc
        off = c * sd.stride_c + hr * sd.stride_h + wr * sd.stride_w
        return off, hr, wr

    def col_terms(self, j: np.ndarray):
        """Per-column offset contribution and window components of (h, w)."""
        n, p, q = self.decode_cols(j)
        hc = p * self.conv.u - self.conv.pad_h
        wc = q * self.conv.v - self.conv.pad_w
        sd = self.x.desc
        off = n * sd.stride_n + hc * sd.stride_h + wc * sd.stride_w
        return off, hc, wc

    def _workspace(self, shape):
        ws = getattr(self._tls, "ws", None)
        if ws is None or ws["shape"] != shape:
            ws = {
                "shape": shape,
                "h": scratch.alloc(shape, np.int64, "implicit.fill"),
                "w": scratch.alloc(shape, np.int64, "implicit.fill"),
                "off": scratch.alloc(shape, np.int64, "implicit.fill"),
                "b1": scratch.alloc(shape, bool, "implicit.fill"),
                "b2": scratch.alloc(shape, bool, "implicit.fill"),
                "rowterms_key": None,
                "rowterms": None,
                "colterms_key": None,
                "colterms": None,
            }
            self._tls.ws = ws
        return ws

    def _cached(self, ws, kind, start, count, compute):
        # k-major tile order revisits the same column range every slab, so
        # memoizing the last decode per term kind buys the common case
        key = (start, count)
        if ws[f"{kind}_key"] != key:
            idx = np.arange(start, start + count, dtype=np.int64)
            ws[kind] = compute(idx)
            ws[f"{kind}_key"] = key
        return ws[kind]

    def fill(self, i0: int, j0: int, out: np.ndarray,
             transposed: bool = False) -> None:
        """Gather one zero-padded tile of the lowered matrix (or its
        transpose) straight from the input tensor."""
        rows, cols = (self.cols, self.rows) if transposed else (self.rows, self.cols)
        th, tw = out.shape
        mi = min(th, rows - i0)
        mj = min(tw, cols - j0)
        if mi <= 0 or mj <= 0:
            out[...] = 0
            return
        if mi < th or mj < tw:
            out[mi:, :] = 0
            out[:mi, mj:] = 0
        ws = self._workspace(out.shape)
        if transposed:
            a_off, a_h, a_w = self._cached(ws, "colterms", i0, mi, self.col_terms)
            b_off, b_h, b_w = self._cached(ws, "rowterms", j0, mj, self.row_terms)
        else:
            a_off, a_h, a_w = self._cached(ws, "rowterms", i0, mi, self.row_terms)
            b_off, b_h, b_w = self._cached(ws, "colterms", j0, mj, self.col_terms)
        h = ws["h"][:mi, :mj]
        w = ws["w"][:mi, :mj]
        off = ws["off"][:mi, :mj]
        bad = ws["b1"][:mi, :mj]
        tmp = ws["b2"][:mi, :mj]
        np.add(a_h[:, None], b_h[None, :], out=h)
        np.add(a_w[:, None], b_w[None, :], out=w)
        np.add(a_off[:, None], b_off[None, :], out=off)
        np.less(h, 0, out=bad)
        np.greater_equal(h, self.H, out=tmp)
        np.logical_or(bad, tmp, out=bad)
        np.less(w, 0, out=tmp)
        np.logical_or(bad, tmp, out=bad)
        np.greater_equal(w, self.W, out=tmp)
        np.logical_or(bad, tmp, out=bad)
        np.take(self.x.buf, off, mode="clip", out=out[:mi, :mj])
        np.copyto(out[:mi, :mj], 0, where=bad)

    def data_matrix(self) -> VirtualMatrix:
        def element(i, j):
            t = np.empty((1, 1), dtype=self.x.desc.dtype)
            self.fill(i, j, t)
            return t[0, 0]

        return VirtualMatrix(self.rows, self.cols, self.x.desc.dtype,
                             element, self.fill)

    def data_matrix_t(self) -> VirtualMatrix:
        def element(j, i):
            t = np.empty((1, 1), dtype=self.x.desc.dtype)
            self.fill(j, i, t, transposed=True)
            return t[0, 0]

        def fill_t(i0, j0, out):
            self.fill(i0, j0, out, transposed=True)

        return VirtualMatrix(self.cols, self.rows, self.x.desc.dtype,
                             element, fill_t)


def implicit_provider(x: TensorView, f: FilterDesc | FilterView, conv: ConvDesc,
                      dividers: DividerSet | None = None) -> VirtualMatrix:
    """Virtual lowered data matrix: element (i, j) is decoded and read from
    the input on demand; the bulk hook fills whole tiles."""
    fd = f.desc if isinstance(f, FilterView) else f
    shape = conv_out_shape(x.desc, fd, conv)
    return _LoweredMap(x, fd, conv, shape, dividers).data_matrix()


class _OutputGradMap:
    """dy viewed as a K x NPQ matrix over an arbitrary strided layout."""

    def __init__(self, dy: TensorView, dividers_pq: MagicDivider,
                 dividers_q: MagicDivider):
        self.dy = dy
        d = dy.desc
        self.K = d.c
        self.cols = d.n * d.h * d.w
        self.div_pq = dividers_pq
        self.div_q = dividers_q
        self._tls = threading.local()

    def _col_off(self, j: np.ndarray):
        n, rem = self.div_pq.div_mod(j)
        p, q = self.div_q.div_mod(rem)
        d = self.dy.desc
        return n * d.stride_n + p * d.stride_h + q * d.stride_w

    def fill(self, i0: int, j0: int, out: np.ndarray) -> None:
        th, tw = out.shape
        mi = min(th, self.K - i0)
        mj = min(tw, self.cols - j0)
        if mi <= 0 or mj <= 0:
            out[...] = 0
            return
        if mi < th or mj < tw:
            out[mi:, :] = 0
            out[:mi, mj:] = 0
        tls = self._tls
        key = (j0, mj)
        if getattr(tls, "key", None) != key:
            tls.coff = self._col_off(np.arange(j0, j0 + mj, dtype=np.int64))
            tls.key = key
        roff = np.arange(i0, i0 + mi, dtype=np.int64) * self.dy.desc.stride_c
        np.take(self.dy.buf, roff[:, None] + tls.coff[None, :],
                out=out[:mi, :mj])

    def matrix(self) -> VirtualMatrix:
        def element(i, j):
            t = np.empty((1, 1), dtype=self.dy.desc.dtype)
            self.fill(i, j, t)
            return t[0, 0]

        return VirtualMatrix(self.K, self.cols, self.dy.desc.dtype,
                             element, self.fill)


def _filter_matrix(f: FilterView) -> StoredMatrix:
    """The filter as a K x CRS stored matrix, zero-copy over its buffer."""
    d = f.desc
    crs = d.c * d.r * d.s
    return StoredMatrix(f.buf, d.k, crs, crs, 1)


def _canonical(view4d: np.ndarray) -> np.ndarray:
    # Copying to canonical order first keeps reductions layout-exact.
    return np.ascontiguousarray(view4d)


def _padded_input(x: TensorView, conv: ConvDesc, tag: str) -> np.ndarray:
    d = x.desc
    hp = d.h + 2 * conv.pad_h
    wp = d.w + 2 * conv.pad_w
    xp = scratch.zeros((d.n, d.c, hp, wp), d.dtype, tag)
    xp[:, :, conv.pad_h:conv.pad_h + d.h, conv.pad_w:conv.pad_w + d.w] = x.array
    return xp


def _tap_filter(f: FilterView, conv: ConvDesc) -> np.ndarray:
    # In tap coordinates the inverted (convolution) filter reads like a
    # cross-correlation of the flipped kernel, collapsing both modes into
    # one window walk.
    fa = f.array
    if conv.mode is ConvMode.CONVOLUTION:
        return fa[:, :, ::-1, ::-1]
    return fa


def _conv_tile(rows: int, inner: int, cols: int) -> TileConfig:
    return TileConfig(tile_m=min(128, rows), tile_n=min(512, cols),
                      tile_k=min(256, inner))


def _direct_forward(x: TensorView, f: FilterView, conv: ConvDesc, out_shape):
    n, k, p, q = out_shape
    dt = x.desc.dtype
    xp = _padded_input(x, conv, "direct.padded")
    ff = _tap_filter(f, conv)
    r_ext, s_ext = f.desc.r, f.desc.s
    o = scratch.zeros((k, n, p, q), dt, "direct.out")
    o2 = o.reshape(k, n * p * q)
    win_buf = scratch.alloc((x.desc.c, n, p, q), dt, "direct.window")
    w2 = win_buf.reshape(x.desc.c, n * p * q)
    prod = scratch.alloc((k, n * p * q), dt, "direct.prod")
    for r in range(r_ext):
        for s in range(s_ext):
            win = xp[:, :, r:r + (p - 1) * conv.u + 1:conv.u,
                     s:s + (q - 1) * conv.v + 1:conv.v]
            win_buf[...] = win.transpose(1, 0, 2, 3)
            np.matmul(np.ascontiguousarray(ff[:, :, r, s]), w2, out=prod)
            o2 += prod
    return o.transpose(1, 0, 2, 3)


def lower_explicit(x: TensorView, f: FilterView, conv: ConvDesc,
                   max_bytes: int = DEFAULT_LOWERED_LIMIT):
    """Materialize the lowered operands: the filter as a K x CRS matrix and
    the gathered data matrix of shape CRS x NPQ.

    Built by direct window slicing, independent of the virtual provider's
    divider-based decode, so the two construction routes can check each
    other. Refuses data matrices above max_bytes.
    """
    n, k, p, q = _check_triplet(x, f, conv)
    c, r_ext, s_ext = f.desc.c, f.desc.r, f.desc.s
    crs = c * r_ext * s_ext
    npq = n * p * q
    dt = x.desc.dtype
    need = crs * npq * dt.itemsize
    if need > max_bytes:
        raise AllocTooLarge(
            f"lowered data matrix needs {need} bytes, limit {max_bytes}")
    f_m = _filter_matrix(f)
    dm = scratch.alloc((crs, npq), dt, "lower.data_matrix")
    dm4 = dm.reshape(crs, n, p, q)
    xp = _padded_input(x, conv, "lower.padded")
    conv_mode = conv.mode is ConvMode.CONVOLUTION
    for ci in range(c):
        for r in range(r_ext):
            hr = r_ext - 1 - r if conv_mode else r
            for s in range(s_ext):
                wr = s_ext - 1 - s if conv_mode else s
                row = (ci * r_ext + r) * s_ext + s
                dm4[row] = xp[:, ci, hr:hr + (p - 1) * conv.u + 1:conv.u,
                              wr:wr + (q - 1) * conv.v + 1:conv.v]
    return f_m, StoredMatrix(dm.reshape(-1), crs, npq, npq, 1)


def _explicit_forward(x, f, conv, out_shape, max_bytes, tile, threads):
    n, k, p, q = out_shape
    f_m, d_m = lower_explicit(x, f, conv, max_bytes)
    o_m = scratch.alloc((k, d_m.cols), x.desc.dtype, "explicit.out")
    om = StoredMatrix(o_m.reshape(-1), k, d_m.cols, d_m.cols, 1)
    cfg = tile or _conv_tile(k, f_m.cols, d_m.cols)
    gemm(f_m, d_m, om, 1.0, 0.0, cfg=cfg, threads=threads)
    return o_m.reshape(k, n, p, q).transpose(1, 0, 2, 3)


def _implicit_forward(x, f, conv, out_shape, tile, threads):
    n, k, p, q = out_shape
    lowered = _LoweredMap(x, f.desc, conv, out_shape)
    f_m = _filter_matrix(f)
    d_v = lowered.data_matrix()
    o_m = scratch.alloc((k, d_v.cols), x.desc.dtype, "implicit.out")
    om = StoredMatrix(o_m.reshape(-1), k, d_v.cols, d_v.cols, 1)
    cfg = tile or _conv_tile(k, f_m.cols, d_v.cols)
    gemm(f_m, d_v, om, 1.0, 0.0, cfg=cfg, threads=threads)
    # the required transposition back to the caller's layout happens when
    # the (k, n, p, q) view is combined into y
    return o_m.reshape(k, n, p, q).transpose(1, 0, 2, 3)


def _combine(out: TensorView, fresh: np.ndarray, alpha: float, beta: float):
    # fresh is engine-owned scratch, safe to scale in place
    dst = out.array
    if alpha != 1.0:
        np.multiply(fresh, fresh.dtype.type(alpha), out=fresh)
    if beta == 0:
        dst[...] = fresh
    else:
        if beta != 1.0:
            dst *= beta
        dst += fresh


def conv_forward(x: TensorView, f: FilterView, conv: ConvDesc, engine,
                 y: TensorView, alpha: float = 1.0, beta: float = 0.0, *,
                 tile: TileConfig | None = None, threads: int = 1,
                 max_lowered_bytes: int = DEFAULT_LOWERED_LIMIT) -> None:
    """y := alpha * conv(x, f) + beta * y (accumulate mode forces beta=1)."""
    engine = as_engine(engine)
    out_shape = _check_triplet(x, f, conv)
    _check_out(y, out_shape, x.desc.dtype, "output")
    if conv.accumulate:
        beta = 1.0
    if engine is Engine.DIRECT:
        o = _direct_forward(x, f, conv, out_shape)
    elif engine is Engine.EXPLICIT:
        o = _explicit_forward(x, f, conv, out_shape, max_lowered_bytes,
                              tile, threads)
    else:
        o = _implicit_forward(x, f, conv, out_shape, tile, threads)
    _combine(y, o, alpha, beta)


def _direct_backward_data(dy, f, conv, out_shape, dx):
    n, k, p, q = out_shape
    d = dx.desc
    dt = d.dtype
    ff = _tap_filter(f, conv)
    dyc = _canonical(dy.array)
    dy2 = dyc.transpose(1, 0, 2, 3).reshape(k, n * p * q)
    hp = d.h + 2 * conv.pad_h
    wp = d.w + 2 * conv.pad_w
    dxp = scratch.zeros((n, d.c, hp, wp), dt, "direct.grad_padded")
    contrib = scratch.alloc((d.c, n, p, q), dt, "direct.grad_tap")
    c2 = contrib.reshape(d.c, n * p * q)
    for r in range(f.desc.r):
        for s in range(f.desc.s):
            np.matmul(ff[:, :, r, s].T, dy2, out=c2)
            dxp[:, :, r:r + (p - 1) * conv.u + 1:conv.u,
                s:s + (q - 1) * conv.v + 1:conv.v] += contrib.transpose(1, 0, 2, 3)
    core = dxp[:, :, conv.pad_h:conv.pad_h + d.h, conv.pad_w:conv.pad_w + d.w]
    if conv.accumulate:
        dx.array[...] += core
    else:
        dx.array[...] = core


def _explicit_backward_data(dy, f, conv, out_shape, dx, max_bytes, tile, threads):
    n, k, p, q = out_shape
    d = dx.desc
    crs = d.c * f.desc.r * f.desc.s
    npq = n * p * q
    dt = d.dtype
    need = crs * npq * dt.itemsize
    if need > max_bytes:
        raise AllocTooLarge(
            f"lowered gradient matrix needs {need} bytes, limit {max_bytes}")
    dy_m = StoredMatrix.from_array(
        _canonical(dy.array).transpose(1, 0, 2, 3).reshape(k, npq))
    g = scratch.alloc((crs, npq), dt, "explicit.grad")
    gm = StoredMatrix(g.reshape(-1), crs, npq, npq, 1)
    cfg = tile or _conv_tile(crs, k, npq)
    gemm(_filter_matrix(f).transposed(), dy_m, gm, 1.0, 0.0,
         cfg=cfg, threads=threads)
    # scatter: each lowered row (c, r, s) lands on a strided window of dx
    hp = d.h + 2 * conv.pad_h
    wp = d.w + 2 * conv.pad_w
    dxp = scratch.zeros((n, d.c, hp, wp), dt, "explicit.grad_padded")
    g4 = g.reshape(d.c, f.desc.r, f.desc.s, n, p, q)
    conv_mode = conv.mode is ConvMode.CONVOLUTION
    for ci in range(d.c):
        for r in range(f.desc.r):
            hr = f.desc.r - 1 - r if conv_mode else r
            for s in range(f.desc.s):
                wr = f.desc.s - 1 - s if conv_mode else s
                dxp[:, ci, hr:hr + (p - 1) * conv.u + 1:conv.u,
                    wr:wr + (q - 1) * conv.v + 1:conv.v] += g4[ci, r, s]
    core = dxp[:, :, conv.pad_h:conv.pad_h + d.h, conv.pad_w:conv.pad_w + d.w]
    if conv.accumulate:
        dx.array[...] += core
    else:
        dx.array[...] = core


def _implicit_backward_data(dy, f, conv, out_shape, dx, tile, threads):
    n, k, p, q = out_shape
    lowered = _LoweredMap(dx, f.desc, conv, out_shape)
    dy_map = _OutputGradMap(dy, lowered.div.pq, lowered.div.q)
    if not conv.accumulate:
        dx.array[...] = 0
    dxbuf = dx.buf

    def scatter(i0, j0, acc):
        mi, mj = acc.shape
        ws = lowered._workspace(acc.shape)
        a_off, a_h, a_w = lowered._cached(ws, "rowterms", i0, mi,
                                          lowered.row_terms)
        b_off, b_h, b_w = lowered._cached(ws, "colterms", j0, mj,
                                          lowered.col_terms)
        h = a_h[:, None] + b_h[None, :]
        w = a_w[:, None] + b_w[None, :]
        off = a_off[:, None] + b_off[None, :]
        ok = (h >= 0) & (h < lowered.H) & (w >= 0) & (w < lowered.W)
        np.add.at(dxbuf, off[ok], acc[ok])

    cfg = tile or _conv_tile(lowered.rows, k, lowered.cols)
    # scatter-add tiles can overlap in dx, so this engine stays serial
    gemm_stream(_filter_matrix(f).transposed(), dy_map.matrix(), scatter,
                cfg, threads=1)


def _direct_backward_filter(dy, x, conv, out_shape, df):
    n, k, p, q = out_shape
    fd = df.desc
    dt = x.desc.dtype
    xp = _padded_input(x, conv, "direct.padded")
    dyc = _canonical(dy.array)
    dy2 = dyc.transpose(1, 0, 2, 3).reshape(k, n * p * q)
    win_buf = scratch.alloc((fd.c, n, p, q), dt, "direct.window")
    w2 = win_buf.reshape(fd.c, n * p * q)
    grad = scratch.alloc((k, fd.c, fd.r, fd.s), dt, "direct.filter_grad")
    conv_mode = conv.mode is ConvMode.CONVOLUTION
    for r in range(fd.r):
        rr = fd.r - 1 - r if conv_mode else r
        for s in range(fd.s):
            ss = fd.s - 1 - s if conv_mode else s
            win = xp[:, :, r:r + (p - 1) * conv.u + 1:conv.u,
                     s:s + (q - 1) * conv.v + 1:conv.v]
            win_buf[...] = win.transpose(1, 0, 2, 3)
            np.matmul(dy2, w2.T, out=grad[:, :, rr, ss])
    if conv.accumulate:
        df.array[...] += grad
    else:
        df.array[...] = grad


def _explicit_backward_filter(dy, x, conv, out_shape, df, max_bytes, tile, threads):
    n, k, p, q = out_shape
    npq = n * p * q
    _, d_m = lower_explicit(x, df, conv, max_bytes)
    dy_m = StoredMatrix.from_array(
        _canonical(dy.array).transpose(1, 0, 2, 3).reshape(k, npq))
    df_m = StoredMatrix(df.buf, k, d_m.rows, d_m.rows, 1)
    cfg = tile or _conv_tile(k, npq, d_m.rows)
    gemm(dy_m, d_m.transposed(), df_m, 1.0,
         1.0 if conv.accumulate else 0.0, cfg=cfg, threads=threads)


def _implicit_backward_filter(dy, x, conv, out_shape, df, tile, threads):
    n, k, p, q = out_shape
    lowered = _LoweredMap(x, df.desc, conv, out_shape)
    dy_map = _OutputGradMap(dy, lowered.div.pq, lowered.div.q)
    df_m = StoredMatrix(df.buf, k, lowered.rows, lowered.rows, 1)
    cfg = tile or _conv_tile(k, lowered.cols, lowered.rows)
    gemm(dy_map.matrix(), lowered.data_matrix_t(), df_m, 1.0,
         1.0 if conv.accumulate else 0.0, cfg=cfg, threads=threads)


def conv_backward_data(dy: TensorView, f: FilterView, conv: ConvDesc, engine,
                       dx: TensorView, *, tile: TileConfig | None = None,
                       threads: int = 1,
                       max_lowered_bytes: int = DEFAULT_LOWERED_LIMIT) -> None:
    """Gradient with respect to the input; accumulate mode adds into dx."""
    engine = as_engine(engine)
    out_shape = _check_triplet(dx, f, conv)
    _check_out(dy, out_shape, dx.desc.dtype, "output gradient")
    if engine is Engine.DIRECT:
        _direct_backward_data(dy, f, conv, out_shape, dx)
    elif engine is Engine.EXPLICIT:
        _explicit_backward_data(dy, f, conv, out_shape, dx,
                                max_lowered_bytes, tile, threads)
    else:
        _implicit_backward_data(dy, f, conv, out_shape, dx, tile, threads)


def conv_backward_filter(dy: TensorView, x: TensorView, conv: ConvDesc, engine,
                         df: FilterView, *, tile: TileConfig | None = None,
                         threads: int = 1,
                         max_lowered_bytes: int = DEFAULT_LOWERED_LIMIT) -> None:
    """Gradient with respect to the filter; accumulate mode adds into df."""
    engine = as_engine(engine)
    out_shape = _check_triplet(x, df, conv)
    _check_out(dy, out_shape, x.desc.dtype, "output gradient")
    if engine is Engine.DIRECT:
        _direct_backward_filter(dy, x, conv, out_shape, df)
    elif engine is Engine.EXPLICIT:
        _explicit_backward_filter(dy, x, conv, out_shape, df,
                                  max_lowered_bytes, tile, threads)
    else:
        _implicit_backward_filter(dy, x, conv, out_shape, df, tile, threads)


def conv_backward_bias(dy: TensorView) -> TensorView:
    """Per-output-map sum of the output gradient, shape (1, K, 1, 1)."""
    d = dy.desc
    db = _canonical(dy.array).sum(axis=(0, 2, 3))
    out = empty_view(make_desc(1, d.c, 1, 1, elem_type=d.dtype))
    out.array[0, :, 0, 0] = db
    return out
