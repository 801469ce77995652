"""Tiled matrix multiplication over abstract tile providers.

The engine never looks at a whole operand: it asks each provider to fill
fixed-size local tiles and accumulates k-major into an output tile. A
provider can be a stored strided matrix or a virtual one defined by an
index rule, which is how the convolution's lowered data matrix gets
multiplied without ever being materialized in full.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import scratch
from .errors import DimMismatch, ShapeMismatch


@dataclass(frozen=True)
class TileConfig:
    """Output tile rows/cols and accumulation-depth step."""

    tile_m: int = 64
    tile_n: int = 64
    tile_k: int = 8

    def __post_init__(self):
        if min(self.tile_m, self.tile_n, self.tile_k) < 1:
            raise ValueError(f"tile sizes must be positive: {self}")


class StoredMatrix:
    """A matrix living in a flat buffer with arbitrary row/col strides."""

    def __init__(self, buf: np.ndarray, rows: int, cols: int,
                 row_stride: int, col_stride: int):
        buf = np.asarray(buf)
        if buf.ndim != 1:
            raise ShapeMismatch("matrix buffer must be one-dimensional")
        if rows < 1 or cols < 1:
            raise DimMismatch(f"matrix extents must be >= 1, got {rows}x{cols}")
        hi = max(0, (rows - 1) * row_stride) + max(0, (cols - 1) * col_stride)
        lo = min(0, (rows - 1) * row_stride) + min(0, (cols - 1) * col_stride)
        if lo < 0 or hi >= buf.size:
            raise ShapeMismatch("buffer too small for matrix extents/strides")
        self.buf = buf
        self.rows = rows
        self.cols = cols
        self.row_stride = row_stride
        self.col_stride = col_stride

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "StoredMatrix":
        arr = np.ascontiguousarray(arr)
        if arr.ndim != 2:
            raise ShapeMismatch("expected a 2-D array")
        return cls(arr.reshape(-1), arr.shape[0], arr.shape[1], arr.shape[1], 1)

    @property
    def dtype(self) -> np.dtype:
        return self.buf.dtype

    @property
    def array(self) -> np.ndarray:
        """2-D ndarray aliasing the buffer."""
        it = self.buf.itemsize
        return np.lib.stride_tricks.as_strided(
            self.buf, shape=(self.rows, self.cols),
            strides=(self.row_stride * it, self.col_stride * it))

    def transposed(self) -> "StoredMatrix":
        """Zero-copy transpose (strides swapped)."""
        return StoredMatrix(self.buf, self.cols, self.rows,
                            self.col_stride, self.row_stride)

    def element(self, i: int, j: int):
        return self.buf[i * self.row_stride + j * self.col_stride]

    def fill_tile(self, i0: int, j0: int, out: np.ndarray) -> None:
        mi = min(out.shape[0], max(0, self.rows - i0))
        mj = min(out.shape[1], max(0, self.cols - j0))
        if mi < out.shape[0] or mj < out.shape[1]:
            out[mi:, :] = 0
            out[:mi, mj:] = 0
        if mi and mj:
            out[:mi, :mj] = self.array[i0:i0 + mi, j0:j0 + mj]


class VirtualMatrix:
    """A matrix defined by an index rule instead of storage.

    element_fn answers single (i, j) lookups; fill_fn, when given, bulk-fills
    a zero-padded local tile and is what the multiply engine actually calls
    on the hot path.
    """

    def __init__(self, rows: int, cols: int, dtype,
                 element_fn: Callable[[int, int], float],
                 fill_fn: Callable[[int, int, np.ndarray], None] | None = None):
        if rows < 1 or cols < 1:
            raise DimMismatch(f"matrix extents must be >= 1, got {rows}x{cols}")
        self.rows = rows
        self.cols = cols
        self.dtype = np.dtype(dtype)
        self.element_fn = element_fn
        self.fill_fn = fill_fn

    def element(self, i: int, j: int):
        return self.element_fn(i, j)

    def fill_tile(self, i0: int, j0: int, out: np.ndarray) -> None:
        if self.fill_fn is not None:
            self.fill_fn(i0, j0, out)
            return
        for di in range(out.shape[0]):
            for dj in range(out.shape[1]):
                i, j = i0 + di, j0 + dj
                out[di, dj] = (
                    self.element_fn(i, j) if i < self.rows and j < self.cols else 0
                )


MatrixSpec = Union[StoredMatrix, VirtualMatrix]


def materialize(m: MatrixSpec) -> np.ndarray:
    """Dense copy of any provider, mostly for tests and small problems."""
    out = np.empty((m.rows, m.cols), dtype=m.dtype)
    m.fill_tile(0, 0, out)
    return out


def _tile_jobs(rows: int, cols: int, tm: int, tn: int):
    return [(i0, j0) for i0 in range(0, rows, tm) for j0 in range(0, cols, tn)]


def gemm_stream(a: MatrixSpec, b: MatrixSpec,
                sink: Callable[[int, int, np.ndarray], None],
                cfg: TileConfig, threads: int = 1) -> None:
    """Run the tiled multiply, handing each finished output tile to sink.

    sink(i0, j0, acc) receives the in-range part of the accumulated tile;
    tiles are disjoint, so a sink writing to disjoint regions is safe under
    threads > 1. The caller owns any alpha/beta combination.
    """
    if a.cols != b.rows:
        raise DimMismatch(f"inner dimensions {a.cols} vs {b.rows}")
    if a.dtype != b.dtype:
        raise ShapeMismatch(f"operand dtypes {a.dtype} vs {b.dtype}")
    rows = a.rows
    cols = b.cols
    tm, tn, tk = cfg.tile_m, cfg.tile_n, cfg.tile_k
    nk = -(-a.cols // tk)
    jobs = _tile_jobs(rows, cols, tm, tn)

    def run(job_slice):
        a_t = scratch.alloc((tm, tk), a.dtype, "gemm.tile_a")
        b_t = scratch.alloc((tk, tn), a.dtype, "gemm.tile_b")
        prod = scratch.alloc((tm, tn), a.dtype, "gemm.tile_prod")
        acc = scratch.alloc((tm, tn), a.dtype, "gemm.tile_acc")
        for i0, j0 in job_slice:
            acc[...] = 0
            for kk in range(nk):
                k0 = kk * tk
                a.fill_tile(i0, k0, a_t)
                b.fill_tile(k0, j0, b_t)
                np.matmul(a_t, b_t, out=prod)
                acc += prod
            sink(i0, j0, acc[:min(tm, rows - i0), :min(tn, cols - j0)])

    if threads <= 1 or len(jobs) == 1:
        run(jobs)
    else:
        nw = min(threads, len(jobs))
        chunks = [jobs[w::nw] for w in range(nw)]
        with ThreadPoolExecutor(max_workers=nw) as pool:
            for f in [pool.submit(run, ch) for ch in chunks]:
                f.result()


def gemm(a: MatrixSpec, b: MatrixSpec, c: StoredMatrix,
         alpha: float = 1.0, beta: float = 0.0,
         cfg: TileConfig | None = None, threads: int = 1) -> None:
    """c := alpha * a @ b + beta * c, computed tile by tile."""
    if not isinstance(c, StoredMatrix):
        raise ShapeMismatch("gemm output must be a stored matrix")
    if c.rows != a.rows or c.cols != b.cols:
        raise DimMismatch(
            f"output {c.rows}x{c.cols} for {a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    if c.dtype != a.dtype:
        raise ShapeMismatch(f"output dtype {c.dtype} vs operand {a.dtype}")
    cfg = cfg or TileConfig()
    c2d = c.array

    def store(i0, j0, acc):
        np.multiply(acc, alpha, out=acc)
        dst = c2d[i0:i0 + acc.shape[0], j0:j0 + acc.shape[1]]
        if beta == 0:
            dst[...] = acc
        else:
            dst *= beta
            dst += acc

    gemm_stream(a, b, store, cfg, threads=threads)
