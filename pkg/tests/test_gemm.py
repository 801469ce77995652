import numpy as np
import pytest

import oracles
from dnnp import (
    DimMismatch,
    StoredMatrix,
    TileConfig,
    VirtualMatrix,
    gemm,
    materialize,
)


def stored(arr):
    return StoredMatrix.from_array(np.asarray(arr))


def run_gemm(a, b, alpha=1.0, beta=0.0, cfg=None, c_init=None, threads=1):
    c = np.zeros((a.rows, b.cols), dtype=a.dtype) if c_init is None else c_init.copy()
    cm = stored(c)
    gemm(a, b, cm, alpha, beta, cfg=cfg, threads=threads)
    return cm.array.copy()


class TestGemmBasics:
    def test_identity(self, rng):
        b = rng.standard_normal((3, 2))
        out = run_gemm(stored(np.eye(3)), stored(b))
        assert np.array_equal(out, b)

    def test_one_by_one(self):
        out = run_gemm(stored([[2.0]]), stored([[3.0]]))
        assert out == [[6.0]]

    def test_ragged_tiles_match_triple_loop(self, rng):
        a = rng.standard_normal((7, 9)).astype(np.float32)
        b = rng.standard_normal((9, 5)).astype(np.float32)
        ref = oracles.matmul(a.astype(np.float64), b.astype(np.float64))
        out = run_gemm(stored(a), stored(b), cfg=TileConfig(4, 4, 3))
        assert np.abs(out - ref).max() <= 1e-6 * np.abs(ref).max()

    def test_dim_mismatch(self, rng):
        a = stored(rng.standard_normal((3, 4)))
        b = stored(rng.standard_normal((5, 2)))
        with pytest.raises(DimMismatch):
            run_gemm(a, b)

    def test_output_shape_checked(self, rng):
        a = stored(rng.standard_normal((3, 4)))
        b = stored(rng.standard_normal((4, 2)))
        bad = stored(np.zeros((3, 3)))
        with pytest.raises(DimMismatch):
            gemm(a, b, bad)

    def test_alpha_beta(self, rng):
        a = rng.standard_normal((5, 6))
        b = rng.standard_normal((6, 4))
        c0 = rng.standard_normal((5, 4))
        out = run_gemm(stored(a), stored(b), alpha=2.5, beta=-1.0, c_init=c0)
        assert np.allclose(out, 2.5 * a @ b - c0, atol=1e-12)


class TestGemmProperties:
    def test_tile_config_independence(self, rng):
        a = rng.standard_normal((13, 17))
        b = rng.standard_normal((17, 11))
        ref = run_gemm(stored(a), stored(b), cfg=TileConfig(64, 64, 64))
        for cfg in [TileConfig(1, 1, 1), TileConfig(4, 4, 4),
                    TileConfig(5, 3, 7), TileConfig(13, 11, 17),
                    TileConfig(64, 64, 8)]:
            out = run_gemm(stored(a), stored(b), cfg=cfg)
            assert np.abs(out - ref).max() <= 1e-12 * np.abs(ref).max()

    def test_accumulation_linearity(self, rng):
        a = rng.standard_normal((6, 7))
        b = rng.standard_normal((7, 6))
        c0 = rng.standard_normal((6, 6))
        once = run_gemm(stored(a), stored(b), alpha=1.0, beta=1.0, c_init=c0)
        cm = stored(c0)
        gemm(stored(a), stored(b), cm, 0.5, 1.0)
        gemm(stored(a), stored(b), cm, 0.5, 1.0)
        assert np.abs(cm.array - once).max() <= 1e-12 * np.abs(once).max()

    def test_virtual_equals_stored_bitwise(self, rng):
        a = rng.standard_normal((9, 14)).astype(np.float32)
        b = rng.standard_normal((14, 10)).astype(np.float32)

        def wrap_virtual(arr):
            def fill(i0, j0, out):
                th, tw = out.shape
                mi = min(th, arr.shape[0] - i0)
                mj = min(tw, arr.shape[1] - j0)
                out[mi:, :] = 0
                out[:mi, mj:] = 0
                out[:mi, :mj] = arr[i0:i0 + mi, j0:j0 + mj]

            return VirtualMatrix(arr.shape[0], arr.shape[1], arr.dtype,
                                 lambda i, j: arr[i, j], fill)

        for cfg in [TileConfig(4, 4, 3), TileConfig(64, 64, 8)]:
            s = run_gemm(stored(a), stored(b), cfg=cfg)
            v = run_gemm(wrap_virtual(a), wrap_virtual(b), cfg=cfg)
            assert np.array_equal(s, v)

    def test_virtual_elementwise_fallback(self, rng):
        arr = rng.standard_normal((5, 4))
        vm = VirtualMatrix(5, 4, arr.dtype, lambda i, j: arr[i, j])
        assert np.array_equal(materialize(vm), arr)
        out = run_gemm(vm, stored(np.eye(4)), cfg=TileConfig(2, 2, 2))
        assert np.allclose(out, arr, atol=1e-15)

    def test_threads_bitwise_equal(self, rng):
        a = rng.standard_normal((33, 29)).astype(np.float32)
        b = rng.standard_normal((29, 31)).astype(np.float32)
        cfg = TileConfig(8, 8, 8)
        one = run_gemm(stored(a), stored(b), cfg=cfg, threads=1)
        four = run_gemm(stored(a), stored(b), cfg=cfg, threads=4)
        assert np.array_equal(one, four)

    def test_transposed_view(self, rng):
        a = rng.standard_normal((6, 3))
        at = stored(a).transposed()
        assert np.array_equal(at.array, a.T)
        out = run_gemm(at, stored(a))
        assert np.allclose(out, a.T @ a, atol=1e-12)
