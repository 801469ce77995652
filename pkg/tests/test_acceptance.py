"""Acceptance suite: one test per release criterion, each printing a
PASS line (run with -s to see them stream)."""

import csv
import json
import subprocess
import sys
import time

import numpy as np

import oracles
from dnnp import (
    ConvDesc,
    Engine,
    FilterView,
    PoolingDesc,
    TensorView,
    TileConfig,
    activation_backward,
    activation_forward,
    add_broadcast,
    conv_backward_bias,
    conv_backward_data,
    conv_backward_filter,
    conv_forward,
    conv_out_shape,
    empty_view,
    gemm,
    implicit_provider,
    lower_explicit,
    make_desc,
    make_divider,
    materialize,
    output_extent,
    pool_backward,
    pool_forward,
    pool_out_shape,
    scratch,
    softmax_backward,
    softmax_forward,
    transform,
)
from dnnp.bench import LayerConfig, flop_count, format_table, peak_percent
from dnnp.bench import BenchResult, read_csv, read_json
from dnnp.conv import ConvMode
from dnnp.gemm import StoredMatrix

ENGINES = [Engine.DIRECT, Engine.EXPLICIT, Engine.IMPLICIT]


def ok(name, detail=""):
    print(f"[ACCEPTANCE] PASS: {name}" + (f" ({detail})" if detail else ""))


def random_instance(rng, dtype):
    while True:
        n, c, h, w, k = [int(v) for v in rng.integers(1, 7, 5)]
        r = int(rng.integers(1, 5))
        s = int(rng.integers(1, 5))
        u, v = [int(a) for a in rng.integers(1, 4, 2)]
        ph, pw = [int(a) for a in rng.integers(0, 3, 2)]
        if h - r + 1 + 2 * ph < 1 or w - s + 1 + 2 * pw < 1:
            continue
        mode = (ConvMode.CONVOLUTION if rng.integers(2) == 0
                else ConvMode.CROSS_CORRELATION)
        xa = rng.standard_normal((n, c, h, w)).astype(dtype)
        fa = rng.standard_normal((k, c, r, s)).astype(dtype)
        return xa, fa, ConvDesc(u, v, ph, pw, mode)


def run_engine(xa, fa, conv, engine, tile=TileConfig(8, 8, 8)):
    x = TensorView.from_array(xa)
    f = FilterView.from_array(fa)
    shape = conv_out_shape(x.desc, f.desc, conv)
    y = empty_view(make_desc(*shape, elem_type=xa.dtype))
    conv_forward(x, f, conv, engine, y, tile=tile)
    return np.ascontiguousarray(y.array)


def test_engine_equivalence_suite():
    """All three engines agree pairwise on 200+ randomized instances."""
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    count = 0
    for trial in range(200):
        dtype = np.float32 if trial % 2 == 0 else np.float64
        tol = 1e-5 if dtype == np.float32 else 1e-12
        xa, fa, conv = random_instance(rng, dtype)
        outs = [run_engine(xa, fa, conv, e) for e in ENGINES]
        scale = max(max(np.abs(o).max() for o in outs), 1e-30)
        for i in range(len(outs)):
            for j in range(i + 1, len(outs)):
                rel = np.abs(outs[i] - outs[j]).max() / scale
                assert rel <= tol, (
                    f"instance {trial}: engines {i} vs {j} differ {rel:.2e}")
        count += 1
    elapsed = time.perf_counter() - start
    assert count >= 200
    assert elapsed < 60.0, f"equivalence suite took {elapsed:.1f}s"
    ok("engine equivalence", f"{count} instances, {elapsed:.1f}s")


def test_output_extent_conformance():
    """Output extents match brute-force window enumeration everywhere."""
    checked = 0
    for h in range(1, 65):
        for r in range(1, 12):
            for u in range(1, 5):
                for pad in range(0, 6):
                    if h - r + 1 + 2 * pad < 1:
                        continue
                    expect = oracles.window_count(h, r, u, pad)
                    assert output_extent(h, r, u, pad) == expect, (h, r, u, pad)
                    checked += 1
    ok("output extent conformance", f"{checked} parameter tuples")


def test_lowering_golden():
    """The classic small lowering: 2x12 filter matrix times 12x4 data
    matrix, data matrix identical between explicit and implicit routes,
    product equal to the direct loop nest."""
    rng = np.random.default_rng(7)
    xa = rng.standard_normal((1, 3, 3, 3))
    fa = rng.standard_normal((2, 3, 2, 2))
    x, f = TensorView.from_array(xa), FilterView.from_array(fa)
    conv = ConvDesc()
    f_m, d_m = lower_explicit(x, f, conv)
    assert (f_m.rows, f_m.cols) == (2, 12)
    assert (d_m.rows, d_m.cols) == (12, 4)
    dm_virtual = materialize(implicit_provider(x, f, conv))
    assert np.array_equal(dm_virtual, d_m.array)
    o_m = StoredMatrix.from_array(np.zeros((2, 4)))
    gemm(f_m, d_m, o_m)
    ref = oracles.conv_forward(xa, fa)
    got = o_m.array.reshape(2, 1, 2, 2).transpose(1, 0, 2, 3)
    assert np.abs(got - ref).max() <= 1e-12
    ok("lowering golden vectors", "F_m 2x12, D_m 12x4, O_m 2x4")


def test_magic_division_exhaustive():
    """Exact quotient/remainder for d in [1, 1024] over 2^20 numerators
    plus boundary values near 2^31 and 2^32."""
    start = time.perf_counter()
    ns = np.arange(1 << 20, dtype=np.int64)
    boundaries = np.array(
        [2**31 - 16 + i for i in range(32)]
        + [2**32 - 32 + i for i in range(32)], dtype=np.int64)
    failures = 0
    for d in range(1, 1025):
        md = make_divider(d)
        q, r = md.div_mod(ns)
        if not (np.array_equal(q, ns // d) and np.array_equal(r, ns % d)):
            failures += 1
        qb, rb = md.div_mod(boundaries)
        if not (np.array_equal(qb, boundaries // d)
                and np.array_equal(rb, boundaries % d)):
            failures += 1
    elapsed = time.perf_counter() - start
    assert failures == 0
    assert elapsed < 30.0, f"magic division sweep took {elapsed:.1f}s"
    ok("magic division", f"1024 divisors x 2^20+64 numerators, {elapsed:.1f}s")


def _fd_check(got, func, arr, what):
    ref = oracles.fd_gradient(func, arr)
    oracles.assert_close(got, ref, rel=1e-4, abs_floor=1e-7, what=what)


def _conv_gradient_cases(rng, count):
    for _ in range(count):
        while True:
            n, c, h, w = [int(v) for v in rng.integers(1, 4, 4)]
            k = int(rng.integers(1, 4))
            r = int(rng.integers(1, 4))
            s = int(rng.integers(1, 4))
            u, v = [int(a) for a in rng.integers(1, 3, 2)]
            ph, pw = [int(a) for a in rng.integers(0, 2, 2)]
            if h - r + 1 + 2 * ph >= 1 and w - s + 1 + 2 * pw >= 1:
                break
        mode = (ConvMode.CONVOLUTION if rng.integers(2) == 0
                else ConvMode.CROSS_CORRELATION)
        conv = ConvDesc(u, v, ph, pw, mode)
        xa = rng.standard_normal((n, c, h, w))
        fa = rng.standard_normal((k, c, r, s))
        dya = rng.standard_normal(run_engine(xa, fa, conv, Engine.DIRECT).shape)
        yield xa, fa, dya, conv


def test_gradient_suite_conv():
    rng = np.random.default_rng(2002)
    engines = iter(ENGINES * 17)  # rotate engines across the 50 cases
    for xa, fa, dya, conv in _conv_gradient_cases(rng, 50):
        engine = next(engines)
        x, f = TensorView.from_array(xa), FilterView.from_array(fa)
        dy = TensorView.from_array(dya)
        dx = empty_view(make_desc(*xa.shape, elem_type="f64"))
        conv_backward_data(dy, f, conv, engine, dx, tile=TileConfig(4, 4, 3))
        _fd_check(dx.array,
                  lambda: float((run_engine(xa, fa, conv, Engine.DIRECT)
                                 * dya).sum()),
                  xa, "backward data")
        df = FilterView.from_array(np.zeros_like(fa))
        conv_backward_filter(dy, x, conv, engine, df, tile=TileConfig(4, 4, 3))
        _fd_check(df.array,
                  lambda: float((run_engine(xa, fa, conv, Engine.DIRECT)
                                 * dya).sum()),
                  fa, "backward filter")
    ok("gradient suite: convolution data/filter", "50 instances each")


def test_gradient_suite_bias():
    rng = np.random.default_rng(2003)
    for _ in range(50):
        n, k, p, q = [int(v) for v in rng.integers(1, 4, 4)]
        dya = rng.standard_normal((n, k, p, q))
        db = conv_backward_bias(TensorView.from_array(dya)).array[0, :, 0, 0]
        ba = np.zeros((1, k, 1, 1))
        ya = rng.standard_normal((n, k, p, q))

        def scalar():
            out = TensorView.from_array(ya.copy())
            add_broadcast(TensorView.from_array(ba), out)
            return float((out.array * dya).sum())

        _fd_check(db.reshape(1, k, 1, 1), scalar, ba, "backward bias")
    ok("gradient suite: bias", "50 instances")


def test_gradient_suite_activations():
    rng = np.random.default_rng(2004)
    kinds = ["sigmoid", "relu", "tanh"]
    for i in range(50):
        kind = kinds[i % 3]
        shape = tuple(int(v) for v in rng.integers(1, 4, 4))
        xa = rng.standard_normal(shape)
        if kind == "relu":
            xa[np.abs(xa) < 0.05] += 0.2  # keep away from the kink
        dya = rng.standard_normal(shape)

        def fwd(arr=xa):
            xv = TensorView.from_array(arr)
            y = empty_view(make_desc(*shape, elem_type="f64"))
            activation_forward(kind, xv, y)
            return y

        y = fwd()
        dx = empty_view(make_desc(*shape, elem_type="f64"))
        activation_backward(kind, y, TensorView.from_array(dya), dx)
        _fd_check(dx.array, lambda: float((fwd().array * dya).sum()), xa,
                  f"activation {kind}")
    ok("gradient suite: activations", "50 instances over 3 kinds")


def test_gradient_suite_softmax():
    rng = np.random.default_rng(2005)
    for i in range(50):
        mode = "per_image" if i % 2 == 0 else "per_spatial"
        shape = tuple(int(v) for v in rng.integers(1, 4, 4))
        xa = rng.standard_normal(shape)
        dya = rng.standard_normal(shape)

        def fwd(arr=xa):
            y = empty_view(make_desc(*shape, elem_type="f64"))
            softmax_forward(mode, TensorView.from_array(arr), y)
            return y

        dx = empty_view(make_desc(*shape, elem_type="f64"))
        softmax_backward(mode, fwd(), TensorView.from_array(dya), dx)
        _fd_check(dx.array, lambda: float((fwd().array * dya).sum()), xa,
                  f"softmax {mode}")
    ok("gradient suite: softmax", "50 instances over both modes")


def test_gradient_suite_pooling():
    rng = np.random.default_rng(2006)
    for i in range(50):
        kind = "max" if i % 2 == 0 else "average"
        n, c = [int(v) for v in rng.integers(1, 3, 2)]
        h, w = [int(v) for v in rng.integers(2, 5, 2)]
        wh = int(rng.integers(1, h + 1))
        ww = int(rng.integers(1, w + 1))
        sh, sw = [int(a) for a in rng.integers(1, 3, 2)]
        pd = PoolingDesc(kind, wh, ww, sh, sw, 0, 0)
        if kind == "max":
            xa = np.argsort(rng.standard_normal(n * c * h * w)).astype(
                np.float64).reshape(n, c, h, w)
        else:
            xa = rng.standard_normal((n, c, h, w))
        x = TensorView.from_array(xa)
        oshape = pool_out_shape(pd, x)
        dya = rng.standard_normal(oshape)

        def fwd(arr=xa):
            xv = TensorView.from_array(arr)
            y = empty_view(make_desc(*oshape, elem_type="f64"))
            am = np.empty(oshape, dtype=np.int64)
            pool_forward(pd, xv, y, am)
            return y, am

        y, am = fwd()
        dx = empty_view(make_desc(n, c, h, w, elem_type="f64"))
        pool_backward(pd, y, TensorView.from_array(dya), x, dx, am)
        _fd_check(dx.array, lambda: float((fwd()[0].array * dya).sum()), xa,
                  f"pooling {kind}")
    ok("gradient suite: pooling", "50 instances over both kinds")


def test_zero_auxiliary_memory():
    """The implicit engine's tracked transient allocations stay bounded by
    tile + output sizes and do not move as the duplication factor r*s
    grows 25x."""
    tile = TileConfig(16, 16, 8)
    rng = np.random.default_rng(3001)
    xa64 = rng.standard_normal((2, 3, 8, 8))
    totals = {}
    for r in (1, 3, 5):
        fa = rng.standard_normal((4, 3, r, r))
        x = TensorView.from_array(xa64)
        f = FilterView.from_array(fa)
        conv = ConvDesc(1, 1, r // 2, r // 2)
        shape = conv_out_shape(x.desc, f.desc, conv)
        y = empty_view(make_desc(*shape, elem_type="f64"))
        with scratch.track() as log:
            conv_forward(x, f, conv, Engine.IMPLICIT, y, tile=tile)
        out_bytes = int(np.prod(shape)) * 8
        tile_bytes = max(tile.tile_m * tile.tile_k,
                         tile.tile_k * tile.tile_n,
                         tile.tile_m * tile.tile_n) * 8
        assert log.max_bytes <= max(out_bytes, tile_bytes), (
            f"r={r}: allocation of {log.max_bytes} exceeds tile/output bound")
        assert log.total_bytes <= out_bytes + 16 * tile_bytes
        totals[r] = log.total_bytes
    assert totals[1] == totals[3] == totals[5], totals
    ok("zero auxiliary memory",
       f"scratch constant at {totals[1]} bytes while r*s grows 1->25")


def test_layout_invariance_full_op_set():
    """Every op yields identical f64 results on NCHW and NHWC views."""
    rng = np.random.default_rng(4001)

    def both_layouts(apply):
        outs = []
        for layout in ("nchw", "nhwc"):
            outs.append(apply(layout))
        assert np.array_equal(outs[0], outs[1])

    xa = rng.standard_normal((2, 3, 6, 7))
    fa = rng.standard_normal((4, 3, 3, 3))
    conv = ConvDesc(2, 1, 1, 1, ConvMode.CONVOLUTION)
    x_nchw = TensorView.from_array(xa)
    oshape = conv_out_shape(x_nchw.desc, FilterView.from_array(fa).desc, conv)
    dya = rng.standard_normal(oshape)

    for engine in ENGINES:
        def fwd(layout, engine=engine):
            x = TensorView.from_array(xa, layout=layout)
            f = FilterView.from_array(fa)
            y = empty_view(make_desc(*oshape, layout=layout, elem_type="f64"))
            conv_forward(x, f, conv, engine, y, tile=TileConfig(8, 8, 8))
            return np.ascontiguousarray(y.array)

        def bwd_data(layout, engine=engine):
            dy = TensorView.from_array(dya, layout=layout)
            f = FilterView.from_array(fa)
            dx = empty_view(make_desc(*xa.shape, layout=layout,
                                      elem_type="f64"))
            conv_backward_data(dy, f, conv, engine, dx,
                               tile=TileConfig(8, 8, 8))
            return np.ascontiguousarray(dx.array)

        def bwd_filter(layout, engine=engine):
            dy = TensorView.from_array(dya, layout=layout)
            x = TensorView.from_array(xa, layout=layout)
            df = FilterView.from_array(np.zeros_like(fa))
            conv_backward_filter(dy, x, conv, engine, df,
                                 tile=TileConfig(8, 8, 8))
            return df.array.copy()

        both_layouts(fwd)
        both_layouts(bwd_data)
        both_layouts(bwd_filter)

    both_layouts(lambda layout: conv_backward_bias(
        TensorView.from_array(dya, layout=layout)).array.copy())

    def via_transform(layout):
        src = TensorView.from_array(xa, layout=layout)
        dst = empty_view(make_desc(*xa.shape, elem_type="f64"))
        transform(src, dst, alpha=1.5, beta=0.0)
        return dst.array.copy()

    both_layouts(via_transform)

    ba = rng.standard_normal((1, 3, 1, 1))

    def via_bias(layout):
        out = TensorView.from_array(xa, layout=layout)
        add_broadcast(TensorView.from_array(ba), out, alpha=2.0, beta=0.5)
        return np.ascontiguousarray(out.array)

    both_layouts(via_bias)

    dy_full = rng.standard_normal(xa.shape)
    for kind in ("sigmoid", "relu", "tanh"):
        def act(layout, kind=kind):
            x = TensorView.from_array(xa, layout=layout)
            y = empty_view(make_desc(*xa.shape, layout=layout,
                                     elem_type="f64"))
            activation_forward(kind, x, y)
            dx = empty_view(make_desc(*xa.shape, layout=layout,
                                      elem_type="f64"))
            activation_backward(kind, y,
                                TensorView.from_array(dy_full, layout=layout),
                                dx)
            return np.concatenate([np.ascontiguousarray(y.array).ravel(),
                                   np.ascontiguousarray(dx.array).ravel()])

        both_layouts(act)

    for mode in ("per_image", "per_spatial"):
        def smax(layout, mode=mode):
            x = TensorView.from_array(xa, layout=layout)
            y = empty_view(make_desc(*xa.shape, layout=layout,
                                     elem_type="f64"))
            softmax_forward(mode, x, y)
            dx = empty_view(make_desc(*xa.shape, layout=layout,
                                      elem_type="f64"))
            softmax_backward(mode, y,
                             TensorView.from_array(dy_full, layout=layout),
                             dx)
            return np.concatenate([np.ascontiguousarray(y.array).ravel(),
                                   np.ascontiguousarray(dx.array).ravel()])

        both_layouts(smax)

    for kind in ("max", "average"):
        pd = PoolingDesc(kind, 2, 3, 2, 1, 1, 1)
        pshape = pool_out_shape(pd, x_nchw)
        pdy = rng.standard_normal(pshape)

        def pool(layout, kind=kind, pd=pd, pshape=pshape, pdy=pdy):
            x = TensorView.from_array(xa, layout=layout)
            y = empty_view(make_desc(*pshape, layout=layout, elem_type="f64"))
            am = np.empty(pshape, dtype=np.int64)
            pool_forward(pd, x, y, am)
            dx = empty_view(make_desc(*xa.shape, layout=layout,
                                      elem_type="f64"))
            pool_backward(pd, y, TensorView.from_array(pdy, layout=layout),
                          x, dx, am)
            return np.concatenate([np.ascontiguousarray(y.array).ravel(),
                                   np.ascontiguousarray(dx.array).ravel()])

        both_layouts(pool)

    ok("layout invariance", "conv fwd/bwd, bias, transform, broadcast add, "
       "activations, softmax, pooling")


def test_bench_cli_end_to_end(tmp_path):
    """Full verified benchmark of the bundled layer collection at batch 16
    through the real CLI, emitting both CSV and JSON."""
    out = tmp_path / "results"
    cmd = [sys.executable, "-m", "dnnp.bench", "run",
           "--suite", "table2.suite", "--batch", "16", "--verify",
           "--repeats", "1", "--threads", "2",
           "--format", "csv,json", "--out", str(out), "--quiet"]
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=1700)
    assert proc.returncode == 0, proc.stderr[-2000:]
    with open(out.with_suffix(".csv")) as fh:
        rows_csv = read_csv(fh)
    with open(out.with_suffix(".json")) as fh:
        rows_json = read_json(fh)
    assert rows_csv == rows_json
    layer_rows = [r for r in rows_csv if not r.layer.startswith("suite_")]
    assert len(layer_rows) == 5 * 3
    assert all(r.batch == 16 for r in layer_rows)
    assert all(r.max_abs_err is not None and r.max_abs_err <= 1e-4
               for r in layer_rows)
    assert {r.engine for r in layer_rows} == {"direct", "explicit", "implicit"}
    # flop accounting at the full reference batch
    cfg = LayerConfig("layer5", 128, 128, 13, 13, 384, 3, 3)
    assert flop_count(cfg) == 13_702_791_168
    # utilization reporting: a 990-gflops result against a 4290 peak
    pct = peak_percent(990.0, 4290.0)
    assert abs(pct - 23.0769) < 1e-3
    row = BenchResult("hypothetical", "implicit", "f32", 128, None, None,
                      990.0, pct, None)
    assert "23%" in format_table([row])
    worst = max(r.max_abs_err for r in layer_rows)
    ok("bench CLI end to end",
       f"15 verified rows, worst err {worst:.2e}, CSV == JSON")
