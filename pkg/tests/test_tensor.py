import numpy as np
import pytest

from dnnp import (
    AliasingStrides,
    IncompatibleBroadcast,
    OverlappingBuffers,
    ShapeMismatch,
    TensorView,
    ZeroExtent,
    add_broadcast,
    empty_view,
    make_desc,
    transform,
    zeros_view,
)
from dnnp.tensor import check_injective


class TestMakeDesc:
    def test_singleton_nchw(self):
        d = make_desc(1, 1, 1, 1)
        assert d.strides == (1, 1, 1, 1)

    def test_nchw_strides(self):
        d = make_desc(2, 3, 4, 5)
        assert d.strides == (60, 20, 5, 1)

    def test_nhwc_strides(self):
        d = make_desc(2, 3, 4, 5, layout="nhwc")
        assert d.strides == (60, 1, 15, 3)

    def test_zero_extent_rejected(self):
        with pytest.raises(ZeroExtent):
            make_desc(0, 1, 1, 1)
        with pytest.raises(ZeroExtent):
            make_desc(2, 3, -1, 5)

    def test_custom_strides_roundtrip(self):
        d = make_desc(2, 3, 4, 5, layout="custom", strides=(61, 20, 5, 1))
        assert d.strides == (61, 20, 5, 1)

    def test_custom_requires_strides(self):
        with pytest.raises(ShapeMismatch):
            make_desc(2, 3, 4, 5, layout="custom")
        with pytest.raises(ShapeMismatch):
            make_desc(2, 3, 4, 5, layout="nchw", strides=(60, 20, 5, 1))

    def test_aliasing_rejected(self):
        # two channels land on the same offsets
        with pytest.raises(AliasingStrides):
            make_desc(1, 2, 2, 2, layout="custom", strides=(8, 0, 2, 1))
        # h and w collide: h stride 2 with w extent 3 overlapping
        with pytest.raises(AliasingStrides):
            make_desc(1, 1, 3, 3, layout="custom", strides=(9, 9, 2, 1))

    def test_interleaved_but_injective_allowed(self):
        # strides (3, 2) over extents (2, 3): offsets 0 2 4 3 5 7, no alias
        d = make_desc(1, 1, 2, 3, layout="custom", strides=(6, 6, 3, 2))
        assert d.h == 2

    def test_negative_stride_injective(self):
        check_injective((1, 1, 4, 1), (1, 1, -3, 1))

    def test_elem_types(self):
        assert make_desc(1, 1, 1, 1, elem_type="f64").dtype == np.float64
        with pytest.raises(ShapeMismatch):
            make_desc(1, 1, 1, 1, elem_type="f16")


class TestInjectivityProperty:
    def test_preset_descriptors_hash_injective(self, rng):
        for _ in range(25):
            n, c, h, w = [int(v) for v in rng.integers(1, 7, 4)]
            for layout in ("nchw", "nhwc"):
                d = make_desc(n, c, h, w, layout=layout)
                offs = set()
                for _ in range(64):
                    i = tuple(int(rng.integers(0, e)) for e in d.extents)
                    offs.add((i, d.offset(*i)))
                mapped = [o for _, o in offs]
                assert len(set(mapped)) == len({i for i, _ in offs})

    def test_random_custom_strides_verdict_matches_bruteforce(self, rng):
        for _ in range(200):
            extents = tuple(int(v) for v in rng.integers(1, 5, 4))
            strides = tuple(int(v) for v in rng.integers(-6, 7, 4))
            offs = [
                n * strides[0] + c * strides[1] + h * strides[2] + w * strides[3]
                for n in range(extents[0]) for c in range(extents[1])
                for h in range(extents[2]) for w in range(extents[3])]
            aliased = len(set(offs)) != len(offs)
            try:
                check_injective(extents, strides)
                assert not aliased, (extents, strides)
            except AliasingStrides:
                assert aliased, (extents, strides)


class TestTensorView:
    def test_bounds_checked(self):
        d = make_desc(2, 3, 4, 5)
        with pytest.raises(ShapeMismatch):
            TensorView(d, np.zeros(d.max_offset(), dtype=np.float32))
        TensorView(d, np.zeros(d.max_offset() + 1, dtype=np.float32))

    def test_dtype_checked(self):
        d = make_desc(1, 1, 2, 2)
        with pytest.raises(ShapeMismatch):
            TensorView(d, np.zeros(4, dtype=np.float64))

    def test_negative_strides_must_stay_in_bounds(self):
        d = make_desc(1, 1, 1, 4, layout="custom", strides=(4, 4, 4, -1))
        with pytest.raises(ShapeMismatch):
            TensorView(d, np.zeros(16, dtype=np.float32))

    def test_array_roundtrip(self, rng):
        a = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
        v = TensorView.from_array(a, layout="nhwc")
        assert np.array_equal(v.array, a)


class TestTransform:
    def test_layout_roundtrip_identity(self, rng):
        a = rng.standard_normal((2, 3, 4, 5))
        src = TensorView.from_array(a)
        mid = empty_view(make_desc(2, 3, 4, 5, layout="nhwc", elem_type="f64"))
        back = empty_view(make_desc(2, 3, 4, 5, elem_type="f64"))
        transform(src, mid)
        transform(mid, back)
        assert np.array_equal(back.array, a)

    def test_alpha_zero_beta_one_keeps_dst(self, rng):
        a = rng.standard_normal((1, 2, 3, 4))
        b = rng.standard_normal((1, 2, 3, 4))
        src, dst = TensorView.from_array(a), TensorView.from_array(b)
        transform(src, dst, alpha=0.0, beta=1.0)
        assert np.array_equal(dst.array, b)

    def test_scale(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        src = TensorView.from_array(a)
        dst = zeros_view(make_desc(1, 1, 2, 2, elem_type="f64"))
        transform(src, dst, alpha=2.0, beta=0.0)
        assert np.array_equal(dst.array.reshape(2, 2),
                              [[2.0, 4.0], [6.0, 8.0]])

    def test_value_multiset_preserved_across_layouts(self, rng):
        a = rng.standard_normal((3, 2, 5, 4))
        src = TensorView.from_array(a)
        dst = empty_view(make_desc(3, 2, 5, 4, layout="nhwc", elem_type="f64"))
        transform(src, dst)
        assert np.array_equal(np.sort(dst.buf), np.sort(src.buf))
        assert np.array_equal(dst.array, a)

    def test_shape_mismatch(self):
        src = TensorView.from_array(np.zeros((1, 1, 2, 2), dtype=np.float32))
        dst = TensorView.from_array(np.zeros((1, 1, 2, 3), dtype=np.float32))
        with pytest.raises(ShapeMismatch):
            transform(src, dst)

    def test_overlap_rejected(self):
        d = make_desc(1, 1, 2, 2)
        buf = np.zeros(8, dtype=np.float32)
        with pytest.raises(OverlappingBuffers):
            transform(TensorView(d, buf[:4]), TensorView(d, buf[2:6]))
        # disjoint halves of one base buffer are fine
        transform(TensorView(d, buf[:4]), TensorView(d, buf[4:]))


class TestAddBroadcast:
    def test_per_channel_bias(self, rng):
        out = TensorView.from_array(np.zeros((1, 2, 2, 2)))
        bias = TensorView.from_array(np.array([10.0, 20.0]).reshape(1, 2, 1, 1))
        add_broadcast(bias, out)
        assert np.array_equal(out.array[0, 0], np.full((2, 2), 10.0))
        assert np.array_equal(out.array[0, 1], np.full((2, 2), 20.0))

    def test_full_shape_elementwise_sum(self, rng):
        a = rng.standard_normal((2, 2, 3, 3))
        b = rng.standard_normal((2, 2, 3, 3))
        out = TensorView.from_array(a.copy())
        add_broadcast(TensorView.from_array(b), out)
        assert np.allclose(out.array, a + b)

    def test_scaling(self, rng):
        a = rng.standard_normal((2, 3, 2, 2))
        out = TensorView.from_array(a.copy())
        bias = TensorView.from_array(rng.standard_normal((1, 3, 1, 1)))
        add_broadcast(bias, out, alpha=2.0, beta=0.5)
        expect = 2.0 * bias.array + 0.5 * a
        assert np.allclose(out.array, expect)

    def test_zero_bias_identity(self, rng):
        a = rng.standard_normal((2, 3, 4, 5))
        out = TensorView.from_array(a.copy())
        add_broadcast(TensorView.from_array(np.zeros((1, 1, 1, 1))), out)
        assert np.array_equal(out.array, a)

    def test_incompatible(self):
        out = TensorView.from_array(np.zeros((1, 4, 2, 2), dtype=np.float32))
        bias = TensorView.from_array(np.zeros((1, 3, 1, 1), dtype=np.float32))
        with pytest.raises(IncompatibleBroadcast):
            add_broadcast(bias, out)
