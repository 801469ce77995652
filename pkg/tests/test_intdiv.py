import numpy as np
import pytest

from dnnp import ZeroDivisor, div_mod, make_divider

BOUNDARIES = ([2**31 - 8 + i for i in range(16)]
              + [2**32 - 16 + i for i in range(16)])


class TestMakeDivider:
    def test_zero_divisor(self):
        with pytest.raises(ZeroDivisor):
            make_divider(0)
        with pytest.raises(ZeroDivisor):
            make_divider(-3)

    def test_identity_divisor(self):
        md = make_divider(1)
        for n in (0, 1, 17, 2**32 - 1):
            assert md.div(n) == n

    def test_power_of_two_is_shift(self):
        md = make_divider(2)
        assert [md.div(n) for n in (0, 1, 2, 3)] == [0, 0, 1, 1]
        # the multiplier path reduces to a plain shift by one
        assert md.multiplier == 1 << 31 and md.shift == 0

    def test_known_seven_constants(self):
        md = make_divider(7)
        assert (md.multiplier, md.shift, md.add_indicator) == (0x24924925, 3, True)

    def test_seven_wide_agreement(self):
        md = make_divider(7)
        ns = np.arange(1 << 20, dtype=np.uint32)
        assert np.array_equal(md.div(ns), ns // 7)
        for n in BOUNDARIES + [7 * k + e for k in (1, 3, 613566756)
                               for e in (-1, 0, 1)]:
            if 0 <= n < 2**32:
                assert md.div(n) == n // 7


class TestDivMod:
    @pytest.mark.parametrize("d,n,expect", [
        (3, 0, (0, 0)),
        (3, 10, (3, 1)),
        (12, 11, (0, 11)),
    ])
    def test_examples(self, d, n, expect):
        assert div_mod(make_divider(d), n) == expect

    def test_scalar_matches_vector(self, rng):
        for d in [1, 2, 3, 5, 7, 24, 384, 1023]:
            md = make_divider(d)
            ns = rng.integers(0, 2**32, 257, dtype=np.uint64)
            q, r = md.div_mod(ns)
            for i in (0, 100, 256):
                qs, rs = md.div_mod(int(ns[i]))
                assert (qs, rs) == (int(q[i]), int(r[i]))

    def test_reconstruction_property(self, rng):
        for _ in range(50):
            d = int(rng.integers(1, 1025))
            md = make_divider(d)
            ns = rng.integers(0, 2**32, 4096, dtype=np.uint64)
            q, r = md.div_mod(ns)
            assert np.all(q * d + r == ns.astype(np.int64))
            assert np.all((0 <= r) & (r < d))


def test_exhaustive_range_sample():
    # the full d in [1, 1024] sweep lives in the acceptance suite; keep a
    # fast representative slice here
    ns = np.arange(1 << 16, dtype=np.uint32)
    extra = np.array(BOUNDARIES, dtype=np.uint64)
    for d in list(range(1, 65)) + [127, 128, 255, 511, 641, 999, 1024]:
        md = make_divider(d)
        q, r = md.div_mod(ns)
        assert np.array_equal(q, ns // d), f"d={d}"
        assert np.array_equal(r, ns % d), f"d={d}"
        qb, rb = md.div_mod(extra)
        assert np.array_equal(qb, (extra // d).astype(np.int64)), f"d={d}"
        assert np.array_equal(rb, (extra % d).astype(np.int64)), f"d={d}"
