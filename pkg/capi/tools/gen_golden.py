#!/usr/bin/env python3
"""Produce the native-path output bytes for the example convolution.

Must stay in lockstep with examples/conv_example.c: same deterministic
inputs, same problem, same engine. The Makefile compares the two outputs
bit for bit.
"""

import sys

import numpy as np

from dnnp import (ConvDesc, Engine, FilterView, TensorView, conv_forward,
                  conv_out_shape, empty_view, make_desc)

N, C, H, W = 1, 3, 3, 3
K, R, S = 2, 2, 2


def main():
    x = np.array([(i % 11) - 5 for i in range(N * C * H * W)],
                 dtype=np.float32).reshape(N, C, H, W)
    f = np.array([((i * 3) % 7) - 3 for i in range(K * C * R * S)],
                 dtype=np.float32).reshape(K, C, R, S)
    xv = TensorView.from_array(x)
    fv = FilterView.from_array(f)
    conv = ConvDesc()
    y = empty_view(make_desc(*conv_out_shape(xv.desc, fv.desc, conv)))
    conv_forward(xv, fv, conv, Engine.IMPLICIT, y)
    out = np.ascontiguousarray(y.array)
    with open(sys.argv[1], "wb") as fh:
        fh.write(out.tobytes())
    print("native output:", out.ravel().tolist())


if __name__ == "__main__":
    main()
