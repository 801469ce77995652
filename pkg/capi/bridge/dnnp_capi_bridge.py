"""Adapter between the C API and the dnnp package.

The C layer hands raw buffer addresses plus descriptor tuples across;
this module wraps them zero-copy and calls the library. Every entry
returns an integer status (the dnnp_status values from dnnp.h) and never
raises: the C side maps nonzero returns straight through.
"""

import ctypes

import numpy as np

import dnnp
from dnnp import errors

OK = 0
BAD_PARAM = 1
SHAPE_MISMATCH = 2
ALLOC_FAILED = 3
NOT_SUPPORTED = 4

_ELEM = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}
_CTYPE = {0: ctypes.c_float, 1: ctypes.c_double}
_ENGINE = {0: dnnp.Engine.DIRECT, 1: dnnp.Engine.EXPLICIT, 2: dnnp.Engine.IMPLICIT}
_MODE = {0: "convolution", 1: "cross_correlation"}
_ACT = {0: "sigmoid", 1: "relu", 2: "tanh"}
_SOFTMAX = {0: "per_image", 1: "per_spatial"}
_POOL = {0: "max", 1: "average"}

_BAD_PARAM_ERRORS = (errors.ZeroExtent, errors.AliasingStrides,
                     errors.ZeroDivisor)
_SHAPE_ERRORS = (errors.ShapeMismatch, errors.IncompatibleBroadcast,
                 errors.DimMismatch, errors.EmptyOutput, errors.EmptyWindow,
                 errors.MissingArgmax, errors.OverlappingBuffers)


def _status_of(exc):
    if isinstance(exc, _BAD_PARAM_ERRORS):
        return BAD_PARAM
    if isinstance(exc, _SHAPE_ERRORS):
        return SHAPE_MISMATCH
    if isinstance(exc, (errors.AllocTooLarge, MemoryError)):
        return ALLOC_FAILED
    if isinstance(exc, (KeyError, ValueError, TypeError)):
        return BAD_PARAM
    return NOT_SUPPORTED


def _guard(fn):
    def wrapped(*args):
        try:
            fn(*args)
            return OK
        except Exception as exc:  # noqa: BLE001 - everything becomes a status
            return _status_of(exc)

    return wrapped


def _tensor(args):
    addr, n, c, h, w, sn, sc, sh, sw, elem = args
    desc = dnnp.make_desc(n, c, h, w, layout="custom",
                          strides=(sn, sc, sh, sw), elem_type=_ELEM[elem])
    count = desc.max_offset() + 1
    raw = (_CTYPE[elem] * count).from_address(addr)
    return dnnp.TensorView(desc, np.frombuffer(raw, dtype=_ELEM[elem]))


def _filter(args):
    addr, k, c, r, s, elem = args
    desc = dnnp.make_filter_desc(k, c, r, s, elem_type=_ELEM[elem])
    raw = (_CTYPE[elem] * desc.size).from_address(addr)
    return dnnp.FilterView(desc, np.frombuffer(raw, dtype=_ELEM[elem]))


def _conv(args):
    u, v, pad_h, pad_w, mode, accumulate = args
    return dnnp.ConvDesc(u, v, pad_h, pad_w, _MODE[mode], bool(accumulate))


def _scalar(addr, elem):
    return float(ctypes.cast(addr, ctypes.POINTER(_CTYPE[elem])).contents.value)


def _argmax(addr, shape):
    count = int(np.prod(shape))
    raw = (ctypes.c_int64 * count).from_address(addr)
    return np.frombuffer(raw, dtype=np.int64).reshape(shape)


@_guard
def conv_forward(alpha_addr, x_args, f_args, conv_args, engine, beta_addr,
                 y_args, threads):
    x, f, conv = _tensor(x_args), _filter(f_args), _conv(conv_args)
    y = _tensor(y_args)
    alpha = _scalar(alpha_addr, y_args[-1])
    beta = _scalar(beta_addr, y_args[-1])
    dnnp.conv_forward(x, f, conv, _ENGINE[engine], y, alpha=alpha, beta=beta,
                      threads=threads)


@_guard
def conv_backward_data(f_args, dy_args, conv_args, engine, dx_args, threads):
    dnnp.conv_backward_data(_tensor(dy_args), _filter(f_args),
                            _conv(conv_args), _ENGINE[engine],
                            _tensor(dx_args), threads=threads)


@_guard
def conv_backward_filter(x_args, dy_args, conv_args, engine, df_args, threads):
    dnnp.conv_backward_filter(_tensor(dy_args), _tensor(x_args),
                              _conv(conv_args), _ENGINE[engine],
                              _filter(df_args), threads=threads)


@_guard
def conv_backward_bias(dy_args, db_args):
    db = _tensor(db_args)
    dy = _tensor(dy_args)
    if db.desc.extents != (1, dy.desc.c, 1, 1):
        raise errors.ShapeMismatch(
            f"bias gradient must be (1, {dy.desc.c}, 1, 1)")
    result = dnnp.conv_backward_bias(dy)
    db.array[...] = result.array


@_guard
def activation_forward(kind, x_args, y_args):
    dnnp.activation_forward(_ACT[kind], _tensor(x_args), _tensor(y_args))


@_guard
def activation_backward(kind, y_args, dy_args, dx_args):
    dnnp.activation_backward(_ACT[kind], _tensor(y_args), _tensor(dy_args),
                             _tensor(dx_args))


@_guard
def softmax_forward(mode, x_args, y_args):
    dnnp.softmax_forward(_SOFTMAX[mode], _tensor(x_args), _tensor(y_args))


@_guard
def softmax_backward(mode, y_args, dy_args, dx_args):
    dnnp.softmax_backward(_SOFTMAX[mode], _tensor(y_args), _tensor(dy_args),
                          _tensor(dx_args))


def _pooling(args):
    kind, wh, ww, sh, sw, ph, pw = args
    return dnnp.PoolingDesc(_POOL[kind], wh, ww, sh, sw, ph, pw)


@_guard
def pooling_forward(pool_args, x_args, y_args, argmax_addr):
    pd = _pooling(pool_args)
    x, y = _tensor(x_args), _tensor(y_args)
    argmax = (_argmax(argmax_addr, y.desc.extents)
              if argmax_addr else None)
    dnnp.pool_forward(pd, x, y, argmax)


@_guard
def pooling_backward(pool_args, y_args, dy_args, x_args, dx_args, argmax_addr):
    pd = _pooling(pool_args)
    y, dy = _tensor(y_args), _tensor(dy_args)
    x, dx = _tensor(x_args), _tensor(dx_args)
    argmax = (_argmax(argmax_addr, y.desc.extents)
              if argmax_addr else None)
    dnnp.pool_backward(pd, y, dy, x, dx, argmax)


@_guard
def transform(alpha_addr, src_args, beta_addr, dst_args):
    src, dst = _tensor(src_args), _tensor(dst_args)
    alpha = _scalar(alpha_addr, dst_args[-1])
    beta = _scalar(beta_addr, dst_args[-1])
    dnnp.transform(src, dst, alpha=alpha, beta=beta)


@_guard
def add_broadcast(alpha_addr, bias_args, beta_addr, out_args):
    bias, out = _tensor(bias_args), _tensor(out_args)
    alpha = _scalar(alpha_addr, out_args[-1])
    beta = _scalar(beta_addr, out_args[-1])
    dnnp.add_broadcast(bias, out, alpha=alpha, beta=beta)


def conv_output_shape(x_args, f_args, conv_args):
    """Returns (status, n, k, p, q)."""
    try:
        x_desc = dnnp.make_desc(*x_args[1:5], layout="custom",
                                strides=x_args[5:9], elem_type=_ELEM[x_args[9]])
        f_desc = dnnp.make_filter_desc(*f_args[1:5], elem_type=_ELEM[f_args[5]])
        n, k, p, q = dnnp.conv_out_shape(x_desc, f_desc, _conv(conv_args))
        return (OK, n, k, p, q)
    except Exception as exc:  # noqa: BLE001
        return (_status_of(exc), 0, 0, 0, 0)
