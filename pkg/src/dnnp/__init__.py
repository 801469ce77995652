"""dnnp: CPU deep-learning primitives around an implicit-GEMM convolution.

Strided 4-D tensor descriptors, a tiled matrix-multiply engine over stored
or virtual operands, three interchangeable convolution engines, activation,
softmax, and pooling primitives, and a benchmark/verification CLI.
"""

from . import scratch
from .conv import (
    ConvDesc,
    ConvMode,
    DividerSet,
    Engine,
    FilterDesc,
    FilterView,
    access,
    conv_backward_bias,
    conv_backward_data,
    conv_backward_filter,
    conv_forward,
    conv_out_shape,
    implicit_provider,
    lower_explicit,
    make_filter_desc,
    output_extent,
    pad_preset,
)
from .errors import (
    AliasingStrides,
    AllocTooLarge,
    ConfigInvalid,
    DimMismatch,
    DnnpError,
    EmptyOutput,
    EmptyWindow,
    IncompatibleBroadcast,
    MissingArgmax,
    OverlappingBuffers,
    ParseError,
    ShapeMismatch,
    VerifyFailed,
    ZeroDivisor,
    ZeroExtent,
)
from .gemm import MatrixSpec, StoredMatrix, TileConfig, VirtualMatrix, gemm, materialize
from .intdiv import MagicDivider, div_mod, make_divider
from .nnops import (
    ActivationKind,
    PoolKind,
    PoolingDesc,
    SoftmaxMode,
    activation_backward,
    activation_forward,
    pool_backward,
    pool_forward,
    pool_out_shape,
    softmax_backward,
    softmax_forward,
)
from .tensor import (
    TensorDesc,
    TensorView,
    add_broadcast,
    empty_view,
    make_desc,
    transform,
    zeros_view,
)

__version__ = "0.1.0"
