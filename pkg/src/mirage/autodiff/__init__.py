from .gradcheck import grad_check
from .optim import OptimizerState, cosine_lr, sgd_step
from .tensor import (
    AutodiffError,
    ShapeMismatchError,
    Tape,
    Tensor,
    UnknownPrimitiveError,
    add,
    apply_primitive,
    backward,
    broadcast_to,
    concat,
    constant,
    cosine_similarity,
    div,
    exp,
    gelu,
    l2_normalize,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    parameter,
    primitive_names,
    relu,
    reshape,
    set_finite_checks,
    slice_axis,
    softmax,
    sub,
    sum_,
    transpose,
)

__all__ = [
    "AutodiffError",
    "OptimizerState",
    "ShapeMismatchError",
    "Tape",
    "Tensor",
    "UnknownPrimitiveError",
    "add",
    "apply_primitive",
    "backward",
    "broadcast_to",
    "concat",
    "constant",
    "cosine_lr",
    "cosine_similarity",
    "div",
    "exp",
    "gelu",
    "grad_check",
    "l2_normalize",
    "layer_norm",
    "log",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "neg",
    "parameter",
    "primitive_names",
    "relu",
    "reshape",
    "set_finite_checks",
    "sgd_step",
    "slice_axis",
    "softmax",
    "sub",
    "sum_",
    "transpose",
]
