from .layers import (
    BatchNorm,
    BiGRU,
    Dense,
    Embedding,
    GRU,
    GRUCellParams,
    bigru_forward,
    dense,
    glorot_uniform,
    gru_cell_step,
    gru_forward,
    orthogonal,
    run_gru,
)
from .optim import AdamState, adam_step, zero_grads
from .tensor import (
    Parameter,
    Tensor,
    add,
    backward,
    batch_norm_infer,
    batch_norm_train,
    binary_cross_entropy,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    leaky_relu,
    linear,
    matmul,
    mean_all,
    mul,
    relu,
    row_slice,
    sigmoid,
    softmax,
    sub,
    sum_all,
    tanh,
)

__all__ = [
    "AdamState",
    "BatchNorm",
    "BiGRU",
    "Dense",
    "Embedding",
    "GRU",
    "GRUCellParams",
    "Parameter",
    "Tensor",
    "adam_step",
    "add",
    "backward",
    "batch_norm_infer",
    "batch_norm_train",
    "bigru_forward",
    "binary_cross_entropy",
    "concat",
    "cross_entropy",
    "dense",
    "dropout",
    "embedding_lookup",
    "glorot_uniform",
    "gru_cell_step",
    "gru_forward",
    "leaky_relu",
    "linear",
    "matmul",
    "mean_all",
    "mul",
    "orthogonal",
    "relu",
    "row_slice",
    "run_gru",
    "sigmoid",
    "softmax",
    "sub",
    "sum_all",
    "tanh",
    "zero_grads",
]
