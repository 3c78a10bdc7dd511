from .tensor import Tensor, concat, embedding, xavier_uniform
from .layers import (MLP, BatchNorm, Dropout, Embedding, FeedForward,
                     LayerNorm, Linear, Module, MultiHeadSelfAttention,
                     TransformerBlock)
from .losses import cross_entropy, mae, mse, nll_from_probs
from .optim import Adam
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import (load_checkpoint, params_hash, read_header,
                         save_checkpoint)

__all__ = [
    "Tensor", "concat", "embedding", "xavier_uniform",
    "MLP", "BatchNorm", "Dropout", "Embedding", "FeedForward", "LayerNorm",
    "Linear", "Module", "MultiHeadSelfAttention", "TransformerBlock",
    "cross_entropy", "mae", "mse", "nll_from_probs", "Adam",
    "GradCheckReport", "grad_check",
    "load_checkpoint", "params_hash", "read_header", "save_checkpoint",
]
