from .params import ParamStore, zero_grads_like
from .layers import MLP, gelu, smooth_l1, smooth_l1_grad
from .attention import MultiHeadAttention, AttentionBlock, FeedForwardBlock
from .optim import AdamW
from .io import save_params, load_params
from .gradcheck import check_gradients

__all__ = [
    "ParamStore",
    "zero_grads_like",
    "MLP",
    "gelu",
    "smooth_l1",
    "smooth_l1_grad",
    "MultiHeadAttention",
    "AttentionBlock",
    "FeedForwardBlock",
    "AdamW",
    "save_params",
    "load_params",
    "check_gradients",
]
