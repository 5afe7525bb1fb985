from .attention import causal_attention
from .fft import ComplexSpectrum, causal_conv_fft, depthwise_causal_conv, fft_size, irfft, rfft
from .gradcheck import finite_diff_grad, relative_error
from .layers import FeedForward, LayerNorm, Linear, Module, param
from .tensor import (
    Tensor,
    as_tensor,
    concat_last,
    cross_entropy,
    dropout,
    embedding,
    gelu,
    layer_norm,
    matmul,
    no_grad,
    sigmoid,
    split_last,
    tabs,
)

__all__ = [
    "ComplexSpectrum", "FeedForward", "LayerNorm", "Linear", "Module", "Tensor",
    "as_tensor", "causal_attention", "causal_conv_fft", "concat_last", "cross_entropy",
    "depthwise_causal_conv", "dropout", "embedding", "fft_size", "finite_diff_grad",
    "gelu", "irfft", "layer_norm", "matmul", "no_grad", "param", "relative_error",
    "rfft", "sigmoid", "split_last", "tabs",
]
