"""Tensor math, autodiff, losses, optimiser and checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .functional import (attention, cosine_embedding_loss, cosine_similarity, cross_entropy,
                         layer_norm, linear, log_softmax, softmax)
from .gradcheck import finite_difference_gradients, max_relative_error
from .optim import AdamState, adam_step
from .params import ParameterSet
from .tensor import Tensor, as_tensor
from .transformer import DecoderConfig, decoder_logits, init_decoder_params, transformer_decoder_forward

__all__ = [
    "AdamState", "DecoderConfig", "ParameterSet", "Tensor", "adam_step", "as_tensor", "attention",
    "cosine_embedding_loss", "cosine_similarity", "cross_entropy", "decoder_logits",
    "finite_difference_gradients", "init_decoder_params", "layer_norm", "linear", "load_checkpoint",
    "log_softmax", "max_relative_error", "save_checkpoint", "softmax", "transformer_decoder_forward",
]
