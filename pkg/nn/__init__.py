from .attention import AttentionMask, MultiHeadParams, bi_mha_intra, bsdpa, make_causal_mask, make_padding_mask, mha, sdpa
from .checkpoint import load_checkpoint, save_checkpoint, vocab_path_for
from .model import (
    DecoderState,
    Params,
    decode_bidirectional,
    decode_unidirectional,
    encode,
    incremental_step,
    init_params,
    init_state,
)
from .tensor import Tensor, layer_norm, matmul, no_grad, softmax

__all__ = [
    "AttentionMask",
    "MultiHeadParams",
    "bi_mha_intra",
    "bsdpa",
    "make_causal_mask",
    "make_padding_mask",
    "mha",
    "sdpa",
    "load_checkpoint",
    "save_checkpoint",
    "vocab_path_for",
    "DecoderState",
    "Params",
    "decode_bidirectional",
    "decode_unidirectional",
    "encode",
    "incremental_step",
    "init_params",
    "init_state",
    "Tensor",
    "layer_norm",
    "matmul",
    "no_grad",
    "softmax",
]
