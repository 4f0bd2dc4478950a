"""Encoder, two-stream decoder and single-stream baseline decoder.

Both decoders run through ``_decoder_layers``; the only difference is the
intra-attention sub-layer (``bi_mha_intra`` for two streams, ``mha`` for one).
Streams travel on a leading stream axis ``[streams, batch, length, d_model]``
so every shared-parameter sub-layer runs once for both directions.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError, ContractError, DimensionError, VocabError
from nn.attention import (
    AttentionMask,
    MultiHeadParams,
    bi_mha_intra,
    make_key_mask,
    merge_heads,
    mha,
    sdpa,
    split_heads,
)
from nn.tensor import DEFAULT_DTYPE, Tensor, concat, dropout, embedding, layer_norm, no_grad, xavier_limit
from schemas import ModelConfig

logger = logging.getLogger(__name__)

ATTENTION_WEIGHTS = ("wq", "wk", "wv", "wo")


def param_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape for every learned tensor, in initialisation order."""
    d, f, vocab = config.d_model, config.d_ff, config.vocab_size
    shapes: Dict[str, Tuple[int, ...]] = {"embed": (vocab, d)}

    def attention(prefix):
        for w in ATTENTION_WEIGHTS:
            shapes[f"{prefix}.{w}"] = (d, d)

    def ffn(prefix):
        shapes.update({f"{prefix}.w1": (d, f), f"{prefix}.b1": (f,), f"{prefix}.w2": (f, d), f"{prefix}.b2": (d,)})

    def norm(prefix):
        shapes.update({f"{prefix}.gain": (d,), f"{prefix}.bias": (d,)})

    for i in range(config.layers):
        attention(f"enc.{i}.self")
        ffn(f"enc.{i}.ffn")
        norm(f"enc.{i}.ln1")
        norm(f"enc.{i}.ln2")
    for i in range(config.layers):
        attention(f"dec.{i}.intra")
        attention(f"dec.{i}.inter")
        ffn(f"dec.{i}.ffn")
        for n in (1, 2, 3):
            norm(f"dec.{i}.ln{n}")
    shapes["out"] = (d, vocab)
    return shapes


def sinusoid_table(positions: int, d_model: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    pos = np.arange(positions, dtype=np.float64)[:, None]
    rates = np.power(10000.0, -(np.arange(0, d_model, 2, dtype=np.float64) / d_model))
    table = np.zeros((positions, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(pos * rates)
    table[:, 1::2] = np.cos(pos * rates[: d_model // 2])
    return table.astype(dtype)


class Params:
    """All learned tensors of one model plus its fixed position table.

    A single decoder parameter set and a single output matrix ``out`` serve
    both decoding directions.
    """

    def __init__(self, tensors: Dict[str, Tensor], config: ModelConfig):
        expected = param_shapes(config)
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        if missing or extra:
            raise ContractError(f"parameter names do not match config: missing={missing} unexpected={extra}")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise DimensionError(f"parameter {name} has shape {tensors[name].shape}, expected {shape}")
        self.config = config
        self.tensors = {name: tensors[name] for name in expected}
        self.positions = sinusoid_table(config.max_positions, config.d_model, self.dtype)
        self._mha_cache: Dict[str, MultiHeadParams] = {}

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    @property
    def dtype(self):
        return self.tensors["embed"].dtype

    @property
    def size(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))

    def mha(self, prefix: str) -> MultiHeadParams:
        if prefix not in self._mha_cache:
            w = [self.tensors[f"{prefix}.{name}"] for name in ATTENTION_WEIGHTS]
            self._mha_cache[prefix] = MultiHeadParams(*w, heads=self.config.heads)
        return self._mha_cache[prefix]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.tensors.items()}

    def grads(self) -> Dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in self.tensors.items()
        }

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def with_arrays(self, arrays: Dict[str, np.ndarray], requires_grad: bool = True) -> "Params":
        return Params({name: Tensor(arrays[name], requires_grad=requires_grad) for name in self.tensors}, self.config)

    def astype(self, dtype) -> "Params":
        return self.with_arrays({name: a.astype(dtype) for name, a in self.arrays().items()}, requires_grad=False)


def init_params(config: ModelConfig, seed: int) -> Params:
    """Glorot-uniform matrices, unit layer-norm gains, zero biases; deterministic in ``seed``."""
    if not isinstance(config, ModelConfig):
        raise ConfigError(f"init_params needs a ModelConfig, got {type(config).__name__}")
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gain"):
            data = np.ones(shape)
        elif len(shape) == 1:
            data = np.zeros(shape)
        else:
            limit = xavier_limit(shape[0], shape[1])
            data = rng.uniform(-limit, limit, size=shape)
        tensors[name] = Tensor(data, requires_grad=True)
    logger.debug("Initialised %d tensors for %s model", len(tensors), config.mode)
    return Params(tensors, config)


def _embed(ids: np.ndarray, params: Params, config: ModelConfig, offset: int = 0, rng=None) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise VocabError(f"token ids must lie in [0, {config.vocab_size}), got range [{ids.min()}, {ids.max()}]")
    length = ids.shape[-1]
    if offset + length > config.max_positions:
        raise ContractError(f"position {offset + length - 1} exceeds max_positions={config.max_positions}")
    x = embedding(params["embed"], ids) * math.sqrt(config.d_model)
    x = x + Tensor(params.positions[offset : offset + length])
    return dropout(x, config.dropout, rng)


def _ffn(x: Tensor, params: Params, prefix: str) -> Tensor:
    hidden = (x @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"]).relu()
    return hidden @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]


def _residual(x: Tensor, sub: Tensor, params: Params, prefix: str, config: ModelConfig, rng=None) -> Tensor:
    """LN(x + Sublayer(x)), layer norm outside the residual sum."""
    return layer_norm(x + dropout(sub, config.dropout, rng), params[f"{prefix}.gain"], params[f"{prefix}.bias"])


def encode(src_ids: np.ndarray, src_mask: AttentionMask, params: Params, config: ModelConfig, rng=None) -> Tensor:
    """Source ids [b, m] -> top encoder states [b, m, d_model]. ``rng`` enables dropout."""
    x = _embed(src_ids, params, config, rng=rng)
    for i in range(config.layers):
        pre = f"enc.{i}"
        x = _residual(
            x, mha(x, x, x, src_mask, params.mha(f"{pre}.self"), config.dropout, rng), params, f"{pre}.ln1", config, rng
        )
        x = _residual(x, _ffn(x, params, f"{pre}.ffn"), params, f"{pre}.ln2", config, rng)
    return x


def _decoder_layers(
    x: Tensor,
    enc_out: Tensor,
    causal: AttentionMask,
    src_mask: AttentionMask,
    params: Params,
    config: ModelConfig,
    cross_masks: Tuple[Optional[AttentionMask], Optional[AttentionMask]] = (None, None),
    rng=None,
) -> Tensor:
    """x: [streams, b, q, d] -> logits [streams, b, q, vocab]."""
    streams = x.shape[0]
    for i in range(config.layers):
        pre = f"dec.{i}"
        intra = params.mha(f"{pre}.intra")
        if streams == 1:
            a = mha(x, x, x, causal, intra, config.dropout, rng)
        else:
            a_f, a_b = bi_mha_intra(
                x[0], x[1], causal, intra, config.lam, cross_masks[0], cross_masks[1], config.dropout, rng
            )
            a = concat([a_f.reshape(1, *a_f.shape), a_b.reshape(1, *a_b.shape)], axis=0)
        x = _residual(x, a, params, f"{pre}.ln1", config, rng)
        inter = params.mha(f"{pre}.inter")
        x = _residual(x, mha(x, enc_out, enc_out, src_mask, inter, config.dropout, rng), params, f"{pre}.ln2", config, rng)
        x = _residual(x, _ffn(x, params, f"{pre}.ffn"), params, f"{pre}.ln3", config, rng)
    return x @ params["out"]


def decode_bidirectional(
    fwd_in: np.ndarray,
    bwd_in: np.ndarray,
    enc_out: Tensor,
    causal_mask: AttentionMask,
    src_mask: AttentionMask,
    params: Params,
    config: ModelConfig,
    fwd_live: Optional[np.ndarray] = None,
    bwd_live: Optional[np.ndarray] = None,
    rng=None,
) -> Tuple[Tensor, Tensor]:
    """Teacher-forced two-stream decoder: (logits_f, logits_b), each [b, q, vocab].

    ``fwd_live``/``bwd_live`` ([b, q] booleans) hide a stream's positions from the
    other stream's cross-attention; omitted means every position is visible.
    """
    fwd_in, bwd_in = np.asarray(fwd_in), np.asarray(bwd_in)
    if fwd_in.shape != bwd_in.shape or fwd_in.ndim != 2:
        raise ContractError(f"stream inputs must be equal-shape [b, q] matrices, got {fwd_in.shape} and {bwd_in.shape}")
    cross_f = causal_mask & make_key_mask(bwd_live) if bwd_live is not None else None
    cross_b = causal_mask & make_key_mask(fwd_live) if fwd_live is not None else None
    x = _embed(np.stack([fwd_in, bwd_in]), params, config, rng=rng)
    logits = _decoder_layers(x, enc_out, causal_mask, src_mask, params, config, (cross_f, cross_b), rng)
    return logits[0], logits[1]


def decode_unidirectional(
    ids: np.ndarray,
    enc_out: Tensor,
    causal_mask: AttentionMask,
    src_mask: AttentionMask,
    params: Params,
    config: ModelConfig,
    rng=None,
) -> Tensor:
    """Standard single-stream decoder: logits [b, q, vocab]."""
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise ContractError(f"decoder input must be a [b, q] matrix, got shape {ids.shape}")
    x = _embed(ids[None], params, config, rng=rng)
    return _decoder_layers(x, enc_out, causal_mask, src_mask, params, config, rng=rng)[0]


@dataclass(frozen=True)
class DecoderState:
    """Cached per-layer intra-attention keys/values for stepwise decoding.

    Stream tensors are [streams, rows, heads, length, d_k]; encoder keys/values
    for inter-attention are projected once, [rows, heads, m, d_k]. Instances
    are never mutated: stepping or selecting rows builds a new state.
    """

    streams: int
    rows: int
    length: int
    keys: Tuple[np.ndarray, ...]
    values: Tuple[np.ndarray, ...]
    live: np.ndarray
    enc_keys: Tuple[np.ndarray, ...]
    enc_values: Tuple[np.ndarray, ...]
    src_allowed: np.ndarray

    def select(self, rows: Sequence[int]) -> "DecoderState":
        """Reorder/duplicate hypothesis rows (beam bookkeeping)."""
        idx = np.asarray(rows, dtype=np.int64)
        return DecoderState(
            streams=self.streams,
            rows=len(idx),
            length=self.length,
            keys=tuple(k[:, idx] for k in self.keys),
            values=tuple(v[:, idx] for v in self.values),
            live=self.live[:, idx],
            enc_keys=tuple(k[idx] for k in self.enc_keys),
            enc_values=tuple(v[idx] for v in self.enc_values),
            src_allowed=self.src_allowed[idx],
        )


def init_state(enc_out: Tensor, src_mask: AttentionMask, params: Params, config: ModelConfig) -> DecoderState:
    streams = 2 if config.bidirectional else 1
    rows = enc_out.shape[0]
    allowed = np.broadcast_to(src_mask.allowed, (rows, 1, enc_out.shape[1]))
    enc_keys, enc_values = [], []
    with no_grad():
        for i in range(config.layers):
            inter = params.mha(f"dec.{i}.inter")
            enc_keys.append(split_heads(enc_out @ inter.w_k, config.heads).data)
            enc_values.append(split_heads(enc_out @ inter.w_v, config.heads).data)
    empty = np.zeros((streams, rows, config.heads, 0, config.d_k), dtype=params.dtype)
    return DecoderState(
        streams=streams,
        rows=rows,
        length=0,
        keys=(empty,) * config.layers,
        values=(empty,) * config.layers,
        live=np.zeros((streams, rows, 0), dtype=bool),
        enc_keys=tuple(enc_keys),
        enc_values=tuple(enc_values),
        src_allowed=np.array(allowed),
    )


def incremental_step(
    state: DecoderState,
    next_f: np.ndarray,
    next_b: Optional[np.ndarray],
    params: Params,
    config: ModelConfig,
    live_f: Optional[np.ndarray] = None,
    live_b: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray], DecoderState]:
    """Feed one token per stream; return last-position logits ([rows, vocab]) and the new state.

    ``next_b`` is None for single-stream models. ``live_*`` marks whether the
    fed token is visible to the other stream (False once that stream finished).
    """
    fed = [next_f] if next_b is None else [next_f, next_b]
    if len(fed) != state.streams:
        raise ContractError(f"state carries {state.streams} stream(s), got {len(fed)} input(s)")
    if len(state.keys) != config.layers or state.keys[0].shape[2:] != (config.heads, state.length, config.d_k):
        raise ContractError("decoder state does not match the model config")
    ids = np.stack([np.asarray(t, dtype=np.int64).reshape(-1) for t in fed])
    if ids.shape[1] != state.rows:
        raise ContractError(f"state has {state.rows} rows, got {ids.shape[1]} token(s) per stream")
    flags = [live_f, live_b][: state.streams]
    live = np.stack(
        [np.ones(state.rows, dtype=bool) if f is None else np.asarray(f, dtype=bool).reshape(-1) for f in flags]
    )
    t = state.length
    all_live = np.concatenate([state.live, live[..., None]], axis=-1)
    own_mask = AttentionMask(np.ones((1, t + 1), dtype=bool))
    keys, values = [], []

    with no_grad():
        x = _embed(ids[..., None], params, config, offset=t)
        for i in range(config.layers):
            pre = f"dec.{i}"
            intra = params.mha(f"{pre}.intra")
            q = split_heads(x @ intra.w_q, config.heads)
            k = np.concatenate([state.keys[i], split_heads(x @ intra.w_k, config.heads).data], axis=-2)
            v = np.concatenate([state.values[i], split_heads(x @ intra.w_v, config.heads).data], axis=-2)
            keys.append(k)
            values.append(v)
            context = sdpa(q, Tensor(k), Tensor(v), own_mask)
            if state.streams == 2 and config.lam != 0.0:
                # each stream reads the other stream's cache: reverse the stream axis
                cross_mask = AttentionMask(all_live[::-1][:, :, None, None, :])
                context = context + config.lam * sdpa(q, Tensor(k[::-1]), Tensor(v[::-1]), cross_mask)
            x = _residual(x, merge_heads(context) @ intra.w_o, params, f"{pre}.ln1", config)
            inter = params.mha(f"{pre}.inter")
            qi = split_heads(x @ inter.w_q, config.heads)
            src = AttentionMask(state.src_allowed[:, None])
            c = sdpa(qi, Tensor(state.enc_keys[i]), Tensor(state.enc_values[i]), src)
            x = _residual(x, merge_heads(c) @ inter.w_o, params, f"{pre}.ln2", config)
            x = _residual(x, _ffn(x, params, f"{pre}.ffn"), params, f"{pre}.ln3", config)
        logits = (x @ params["out"]).data[:, :, 0, :]

    new_state = DecoderState(
        streams=state.streams,
        rows=state.rows,
        length=t + 1,
        keys=tuple(keys),
        values=tuple(values),
        live=all_live,
        enc_keys=state.enc_keys,
        enc_values=state.enc_values,
        src_allowed=state.src_allowed,
    )
    return logits[0], (logits[1] if state.streams == 2 else None), new_state
