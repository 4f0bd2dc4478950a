"""Attention kernels: scaled dot-product, multi-head, and the two-stream variants.

The bidirectional kernels keep the forward (left-to-right) and backward
(right-to-left) streams as separate tensors. Each stream attends to its own
prefix and, weighted by ``lam``, to the other stream's prefix under the same
``<= j`` causal rule.
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from errors import ContractError, DimensionError
from nn.tensor import Tensor, dropout, softmax

NEG_INF = -1e9


@dataclass(frozen=True)
class AttentionMask:
    """Boolean ``allowed[..., query, key]``; True means the key is visible.

    Leading axes (a batch axis for padding masks) broadcast against scores.
    """

    allowed: np.ndarray

    def __post_init__(self):
        allowed = np.asarray(self.allowed, dtype=bool)
        if allowed.ndim < 2:
            raise DimensionError(f"attention mask needs >= 2 axes, got shape {allowed.shape}")
        object.__setattr__(self, "allowed", allowed)

    @property
    def shape(self):
        return self.allowed.shape

    def bias(self, dtype) -> np.ndarray:
        return np.where(self.allowed, 0.0, NEG_INF).astype(dtype)

    def with_head_axis(self) -> "AttentionMask":
        """Insert a head axis after the batch axis so [b, q, t] meets [b, h, q, t]."""
        if self.allowed.ndim < 3:
            return self
        return AttentionMask(self.allowed[..., None, :, :])

    def __and__(self, other: "AttentionMask") -> "AttentionMask":
        return AttentionMask(np.logical_and(self.allowed, other.allowed))


def make_causal_mask(length: int) -> AttentionMask:
    if length < 1:
        raise ContractError(f"causal mask length must be >= 1, got {length}")
    return AttentionMask(np.tril(np.ones((length, length), dtype=bool)))


def make_padding_mask(lengths: Sequence[int], max_len: int) -> AttentionMask:
    """[b, 1, max_len] mask that is True exactly on each row's real key positions."""
    if max_len < 1:
        raise ContractError(f"padding mask width must be >= 1, got {max_len}")
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.ndim != 1 or (lengths < 1).any() or (lengths > max_len).any():
        raise ContractError(f"lengths {lengths.tolist()} must lie in [1, {max_len}]")
    return AttentionMask((np.arange(max_len)[None, :] < lengths[:, None])[:, None, :])


def make_key_mask(live: np.ndarray) -> AttentionMask:
    """[b, 1, t] mask from a per-key liveness matrix [b, t]."""
    live = np.asarray(live, dtype=bool)
    return AttentionMask(live[:, None, :])


@dataclass(frozen=True)
class MultiHeadParams:
    """Projections for ``heads`` heads.

    ``w_q``/``w_k``/``w_v`` are [d_model, heads * d_k]; column block ``i`` is the
    per-head matrix W_i. ``w_o`` is [heads * d_k, d_model].
    """

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    heads: int

    def __post_init__(self):
        d_model = self.w_q.shape[0]
        if self.heads < 1 or d_model % self.heads != 0:
            raise DimensionError(f"heads={self.heads} must divide d_model={d_model}")
        for name in ("w_q", "w_k", "w_v"):
            if getattr(self, name).shape != (d_model, d_model):
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {(d_model, d_model)}")
        if self.w_o.shape != (d_model, d_model):
            raise DimensionError(f"w_o has shape {self.w_o.shape}, expected {(d_model, d_model)}")

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    def head(self, i: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        cols = slice(i * self.d_k, (i + 1) * self.d_k)
        return self.w_q.data[:, cols], self.w_k.data[:, cols], self.w_v.data[:, cols]


def sdpa(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: AttentionMask,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """softmax(Q K^T / sqrt(d_k) + mask) V over the last two axes."""
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"keys {k.shape} and values {v.shape} differ in key length")
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"queries {q.shape} and keys {k.shape} differ in width")
    q_len, k_len = q.shape[-2], k.shape[-2]
    if mask.shape[-1] not in (1, k_len) or mask.shape[-2] not in (1, q_len):
        raise DimensionError(f"mask {mask.shape} does not fit {q_len} queries x {k_len} keys")
    if not mask.allowed.any(axis=-1).all():
        raise ContractError("attention mask leaves a query row with no visible key")

    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    weights = softmax(scores + Tensor(mask.bias(scores.dtype)), axis=-1)
    weights = dropout(weights, dropout_rate, rng)
    return weights @ v


def split_heads(x: Tensor, heads: int) -> Tensor:
    """[..., n, d] -> [..., heads, n, d / heads]."""
    *lead, n, d = x.shape
    return x.reshape(*lead, n, heads, d // heads).swapaxes(-2, -3)


def merge_heads(x: Tensor) -> Tensor:
    """[..., heads, n, d_k] -> [..., n, heads * d_k]."""
    x = x.swapaxes(-2, -3)
    *lead, n, heads, d_k = x.shape
    return x.reshape(*lead, n, heads * d_k)


def _check_width(p: MultiHeadParams, *tensors: Tensor) -> None:
    for t in tensors:
        if t.shape[-1] != p.d_model:
            raise DimensionError(f"input width {t.shape[-1]} does not match d_model={p.d_model}")


def mha(
    q_in: Tensor,
    k_in: Tensor,
    v_in: Tensor,
    mask: AttentionMask,
    p: MultiHeadParams,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Concat(head_1..head_h) W^O with head_i = sdpa(Q W_i^Q, K W_i^K, V W_i^V)."""
    _check_width(p, q_in, k_in, v_in)
    q = split_heads(q_in @ p.w_q, p.heads)
    k = split_heads(k_in @ p.w_k, p.heads)
    v = split_heads(v_in @ p.w_v, p.heads)
    context = sdpa(q, k, v, mask.with_head_axis(), dropout_rate, rng)
    return merge_heads(context) @ p.w_o


def bsdpa(
    q_f: Tensor,
    q_b: Tensor,
    k_f: Tensor,
    k_b: Tensor,
    v_f: Tensor,
    v_b: Tensor,
    mask: AttentionMask,
    lam: float,
    cross_mask_f: Optional[AttentionMask] = None,
    cross_mask_b: Optional[AttentionMask] = None,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, Tensor]:
    """Two-stream attention.

    H_f = sdpa(Q_f, K_f, V_f) + lam * sdpa(Q_f, K_b, V_b), H_b symmetric.
    ``cross_mask_f`` governs forward queries over backward keys (defaults to
    ``mask``); ``cross_mask_b`` the reverse.
    """
    if q_f.shape != q_b.shape or k_f.shape != k_b.shape or v_f.shape != v_b.shape:
        raise DimensionError(
            f"stream shapes differ: Q {q_f.shape}/{q_b.shape}, K {k_f.shape}/{k_b.shape}, V {v_f.shape}/{v_b.shape}"
        )
    h_f = sdpa(q_f, k_f, v_f, mask, dropout_rate, rng)
    h_b = sdpa(q_b, k_b, v_b, mask, dropout_rate, rng)
    if lam == 0.0:
        return h_f, h_b
    h_f = h_f + lam * sdpa(q_f, k_b, v_b, cross_mask_f or mask, dropout_rate, rng)
    h_b = h_b + lam * sdpa(q_b, k_f, v_f, cross_mask_b or mask, dropout_rate, rng)
    return h_f, h_b


def bi_mha_intra(
    s_f: Tensor,
    s_b: Tensor,
    mask: AttentionMask,
    p: MultiHeadParams,
    lam: float,
    cross_mask_f: Optional[AttentionMask] = None,
    cross_mask_b: Optional[AttentionMask] = None,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, Tensor]:
    """Multi-head bsdpa; both streams go through the same projections."""
    _check_width(p, s_f, s_b)
    q_f, q_b = split_heads(s_f @ p.w_q, p.heads), split_heads(s_b @ p.w_q, p.heads)
    k_f, k_b = split_heads(s_f @ p.w_k, p.heads), split_heads(s_b @ p.w_k, p.heads)
    v_f, v_b = split_heads(s_f @ p.w_v, p.heads), split_heads(s_b @ p.w_v, p.heads)
    h_f, h_b = bsdpa(
        q_f,
        q_b,
        k_f,
        k_b,
        v_f,
        v_b,
        mask.with_head_axis(),
        lam,
        cross_mask_f.with_head_axis() if cross_mask_f is not None else None,
        cross_mask_b.with_head_axis() if cross_mask_b is not None else None,
        dropout_rate,
        rng,
    )
    return merge_heads(h_f) @ p.w_o, merge_heads(h_b) @ p.w_o
