"""Greedy and beam search for the two-stream decoder and the single-stream baselines.

Bidirectional search carries coupled (forward, backward) hypothesis pairs; each
step feeds one token per stream through ``incremental_step`` and emits two
tokens. A stream that produced <eos> is fed <pad> from then on and is hidden
from the other stream's cross-attention.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from data import EOS, L2R, NULL, PAD, R2L, stitch
from errors import ConfigError, ContractError
from nn.attention import make_causal_mask, make_padding_mask
from nn.model import DecoderState, Params, decode_bidirectional, encode, incremental_step, init_state
from nn.tensor import no_grad
from schemas import DecodeConfig, ModelConfig

logger = logging.getLogger(__name__)

BANNED_BIDIRECTIONAL = (PAD, L2R, R2L)
BANNED_UNIDIRECTIONAL = (PAD, L2R, R2L, NULL)


@dataclass
class DecodeResult:
    """One decoded sentence.

    ``fwd``/``bwd`` are the generated ids of each stream (``<eos>`` included when
    the stream finished); single-stream models leave ``bwd`` empty and keep the
    generated sequence, in generation order, in ``fwd``.
    """

    tokens: List[int]
    fwd: List[int]
    bwd: List[int] = field(default_factory=list)
    score: float = 0.0
    normalized: float = 0.0
    steps: int = 0

    @property
    def generated(self) -> int:
        return len(self.fwd) + len(self.bwd)


def length_penalty(length: int, alpha: float) -> float:
    """((5 + length) / 6) ** alpha."""
    if length < 1:
        raise ContractError(f"length penalty needs length >= 1, got {length}")
    return ((5.0 + length) / 6.0) ** alpha


def step_limit(max_len: int, bidirectional: bool) -> int:
    return math.ceil(max_len / 2) + 1 if bidirectional else max_len + 1


def expected_steps(n: int, bidirectional: bool) -> int:
    """Model invocations needed for ``n`` output tokens with balanced halves."""
    return math.ceil(n / 2) + 1 if bidirectional else n + 1


def stream_steps(fwd: Sequence[int], bwd: Sequence[int]) -> int:
    """Invocations actually spent: one per position of the longer stream."""
    return max(len(fwd), len(bwd))


def _log_probs(logits: np.ndarray, banned: Sequence[int]) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp[..., list(banned)] = -np.inf
    return logp


def _top(logp: np.ndarray, width: int) -> np.ndarray:
    """Indices of the ``width`` best entries; equal scores keep ascending id order."""
    return np.argsort(-logp, kind="stable")[:width]


def _start(params: Params, config: ModelConfig, sources: Sequence[Sequence[int]]) -> DecoderState:
    rows = [[int(t) for t in src] for src in sources]
    for row in rows:
        if any(t >= config.vocab_size or t < 0 for t in row):
            raise ContractError(f"source ids must lie in [0, {config.vocab_size})")
    width = max(len(r) for r in rows) + 1
    src_ids = np.full((len(rows), width), PAD, dtype=np.int64)
    for i, row in enumerate(rows):
        src_ids[i, : len(row) + 1] = row + [EOS]
    src_mask = make_padding_mask([len(r) + 1 for r in rows], width)
    with no_grad():
        enc_out = encode(src_ids, src_mask, params, config)
    return init_state(enc_out, src_mask, params, config)


def _finish_uni(config: ModelConfig, seq: List[int]) -> List[int]:
    tokens = stitch(seq, [])
    return tokens[::-1] if config.mode == "r2l" else tokens


def greedy_batch(
    params: Params, config: ModelConfig, sources: Sequence[Sequence[int]], max_len: int, alpha: float = 0.0
) -> List[DecodeResult]:
    """Greedy decoding of several sources at once; each row behaves as if decoded alone."""
    if not sources:
        return []
    state = _start(params, config, sources)
    rows = state.rows
    two = config.bidirectional
    banned = BANNED_BIDIRECTIONAL if two else BANNED_UNIDIRECTIONAL
    start_f = np.full(rows, R2L if config.mode == "r2l" else L2R, dtype=np.int64)
    feed = [start_f, np.full(rows, R2L, dtype=np.int64)] if two else [start_f]
    live = [np.ones(rows, dtype=bool) for _ in feed]
    seqs = [[[] for _ in range(rows)] for _ in feed]
    scores = [np.zeros(rows) for _ in feed]
    done = [np.zeros(rows, dtype=bool) for _ in feed]
    steps = np.zeros(rows, dtype=np.int64)

    for _ in range(step_limit(max_len, two)):
        active = ~np.logical_and.reduce(done)
        if not active.any():
            break
        steps[active] += 1
        logits_f, logits_b, state = incremental_step(
            state, feed[0], feed[1] if two else None, params, config, live[0], live[1] if two else None
        )
        for s, logits in enumerate([logits_f, logits_b] if two else [logits_f]):
            logp = _log_probs(logits, banned)
            choice = np.argmax(logp, axis=-1)
            for r in np.flatnonzero(~done[s]):
                token = int(choice[r])
                seqs[s][r].append(token)
                scores[s][r] += logp[r, token]
                if token == EOS:
                    done[s][r] = True
            feed[s] = np.where(done[s], PAD, choice)
            live[s] = ~done[s]

    results = []
    for r in range(rows):
        fwd = seqs[0][r]
        bwd = seqs[1][r] if two else []
        score = float(sum(sc[r] for sc in scores))
        tokens = stitch(fwd, bwd) if two else _finish_uni(config, fwd)
        results.append(
            DecodeResult(
                tokens=tokens,
                fwd=fwd,
                bwd=bwd,
                score=score,
                normalized=score / length_penalty(max(len(fwd) + len(bwd), 1), alpha),
                steps=int(steps[r]),
            )
        )
    return results


def greedy_bidirectional(params: Params, config: ModelConfig, src: Sequence[int], max_len: int) -> DecodeResult:
    if not config.bidirectional:
        raise ConfigError(f"greedy_bidirectional needs a bidirectional model, got mode={config.mode}")
    return greedy_batch(params, config, [src], max_len)[0]


def greedy_unidirectional(params: Params, config: ModelConfig, src: Sequence[int], max_len: int) -> DecodeResult:
    if config.bidirectional:
        raise ConfigError("greedy_unidirectional needs an l2r or r2l model")
    return greedy_batch(params, config, [src], max_len)[0]


@dataclass
class BeamPair:
    fwd: Tuple[int, ...] = ()
    bwd: Tuple[int, ...] = ()
    logp_f: float = 0.0
    logp_b: float = 0.0
    done_f: bool = False
    done_b: bool = False

    @property
    def score(self) -> float:
        return self.logp_f + self.logp_b

    @property
    def done(self) -> bool:
        return self.done_f and self.done_b

    def normalized(self, alpha: float) -> float:
        return self.score / length_penalty(max(len(self.fwd) + len(self.bwd), 1), alpha)


def _stream_options(logp_row: np.ndarray, done: bool, width: int) -> Tuple[np.ndarray, np.ndarray]:
    if done:
        return np.array([PAD]), np.array([0.0])
    ids = _top(logp_row, width)
    ids = ids[np.isfinite(logp_row[ids])]
    return ids, logp_row[ids]


def beam_search_bidirectional(
    params: Params, config: ModelConfig, src: Sequence[int], decode_cfg: DecodeConfig
) -> DecodeResult:
    """Pairwise-coupled beam: k/2 (forward, backward) pairs, top-ceil(sqrt(k)) tokens per stream."""
    if not config.bidirectional:
        raise ConfigError(f"bidirectional beam search needs a bidirectional model, got mode={config.mode}")
    k = decode_cfg.beam_size
    if k < 2 or k % 2:
        raise ConfigError(f"bidirectional beam size must be even and >= 2, got {k}")
    pairs_kept, width = k // 2, math.ceil(math.sqrt(k))
    state = _start(params, config, [src])
    beam = [BeamPair()]
    feed_f, feed_b = np.array([L2R]), np.array([R2L])
    live_f, live_b = np.array([True]), np.array([True])
    steps = 0

    for _ in range(step_limit(decode_cfg.max_len, True)):
        if all(p.done for p in beam):
            break
        logits_f, logits_b, state = incremental_step(state, feed_f, feed_b, params, config, live_f, live_b)
        steps += 1
        logp_f = _log_probs(logits_f, BANNED_BIDIRECTIONAL)
        logp_b = _log_probs(logits_b, BANNED_BIDIRECTIONAL)

        cand_score, cand_f, cand_b, cand_row = [], [], [], []
        for r, pair in enumerate(beam):
            ids_f, lp_f = _stream_options(logp_f[r], pair.done_f, width)
            ids_b, lp_b = _stream_options(logp_b[r], pair.done_b, width)
            joint = pair.score + lp_f[:, None] + lp_b[None, :]
            cand_score.append(joint.ravel())
            cand_f.append(np.repeat(ids_f, len(ids_b)))
            cand_b.append(np.tile(ids_b, len(ids_f)))
            cand_row.append(np.full(joint.size, r))
        score, tok_f, tok_b, row = (np.concatenate(c) for c in (cand_score, cand_f, cand_b, cand_row))
        order = np.lexsort((row, tok_b, tok_f, -score))[:pairs_kept]

        new_beam = []
        for i in order:
            old = beam[row[i]]
            pair = BeamPair(old.fwd, old.bwd, old.logp_f, old.logp_b, old.done_f, old.done_b)
            if not old.done_f:
                pair.fwd += (int(tok_f[i]),)
                pair.logp_f += float(logp_f[row[i], tok_f[i]])
                pair.done_f = bool(tok_f[i] == EOS)
            if not old.done_b:
                pair.bwd += (int(tok_b[i]),)
                pair.logp_b += float(logp_b[row[i], tok_b[i]])
                pair.done_b = bool(tok_b[i] == EOS)
            new_beam.append(pair)
        beam = new_beam
        state = state.select(row[order])
        feed_f = np.array([PAD if p.done_f else p.fwd[-1] for p in beam])
        feed_b = np.array([PAD if p.done_b else p.bwd[-1] for p in beam])
        live_f = np.array([not p.done_f for p in beam])
        live_b = np.array([not p.done_b for p in beam])

    best = max(range(len(beam)), key=lambda i: (beam[i].normalized(decode_cfg.length_penalty), -i))
    pair = beam[best]
    return DecodeResult(
        tokens=stitch(pair.fwd, pair.bwd),
        fwd=list(pair.fwd),
        bwd=list(pair.bwd),
        score=pair.score,
        normalized=pair.normalized(decode_cfg.length_penalty),
        steps=steps,
    )


def beam_search_unidirectional(
    params: Params, config: ModelConfig, src: Sequence[int], decode_cfg: DecodeConfig
) -> DecodeResult:
    """Standard beam search; r2l models generate reversed and are flipped back."""
    if config.bidirectional:
        raise ConfigError("unidirectional beam search needs an l2r or r2l model")
    k = decode_cfg.beam_size
    state = _start(params, config, [src])
    start = R2L if config.mode == "r2l" else L2R
    beam: List[Tuple[Tuple[int, ...], float, bool]] = [((), 0.0, False)]
    feed, live = np.array([start]), np.array([True])
    steps = 0

    for _ in range(step_limit(decode_cfg.max_len, False)):
        if all(done for _, _, done in beam):
            break
        logits, _, state = incremental_step(state, feed, None, params, config, live)
        steps += 1
        logp = _log_probs(logits, BANNED_UNIDIRECTIONAL)

        cand_score, cand_tok, cand_row = [], [], []
        for r, (_, score, done) in enumerate(beam):
            ids, lp = _stream_options(logp[r], done, k)
            cand_score.append(score + lp)
            cand_tok.append(ids)
            cand_row.append(np.full(len(ids), r))
        score, tok, row = (np.concatenate(c) for c in (cand_score, cand_tok, cand_row))
        order = np.lexsort((row, tok, -score))[:k]

        new_beam = []
        for i in order:
            seq, _, done = beam[row[i]]
            if done:
                new_beam.append(beam[row[i]])
            else:
                new_beam.append((seq + (int(tok[i]),), float(score[i]), bool(tok[i] == EOS)))
        beam = new_beam
        state = state.select(row[order])
        feed = np.array([PAD if done else seq[-1] for seq, _, done in beam])
        live = np.array([not done for _, _, done in beam])

    alpha = decode_cfg.length_penalty
    normalized = [score / length_penalty(max(len(seq), 1), alpha) for seq, score, _ in beam]
    best = max(range(len(beam)), key=lambda i: (normalized[i], -i))
    seq, score, _ = beam[best]
    return DecodeResult(
        tokens=_finish_uni(config, list(seq)),
        fwd=list(seq),
        score=score,
        normalized=normalized[best],
        steps=steps,
    )


def decode_config_for(config: ModelConfig, decode_cfg: DecodeConfig) -> DecodeConfig:
    """Validate search settings against the model; cap max_len to the position table."""
    if decode_cfg.search == "beam" and config.bidirectional and decode_cfg.beam_size % 2:
        raise ConfigError(f"bidirectional beam search needs an even beam size, got {decode_cfg.beam_size}")
    limit = 2 * (config.max_positions - 1) if config.bidirectional else config.max_positions - 1
    if decode_cfg.max_len > limit:
        logger.warning("max_len %d exceeds what max_positions=%d allows; using %d", decode_cfg.max_len, config.max_positions, limit)
        return decode_cfg.replace(max_len=limit)
    return decode_cfg


def decode(params: Params, config: ModelConfig, src: Sequence[int], decode_cfg: DecodeConfig) -> DecodeResult:
    """Dispatch on model mode and ``decode_cfg.search``."""
    if decode_cfg.search == "greedy":
        return greedy_batch(params, config, [src], decode_cfg.max_len, decode_cfg.length_penalty)[0]
    if config.bidirectional:
        return beam_search_bidirectional(params, config, src, decode_cfg)
    return beam_search_unidirectional(params, config, src, decode_cfg)


def decode_corpus(
    params: Params,
    config: ModelConfig,
    sources: Sequence[Sequence[int]],
    decode_cfg: DecodeConfig,
    batch_size: int = 1,
) -> List[DecodeResult]:
    """Decode every source; greedy search may batch ``batch_size`` sources per call."""
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    if decode_cfg.search == "greedy" and batch_size > 1:
        results = []
        for start in range(0, len(sources), batch_size):
            chunk = sources[start : start + batch_size]
            results.extend(greedy_batch(params, config, chunk, decode_cfg.max_len, decode_cfg.length_penalty))
        return results
    return [decode(params, config, src, decode_cfg) for src in sources]


def rescore_pair(params: Params, config: ModelConfig, src: Sequence[int], fwd: Sequence[int], bwd: Sequence[int]) -> float:
    """Joint log-probability of generated halves recomputed with one full forward pass."""
    steps = stream_steps(fwd, bwd)
    fwd_in, bwd_in = [L2R], [R2L]
    live_f, live_b = [True], [True]
    for t in range(1, steps):
        prev_f_done = EOS in fwd[:t]
        prev_b_done = EOS in bwd[:t]
        fwd_in.append(PAD if prev_f_done else fwd[t - 1])
        bwd_in.append(PAD if prev_b_done else bwd[t - 1])
        live_f.append(not prev_f_done)
        live_b.append(not prev_b_done)
    src_ids = [[int(t) for t in src] + [EOS]]
    src_mask = make_padding_mask([len(src_ids[0])], len(src_ids[0]))
    with no_grad():
        enc_out = encode(np.array(src_ids), src_mask, params, config)
        logits_f, logits_b = decode_bidirectional(
            np.array([fwd_in]),
            np.array([bwd_in]),
            enc_out,
            make_causal_mask(steps),
            src_mask,
            params,
            config,
            fwd_live=np.array([live_f]),
            bwd_live=np.array([live_b]),
        )
    logp_f = _log_probs(logits_f.data[0], BANNED_BIDIRECTIONAL)
    logp_b = _log_probs(logits_b.data[0], BANNED_BIDIRECTIONAL)
    return float(sum(logp_f[t, tok] for t, tok in enumerate(fwd)) + sum(logp_b[t, tok] for t, tok in enumerate(bwd)))
