"""Joint label-smoothed loss, warmup schedule, Adam, the training loop and distillation."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from data import UNK, Batch, TokenPair, Vocabulary, build_vocab, make_batch, make_unidirectional_batch, split_target
from decoding import decode_config_for, decode_corpus
from errors import ContractError, InputError
from evalbench import bleu, exact_match
from helpers import PathLike, Stopwatch, derive_rng
from nn.attention import make_causal_mask, make_padding_mask
from nn.checkpoint import load_checkpoint, save_checkpoint, vocab_path_for
from nn.model import Params, decode_bidirectional, decode_unidirectional, encode, init_params
from nn.tensor import Tensor, log_softmax
from schemas import DecodeConfig, ModelConfig, TrainHyper

logger = logging.getLogger(__name__)

# derive_rng stream keys
SHUFFLE_STREAM, DROPOUT_STREAM, NULL_SIDE_STREAM = 0, 1, 2


def _smoothed_nll(logits: Tensor, targets: np.ndarray, mask: np.ndarray, eps: float) -> Tensor:
    """Summed smoothed cross-entropy over masked positions.

    The target id gets 1 - eps + eps/(V-1); every other non-pad id gets eps/(V-1).
    """
    if logits.shape[:-1] != targets.shape or targets.shape != mask.shape:
        raise ContractError(f"logits {logits.shape}, targets {targets.shape} and mask {mask.shape} disagree")
    vocab = logits.shape[-1]
    share = eps / (vocab - 1)
    q = np.full(logits.shape, share, dtype=logits.dtype)
    q[..., 0] = 0.0
    np.put_along_axis(q, targets[..., None].astype(np.int64), 1.0 - eps + share, axis=-1)
    q *= mask[..., None]
    return -(log_softmax(logits, axis=-1) * Tensor(q)).sum()


def joint_loss(
    logits_f: Tensor,
    logits_b: Tensor,
    fwd_out: np.ndarray,
    bwd_out: np.ndarray,
    loss_mask: np.ndarray,
    eps: float,
) -> Tensor:
    """Mean smoothed cross-entropy over every masked position of both streams."""
    mask = np.asarray(loss_mask, dtype=bool)
    total = 2 * int(mask.sum())
    if total == 0:
        raise ContractError("loss mask selects no positions")
    return (_smoothed_nll(logits_f, fwd_out, mask, eps) + _smoothed_nll(logits_b, bwd_out, mask, eps)) * (1.0 / total)


def token_loss(logits: Tensor, out: np.ndarray, loss_mask: np.ndarray, eps: float) -> Tensor:
    """Single-stream counterpart of ``joint_loss``."""
    mask = np.asarray(loss_mask, dtype=bool)
    total = int(mask.sum())
    if total == 0:
        raise ContractError("loss mask selects no positions")
    return _smoothed_nll(logits, out, mask, eps) * (1.0 / total)


def forward(params: Params, config: ModelConfig, batch: Batch, rng=None) -> Tuple[Tensor, Optional[Tensor]]:
    """Teacher-forced logits for a batch; ``rng`` switches dropout on."""
    src_mask = make_padding_mask(batch.src_lengths, batch.src_ids.shape[1])
    enc_out = encode(batch.src_ids, src_mask, params, config, rng)
    causal = make_causal_mask(batch.fwd_in.shape[1])
    if config.bidirectional:
        return decode_bidirectional(batch.fwd_in, batch.bwd_in, enc_out, causal, src_mask, params, config, rng=rng)
    return decode_unidirectional(batch.fwd_in, enc_out, causal, src_mask, params, config, rng), None


def batch_loss(params: Params, config: ModelConfig, batch: Batch, eps: float, rng=None) -> Tensor:
    logits_f, logits_b = forward(params, config, batch, rng)
    if logits_b is None:
        return token_loss(logits_f, batch.fwd_out, batch.loss_mask, eps)
    return joint_loss(logits_f, logits_b, batch.fwd_out, batch.bwd_out, batch.loss_mask, eps)


def lr(step: int, d_model: int, warmup: int) -> float:
    """d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)."""
    if step < 1:
        raise ContractError(f"learning-rate step must be >= 1, got {step}")
    return d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)


# Optimizer Schemas
@dataclass
class OptimizerState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0


def init_optimizer(arrays: Dict[str, np.ndarray]) -> OptimizerState:
    return OptimizerState(
        m={name: np.zeros_like(a) for name, a in arrays.items()},
        v={name: np.zeros_like(a) for name, a in arrays.items()},
    )


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: OptimizerState,
    hyper: TrainHyper,
    lr_value: float,
) -> Tuple[Dict[str, np.ndarray], OptimizerState]:
    """Bias-corrected Adam; returns new arrays and a new state, inputs untouched."""
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ContractError("parameter, gradient and moment names differ")
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ContractError(f"{name}: parameter {p.shape}, gradient {g.shape}, moment {state.m[name].shape}")
        m = hyper.beta1 * state.m[name] + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v[name] + (1.0 - hyper.beta2) * g * g
        m_hat = m / (1.0 - hyper.beta1**t)
        v_hat = v / (1.0 - hyper.beta2**t)
        new_params[name] = p - lr_value * m_hat / (np.sqrt(v_hat) + hyper.adam_eps)
        new_m[name], new_v[name] = m, v
    return new_params, OptimizerState(new_m, new_v, t)


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


@dataclass
class TrainResult:
    checkpoint_path: Path
    vocab_path: Path
    config: ModelConfig
    best_step: int
    best_metric: float
    losses: List[float] = field(default_factory=list)
    log: List[str] = field(default_factory=list)
    params: Optional[Params] = None


def _encoded_targets(pairs: Sequence[TokenPair], vocab: Vocabulary, bidirectional: bool):
    encoded = [(src, vocab.encode(tgt)) for src, tgt in pairs]
    if not bidirectional:
        return encoded
    kept = [(src, tgt) for src, tgt in encoded if tgt and UNK not in tgt]
    if len(kept) < len(encoded):
        logger.warning("Skipping %d example(s) with empty or out-of-vocabulary targets", len(encoded) - len(kept))
    if not kept:
        raise InputError("no training example has a non-empty in-vocabulary target")
    return kept


def _make_training_batch(examples, indices, vocab, config, seed, epoch) -> Batch:
    if not config.bidirectional:
        return make_unidirectional_batch(examples, vocab, config.mode)
    pairs = [
        (src, split_target(tgt, derive_rng(seed, NULL_SIDE_STREAM, epoch, int(i)))) for (src, tgt), i in zip(examples, indices)
    ]
    return make_batch(pairs, vocab)


def dev_score(
    params: Params, config: ModelConfig, vocab: Vocabulary, dev_set: Sequence[TokenPair], metric: str, max_len: int
) -> float:
    sources = [vocab.encode(src) for src, _ in dev_set]
    results = decode_corpus(params, config, sources, DecodeConfig(search="greedy", max_len=max(max_len, 2)), batch_size=32)
    hyps = [vocab.decode(r.tokens) for r in results]
    refs = [tgt for _, tgt in dev_set]
    return bleu(hyps, refs) if metric == "bleu" else exact_match(hyps, refs)


def _check_lengths(pairs: Sequence[TokenPair], config: ModelConfig) -> int:
    longest_src = max(len(src) for src, _ in pairs) + 1
    longest_tgt = max(len(tgt) for _, tgt in pairs)
    needed = max(longest_src, (math.ceil(longest_tgt / 2) if config.bidirectional else longest_tgt) + 1)
    if needed > config.max_positions:
        raise InputError(f"examples need {needed} positions but max_positions={config.max_positions}")
    return longest_tgt


def train(
    config: ModelConfig,
    hyper: TrainHyper,
    train_set: Sequence[TokenPair],
    dev_set: Sequence[TokenPair],
    checkpoint_path: PathLike,
    vocab: Optional[Vocabulary] = None,
    log_path: Optional[PathLike] = None,
) -> TrainResult:
    """Train from scratch and keep the checkpoint with the best dev metric.

    Without a vocabulary one is built from the training set, capped at
    ``config.vocab_size``; the model's vocab size follows the vocabulary.
    """
    if not train_set or not dev_set:
        raise InputError("training and development sets must be non-empty")
    if vocab is None:
        vocab = build_vocab((s + t for s, t in train_set), config.vocab_size)
    if len(vocab) != config.vocab_size:
        logger.info("Model vocab_size set to %d to match the vocabulary", len(vocab))
        config = config.replace(vocab_size=len(vocab))
    longest = _check_lengths(list(train_set) + list(dev_set), config)
    dev = list(dev_set)[: hyper.dev_limit]

    checkpoint_path = Path(checkpoint_path)
    vocab_path = vocab_path_for(checkpoint_path)
    examples = _encoded_targets(train_set, vocab, config.bidirectional)
    seed = hyper.seed
    params = init_params(config, seed)
    opt = init_optimizer(params.arrays())
    dropout_rng = derive_rng(seed, DROPOUT_STREAM)
    logger.info("Training %s model: %d parameters, %d examples", config.mode, params.size, len(examples))

    log_handle = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        try:
            log_handle = open(log_path, "w", encoding="utf-8", newline="\n")
        except OSError as e:
            raise InputError(f"Cannot write training log {log_path}: {e.strerror or e}")

    result = TrainResult(checkpoint_path, vocab_path, config, best_step=0, best_metric=-math.inf)
    window: List[float] = []
    step, epoch = 0, 0
    try:
        with Stopwatch() as watch:
            while step < hyper.max_steps:
                order = derive_rng(seed, SHUFFLE_STREAM, epoch).permutation(len(examples))
                for start in range(0, len(order), hyper.batch_size):
                    idx = order[start : start + hyper.batch_size]
                    batch = _make_training_batch([examples[i] for i in idx], idx, vocab, config, seed, epoch)
                    loss = batch_loss(params, config, batch, hyper.label_smoothing, dropout_rng)
                    loss.backward()
                    grads, _ = clip_grad_norm(params.grads(), hyper.grad_clip)
                    step += 1
                    rate = hyper.lr_scale * lr(step, config.d_model, hyper.warmup_steps)
                    arrays, opt = adam_step(params.arrays(), grads, opt, hyper, rate)
                    params = params.with_arrays(arrays)
                    result.losses.append(loss.item())
                    window.append(loss.item())

                    evaluated = step % hyper.eval_interval == 0 or step == hyper.max_steps
                    dev_value = "-"
                    if evaluated:
                        score = dev_score(params, config, vocab, dev, hyper.dev_metric, longest)
                        dev_value = f"{score:.4f}"
                        if score > result.best_metric:
                            result.best_metric, result.best_step, result.params = score, step, params
                            save_checkpoint(
                                checkpoint_path, params, {"step": step, "dev_metric": hyper.dev_metric, "dev_value": dev_value}
                            )
                            vocab.save(vocab_path)
                    if evaluated or step % hyper.log_interval == 0:
                        line = f"{step}\t{np.mean(window):.6f}\t{rate:.6e}\t{dev_value}"
                        window = []
                        result.log.append(line)
                        logger.info("step %d loss %s lr %s dev %s", step, *line.split("\t")[1:])
                        if log_handle is not None:
                            log_handle.write(line + "\n")
                    if step >= hyper.max_steps:
                        break
                epoch += 1
    finally:
        if log_handle is not None:
            log_handle.close()
    logger.info(
        "Finished %d steps in %.1fs; best %s %.4f at step %d",
        step,
        watch.elapsed,
        hyper.dev_metric,
        result.best_metric,
        result.best_step,
    )
    return result


def distill(
    teacher_checkpoint: PathLike,
    train_set: Sequence[TokenPair],
    decode_config: DecodeConfig,
    vocab: Optional[Vocabulary] = None,
) -> List[TokenPair]:
    """Sequence-level distillation: replace each target by the teacher's beam-search output.

    ``decode_config`` supplies beam size, length penalty and max_len; the search
    is always beam. When the teacher's output for a source is empty, that
    example keeps its original target and a warning counts such examples.
    """
    params, _ = load_checkpoint(teacher_checkpoint)
    config = params.config
    if config.bidirectional:
        raise ContractError(f"distillation teacher must be an l2r or r2l model, {teacher_checkpoint} is {config.mode}")
    vocab = vocab or Vocabulary.load(vocab_path_for(teacher_checkpoint))
    if len(vocab) != config.vocab_size:
        raise ContractError(
            f"teacher {teacher_checkpoint} has vocab_size={config.vocab_size} but the vocabulary has {len(vocab)} tokens"
        )
    sources = [vocab.encode(src) for src, _ in train_set]
    beam = decode_config_for(config, decode_config.replace(search="beam"))
    results = decode_corpus(params, config, sources, beam)
    distilled, kept = [], 0
    for (src, tgt), result in zip(train_set, results):
        if result.tokens:
            distilled.append((list(src), vocab.decode(result.tokens)))
        else:
            distilled.append((list(src), list(tgt)))
            kept += 1
    if kept:
        logger.warning("Teacher produced empty output for %d source(s); original targets kept", kept)
    return distilled


def sweep_lambda(
    config: ModelConfig,
    hyper: TrainHyper,
    train_set: Sequence[TokenPair],
    dev_set: Sequence[TokenPair],
    lambdas: Sequence[float],
    out_dir: PathLike,
    vocab: Optional[Vocabulary] = None,
) -> Dict[float, TrainResult]:
    """Train one bidirectional model per interpolation weight with the same seed."""
    if not config.bidirectional:
        raise ContractError("lambda sweep needs a bidirectional model config")
    results = {}
    for value in lambdas:
        name = f"lambda_{value:g}"
        results[value] = train(
            config.replace(lam=value),
            hyper,
            train_set,
            dev_set,
            Path(out_dir) / f"{name}.ckpt",
            vocab=vocab,
            log_path=Path(out_dir) / f"{name}.log",
        )
    return results
