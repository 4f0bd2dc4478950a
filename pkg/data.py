"""Vocabulary, bidirectional target split/stitch, batching and synthetic tasks."""
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError, InputError, VocabError
from helpers import PathLike, derive_rng, read_lines, write_lines

logger = logging.getLogger(__name__)

PAD, EOS, UNK, L2R, R2L, NULL = 0, 1, 2, 3, 4, 5
RESERVED_TOKENS = ("<pad>", "<eos>", "<unk>", "<l2r>", "<r2l>", "<null>")
NUM_RESERVED = len(RESERVED_TOKENS)

NullSide = Literal["none", "fwd", "bwd"]
TokenPair = Tuple[List[str], List[str]]


class Vocabulary:
    """Token <-> id bijection; ids 0..5 are the reserved tokens."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:NUM_RESERVED]) != RESERVED_TOKENS:
            raise InputError(f"vocabulary must start with the reserved tokens {', '.join(RESERVED_TOKENS)}")
        if len(set(tokens)) != len(tokens):
            raise InputError("vocabulary contains duplicate tokens")
        self.tokens = tokens
        self.index = {token: i for i, token in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index.get(token, UNK)

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.index.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.tokens):
                raise VocabError(f"token id {i} outside vocabulary of size {len(self.tokens)}")
            out.append(self.tokens[i])
        return out

    def save(self, path: PathLike) -> None:
        write_lines(path, self.tokens)

    @classmethod
    def load(cls, path: PathLike) -> "Vocabulary":
        return cls(read_lines(path))


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Reserved tokens, then real tokens by descending count, ties lexicographic."""
    if max_size <= NUM_RESERVED:
        raise ConfigError(f"max vocabulary size must exceed {NUM_RESERVED}, got {max_size}")
    counts = Counter(token for sentence in corpus for token in sentence if token not in RESERVED_TOKENS)
    if not counts:
        raise InputError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    kept = [token for token, _ in ranked[: max_size - NUM_RESERVED]]
    logger.info("Built vocabulary: %d real tokens kept of %d seen", len(kept), len(counts))
    return Vocabulary(list(RESERVED_TOKENS) + kept)


# Target Schemas
@dataclass(frozen=True)
class BidirectionalTarget:
    fwd: Tuple[int, ...]
    bwd: Tuple[int, ...]
    null_side: NullSide = "none"

    def __post_init__(self):
        if len(self.fwd) != len(self.bwd):
            raise InputError(f"stream halves differ in length: {len(self.fwd)} vs {len(self.bwd)}")


def split_target(y: Sequence[int], rng: np.random.Generator) -> BidirectionalTarget:
    """Halve ``y`` and reverse the second half; odd lengths get one <null> on a random side."""
    y = [int(t) for t in y]
    if not y:
        raise InputError("cannot split an empty target")
    reserved = [t for t in y if t < NUM_RESERVED]
    if reserved:
        raise InputError(f"target contains reserved token ids {sorted(set(reserved))}")
    n = len(y)
    side: NullSide = "none"
    if n % 2 == 0:
        head, tail = y[: n // 2], y[n // 2 :][::-1]
    elif rng.integers(2) == 0:
        side = "fwd"
        head, tail = y[: (n - 1) // 2] + [NULL], y[(n - 1) // 2 :][::-1]
    else:
        side = "bwd"
        head, tail = y[: (n + 1) // 2], y[(n + 1) // 2 :][::-1] + [NULL]
    return BidirectionalTarget(tuple([L2R] + head + [EOS]), tuple([R2L] + tail + [EOS]), side)


def _until_eos(ids: Iterable[int]) -> List[int]:
    out = []
    for i in ids:
        if int(i) == EOS:
            break
        out.append(int(i))
    return out


def stitch(fwd: Iterable[int], bwd: Iterable[int]) -> List[int]:
    """Forward half plus the reversed backward half, reserved ids removed."""
    head = [i for i in _until_eos(fwd) if i >= NUM_RESERVED]
    tail = [i for i in _until_eos(bwd) if i >= NUM_RESERVED]
    return head + tail[::-1]


# Batch Schemas
@dataclass
class Batch:
    """Padded id matrices for one step; ``bwd_*`` are None for single-stream models."""

    src_ids: np.ndarray
    fwd_in: np.ndarray
    fwd_out: np.ndarray
    bwd_in: Optional[np.ndarray]
    bwd_out: Optional[np.ndarray]
    src_lengths: List[int]
    tgt_lengths: List[int]
    loss_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.src_ids.shape[0]

    @property
    def tokens(self) -> int:
        return int(self.loss_mask.sum())


def _pad(rows: Sequence[Sequence[int]], width: int) -> np.ndarray:
    out = np.full((len(rows), width), PAD, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, : len(row)] = row
    return out


def encode_sources(sources: Sequence[Sequence[str]], vocab: Vocabulary) -> Tuple[np.ndarray, List[int]]:
    """Source ids with an appended <eos>, padded to the longest row."""
    rows = [vocab.encode(src) + [EOS] for src in sources]
    lengths = [len(r) for r in rows]
    return _pad(rows, max(lengths)), lengths


def make_batch(pairs: Sequence[Tuple[Sequence[str], BidirectionalTarget]], vocab: Vocabulary) -> Batch:
    if not pairs:
        raise InputError("cannot batch an empty list of examples")
    src_ids, src_lengths = encode_sources([src for src, _ in pairs], vocab)
    targets = [t for _, t in pairs]
    q = max(len(t.fwd) for t in targets) - 1
    fwd_out = _pad([t.fwd[1:] for t in targets], q)
    bwd_out = _pad([t.bwd[1:] for t in targets], q)
    return Batch(
        src_ids=src_ids,
        fwd_in=_pad([t.fwd[:-1] for t in targets], q),
        fwd_out=fwd_out,
        bwd_in=_pad([t.bwd[:-1] for t in targets], q),
        bwd_out=bwd_out,
        src_lengths=src_lengths,
        tgt_lengths=[len(t.fwd) - 1 for t in targets],
        loss_mask=fwd_out != PAD,
    )


def make_unidirectional_batch(
    pairs: Sequence[Tuple[Sequence[str], Sequence[int]]], vocab: Vocabulary, direction: str = "l2r"
) -> Batch:
    """Single-stream batch; ``r2l`` reverses each target behind the <r2l> start label."""
    if not pairs:
        raise InputError("cannot batch an empty list of examples")
    src_ids, src_lengths = encode_sources([src for src, _ in pairs], vocab)
    if direction == "r2l":
        seqs = [[R2L] + list(tgt)[::-1] + [EOS] for _, tgt in pairs]
    else:
        seqs = [[L2R] + list(tgt) + [EOS] for _, tgt in pairs]
    q = max(len(s) for s in seqs) - 1
    out = _pad([s[1:] for s in seqs], q)
    return Batch(
        src_ids=src_ids,
        fwd_in=_pad([s[:-1] for s in seqs], q),
        fwd_out=out,
        bwd_in=None,
        bwd_out=None,
        src_lengths=src_lengths,
        tgt_lengths=[len(s) - 1 for s in seqs],
        loss_mask=out != PAD,
    )


# Synthetic Tasks
def apply_task(task: str, src: Sequence[str]) -> List[str]:
    if task == "copy":
        return list(src)
    if task == "reverse":
        return list(src)[::-1]
    if task == "sort":
        return sorted(src, key=int)
    raise ConfigError(f"unknown task {task!r}; expected copy, reverse or sort")


def synth_generate(
    task: str,
    count: int,
    len_range: Tuple[int, int],
    vocab_real_size: int,
    seed: int,
    max_positions: Optional[int] = None,
) -> List[TokenPair]:
    """``count`` (src, tgt) pairs over integer tokens ``0..vocab_real_size-1``.

    Example ``i`` draws from its own stream ``derive_rng(seed, i)``.
    """
    low, high = len_range
    if low < 1 or low > high:
        raise ConfigError(f"invalid length range [{low}, {high}]")
    if max_positions is not None and high > max_positions - 2:
        raise ConfigError(f"max length {high} exceeds max_positions - 2 = {max_positions - 2}")
    if vocab_real_size < 1 or count < 0:
        raise ConfigError(f"need vocab_real_size >= 1 and count >= 0, got {vocab_real_size} and {count}")
    apply_task(task, [])

    pairs = []
    for i in range(count):
        rng = derive_rng(seed, i)
        length = int(rng.integers(low, high + 1))
        src = [str(t) for t in rng.integers(0, vocab_real_size, size=length)]
        pairs.append((src, apply_task(task, src)))
    return pairs


# Dataset files
def read_tsv(path: PathLike) -> List[TokenPair]:
    pairs = []
    for number, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise InputError(f"{path}:{number}: expected source<TAB>target, got {len(fields)} field(s)")
        pairs.append((fields[0].split(), fields[1].split()))
    if not pairs:
        raise InputError(f"{path} contains no examples")
    return pairs


def write_tsv(path: PathLike, pairs: Iterable[TokenPair]) -> None:
    write_lines(path, (" ".join(src) + "\t" + " ".join(tgt) for src, tgt in pairs))
