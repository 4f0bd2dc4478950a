import logging
from pathlib import Path
from typing import Dict

from data import build_vocab, synth_generate, write_tsv
from helpers import PathLike
from schemas import RunConfig

logger = logging.getLogger(__name__)


def make_data(run: RunConfig, out_dir: PathLike) -> Dict[str, Path]:
    """Write train/dev/test TSVs and a vocabulary built from the training split.

    All three splits come from one deterministic stream, so a fixed seed gives
    byte-identical files.
    """
    cfg = run.data
    out_dir = Path(out_dir)
    pairs = synth_generate(
        cfg.task,
        cfg.count + cfg.dev_count + cfg.test_count,
        (cfg.min_length, cfg.max_length),
        cfg.vocab_real,
        run.seed,
        max_positions=run.model.max_positions,
    )
    splits = {
        "train": pairs[: cfg.count],
        "dev": pairs[cfg.count : cfg.count + cfg.dev_count],
        "test": pairs[cfg.count + cfg.dev_count :],
    }
    written = {}
    for name, split in splits.items():
        written[name] = out_dir / f"{name}.tsv"
        write_tsv(written[name], split)
    vocab = build_vocab((src + tgt for src, tgt in splits["train"]), cfg.max_vocab_size)
    written["vocab"] = out_dir / "vocab.txt"
    vocab.save(written["vocab"])
    logger.info("Wrote %s task data (%d/%d/%d) to %s", cfg.task, cfg.count, cfg.dev_count, cfg.test_count, out_dir)
    return written
