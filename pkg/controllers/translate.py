import logging
from typing import List, Sequence

from controllers.models import load_model
from decoding import decode_config_for, decode_corpus
from errors import InputError
from helpers import PathLike
from schemas import RunConfig

logger = logging.getLogger(__name__)


def translate_lines(
    run: RunConfig,
    checkpoint: PathLike,
    lines: Sequence[str],
    dump_halves: bool = False,
    batch_size: int = 1,
) -> List[str]:
    """One output line per source line; with ``dump_halves`` each line is
    ``output<TAB>forward half<TAB>backward half`` (generated tokens as emitted)."""
    params, vocab = load_model(checkpoint, run.paths.vocab_path)
    decode_cfg = decode_config_for(params.config, run.decode)
    sources = [vocab.encode(line.split()) for line in lines]
    longest = max((len(s) for s in sources), default=0) + 1
    if longest > params.config.max_positions:
        raise InputError(f"a source line needs {longest} positions but max_positions={params.config.max_positions}")

    results = decode_corpus(params, params.config, sources, decode_cfg, batch_size)
    out = []
    for result in results:
        text = " ".join(vocab.decode(result.tokens))
        if dump_halves:
            text = "\t".join([text, " ".join(vocab.decode(result.fwd)), " ".join(vocab.decode(result.bwd))])
        out.append(text)
    logger.info("Translated %d line(s), %d decoder steps", len(out), sum(r.steps for r in results))
    return out
