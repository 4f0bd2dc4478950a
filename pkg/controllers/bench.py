import logging
from typing import List, Mapping, Optional, Tuple

import numpy as np

from controllers.models import load_model
from data import read_tsv
from decoding import decode_config_for
from errors import ContractError, InputError
from evalbench import bench_decode
from helpers import PathLike
from schemas import EvalReport, RunConfig

logger = logging.getLogger(__name__)


def bench_models(
    run: RunConfig,
    checkpoints: Mapping[str, PathLike],
    test_path: PathLike,
    baseline: Optional[str] = None,
    repetitions: int = 3,
    batch_size: int = 1,
    min_source_length: int = 1,
    limit: Optional[int] = None,
    dtype: str = "float64",
) -> Tuple[EvalReport, List[int]]:
    """Time every checkpoint on the same test sources; returns the report and source lengths."""
    models, vocab, decode_cfg = {}, None, run.decode
    for name, path in checkpoints.items():
        params, model_vocab = load_model(path)
        if vocab is not None and model_vocab != vocab:
            raise ContractError(f"{path} does not share the vocabulary of the other benchmarked models")
        vocab = model_vocab
        decode_cfg = decode_config_for(params.config, decode_cfg)
        if dtype != "float64":
            params = params.astype(np.dtype(dtype))
        models[name] = (params, params.config)

    pairs = [p for p in read_tsv(test_path) if len(p[0]) >= min_source_length][:limit]
    if not pairs:
        raise InputError(f"{test_path} has no sources of length >= {min_source_length}")
    sources = [vocab.encode(src) for src, _ in pairs]
    references = [vocab.encode(tgt) for _, tgt in pairs]
    report = bench_decode(models, sources, decode_cfg, repetitions, baseline, references, batch_size)
    if batch_size > 1:
        report.setting = f"batch-{batch_size} CPU throughput"
    return report, [len(src) for src, _ in pairs]
