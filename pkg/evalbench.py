"""Corpus metrics, source-length buckets and batch-1 decoding-speed benchmarks."""
import csv
import io
import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.table import Table
from sacrebleu.metrics import BLEU

from decoding import DecodeResult, decode_corpus, stream_steps
from errors import BenchmarkError, ConfigError, InputError
from helpers import Stopwatch
from nn.model import Params
from schemas import BucketRow, DecodeConfig, EvalReport, ModelConfig, ModelSpeed

logger = logging.getLogger(__name__)

WARMUP_SENTENCES = 5


def _as_text(tokens: Sequence) -> str:
    return " ".join(str(t) for t in tokens)


def _aligned(hypotheses: Sequence, references: Sequence, what: str) -> None:
    if len(hypotheses) != len(references):
        raise InputError(f"{what}: {len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise InputError(f"{what} of an empty corpus")


def bleu(hypotheses: Sequence[Sequence], references: Sequence[Sequence], max_n: int = 4) -> float:
    """Corpus BLEU on pre-tokenized, case-sensitive text without smoothing.

    n-gram match statistics come from sacrebleu; the score is recombined here so
    that identical corpora give exactly 100.0.
    """
    _aligned(hypotheses, references, "BLEU")
    metric = BLEU(tokenize="none", smooth_method="none", max_ngram_order=max_n, effective_order=False, force=True)
    stats = metric.corpus_score([_as_text(h) for h in hypotheses], [[_as_text(r) for r in references]])
    if stats.sys_len == 0 or any(c == 0 for c in stats.counts) or any(t == 0 for t in stats.totals):
        return 0.0
    log_precision = sum(math.log(c / t) for c, t in zip(stats.counts, stats.totals)) / max_n
    brevity = 1.0 if stats.sys_len >= stats.ref_len else math.exp(1.0 - stats.ref_len / stats.sys_len)
    return 100.0 * brevity * math.exp(log_precision)


def exact_match(hypotheses: Sequence[Sequence], references: Sequence[Sequence]) -> float:
    _aligned(hypotheses, references, "exact match")
    hits = sum(1 for h, r in zip(hypotheses, references) if [str(t) for t in h] == [str(t) for t in r])
    return hits / len(references)


def length_report(
    sources: Sequence[Sequence],
    hypotheses: Sequence[Sequence],
    references: Sequence[Sequence],
    bucket_width: int,
    system: str = "hyp",
) -> List[BucketRow]:
    """Rows for source-length buckets [1, w], (w, 2w], ...; empty buckets are omitted."""
    if bucket_width < 1:
        raise ConfigError(f"bucket width must be >= 1, got {bucket_width}")
    _aligned(hypotheses, references, "length report")
    if len(sources) != len(references):
        raise InputError(f"length report: {len(sources)} sources vs {len(references)} references")

    buckets: Dict[int, List[int]] = {}
    for i, src in enumerate(sources):
        buckets.setdefault((max(len(src), 1) - 1) // bucket_width, []).append(i)

    rows = []
    for b in sorted(buckets):
        idx = buckets[b]
        hyps = [hypotheses[i] for i in idx]
        refs = [references[i] for i in idx]
        rows.append(
            BucketRow(
                system=system,
                lower=b * bucket_width + 1,
                upper=(b + 1) * bucket_width,
                count=len(idx),
                bleu=bleu(hyps, refs),
                mean_hyp_len=float(np.mean([len(h) for h in hyps])),
                mean_ref_len=float(np.mean([len(r) for r in refs])),
            )
        )
    return rows


def evaluate_outputs(
    sources: Sequence[Sequence],
    systems: Mapping[str, Sequence[Sequence]],
    references: Sequence[Sequence],
    bucket_width: int,
) -> Dict[str, EvalReport]:
    """One report per named hypothesis list, all against the same references."""
    reports = {}
    for name, hyps in systems.items():
        reports[name] = EvalReport(
            bleu=bleu(hyps, references),
            exact_match=exact_match(hyps, references),
            sentences=len(references),
            buckets=length_report(sources, hyps, references, bucket_width, system=name),
        )
    return reports


def _check_steps(name: str, config: ModelConfig, results: Sequence[DecodeResult]) -> List[int]:
    steps = []
    for i, r in enumerate(results):
        spent = stream_steps(r.fwd, r.bwd) if config.bidirectional else len(r.fwd)
        if r.steps != spent:
            raise BenchmarkError(f"{name}: sentence {i} reports {r.steps} decoder steps but generated {spent} positions")
        steps.append(r.steps)
    return steps


def bench_decode(
    models: Mapping[str, Tuple[Params, ModelConfig]],
    test_set: Sequence[Sequence[int]],
    decode_cfg: DecodeConfig,
    repetitions: int = 3,
    baseline: Optional[str] = None,
    references: Optional[Sequence[Sequence[int]]] = None,
    batch_size: int = 1,
) -> EvalReport:
    """Median wall-clock decoding time per model over ``repetitions`` passes.

    One warmup pass over the first few sentences is excluded from timing. The
    speedup is the baseline's median time over the first other model's.
    """
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    if not test_set:
        raise InputError("benchmark needs at least one test sentence")
    if baseline is not None and baseline not in models:
        raise ConfigError(f"baseline {baseline!r} is not one of the benchmarked models {sorted(models)}")

    speeds = []
    for name, (params, config) in models.items():
        decode_corpus(params, config, test_set[:WARMUP_SENTENCES], decode_cfg, batch_size)
        totals, per_sentence, results = [], [], None
        for _ in range(repetitions):
            seconds, outputs = np.zeros(len(test_set)), []
            for start in range(0, len(test_set), batch_size):
                chunk = test_set[start : start + batch_size]
                with Stopwatch() as watch:
                    out = decode_corpus(params, config, chunk, decode_cfg, batch_size)
                seconds[start : start + len(chunk)] = watch.elapsed / len(chunk)
                outputs.extend(out)
            results = results or outputs
            totals.append(float(seconds.sum()))
            per_sentence.append(seconds)

        steps = _check_steps(name, config, results)
        median = float(np.median(totals))
        lengths = [len(r.tokens) for r in results]
        row = ModelSpeed(
            name=name,
            mode=config.mode,
            search=decode_cfg.search,
            sentences=len(test_set),
            median_seconds=median,
            sentences_per_sec=len(test_set) / median,
            tokens_per_sec=sum(lengths) / median,
            mean_steps=float(np.mean(steps)),
            steps=steps,
            output_lengths=lengths,
            sentence_seconds=np.median(np.stack(per_sentence), axis=0).tolist(),
        )
        if references is not None:
            hyps = [r.tokens for r in results]
            row.bleu = bleu(hyps, references)
            row.exact_match = exact_match(hyps, references)
        logger.info("%s: %.1f sentences/sec, mean %.2f steps", name, row.sentences_per_sec, row.mean_steps)
        speeds.append(row)

    report = EvalReport(sentences=len(test_set), speeds=speeds, baseline=baseline)
    if baseline is not None:
        others = [s for s in speeds if s.name != baseline] or speeds
        report.speedup = report.speed(baseline).median_seconds / others[0].median_seconds
    return report


# Report rendering
def render_eval(reports: Mapping[str, EvalReport], console: Optional[Console] = None) -> None:
    console = console or Console()
    summary = Table(title="Evaluation")
    for column in ("system", "sentences", "BLEU", "exact match"):
        summary.add_column(column)
    for name, rep in reports.items():
        summary.add_row(name, str(rep.sentences), f"{rep.bleu:.2f}", f"{rep.exact_match:.4f}")
    console.print(summary)

    buckets = Table(title="By source length")
    for column in ("system", "bucket", "count", "BLEU", "mean hyp len", "mean ref len"):
        buckets.add_column(column)
    for rep in reports.values():
        for b in rep.buckets:
            buckets.add_row(
                b.system, f"{b.lower}-{b.upper}", str(b.count), f"{b.bleu:.2f}", f"{b.mean_hyp_len:.2f}", f"{b.mean_ref_len:.2f}"
            )
    console.print(buckets)


def render_bench(report: EvalReport, console: Optional[Console] = None) -> None:
    console = console or Console()
    table = Table(title=f"Decoding speed ({report.setting})")
    for column in ("model", "mode", "search", "sentences", "median s", "sent/s", "tok/s", "mean steps"):
        table.add_column(column)
    for s in report.speeds:
        table.add_row(
            s.name,
            s.mode,
            s.search,
            str(s.sentences),
            f"{s.median_seconds:.4f}",
            f"{s.sentences_per_sec:.2f}",
            f"{s.tokens_per_sec:.2f}",
            f"{s.mean_steps:.2f}",
        )
    console.print(table)
    if report.speedup is not None:
        console.print(f"speedup vs {report.baseline}: {report.speedup:.3f}x")


def eval_key_values(reports: Mapping[str, EvalReport]) -> List[str]:
    lines = []
    for name, rep in reports.items():
        lines += [f"{name}.bleu={rep.bleu:.4f}", f"{name}.exact_match={rep.exact_match:.6f}", f"{name}.sentences={rep.sentences}"]
        for b in rep.buckets:
            key = f"{name}.bucket_{b.lower}_{b.upper}"
            lines += [f"{key}.count={b.count}", f"{key}.bleu={b.bleu:.4f}", f"{key}.mean_hyp_len={b.mean_hyp_len:.4f}"]
    return lines


def bench_key_values(report: EvalReport) -> List[str]:
    lines = [f"setting={report.setting}", f"sentences={report.sentences}"]
    for s in report.speeds:
        lines += [
            f"{s.name}.mode={s.mode}",
            f"{s.name}.search={s.search}",
            f"{s.name}.median_seconds={s.median_seconds:.6f}",
            f"{s.name}.sentences_per_sec={s.sentences_per_sec:.4f}",
            f"{s.name}.tokens_per_sec={s.tokens_per_sec:.4f}",
            f"{s.name}.mean_steps={s.mean_steps:.4f}",
        ]
        if s.bleu is not None:
            lines += [f"{s.name}.bleu={s.bleu:.4f}", f"{s.name}.exact_match={s.exact_match:.6f}"]
    if report.speedup is not None:
        lines += [f"baseline={report.baseline}", f"speedup={report.speedup:.4f}"]
    return lines


def bench_csv(report: EvalReport, source_lengths: Sequence[int], bucket_width: int) -> str:
    """One CSV row per (model, source-length bucket)."""
    if bucket_width < 1:
        raise ConfigError(f"bucket width must be >= 1, got {bucket_width}")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["model", "lower", "upper", "sentences", "seconds", "sentences_per_sec", "mean_steps", "mean_output_len"])
    bucket_of = [(max(n, 1) - 1) // bucket_width for n in source_lengths]
    for s in report.speeds:
        for b in sorted(set(bucket_of)):
            idx = [i for i, k in enumerate(bucket_of) if k == b]
            seconds = sum(s.sentence_seconds[i] for i in idx)
            writer.writerow(
                [
                    s.name,
                    b * bucket_width + 1,
                    (b + 1) * bucket_width,
                    len(idx),
                    f"{seconds:.6f}",
                    f"{len(idx) / seconds:.4f}" if seconds > 0 else "inf",
                    f"{np.mean([s.steps[i] for i in idx]):.4f}",
                    f"{np.mean([s.output_lengths[i] for i in idx]):.4f}",
                ]
            )
    return buffer.getvalue()
