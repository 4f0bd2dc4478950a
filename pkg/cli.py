#!/usr/bin/env python3
"""``sbsg`` command line: make-data, train, translate, evaluate, bench, distill, sweep-lambda.

Run ``python cli.py --help``. Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
import os
import sys
from pathlib import Path

from dotenv import load_dotenv

ROOT_DIR = Path(__file__).parent
load_dotenv(ROOT_DIR / ".env")
# BLAS thread pools read these once, when numpy is first imported
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, os.getenv("SBSG_THREADS", "1"))

import logging  # noqa: E402
from typing import Dict, List, Optional  # noqa: E402

import click  # noqa: E402
import typer  # noqa: E402
from rich.console import Console  # noqa: E402

from controllers import bench, distill, evaluate, make_data, sweep, train, translate  # noqa: E402
from errors import ConfigError, SbsgError  # noqa: E402
from evalbench import bench_csv, bench_key_values, eval_key_values, render_bench, render_eval  # noqa: E402
from helpers import read_lines, write_lines  # noqa: E402
from schemas import DataConfig, DecodeConfig, ModelConfig, RunConfig, TrainHyper  # noqa: E402
from settings import DEBUG_MODE, LOG_LEVEL, load_run_config  # noqa: E402

# Configure logging
logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger("sbsg")

app = typer.Typer(
    name="sbsg",
    help="Synchronous bidirectional sequence generation: data, training, decoding, evaluation, benchmarks.",
    add_completion=False,
    no_args_is_help=True,
    pretty_exceptions_enable=False,
    rich_markup_mode=None,
)


def _default(schema, name: str) -> str:
    """Help suffix naming the schema default a None flag falls back to."""
    return f" [default: {schema.model_fields[name].default}]"


CONFIG = typer.Option(None, "--config", help="key=value config file; flags override it. [default: none]")
SEED = typer.Option(
    None, "--seed", help="Single seed for init, data, null-side draws and dropout." + _default(RunConfig, "seed")
)
MODE = typer.Option(None, "--mode", help="bidirectional, l2r or r2l." + _default(ModelConfig, "mode"))
LAMBDA = typer.Option(None, "--lambda", help="Cross-stream attention weight in [0, 1]." + _default(ModelConfig, "lam"))
BEAM = typer.Option(
    None,
    "--beam",
    help="Beam size (even for bidirectional models); implies --search beam." + _default(DecodeConfig, "beam_size"),
)
ALPHA = typer.Option(None, "--alpha", help="Length penalty exponent." + _default(DecodeConfig, "length_penalty"))
MAX_LEN = typer.Option(None, "--max-len", help="Maximum output length." + _default(DecodeConfig, "max_len"))
SEARCH = typer.Option(None, "--search", help="greedy or beam." + _default(DecodeConfig, "search"))


def _run_config(config: Optional[Path], **overrides) -> RunConfig:
    if overrides.get("beam_size") is not None and overrides.get("search") is None:
        overrides["search"] = "beam"
    return load_run_config(config, **overrides)


def _path(value: Optional[Path], fallback: Optional[Path], what: str) -> Path:
    path = value or fallback
    if path is None:
        raise ConfigError(f"no {what} given: pass the flag or set it in the config file")
    return path


def _named(values: List[str], default_name: str) -> Dict[str, Path]:
    named = {}
    for i, value in enumerate(values):
        name, sep, path = value.partition("=")
        if not sep:
            name, path = (default_name if i == 0 else f"{default_name}{i + 1}"), value
        if name in named:
            raise ConfigError(f"duplicate system name {name!r}")
        named[name] = Path(path)
    return named


@app.command("make-data")
def make_data_cmd(
    config: Optional[Path] = CONFIG,
    seed: Optional[int] = SEED,
    task: Optional[str] = typer.Option(None, "--task", help="copy, reverse or sort." + _default(DataConfig, "task")),
    count: Optional[int] = typer.Option(None, "--count", help="Training examples." + _default(DataConfig, "count")),
    dev_count: Optional[int] = typer.Option(
        None, "--dev-count", help="Development examples." + _default(DataConfig, "dev_count"),
    ),
    test_count: Optional[int] = typer.Option(
        None, "--test-count", help="Test examples." + _default(DataConfig, "test_count"),
    ),
    min_length: Optional[int] = typer.Option(
        None, "--min-length", help="Shortest source." + _default(DataConfig, "min_length"),
    ),
    max_length: Optional[int] = typer.Option(
        None, "--max-length", help="Longest source." + _default(DataConfig, "max_length"),
    ),
    vocab_real: Optional[int] = typer.Option(
        None, "--vocab-real", help="Number of real tokens." + _default(DataConfig, "vocab_real"),
    ),
    out_dir: Optional[Path] = typer.Option(
        None, "--out-dir", help="Directory for train/dev/test TSVs and vocab.txt. [default: data]",
    ),
):
    """Generate a synthetic copy/reverse/sort dataset."""
    run = _run_config(
        config,
        seed=seed,
        task=task,
        count=count,
        dev_count=dev_count,
        test_count=test_count,
        min_length=min_length,
        max_length=max_length,
        vocab_real=vocab_real,
    )
    written = make_data.make_data(run, out_dir or run.paths.data_dir or Path("data"))
    write_lines("-", [f"{name}={path}" for name, path in written.items()])


@app.command("train")
def train_cmd(
    config: Optional[Path] = CONFIG,
    seed: Optional[int] = SEED,
    mode: Optional[str] = MODE,
    lam: Optional[float] = LAMBDA,
    train_path: Optional[Path] = typer.Option(
        None, "--train", help="Training TSV. [default: train_path from --config]",
    ),
    dev_path: Optional[Path] = typer.Option(None, "--dev", help="Development TSV. [default: dev_path from --config]"),
    vocab_path: Optional[Path] = typer.Option(None, "--vocab", help="Vocabulary file. [default: built from --train]"),
    checkpoint: Optional[Path] = typer.Option(
        None, "--checkpoint", help="Where the best checkpoint is written. [default: checkpoint_path from --config]",
    ),
    log_path: Optional[Path] = typer.Option(None, "--log", help="Tab-separated training log. [default: none]"),
    max_steps: Optional[int] = typer.Option(
        None, "--max-steps", help="Optimizer steps." + _default(TrainHyper, "max_steps"),
    ),
    batch_size: Optional[int] = typer.Option(
        None, "--batch-size", help="Examples per step." + _default(TrainHyper, "batch_size"),
    ),
    warmup_steps: Optional[int] = typer.Option(
        None, "--warmup-steps", help="Learning-rate warmup." + _default(TrainHyper, "warmup_steps"),
    ),
    dev_metric: Optional[str] = typer.Option(
        None, "--dev-metric", help="exact_match or bleu." + _default(TrainHyper, "dev_metric"),
    ),
):
    """Train a bidirectional or unidirectional model and keep the best-dev checkpoint."""
    run = _run_config(
        config,
        seed=seed,
        mode=mode,
        **{"lambda": lam},
        max_steps=max_steps,
        batch_size=batch_size,
        warmup_steps=warmup_steps,
        dev_metric=dev_metric,
    )
    result = train.run_training(
        run,
        _path(train_path, run.paths.train_path, "training set (--train)"),
        _path(dev_path, run.paths.dev_path, "development set (--dev)"),
        _path(checkpoint, run.paths.checkpoint_path, "checkpoint path (--checkpoint)"),
        vocab_path or run.paths.vocab_path,
        log_path or run.paths.log_path,
    )
    write_lines(
        "-",
        [
            f"checkpoint={result.checkpoint_path}",
            f"best_step={result.best_step}",
            f"{run.train.dev_metric}={result.best_metric:.4f}",
        ],
    )


@app.command("translate")
def translate_cmd(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Model checkpoint."),
    config: Optional[Path] = CONFIG,
    input_path: str = typer.Option("-", "--input", help="Source lines; - reads standard input."),
    output_path: str = typer.Option("-", "--output", help="Output lines; - writes standard output."),
    beam: Optional[int] = BEAM,
    alpha: Optional[float] = ALPHA,
    max_len: Optional[int] = MAX_LEN,
    search: Optional[str] = SEARCH,
    batch: int = typer.Option(1, "--batch", help="Sentences per greedy decoding call."),
    dump_halves: bool = typer.Option(False, "--dump-halves", help="Append the forward and backward halves."),
):
    """Decode source lines with a trained model."""
    run = _run_config(config, beam_size=beam, alpha=alpha, max_len=max_len, search=search)
    lines = translate.translate_lines(run, checkpoint, read_lines(input_path), dump_halves, batch)
    write_lines(output_path, lines)


@app.command("evaluate")
def evaluate_cmd(
    ref: Path = typer.Option(..., "--ref", help="Source/target TSV holding the references."),
    hyp: List[str] = typer.Option(..., "--hyp", help="Hypothesis file, optionally name=path; repeatable."),
    bucket_width: int = typer.Option(4, "--bucket-width", help="Source-length bucket width."),
):
    """BLEU, exact match and per-length-bucket scores for one or more systems."""
    reports = evaluate.evaluate_files(ref, _named(hyp, "hyp"), bucket_width)
    render_eval(reports, Console(stderr=False))
    write_lines("-", eval_key_values(reports))


@app.command("bench")
def bench_cmd(
    model: List[str] = typer.Option(..., "--model", help="Checkpoint to time, optionally name=path; repeatable."),
    baseline: Optional[str] = typer.Option(
        None, "--baseline", help="Baseline checkpoint, optionally name=path. [default: none]",
    ),
    test_path: Optional[Path] = typer.Option(None, "--test", help="Test TSV. [default: test_path from --config]"),
    config: Optional[Path] = CONFIG,
    beam: Optional[int] = BEAM,
    alpha: Optional[float] = ALPHA,
    max_len: Optional[int] = MAX_LEN,
    search: Optional[str] = SEARCH,
    repetitions: int = typer.Option(3, "--repetitions", help="Timed passes; the median is reported."),
    batch: int = typer.Option(1, "--batch", help="Sentences per call (1 = latency setting)."),
    min_src_len: int = typer.Option(1, "--min-src-len", help="Only time sources at least this long."),
    limit: Optional[int] = typer.Option(None, "--limit", help="Time at most this many sentences. [default: all]"),
    dtype: str = typer.Option("float64", "--dtype", help="float64 or float32."),
    bucket_width: int = typer.Option(4, "--bucket-width", help="Bucket width for --csv rows."),
    csv_path: Optional[Path] = typer.Option(
        None, "--csv", help="Write one CSV row per (model, length bucket). [default: none]",
    ),
):
    """Median batch-1 decoding latency per model and speedup over the baseline."""
    if dtype not in ("float64", "float32"):
        raise ConfigError(f"--dtype must be float64 or float32, got {dtype!r}")
    run = _run_config(config, beam_size=beam, alpha=alpha, max_len=max_len, search=search)
    checkpoints = _named(model, "sbsg")
    baseline_name = None
    if baseline is not None:
        named = _named([baseline], "baseline")
        baseline_name = next(iter(named))
        if baseline_name in checkpoints:
            raise ConfigError(f"baseline name {baseline_name!r} is also a --model name")
        checkpoints.update(named)
    report, lengths = bench.bench_models(
        run,
        checkpoints,
        _path(test_path, run.paths.test_path, "test set (--test)"),
        baseline_name,
        repetitions,
        batch,
        min_src_len,
        limit,
        dtype,
    )
    render_bench(report, Console(stderr=False))
    write_lines("-", bench_key_values(report))
    if csv_path is not None:
        write_lines(csv_path, bench_csv(report, lengths, bucket_width).splitlines())


@app.command("distill")
def distill_cmd(
    teacher: Path = typer.Option(..., "--teacher", help="Trained l2r or r2l checkpoint."),
    train_path: Optional[Path] = typer.Option(
        None, "--train", help="Training TSV to relabel. [default: train_path from --config]",
    ),
    out: Path = typer.Option(..., "--out", help="Distilled TSV."),
    config: Optional[Path] = CONFIG,
    beam: Optional[int] = BEAM,
    alpha: Optional[float] = ALPHA,
    max_len: Optional[int] = MAX_LEN,
):
    """Replace training targets with the teacher's beam-search outputs."""
    run = _run_config(config, beam_size=beam, alpha=alpha, max_len=max_len)
    pairs = distill.distill_file(run, teacher, _path(train_path, run.paths.train_path, "training set (--train)"), out)
    write_lines("-", [f"distilled={out}", f"examples={len(pairs)}"])


@app.command("sweep-lambda")
def sweep_cmd(
    lambdas: str = typer.Option("0,0.25,0.5,0.75,1", "--lambdas", help="Comma-separated interpolation weights."),
    out_dir: Path = typer.Option(Path("sweep"), "--out-dir", help="Checkpoints and logs per weight."),
    train_path: Optional[Path] = typer.Option(
        None, "--train", help="Training TSV. [default: train_path from --config]",
    ),
    dev_path: Optional[Path] = typer.Option(None, "--dev", help="Development TSV. [default: dev_path from --config]"),
    vocab_path: Optional[Path] = typer.Option(None, "--vocab", help="Vocabulary file. [default: built from --train]"),
    config: Optional[Path] = CONFIG,
    seed: Optional[int] = SEED,
    max_steps: Optional[int] = typer.Option(
        None, "--max-steps", help="Optimizer steps per run." + _default(TrainHyper, "max_steps"),
    ),
):
    """Train one bidirectional model per lambda and report the dev metric of each."""
    try:
        values = [float(v) for v in lambdas.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--lambdas must be comma-separated numbers, got {lambdas!r}")
    run = _run_config(config, seed=seed, max_steps=max_steps, mode="bidirectional")
    lines = sweep.sweep(
        run,
        _path(train_path, run.paths.train_path, "training set (--train)"),
        _path(dev_path, run.paths.dev_path, "development set (--dev)"),
        values,
        out_dir,
        vocab_path or run.paths.vocab_path,
    )
    write_lines("-", lines)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        result = app(args=argv, prog_name="sbsg", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        if e.ctx is not None:
            click.echo(e.ctx.get_help(), err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except SbsgError as e:
        logger.error("%s: %s", type(e).__name__, e, exc_info=DEBUG_MODE)
        return 2
    except Exception as e:
        logger.error("Unhandled exception caught:", exc_info=e)
        return 2
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
