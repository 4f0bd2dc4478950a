import math
from collections import Counter

import pytest

from decoding import DecodeResult, step_limit
from errors import BenchmarkError, ConfigError, InputError
from evalbench import (
    _check_steps,
    bench_csv,
    bench_decode,
    bench_key_values,
    bleu,
    eval_key_values,
    evaluate_outputs,
    exact_match,
    length_report,
)
from nn.model import init_params
from schemas import DecodeConfig
from tests.conftest import tiny_config


def _reference_bleu(hyps, refs, max_n=4):
    """Textbook corpus BLEU: clipped n-gram precisions, geometric mean, brevity penalty."""
    matches, totals = [0] * max_n, [0] * max_n
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            h_grams = Counter(tuple(h[i : i + n]) for i in range(len(h) - n + 1))
            r_grams = Counter(tuple(r[i : i + n]) for i in range(len(r) - n + 1))
            matches[n - 1] += sum(min(c, r_grams[g]) for g, c in h_grams.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    if min(matches) == 0:
        return 0.0
    precision = math.exp(sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n)
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / hyp_len)
    return 100 * brevity * precision


TOY_REFS = [
    "the cat sat on the mat today".split(),
    "a quick brown fox jumps over the lazy dog".split(),
    "we decode from both ends at once".split(),
]
TOY_HYPS = [
    "the cat sat on a mat today".split(),
    "a quick brown fox jumped over the lazy dog".split(),
    "we decode from both ends".split(),
]


def test_bleu_of_identical_corpora_is_100():
    assert bleu(TOY_REFS, TOY_REFS) == 100.0


def test_bleu_without_four_gram_overlap_is_zero():
    assert bleu([["a", "b", "c", "d"]], [["d", "c", "b", "a"]]) == 0.0


def test_bleu_matches_textbook_implementation():
    expected = _reference_bleu(TOY_HYPS, TOY_REFS)
    assert 0.0 < expected < 100.0
    assert bleu(TOY_HYPS, TOY_REFS) == pytest.approx(expected, abs=0.01)


def test_bleu_accepts_integer_tokens():
    assert bleu([[6, 7, 8, 9]], [[6, 7, 8, 9]]) == 100.0


def test_bleu_rejects_empty_or_misaligned_input():
    with pytest.raises(InputError):
        bleu([], [])
    with pytest.raises(InputError):
        bleu([["a"]], [["a"], ["b"]])


def test_exact_match():
    refs = [["1"], ["2", "3"], ["4"], ["5"]]
    assert exact_match(refs, refs) == 1.0
    assert exact_match([["9"]] * 4, refs) == 0.0
    assert exact_match([["1"], ["3", "2"], [], ["6"]], refs) == 0.25
    with pytest.raises(InputError):
        exact_match([["1"]], refs)


def test_length_report_single_sentence():
    rows = length_report([["a", "b", "c"]], [["x"]], [["x"]], bucket_width=10)
    assert len(rows) == 1
    assert (rows[0].lower, rows[0].upper, rows[0].count) == (1, 10, 1)


def test_length_report_bucket_means():
    sources = [["s"] * n for n in (1, 2, 3, 4, 7)]
    hyps = [["h"] * n for n in (1, 3, 3, 5, 8)]
    refs = [["h"] * n for n in (1, 2, 3, 4, 6)]
    rows = length_report(sources, hyps, refs, bucket_width=2)
    assert [(r.lower, r.upper, r.count) for r in rows] == [(1, 2, 2), (3, 4, 2), (7, 8, 1)]
    assert rows[0].mean_hyp_len == pytest.approx(2.0)
    assert rows[1].mean_ref_len == pytest.approx(3.5)
    assert rows[2].mean_hyp_len == pytest.approx(8.0)


def test_length_report_rejects_bad_width():
    with pytest.raises(ConfigError):
        length_report([["a"]], [["a"]], [["a"]], bucket_width=0)


def test_evaluate_outputs_and_key_values():
    reports = evaluate_outputs(TOY_REFS, {"perfect": TOY_REFS, "toy": TOY_HYPS}, TOY_REFS, bucket_width=5)
    assert reports["perfect"].bleu == 100.0 and reports["perfect"].exact_match == 1.0
    assert reports["toy"].exact_match == 0.0
    lines = eval_key_values(reports)
    assert "perfect.bleu=100.0000" in lines
    assert "toy.sentences=3" in lines


@pytest.fixture
def models():
    sbsg = tiny_config()
    l2r = tiny_config(mode="l2r")
    return {"sbsg": (init_params(sbsg, 1), sbsg), "l2r": (init_params(l2r, 1), l2r)}


TEST_SET = [[6, 7], [8, 9, 10], [6], [7, 7, 8, 9], [10, 6, 8], [9, 9, 9, 9, 9], [8]]


def test_bench_reports_every_model_and_a_speedup(models):
    report = bench_decode(models, TEST_SET, DecodeConfig(search="greedy", max_len=8), repetitions=2, baseline="l2r")
    assert [s.name for s in report.speeds] == ["sbsg", "l2r"]
    assert report.speedup is not None and report.speedup > 0
    sbsg = report.speed("sbsg")
    assert sbsg.sentences == len(TEST_SET) and len(sbsg.steps) == len(TEST_SET)
    assert max(sbsg.steps) <= step_limit(8, True)
    assert max(report.speed("l2r").steps) <= step_limit(8, False)
    lines = bench_key_values(report)
    assert "baseline=l2r" in lines and any(line.startswith("speedup=") for line in lines)


def test_bench_against_itself_is_about_one(models):
    same = {"a": models["sbsg"], "b": models["sbsg"]}
    report = bench_decode(same, TEST_SET, DecodeConfig(search="greedy", max_len=8), repetitions=3, baseline="a")
    assert 0.1 < report.speedup < 10.0
    assert report.speed("a").steps == report.speed("b").steps


def test_bench_scores_outputs_when_references_given(models):
    report = bench_decode(
        {"sbsg": models["sbsg"]}, TEST_SET, DecodeConfig(max_len=8), repetitions=1, references=TEST_SET, batch_size=3
    )
    row = report.speed("sbsg")
    assert row.bleu is not None and 0.0 <= row.exact_match <= 1.0
    assert report.speedup is None


def test_bench_rejects_bad_arguments(models):
    with pytest.raises(ConfigError):
        bench_decode(models, TEST_SET, DecodeConfig(), baseline="missing")
    with pytest.raises(ConfigError):
        bench_decode(models, TEST_SET, DecodeConfig(), repetitions=0)
    with pytest.raises(InputError):
        bench_decode(models, [], DecodeConfig())


def test_step_check_flags_miscounted_results():
    config = tiny_config()
    honest = DecodeResult(tokens=[6, 7], fwd=[6, 1], bwd=[7, 8, 1], steps=3)
    assert _check_steps("sbsg", config, [honest]) == [3]
    with pytest.raises(BenchmarkError):
        _check_steps("sbsg", config, [DecodeResult(tokens=[6, 7], fwd=[6, 1], bwd=[7, 8, 1], steps=5)])


def test_bench_csv_has_one_row_per_model_and_bucket(models):
    report = bench_decode(models, TEST_SET, DecodeConfig(max_len=8), repetitions=1, baseline="l2r")
    text = bench_csv(report, [len(s) for s in TEST_SET], bucket_width=2)
    lines = text.splitlines()
    assert lines[0].startswith("model,lower,upper,sentences")
    assert len(lines) == 1 + 2 * 3
    assert lines[1].split(",")[:4] == ["sbsg", "1", "2", "3"]
