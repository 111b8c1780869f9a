import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from towe.corpus import WordLabel
from towe.errors import ToweError
from towe.evaluate import (
    EvalReport,
    ablation_report,
    as_percent,
    average_runs,
    decode_spans,
    micro_f1,
)

O, B, I = WordLabel.O, WordLabel.B, WordLabel.I


def reference_decode(tags):
    """Rule-by-rule reference decoder: walk tags, tracking one open span."""
    spans = []
    current = None
    for j, tag in enumerate(tags):
        if tag == O:
            if current:
                spans.append(tuple(current))
            current = None
        elif tag == B:
            if current:
                spans.append(tuple(current))
            current = [j, j]
        else:  # I: extend, or open leniently
            if current:
                current[1] = j
            else:
                current = [j, j]
    if current:
        spans.append(tuple(current))
    return spans


def reference_counts(pred, gold):
    """Brute-force span matching: for each predicted span scan the gold list."""
    tp = 0
    for spans_p, spans_g in zip(pred, gold):
        remaining = list(dict.fromkeys(spans_g))
        for span in dict.fromkeys(spans_p):
            if span in remaining:
                tp += 1
                remaining.remove(span)
    n_pred = sum(len(set(s)) for s in pred)
    n_gold = sum(len(set(s)) for s in gold)
    return tp, n_pred, n_gold


def test_decode_basic():
    assert decode_spans([O, B, I, O]) == [(1, 2)]


def test_decode_b_starts_new_span():
    assert decode_spans([B, B, O]) == [(0, 0), (1, 1)]


def test_decode_lenient_orphan_i():
    tags = [O, I, I]
    assert decode_spans(tags) == [(1, 2)]
    assert decode_spans(tags) == reference_decode(tags)


def test_decode_trailing_open_span():
    assert decode_spans([O, B, I]) == [(1, 2)]
    assert decode_spans([I]) == [(0, 0)]
    assert decode_spans([]) == []


@given(st.lists(st.sampled_from([O, B, I]), max_size=15))
def test_decode_matches_reference(tags):
    assert decode_spans(tags) == reference_decode(tags)


def test_micro_f1_perfect():
    spans = [[(0, 1)], [(2, 2), (4, 5)]]
    report = micro_f1(spans, spans)
    assert report.precision == report.recall == report.f1 == 1.0


def test_micro_f1_boundary_mismatch_scores_zero():
    report = micro_f1([[(1, 1)]], [[(1, 2)]])
    assert report.tp == 0
    assert report.f1 == 0.0


def test_micro_f1_hand_counted():
    pred = [[(2, 2)], [(0, 1), (3, 3)]]
    gold = [[(2, 2)], [(0, 1)]]
    report = micro_f1(pred, gold)
    assert (report.tp, report.n_pred, report.n_gold) == (2, 3, 2)
    assert report.precision == pytest.approx(2 / 3)
    assert report.recall == 1.0
    assert report.f1 == pytest.approx(0.8)


def test_micro_f1_empty_everything():
    report = micro_f1([[]], [[]])
    assert report.f1 == 0.0 and report.precision == 0.0 and report.recall == 0.0


def test_micro_f1_length_mismatch():
    with pytest.raises(ToweError, match="counts differ"):
        micro_f1([[]], [[], []])


def test_micro_f1_id_mismatch():
    with pytest.raises(ToweError, match="id mismatch"):
        micro_f1([[]], [[]], ids=["a"], gold_ids=["b"])


def random_span_lists(rng, n_examples):
    out = []
    for _ in range(n_examples):
        spans = []
        for _ in range(rng.randrange(0, 4)):
            s = rng.randrange(0, 10)
            spans.append((s, s + rng.randrange(0, 3)))
        out.append(spans)
    return out


def test_micro_f1_matches_brute_force_counter():
    rng = random.Random(99)
    for _ in range(500):
        n = rng.randrange(1, 6)
        pred = random_span_lists(rng, n)
        gold = random_span_lists(rng, n)
        report = micro_f1(pred, gold)
        assert (report.tp, report.n_pred, report.n_gold) == reference_counts(pred, gold)


@given(st.integers(0, 2**31), st.integers(1, 8), st.randoms())
def test_micro_f1_permutation_invariant(seed, n, rnd):
    rng = random.Random(seed)
    pred = random_span_lists(rng, n)
    gold = random_span_lists(rng, n)
    order = list(range(n))
    rnd.shuffle(order)
    direct = micro_f1(pred, gold)
    shuffled = micro_f1([pred[i] for i in order], [gold[i] for i in order])
    assert direct == shuffled


@given(st.integers(0, 2**31), st.integers(1, 8))
def test_f1_between_precision_and_recall(seed, n):
    rng = random.Random(seed)
    report = micro_f1(random_span_lists(rng, n), random_span_lists(rng, n))
    assert 0.0 <= report.precision <= 1.0
    assert 0.0 <= report.recall <= 1.0
    if report.precision > 0 and report.recall > 0:
        assert min(report.precision, report.recall) <= report.f1
        assert report.f1 <= max(report.precision, report.recall)


def test_average_runs():
    assert average_runs([1.0, 1.0, 1.0]) == 1.0
    assert average_runs([0.8, 0.9]) == pytest.approx(0.85)
    with pytest.raises(ToweError):
        average_runs([])


def test_average_runs_published_row():
    # Mean of four per-dataset percentages reported by the best model.
    mean = average_runs([82.59, 88.60, 82.37, 91.25])
    assert round(mean, 2) == 86.20


def test_as_percent_formatting():
    assert as_percent(0.862025) == 86.2
    assert f"{as_percent(0.862025):.2f}" == "86.20"
    assert as_percent(1.0) == 100.0


def test_ablation_report_structure():
    report = ablation_report({
        "SA": [0.9, 1.0],
        "S": [0.7, 0.8],
        "S+mask": [0.5, 0.6],
    })
    assert report.means["SA"] == pytest.approx(0.95)
    assert report.deltas[("SA", "S")] == pytest.approx(0.2)
    assert report.deltas[("S", "S+mask")] == pytest.approx(0.2)
    table = report.format_table()
    assert "SA" in table and "S+mask" in table
    assert "95.00" in table


def test_eval_report_invariants():
    report = EvalReport.from_counts(tp=3, n_pred=5, n_gold=4)
    assert report.tp <= min(report.n_pred, report.n_gold)
    expected = 2 * report.precision * report.recall / (report.precision + report.recall)
    assert report.f1 == pytest.approx(expected)
