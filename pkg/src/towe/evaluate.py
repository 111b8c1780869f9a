"""Span decoding and exact-match micro precision/recall/F1.

A predicted span counts as a true positive only when an identical inclusive
(start, end) pair exists in the same example's gold set.  Counts are pooled
over all examples before computing the metrics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import Span, WordLabel
from .errors import ToweError


def decode_spans(tags: Sequence[WordLabel]) -> list[Span]:
    """Turn an IOB tag sequence into inclusive word spans.

    Lenient decode: B always starts a new span, I extends the open span or
    starts one when none is open, O closes.  Model output is never discarded.
    """
    spans: list[Span] = []
    open_start: int | None = None
    for j, tag in enumerate(tags):
        if tag == WordLabel.B:
            if open_start is not None:
                spans.append((open_start, j - 1))
            open_start = j
        elif tag == WordLabel.I:
            if open_start is None:
                open_start = j
        else:
            if open_start is not None:
                spans.append((open_start, j - 1))
                open_start = None
    if open_start is not None:
        spans.append((open_start, len(tags) - 1))
    return spans


@dataclass(frozen=True)
class EvalReport:
    """Pooled span counts and the derived metrics, as fractions in [0, 1]."""

    tp: int
    n_pred: int
    n_gold: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, n_pred: int, n_gold: int) -> "EvalReport":
        precision = tp / n_pred if n_pred else 0.0
        recall = tp / n_gold if n_gold else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp=tp, n_pred=n_pred, n_gold=n_gold,
                   precision=precision, recall=recall, f1=f1)

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "predicted": self.n_pred,
            "gold": self.n_gold,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def micro_f1(
    predictions: Sequence[Sequence[Span]],
    gold: Sequence[Sequence[Span]],
    ids: Sequence[str] | None = None,
    gold_ids: Sequence[str] | None = None,
) -> EvalReport:
    """Exact-span micro metrics over aligned per-example span lists.

    When id sequences are given for both sides they must match pairwise;
    otherwise alignment is positional.
    """
    if len(predictions) != len(gold):
        raise ToweError(
            f"prediction/gold example counts differ: {len(predictions)} vs {len(gold)}"
        )
    if ids is not None and gold_ids is not None:
        for i, (pid, gid) in enumerate(zip(ids, gold_ids)):
            if pid != gid:
                raise ToweError(f"example {i}: id mismatch ({pid!r} vs {gid!r})")
    tp = n_pred = n_gold = 0
    for pred_spans, gold_spans in zip(predictions, gold):
        pred_set = {tuple(s) for s in pred_spans}
        gold_set = {tuple(s) for s in gold_spans}
        tp += len(pred_set & gold_set)
        n_pred += len(pred_set)
        n_gold += len(gold_set)
    return EvalReport.from_counts(tp, n_pred, n_gold)


def average_runs(f1s: Sequence[float]) -> float:
    """Arithmetic mean over per-run F1 scores."""
    if not f1s:
        raise ToweError("cannot average zero runs")
    return sum(f1s) / len(f1s)


def as_percent(fraction: float) -> float:
    """Fraction -> percentage rounded to 2 decimals, the format used in tables."""
    return round(fraction * 100, 2)


@dataclass(frozen=True)
class AblationReport:
    """Mean F1 per model variant plus all pairwise deltas."""

    runs: Mapping[str, tuple[float, ...]]
    means: Mapping[str, float]
    deltas: Mapping[tuple[str, str], float]

    def format_table(self) -> str:
        width = max(len(name) for name in self.means)
        lines = [f"{'variant':<{width}}  runs  mean F1 (%)"]
        for name, mean in self.means.items():
            lines.append(f"{name:<{width}}  {len(self.runs[name]):>4}  {as_percent(mean):>10.2f}")
        for (a, b), delta in self.deltas.items():
            lines.append(f"{a} - {b}: {delta * 100:+.2f}")
        return "\n".join(lines)


def ablation_report(runs_by_variant: Mapping[str, Sequence[float]]) -> AblationReport:
    """Compare model variants evaluated on the same test split.

    ``runs_by_variant`` maps a variant name (e.g. "S", "SA", "S+mask") to its
    per-run F1 fractions.
    """
    names = list(runs_by_variant)
    means = {name: average_runs(list(runs_by_variant[name])) for name in names}
    deltas = {}
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            deltas[(a, b)] = means[a] - means[b]
    return AblationReport(
        runs={name: tuple(runs_by_variant[name]) for name in names},
        means=means,
        deltas=deltas,
    )
