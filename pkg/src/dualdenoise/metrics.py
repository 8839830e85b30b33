"""Span-extraction metrics for the three evaluation tasks.

Joint extraction (JMASA) matches full (begin, end, polarity) tuples,
term extraction (MATE) matches spans only; both are micro-averaged over
the pooled tuple counts. Sentiment classification (MASC) scores polarity
over the gold spans: plain accuracy plus macro-F1 over the three classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .data import AspectAnnotation, Dataset, Polarity
from .errors import ContractError

TASKS = ("JMASA", "MATE", "MASC")


@dataclass(frozen=True)
class MetricsReport:
    task: str
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: float = 0.0
    accuracy: Optional[float] = None
    gold_count: int = 0
    predicted_count: int = 0
    matched_count: int = 0

    def as_dict(self) -> dict:
        out = {"task": self.task, "f1": self.f1,
               "counts": {"gold": self.gold_count,
                          "predicted": self.predicted_count,
                          "matched": self.matched_count}}
        if self.precision is not None:
            out["precision"] = self.precision
            out["recall"] = self.recall
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        return out


def _prf(matched: int, predicted: int, gold: int) -> tuple[float, float, float]:
    p = matched / predicted if predicted else 0.0
    r = matched / gold if gold else 0.0
    f1 = 2.0 * p * r / (p + r) if matched else 0.0
    return p, r, f1


def evaluate(gold: Dataset, predicted: Mapping[str, Sequence[AspectAnnotation]],
             task: str) -> MetricsReport:
    """Score predictions aligned to ``gold`` by sample id."""
    if task not in TASKS:
        raise ContractError(f"unknown task {task!r}; expected one of {TASKS}")
    gold_ids = {s.id for s in gold.samples}
    if set(predicted.keys()) != gold_ids:
        missing = sorted(gold_ids - set(predicted.keys()))[:3]
        extra = sorted(set(predicted.keys()) - gold_ids)[:3]
        raise ContractError(
            f"prediction ids misaligned with gold (missing {missing}, extra {extra})")
    if task == "MASC":
        return _evaluate_masc(gold, predicted)
    key = (lambda a: (a.begin, a.end, a.polarity)) if task == "JMASA" \
        else (lambda a: (a.begin, a.end))
    matched = predicted_n = gold_n = 0
    for s in gold.samples:
        gold_set = {key(a) for a in s.aspects}
        pred_set = {key(a) for a in predicted[s.id]}  # duplicate tuples collapse
        matched += len(gold_set & pred_set)
        predicted_n += len(pred_set)
        gold_n += len(gold_set)
    p, r, f1 = _prf(matched, predicted_n, gold_n)
    return MetricsReport(task=task, precision=p, recall=r, f1=f1,
                         gold_count=gold_n, predicted_count=predicted_n,
                         matched_count=matched)


def _evaluate_masc(gold: Dataset,
                   predicted: Mapping[str, Sequence[AspectAnnotation]]) -> MetricsReport:
    """Polarity accuracy and macro-F1 over gold spans.

    A gold span with no predicted polarity counts as wrong (a miss for its
    class, a false positive for none).
    """
    tp = {c: 0 for c in Polarity}
    fp = {c: 0 for c in Polarity}
    fn = {c: 0 for c in Polarity}
    correct = total = 0
    pred_n = 0
    for s in gold.samples:
        by_span = {a.span(): a.polarity for a in predicted[s.id]}
        pred_n += len(by_span)
        for a in s.aspects:
            total += 1
            got = by_span.get(a.span())
            if got == a.polarity:
                correct += 1
                tp[a.polarity] += 1
            else:
                fn[a.polarity] += 1
                if got is not None:
                    fp[got] += 1
    f1s = []
    for c in Polarity:
        denom = 2 * tp[c] + fp[c] + fn[c]
        f1s.append(2 * tp[c] / denom if denom else 0.0)
    macro_f1 = sum(f1s) / len(f1s)
    return MetricsReport(task="MASC", f1=macro_f1,
                         accuracy=(correct / total if total else 0.0),
                         gold_count=total, predicted_count=pred_n,
                         matched_count=correct)
