"""VQA accuracy, per-type accuracy and mean-per-type (MPT) summaries."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .diffcore.textio import format_float


@dataclass
class MetricsReport:
    overall_accuracy: float
    per_type_accuracy: dict[str, float]
    arithmetic_mpt: float
    harmonic_mpt: float
    qtype_classification_accuracy: float
    counts: dict[str, int]
    qtype_per_type_accuracy: dict[str, float] | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["overall_accuracy", format_float(self.overall_accuracy)])
        w.writerow(["arithmetic_mpt", format_float(self.arithmetic_mpt)])
        w.writerow(["harmonic_mpt", format_float(self.harmonic_mpt)])
        w.writerow(["qtype_classification_accuracy", format_float(self.qtype_classification_accuracy)])
        for name, acc in self.per_type_accuracy.items():
            w.writerow([f"accuracy[{name}]", format_float(acc)])
            w.writerow([f"count[{name}]", self.counts[name]])
        return buf.getvalue()

    def by_type_table(self) -> str:
        width = max([len("Arithmetic MPT")] + [len(n) for n in self.per_type_accuracy])
        lines = [f"{'question type':<{width}}  {'count':>6}  {'acc %':>6}  {'qtype %':>7}"]
        qt = self.qtype_per_type_accuracy or {}
        for name, acc in self.per_type_accuracy.items():
            lines.append(
                f"{name:<{width}}  {self.counts[name]:>6}  {100 * acc:6.2f}  {100 * qt.get(name, 0.0):7.2f}"
            )
        lines.append(f"{'Arithmetic MPT':<{width}}  {'':>6}  {100 * self.arithmetic_mpt:6.2f}")
        lines.append(f"{'Harmonic MPT':<{width}}  {'':>6}  {100 * self.harmonic_mpt:6.2f}")
        lines.append(f"{'Overall':<{width}}  {sum(self.counts.values()):>6}  {100 * self.overall_accuracy:6.2f}")
        return "\n".join(lines) + "\n"


def vqa_accuracy(prediction: int, answer_scores: Sequence[tuple[int, float]]) -> float:
    """Credit for one question: the stored score of the predicted answer, capped at 1."""
    for a, sc in answer_scores:
        if a == prediction:
            return min(float(sc), 1.0)
    return 0.0


def mpt(per_type_accuracy: Mapping[str, float] | Sequence[float]) -> tuple[float, float]:
    """Arithmetic and harmonic means of per-type accuracies.

    The harmonic mean is taken as 0 when any type scores 0.
    """
    accs = np.asarray(list(per_type_accuracy.values()) if isinstance(per_type_accuracy, Mapping)
                      else per_type_accuracy, dtype=np.float64)
    if accs.size == 0:
        raise ValueError("mpt needs at least one question type")
    arith = float(accs.mean())
    if (accs <= 0).any():
        return arith, 0.0
    with np.errstate(over="ignore"):
        harm = float(accs.size / (1.0 / accs).sum())
    # guard AM >= HM against last-ulp rounding
    return arith, min(harm, arith)


def qtype_accuracy(predictions: Sequence[int], labels: Sequence[int],
                   names: Sequence[str] | None = None) -> tuple[float, dict[str, float], dict[str, int]]:
    """Fraction of exact type matches, plus accuracy and count per true type."""
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    if pred.shape != lab.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions, {lab.size} labels")
    if names is None:
        names = [str(i) for i in range(int(lab.max()) + 1 if lab.size else 0)]
    per, counts = {}, {}
    for p, name in enumerate(names):
        sel = lab == p
        counts[name] = int(sel.sum())
        per[name] = float((pred[sel] == p).mean()) if sel.any() else 0.0
    overall = float((pred == lab).mean()) if lab.size else 0.0
    return overall, per, counts


def build_report(pred_answers: Sequence[int], pred_types: Sequence[int],
                 answer_scores: Sequence[Sequence[tuple[int, float]]], true_types: Sequence[int],
                 qtype_names: Sequence[str]) -> MetricsReport:
    credits = np.array([vqa_accuracy(int(p), s) for p, s in zip(pred_answers, answer_scores)])
    types = np.asarray(true_types, dtype=np.int64)
    per, counts = {}, {}
    for p, name in enumerate(qtype_names):
        sel = types == p
        counts[name] = int(sel.sum())
        per[name] = float(credits[sel].mean()) if sel.any() else 0.0
    # MPT over the types that occur in the evaluated data
    present = {n: a for n, a in per.items() if counts[n] > 0}
    arith, harm = mpt(present)
    qt_overall, qt_per, _ = qtype_accuracy(pred_types, types, qtype_names)
    return MetricsReport(float(credits.mean()), per, arith, harm, qt_overall, counts, qt_per)
