"""Question-type / answer relational prior and the awareness vector."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .data import DatasetBundle
from .diffcore import Tensor
from .diffcore.textio import format_float

NORMALIZED_TOL = 1e-6


class PriorFormatError(ValueError):
    pass


class ContractError(ValueError):
    pass


@dataclass(eq=False)
class PriorMatrix:
    """Column-stochastic P x A matrix of type/answer co-occurrence."""

    m: np.ndarray
    qtype_names: list[str]
    answer_names: list[str]
    fallback_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.m = np.array(self.m, dtype=np.float64)
        self.m.setflags(write=False)
        if self.fallback_mask is None:
            self.fallback_mask = np.zeros(self.m.shape[1], dtype=bool)
        self.fallback_mask = np.asarray(self.fallback_mask, dtype=bool)

    @property
    def P(self) -> int:
        return self.m.shape[0]

    @property
    def A(self) -> int:
        return self.m.shape[1]

    def tensor(self) -> Tensor:
        return Tensor(self.m)

    def equals(self, other: "PriorMatrix") -> bool:
        return (
            np.array_equal(self.m, other.m)
            and self.qtype_names == other.qtype_names
            and self.answer_names == other.answer_names
            and np.array_equal(self.fallback_mask, other.fallback_mask)
        )

    @classmethod
    def uniform(cls, qtype_names: Sequence[str], answer_names: Sequence[str]) -> "PriorMatrix":
        P, A = len(qtype_names), len(answer_names)
        return cls(np.full((P, A), 1.0 / P), list(qtype_names), list(answer_names))


def prior_from_labels(qtypes: Sequence[int], answers: Sequence[int], P: int, A: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.zeros((P, A), dtype=np.int64)
    np.add.at(counts, (np.asarray(qtypes, dtype=np.int64), np.asarray(answers, dtype=np.int64)), 1)
    col = counts.sum(axis=0)
    empty = col == 0
    m = np.empty((P, A))
    m[:, ~empty] = counts[:, ~empty] / col[~empty]
    m[:, empty] = 1.0 / P
    return m, empty


def compute_prior(bundle: DatasetBundle) -> PriorMatrix:
    """Count (type, answer) co-occurrences and normalize every column.

    Each sample contributes once, at its highest-scoring answer. Columns of
    answers that never occur fall back to the uniform 1/P.
    """
    m, empty = prior_from_labels(bundle.qtype_labels(), bundle.answer_labels(), bundle.P, bundle.A)
    return PriorMatrix(m, list(bundle.qtype_names), list(bundle.answer_names), empty)


def awareness(h: Tensor, prior: PriorMatrix) -> Tensor:
    """``h^T m_prior``: per-answer weights from a type distribution.

    ``h`` is a length-P vector or a B x P batch; each row must be a
    probability distribution.
    """
    hv = h.values
    if hv.shape[-1] != prior.P or hv.ndim not in (1, 2):
        raise dc.DimensionError(f"awareness: h of shape {hv.shape} vs P={prior.P}")
    if (hv < -NORMALIZED_TOL).any() or np.abs(hv.sum(axis=-1) - 1.0).max() > NORMALIZED_TOL:
        raise ContractError("awareness: h must be a probability distribution")
    if h.ndim == 1:
        return dc.reshape(dc.matmul(dc.reshape(h, (1, prior.P)), prior.tensor()), (prior.A,))
    return dc.matmul(h, prior.tensor())


def one_hot(labels: Sequence[int], n: int) -> np.ndarray:
    out = np.zeros((len(labels), n))
    out[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return out


def prior_to_csv(prior: PriorMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["qtype\\answer", *prior.answer_names])
    for name, row in zip(prior.qtype_names, prior.m):
        w.writerow([name, *(format_float(v) for v in row)])
    fallback = [prior.answer_names[a] for a in np.flatnonzero(prior.fallback_mask)]
    buf.write("# fallback: " + ",".join(fallback) + "\n")
    return buf.getvalue()


def prior_from_csv(text: str) -> PriorMatrix:
    lines = text.splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    comments = [ln for ln in lines if ln.startswith("# fallback:")]
    rows = list(csv.reader(body))
    if not rows or not rows[0] or rows[0][0] != "qtype\\answer":
        raise PriorFormatError("prior CSV must start with a 'qtype\\answer' header")
    answers = rows[0][1:]
    names, vals = [], []
    for r in rows[1:]:
        if len(r) != len(answers) + 1:
            raise PriorFormatError(f"row {r[:1]} has {len(r) - 1} values, expected {len(answers)}")
        names.append(r[0])
        try:
            vals.append([float(v) for v in r[1:]])
        except ValueError as exc:
            raise PriorFormatError(str(exc)) from None
    if not names:
        raise PriorFormatError("prior CSV has no type rows")
    mask = np.zeros(len(answers), dtype=bool)
    if comments:
        listed = [a for a in comments[0][len("# fallback:"):].strip().split(",") if a]
        idx = {a: i for i, a in enumerate(answers)}
        for a in listed:
            if a not in idx:
                raise PriorFormatError(f"fallback column {a!r} not in header")
            mask[idx[a]] = True
    return PriorMatrix(np.array(vals), names, answers, mask)


def export_prior(prior: PriorMatrix, path) -> None:
    Path(path).write_text(prior_to_csv(prior))


def import_prior(path) -> PriorMatrix:
    return prior_from_csv(Path(path).read_text())
