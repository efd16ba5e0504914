"""Prior-augmented soft cross-entropy and the multi-task objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .prior import one_hot


@dataclass(frozen=True)
class LossWeights:
    hyp: float = 1.0
    vqa: float = 1.0
    qt: float = 1.0

    def __post_init__(self):
        vals = (self.hyp, self.vqa, self.qt)
        if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
            raise ValueError(f"loss weights must be >= 0 with one > 0, got {vals}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.hyp, self.vqa, self.qt)


@dataclass
class LossBreakdown:
    l_hyp: list[Tensor]
    l_vqa: Tensor
    l_qt: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        out = {f"l_H{j}": t.item() for j, t in enumerate(self.l_hyp)}
        out.update(l_vqa=self.l_vqa.item(), l_qt=self.l_qt.item(), total=self.total.item())
        return out

    def log_line(self, step: int) -> str:
        parts = [f"step={step}"] + [f"{k}={v!r}" for k, v in self.values().items()]
        return " ".join(parts)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def weight_targets(m_awn: Tensor, y, g: Tensor) -> tuple[Tensor, Tensor]:
    """Scale targets and predictions by the awareness vector."""
    y = _t(y)
    if not (m_awn.shape == y.shape == g.shape):
        raise dc.DimensionError(f"weight_targets: {m_awn.shape}, {y.shape}, {g.shape}")
    return dc.mul(m_awn, y), dc.mul(m_awn, g)


def soft_bce(targets, logits: Tensor) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against soft targets."""
    targets = _t(targets)
    if targets.shape != logits.shape:
        raise dc.DimensionError(f"soft_bce: {targets.shape} vs {logits.shape}")
    s = dc.sigmoid(logits)
    pos = dc.mul(targets, dc.log(s))
    neg = dc.mul(dc.shift(dc.scale(targets, -1.0), 1.0), dc.log(dc.shift(dc.scale(s, -1.0), 1.0)))
    return dc.scale(dc.reduce_mean(dc.add(pos, neg)), -1.0)


def vqa_loss(y_hat, g_hat: Tensor) -> Tensor:
    """Soft cross-entropy on the awareness-weighted pair, averaged over batch and answers."""
    return soft_bce(y_hat, g_hat)


def hypothesis_loss(g_j: Tensor, y) -> Tensor:
    return soft_bce(y, g_j)


def qtype_loss(h: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of the labelled type."""
    hb = h if h.ndim == 2 else dc.reshape(h, (1, h.shape[0]))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    B, P = hb.shape
    if len(labels) != B:
        raise dc.DimensionError(f"qtype_loss: {len(labels)} labels for {B} rows")
    if labels.min() < 0 or labels.max() >= P:
        raise ValueError(f"qtype label out of range [0, {P})")
    picked = dc.mul(Tensor(one_hot(labels, P)), dc.log(hb))
    return dc.scale(dc.reduce_sum(picked), -1.0 / B)


def total_loss(l_hyp: Sequence[Tensor], l_vqa: Tensor, l_qt: Tensor,
               weights: LossWeights = LossWeights()) -> LossBreakdown:
    a1, a2, a3 = weights.as_tuple()
    parts = []
    if l_hyp:
        s = l_hyp[0]
        for t in l_hyp[1:]:
            s = dc.add(s, t)
        parts.append(dc.scale(s, a1))
    parts.append(dc.scale(l_vqa, a2))
    parts.append(dc.scale(l_qt, a3))
    total = parts[0]
    for t in parts[1:]:
        total = dc.add(total, t)
    return LossBreakdown(list(l_hyp), l_vqa, l_qt, total)
