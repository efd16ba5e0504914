"""Multi-hypothesis interaction learning.

The J per-hypothesis predictions ``g`` (A x J, or B x A x J) are mixed
into one prediction with gate ``S = prior^T w_mil`` (A x J)::

    rho[a] = sum_j S[a, j] * g[a, j]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .prior import PriorMatrix

MODES = ("learned", "averaging", "single")


@dataclass
class InteractionWeights:
    w_mil: Tensor  # P x J
    softmax_over_j: bool = False

    @classmethod
    def init(cls, n_types: int, n_hyp: int, softmax_over_j: bool = False) -> "InteractionWeights":
        # softmax of zeros is the same 1/J start as the plain variant
        fill = 0.0 if softmax_over_j else 1.0 / n_hyp
        return cls(Tensor(np.full((n_types, n_hyp), fill), requires_grad=True), softmax_over_j)

    @property
    def shape(self) -> tuple[int, int]:
        return self.w_mil.shape

    def effective(self) -> Tensor:
        return dc.softmax(self.w_mil) if self.softmax_over_j else self.w_mil


def gate(w: InteractionWeights, prior: PriorMatrix) -> Tensor:
    """A x J gate ``prior^T w_mil``."""
    P, J = w.shape
    if P != prior.P:
        raise dc.DimensionError(f"w_mil has {P} type rows, prior has {prior.P}")
    return dc.matmul(Tensor(prior.m.T), w.effective())


def mix(g: Tensor, w: InteractionWeights, prior: PriorMatrix) -> Tensor:
    S = gate(w, prior)
    if g.shape[-2:] != S.shape:
        raise dc.DimensionError(f"mix: g {g.shape} vs gate {S.shape}")
    if g.ndim == 3:
        S = dc.tile(S, g.shape[0])
    return dc.reduce_sum(dc.mul(S, g), axis=-1)


def averaging_baseline(g: Tensor) -> Tensor:
    """Plain mean over hypotheses."""
    if g.shape[-1] < 1:
        raise dc.DimensionError("averaging needs at least one hypothesis")
    return dc.reduce_mean(g, axis=-1)


def correlation_readout(w: InteractionWeights, qtype_names: Sequence[str],
                        hypothesis_names: Sequence[str]) -> dict[str, dict[str, float]]:
    """w_mil as stored, labelled by question type and hypothesis."""
    vals = w.w_mil.values
    if vals.shape != (len(qtype_names), len(hypothesis_names)):
        raise dc.DimensionError("readout labels do not match w_mil shape")
    return {
        q: {h: float(vals[p, j]) for j, h in enumerate(hypothesis_names)}
        for p, q in enumerate(qtype_names)
    }


def readout_csv(table: dict[str, dict[str, float]]) -> str:
    from .diffcore.textio import format_float

    rows = list(table)
    cols = list(table[rows[0]]) if rows else []
    lines = [",".join(["qtype", *cols])]
    lines += [",".join([q, *(format_float(table[q][h]) for h in cols)]) for q in rows]
    return "\n".join(lines) + "\n"
