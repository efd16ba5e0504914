"""Joint-modality attention mechanisms ("hypotheses").

Each mechanism fuses region features f_v with the question encoding f_q
into an attended feature f_att, which is then combined with the
question-type feature and mapped to answer logits.

Three structurally different families are provided:

* ``topdown``: one attention weight per region from a gated joint
  embedding; attended visual feature gated by a question projection.
* ``bilinear_lowrank``: low-rank bilinear pooling, scores are the summed
  Hadamard product of the two projections.
* ``stacked2``: two attention hops, the query refined by the first hop's
  context.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .encoders import xavier, zeros_param

KINDS = ("topdown", "bilinear_lowrank", "stacked2")
FUSION_OPS = ("EWM", "EWA", "none")


@dataclass
class HypothesisSpec:
    kind: str
    params: dict[str, Tensor]
    w_ans: Tensor
    b_ans: Tensor
    # optional subset of visual feature dimensions this mechanism can see
    visual_dims: tuple[int, ...] | None = None

    @classmethod
    def init(cls, kind: str, rng: np.random.Generator, d_v: int, d_h: int, d_f: int,
             n_answers: int, rank: int = 16, visual_dims=None) -> "HypothesisSpec":
        if kind not in KINDS:
            raise ValueError(f"unknown hypothesis kind {kind!r}; choose from {KINDS}")
        if visual_dims is not None:
            visual_dims = tuple(int(d) for d in visual_dims)
            d_v = len(visual_dims)
        if kind == "topdown":
            p = {
                "w_v": xavier(rng, d_v, d_f),
                "w_q": xavier(rng, d_h, d_f),
                "w_s": xavier(rng, d_f, 1),
                "w_o": xavier(rng, d_v, d_f),
                "w_p": xavier(rng, d_h, d_f),
            }
        elif kind == "bilinear_lowrank":
            p = {
                "u": xavier(rng, d_v, rank),
                "v": xavier(rng, d_h, rank),
                "w_o": xavier(rng, rank, d_f),
            }
        else:
            p = {"w_v": xavier(rng, d_v, d_f), "w_q": xavier(rng, d_h, d_f)}
            for hop in (1, 2):
                p[f"w_i{hop}"] = xavier(rng, d_f, d_f)
                p[f"w_a{hop}"] = xavier(rng, d_f, d_f)
                p[f"b_a{hop}"] = zeros_param(d_f)
                p[f"w_s{hop}"] = xavier(rng, d_f, 1)
        return cls(kind, p, xavier(rng, d_f, n_answers), zeros_param(n_answers), visual_dims)

    def named(self) -> dict[str, Tensor]:
        out = dict(self.params)
        out["w_ans"] = self.w_ans
        out["b_ans"] = self.b_ans
        return out


@dataclass
class HypothesisOutput:
    f_att: Tensor
    f_att_qt: Tensor
    logits: Tensor
    attention_weights: Tensor = field(repr=False)


def _attend(alpha: Tensor, regions: Tensor) -> Tensor:
    """Weighted sum over regions: alpha [B x K], regions [B x K x D] -> [B x D]."""
    B, K = alpha.shape
    ctx = dc.matmul(dc.reshape(alpha, (B, 1, K)), regions)
    return dc.reshape(ctx, (B, regions.shape[2]))


def _scores(x: Tensor, w: Tensor, B: int, K: int) -> Tensor:
    return dc.reshape(dc.matmul(x, w), (B, K))


def first_level_fuse(spec: HypothesisSpec, f_v: Tensor, f_q: Tensor) -> tuple[Tensor, Tensor]:
    """Attention over regions; returns (f_att, attention weights).

    Accepts K x D_v / D_h inputs or batched B x K x D_v / B x D_h.
    Attention weights are B x K (B x 2 x K for ``stacked2``).
    """
    single = f_q.ndim == 1
    if single:
        f_v = dc.reshape(f_v, (1,) + f_v.shape)
        f_q = dc.reshape(f_q, (1, f_q.shape[0]))
    if f_v.ndim != 3 or f_q.ndim != 2 or f_v.shape[0] != f_q.shape[0]:
        raise dc.DimensionError(f"first_level_fuse: f_v {f_v.shape} vs f_q {f_q.shape}")
    if spec.visual_dims is not None:
        f_v = dc.select(f_v, list(spec.visual_dims), axis=-1)
    B, K, D_v = f_v.shape
    p = spec.params
    flat_v = dc.reshape(f_v, (B * K, D_v))

    if spec.kind == "topdown":
        joint = dc.relu(dc.mul(flat_v @ p["w_v"], dc.repeat_rows(f_q @ p["w_q"], K)))
        alpha = dc.softmax(_scores(joint, p["w_s"], B, K))
        f_att = dc.mul(_attend(alpha, f_v) @ p["w_o"], f_q @ p["w_p"])
        att = alpha
    elif spec.kind == "bilinear_lowrank":
        R = p["u"].shape[1]
        joint = dc.mul(flat_v @ p["u"], dc.repeat_rows(f_q @ p["v"], K))
        alpha = dc.softmax(dc.reshape(dc.reduce_sum(joint, axis=-1), (B, K)))
        f_att = _attend(alpha, dc.reshape(joint, (B, K, R))) @ p["w_o"]
        att = alpha
    elif spec.kind == "stacked2":
        v = flat_v @ p["w_v"]
        D_f = v.shape[1]
        regions = dc.reshape(v, (B, K, D_f))
        u = f_q @ p["w_q"]
        alphas = []
        for hop in (1, 2):
            query = dc.linear(u, p[f"w_a{hop}"], p[f"b_a{hop}"])
            hidden = dc.tanh(dc.add(v @ p[f"w_i{hop}"], dc.repeat_rows(query, K)))
            alpha = dc.softmax(_scores(hidden, p[f"w_s{hop}"], B, K))
            u = dc.add(u, _attend(alpha, regions))
            alphas.append(alpha)
        f_att = u
        att = dc.stack(alphas, axis=1)
    else:
        raise ValueError(f"unknown hypothesis kind {spec.kind!r}")

    if single:
        f_att = dc.reshape(f_att, (f_att.shape[1],))
        att = dc.reshape(att, att.shape[1:])
    return f_att, att


def second_level_fuse(f_att: Tensor, f_qt: Tensor, op: str = "EWM") -> Tensor:
    """Combine the attended feature with the question-type feature."""
    if f_att.shape != f_qt.shape:
        raise dc.DimensionError(f"second_level_fuse: {f_att.shape} vs {f_qt.shape}")
    if op == "EWM":
        return dc.mul(f_att, f_qt)
    if op == "EWA":
        return dc.add(f_att, f_qt)
    if op == "none":
        return f_att
    raise ValueError(f"unknown fusion op {op!r}; choose from {FUSION_OPS}")


def answer_logits(spec: HypothesisSpec, f_att_qt: Tensor) -> Tensor:
    if f_att_qt.ndim == 1:
        x = dc.reshape(f_att_qt, (1, f_att_qt.shape[0]))
        out = dc.linear(x, spec.w_ans, spec.b_ans)
        return dc.reshape(out, (spec.w_ans.shape[1],))
    return dc.linear(f_att_qt, spec.w_ans, spec.b_ans)


def run_hypothesis(spec: HypothesisSpec, f_v: Tensor, f_q: Tensor, f_qt: Tensor,
                   op: str = "EWM") -> HypothesisOutput:
    f_att, att = first_level_fuse(spec, f_v, f_q)
    f_att_qt = second_level_fuse(f_att, f_qt, op)
    return HypothesisOutput(f_att, f_att_qt, answer_logits(spec, f_att_qt), att)
