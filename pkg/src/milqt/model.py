"""The full network: encoders, hypotheses, interaction, prior-aware losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .config import TrainConfig
from .data import DatasetBundle, Vocabulary, soft_targets
from .diffcore import Tensor
from .encoders import GruParams, QTypeHead, embed_question, gru_encode, init_embedding, qtype_forward
from .hypotheses import HypothesisOutput, HypothesisSpec, run_hypothesis
from .interaction import InteractionWeights, averaging_baseline, mix
from .losses import LossBreakdown, LossWeights, hypothesis_loss, qtype_loss, total_loss, vqa_loss, weight_targets
from .prior import PriorMatrix, awareness, one_hot


@dataclass
class Batch:
    tokens: np.ndarray  # B x T int
    f_v: Tensor  # B x K x D_v, frozen
    y: np.ndarray  # B x A soft targets
    qtypes: np.ndarray  # B int
    answer_scores: list

    @property
    def size(self) -> int:
        return self.tokens.shape[0]


@dataclass
class ForwardOutput:
    h: Tensor
    f_qt: Tensor
    hyps: list[HypothesisOutput]
    g: Tensor  # B x A x J
    rho: Tensor  # B x A
    m_awn: Tensor | None


class MilqtModel:
    def __init__(self, config: TrainConfig, vocab: Vocabulary, answer_names: Sequence[str],
                 qtype_names: Sequence[str], prior: PriorMatrix, d_v: int, rng=None):
        self.config = config
        self.vocab = vocab
        self.answer_names = list(answer_names)
        self.qtype_names = list(qtype_names)
        self.prior = prior
        self.d_v = int(d_v)
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        c = config
        P, A = len(qtype_names), len(answer_names)
        self.embedding = init_embedding(rng, len(vocab), c.d_w)
        self.gru = GruParams.init(rng, c.d_w, c.d_h)
        self.head = QTypeHead.init(rng, c.d_h, c.d_f, P)
        views = c.hypothesis_views or (None,) * c.J
        self.hypotheses = [
            HypothesisSpec.init(kind, rng, d_v, c.d_h, c.d_f, A, c.rank, view)
            for kind, view in zip(c.hypotheses, views)
        ]
        self.interaction = (
            InteractionWeights.init(P, c.J, c.softmax_over_j)
            if c.interaction == "learned" and c.J >= 2 else None
        )

    @property
    def P(self) -> int:
        return len(self.qtype_names)

    @property
    def A(self) -> int:
        return len(self.answer_names)

    @property
    def hypothesis_names(self) -> list[str]:
        return [f"hyp{j}_{k}" for j, k in enumerate(self.config.hypotheses)]

    def parameters(self) -> dict[str, Tensor]:
        out = {"embed": self.embedding}
        out.update({f"gru.{k}": v for k, v in self.gru.named().items()})
        out.update({f"qt.{k}": v for k, v in self.head.named().items()})
        for j, spec in enumerate(self.hypotheses):
            out.update({f"hyp{j}.{k}": v for k, v in spec.named().items()})
        if self.interaction is not None:
            out["mil.w_mil"] = self.interaction.w_mil
        return out

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    # ------------------------------------------------------------ forward

    def forward(self, batch: Batch) -> ForwardOutput:
        c = self.config
        f_w = embed_question(batch.tokens, self.embedding)
        f_q = gru_encode(f_w, self.gru)
        h, f_qt = qtype_forward(f_q, self.head)
        hyps = [run_hypothesis(spec, batch.f_v, f_q, f_qt, c.fusion) for spec in self.hypotheses]
        g = dc.stack([o.logits for o in hyps], axis=-1)
        if len(hyps) == 1:
            rho = hyps[0].logits
        elif c.interaction == "averaging":
            rho = averaging_baseline(g)
        else:
            rho = mix(g, self.interaction, self.prior)
        return ForwardOutput(h, f_qt, hyps, g, rho, self.awareness_weights(h, batch.qtypes))

    def awareness_weights(self, h: Tensor, qtypes: np.ndarray) -> Tensor | None:
        c = self.config
        if not c.prior:
            return None
        if c.h_mode == "groundtruth":
            dist = Tensor(one_hot(qtypes, self.P))
        else:
            dist = h.detach() if c.stop_gradient_h else h
        return awareness(dist, self.prior)

    def loss(self, batch: Batch, out: ForwardOutput | None = None) -> tuple[LossBreakdown, ForwardOutput]:
        out = out or self.forward(batch)
        y = Tensor(batch.y)
        m_awn = out.m_awn if out.m_awn is not None else Tensor(np.ones(batch.y.shape))
        y_hat, g_hat = weight_targets(m_awn, y, out.rho)
        l_vqa = vqa_loss(y_hat, g_hat)
        l_hyp = [hypothesis_loss(o.logits, y) for o in out.hyps]
        l_qt = qtype_loss(out.h, batch.qtypes)
        return total_loss(l_hyp, l_vqa, l_qt, LossWeights(*self.config.alpha)), out

    def answer_scores(self, out: ForwardOutput, inference_weighting: bool | None = None) -> np.ndarray:
        """Per-answer inference scores: sigmoid(rho), times m_awn when weighting is on."""
        weighting = self.config.inference_weighting if inference_weighting is None else inference_weighting
        s = dc.sigmoid(out.rho).values
        if weighting and out.m_awn is not None:
            s = s * out.m_awn.values
        return s


def make_batch(bundle: DatasetBundle, idx: Sequence[int], features: np.ndarray | None = None,
               tokens: np.ndarray | None = None) -> Batch:
    """Assemble a batch; ``features`` / ``tokens`` are optional precomputed Q-row arrays."""
    idx = list(idx)
    samples = [bundle.samples[i] for i in idx]
    tok = tokens[idx] if tokens is not None else np.array([s.tokens for s in samples], dtype=np.int64)
    if features is not None:
        fv = features[idx]
    else:
        fv = np.stack([bundle.visual(i).values for i in idx])
    return Batch(
        tok, Tensor(fv), soft_targets(samples, bundle.A),
        np.array([s.qtype for s in samples], dtype=np.int64),
        [s.answer_scores for s in samples],
    )


def stack_features(bundle: DatasetBundle) -> np.ndarray:
    return np.stack([bundle.visual(i).values for i in range(len(bundle))])
