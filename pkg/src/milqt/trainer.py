"""AdaMax training, evaluation, prediction and checkpoints."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .config import TrainConfig
from .data import DataError, DatasetBundle, ValidationError, Vocabulary, tokenize_and_pad
from .diffcore import Tensor, backward
from .diffcore.textio import format_float, load_tensor, save_tensor
from .interaction import correlation_readout, readout_csv
from .metrics import MetricsReport, build_report
from .model import MilqtModel, make_batch, stack_features
from .prior import compute_prior, export_prior, import_prior

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "milqt-checkpoint-1"


class DivergenceError(RuntimeError):
    pass


class CheckpointMismatchError(ValidationError):
    pass


# ---------------------------------------------------------------- AdaMax


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    u: dict[str, np.ndarray] = field(default_factory=dict)


def adamax_update(theta, g, m, u, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One AdaMax step on plain arrays; ``t`` is the 1-based step number."""
    m = beta1 * m + (1.0 - beta1) * g
    u = np.maximum(beta2 * u, np.abs(g))
    theta = theta - (lr / (1.0 - beta1 ** t)) * m / (u + eps)
    return theta, m, u


def adamax_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
                state: OptimizerState, lr: float) -> None:
    """Apply AdaMax to every parameter in place and advance the step counter once."""
    state.t += 1
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros(p.shape)
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = state.m.get(name, np.zeros(p.shape))
        u = state.u.get(name, np.zeros(p.shape))
        theta, state.m[name], state.u[name] = adamax_update(
            p.values, g, m, u, state.t, lr, state.beta1, state.beta2, state.eps)
        p._assign(theta)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    model: MilqtModel
    log_lines: list[str]
    history: list[dict]


def init_model(config: TrainConfig, bundle: DatasetBundle, features: np.ndarray | None = None) -> MilqtModel:
    """Fresh model whose prior comes from ``bundle`` (the training split)."""
    d_v = features.shape[2] if features is not None else bundle.visual(0).shape[1]
    rng = np.random.default_rng(config.seed)
    return MilqtModel(config, bundle.vocab, bundle.answer_names, bundle.qtype_names,
                      compute_prior(bundle), d_v, rng)


def train(config: TrainConfig, bundle: DatasetBundle, outdir=None, model: MilqtModel | None = None) -> TrainResult:
    """Mini-batch AdaMax on the multi-task loss.

    When ``outdir`` is given, writes ``train.log``, a checkpoint after every
    epoch under ``checkpoints/``, the final ``checkpoint/`` and (for learned
    interaction) ``w_mil.csv``.
    """
    features = stack_features(bundle)
    tokens = np.array([s.tokens for s in bundle.samples], dtype=np.int64)
    model = model or init_model(config, bundle, features)
    params = model.parameters()
    state = OptimizerState()
    # shuffling has its own stream so init and data order are decoupled
    shuffle_rng = np.random.default_rng([config.seed, 1])
    lines: list[str] = []
    history: list[dict] = []
    out = Path(outdir) if outdir is not None else None
    logf = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        logf = (out / "train.log").open("w")
    step = 0
    try:
        for epoch in range(1, config.epochs + 1):
            order = shuffle_rng.permutation(len(bundle))
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                batch = make_batch(bundle, idx, features, tokens)
                model.zero_grad()
                breakdown, _ = model.loss(batch)
                total = breakdown.total.item()
                if not np.isfinite(total):
                    raise DivergenceError(f"non-finite loss {total!r} at epoch {epoch}, step {step}")
                backward(breakdown.total)
                grads = {k: p.grad for k, p in params.items() if p.grad is not None}
                clip_global_norm(grads, config.grad_clip)
                adamax_step(params, grads, state, config.learning_rate)
                step += 1
                if step % config.log_every == 0:
                    line = breakdown.log_line(step)
                    lines.append(line)
                    history.append({"step": step, "epoch": epoch, **breakdown.values()})
                    if logf:
                        logf.write(line + "\n")
            if out is not None and config.checkpoint_every_epoch:
                save_checkpoint(model, out / "checkpoints" / f"epoch_{epoch:03d}")
        if out is not None:
            save_checkpoint(model, out / "checkpoint")
            if model.interaction is not None:
                (out / "w_mil.csv").write_text(readout_csv(readout(model)))
    finally:
        if logf:
            logf.close()
    return TrainResult(model, lines, history)


def readout(model: MilqtModel) -> dict[str, dict[str, float]]:
    if model.interaction is None:
        raise ValueError("model has no learned interaction weights")
    return correlation_readout(model.interaction, model.qtype_names, model.hypothesis_names)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model: MilqtModel, path) -> None:
    path = Path(path)
    (path / "tensors").mkdir(parents=True, exist_ok=True)
    names = {}
    for name, t in model.parameters().items():
        fname = f"tensors/{name}.txt"
        save_tensor(t, path / fname)
        names[name] = fname
    export_prior(model.prior, path / "prior.csv")
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "d_v": model.d_v,
        "vocab": model.vocab.itos,
        "answer_names": model.answer_names,
        "qtype_names": model.qtype_names,
        "hypothesis_names": model.hypothesis_names,
        "params": names,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> MilqtModel:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise CheckpointMismatchError(f"{path}: no manifest.json") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatchError(f"{path}: unknown checkpoint format")
    config = TrainConfig.from_dict(manifest["config"])
    model = MilqtModel(config, Vocabulary.from_list(manifest["vocab"]), manifest["answer_names"],
                       manifest["qtype_names"], import_prior(path / "prior.csv"), manifest["d_v"])
    params = model.parameters()
    if set(params) != set(manifest["params"]):
        raise CheckpointMismatchError(f"{path}: parameter set differs from configuration")
    for name, fname in manifest["params"].items():
        params[name]._assign(load_tensor(path / fname).values)
    return model


# ---------------------------------------------------------------- evaluation


def _resolve(checkpoint) -> MilqtModel:
    return checkpoint if isinstance(checkpoint, MilqtModel) else load_checkpoint(checkpoint)


def _model_tokens(model: MilqtModel, bundle: DatasetBundle) -> np.ndarray:
    if bundle.answer_names != model.answer_names:
        raise CheckpointMismatchError("answer vocabulary of dataset and checkpoint differ")
    if bundle.qtype_names != model.qtype_names:
        raise CheckpointMismatchError("question types of dataset and checkpoint differ")
    if bundle.vocab == model.vocab:
        return np.array([s.tokens for s in bundle.samples], dtype=np.int64)
    # re-index questions with the checkpoint's vocabulary
    return np.array([tokenize_and_pad(s.question, model.vocab, bundle.max_q_len) for s in bundle.samples],
                    dtype=np.int64)


def _check_features(model: MilqtModel, features: np.ndarray) -> None:
    if features.shape[2] != model.d_v:
        raise CheckpointMismatchError(f"features have width {features.shape[2]}, checkpoint expects {model.d_v}")


def infer(model: MilqtModel, bundle: DatasetBundle, idx=None, features=None, tokens=None,
          inference_weighting: bool | None = None, batch_size: int = 256):
    """Answer scores (Q x A) and type distributions (Q x P) for ``idx``."""
    idx = np.arange(len(bundle)) if idx is None else np.asarray(idx)
    scores, hs = [], []
    for start in range(0, len(idx), batch_size):
        sel = idx[start:start + batch_size]
        batch = make_batch(bundle, sel, features, tokens)
        out = model.forward(batch)
        scores.append(model.answer_scores(out, inference_weighting))
        hs.append(out.h.values)
    P, A = model.P, model.A
    return (np.concatenate(scores) if scores else np.zeros((0, A)),
            np.concatenate(hs) if hs else np.zeros((0, P)))


def evaluate(checkpoint, bundle: DatasetBundle, config: TrainConfig | None = None,
             inference_weighting: bool | None = None) -> MetricsReport:
    """Metrics of a model (or checkpoint path) on ``bundle``; parameters untouched."""
    model = _resolve(checkpoint)
    if inference_weighting is None and config is not None:
        inference_weighting = config.inference_weighting
    tokens = _model_tokens(model, bundle)
    features = stack_features(bundle)
    _check_features(model, features)
    scores, h = infer(model, bundle, features=features, tokens=tokens,
                      inference_weighting=inference_weighting,
                      batch_size=model.config.eval_batch_size)
    pred = scores.argmax(axis=1)
    return build_report(pred, h.argmax(axis=1), [s.answer_scores for s in bundle.samples],
                        bundle.qtype_labels(), bundle.qtype_names)


@dataclass
class Prediction:
    id: str
    answer: str | None
    qtype: str | None
    top: list[tuple[str, float]]
    error: str | None = None

    def to_line(self) -> str:
        if self.error is not None:
            return f"{self.id}\tERROR\t{self.error}"
        top = ";".join(f"{a}={format_float(s)}" for a, s in self.top)
        return f"{self.id}\t{self.answer}\t{self.qtype}\t{top}"

    @classmethod
    def from_line(cls, line: str) -> "Prediction":
        parts = line.rstrip("\n").split("\t")
        if len(parts) == 3 and parts[1] == "ERROR":
            return cls(parts[0], None, None, [], parts[2])
        if len(parts) != 4:
            raise ValueError(f"bad prediction line {line!r}")
        top = []
        for pair in filter(None, parts[3].split(";")):
            name, _, sc = pair.rpartition("=")
            top.append((name, float(sc)))
        return cls(parts[0], parts[1], parts[2], top)


def predict(checkpoint, bundle: DatasetBundle, inference_weighting: bool | None = None,
            top_k: int = 5) -> list[Prediction]:
    """Per-question predictions; samples whose features cannot be read get an error entry."""
    model = _resolve(checkpoint)
    tokens = _model_tokens(model, bundle)
    preds: list[Prediction | None] = [None] * len(bundle)
    ok, feats = [], []
    for i in range(len(bundle)):
        try:
            fv = bundle.visual(i).values
            if fv.shape[1] != model.d_v:
                raise CheckpointMismatchError(f"feature width {fv.shape[1]} != {model.d_v}")
        except DataError as exc:
            preds[i] = Prediction(bundle.samples[i].id, None, None, [], str(exc).replace("\t", " "))
            continue
        ok.append(i)
        feats.append(fv)
    if ok:
        features = np.zeros((len(bundle),) + feats[0].shape)
        features[ok] = np.stack(feats)
        scores, h = infer(model, bundle, ok, features, tokens, inference_weighting,
                          model.config.eval_batch_size)
        for row, i in enumerate(ok):
            order = np.argsort(-scores[row], kind="stable")[:top_k]
            preds[i] = Prediction(
                bundle.samples[i].id, model.answer_names[order[0]],
                model.qtype_names[int(h[row].argmax())],
                [(model.answer_names[a], float(scores[row, a])) for a in order],
            )
    return preds
