"""Question embedding, GRU encoder, question-type head, visual features."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import diffcore as dc
from .data import PAD, FeatureRef, MissingBlockError, read_feature_block
from .diffcore import Tensor


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape or (fan_in, fan_out)), requires_grad=True)


def zeros_param(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def init_embedding(rng: np.random.Generator, vocab_size: int, width: int) -> Tensor:
    table = rng.normal(0.0, 1.0 / np.sqrt(width), size=(vocab_size, width))
    table[PAD] = 0.0
    return Tensor(table, requires_grad=True)


def embed_question(tokens, table: Tensor) -> Tensor:
    """Look up word vectors; PAD positions come out as zero rows.

    ``tokens`` is a length-T sequence (result T x D_w) or a B x T array
    (result B x T x D_w).
    """
    idx = np.asarray(tokens, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"token index out of range for vocabulary of {table.shape[0]}")
    rows = dc.gather_rows(table, idx)
    mask = np.broadcast_to((idx != PAD)[..., None], rows.shape).astype(np.float64)
    return dc.mul(rows, Tensor(mask))


@dataclass
class GruParams:
    # input weights are D_w x D_h, recurrent weights D_h x D_h
    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_hidden: int) -> "GruParams":
        kw = {}
        for gate in ("z", "r", "h"):
            kw[f"w_{gate}"] = xavier(rng, d_in, d_hidden)
            kw[f"u_{gate}"] = xavier(rng, d_hidden, d_hidden)
            kw[f"b_{gate}"] = zeros_param(d_hidden)
        return cls(**kw)

    @property
    def d_hidden(self) -> int:
        return self.u_z.shape[0]

    def named(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def gru_encode(f_w: Tensor, params: GruParams) -> Tensor:
    """Final hidden state after running the GRU over every time step.

    Accepts T x D_w (returns D_h) or B x T x D_w (returns B x D_h). The
    state starts at zero; padded steps are processed like any other.
    """
    single = f_w.ndim == 2
    x_all = dc.reshape(f_w, (1,) + f_w.shape) if single else f_w
    B, T, D_w = x_all.shape
    if T < 1:
        raise dc.DimensionError("gru_encode needs at least one time step")
    if params.w_z.shape[0] != D_w:
        raise dc.DimensionError(f"gru_encode: input width {D_w} vs {params.w_z.shape[0]}")
    D_h = params.d_hidden
    h = Tensor(np.zeros((B, D_h)))
    for t in range(T):
        x = dc.select(x_all, t, axis=1)
        z = dc.sigmoid(dc.add_bias(dc.add(x @ params.w_z, h @ params.u_z), params.b_z))
        r = dc.sigmoid(dc.add_bias(dc.add(x @ params.w_r, h @ params.u_r), params.b_r))
        cand = dc.tanh(dc.add_bias(dc.add(x @ params.w_h, dc.mul(r, h) @ params.u_h), params.b_h))
        h = dc.add(h, dc.mul(z, dc.sub(cand, h)))  # (1-z)h + z cand
    return dc.reshape(h, (D_h,)) if single else h


@dataclass
class QTypeHead:
    """Two FC layers: D_h -> D_f (ReLU, the type feature) -> P."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_f: int, n_types: int) -> "QTypeHead":
        return cls(xavier(rng, d_in, d_f), zeros_param(d_f), xavier(rng, d_f, n_types), zeros_param(n_types))

    @property
    def n_types(self) -> int:
        return self.w2.shape[1]

    def named(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def qtype_forward(f_q: Tensor, head: QTypeHead) -> tuple[Tensor, Tensor]:
    """Return (type distribution h, type feature f_qt)."""
    single = f_q.ndim == 1
    x = dc.reshape(f_q, (1, f_q.shape[0])) if single else f_q
    f_qt = dc.relu(dc.linear(x, head.w1, head.b1))
    h = dc.softmax(dc.linear(f_qt, head.w2, head.b2))
    if single:
        return dc.reshape(h, (head.n_types,)), dc.reshape(f_qt, (f_qt.shape[1],))
    return h, f_qt


def load_visual(feature_ref, base_dir=None) -> Tensor:
    """Stored K x D_v region features as a frozen tensor.

    ``feature_ref`` is a :class:`FeatureRef`, a ``"path#row"`` string, or an
    in-memory array.
    """
    if isinstance(feature_ref, str):
        path, _, row = feature_ref.rpartition("#")
        if not row.isdigit():
            raise MissingBlockError(f"bad feature reference {feature_ref!r}")
        feature_ref = FeatureRef(path, int(row))
    if isinstance(feature_ref, FeatureRef):
        arr = read_feature_block(feature_ref, base_dir)
    elif feature_ref is None:
        raise MissingBlockError("sample has no features")
    else:
        arr = np.asarray(feature_ref, dtype=np.float64)
    if arr.ndim != 2:
        raise dc.DimensionError(f"visual features must be K x D_v, got {arr.shape}")
    return Tensor(arr, requires_grad=False)
