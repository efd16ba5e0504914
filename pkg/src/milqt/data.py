"""Dataset records, vocabularies, file I/O and the synthetic generator.

Record file layout (one record per line, tab separated)::

    id <TAB> question text <TAB> qtype name <TAB> ans=score;ans=score <TAB> feature ref

The feature reference is either ``path#block`` pointing at a block of a
feature file (textual tensor blocks separated by blank lines) or
``inline:KxD:v,v,...``. Sidecar files next to the record file,
``<stem>.vocab.txt``, ``<stem>.answers.txt`` and ``<stem>.qtypes.txt``,
hold one token per line with the line number as index.
"""

from __future__ import annotations

import functools
import os
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .diffcore import Tensor
from .diffcore.textio import TensorFormatError, format_float, format_tensor, parse_tensors

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
MAX_Q_LEN = 12

_STRIP_PUNCT = str.maketrans("", "", string.punctuation)


class DataError(ValueError):
    pass


class ParseError(DataError):
    pass


class ValidationError(DataError):
    pass


class MissingBlockError(DataError, LookupError):
    pass


class Vocabulary:
    """Bijective token/index map with ``<pad>`` at 0 and ``<unk>`` at 1."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.stoi: dict[str, int] = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for tok in tokens:
            self.add(tok)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocabulary":
        itos = list(itos)
        if itos[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValidationError("vocabulary must start with <pad>, <unk>")
        if len(set(itos)) != len(itos):
            raise ValidationError("vocabulary has duplicate tokens")
        return cls(itos[2:])

    def add(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    def index(self, tok: str) -> int:
        return self.stoi.get(tok, UNK)

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"


def tokenize(question: str) -> list[str]:
    return question.lower().translate(_STRIP_PUNCT).split()


def tokenize_and_pad(question: str, vocab: Vocabulary, max_q_len: int = MAX_Q_LEN) -> tuple[int, ...]:
    """Token indices trimmed to ``max_q_len`` and right-padded with PAD."""
    if max_q_len < 1:
        raise ValueError("max_q_len must be >= 1")
    ids = [vocab.index(w) for w in tokenize(question)[:max_q_len]]
    return tuple(ids + [PAD] * (max_q_len - len(ids)))


@dataclass(frozen=True)
class FeatureRef:
    path: str
    row: int

    def __str__(self) -> str:
        return f"{self.path}#{self.row}"


@dataclass(eq=False)
class SampleRecord:
    id: str
    question: str
    tokens: tuple[int, ...]
    qtype: int
    answer_scores: tuple[tuple[int, float], ...]
    feature_ref: FeatureRef | None = None
    features: np.ndarray | None = None

    def best_answer(self) -> int:
        # highest score, lowest index on ties
        return max(self.answer_scores, key=lambda p: (p[1], -p[0]))[0]


@dataclass(eq=False)
class DatasetBundle:
    samples: list[SampleRecord]
    vocab: Vocabulary
    answer_names: list[str]
    qtype_names: list[str]
    split: str = "train"
    base_dir: Path = field(default_factory=Path.cwd)
    max_q_len: int = MAX_Q_LEN

    def __post_init__(self):
        self.validate()

    @property
    def answer_vocab(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.answer_names)}

    @property
    def Q(self) -> int:
        return len(self.samples)

    @property
    def P(self) -> int:
        return len(self.qtype_names)

    @property
    def A(self) -> int:
        return len(self.answer_names)

    def __len__(self) -> int:
        return len(self.samples)

    def validate(self) -> None:
        if not self.samples:
            raise ValidationError("dataset has no samples")
        if self.P < 2:
            raise ValidationError(f"need at least 2 question types, got {self.P}")
        if self.A < 2:
            raise ValidationError(f"need at least 2 answers, got {self.A}")
        V = len(self.vocab)
        for s in self.samples:
            if not 0 <= s.qtype < self.P:
                raise ValidationError(f"{s.id}: qtype {s.qtype} out of range")
            if len(s.tokens) != self.max_q_len or any(not 0 <= t < V for t in s.tokens):
                raise ValidationError(f"{s.id}: bad token sequence")
            _check_scores(s.answer_scores, self.A, s.id)

    def visual(self, i: int) -> Tensor:
        from .encoders import load_visual

        s = self.samples[i]
        return load_visual(s.features if s.features is not None else s.feature_ref, self.base_dir)

    def qtype_labels(self) -> np.ndarray:
        return np.array([s.qtype for s in self.samples], dtype=np.int64)

    def answer_labels(self) -> np.ndarray:
        return np.array([s.best_answer() for s in self.samples], dtype=np.int64)

    def subset(self, idx: Sequence[int], split: str | None = None) -> "DatasetBundle":
        return DatasetBundle(
            [self.samples[i] for i in idx], self.vocab, self.answer_names, self.qtype_names,
            split or self.split, self.base_dir, self.max_q_len,
        )


def _check_scores(scores, A: int, where: str) -> None:
    if not scores:
        raise ValidationError(f"{where}: no answer scores")
    seen = set()
    for a, sc in scores:
        if not 0 <= a < A:
            raise ValidationError(f"{where}: answer index {a} out of range")
        if not 0.0 <= sc <= 1.0:
            raise ValidationError(f"{where}: score {sc} outside [0, 1]")
        if a in seen:
            raise ValidationError(f"{where}: duplicate answer index {a}")
        seen.add(a)


def build_soft_target(sample: SampleRecord, A: int) -> Tensor:
    """Length-A target vector with each listed answer's score in place."""
    _check_scores(sample.answer_scores, A, sample.id)
    y = np.zeros(A)
    for a, sc in sample.answer_scores:
        y[a] = sc
    return Tensor(y)


def soft_targets(samples: Sequence[SampleRecord], A: int) -> np.ndarray:
    y = np.zeros((len(samples), A))
    for i, s in enumerate(samples):
        for a, sc in s.answer_scores:
            y[i, a] = sc
    return y


# ---------------------------------------------------------------- file io


def sidecar_paths(path) -> dict[str, Path]:
    p = Path(path)
    stem = p.with_suffix("")
    return {k: stem.with_name(f"{stem.name}.{k}.txt") for k in ("vocab", "answers", "qtypes")}


def _read_list(path: Path) -> list[str]:
    return path.read_text().splitlines()


def _write_list(items: Sequence[str], path: Path) -> None:
    path.write_text("".join(f"{x}\n" for x in items))


def _parse_inline(spec: str, where: str) -> np.ndarray:
    try:
        dims, vals = spec.split(":", 1)
        k, d = (int(x) for x in dims.split("x"))
        arr = np.array([float(v) for v in vals.split(",")], dtype=np.float64)
        return arr.reshape(k, d)
    except ValueError as exc:
        raise ParseError(f"{where}: bad inline features: {exc}") from None


def _format_inline(arr: np.ndarray) -> str:
    k, d = arr.shape
    return f"inline:{k}x{d}:" + ",".join(format_float(v) for v in arr.reshape(-1))


def load_dataset(path, max_q_len: int = MAX_Q_LEN, split: str | None = None) -> DatasetBundle:
    """Parse a record file (plus any sidecars) into an indexed bundle."""
    path = Path(path)
    side = sidecar_paths(path)
    vocab = Vocabulary.from_list(_read_list(side["vocab"])) if side["vocab"].exists() else None
    answers = _read_list(side["answers"]) if side["answers"].exists() else None
    qtypes = _read_list(side["qtypes"]) if side["qtypes"].exists() else None
    grow_vocab = vocab is None
    vocab = vocab or Vocabulary()
    ans_index = {a: i for i, a in enumerate(answers)} if answers is not None else {}
    qt_index = {q: i for i, q in enumerate(qtypes)} if qtypes is not None else {}
    ans_names = list(answers) if answers is not None else []
    qt_names = list(qtypes) if qtypes is not None else []

    samples = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            parts = line.split("\t")
            if len(parts) != 5:
                raise ParseError(f"{where}: expected 5 tab-separated fields, got {len(parts)}")
            sid, question, qtype, ans_field, fref = parts
            if grow_vocab:
                for w in tokenize(question):
                    vocab.add(w)
            if qtype not in qt_index:
                if qtypes is not None:
                    raise ValidationError(f"{where}: unknown question type {qtype!r}")
                qt_index[qtype] = len(qt_names)
                qt_names.append(qtype)
            scores = []
            for pair in filter(None, ans_field.split(";")):
                name, eq, sc = pair.rpartition("=")
                if not eq:
                    raise ParseError(f"{where}: answer entry {pair!r} lacks '=score'")
                try:
                    score = float(sc)
                except ValueError:
                    raise ParseError(f"{where}: bad score {sc!r}") from None
                if name not in ans_index:
                    if answers is not None:
                        raise ValidationError(f"{where}: unknown answer {name!r}")
                    ans_index[name] = len(ans_names)
                    ans_names.append(name)
                scores.append((ans_index[name], score))
            _check_scores(scores, max(len(ans_names), 1), where)
            ref, feats = None, None
            if fref.startswith("inline:"):
                feats = _parse_inline(fref[len("inline:"):], where)
            else:
                fpath, hash_, row = fref.rpartition("#")
                if not hash_ or not row.isdigit():
                    raise ParseError(f"{where}: feature reference {fref!r} is not path#row")
                ref = FeatureRef(fpath, int(row))
            samples.append(
                SampleRecord(sid, question, tokenize_and_pad(question, vocab, max_q_len),
                             qt_index[qtype], tuple(scores), ref, feats)
            )
    return DatasetBundle(samples, vocab, ans_names, qt_names, split or path.stem,
                         path.parent, max_q_len)


def write_dataset(bundle: DatasetBundle, path, feature_path: str | None = None) -> None:
    """Write records and sidecars.

    Inline features are written to ``feature_path`` (relative to the record
    file) when given, otherwise kept inline in the record line.
    """
    path = Path(path)
    blocks = []
    lines = []
    for s in bundle.samples:
        if s.feature_ref is not None:
            fref = str(s.feature_ref)
        elif feature_path is not None:
            fref = f"{feature_path}#{len(blocks)}"
            blocks.append(s.features)
        else:
            fref = _format_inline(s.features)
        ans = ";".join(f"{bundle.answer_names[a]}={format_float(sc)}" for a, sc in s.answer_scores)
        lines.append("\t".join([s.id, s.question, bundle.qtype_names[s.qtype], ans, fref]))
    path.write_text("".join(f"{ln}\n" for ln in lines))
    if blocks:
        (path.parent / feature_path).write_text("\n".join(format_tensor(b) for b in blocks))
    side = sidecar_paths(path)
    _write_list(bundle.vocab.itos, side["vocab"])
    _write_list(bundle.answer_names, side["answers"])
    _write_list(bundle.qtype_names, side["qtypes"])


@functools.lru_cache(maxsize=32)
def _feature_blocks(resolved: str, mtime_ns: int, size: int) -> tuple[np.ndarray, ...]:
    try:
        blocks = parse_tensors(Path(resolved).read_text(), resolved)
    except TensorFormatError as exc:
        raise ParseError(str(exc)) from None
    for b in blocks:
        b.setflags(write=False)
    return tuple(blocks)


def read_feature_block(ref: FeatureRef, base_dir=None) -> np.ndarray:
    p = Path(ref.path)
    if not p.is_absolute() and base_dir is not None:
        p = Path(base_dir) / p
    try:
        st = os.stat(p)
    except FileNotFoundError:
        raise MissingBlockError(f"feature file {p} not found") from None
    blocks = _feature_blocks(str(p.resolve()), st.st_mtime_ns, st.st_size)
    if not 0 <= ref.row < len(blocks):
        raise MissingBlockError(f"{ref}: block {ref.row} past end ({len(blocks)} blocks)")
    return blocks[ref.row]


# ---------------------------------------------------------------- synthetic

_KEYWORDS = ["color", "count", "shape", "where", "which", "size",
             "material", "sport", "activity", "position", "emotion", "utility"]
_OBJECTS = ["dog", "car", "cup", "tree", "ball", "chair"]
_TEMPLATES = ["what {kw} is the {obj}", "tell me the {kw} of this {obj}", "{kw} of the {obj} please"]


@dataclass(frozen=True)
class SynthRule:
    """Rule table for the synthetic generator.

    Question type ``p`` owns a block of answers. One region of each image
    carries a planted value at feature dimension ``dim_offsets[p] + slot``;
    the answer is ``block(p)[slot]``. With ``overlap`` each block also takes
    the first answer of the next block.
    """

    noise: float = 0.1
    planted: float = 1.0
    overlap: bool = False
    dim_offsets: tuple[int, ...] | None = None

    def blocks(self, P: int, A: int) -> list[list[int]]:
        s = A // P
        out = [list(range(p * s, (p + 1) * s)) for p in range(P)]
        out[-1].extend(range(P * s, A))
        if self.overlap:
            for p in range(P):
                out[p].append(out[(p + 1) % P][0])
        return out

    def offset(self, p: int) -> int:
        return self.dim_offsets[p] if self.dim_offsets is not None else 0

    def answer(self, P: int, A: int, qtype: int, slot: int) -> int:
        return self.blocks(P, A)[qtype][slot]

    def decode(self, P: int, A: int, qtype: int, features: np.ndarray) -> int:
        """Read the planted slot back out of a K x D_v feature matrix."""
        n = len(self.blocks(P, A)[qtype])
        o = self.offset(qtype)
        slot = int(np.argmax(features[:, o:o + n].max(axis=0)))
        return self.answer(P, A, qtype, slot)


def type_keyword(p: int) -> str:
    return _KEYWORDS[p] if p < len(_KEYWORDS) else f"topic{p}"


def synthetic_vocab(P: int) -> Vocabulary:
    vocab = Vocabulary()
    for p in range(P):
        for tpl in _TEMPLATES:
            for obj in _OBJECTS:
                for w in tokenize(tpl.format(kw=type_keyword(p), obj=obj)):
                    vocab.add(w)
    return vocab


def gen_synthetic(seed: int, Q: int, P: int, A: int, K: int, D_v: int,
                  rule: SynthRule | None = None, split: str = "train") -> DatasetBundle:
    """Seeded bundle whose answer is a fixed function of (qtype, planted slot)."""
    rule = rule or SynthRule()
    if min(Q, P, A, K, D_v) < 2 or A < P:
        raise ValueError("synthetic extents must be >= 2 with A >= P")
    blocks = rule.blocks(P, A)
    for p in range(P):
        if rule.offset(p) + len(blocks[p]) > D_v:
            raise ValueError(f"D_v={D_v} too small for the planted pattern of type {p}")
    rng = np.random.default_rng(seed)
    vocab = synthetic_vocab(P)
    samples = []
    for i in range(Q):
        p = int(rng.integers(P))
        slot = int(rng.integers(len(blocks[p])))
        tpl = _TEMPLATES[int(rng.integers(len(_TEMPLATES)))]
        obj = _OBJECTS[int(rng.integers(len(_OBJECTS)))]
        question = tpl.format(kw=type_keyword(p), obj=obj)
        feats = rng.normal(0.0, rule.noise, size=(K, D_v))
        feats[int(rng.integers(K)), rule.offset(p) + slot] += rule.planted
        feats.setflags(write=False)
        samples.append(
            SampleRecord(f"q{i:05d}", question, tokenize_and_pad(question, vocab), p,
                         ((blocks[p][slot], 1.0),), None, feats)
        )
    return DatasetBundle(samples, vocab, [f"ans{a}" for a in range(A)],
                         [f"type{p}" for p in range(P)], split)
