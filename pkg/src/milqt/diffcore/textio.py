"""Plain-text tensor serialization.

A tensor is written as a ``shape: d1 d2 ... dn`` header followed by the
values in row-major order, one last-axis row per line, each value in the
shortest decimal that round-trips a float64. Several tensors in one file
are separated by a blank line.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .tensor import Tensor


class TensorFormatError(ValueError):
    pass


def format_float(x: float) -> str:
    return repr(float(x))


def format_tensor(t: Tensor | np.ndarray) -> str:
    arr = t.values if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    lines = ["shape:" + "".join(f" {d}" for d in arr.shape)]
    if arr.ndim == 0:
        lines.append(format_float(arr))
    else:
        rows = arr.reshape(-1, arr.shape[-1]) if arr.shape[-1] else np.zeros((0, 0))
        for row in rows:
            lines.append(" ".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"


def _parse_block(lines: list[str], where: str) -> np.ndarray:
    head = lines[0]
    if not head.startswith("shape:"):
        raise TensorFormatError(f"{where}: expected 'shape:' header, got {head!r}")
    try:
        shape = tuple(int(tok) for tok in head[len("shape:"):].split())
        values = [float(tok) for line in lines[1:] for tok in line.split()]
    except ValueError as exc:
        raise TensorFormatError(f"{where}: {exc}") from None
    n = int(np.prod(shape)) if shape else 1
    if len(values) != n:
        raise TensorFormatError(f"{where}: shape {shape} needs {n} values, found {len(values)}")
    return np.array(values, dtype=np.float64).reshape(shape)


def parse_tensors(text: str, source: str = "<text>") -> list[np.ndarray]:
    blocks: list[list[str]] = []
    cur: list[str] = []
    for line in text.splitlines():
        if line.strip():
            cur.append(line)
        elif cur:
            blocks.append(cur)
            cur = []
    if cur:
        blocks.append(cur)
    return [_parse_block(b, f"{source} block {i}") for i, b in enumerate(blocks)]


def parse_tensor(text: str, source: str = "<text>") -> np.ndarray:
    arrs = parse_tensors(text, source)
    if len(arrs) != 1:
        raise TensorFormatError(f"{source}: expected one tensor, found {len(arrs)}")
    return arrs[0]


def save_tensor(t: Tensor | np.ndarray, path) -> None:
    Path(path).write_text(format_tensor(t))


def load_tensor(path, requires_grad: bool = False) -> Tensor:
    p = Path(path)
    return Tensor(parse_tensor(p.read_text(), str(p)), requires_grad=requires_grad)


def save_tensors(ts, path) -> None:
    Path(path).write_text("\n".join(format_tensor(t) for t in ts))


def load_tensors(path) -> list[np.ndarray]:
    p = Path(path)
    return parse_tensors(p.read_text(), str(p))
