"""Binary container for frozen per-word contextual vectors.

Contextual embeddings (BERT and friends) are expensive to compute, so they
are produced offline and stored next to the treebank in a simple binary
format this module reads and writes:

* header: magic ``CTXE``, format version (u32), vector dim (u32),
  sentence count (u64)
* per sentence: word count (u32), then word-count x dim float32 values

Everything is little-endian.  Vectors load as read-only arrays: they are
inputs to the model, never parameters, and nothing may mutate them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["CtxFormatError", "ContextVectors", "read_ctxe", "write_ctxe"]

MAGIC = b"CTXE"
VERSION = 1

_HEADER = struct.Struct("<4sIIQ")
_COUNT = struct.Struct("<I")


class CtxFormatError(ValueError):
    """The file is not a valid contextual-vector container."""


@dataclass(frozen=True, slots=True)
class ContextVectors:
    """Frozen per-word vectors for every sentence of one treebank.

    ``sentences[i]`` is a read-only (word count, dim) float32 array.  The
    source label identifies which encoder produced the file; it comes from
    the consumer (file names the data, not its origin).
    """

    source: str
    dim: int
    sentences: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.sentences)

    def sentence(self, index: int) -> np.ndarray:
        return self.sentences[index]

    def check_against(self, treebank) -> None:
        """Verify sentence and word counts line up with a parsed treebank."""
        if len(self.sentences) != len(treebank.sentences):
            raise CtxFormatError(
                f"context source {self.source!r} has {len(self.sentences)} sentences, "
                f"treebank has {len(treebank.sentences)}")
        for i, (block, sent) in enumerate(zip(self.sentences, treebank.sentences)):
            if block.shape[0] != len(sent.words):
                raise CtxFormatError(
                    f"context source {self.source!r}, sentence {i + 1}: "
                    f"{block.shape[0]} vectors for {len(sent.words)} words")


def write_ctxe(path: str, sentences: Sequence[np.ndarray], dim: int | None = None) -> None:
    """Write per-sentence vector blocks; dim is inferred when omitted."""
    blocks = []
    for i, arr in enumerate(sentences):
        a = np.asarray(arr, dtype=np.float32)
        if a.ndim != 2:
            raise CtxFormatError(f"sentence {i + 1}: expected a 2-D array, got shape {a.shape}")
        if dim is None:
            dim = int(a.shape[1])
        elif a.shape[1] != dim:
            raise CtxFormatError(f"sentence {i + 1}: dim {a.shape[1]} != {dim}")
        blocks.append(a)
    if dim is None:
        raise CtxFormatError("cannot infer dim from zero sentences; pass dim explicitly")
    if dim < 1:
        raise CtxFormatError(f"dim must be positive, got {dim}")

    with open(path, "wb") as out:
        out.write(_HEADER.pack(MAGIC, VERSION, dim, len(blocks)))
        for a in blocks:
            out.write(_COUNT.pack(a.shape[0]))
            out.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_ctxe(path: str, source: str = "ctx") -> ContextVectors:
    """Load a vector container, validating structure and exact length."""
    with open(path, "rb") as handle:
        data = handle.read()
    if len(data) < _HEADER.size:
        raise CtxFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CtxFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CtxFormatError(f"{path}: unsupported format version {version}")
    if dim < 1:
        raise CtxFormatError(f"{path}: non-positive dim {dim}")

    offset = _HEADER.size
    sentences = []
    for i in range(count):
        if offset + _COUNT.size > len(data):
            raise CtxFormatError(f"{path}: truncated at sentence {i + 1}")
        (words,) = _COUNT.unpack_from(data, offset)
        offset += _COUNT.size
        nbytes = words * dim * 4
        if offset + nbytes > len(data):
            raise CtxFormatError(f"{path}: truncated vectors in sentence {i + 1}")
        block = np.frombuffer(data, dtype="<f4", count=words * dim, offset=offset)
        block = block.reshape(words, dim)
        block.flags.writeable = False
        sentences.append(block)
        offset += nbytes
    if offset != len(data):
        raise CtxFormatError(f"{path}: {len(data) - offset} trailing bytes")
    return ContextVectors(source=source, dim=dim, sentences=tuple(sentences))
