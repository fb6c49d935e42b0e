"""Writer for the CTXE binary container of per-word vectors.

Layout, all little-endian:

* header: magic ``CTXE``, format version (u32), vector dim (u32),
  sentence count (u64)
* per sentence: word count (u32), then word-count x dim float32 values

The consumer side reads these files as frozen model inputs, so the writer
is deliberately strict: every block must be a 2-D float array of the
declared width.
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

__all__ = ["CtxFormatError", "write_ctxe", "MAGIC", "VERSION"]

MAGIC = b"CTXE"
VERSION = 1

_HEADER = struct.Struct("<4sIIQ")
_COUNT = struct.Struct("<I")


class CtxFormatError(ValueError):
    """The vectors cannot form a valid container."""


def write_ctxe(path: str, sentences: Sequence[np.ndarray], dim: int) -> None:
    """Write one (word count, dim) float32 block per sentence to ``path``."""
    if dim < 1:
        raise CtxFormatError(f"dim must be positive, got {dim}")
    blocks = []
    for i, arr in enumerate(sentences):
        a = np.asarray(arr, dtype=np.float32)
        if a.ndim != 2:
            raise CtxFormatError(f"sentence {i + 1}: expected a 2-D array, got shape {a.shape}")
        if a.shape[1] != dim:
            raise CtxFormatError(f"sentence {i + 1}: dim {a.shape[1]} != {dim}")
        blocks.append(a)

    with open(path, "wb") as out:
        out.write(_HEADER.pack(MAGIC, VERSION, dim, len(blocks)))
        for a in blocks:
            out.write(_COUNT.pack(a.shape[0]))
            out.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
