"""Frozen contextual word-vector exporter for CoNLL-U treebanks.

Runs a pretrained (or deterministically initialised) transformer encoder
over the gold word sequences of a CoNLL-U file and writes one float32
vector per word to the CTXE binary format, for consumption as frozen model
inputs.
"""

from .conllu import ConlluError, read_word_sequences
from .ctxe import MAGIC, VERSION, CtxFormatError, write_ctxe
from .encoders import (
    OVERLAP,
    BertEncoder,
    EncoderError,
    build_encoder,
    choose_sources,
    random_bert,
    window_spans,
)
from .cli import run

__all__ = [
    "MAGIC",
    "VERSION",
    "OVERLAP",
    "ConlluError",
    "CtxFormatError",
    "EncoderError",
    "BertEncoder",
    "read_word_sequences",
    "write_ctxe",
    "build_encoder",
    "random_bert",
    "window_spans",
    "choose_sources",
    "run",
]

__version__ = "0.1.0"
