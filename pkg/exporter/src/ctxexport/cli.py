"""Command line: run a frozen contextual encoder over a CoNLL-U file.

    ctxexport INPUT ENCODER OUTPUT

reads the word sequences of INPUT, encodes them with ENCODER, and writes
one float32 vector per word to OUTPUT in the CTXE binary format.  Exit
codes: 0 success, 1 usage error, 2 data or encoder error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .conllu import ConlluError, read_word_sequences
from .ctxe import CtxFormatError, write_ctxe
from .encoders import EncoderError, build_encoder

__all__ = ["run", "main"]


def run(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(
        prog="ctxexport",
        description="Run a frozen contextual encoder over the words of a CoNLL-U "
                    "file and write one vector per word in the CTXE binary format.")
    parser.add_argument("input", help="CoNLL-U file supplying the word sequences")
    parser.add_argument("encoder",
                        help="encoder name: bert:<dir>, random-bert[:seed], "
                             "flair:<name>, or elmo:<name>")
    parser.add_argument("output", help="CTXE file to write")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    try:
        with open(args.input, encoding="utf-8") as handle:
            sentences = read_word_sequences(handle.read())
        encoder = build_encoder(args.encoder, sentences)
        vectors = encoder.encode_sentences(sentences)
        write_ctxe(args.output, vectors, dim=encoder.dim)
    except (OSError, ConlluError, EncoderError, CtxFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output}: {len(vectors)} sentences, dim {encoder.dim}",
          file=sys.stderr)
    return 0


def main() -> None:
    logging.basicConfig(format="%(levelname)s: %(message)s")
    sys.exit(run(sys.argv[1:]))
