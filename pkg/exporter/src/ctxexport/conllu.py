"""Minimal CoNLL-U reader returning each sentence's word forms.

The exporter only needs the ordered word sequences: one vector is emitted
per syntactic word (integer-id row).  Multiword-token range rows (``n-m``)
and empty-node rows (``n.m``) contribute no vectors and are skipped;
comment lines are ignored.
"""

from __future__ import annotations

import re

__all__ = ["ConlluError", "read_word_sequences"]

_WORD_ID = re.compile(r"[1-9][0-9]*$")
_RANGE_ID = re.compile(r"[1-9][0-9]*-[1-9][0-9]*$")
_EMPTY_ID = re.compile(r"[0-9]+\.[1-9][0-9]*$")


class ConlluError(ValueError):
    """The input is not well-formed CoNLL-U."""


def read_word_sequences(text: str) -> list[list[str]]:
    """Parse CoNLL-U text into a list of per-sentence word-form lists."""
    sentences: list[list[str]] = []
    words: list[str] = []
    open_sentence = False

    def flush(number: int) -> None:
        nonlocal words, open_sentence
        if not words:
            raise ConlluError(f"line {number}: sentence without words")
        sentences.append(words)
        words = []
        open_sentence = False

    for number, line in enumerate(text.split("\n"), start=1):
        if line == "":
            if open_sentence:
                flush(number)
            continue
        open_sentence = True
        if line.startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 10:
            raise ConlluError(
                f"line {number}: expected 10 tab-separated columns, got {len(columns)}")
        ident, form = columns[0], columns[1]
        if _RANGE_ID.fullmatch(ident) or _EMPTY_ID.fullmatch(ident):
            continue
        if not _WORD_ID.fullmatch(ident):
            raise ConlluError(f"line {number}: bad token id {ident!r}")
        if form == "":
            raise ConlluError(f"line {number}: empty FORM")
        words.append(form)

    if open_sentence:
        flush(number + 1)
    return sentences
