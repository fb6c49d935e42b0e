"""CoNLL-U treebank reading, validation, and writing.

Every column is kept verbatim in memory so that serialization reproduces
valid input byte for byte.  Parsing runs in one of two modes:

* non-strict (default): tolerant of missing heads ("_"), head cycles,
  CRLF endings, and a BOM, so system outputs of other tools load;
* strict: gold-data validation; integer heads in range, head 0 if and
  only if the deprel's universal part is "root", and sorted
  non-empty morphological features are all enforced.

Empty-node lines (ids like "3.1") are preserved verbatim and never enter
the word sequence.  Multiword token range lines keep their surface form
and MISC column; their remaining columns must be "_".
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class ConlluError(ValueError):
    """Base error for CoNLL-U handling."""


class ParseError(ConlluError):
    """Malformed CoNLL-U input; the message names the offending line."""


_INT = re.compile(r"0|[1-9][0-9]*")
_EMPTY_ID = re.compile(r"(?:0|[1-9][0-9]*)\.[0-9]+")
_MWT_ID = re.compile(r"([1-9][0-9]*)-([1-9][0-9]*)")


@dataclass(frozen=True, slots=True)
class Word:
    """One syntactic word: a 10-column CoNLL-U line with an integer id.

    ``feats`` holds the FEATS column as parsed (key, value) pairs in file
    order; a pair with value ``None`` is a bare item without "=" (only
    representable in non-strict mode).  ``head`` is ``None`` when the
    column was "_".  ``deps`` and ``misc`` are opaque.
    """

    id: int
    form: str
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: tuple[tuple[str, str | None], ...] = ()
    head: int | None = None
    deprel: str = "_"
    deps: str = "_"
    misc: str = "_"

    @property
    def feats_str(self) -> str:
        """The FEATS column exactly as it serializes."""
        if not self.feats:
            return "_"
        return "|".join(k if v is None else f"{k}={v}" for k, v in self.feats)

    @property
    def deprel_universal(self) -> str:
        """Deprel with any language-specific subtype (after ":") removed."""
        return self.deprel.split(":", 1)[0]


@dataclass(frozen=True, slots=True)
class MultiwordToken:
    """A surface token covering words ``start``..``end`` (a "1-2" line)."""

    start: int
    end: int
    form: str
    misc: str = "_"


@dataclass(frozen=True, slots=True)
class Sentence:
    """One sentence block: comments, words, range lines, empty nodes.

    ``empty_nodes`` holds (anchor, raw_line) pairs where ``anchor`` is the
    id of the word the line followed (0 = before the first word); the raw
    line is reproduced verbatim at that position on output.
    """

    words: tuple[Word, ...]
    multiword_tokens: tuple[MultiwordToken, ...] = ()
    empty_nodes: tuple[tuple[int, str], ...] = ()
    comments: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.words)


@dataclass(frozen=True, slots=True)
class Treebank:
    """A parsed CoNLL-U file: a sequence of sentences.

    ``name`` and ``warnings`` are provenance metadata and do not take part
    in equality; two parses of the same bytes compare equal.
    """

    sentences: tuple[Sentence, ...]
    name: str = field(default="", compare=False)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


def parse_conllu(data: str | bytes, strict: bool = False, name: str = "") -> Treebank:
    """Parse CoNLL-U text (str or UTF-8 bytes) into a Treebank.

    Raises ParseError naming the line on malformed input.  In non-strict
    mode, tolerated irregularities (CRLF, BOM, a missing final blank
    line) are recorded in ``Treebank.warnings`` instead.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"{name or 'input'}: not valid UTF-8 ({exc})") from None
    else:
        text = data

    warnings: list[str] = []
    if text.startswith("﻿"):
        if strict:
            raise ParseError("line 1: byte order mark not allowed")
        text = text[1:]
        warnings.append("byte order mark stripped")

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # the terminating newline of the final line

    sentences: list[Sentence] = []
    comments: list[str] = []
    words: list[Word] = []
    mwts: list[MultiwordToken] = []
    empties: list[tuple[int, str]] = []
    first_line = 0
    cr_warned = False

    def finish() -> None:
        nonlocal comments, words, mwts, empties
        if not (comments or words or mwts or empties):
            return
        sentences.append(
            _finish_sentence(comments, words, mwts, empties, strict, first_line)
        )
        comments, words, mwts, empties = [], [], [], []

    for lineno, raw in enumerate(lines, 1):
        line = raw
        if line.endswith("\r"):
            if strict:
                raise ParseError(f"line {lineno}: CR line ending (LF required)")
            line = line[:-1]
            if not cr_warned:
                warnings.append("CRLF line endings normalized")
                cr_warned = True

        if line == "":
            finish()
            continue
        if not (comments or words or mwts or empties):
            first_line = lineno
        if line.startswith("#"):
            if words or mwts or empties:
                raise ParseError(f"line {lineno}: comment inside a sentence")
            comments.append(line)
            continue

        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(
                f"line {lineno}: expected 10 tab-separated columns, got {len(cols)}"
            )

        wid = cols[0]
        if _INT.fullmatch(wid):
            expected = len(words) + 1
            if int(wid) != expected:
                raise ParseError(
                    f"line {lineno}: word ID {wid} out of order (expected {expected})"
                )
            words.append(_parse_word(cols, strict, lineno))
        elif _MWT_ID.fullmatch(wid):
            mwts.append(_parse_mwt(cols, len(words), mwts, strict, lineno))
        elif _EMPTY_ID.fullmatch(wid):
            empties.append((len(words), line))
        else:
            raise ParseError(f"line {lineno}: unparseable ID {wid!r}")

    if comments or words or mwts or empties:
        warnings.append("missing blank line after the final sentence")
        finish()

    return Treebank(tuple(sentences), name=name, warnings=tuple(warnings))


def _parse_word(cols: list[str], strict: bool, lineno: int) -> Word:
    form = cols[1]
    if form == "":
        raise ParseError(f"line {lineno}: empty FORM")
    if strict:
        for label, value in zip(
            ("LEMMA", "UPOS", "XPOS", "FEATS", "DEPREL", "DEPS", "MISC"),
            (cols[2], cols[3], cols[4], cols[5], cols[7], cols[8], cols[9]),
        ):
            if value == "":
                raise ParseError(f"line {lineno}: empty {label} column")

    head_col = cols[6]
    head: int | None
    if head_col == "_":
        if strict:
            raise ParseError(f"line {lineno}: missing HEAD")
        head = None
    elif _INT.fullmatch(head_col):
        head = int(head_col)
    else:
        raise ParseError(f"line {lineno}: non-integer HEAD {head_col!r}")

    return Word(
        id=int(cols[0]),
        form=form,
        lemma=cols[2],
        upos=cols[3],
        xpos=cols[4],
        feats=_parse_feats(cols[5], strict, lineno),
        head=head,
        deprel=cols[7],
        deps=cols[8],
        misc=cols[9],
    )


def _parse_feats(
    column: str, strict: bool, lineno: int
) -> tuple[tuple[str, str | None], ...]:
    if column == "_":
        return ()
    pairs: list[tuple[str, str | None]] = []
    for item in column.split("|"):
        if "=" in item:
            key, value = item.split("=", 1)
            pairs.append((key, value))
        else:
            if strict:
                raise ParseError(f"line {lineno}: FEATS item {item!r} lacks '='")
            pairs.append((item, None))
    if strict:
        keys = [key.lower() for key, _ in pairs]
        if keys != sorted(keys):
            raise ParseError(f"line {lineno}: FEATS keys not sorted: {column!r}")
        if len(set(keys)) != len(keys):
            raise ParseError(f"line {lineno}: duplicate FEATS key in {column!r}")
        for key, value in pairs:
            if key == "" or value == "":
                raise ParseError(f"line {lineno}: empty FEATS key or value in {column!r}")
    return tuple(pairs)


def _parse_mwt(
    cols: list[str],
    words_so_far: int,
    mwts: list[MultiwordToken],
    strict: bool,
    lineno: int,
) -> MultiwordToken:
    match = _MWT_ID.fullmatch(cols[0])
    assert match is not None
    start, end = int(match.group(1)), int(match.group(2))
    if start >= end:
        raise ParseError(f"line {lineno}: bad token range {cols[0]!r} (start must precede end)")
    if start != words_so_far + 1:
        raise ParseError(
            f"line {lineno}: token range {cols[0]} out of position "
            f"(next word ID is {words_so_far + 1})"
        )
    if mwts and mwts[-1].end >= start:
        raise ParseError(f"line {lineno}: token range {cols[0]} overlaps {mwts[-1].start}-{mwts[-1].end}")
    if cols[1] == "":
        raise ParseError(f"line {lineno}: empty FORM on token range line")
    if strict and any(col != "_" for col in cols[2:9]):
        raise ParseError(f"line {lineno}: token range line must have '_' in columns 3-9")
    return MultiwordToken(start=start, end=end, form=cols[1], misc=cols[9])


def _finish_sentence(
    comments: list[str],
    words: list[Word],
    mwts: list[MultiwordToken],
    empties: list[tuple[int, str]],
    strict: bool,
    first_line: int,
) -> Sentence:
    n = len(words)
    if strict and n == 0:
        raise ParseError(f"line {first_line}: sentence has no words")
    for token in mwts:
        if token.end > n:
            raise ParseError(
                f"line {first_line}: token range {token.start}-{token.end} "
                f"exceeds sentence length {n}"
            )
    if strict:
        for word in words:
            assert word.head is not None  # enforced at line level
            if word.head > n:
                raise ParseError(
                    f"line {first_line}: word {word.id} HEAD {word.head} "
                    f"out of range (sentence length {n})"
                )
            if (word.head == 0) != (word.deprel_universal == "root"):
                raise ParseError(
                    f"line {first_line}: word {word.id} has HEAD {word.head} "
                    f"with DEPREL {word.deprel!r} (head 0 iff universal deprel 'root')"
                )
    return Sentence(
        words=tuple(words),
        multiword_tokens=tuple(mwts),
        empty_nodes=tuple(empties),
        comments=tuple(comments),
    )


def serialize_conllu(tb: Treebank) -> bytes:
    """Serialize a Treebank to UTF-8 bytes with LF line endings.

    Inverse of parse_conllu on valid input: parse_conllu(serialize_conllu(t))
    equals t, and serialize(parse(data)) reproduces valid data exactly.
    """
    out: list[str] = []
    for sentence in tb.sentences:
        out.extend(sentence.comments)
        mwt_at = {t.start: t for t in sentence.multiword_tokens}
        by_anchor: dict[int, list[str]] = {}
        for anchor, raw in sentence.empty_nodes:
            by_anchor.setdefault(anchor, []).append(raw)
        out.extend(by_anchor.get(0, ()))
        for word in sentence.words:
            token = mwt_at.get(word.id)
            if token is not None:
                out.append(
                    f"{token.start}-{token.end}\t{token.form}\t_\t_\t_\t_\t_\t_\t_\t{token.misc}"
                )
            head = "_" if word.head is None else str(word.head)
            out.append(
                f"{word.id}\t{word.form}\t{word.lemma}\t{word.upos}\t{word.xpos}"
                f"\t{word.feats_str}\t{head}\t{word.deprel}\t{word.deps}\t{word.misc}"
            )
            out.extend(by_anchor.get(word.id, ()))
        out.append("")
    return "".join(line + "\n" for line in out).encode("utf-8")


def read_conllu(path: str, strict: bool = False) -> Treebank:
    """Read and parse a CoNLL-U file."""
    with open(path, "rb") as handle:
        return parse_conllu(handle.read(), strict=strict, name=path)


def write_conllu(tb: Treebank, path: str) -> None:
    """Serialize a Treebank to a file."""
    with open(path, "wb") as handle:
        handle.write(serialize_conllu(tb))
