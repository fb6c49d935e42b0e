"""Word-representation layer: everything that turns forms into vectors.

Four sources feed the model, concatenated per word in a fixed order:

1. trainable word embeddings over a frequency-thresholded vocabulary
2. frozen pretrained word vectors loaded from a text table
3. character-level embeddings from a bidirectional GRU over the word
4. frozen contextual vectors computed offline (see ctxe.py)

Only sources 1 and 3 carry gradients.  The pretrained table and the
contextual vectors are plain read-only arrays wrapped into graph leaves
at composition time.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .autodiff import (
    Rng,
    Value,
    add,
    add_row,
    concat,
    embedding_lookup,
    glorot_uniform,
    matmul,
    mul,
    scale,
    sigmoid,
    slice_cols,
    tanh,
)

__all__ = [
    "EmbeddingError",
    "Vocab",
    "build_vocab",
    "build_char_vocab",
    "word_dropout",
    "PretrainedTable",
    "load_pretrained",
    "CharEmbedder",
    "pool_subwords",
    "canonical_ctx_order",
    "compose_input",
]

UNK_ID = 0


class EmbeddingError(ValueError):
    """Bad vector table, vocabulary misuse, or source mismatch."""


class Vocab:
    """String-to-id map with id 0 reserved for unknowns.

    Kept items occupy ids 1..len(items) in the order given (builders pass
    first-occurrence corpus order).  Lookup is total: anything absent maps
    to UNK_ID.
    """

    __slots__ = ("items", "_index")

    def __init__(self, items: Sequence[str]):
        self.items = tuple(items)
        self._index = {item: i + 1 for i, item in enumerate(self.items)}
        if len(self._index) != len(self.items):
            raise EmbeddingError("vocabulary items must be unique")

    @property
    def size(self) -> int:
        # one extra row for the unknown id
        return len(self.items) + 1

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def id(self, item: str) -> int:
        return self._index.get(item, UNK_ID)

    def ids(self, items: Iterable[str]) -> np.ndarray:
        return np.asarray([self._index.get(it, UNK_ID) for it in items], dtype=np.int64)


def build_vocab(treebank, min_count: int = 2) -> Vocab:
    """Vocabulary of word forms seen at least min_count times."""
    if min_count < 1:
        raise EmbeddingError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for sentence in treebank.sentences:
        counts.update(word.form for word in sentence.words)
    return Vocab([form for form, n in counts.items() if n >= min_count])


def build_char_vocab(treebank, min_count: int = 1) -> Vocab:
    """Vocabulary of characters occurring in word forms."""
    if min_count < 1:
        raise EmbeddingError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for sentence in treebank.sentences:
        for word in sentence.words:
            counts.update(word.form)
    return Vocab([ch for ch, n in counts.items() if n >= min_count])


def word_dropout(ids: np.ndarray, p: float, rng: Rng) -> np.ndarray:
    """Replace each id by UNK_ID with probability p (training only)."""
    if not 0.0 <= p <= 1.0:
        raise EmbeddingError(f"word dropout rate must be in [0, 1], got {p}")
    ids = np.asarray(ids, dtype=np.int64)
    if p == 0.0:
        return ids
    out = ids.copy()
    out[rng.generator.random(ids.shape) < p] = UNK_ID
    return out


class PretrainedTable:
    """Frozen word vectors with exact-then-lowercase lookup.

    Misses return a shared all-zero vector, so downstream code never
    branches on coverage.  The matrix is read-only by construction.
    """

    __slots__ = ("dim", "vectors", "_index", "_zero")

    def __init__(self, dim: int, vectors: np.ndarray, index: dict[str, int]):
        self.dim = dim
        self.vectors = vectors
        self.vectors.flags.writeable = False
        self._index = index
        self._zero = np.zeros(dim, dtype=vectors.dtype)
        self._zero.flags.writeable = False

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, form: str) -> bool:
        return form in self._index or form.lower() in self._index

    def lookup(self, form: str) -> np.ndarray:
        row = self._index.get(form)
        if row is None:
            row = self._index.get(form.lower())
        return self._zero if row is None else self.vectors[row]

    def rows(self, forms: Sequence[str]) -> np.ndarray:
        out = np.empty((len(forms), self.dim), dtype=self.vectors.dtype)
        for i, form in enumerate(forms):
            out[i] = self.lookup(form)
        return out


def _is_count_header(fields: list[str]) -> bool:
    if len(fields) != 2:
        return False
    try:
        return int(fields[0]) >= 0 and int(fields[1]) >= 1
    except ValueError:
        return False


def load_pretrained(path: str, max_rows: int = 1_000_000) -> PretrainedTable:
    """Load a text vector table: one "token v1 .. vd" row per line.

    An optional first line "<count> <dim>" is recognized and skipped; in
    headerless files the dim comes from the first row.  Later tokens that
    repeat an earlier one are ignored (tables list frequent words first),
    and reading stops after max_rows entries.
    """
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EmbeddingError(f"{path}: empty vector table")

    start = 0
    dim: int | None = None
    first = lines[0].split(" ")
    if first and first[-1] == "":
        first.pop()
    if _is_count_header(first):
        dim = int(first[1])
        start = 1

    index: dict[str, int] = {}
    rows: list[list[float]] = []
    for lineno in range(start, len(lines)):
        if len(index) >= max_rows:
            break
        line = lines[lineno]
        if line == "":
            raise EmbeddingError(f"{path}, row {lineno + 1}: empty line")
        parts = line.split(" ")
        if parts[-1] == "":
            # tables commonly end each row with a trailing space
            parts.pop()
        token = parts[0]
        if token == "":
            raise EmbeddingError(f"{path}, row {lineno + 1}: empty token")
        values = parts[1:]
        if dim is None:
            if not values:
                raise EmbeddingError(f"{path}, row {lineno + 1} (token {token!r}): no vector values")
            dim = len(values)
        if len(values) != dim:
            raise EmbeddingError(
                f"{path}, row {lineno + 1} (token {token!r}): "
                f"expected {dim} values, got {len(values)}")
        try:
            vec = [float(v) for v in values]
        except ValueError:
            raise EmbeddingError(
                f"{path}, row {lineno + 1} (token {token!r}): non-numeric value") from None
        if token in index:
            continue
        index[token] = len(rows)
        rows.append(vec)

    if dim is None:
        raise EmbeddingError(f"{path}: could not determine vector dim")
    matrix = np.asarray(rows, dtype=np.float32).reshape(len(rows), dim)
    return PretrainedTable(dim, matrix, index)


class CharEmbedder:
    """Word vectors from a bidirectional GRU over the word's characters.

    Each word is embedded independently of its neighbours: the output is
    the concatenation of the final forward and final backward states, so
    its width is 2 * hidden_dim.  Characters outside the vocabulary share
    the unknown row of the character table.
    """

    def __init__(
        self,
        char_vocab: Vocab,
        char_dim: int = 256,
        hidden_dim: int = 256,
        dtype=np.float32,
        rng: Rng | None = None,
    ):
        if char_dim < 1 or hidden_dim < 1:
            raise EmbeddingError(f"non-positive dims: char {char_dim}, hidden {hidden_dim}")
        rng = rng if rng is not None else Rng(1)
        self.char_vocab = char_vocab
        self.char_dim = char_dim
        self.hidden_dim = hidden_dim
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Value] = {
            "char_table": Value(glorot_uniform(rng, (char_vocab.size, char_dim), self.dtype)),
        }
        for side in ("fwd", "bwd"):
            # fused gate blocks, column order [reset | update | candidate]
            self.params[f"gru_{side}_wi"] = Value(
                glorot_uniform(rng, (char_dim, 3 * hidden_dim), self.dtype))
            self.params[f"gru_{side}_wh"] = Value(
                glorot_uniform(rng, (hidden_dim, 3 * hidden_dim), self.dtype))
            self.params[f"gru_{side}_bi"] = Value(np.zeros((1, 3 * hidden_dim), dtype=self.dtype))
            self.params[f"gru_{side}_bh"] = Value(np.zeros((1, 3 * hidden_dim), dtype=self.dtype))

    @property
    def dim(self) -> int:
        return 2 * self.hidden_dim

    def _run_direction(self, side: str, ids_pad: np.ndarray, mask: np.ndarray) -> Value:
        wi = self.params[f"gru_{side}_wi"]
        wh = self.params[f"gru_{side}_wh"]
        bi = self.params[f"gru_{side}_bi"]
        bh = self.params[f"gru_{side}_bh"]
        table = self.params["char_table"]
        batch, steps = ids_pad.shape
        h_dim = self.hidden_dim
        h = Value(np.zeros((batch, h_dim), dtype=self.dtype))
        for t in range(steps):
            x = embedding_lookup(table, ids_pad[:, t])
            gx = add_row(matmul(x, wi), bi)
            gh = add_row(matmul(h, wh), bh)
            r = sigmoid(add(slice_cols(gx, 0, h_dim), slice_cols(gh, 0, h_dim)))
            z = sigmoid(add(slice_cols(gx, h_dim, 2 * h_dim), slice_cols(gh, h_dim, 2 * h_dim)))
            n = tanh(add(slice_cols(gx, 2 * h_dim, 3 * h_dim),
                         mul(r, slice_cols(gh, 2 * h_dim, 3 * h_dim))))
            h_new = add(mul(scale(z, -1.0, 1.0), n), mul(z, h))
            col = mask[:, t]
            if col.all():
                h = h_new
            else:
                # words already past their last character keep their state
                keep = np.repeat(col[:, None], h_dim, axis=1).astype(self.dtype)
                h = add(mul(Value(keep), h_new), mul(Value(1.0 - keep), h))
        return h

    def embed_words(self, forms: Sequence[str]) -> Value:
        """(len(forms), 2 * hidden_dim) matrix, one row per word."""
        if not forms:
            raise EmbeddingError("embed_words needs at least one word")
        for form in forms:
            if not form:
                raise EmbeddingError("cannot embed an empty word")
        ids = [self.char_vocab.ids(form) for form in forms]
        batch = len(ids)
        steps = max(len(seq) for seq in ids)
        fwd_ids = np.zeros((batch, steps), dtype=np.int64)
        bwd_ids = np.zeros((batch, steps), dtype=np.int64)
        mask = np.zeros((batch, steps), dtype=bool)
        for b, seq in enumerate(ids):
            fwd_ids[b, : len(seq)] = seq
            bwd_ids[b, : len(seq)] = seq[::-1]
            mask[b, : len(seq)] = True
        h_fwd = self._run_direction("fwd", fwd_ids, mask)
        h_bwd = self._run_direction("bwd", bwd_ids, mask)
        return concat([h_fwd, h_bwd], axis=1)

    def embed_chars(self, word: str) -> Value:
        """(1, 2 * hidden_dim) embedding of a single word."""
        return self.embed_words([word])


def pool_subwords(
    layers: Sequence[np.ndarray],
    alignment: Sequence[int],
    word_count: int | None = None,
) -> np.ndarray:
    """Average subword vectors into word vectors.

    layers holds one (subwords, dim) array per encoder layer; the layer
    mean is taken first, then the mean over each word's subwords given by
    alignment (subword index -> word index).  Every word must own at
    least one subword.
    """
    if not layers:
        raise EmbeddingError("pool_subwords needs at least one layer")
    stack = np.stack([np.asarray(layer) for layer in layers])
    if stack.ndim != 3:
        raise EmbeddingError(f"layers must be 2-D arrays, got stacked shape {stack.shape}")
    subwords = stack.shape[1]
    align = np.asarray(alignment, dtype=np.int64)
    if align.shape != (subwords,):
        raise EmbeddingError(
            f"alignment length {align.shape} does not match {subwords} subwords")
    if word_count is None:
        if subwords == 0:
            raise EmbeddingError("cannot infer word count from zero subwords")
        word_count = int(align.max()) + 1
    if align.size and (align.min() < 0 or align.max() >= word_count):
        raise EmbeddingError(f"alignment index out of range for {word_count} words")

    per_subword = stack.mean(axis=0)
    counts = np.bincount(align, minlength=word_count)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise EmbeddingError(f"word {missing[0] + 1} has no subwords")
    sums = np.zeros((word_count, per_subword.shape[1]), dtype=per_subword.dtype)
    np.add.at(sums, align, per_subword)
    return sums / counts[:, None].astype(per_subword.dtype)


# built-in sources always precede contextual ones in the input vector
SOURCE_ORDER = ("we", "pretrained", "cle")

_KNOWN_CTX = {"bert": 0, "flair": 1, "elmo": 2}


def canonical_ctx_order(names: Iterable[str]) -> tuple[str, ...]:
    """Stable source order: bert, flair, elmo, then others alphabetically."""
    return tuple(sorted(names, key=lambda n: (_KNOWN_CTX.get(n, len(_KNOWN_CTX)), n)))


def compose_input(parts: Sequence[tuple[str, Value]]) -> Value:
    """Concatenate per-word source matrices along the feature axis.

    parts are (name, matrix) with every matrix (words, dim_i); built-in
    names must appear in SOURCE_ORDER, contextual names after them in
    canonical order.  Disabled sources are simply absent.
    """
    if not parts:
        raise EmbeddingError("compose_input needs at least one source")
    names = [name for name, _ in parts]
    if len(set(names)) != len(names):
        raise EmbeddingError(f"duplicate source names: {names}")
    builtin = [n for n in names if n in SOURCE_ORDER]
    if builtin != [n for n in SOURCE_ORDER if n in builtin]:
        raise EmbeddingError(f"sources out of order: {names}")
    ctx = [n for n in names if n not in SOURCE_ORDER]
    if names != builtin + ctx:
        raise EmbeddingError(f"contextual sources must follow built-ins: {names}")
    if tuple(ctx) != canonical_ctx_order(ctx):
        raise EmbeddingError(f"contextual sources out of order: {ctx}")

    rows = {value.data.shape[0] for _, value in parts}
    if len(rows) != 1:
        raise EmbeddingError(f"sources disagree on word count: {sorted(rows)}")
    values = [value for _, value in parts]
    return values[0] if len(values) == 1 else concat(values, axis=1)
