"""Frozen contextual encoders producing one vector per treebank word.

A word's vector is the mean of its subword vectors, and a subword's vector
is the mean of the last four hidden layers of a transformer encoder run in
inference mode.  Inputs longer than the encoder's position limit are split
into overlapping windows (64 shared subwords); for a position covered by
several windows, the copy sitting deepest inside its window wins, since
positions near a window edge see a truncated context.

Encoder names:

* ``bert:<directory>`` — a transformer checkpoint saved on disk (config,
  weights, wordpiece vocabulary).
* ``random-bert[:seed]`` — a deterministically initialised 768-wide
  transformer over a character-level wordpiece vocabulary collected from
  the input file.  Same interface and output shape as a saved checkpoint,
  reproducible from the seed; useful wherever no checkpoint is available.
* ``flair:<name>`` / ``elmo:<name>`` — recognised but unavailable: those
  runtimes are not installed here.
"""

from __future__ import annotations

import logging
import os
import tempfile
import unicodedata

import numpy as np
import torch

__all__ = [
    "OVERLAP",
    "EncoderError",
    "BertEncoder",
    "build_encoder",
    "random_bert",
    "window_spans",
    "choose_sources",
]

log = logging.getLogger("ctxexport")

OVERLAP = 64
SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")


class EncoderError(RuntimeError):
    """The requested encoder cannot be constructed."""


def window_spans(total: int, body: int, overlap: int) -> list[tuple[int, int]]:
    """Split ``range(total)`` into spans of at most ``body`` positions.

    Consecutive spans share exactly ``overlap`` positions (the final span
    may share more when the stride does not divide evenly).
    """
    if body < 1:
        raise ValueError(f"window body must be positive, got {body}")
    if not 0 <= overlap < body:
        raise ValueError(f"overlap must be in [0, body), got {overlap} for body {body}")
    if total <= body:
        return [(0, total)]
    stride = body - overlap
    spans = []
    start = 0
    while True:
        end = min(start + body, total)
        spans.append((start, end))
        if end == total:
            return spans
        start += stride


def choose_sources(spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Pick, for every covered position, the (span index, local index) whose
    copy sits deepest inside its span; ties go to the earlier span."""
    total = spans[-1][1]
    best_depth = [-1] * total
    choice: list[tuple[int, int]] = [(0, 0)] * total
    for span_index, (start, end) in enumerate(spans):
        length = end - start
        for local in range(length):
            position = start + local
            depth = min(local, length - 1 - local)
            if depth > best_depth[position]:
                best_depth[position] = depth
                choice[position] = (span_index, local)
    return choice


class BertEncoder:
    """Wraps a transformer model + wordpiece tokenizer as a word encoder."""

    def __init__(self, model, tokenizer, max_tokens: int | None = None):
        model.eval()
        self.model = model
        self.tokenizer = tokenizer
        self.dim = int(model.config.hidden_size)
        limit = int(model.config.max_position_embeddings if max_tokens is None else max_tokens)
        if limit < 4:
            raise ValueError(f"token limit too small to fit any content: {limit}")
        self.max_tokens = limit
        self._body = limit - 2  # two positions reserved for the boundary markers
        self._overlap = min(OVERLAP, self._body - 1)

    def encode(self, words: list[str]) -> np.ndarray:
        """Return a (len(words), dim) float32 array for one sentence."""
        pieces: list[list[int]] = []
        for word in words:
            tokens = self.tokenizer.tokenize(word)
            if not tokens:
                log.warning("word %r has no subword pieces; using the unknown-piece vector", word)
                tokens = [self.tokenizer.unk_token]
            pieces.append(self.tokenizer.convert_tokens_to_ids(tokens))
        flat = [piece for group in pieces for piece in group]
        vectors = self.subword_vectors(flat)
        out = np.empty((len(words), self.dim), dtype=np.float32)
        at = 0
        for row, group in enumerate(pieces):
            out[row] = vectors[at:at + len(group)].mean(axis=0)
            at += len(group)
        return out

    def encode_sentences(self, sentences: list[list[str]]) -> list[np.ndarray]:
        return [self.encode(words) for words in sentences]

    def subword_vectors(self, ids: list[int]) -> np.ndarray:
        """Last-4-layer mean per subword position, boundary markers stripped,
        assembled across overlapping windows for over-long inputs."""
        if not ids:
            return np.zeros((0, self.dim), dtype=np.float32)
        spans = window_spans(len(ids), self._body, self._overlap)
        per_span = [self.window_vectors(ids[start:end]) for start, end in spans]
        out = np.empty((len(ids), self.dim), dtype=np.float32)
        for position, (span_index, local) in enumerate(choose_sources(spans)):
            out[position] = per_span[span_index][local]
        return out

    def window_vectors(self, ids: list[int]) -> np.ndarray:
        """Run one window through the model; rows align with ``ids``."""
        tok = self.tokenizer
        window = [tok.cls_token_id, *ids, tok.sep_token_id]
        batch = torch.tensor([window], dtype=torch.long)
        with torch.inference_mode():
            result = self.model(
                input_ids=batch,
                attention_mask=torch.ones_like(batch),
                output_hidden_states=True,
            )
        layers = result.hidden_states[-4:]
        pooled = torch.stack(layers, dim=0).mean(dim=0)[0, 1:-1]
        return pooled.numpy(force=True).astype(np.float32, copy=False)


def _wordpiece_alphabet(sentences: list[list[str]]) -> list[str]:
    """Characters surviving uncased wordpiece normalisation (lowercase, strip
    accents and control characters), sorted for reproducibility."""
    chars: set[str] = set()
    for words in sentences:
        for word in words:
            for ch in unicodedata.normalize("NFD", word.lower()):
                category = unicodedata.category(ch)
                if category == "Mn" or category[0] == "C" or ch.isspace():
                    continue
                chars.add(ch)
    return sorted(chars)


def random_bert(sentences: list[list[str]], seed: int = 0, layers: int = 4,
                max_tokens: int | None = None) -> BertEncoder:
    """Deterministically initialised 768-wide encoder over a character-level
    wordpiece vocabulary collected from ``sentences``."""
    from transformers import BertConfig, BertModel, BertTokenizer

    alphabet = _wordpiece_alphabet(sentences)
    vocab = list(SPECIALS) + alphabet + ["##" + ch for ch in alphabet]
    with tempfile.TemporaryDirectory() as tmp:
        vocab_file = os.path.join(tmp, "vocab.txt")
        with open(vocab_file, "w", encoding="utf-8") as handle:
            handle.write("".join(token + "\n" for token in vocab))
        tokenizer = BertTokenizer(vocab_file, do_lower_case=True)

    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=768,
        num_hidden_layers=layers,
        num_attention_heads=4,
        intermediate_size=512,
        max_position_embeddings=512,
    )
    return BertEncoder(BertModel(config), tokenizer, max_tokens=max_tokens)


def build_encoder(spec: str, sentences: list[list[str]]) -> BertEncoder:
    """Construct the encoder named by ``spec`` (see the module docstring)."""
    kind, sep, arg = spec.partition(":")
    if kind == "bert":
        if not arg:
            raise EncoderError("bert needs a checkpoint directory: bert:<path>")
        if not os.path.isdir(arg):
            raise EncoderError(f"no such encoder directory: {arg}")
        from transformers import BertModel, BertTokenizer

        tokenizer = BertTokenizer.from_pretrained(arg)
        model = BertModel.from_pretrained(arg)
        return BertEncoder(model, tokenizer)
    if kind == "random-bert":
        if sep:
            try:
                seed = int(arg)
            except ValueError:
                raise EncoderError(
                    f"random-bert seed must be an integer, got {arg!r}") from None
        else:
            seed = 0
        return random_bert(sentences, seed=seed)
    if kind in ("flair", "elmo"):
        raise EncoderError(
            f"encoder unavailable: the {kind} runtime is not installed in this environment")
    raise EncoderError(
        f"unknown encoder {spec!r}; expected bert:<dir>, random-bert[:seed], "
        f"flair:<name>, or elmo:<name>")
