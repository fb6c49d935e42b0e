"""Joint tagger/lemmatizer/parser network.

One shared BiLSTM stack reads the composed word representations; on top
of it a tagger branch predicts UPOS/XPOS/UFeats and the lemma edit
script, and a parser branch scores arcs and labels with biaffine
attention.  All trainable state lives in a flat name -> Value dict so
the optimizer and the checkpoint format stay oblivious to structure.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Value
from .conllu import Sentence, Treebank
from .decode import assign_labels, mst_decode
from .embeddings import (
    CharEmbedder,
    EmbeddingError,
    PretrainedTable,
    Vocab,
    build_char_vocab,
    build_vocab,
    canonical_ctx_order,
    compose_input,
    word_dropout,
)
from .lemma_scripts import build_inventory, inventory_from_encodings

__all__ = [
    "ModelConfig",
    "ModelError",
    "SentenceScores",
    "JointModel",
    "config_from_treebank",
    "biaffine_score",
    "UNK_LABEL",
]

UNK_LABEL = "<unk>"


class ModelError(ValueError):
    """Configuration or invocation breaks the model's contracts."""


@dataclass(frozen=True, slots=True)
class ModelConfig:
    """Everything needed to rebuild the network: sources, dims, label sets.

    Parameter shapes are a pure function of this object, which is what
    makes checkpoints self-describing.
    """

    # input sources
    use_we: bool = True
    we_dim: int = 64
    we_min_count: int = 2
    use_pretrained: bool = False
    pretrained_dim: int = 0
    use_cle: bool = True
    char_dim: int = 256
    cle_dim: int = 256
    ctx_sources: tuple[tuple[str, int], ...] = ()
    # network dims (per direction where bidirectional)
    shared_layers: int = 2
    shared_dim: int = 256
    tagger_dim: int = 256
    parser_dim: int = 256
    arc_dim: int = 128
    label_dim: int = 64
    # regularization (train mode only)
    input_dropout: float = 0.5
    hidden_dropout: float = 0.5
    word_dropout: float = 0.2
    # task weights in the summed loss
    weight_upos: float = 1.0
    weight_xpos: float = 1.0
    weight_feats: float = 1.0
    weight_lemma: float = 1.0
    weight_arc: float = 1.0
    weight_label: float = 1.0
    # which tagger heads are active (trivial all-"_" columns are skipped)
    tag_upos: bool = True
    tag_xpos: bool = True
    tag_feats: bool = True
    tag_lemma: bool = True
    # inventories observed in training data
    word_vocab: tuple[str, ...] = ()
    char_vocab: tuple[str, ...] = ()
    upos_labels: tuple[str, ...] = (UNK_LABEL,)
    xpos_labels: tuple[str, ...] = (UNK_LABEL,)
    feats_labels: tuple[str, ...] = (UNK_LABEL,)
    deprel_labels: tuple[str, ...] = (UNK_LABEL,)
    lemma_scripts: tuple[str, ...] = ("C:l|P:|S:",)
    seed: int = 42
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("we_dim", "char_dim", "cle_dim", "shared_layers", "shared_dim",
                     "tagger_dim", "parser_dim", "arc_dim", "label_dim"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be positive, got {getattr(self, name)}")
        if self.we_min_count < 1:
            raise ModelError(f"we_min_count must be >= 1, got {self.we_min_count}")
        if self.use_pretrained and self.pretrained_dim < 1:
            raise ModelError("use_pretrained requires a positive pretrained_dim")
        if not (self.use_we or self.use_pretrained or self.use_cle or self.ctx_sources):
            raise ModelError("at least one input source must be enabled")
        for rate_name in ("input_dropout", "hidden_dropout"):
            rate = getattr(self, rate_name)
            if not 0.0 <= rate < 1.0:
                raise ModelError(f"{rate_name} must be in [0, 1), got {rate}")
        if not 0.0 <= self.word_dropout <= 1.0:
            raise ModelError(f"word_dropout must be in [0, 1], got {self.word_dropout}")
        names = [name for name, _ in self.ctx_sources]
        if len(set(names)) != len(names):
            raise ModelError(f"duplicate context source names: {names}")
        if tuple(names) != canonical_ctx_order(names):
            raise ModelError(f"context sources must be in canonical order: {names}")
        for name, dim in self.ctx_sources:
            if dim < 1:
                raise ModelError(f"context source {name!r} has non-positive dim {dim}")
        for label_field in ("upos_labels", "xpos_labels", "feats_labels", "deprel_labels"):
            labels = getattr(self, label_field)
            if not labels or labels[0] != UNK_LABEL:
                raise ModelError(f"{label_field} must start with {UNK_LABEL!r}")
            if len(set(labels)) != len(labels):
                raise ModelError(f"{label_field} has duplicates")
        if not self.lemma_scripts:
            raise ModelError("lemma_scripts must not be empty")
        if self.dtype not in ("float32", "float64"):
            raise ModelError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def input_dim(self) -> int:
        total = 0
        if self.use_we:
            total += self.we_dim
        if self.use_pretrained:
            total += self.pretrained_dim
        if self.use_cle:
            total += 2 * self.cle_dim
        total += sum(dim for _, dim in self.ctx_sources)
        return total


def _labels(observed) -> tuple[str, ...]:
    return (UNK_LABEL,) + tuple(sorted(set(observed)))


def config_from_treebank(treebank: Treebank, **overrides) -> ModelConfig:
    """Derive vocabularies, label sets, and edit scripts from training data.

    Keyword overrides replace any config field except the derived
    inventories themselves; a head whose gold column is entirely "_" is
    deactivated.
    """
    if not treebank.sentences:
        raise ModelError("cannot configure a model from an empty treebank")
    words = [w for sentence in treebank.sentences for w in sentence.words]
    derived = {
        "upos_labels": _labels(w.upos for w in words),
        "xpos_labels": _labels(w.xpos for w in words),
        "feats_labels": _labels(w.feats_str for w in words),
        "deprel_labels": _labels(w.deprel for w in words),
        "lemma_scripts": build_inventory(treebank).encodings,
        "tag_upos": any(w.upos != "_" for w in words),
        "tag_xpos": any(w.xpos != "_" for w in words),
        "tag_feats": any(w.feats_str != "_" for w in words),
        "tag_lemma": any(w.lemma != "_" for w in words),
    }
    bad = set(overrides) & set(derived)
    if bad:
        raise ModelError(f"fields derived from the treebank cannot be overridden: {sorted(bad)}")
    allowed = {f.name for f in fields(ModelConfig)}
    unknown = set(overrides) - allowed
    if unknown:
        raise ModelError(f"unknown config fields: {sorted(unknown)}")

    default_min = ModelConfig.__dataclass_fields__["we_min_count"].default
    min_count = int(overrides.get("we_min_count", default_min))
    derived["word_vocab"] = build_vocab(treebank, min_count=min_count).items
    derived["char_vocab"] = build_char_vocab(treebank).items
    return ModelConfig(**{**derived, **overrides})


@dataclass(frozen=True, slots=True)
class SentenceScores:
    """Per-sentence network outputs, all shaped by the word count n.

    Tagger logits are (n, classes) or None for inactive heads;
    arc_scores is (n+1, n) with row 0 the artificial root; label_logits
    is (n+1, n, deprels) over every candidate (head, dependent) pair.
    """

    upos: Value | None
    xpos: Value | None
    feats: Value | None
    lemma: Value | None
    arc_scores: Value
    label_logits: Value


def biaffine_score(h_dep, h_head, u, w, b) -> float:
    """score = h_dep . u . h_head + w . h_head + b, on plain vectors."""
    h_dep = np.asarray(h_dep, dtype=np.float64)
    h_head = np.asarray(h_head, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if h_dep.ndim != 1 or h_head.ndim != 1:
        raise ModelError("biaffine_score takes 1-D state vectors")
    if u.shape != (h_dep.size, h_head.size):
        raise ModelError(f"u shape {u.shape} does not match ({h_dep.size}, {h_head.size})")
    if w.shape != (h_head.size,):
        raise ModelError(f"w shape {w.shape} does not match head dim {h_head.size}")
    return float(h_dep @ u @ h_head + w @ h_head + float(b))


class JointModel:
    """Network parameters plus the inventories needed to use them."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.word_vocab = Vocab(config.word_vocab)
        self.char_vocab = Vocab(config.char_vocab)
        self.inventory = inventory_from_encodings(config.lemma_scripts)
        self._label_index = {
            "upos": {label: i for i, label in enumerate(config.upos_labels)},
            "xpos": {label: i for i, label in enumerate(config.xpos_labels)},
            "feats": {label: i for i, label in enumerate(config.feats_labels)},
            "deprel": {label: i for i, label in enumerate(config.deprel_labels)},
        }
        rng = Rng(config.seed)
        dt = config.np_dtype
        p: dict[str, Value] = {}

        if config.use_we:
            p["we_table"] = Value(
                ad.glorot_uniform(rng, (self.word_vocab.size, config.we_dim), dt))
        if config.use_cle:
            self.char_embedder = CharEmbedder(
                self.char_vocab, config.char_dim, config.cle_dim, dtype=dt, rng=rng)
            p.update(self.char_embedder.params)
        else:
            self.char_embedder = None

        def lstm(prefix: str, in_dim: int, h_dim: int) -> None:
            for side in ("fwd", "bwd"):
                p[f"{prefix}_{side}_wi"] = Value(ad.glorot_uniform(rng, (in_dim, 4 * h_dim), dt))
                p[f"{prefix}_{side}_wh"] = Value(ad.glorot_uniform(rng, (h_dim, 4 * h_dim), dt))
                bias = np.zeros((1, 4 * h_dim), dtype=dt)
                bias[0, h_dim : 2 * h_dim] = 1.0  # open forget gates at start
                p[f"{prefix}_{side}_b"] = Value(bias)

        in_dim = config.input_dim
        for layer in range(config.shared_layers):
            lstm(f"shared{layer}", in_dim, config.shared_dim)
            in_dim = 2 * config.shared_dim
        lstm("tagger", in_dim, config.tagger_dim)
        lstm("parser", in_dim, config.parser_dim)

        def head(prefix: str, in_dim: int, classes: int) -> None:
            p[f"{prefix}_w"] = Value(ad.glorot_uniform(rng, (in_dim, classes), dt))
            p[f"{prefix}_b"] = Value(np.zeros((1, classes), dtype=dt))

        t_dim = 2 * config.tagger_dim
        if config.tag_upos:
            head("upos", t_dim, len(config.upos_labels))
        if config.tag_xpos:
            head("xpos", t_dim, len(config.xpos_labels))
        if config.tag_feats:
            head("feats", t_dim, len(config.feats_labels))
        if config.tag_lemma:
            lemma_in = t_dim + (2 * config.cle_dim if config.use_cle else 0)
            head("lemma", lemma_in, len(config.lemma_scripts))

        d_dim = 2 * config.parser_dim
        p["root_vec"] = Value(ad.glorot_uniform(rng, (1, d_dim), dt))
        p["arc_head_w"] = Value(ad.glorot_uniform(rng, (d_dim, config.arc_dim), dt))
        p["arc_head_b"] = Value(np.zeros((1, config.arc_dim), dtype=dt))
        p["arc_dep_w"] = Value(ad.glorot_uniform(rng, (d_dim, config.arc_dim), dt))
        p["arc_dep_b"] = Value(np.zeros((1, config.arc_dim), dtype=dt))
        p["arc_u"] = Value(ad.glorot_uniform(rng, (config.arc_dim, config.arc_dim), dt))
        p["arc_w"] = Value(ad.glorot_uniform(rng, (config.arc_dim, 1), dt))
        p["arc_b"] = Value(np.zeros((1, 1), dtype=dt))
        p["lab_head_w"] = Value(ad.glorot_uniform(rng, (d_dim, config.label_dim), dt))
        p["lab_head_b"] = Value(np.zeros((1, config.label_dim), dtype=dt))
        p["lab_dep_w"] = Value(ad.glorot_uniform(rng, (d_dim, config.label_dim), dt))
        p["lab_dep_b"] = Value(np.zeros((1, config.label_dim), dtype=dt))
        # +1 columns carry the linear head/dep terms and the class bias
        p["lab_u"] = Value(ad.glorot_uniform(
            rng, (len(config.deprel_labels), config.label_dim + 1, config.label_dim + 1), dt))
        self.params = p

    # ------------------------------------------------------------ forward

    def _bilstm(self, prefix: str, x: Value, h_dim: int) -> Value:
        outs = []
        for side in ("fwd", "bwd"):
            wi = self.params[f"{prefix}_{side}_wi"]
            wh = self.params[f"{prefix}_{side}_wh"]
            b = self.params[f"{prefix}_{side}_b"]
            n = x.shape[0]
            steps = range(n) if side == "fwd" else range(n - 1, -1, -1)
            h = Value(np.zeros((1, h_dim), dtype=x.dtype))
            c = Value(np.zeros((1, h_dim), dtype=x.dtype))
            rows: list[Value | None] = [None] * n
            for t in steps:
                row = ad.slice_rows(x, t, t + 1)
                g = ad.add(ad.add(ad.matmul(row, wi), ad.matmul(h, wh)), b)
                i = ad.sigmoid(ad.slice_cols(g, 0, h_dim))
                f = ad.sigmoid(ad.slice_cols(g, h_dim, 2 * h_dim))
                cand = ad.tanh(ad.slice_cols(g, 2 * h_dim, 3 * h_dim))
                o = ad.sigmoid(ad.slice_cols(g, 3 * h_dim, 4 * h_dim))
                c = ad.add(ad.mul(f, c), ad.mul(i, cand))
                h = ad.mul(o, ad.tanh(c))
                rows[t] = h
            outs.append(ad.concat(rows, axis=0) if n > 1 else rows[0])
        return ad.concat(outs, axis=1)

    def forward(
        self,
        sentence: Sentence,
        mode: str = "infer",
        pretrained: PretrainedTable | None = None,
        ctx: dict[str, np.ndarray] | None = None,
        rng: Rng | None = None,
    ) -> SentenceScores:
        """Score one sentence; train mode applies dropout and needs an rng."""
        if mode not in ("train", "infer"):
            raise ModelError(f"mode must be 'train' or 'infer', got {mode!r}")
        train = mode == "train"
        if train and rng is None:
            raise ModelError("train mode needs an rng for dropout")
        forms = [w.form for w in sentence.words]
        if not forms:
            raise ModelError("cannot score an empty sentence")
        n = len(forms)
        cfg = self.config
        dt = cfg.np_dtype

        parts: list[tuple[str, Value]] = []
        cle: Value | None = None
        if cfg.use_we:
            ids = self.word_vocab.ids(forms)
            if train and cfg.word_dropout > 0.0:
                ids = word_dropout(ids, cfg.word_dropout, rng)
            parts.append(("we", ad.embedding_lookup(self.params["we_table"], ids)))
        if cfg.use_pretrained:
            if pretrained is None:
                raise ModelError("config enables pretrained vectors but none were given")
            if pretrained.dim != cfg.pretrained_dim:
                raise ModelError(
                    f"pretrained table dim {pretrained.dim} != config {cfg.pretrained_dim}")
            parts.append(("pretrained", Value(pretrained.rows(forms).astype(dt))))
        if cfg.use_cle:
            cle = self.char_embedder.embed_words(forms)
            parts.append(("cle", cle))
        for name, dim in cfg.ctx_sources:
            if ctx is None or name not in ctx:
                raise EmbeddingError(f"context vectors missing for source {name!r}")
            block = np.asarray(ctx[name])
            if block.shape != (n, dim):
                raise EmbeddingError(
                    f"context source {name!r}: shape {block.shape} != ({n}, {dim})")
            parts.append((name, Value(block.astype(dt))))

        x = compose_input(parts)
        if train:
            x = ad.dropout(x, cfg.input_dropout, rng)
        for layer in range(cfg.shared_layers):
            x = self._bilstm(f"shared{layer}", x, cfg.shared_dim)
            if train:
                x = ad.dropout(x, cfg.hidden_dropout, rng)

        tag = self._bilstm("tagger", x, cfg.tagger_dim)
        if train:
            tag = ad.dropout(tag, cfg.hidden_dropout, rng)
        par = self._bilstm("parser", x, cfg.parser_dim)
        if train:
            par = ad.dropout(par, cfg.hidden_dropout, rng)

        def tag_head(prefix: str) -> Value:
            return ad.add_row(ad.matmul(tag, self.params[f"{prefix}_w"]),
                              self.params[f"{prefix}_b"])

        upos = tag_head("upos") if cfg.tag_upos else None
        xpos = tag_head("xpos") if cfg.tag_xpos else None
        feats = tag_head("feats") if cfg.tag_feats else None
        lemma = None
        if cfg.tag_lemma:
            lemma_in = ad.concat([tag, cle], axis=1) if cfg.use_cle else tag
            lemma = ad.add_row(ad.matmul(lemma_in, self.params["lemma_w"]),
                               self.params["lemma_b"])

        with_root = ad.concat([self.params["root_vec"], par], axis=0)
        arc_heads = ad.tanh(ad.add_row(ad.matmul(with_root, self.params["arc_head_w"]),
                                       self.params["arc_head_b"]))
        arc_deps = ad.tanh(ad.add_row(ad.matmul(par, self.params["arc_dep_w"]),
                                      self.params["arc_dep_b"]))
        # arc[h, d] = deps[d] . U . heads[h] + w . heads[h] + b
        arcs = ad.transpose(ad.matmul(ad.matmul(arc_deps, self.params["arc_u"]),
                                      ad.transpose(arc_heads)))
        arcs = ad.add_col(arcs, ad.matmul(arc_heads, self.params["arc_w"]))
        arcs = ad.add_scalar(arcs, self.params["arc_b"])
        if not np.all(np.isfinite(arcs.data)):
            raise ModelError("non-finite arc scores")

        lab_heads = ad.tanh(ad.add_row(ad.matmul(with_root, self.params["lab_head_w"]),
                                       self.params["lab_head_b"]))
        lab_deps = ad.tanh(ad.add_row(ad.matmul(par, self.params["lab_dep_w"]),
                                      self.params["lab_dep_b"]))
        ones_h = Value(np.ones((n + 1, 1), dtype=dt))
        ones_d = Value(np.ones((n, 1), dtype=dt))
        labels = ad.bilinear3(ad.concat([lab_heads, ones_h], axis=1), self.params["lab_u"],
                              ad.concat([lab_deps, ones_d], axis=1))
        return SentenceScores(upos=upos, xpos=xpos, feats=feats, lemma=lemma,
                              arc_scores=arcs, label_logits=labels)

    # --------------------------------------------------------------- loss

    def _gold_class(self, task: str, label: str) -> int:
        # unseen labels fold into the unknown class
        return self._label_index[task].get(label, 0)

    def loss(self, scores: SentenceScores, gold: Sentence) -> Value:
        """Sum of per-task mean cross-entropies for one gold sentence."""
        words = gold.words
        n = len(words)
        if scores.arc_scores.shape != (n + 1, n):
            raise ModelError(
                f"scores are for {scores.arc_scores.shape[1]} words, gold has {n}")
        cfg = self.config
        heads = []
        for w in words:
            if w.head is None:
                raise ModelError(f"gold word {w.id} has no head")
            if not 0 <= w.head <= n:
                raise ModelError(f"gold head {w.head} out of range for {n} words")
            heads.append(w.head)

        terms: list[Value] = []

        def term(logits: Value, ids, weight: float) -> None:
            ce = ad.softmax_cross_entropy(logits, ids)
            terms.append(ce if weight == 1.0 else ad.scale(ce, weight))

        if scores.upos is not None:
            term(scores.upos, [self._gold_class("upos", w.upos) for w in words],
                 cfg.weight_upos)
        if scores.xpos is not None:
            term(scores.xpos, [self._gold_class("xpos", w.xpos) for w in words],
                 cfg.weight_xpos)
        if scores.feats is not None:
            term(scores.feats, [self._gold_class("feats", w.feats_str) for w in words],
                 cfg.weight_feats)
        if scores.lemma is not None:
            classes = []
            for w in words:
                cid = self.inventory.class_id(w.form, w.lemma)
                if cid is None:
                    raise ModelError(
                        f"no edit script for {w.form!r} -> {w.lemma!r}; "
                        "the inventory must be built from the training data")
                classes.append(cid)
            term(scores.lemma, classes, cfg.weight_lemma)

        term(ad.transpose(scores.arc_scores), heads, cfg.weight_arc)
        gold_pair_logits = ad.gather_pairs(scores.label_logits, heads)
        term(gold_pair_logits, [self._gold_class("deprel", w.deprel) for w in words],
             cfg.weight_label)

        total = terms[0]
        for extra in terms[1:]:
            total = ad.add(total, extra)
        return total

    # ------------------------------------------------------------- decode

    def _pick(self, task: str, logits: np.ndarray) -> list[str]:
        # argmax over real classes only; ties resolve to the first, which
        # is the alphabetically smallest because label sets are sorted
        labels = {
            "upos": self.config.upos_labels,
            "xpos": self.config.xpos_labels,
            "feats": self.config.feats_labels,
        }[task]
        ids = np.argmax(logits[:, 1:], axis=1) + 1
        return [labels[i] for i in ids]

    def decode(self, sentence: Sentence, scores: SentenceScores) -> Sentence:
        """Fill predicted columns, preserving identity columns untouched."""
        words = sentence.words
        n = len(words)
        heads = mst_decode(scores.arc_scores.data.astype(np.float64))
        logits = scores.label_logits.data[:, :, 1:].astype(np.float64)
        labels = list(self.config.deprel_labels[1:])
        deprels = list(assign_labels(heads, logits, labels))
        # well-formedness: head 0 pairs with "root" and no other word may carry it
        if "root" in labels:
            root_class = labels.index("root")
            for j, head in enumerate(heads):
                if head == 0:
                    deprels[j] = "root"
                elif deprels[j] == "root" and len(labels) > 1:
                    row = logits[head, j].copy()
                    row[root_class] = -np.inf
                    deprels[j] = labels[int(np.argmax(row))]
        upos = self._pick("upos", scores.upos.data) if scores.upos is not None else ["_"] * n
        xpos = self._pick("xpos", scores.xpos.data) if scores.xpos is not None else ["_"] * n
        feats = self._pick("feats", scores.feats.data) if scores.feats is not None else ["_"] * n
        if scores.lemma is not None:
            classes = np.argmax(scores.lemma.data, axis=1)
            # a script can delete every character; columns must stay non-empty
            lemmas = [self.inventory.predict_lemma(int(c), w.form) or w.form
                      for c, w in zip(classes, words)]
        else:
            lemmas = ["_"] * n

        new_words = tuple(
            replace(
                w,
                upos=upos[i],
                xpos=xpos[i],
                feats=_feats_tuple(feats[i]),
                lemma=lemmas[i],
                head=int(heads[i]),
                deprel=deprels[i],
            )
            for i, w in enumerate(words)
        )
        return replace(sentence, words=new_words)


def _feats_tuple(feats: str) -> tuple[tuple[str, str | None], ...]:
    if feats == "_":
        return ()
    pairs = []
    for item in feats.split("|"):
        key, sep, value = item.partition("=")
        pairs.append((key, value if sep else None))
    return tuple(pairs)
