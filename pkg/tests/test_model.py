"""Joint network: configuration, forward shapes, losses, decoding."""

import dataclasses

import numpy as np
import pytest

from gradcheck import finite_difference_check
from udjoint.autodiff import Rng, Value, softmax
from udjoint.conllu import Sentence, parse_conllu
from udjoint.decode import is_valid_tree
from udjoint.embeddings import EmbeddingError, load_pretrained
from udjoint.model import (
    UNK_LABEL,
    JointModel,
    ModelConfig,
    ModelError,
    SentenceScores,
    biaffine_score,
    config_from_treebank,
)

_ROWS = [
    ["1", "The", "the", "DET", "DT", "Definite=Def", "2", "det", "_", "_"],
    ["2", "cats", "cat", "NOUN", "NNS", "Number=Plur", "3", "nsubj", "_", "_"],
    ["3", "sat", "sit", "VERB", "VBD", "Tense=Past", "0", "root", "_", "_"],
    ["4", ".", ".", "PUNCT", ".", "_", "3", "punct", "_", "_"],
    [],
    ["1", "Dogs", "dog", "NOUN", "NNS", "Number=Plur", "2", "nsubj", "_", "_"],
    ["2", "bark", "bark", "VERB", "VBP", "Tense=Pres", "0", "root", "_", "_"],
    [],
]


def _treebank():
    return parse_conllu("\n".join("\t".join(row) for row in _ROWS))


_SMALL = dict(
    we_dim=4,
    we_min_count=1,
    char_dim=3,
    cle_dim=2,
    shared_dim=3,
    tagger_dim=3,
    parser_dim=3,
    arc_dim=3,
    label_dim=2,
    dtype="float64",
    seed=7,
)


def _small_model(**extra):
    cfg = config_from_treebank(_treebank(), **{**_SMALL, **extra})
    return JointModel(cfg)


# -------------------------------------------------------------- config

def test_config_from_treebank_derives_inventories():
    cfg = config_from_treebank(_treebank(), we_min_count=1)
    assert cfg.upos_labels == (UNK_LABEL, "DET", "NOUN", "PUNCT", "VERB")
    assert cfg.xpos_labels == (UNK_LABEL, ".", "DT", "NNS", "VBD", "VBP")
    assert cfg.deprel_labels == (UNK_LABEL, "det", "nsubj", "punct", "root")
    assert "_" in cfg.feats_labels
    assert "Number=Plur" in cfg.feats_labels
    assert cfg.word_vocab[0] == "The"
    assert set("catsDogbark.").issubset(set(cfg.char_vocab))
    assert cfg.lemma_scripts[0] == "C:l|P:|S:"
    assert cfg.tag_upos and cfg.tag_xpos and cfg.tag_feats and cfg.tag_lemma


def test_config_from_treebank_min_count_prunes_vocab():
    cfg = config_from_treebank(_treebank())  # default threshold 2
    assert cfg.word_vocab == ()
    kept = config_from_treebank(_treebank(), we_min_count=1)
    assert "cats" in kept.word_vocab


def test_config_from_treebank_deactivates_trivial_columns():
    bare = parse_conllu(
        "1\tfoo\t_\t_\t_\t_\t0\troot\t_\t_\n"
        "2\tbar\t_\t_\t_\t_\t1\tdep\t_\t_\n\n")
    cfg = config_from_treebank(bare, we_min_count=1)
    assert not cfg.tag_upos
    assert not cfg.tag_xpos
    assert not cfg.tag_feats
    assert not cfg.tag_lemma


def test_config_from_treebank_rejects_bad_overrides():
    with pytest.raises(ModelError, match="derived from the treebank"):
        config_from_treebank(_treebank(), upos_labels=("<unk>", "X"))
    with pytest.raises(ModelError, match="unknown config fields"):
        config_from_treebank(_treebank(), learning_rate=0.1)


def test_config_validation():
    with pytest.raises(ModelError, match="shared_dim"):
        ModelConfig(shared_dim=0)
    with pytest.raises(ModelError, match="at least one input source"):
        ModelConfig(use_we=False, use_cle=False)
    with pytest.raises(ModelError, match="pretrained_dim"):
        ModelConfig(use_pretrained=True, pretrained_dim=0)
    with pytest.raises(ModelError, match="canonical order"):
        ModelConfig(ctx_sources=(("elmo", 4), ("bert", 4)))
    with pytest.raises(ModelError, match="duplicate context source"):
        ModelConfig(ctx_sources=(("bert", 4), ("bert", 8)))
    with pytest.raises(ModelError, match="must start with"):
        ModelConfig(upos_labels=("NOUN",))
    with pytest.raises(ModelError, match="word_dropout"):
        ModelConfig(word_dropout=1.5)
    with pytest.raises(ModelError, match="dtype"):
        ModelConfig(dtype="float16")
    assert ModelConfig().input_dim == 64 + 512


# ------------------------------------------------------------- forward

def test_forward_shapes_single_word():
    model = _small_model()
    one = parse_conllu("1\tbark\tbark\tVERB\tVBP\t_\t0\troot\t_\t_\n\n").sentences[0]
    scores = model.forward(one)
    assert scores.arc_scores.shape == (2, 1)
    assert scores.upos.shape == (1, len(model.config.upos_labels))
    assert scores.label_logits.shape == (2, 1, len(model.config.deprel_labels))


def test_forward_shapes_full_sentence():
    model = _small_model()
    sent = _treebank().sentences[0]
    scores = model.forward(sent)
    n = len(sent.words)
    assert scores.arc_scores.shape == (n + 1, n)
    assert scores.xpos.shape == (n, len(model.config.xpos_labels))
    assert scores.feats.shape == (n, len(model.config.feats_labels))
    assert scores.lemma.shape == (n, len(model.config.lemma_scripts))
    assert scores.label_logits.shape == (n + 1, n, len(model.config.deprel_labels))
    assert np.all(np.isfinite(scores.arc_scores.data))


def test_infer_mode_is_deterministic():
    model = _small_model()
    sent = _treebank().sentences[0]
    a = model.forward(sent)
    b = model.forward(sent)
    np.testing.assert_array_equal(a.arc_scores.data, b.arc_scores.data)
    np.testing.assert_array_equal(a.upos.data, b.upos.data)
    np.testing.assert_array_equal(a.label_logits.data, b.label_logits.data)


def test_zero_biaffine_tensors_flatten_arc_scores():
    model = _small_model()
    for name in ("arc_u", "arc_w", "arc_b"):
        model.params[name].data[...] = 0.0
    sent = _treebank().sentences[0]
    scores = model.forward(sent)
    np.testing.assert_array_equal(scores.arc_scores.data, np.zeros((5, 4)))
    decoded = model.decode(sent, scores)
    assert is_valid_tree([w.head for w in decoded.words])


def test_arc_softmax_normalizes_over_candidate_heads():
    model = _small_model()
    sent = _treebank().sentences[0]
    scores = model.forward(sent)
    per_dependent = softmax(scores.arc_scores.data.T, axis=1)
    np.testing.assert_allclose(per_dependent.sum(axis=1), np.ones(4), atol=1e-6)


def test_forward_validates_inputs():
    model = _small_model()
    sent = _treebank().sentences[0]
    with pytest.raises(ModelError, match="mode"):
        model.forward(sent, "predict")
    with pytest.raises(ModelError, match="needs an rng"):
        model.forward(sent, "train")
    with pytest.raises(ModelError, match="empty sentence"):
        model.forward(Sentence(words=()))


def test_forward_requires_context_when_configured():
    model = _small_model(ctx_sources=(("bert", 6),))
    sent = _treebank().sentences[1]
    with pytest.raises(EmbeddingError, match="missing for source 'bert'"):
        model.forward(sent)
    with pytest.raises(EmbeddingError, match="shape"):
        model.forward(sent, ctx={"bert": np.zeros((2, 5))})
    good = model.forward(sent, ctx={"bert": np.ones((2, 6), dtype=np.float32)})
    other = model.forward(sent, ctx={"bert": np.zeros((2, 6), dtype=np.float32)})
    assert not np.array_equal(good.arc_scores.data, other.arc_scores.data)


def test_forward_requires_pretrained_when_configured(tmp_path):
    model = _small_model(use_pretrained=True, pretrained_dim=3)
    sent = _treebank().sentences[1]
    with pytest.raises(ModelError, match="pretrained"):
        model.forward(sent)
    (tmp_path / "v.txt").write_text("dogs 1 2 3\n", encoding="utf-8")
    table = load_pretrained(str(tmp_path / "v.txt"))
    scores = model.forward(sent, pretrained=table)
    assert scores.arc_scores.shape == (3, 2)
    (tmp_path / "w.txt").write_text("dogs 1 2\n", encoding="utf-8")
    with pytest.raises(ModelError, match="dim 2"):
        model.forward(sent, pretrained=load_pretrained(str(tmp_path / "w.txt")))


def test_word_dropout_replaces_ids_not_characters():
    # with CLE off, full word dropout must equal an all-unknown sentence
    model = _small_model(use_cle=False, word_dropout=1.0,
                         input_dropout=0.0, hidden_dropout=0.0)
    sent = _treebank().sentences[1]
    oov = parse_conllu(
        "1\tzzzz\tdog\tNOUN\tNNS\tNumber=Plur\t2\tnsubj\t_\t_\n"
        "2\tqqqq\tbark\tVERB\tVBP\tTense=Pres\t0\troot\t_\t_\n\n").sentences[0]
    dropped = model.forward(sent, "train", rng=Rng(3))
    unseen = model.forward(oov)
    np.testing.assert_allclose(dropped.upos.data, unseen.upos.data, rtol=1e-12)
    np.testing.assert_allclose(dropped.arc_scores.data, unseen.arc_scores.data, rtol=1e-12)


# ------------------------------------------------------------ biaffine

def test_biaffine_score_identity_and_single_cell():
    assert biaffine_score([1, 0], [0, 1], np.eye(2), [0, 0], 0.0) == 0.0
    assert biaffine_score([1, 0], [0, 1], [[0, 1], [0, 0]], [0, 0], 0.0) == 1.0
    assert biaffine_score([1, 2], [3, 4], np.zeros((2, 2)), [1, 1], 0.5) == 7.5


def test_biaffine_score_matches_double_sum_oracle():
    rng = np.random.Generator(np.random.PCG64(4)).normal
    for _ in range(20):
        h_dep, h_head, w = rng(size=8), rng(size=8), rng(size=8)
        u = rng(size=(8, 8))
        b = float(rng())
        by_loop = sum(h_dep[i] * u[i, j] * h_head[j] for i in range(8) for j in range(8))
        by_loop += sum(w[j] * h_head[j] for j in range(8)) + b
        assert abs(biaffine_score(h_dep, h_head, u, w, b) - by_loop) < 1e-6


def test_biaffine_score_rejects_bad_shapes():
    with pytest.raises(ModelError, match="1-D"):
        biaffine_score(np.zeros((2, 2)), [1, 2], np.eye(2), [0, 0], 0.0)
    with pytest.raises(ModelError, match="u shape"):
        biaffine_score([1, 2], [1, 2], np.eye(3), [0, 0], 0.0)
    with pytest.raises(ModelError, match="w shape"):
        biaffine_score([1, 2], [1, 2], np.eye(2), [0, 0, 0], 0.0)


# ---------------------------------------------------------------- loss

def _manual_scores(model, n, fill=0.0):
    cfg = model.config
    dt = cfg.np_dtype

    def logits(classes):
        return Value(np.full((n, classes), fill, dtype=dt))

    return SentenceScores(
        upos=logits(len(cfg.upos_labels)),
        xpos=logits(len(cfg.xpos_labels)),
        feats=logits(len(cfg.feats_labels)),
        lemma=logits(len(cfg.lemma_scripts)),
        arc_scores=Value(np.full((n + 1, n), fill, dtype=dt)),
        label_logits=Value(np.full((n + 1, n, len(cfg.deprel_labels)), fill, dtype=dt)),
    )


def test_loss_on_uniform_logits_is_sum_of_log_class_counts():
    model = _small_model()
    sent = _treebank().sentences[0]
    n = len(sent.words)
    loss = model.loss(_manual_scores(model, n), sent).data.item()
    cfg = model.config
    expected = sum(np.log(k) for k in (
        len(cfg.upos_labels), len(cfg.xpos_labels), len(cfg.feats_labels),
        len(cfg.lemma_scripts), n + 1, len(cfg.deprel_labels)))
    assert abs(loss - expected) < 1e-9


def test_loss_vanishes_when_gold_gets_all_probability():
    model = _small_model()
    sent = _treebank().sentences[0]
    n = len(sent.words)
    scores = _manual_scores(model, n)
    cfg = model.config
    for i, w in enumerate(sent.words):
        scores.upos.data[i, cfg.upos_labels.index(w.upos)] = 1e4
        scores.xpos.data[i, cfg.xpos_labels.index(w.xpos)] = 1e4
        scores.feats.data[i, cfg.feats_labels.index(w.feats_str)] = 1e4
        scores.lemma.data[i, model.inventory.class_id(w.form, w.lemma)] = 1e4
        scores.arc_scores.data[w.head, i] = 1e4
        scores.label_logits.data[w.head, i, cfg.deprel_labels.index(w.deprel)] = 1e4
    loss = model.loss(scores, sent).data.item()
    assert 0.0 <= loss < 1e-6


def test_loss_is_nonnegative_and_respects_task_weights():
    model = _small_model()
    sent = _treebank().sentences[0]
    base = model.loss(model.forward(sent), sent).data.item()
    assert base >= 0.0

    doubled = _small_model(weight_arc=2.0)
    for name, value in model.params.items():
        doubled.params[name].data[...] = value.data
    n = len(sent.words)
    arc_only = _manual_scores(model, n)
    plain = model.loss(arc_only, sent).data.item()
    heavier = doubled.loss(_manual_scores(doubled, n), sent).data.item()
    assert abs((heavier - plain) - np.log(n + 1)) < 1e-9


def test_loss_rejects_missing_or_out_of_range_heads():
    model = _small_model()
    sent = _treebank().sentences[0]
    scores = model.forward(sent)
    no_head = dataclasses.replace(
        sent, words=tuple(dataclasses.replace(w, head=None) for w in sent.words))
    with pytest.raises(ModelError, match="no head"):
        model.loss(scores, no_head)
    far = dataclasses.replace(
        sent,
        words=tuple(
            dataclasses.replace(w, head=9 if w.id == 1 else w.head) for w in sent.words),
    )
    with pytest.raises(ModelError, match="out of range"):
        model.loss(scores, far)
    short = dataclasses.replace(sent, words=sent.words[:2])
    with pytest.raises(ModelError, match="gold has 2"):
        model.loss(scores, short)


def test_joint_loss_gradients_match_finite_differences():
    model = _small_model()
    sent = _treebank().sentences[1]

    def build_loss():
        return model.loss(model.forward(sent), sent)

    worst = finite_difference_check(build_loss, model.params, np.float64, max_entries=4)
    assert worst < 1e-3


def test_permuting_label_sets_permutes_logits():
    model = _small_model()
    cfg = model.config
    flipped_labels = (UNK_LABEL,) + tuple(reversed(cfg.upos_labels[1:]))
    other = JointModel(dataclasses.replace(cfg, upos_labels=flipped_labels))
    for name, value in model.params.items():
        other.params[name].data[...] = value.data
    mapping = [cfg.upos_labels.index(lbl) for lbl in flipped_labels]
    other.params["upos_w"].data[...] = model.params["upos_w"].data[:, mapping]
    other.params["upos_b"].data[...] = model.params["upos_b"].data[:, mapping]

    sent = _treebank().sentences[0]
    ours = model.forward(sent)
    theirs = other.forward(sent)
    np.testing.assert_allclose(theirs.upos.data, ours.upos.data[:, mapping], rtol=1e-12)
    assert model.decode(sent, ours).words == other.decode(sent, theirs).words


# -------------------------------------------------------------- decode

def test_decode_keeps_root_label_and_head_consistent():
    model = _small_model()
    sent = _treebank().sentences[0]
    n = len(sent.words)
    cfg = model.config
    labels = cfg.deprel_labels
    root_col = labels.index("root")
    scores = _manual_scores(model, n)
    # push every word's argmax label to "root"; exactly one head can be 0
    scores.label_logits.data[:, :, root_col] = 5.0
    decoded = model.decode(sent, scores)
    for w in decoded.words:
        assert (w.head == 0) == (w.deprel == "root")
    assert sum(w.deprel == "root" for w in decoded.words) == 1
    # and the reverse: argmax never "root", but the tree root must carry it
    scores.label_logits.data[:, :, root_col] = -5.0
    decoded = model.decode(sent, scores)
    for w in decoded.words:
        assert (w.head == 0) == (w.deprel == "root")


def test_decode_fills_all_predicted_columns():
    model = _small_model()
    sent = _treebank().sentences[0]
    decoded = model.decode(sent, model.forward(sent))
    cfg = model.config
    assert is_valid_tree([w.head for w in decoded.words])
    for before, after in zip(sent.words, decoded.words):
        assert after.form == before.form
        assert after.id == before.id
        assert after.misc == before.misc
        assert after.upos in cfg.upos_labels[1:]
        assert after.xpos in cfg.xpos_labels[1:]
        assert after.deprel in cfg.deprel_labels[1:]
        assert after.feats_str in cfg.feats_labels[1:]
        assert after.lemma != ""
    assert decoded.comments == sent.comments
    assert decoded.multiword_tokens == sent.multiword_tokens


def test_decode_emits_underscore_for_inactive_heads():
    bare = parse_conllu(
        "1\tfoo\t_\t_\t_\t_\t2\tdep\t_\t_\n"
        "2\tbar\t_\t_\t_\t_\t0\troot\t_\t_\n\n")
    model = JointModel(config_from_treebank(bare, **{**_SMALL, "we_min_count": 1}))
    sent = bare.sentences[0]
    decoded = model.decode(sent, model.forward(sent))
    for word in decoded.words:
        assert word.upos == "_"
        assert word.xpos == "_"
        assert word.feats_str == "_"
        assert word.lemma == "_"
        assert word.deprel in ("dep", "root")
