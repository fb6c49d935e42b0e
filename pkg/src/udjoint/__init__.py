"""udjoint: joint POS tagging, lemmatization, and dependency parsing.

A trainable analyzer for Universal Dependencies treebanks: one network
predicts UPOS, XPOS, morphological features, lemmas (as edit-script
classes), and labeled dependency trees, built on a small reverse-mode
autodiff engine over numpy arrays.  The package also ships a faithful
reimplementation of the CoNLL 2018 shared-task evaluation metrics and
the relative-error-reduction arithmetic used to compare systems.

Modules
-------
conllu
    CoNLL-U parsing, validation, serialization (byte-exact round trip).
lemma_scripts
    Lemma edit scripts: induction, application, inventory building.
autodiff
    Reverse-mode automatic differentiation over dense numpy arrays.
embeddings
    Vocabulary, pretrained vector tables, character-level embeddings,
    frozen contextual vectors, and input composition.
ctxe
    The CTXE binary format for frozen per-word contextual vectors.
model
    The joint network: shared BiLSTM stack, tagging/lemmatizer branch,
    parser branch with biaffine scoring, and the multi-task loss.
decode
    Chu-Liu-Edmonds maximum spanning arborescence decoding and label
    assignment.
checkpoint
    Versioned binary model checkpoints (exact round trip).
training
    Mini-batch Adam training loop, dev-based model selection, prediction.
metrics
    CoNLL 2018 evaluation metrics (Tokens .. BLEX), macro-averaging, and
    relative error reduction.
cli
    The ``udjoint`` command: train / predict / evaluate / analyze.
"""

from udjoint.checkpoint import CheckpointError, load_model, save_model
from udjoint.conllu import (
    ConlluError,
    MultiwordToken,
    ParseError,
    Sentence,
    Treebank,
    Word,
    parse_conllu,
    read_conllu,
    serialize_conllu,
    write_conllu,
)
from udjoint.ctxe import ContextVectors, CtxFormatError, read_ctxe, write_ctxe
from udjoint.decode import assign_labels, is_valid_tree, mst_decode
from udjoint.embeddings import (
    EmbeddingError,
    PretrainedTable,
    Vocab,
    build_char_vocab,
    build_vocab,
    load_pretrained,
)
from udjoint.lemma_scripts import (
    EditScript,
    ScriptError,
    ScriptInventory,
    apply_script,
    build_inventory,
    encode_script,
    decode_script,
    induce_script,
    inventory_from_encodings,
)
from udjoint.metrics import (
    EvalReport,
    EvaluationError,
    evaluate,
    format_score,
    macro_average,
    relative_error_reduction,
)
from udjoint.model import JointModel, ModelConfig, ModelError, config_from_treebank
from udjoint.training import TrainConfig, TrainError, predict, train

__all__ = [
    "CheckpointError",
    "ConlluError",
    "ContextVectors",
    "CtxFormatError",
    "EmbeddingError",
    "EvalReport",
    "EvaluationError",
    "JointModel",
    "EditScript",
    "ScriptError",
    "ModelConfig",
    "ModelError",
    "MultiwordToken",
    "ParseError",
    "PretrainedTable",
    "ScriptInventory",
    "Sentence",
    "TrainConfig",
    "TrainError",
    "Treebank",
    "Vocab",
    "Word",
    "apply_script",
    "assign_labels",
    "build_char_vocab",
    "build_inventory",
    "build_vocab",
    "config_from_treebank",
    "evaluate",
    "format_score",
    "encode_script",
    "decode_script",
    "induce_script",
    "inventory_from_encodings",
    "is_valid_tree",
    "load_model",
    "load_pretrained",
    "macro_average",
    "mst_decode",
    "parse_conllu",
    "predict",
    "read_conllu",
    "read_ctxe",
    "relative_error_reduction",
    "save_model",
    "serialize_conllu",
    "train",
    "write_conllu",
    "write_ctxe",
]

__version__ = "0.1.0"
