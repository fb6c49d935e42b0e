"""Train a tiny model and score its own predictions.

Walks the core Python API end to end: read a treebank, fit the joint
tagger-lemmatizer-parser on it, annotate a copy with every gold column
stripped, and print the full evaluation report.  The corpus is eight
sentences, so the model memorizes it within a few epochs; the point is
the plumbing, not the linguistics.
"""

import dataclasses
import io
import sys
from pathlib import Path

from udjoint import Sentence, Treebank, evaluate, predict, read_conllu, train
from udjoint.training import TrainConfig

DATA = Path(__file__).parent / "data" / "tiny.conllu"


def strip_annotations(tb: Treebank) -> Treebank:
    """Keep only tokenization; the model must fill everything else."""
    bare_sentences = []
    for sentence in tb.sentences:
        words = tuple(
            dataclasses.replace(w, lemma="_", upos="_", xpos="_", feats=(),
                                head=None, deprel="_")
            for w in sentence.words)
        bare_sentences.append(dataclasses.replace(sentence, words=words))
    return Treebank(sentences=tuple(bare_sentences), name=tb.name)


def main() -> None:
    gold = read_conllu(str(DATA), strict=True)
    print(f"corpus: {len(gold.sentences)} sentences, "
          f"{sum(len(s.words) for s in gold.sentences)} words")

    # small dimensions keep this comfortably under ten seconds on a laptop
    overrides = dict(
        we_dim=16, we_min_count=1, char_dim=8, cle_dim=8,
        shared_dim=16, tagger_dim=16, parser_dim=16, arc_dim=8, label_dim=8,
        input_dropout=0.0, hidden_dropout=0.0, word_dropout=0.0,
    )
    log = io.StringIO()
    model = train(gold, model_overrides=overrides,
                  config=TrainConfig(epochs=40, batch_size=2,
                                     learning_rate=0.02, seed=1),
                  log=log)
    first, last = log.getvalue().splitlines()[0], log.getvalue().splitlines()[-1]
    print(f"training loss: {first.split(chr(9))[1]} (epoch 1) -> "
          f"{last.split(chr(9))[1]} (epoch 40)")

    system = predict(strip_annotations(gold), model)
    report = evaluate(gold, system)
    print()
    print(report.table())


if __name__ == "__main__":
    sys.exit(main())
