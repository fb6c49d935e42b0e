"""Feed frozen contextual vectors into training through the CTXE format.

External encoders (BERT-style models, for instance) run once, offline,
and leave behind one fixed vector per word.  This demo fakes that step
with random vectors, writes them in the CTXE binary format, and shows
the model consuming them: the input layer widens by the declared
dimension, and the vectors themselves are never updated.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from udjoint import read_conllu, read_ctxe, train, write_ctxe
from udjoint.training import TrainConfig

DATA = Path(__file__).parent / "data" / "tiny.conllu"


def main() -> None:
    tb = read_conllu(str(DATA), strict=True)
    dim = 32
    rng = np.random.default_rng(0)

    with tempfile.TemporaryDirectory() as work:
        path = str(Path(work) / "fake-bert.ctxe")
        write_ctxe(path, [rng.normal(size=(len(s.words), dim)).astype(np.float32)
                          for s in tb.sentences], dim=dim)
        vectors = read_ctxe(path, source="bert")
        print(f"wrote {len(vectors)} sentence blocks of dimension {vectors.dim}")

        overrides = dict(
            we_dim=16, we_min_count=1, char_dim=8, cle_dim=8,
            shared_dim=16, tagger_dim=16, parser_dim=16, arc_dim=8,
            label_dim=8, input_dropout=0.0, hidden_dropout=0.0,
            word_dropout=0.0,
        )
        before = [block.tobytes() for block in vectors.sentences]
        model = train(tb, model_overrides=overrides,
                      config=TrainConfig(epochs=5, batch_size=2, seed=1),
                      ctx_train={"bert": vectors})
        after = [block.tobytes() for block in vectors.sentences]

        print(f"model input width: {model.config.input_dim} "
              f"(word {model.config.we_dim} + char {2 * model.config.cle_dim} "
              f"+ context {dim})")
        print(f"context source declared in config: {model.config.ctx_sources}")
        print("vectors untouched by training:", before == after)


if __name__ == "__main__":
    sys.exit(main())
