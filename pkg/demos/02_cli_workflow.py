"""Drive the command-line interface: train, predict, evaluate, analyze.

Shows the same pipeline a shell user would run, including how the
subcommands compose (predictions feed straight into the scorer) and
what the exit codes mean.  Everything happens in a temporary directory;
the input file is never modified.
"""

import sys
import tempfile
from pathlib import Path

from udjoint.cli import run

DATA = Path(__file__).parent / "data" / "tiny.conllu"


def call(argv: list[str]) -> int:
    print(f"$ udjoint {' '.join(argv)}")
    code = run(argv)
    print(f"  -> exit {code}\n")
    return code


def main() -> int:
    with tempfile.TemporaryDirectory() as work:
        model = str(Path(work) / "tiny.model")
        predictions = str(Path(work) / "predictions.conllu")

        fast = ["--set", "epochs=40", "--set", "batch_size=2",
                "--set", "learning_rate=0.02", "--set", "we_min_count=1",
                "--set", "we_dim=16", "--set", "char_dim=8", "--set", "cle_dim=8",
                "--set", "shared_dim=16", "--set", "tagger_dim=16",
                "--set", "parser_dim=16", "--set", "arc_dim=8",
                "--set", "label_dim=8", "--set", "input_dropout=0",
                "--set", "hidden_dropout=0", "--set", "word_dropout=0"]
        if call(["train", "--train", str(DATA), "--model", model, *fast]):
            return 1
        if call(["predict", "--model", model, "--input", str(DATA),
                 "--output", predictions]):
            return 1
        if call(["evaluate", "--gold", str(DATA), "--system", predictions]):
            return 1

        # closed-form comparison arithmetic: how much of the baseline's
        # remaining error does the improved score remove?
        if call(["analyze", "--baseline", "96.39", "--improved", "97.00"]):
            return 1

        # a missing input is a data error: exit code 2, path in the message
        assert call(["predict", "--model", model,
                     "--input", str(Path(work) / "missing.conllu"),
                     "--output", "-"]) == 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
