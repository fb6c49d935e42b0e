"""Test harness setup: make the repository's shared test utilities importable.

The synthetic treebank generator lives with the consumer package's tests;
the exporter package itself never imports the consumer — only this harness
does, to check the cross-package contracts.
"""

import pathlib
import sys

_REPO_TESTS = pathlib.Path(__file__).resolve().parents[2] / "tests"
if str(_REPO_TESTS) not in sys.path:
    sys.path.insert(0, str(_REPO_TESTS))
