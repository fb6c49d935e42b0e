"""Tree decoding tests against a brute-force enumeration oracle."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from udjoint.decode import assign_labels, is_valid_tree, mst_decode


def _tree_ok(heads: tuple[int, ...], single_root: bool) -> bool:
    # Independent validity check: every word walks to the root, no repeats.
    n = len(heads)
    if single_root and heads.count(0) != 1:
        return False
    for start in range(1, n + 1):
        node, steps = start, 0
        while node != 0:
            node = heads[node - 1]
            steps += 1
            if steps > n:
                return False
    return True


_ASSIGNMENTS: dict[tuple[int, bool], np.ndarray] = {}


def _valid_assignments(n: int, single_root: bool) -> np.ndarray:
    key = (n, single_root)
    if key not in _ASSIGNMENTS:
        rows = [h for h in itertools.product(range(n + 1), repeat=n) if _tree_ok(h, single_root)]
        _ASSIGNMENTS[key] = np.array(rows, dtype=np.int64)
    return _ASSIGNMENTS[key]


def oracle_best_score(arc: np.ndarray, single_root: bool = True) -> float:
    n = arc.shape[1]
    assignments = _valid_assignments(n, single_root)
    totals = arc[assignments, np.arange(n)].sum(axis=1)
    return float(totals.max())


def _tree_score(arc: np.ndarray, heads: list[int]) -> float:
    return float(sum(arc[h, d] for d, h in enumerate(heads)))


def test_single_word_sentence():
    assert mst_decode(np.array([[3.0], [0.0]])) == [0]


def test_two_word_example():
    # 0->1 = 10, 0->2 = 4, 1->2 = 5, 2->1 = 3; best one-root tree is 10 + 5.
    arc = np.array([[10.0, 4.0], [0.0, 5.0], [3.0, 0.0]])
    heads = mst_decode(arc, single_root=True)
    assert heads == [0, 1]
    assert _tree_score(arc, heads) == 15.0


def test_strong_second_root_arc_wins():
    # Greedy root attachment would keep 0->1 (10) and score only 10 total;
    # the true optimum routes through word 2: 0->2 (9.5) plus 2->1 (9).
    arc = np.array([[10.0, 9.5], [0.0, 0.0], [9.0, 0.0]])
    heads = mst_decode(arc, single_root=True)
    assert heads == [2, 0]
    assert _tree_score(arc, heads) == pytest.approx(18.5)


def test_cycle_contraction():
    # Words 1 and 2 prefer each other, forcing a cycle contraction pass.
    arc = np.array(
        [
            [5.0, 4.0, 1.0],
            [0.0, 20.0, 2.0],
            [20.0, 0.0, 3.0],
            [0.0, 0.0, 0.0],
        ]
    )
    heads = mst_decode(arc, single_root=True)
    assert is_valid_tree(heads, single_root=True)
    assert _tree_score(arc, heads) == pytest.approx(oracle_best_score(arc, True))


def test_unconstrained_allows_multiple_roots():
    arc = np.array([[10.0, 10.0], [0.0, 1.0], [1.0, 0.0]])
    heads = mst_decode(arc, single_root=False)
    assert heads == [0, 0]
    assert _tree_score(arc, heads) == pytest.approx(oracle_best_score(arc, False))
    constrained = mst_decode(arc, single_root=True)
    assert _tree_score(arc, constrained) == pytest.approx(11.0)


def test_thousand_random_instances_match_exhaustive_maximum():
    rng = np.random.default_rng(20180731)
    for case in range(1000):
        n = case % 5 + 1
        arc = rng.uniform(-10.0, 10.0, size=(n + 1, n))
        heads = mst_decode(arc, single_root=True)
        assert is_valid_tree(heads, single_root=True)
        assert _tree_score(arc, heads) == pytest.approx(oracle_best_score(arc, True), abs=1e-9)


def test_score_shift_leaves_tree_unchanged():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        arc = rng.uniform(-5.0, 5.0, size=(n + 1, n))
        assert mst_decode(arc) == mst_decode(arc + 7.25)
        assert mst_decode(arc, single_root=False) == mst_decode(arc + 7.25, single_root=False)


def test_all_equal_scores_decode_deterministically():
    arc = np.zeros((4, 3))
    first = mst_decode(arc, single_root=True)
    assert first == mst_decode(arc, single_root=True)
    assert is_valid_tree(first, single_root=True)
    assert _tree_score(arc, first) == pytest.approx(oracle_best_score(arc, True))


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=4),
    data=st.data(),
    single_root=st.booleans(),
)
def test_decoded_score_equals_oracle(n, data, single_root):
    raw = data.draw(
        hnp.arrays(np.int64, (n + 1, n), elements=st.integers(min_value=-50, max_value=50))
    )
    arc = raw.astype(np.float64)
    heads = mst_decode(arc, single_root=single_root)
    assert is_valid_tree(heads, single_root=single_root)
    assert _tree_score(arc, heads) == oracle_best_score(arc, single_root)


def test_rejects_malformed_scores():
    with pytest.raises(ValueError):
        mst_decode(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        mst_decode(np.zeros((2, 0)))
    bad = np.zeros((3, 2))
    bad[1, 1] = np.nan
    with pytest.raises(ValueError):
        mst_decode(bad)
    bad[1, 1] = np.inf
    with pytest.raises(ValueError):
        mst_decode(bad)


def test_is_valid_tree():
    assert is_valid_tree([0])
    assert is_valid_tree([2, 0])
    assert is_valid_tree([0, 1, 2])
    assert not is_valid_tree([])
    assert not is_valid_tree([0, 0])  # two root children
    assert is_valid_tree([0, 0], single_root=False)
    assert not is_valid_tree([2, 1])  # 1 <-> 2 cycle
    assert not is_valid_tree([0, 2])  # self loop on word 2
    assert not is_valid_tree([3, 0])  # head out of range
    assert not is_valid_tree([0, 3, 2])  # 2 <-> 3 cycle off the root path


def test_assign_labels_single_class():
    logits = np.random.default_rng(0).normal(size=(3, 2, 1))
    assert assign_labels([0, 1], logits, ("dep",)) == ["dep", "dep"]


def test_assign_labels_tie_goes_to_smallest_label():
    logits = np.zeros((3, 2, 3))
    labels = ("nsubj", "obj", "advmod")
    assert assign_labels([0, 1], logits, labels) == ["advmod", "advmod"]


def test_assign_labels_matches_loop_oracle():
    rng = np.random.default_rng(99)
    labels = ("acl", "amod", "nsubj", "obj", "root")
    for _ in range(50):
        n = int(rng.integers(1, 7))
        logits = rng.normal(size=(n + 1, n, len(labels)))
        heads = mst_decode(rng.uniform(-1, 1, size=(n + 1, n)))
        expect = []
        for i, h in enumerate(heads):
            best_j = 0
            for j in range(1, len(labels)):
                better = logits[h, i, j] > logits[h, i, best_j]
                tied = logits[h, i, j] == logits[h, i, best_j]
                if better or (tied and labels[j] < labels[best_j]):
                    best_j = j
            expect.append(labels[best_j])
        assert assign_labels(heads, logits, labels) == expect


def test_assign_labels_validates_shapes():
    with pytest.raises(ValueError):
        assign_labels([0, 1], np.zeros((3, 2)), ("a",))
    with pytest.raises(ValueError):
        assign_labels([0, 1], np.zeros((2, 2, 1)), ("a",))
    with pytest.raises(ValueError):
        assign_labels([0, 1], np.zeros((3, 2, 2)), ("a",))
    with pytest.raises(ValueError):
        assign_labels([0, 5], np.zeros((3, 2, 1)), ("a",))
