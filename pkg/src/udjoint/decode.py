"""Maximum spanning arborescence decoding and label assignment.

Turns a matrix of arc scores into a valid dependency tree: every word gets
exactly one head, the structure is acyclic, and everything is reachable from
the artificial root (node 0).  Decoding runs Chu-Liu-Edmonds on the score
matrix; the single-root constraint is enforced by subtracting a constant
penalty from every root arc that is large enough to make any one-root tree
outscore any multi-root one, so a single unconstrained pass returns the
best tree with exactly one root child.

Scores use float64 internally regardless of input dtype; ties in the greedy
head choice go to the lowest head index, and label ties go to the
lexicographically smallest label string.
"""

from __future__ import annotations

import numpy as np

__all__ = ["mst_decode", "assign_labels", "is_valid_tree"]

# Forbidden arcs (self loops, arcs into root) get this score.  Finite so
# arithmetic stays NaN-free, but far below anything reachable by real scores.
_NEG = -1e18


def is_valid_tree(heads: list[int] | tuple[int, ...], single_root: bool = True) -> bool:
    """Check that ``heads`` encodes a tree rooted at node 0.

    ``heads[i]`` is the head of word ``i + 1`` and must lie in ``[0, n]``.
    Valid means: every word reaches node 0 by following heads (no cycles),
    and, when ``single_root`` is set, exactly one word has head 0.
    """
    n = len(heads)
    if n == 0:
        return False
    for h in heads:
        if not isinstance(h, (int, np.integer)) or not 0 <= h <= n:
            return False
    if single_root and sum(1 for h in heads if h == 0) != 1:
        return False
    for start in range(1, n + 1):
        seen = set()
        node = start
        while node != 0:
            if node in seen:
                return False
            seen.add(node)
            node = heads[node - 1]
    return True


def _find_cycle(heads: np.ndarray) -> list[int] | None:
    """Return one cycle in the head graph as a sorted node list, or None."""
    m = len(heads)
    color = [0] * m  # 0 new, 1 on current path, 2 finished
    for start in range(m):
        if color[start]:
            continue
        path: list[int] = []
        node = start
        while node != -1 and color[node] == 0:
            color[node] = 1
            path.append(node)
            node = int(heads[node])
        if node != -1 and color[node] == 1:
            cycle = path[path.index(node):]
            for v in path:
                color[v] = 2
            return sorted(cycle)
        for v in path:
            color[v] = 2
    return None


def _chu_liu_edmonds(score: np.ndarray) -> np.ndarray:
    """Maximum arborescence of a square score matrix rooted at node 0.

    ``score[h, d]`` is the score of arc h -> d; forbidden arcs hold _NEG.
    Returns the head of every node (-1 for the root).  Recursive cycle
    contraction; recursion depth is bounded by the node count because every
    contraction removes at least one node.
    """
    m = score.shape[0]
    heads = np.empty(m, dtype=np.int64)
    heads[0] = -1
    for d in range(1, m):
        heads[d] = int(np.argmax(score[:, d]))  # lowest index wins ties
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads

    in_cycle = set(cycle)
    rest = [v for v in range(m) if v not in in_cycle]  # keeps node 0 first
    k = len(rest)
    contracted = np.full((k + 1, k + 1), _NEG, dtype=score.dtype)
    for i, h in enumerate(rest):
        for j, d in enumerate(rest):
            if h != d:
                contracted[i, j] = score[h, d]

    # Arcs entering the cycle: breaking the cycle at entry point d costs the
    # in-cycle arc into d, so rank candidates by score[h, d] - score[hd, d].
    enter_at = np.full(k, -1, dtype=np.int64)
    for i, h in enumerate(rest):
        best_val, best_d = _NEG, -1
        for d in cycle:
            val = score[h, d] - score[heads[d], d]
            if val > best_val:
                best_val, best_d = val, d
        contracted[i, k] = best_val
        enter_at[i] = best_d

    # Arcs leaving the cycle: best in-cycle head for each outside node.
    leave_from = np.full(k, -1, dtype=np.int64)
    for j, d in enumerate(rest):
        if d == 0:
            continue
        best_val, best_h = _NEG, -1
        for h in cycle:
            if score[h, d] > best_val:
                best_val, best_h = score[h, d], h
        contracted[k, j] = best_val
        leave_from[j] = best_h

    sub = _chu_liu_edmonds(contracted)

    resolved = heads.copy()
    for j, d in enumerate(rest):
        if d == 0:
            continue
        h_new = int(sub[j])
        resolved[d] = leave_from[j] if h_new == k else rest[h_new]
    entry_head = rest[int(sub[k])]
    entry_dep = int(enter_at[int(sub[k])])
    resolved[entry_dep] = entry_head  # breaks the cycle; other members keep theirs
    return resolved


def mst_decode(arc_scores: np.ndarray, single_root: bool = True) -> list[int]:
    """Decode the highest-scoring dependency tree from an arc score matrix.

    ``arc_scores`` has shape (n+1, n): row h, column d-1 scores the arc from
    head h (0 = root) to word d.  Returns ``heads`` with ``heads[i]`` the
    head of word ``i + 1``.  With ``single_root`` the result has exactly one
    word attached to the root and maximizes total score among such trees;
    without it the unconstrained maximum arborescence is returned.
    """
    arc = np.asarray(arc_scores, dtype=np.float64)
    if arc.ndim != 2 or arc.shape[0] != arc.shape[1] + 1 or arc.shape[1] < 1:
        raise ValueError(f"arc score matrix must be (n+1, n) with n >= 1, got {arc.shape}")
    if not np.all(np.isfinite(arc)):
        raise ValueError("arc scores must be finite")

    n = arc.shape[1]
    square = np.full((n + 1, n + 1), _NEG, dtype=np.float64)
    square[:, 1:] = arc
    np.fill_diagonal(square, _NEG)  # no self arcs
    square[:, 0] = _NEG  # nothing points at the root

    if single_root and n > 1:
        # Subtracting this from every root arc makes any single-root tree beat
        # any multi-root one, while the ranking among single-root trees (each
        # paying the penalty exactly once) is untouched.
        penalty = n * float(arc.max() - arc.min()) + 1.0
        square[0, 1:] -= penalty

    heads = [int(h) for h in _chu_liu_edmonds(square)[1:]]
    if not is_valid_tree(heads, single_root=single_root):
        raise AssertionError(f"decoder produced an invalid tree: {heads}")
    return heads


def assign_labels(
    heads: list[int] | tuple[int, ...],
    label_logits: np.ndarray,
    labels: list[str] | tuple[str, ...],
) -> list[str]:
    """Pick a dependency label for every word given its decoded head.

    ``label_logits`` has shape (n+1, n, L): entry [h, d-1, l] scores label
    ``labels[l]`` for the arc h -> d.  Word i gets the argmax label of row
    ``label_logits[heads[i], i]``; exact ties resolve to the
    lexicographically smallest label string.
    """
    logits = np.asarray(label_logits)
    n = len(heads)
    if logits.ndim != 3 or logits.shape[0] != n + 1 or logits.shape[1] != n:
        raise ValueError(f"label logits must be (n+1, n, L) for {n} words, got {logits.shape}")
    if logits.shape[2] != len(labels):
        raise ValueError(f"{logits.shape[2]} label scores but {len(labels)} label names")

    out: list[str] = []
    for i, h in enumerate(heads):
        if not 0 <= h <= n:
            raise ValueError(f"head {h} of word {i + 1} outside [0, {n}]")
        row = logits[h, i]
        best = row.max()
        out.append(min(labels[j] for j in range(len(labels)) if row[j] == best))
    return out
