"""Reverse-mode automatic differentiation over dense numpy arrays.

A Value wraps an ndarray plus the closure that routes its gradient to
its parents.  Graphs are built eagerly by the op functions below and
freed when the loss goes out of scope; backward() walks the reachable
subgraph once in reverse topological order (iteratively, so recurrent
chains of any length are safe).

Shapes are explicit everywhere: the only implicit broadcasts are the
dedicated bias ops add_row / add_col / add_scalar.  Mixed float dtypes
are rejected; float32 is the training storage and float64 the
gradient-check test mode.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operands violate an op's shape or dtype contract."""


class Value:
    """A node in the computation graph.

    Leaves are created as Value(array); interior nodes carry their
    parents and a backward rule.  ``grad`` is allocated lazily on first
    accumulation and holds d(loss)/d(this node) after backward().
    """

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            raise ShapeError(f"Value requires float32/float64 data, got {self.data.dtype}")
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate(self, piece) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += piece

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        kind = "leaf" if not self._parents else "node"
        return f"Value({kind}, shape={self.data.shape}, dtype={self.data.dtype})"


def backward(loss: Value) -> None:
    """Populate grads of every Value reachable from a scalar loss.

    Repeated calls without zeroing accumulate, which is what mini-batch
    gradient summation relies on.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    order: list[Value] = []
    visited: set[int] = set()
    stack: list[tuple[Value, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node)


def _need_2d(value: Value, op: str) -> None:
    if value.data.ndim != 2:
        raise ShapeError(f"{op} needs a 2-D operand, got shape {value.data.shape}")


def _same_dtype(a: Value, b: Value, op: str) -> None:
    if a.data.dtype != b.data.dtype:
        raise ShapeError(f"{op} dtype mismatch: {a.data.dtype} vs {b.data.dtype}")


def add(a: Value, b: Value) -> Value:
    """Elementwise sum of same-shape operands."""
    _same_dtype(a, b, "add")
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")

    def rule(out):
        a.accumulate(out.grad)
        b.accumulate(out.grad)

    return Value(a.data + b.data, (a, b), rule)


def mul(a: Value, b: Value) -> Value:
    """Elementwise product of same-shape operands."""
    _same_dtype(a, b, "mul")
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")

    def rule(out):
        a.accumulate(out.grad * b.data)
        b.accumulate(out.grad * a.data)

    return Value(a.data * b.data, (a, b), rule)


def scale(a: Value, factor: float, offset: float = 0.0) -> Value:
    """factor * a + offset with python scalars."""

    def rule(out):
        a.accumulate(out.grad * factor)

    return Value(factor * a.data + offset, (a,), rule)


def matmul(a: Value, b: Value) -> Value:
    """(m,k) @ (k,n) -> (m,n)."""
    _need_2d(a, "matmul")
    _need_2d(b, "matmul")
    _same_dtype(a, b, "matmul")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")

    def rule(out):
        a.accumulate(out.grad @ b.data.T)
        b.accumulate(a.data.T @ out.grad)

    return Value(a.data @ b.data, (a, b), rule)


def transpose(a: Value) -> Value:
    _need_2d(a, "transpose")

    def rule(out):
        a.accumulate(out.grad.T)

    return Value(a.data.T.copy(), (a,), rule)


def concat(values: list[Value], axis: int) -> Value:
    """Concatenate 2-D operands along axis 0 or 1."""
    if axis not in (0, 1):
        raise ShapeError(f"concat axis must be 0 or 1, got {axis}")
    if not values:
        raise ShapeError("concat of no operands")
    for value in values:
        _need_2d(value, "concat")
        _same_dtype(values[0], value, "concat")
        other = 1 - axis
        if value.data.shape[other] != values[0].data.shape[other]:
            raise ShapeError(
                f"concat shape mismatch on axis {axis}: "
                f"{value.data.shape} vs {values[0].data.shape}"
            )
    sizes = [value.data.shape[axis] for value in values]
    offsets = np.cumsum([0] + sizes)

    def rule(out):
        for value, start, stop in zip(values, offsets, offsets[1:]):
            piece = out.grad[start:stop] if axis == 0 else out.grad[:, start:stop]
            value.accumulate(piece)

    return Value(np.concatenate([v.data for v in values], axis=axis), tuple(values), rule)


def slice_cols(a: Value, start: int, stop: int) -> Value:
    _need_2d(a, "slice_cols")
    if not 0 <= start <= stop <= a.data.shape[1]:
        raise ShapeError(f"slice_cols [{start}:{stop}] out of range for {a.data.shape}")

    def rule(out):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[:, start:stop] += out.grad

    return Value(a.data[:, start:stop].copy(), (a,), rule)


def slice_rows(a: Value, start: int, stop: int) -> Value:
    _need_2d(a, "slice_rows")
    if not 0 <= start <= stop <= a.data.shape[0]:
        raise ShapeError(f"slice_rows [{start}:{stop}] out of range for {a.data.shape}")

    def rule(out):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[start:stop] += out.grad

    return Value(a.data[start:stop].copy(), (a,), rule)


def add_row(m: Value, row: Value) -> Value:
    """Add a (1,n) bias row to every row of (m,n)."""
    _need_2d(m, "add_row")
    _need_2d(row, "add_row")
    _same_dtype(m, row, "add_row")
    if row.data.shape != (1, m.data.shape[1]):
        raise ShapeError(f"add_row bias {row.data.shape} does not fit {m.data.shape}")

    def rule(out):
        m.accumulate(out.grad)
        row.accumulate(out.grad.sum(axis=0, keepdims=True))

    return Value(m.data + row.data, (m, row), rule)


def add_col(m: Value, col: Value) -> Value:
    """Add an (m,1) bias column to every column of (m,n)."""
    _need_2d(m, "add_col")
    _need_2d(col, "add_col")
    _same_dtype(m, col, "add_col")
    if col.data.shape != (m.data.shape[0], 1):
        raise ShapeError(f"add_col bias {col.data.shape} does not fit {m.data.shape}")

    def rule(out):
        m.accumulate(out.grad)
        col.accumulate(out.grad.sum(axis=1, keepdims=True))

    return Value(m.data + col.data, (m, col), rule)


def add_scalar(m: Value, s: Value) -> Value:
    """Add a (1,1) learned scalar to every entry of (m,n)."""
    _need_2d(m, "add_scalar")
    _same_dtype(m, s, "add_scalar")
    if s.data.shape != (1, 1):
        raise ShapeError(f"add_scalar expects a (1,1) operand, got {s.data.shape}")

    def rule(out):
        m.accumulate(out.grad)
        s.accumulate(out.grad.sum().reshape(1, 1))

    return Value(m.data + s.data, (m, s), rule)


def rowsum(m: Value) -> Value:
    """Sum each row: (m,n) -> (m,1)."""
    _need_2d(m, "rowsum")

    def rule(out):
        m.accumulate(out.grad)  # (m,1) broadcasts across the row

    return Value(m.data.sum(axis=1, keepdims=True), (m,), rule)


def vsum(a: Value) -> Value:
    """Sum of all entries as a (1,1) scalar."""

    def rule(out):
        a.accumulate(out.grad.reshape(()))

    return Value(a.data.sum().reshape(1, 1), (a,), rule)


def tanh(a: Value) -> Value:
    data = np.tanh(a.data)

    def rule(out):
        a.accumulate(out.grad * (1.0 - data * data))

    return Value(data, (a,), rule)


def sigmoid(a: Value) -> Value:
    # Stable in both tails; each exponential only sees its safe half-line.
    positive = a.data >= 0
    data = np.empty_like(a.data)
    data[positive] = 1.0 / (1.0 + np.exp(-a.data[positive]))
    grown = np.exp(a.data[~positive])
    data[~positive] = grown / (1.0 + grown)

    def rule(out):
        a.accumulate(out.grad * data * (1.0 - data))

    return Value(data, (a,), rule)


def relu(a: Value) -> Value:
    mask = a.data > 0

    def rule(out):
        a.accumulate(out.grad * mask)

    return Value(np.where(mask, a.data, 0.0).astype(a.data.dtype), (a,), rule)


def embedding_lookup(table: Value, ids) -> Value:
    """Select rows of (V,d) by integer ids -> (len(ids), d)."""
    _need_2d(table, "embedding_lookup")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"embedding_lookup ids must be 1-D, got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(
            f"embedding_lookup id out of range for table with {table.data.shape[0]} rows"
        )

    def rule(out):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids, out.grad)

    return Value(table.data[ids], (table,), rule)


def dropout(a: Value, p: float, rng: "Rng") -> Value:
    """Inverted dropout: keep with probability 1-p, scale kept by 1/(1-p).

    p == 0 is the identity (the same node is returned); inference paths
    simply do not apply the op.
    """
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return a
    keep = (rng.generator.random(a.data.shape) >= p).astype(a.data.dtype)
    mask = keep / np.asarray(1.0 - p, dtype=a.data.dtype)

    def rule(out):
        a.accumulate(out.grad * mask)

    return Value(a.data * mask, (a,), rule)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Plain-array softmax (shared by the loss and by decoding/tests)."""
    shifted = x - x.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits: Value, gold_ids) -> Value:
    """Mean cross-entropy of gold rows under row-wise softmax: (m,k) -> (1,1)."""
    _need_2d(logits, "softmax_cross_entropy")
    gold = np.asarray(gold_ids, dtype=np.int64)
    m, k = logits.data.shape
    if gold.shape != (m,):
        raise ShapeError(
            f"softmax_cross_entropy gold shape {gold.shape} does not match {m} rows"
        )
    if m == 0:
        raise ShapeError("softmax_cross_entropy on zero rows")
    if gold.min() < 0 or gold.max() >= k:
        raise ShapeError(f"gold id out of range for {k} classes")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax
    picked = z[np.arange(m), gold][:, None]
    loss = (lse - picked).sum() / m

    def rule(out):
        probs = softmax(z, axis=1)
        probs[np.arange(m), gold] -= 1.0
        logits.accumulate(out.grad.reshape(()) * probs / m)

    return Value(np.asarray(loss, dtype=z.dtype).reshape(1, 1), (logits,), rule)


def bilinear3(heads: Value, u3: Value, deps: Value) -> Value:
    """Per-class bilinear forms: (h,d), (L,d,e), (n,e) -> (h,n,L).

    out[h,n,l] = heads[h] . u3[l] . deps[n]; the one 3-D op in the
    engine, used for labeled-arc scoring.
    """
    _need_2d(heads, "bilinear3")
    _need_2d(deps, "bilinear3")
    _same_dtype(heads, deps, "bilinear3")
    _same_dtype(heads, u3, "bilinear3")
    if u3.data.ndim != 3:
        raise ShapeError(f"bilinear3 needs a 3-D tensor, got shape {u3.data.shape}")
    if u3.data.shape[1] != heads.data.shape[1] or u3.data.shape[2] != deps.data.shape[1]:
        raise ShapeError(
            f"bilinear3 shape mismatch: {heads.data.shape} x {u3.data.shape} x {deps.data.shape}"
        )

    def rule(out):
        g = out.grad
        heads.accumulate(np.einsum("hnl,lde,ne->hd", g, u3.data, deps.data, optimize=True))
        u3.accumulate(np.einsum("hd,hnl,ne->lde", heads.data, g, deps.data, optimize=True))
        deps.accumulate(np.einsum("hd,lde,hnl->ne", heads.data, u3.data, g, optimize=True))

    # optimize=True turns the contraction into BLAS calls; the naive path
    # is quintic and dominates sentence cost for any realistic label set
    data = np.einsum("hd,lde,ne->hnl", heads.data, u3.data, deps.data, optimize=True)
    return Value(data, (heads, u3, deps), rule)


def gather_pairs(t3: Value, row_ids) -> Value:
    """Select out[j] = t3[row_ids[j], j, :] from (h,n,L) -> (n,L)."""
    if t3.data.ndim != 3:
        raise ShapeError(f"gather_pairs needs a 3-D operand, got shape {t3.data.shape}")
    rows = np.asarray(row_ids, dtype=np.int64)
    h, n, _ = t3.data.shape
    if rows.shape != (n,):
        raise ShapeError(f"gather_pairs ids shape {rows.shape} does not match {n} columns")
    if rows.size and (rows.min() < 0 or rows.max() >= h):
        raise ShapeError(f"gather_pairs row id out of range for {h} rows")
    cols = np.arange(n)

    def rule(out):
        if t3.grad is None:
            t3.grad = np.zeros_like(t3.data)
        np.add.at(t3.grad, (rows, cols), out.grad)

    return Value(t3.data[rows, cols, :], (t3,), rule)


class Rng:
    """Deterministic random source: numpy PCG64 under an explicit seed.

    Identical seeds yield identical streams on every platform numpy
    supports; all randomness in the package flows through instances of
    this class.
    """

    algorithm = "numpy-pcg64"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))


def glorot_uniform(rng: Rng, shape: tuple[int, ...], dtype) -> np.ndarray:
    """Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).

    For 3-D tensors the leading axis is treated as independent slices.
    """
    if len(shape) == 2:
        fan_in, fan_out = shape
    elif len(shape) == 3:
        fan_in, fan_out = shape[1], shape[2]
    else:
        raise ShapeError(f"glorot_uniform expects 2-D or 3-D shape, got {shape}")
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.generator.uniform(-limit, limit, size=shape).astype(dtype)
