"""Mini-batch training loop and whole-treebank prediction.

The loop owns an Adam optimizer with global-norm clipping, groups
sentences into length-sorted batches whose order reshuffles each epoch,
and tracks a dev metric for model selection: the best-dev parameters
are what training returns (the last epoch's when no dev set is given).
All randomness comes from the seed in TrainConfig; equal seeds give
bit-identical parameters and predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import IO

import numpy as np

from .autodiff import Rng, Value, backward, scale
from .checkpoint import save_model
from .conllu import Sentence, Treebank
from .ctxe import ContextVectors
from .embeddings import PretrainedTable, canonical_ctx_order
from .metrics import evaluate
from .model import JointModel, config_from_treebank

__all__ = ["TrainConfig", "TrainError", "train", "predict", "clip_gradients", "AdamOptimizer"]


class TrainError(RuntimeError):
    """Training cannot proceed (bad setup or diverged loss)."""


@dataclass(frozen=True, slots=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    decay: float = 0.5
    patience: int = 2
    clip_norm: float = 5.0
    max_len: int = 128
    dev_metric: str = "las"
    checkpoint_path: str = ""
    seed: int = 42

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate < 0.0:
            raise TrainError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.decay <= 1.0:
            raise TrainError(f"decay must be in [0, 1], got {self.decay}")
        for name in ("beta1", "beta2"):
            beta = getattr(self, name)
            if not 0.0 <= beta < 1.0:
                raise TrainError(f"{name} must be in [0, 1), got {beta}")
        if self.epsilon <= 0.0:
            raise TrainError(f"epsilon must be positive, got {self.epsilon}")
        if self.clip_norm <= 0.0:
            raise TrainError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.patience < 1:
            raise TrainError(f"patience must be positive, got {self.patience}")
        if self.max_len < 1:
            raise TrainError(f"max_len must be positive, got {self.max_len}")
        if self.dev_metric not in ("las", "upos"):
            raise TrainError(f"dev_metric must be 'las' or 'upos', got {self.dev_metric!r}")


def clip_gradients(params: dict[str, Value], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the pre-clip norm.  Parameters without gradients are skipped.
    """
    total = 0.0
    for value in params.values():
        if value.grad is not None:
            total += float(np.sum(value.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for value in params.values():
            if value.grad is not None:
                value.grad *= factor
    return norm


class AdamOptimizer:
    """Adaptive-moment updates over a flat parameter dict."""

    def __init__(self, params: dict[str, Value], beta1: float = 0.9,
                 beta2: float = 0.99, epsilon: float = 1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.steps = 0
        self._m = {k: np.zeros_like(v.data, dtype=np.float64) for k, v in params.items()}
        self._v = {k: np.zeros_like(v.data, dtype=np.float64) for k, v in params.items()}

    def step(self, learning_rate: float) -> None:
        self.steps += 1
        correct1 = 1.0 - self.beta1 ** self.steps
        correct2 = 1.0 - self.beta2 ** self.steps
        for name, value in self.params.items():
            if value.grad is None:
                continue
            grad = value.grad.astype(np.float64)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = (m / correct1) / (np.sqrt(v / correct2) + self.epsilon)
            value.data -= (learning_rate * update).astype(value.data.dtype)

    def zero_grads(self) -> None:
        for value in self.params.values():
            value.zero_grad()


def _windows(sentence: Sentence, max_len: int) -> list[Sentence]:
    """Chop an over-long sentence into training windows.

    Heads pointing outside a window are re-rooted at 0; this is training
    supervision only, prediction always sees whole sentences.
    """
    words = sentence.words
    if len(words) <= max_len:
        return [sentence]
    out = []
    for start in range(0, len(words), max_len):
        chunk = words[start : start + max_len]
        rebuilt = []
        for j, w in enumerate(chunk):
            head = w.head if w.head is not None else 0
            local = head - start
            if head == 0 or local < 1 or local > len(chunk):
                local = 0
            rebuilt.append(replace(w, id=j + 1, head=local))
        out.append(Sentence(words=tuple(rebuilt)))
    return out


def _batches(sentences: list[Sentence], batch_size: int) -> list[list[int]]:
    order = sorted(range(len(sentences)), key=lambda i: (len(sentences[i].words), i))
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def _ctx_for(ctx: dict[str, ContextVectors] | None, index: int) -> dict[str, np.ndarray] | None:
    if not ctx:
        return None
    return {name: cv.sentence(index) for name, cv in ctx.items()}


def _forward_loss(model: JointModel, sentence: Sentence, epoch: int,
                  pretrained: PretrainedTable | None,
                  ctx: dict[str, np.ndarray] | None, rng: Rng) -> Value:
    """One training forward pass; rejects a diverged (non-finite) loss."""
    scores = model.forward(sentence, "train", pretrained=pretrained, ctx=ctx, rng=rng)
    loss = model.loss(scores, sentence)
    value = loss.data.item()
    if not np.isfinite(value):
        raise TrainError(
            f"non-finite loss {value!r} in epoch {epoch}; "
            "lower the learning rate or check the data")
    return loss


def _upos_accuracy(gold: Treebank, system: Treebank) -> float:
    total = 0
    correct = 0
    for g_sent, s_sent in zip(gold.sentences, system.sentences):
        for g, s in zip(g_sent.words, s_sent.words):
            total += 1
            correct += g.upos == s.upos
    return 100.0 * correct / total if total else 0.0


def _dev_scores(gold: Treebank, system: Treebank) -> tuple[float, float | None]:
    """(UPOS, LAS) on the dev set; LAS is None when gold lacks heads."""
    has_heads = all(w.head is not None for s in gold.sentences for w in s.words)
    if not has_heads:
        return _upos_accuracy(gold, system), None
    report = evaluate(gold, system)
    return report["UPOS"].f1, report["LAS"].f1


def train(
    train_tb: Treebank,
    dev_tb: Treebank | None = None,
    model_overrides: dict | None = None,
    config: TrainConfig = TrainConfig(),
    pretrained: PretrainedTable | None = None,
    ctx_train: dict[str, ContextVectors] | None = None,
    ctx_dev: dict[str, ContextVectors] | None = None,
    log: IO | None = None,
) -> JointModel:
    """Fit a fresh model on train_tb; inventories come from train_tb only."""
    if not train_tb.sentences:
        raise TrainError("cannot train on an empty treebank")
    overrides = dict(model_overrides or {})
    if "ctx_sources" in overrides:
        raise TrainError("ctx_sources is derived from the ctx_train mapping")
    if ctx_train:
        names = canonical_ctx_order(ctx_train)
        overrides["ctx_sources"] = tuple((name, ctx_train[name].dim) for name in names)
        for name in names:
            ctx_train[name].check_against(train_tb)
    if dev_tb is not None and ctx_train:
        if set(ctx_dev or ()) != set(ctx_train):
            raise TrainError("dev evaluation needs the same context sources as training")
        for name, cv in ctx_dev.items():
            cv.check_against(dev_tb)
    if pretrained is not None and "pretrained_dim" not in overrides:
        overrides.setdefault("use_pretrained", True)
        overrides["pretrained_dim"] = pretrained.dim

    model = JointModel(config_from_treebank(train_tb, **overrides))
    if model.config.use_pretrained and pretrained is None:
        raise TrainError("config enables pretrained vectors but none were given")

    examples: list[Sentence] = []
    example_ctx: list[dict[str, np.ndarray] | None] = []
    for i, sentence in enumerate(train_tb.sentences):
        ctx_here = _ctx_for(ctx_train, i)
        for window in _windows(sentence, config.max_len):
            if len(window.words) < len(sentence.words) and ctx_here is not None:
                raise TrainError(
                    f"sentence {i + 1} exceeds max_len {config.max_len}; "
                    "context vectors cannot be windowed")
            examples.append(window)
            example_ctx.append(ctx_here)

    optimizer = AdamOptimizer(model.params, config.beta1, config.beta2, config.epsilon)
    rng = Rng(config.seed)
    batches = _batches(examples, config.batch_size)
    lr = config.learning_rate
    best_dev = -np.inf
    best_params: dict[str, np.ndarray] | None = None
    stall = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.generator.permutation(len(batches))
        epoch_loss = 0.0
        for b in order:
            optimizer.zero_grads()
            batch = batches[b]
            share = 1.0 / len(batch)
            for idx in batch:
                loss = _forward_loss(model, examples[idx], epoch,
                                     pretrained, example_ctx[idx], rng)
                epoch_loss += loss.data.item()
                backward(scale(loss, share))
            clip_gradients(model.params, config.clip_norm)
            optimizer.step(lr)

        mean_loss = epoch_loss / len(examples)
        dev_upos_text = "NA"
        dev_las_text = "NA"
        if dev_tb is not None and dev_tb.sentences:
            system = predict(dev_tb, model, pretrained=pretrained, ctx=ctx_dev)
            dev_upos, dev_las = _dev_scores(dev_tb, system)
            dev_upos_text = f"{dev_upos:.2f}"
            selected = dev_upos if (config.dev_metric == "upos" or dev_las is None) else dev_las
            if dev_las is not None:
                dev_las_text = f"{dev_las:.2f}"
            if selected > best_dev:
                best_dev = selected
                best_params = {k: v.data.copy() for k, v in model.params.items()}
                stall = 0
            else:
                stall += 1
                if stall >= config.patience:
                    lr *= config.decay
                    stall = 0
        if log is not None:
            print(f"{epoch}\t{mean_loss:.4f}\t{dev_upos_text}\t{dev_las_text}", file=log)

    if best_params is not None:
        for name, value in model.params.items():
            value.data[...] = best_params[name]
    if config.checkpoint_path:
        save_model(config.checkpoint_path, model)
    return model


def predict(
    tb: Treebank,
    model: JointModel,
    pretrained: PretrainedTable | None = None,
    ctx: dict[str, ContextVectors] | None = None,
) -> Treebank:
    """Annotate every sentence; identity columns pass through untouched."""
    if ctx:
        for cv in ctx.values():
            cv.check_against(tb)
    decoded = []
    for i, sentence in enumerate(tb.sentences):
        scores = model.forward(sentence, "infer", pretrained=pretrained,
                               ctx=_ctx_for(ctx, i))
        decoded.append(model.decode(sentence, scores))
    return Treebank(sentences=tuple(decoded), name=tb.name)
