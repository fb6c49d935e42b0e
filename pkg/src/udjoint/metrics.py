"""CoNLL 2018 shared task evaluation over parsed treebanks.

Computes the twelve segmentation, tagging, lemmatization, and parsing
metrics (Tokens through BLEX) with the exact matching rules of the official
shared task scorer: words are aligned through character spans over the
whitespace-free text, multiword tokens are expanded over their surface span
and matched by longest common subsequence of lowercased forms, FEATS are
reduced to the universal subset, and DEPREL comparison drops language
specific subtypes.  Also provides macro-averaging across treebanks and the
relative error reduction arithmetic used when comparing two systems.

All scores are percentages in [0, 100].  ``format_score`` renders them with
two decimals, rounding halves up.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Sequence
import unicodedata

from .conllu import Treebank, Word

__all__ = [
    "CONTENT_DEPRELS",
    "FUNCTIONAL_DEPRELS",
    "UNIVERSAL_FEATURES",
    "METRICS",
    "EvaluationError",
    "AlignmentError",
    "MetricScore",
    "EvalReport",
    "AlignedWordPair",
    "align",
    "evaluate",
    "macro_average",
    "relative_error_reduction",
    "format_score",
]

CONTENT_DEPRELS = frozenset({
    "nsubj", "obj", "iobj", "csubj", "ccomp", "xcomp", "obl", "vocative",
    "expl", "dislocated", "advcl", "advmod", "discourse", "nmod", "appos",
    "nummod", "acl", "amod", "conj", "fixed", "flat", "compound", "list",
    "parataxis", "orphan", "goeswith", "reparandum", "root", "dep",
})

FUNCTIONAL_DEPRELS = frozenset({"aux", "cop", "mark", "det", "clf", "case", "cc"})

UNIVERSAL_FEATURES = frozenset({
    "PronType", "NumType", "Poss", "Reflex", "Foreign", "Abbr", "Gender",
    "Animacy", "Number", "Case", "Definite", "Degree", "VerbForm", "Mood",
    "Tense", "Aspect", "Voice", "Evident", "Polarity", "Person", "Polite",
})

METRICS = (
    "Tokens", "Words", "UPOS", "XPOS", "UFeats", "AllTags",
    "Lemmas", "UAS", "LAS", "CLAS", "MLAS", "BLEX",
)


class EvaluationError(ValueError):
    """The input treebanks cannot be evaluated (bad tree, missing head...)."""


class AlignmentError(EvaluationError):
    """Gold and system files do not share the same underlying text."""


@dataclass(frozen=True, slots=True)
class MetricScore:
    """Precision/recall/F1 percentages plus the counts behind them."""

    precision: float
    recall: float
    f1: float
    correct: int = 0
    gold_total: int = 0
    system_total: int = 0
    aligned_total: int | None = None
    not_applicable: bool = False

    @classmethod
    def from_counts(
        cls,
        correct: int,
        gold_total: int,
        system_total: int,
        aligned_total: int | None = None,
        not_applicable: bool = False,
    ) -> "MetricScore":
        precision = 100.0 * correct / system_total if system_total else 0.0
        recall = 100.0 * correct / gold_total if gold_total else 0.0
        both = gold_total + system_total
        f1 = 200.0 * correct / both if both else 0.0
        return cls(precision, recall, f1, correct, gold_total, system_total,
                   aligned_total, not_applicable)


@dataclass(frozen=True, slots=True)
class EvalReport:
    """One MetricScore per metric name, in METRICS order."""

    scores: dict[str, MetricScore]

    def __getitem__(self, metric: str) -> MetricScore:
        return self.scores[metric]

    def __iter__(self):
        return iter(self.scores.items())

    def table(self) -> str:
        """Human-readable fixed-width table (metric, precision, recall, f1)."""
        lines = ["Metric     | Precision |    Recall |  F1 Score",
                 "-----------+-----------+-----------+----------"]
        for metric, score in self.scores.items():
            if score.not_applicable:
                cells = ["        NA"] * 3
            else:
                cells = [f"{format_score(v):>10}"
                         for v in (score.precision, score.recall, score.f1)]
            lines.append("{:11}|{} |{} |{}".format(metric, *cells))
        return "\n".join(lines)

    def key_values(self) -> str:
        """Machine-readable ``Metric.field=value`` block."""
        lines = []
        for metric, score in self.scores.items():
            if score.not_applicable:
                lines.append(f"{metric}.f1=NA")
                continue
            for name in ("precision", "recall", "f1"):
                lines.append(f"{metric}.{name}={format_score(getattr(score, name))}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        """JSON-ready structure with both percentages and raw counts."""
        out: dict[str, object] = {}
        for metric, score in self.scores.items():
            if score.not_applicable:
                out[metric] = None
                continue
            out[metric] = {
                "precision": score.precision,
                "recall": score.recall,
                "f1": score.f1,
                "correct": score.correct,
                "gold_total": score.gold_total,
                "system_total": score.system_total,
                "aligned_total": score.aligned_total,
            }
        return out


@dataclass(frozen=True, slots=True)
class AlignedWordPair:
    """A gold/system word match: flat word indices plus the gold char span."""

    gold_index: int
    system_index: int
    span: tuple[int, int]


class _EvalWord:
    """Evaluation view of one word: normalized columns plus its char span."""

    __slots__ = ("index", "form", "lemma", "upos", "xpos", "feats", "deprel",
                 "span", "is_multiword", "parent", "functional_children",
                 "is_content", "is_functional")

    def __init__(self, index: int, word: Word, span: tuple[int, int],
                 is_multiword: bool, form: str):
        self.index = index
        self.form = form
        self.lemma = word.lemma
        self.upos = word.upos
        self.xpos = word.xpos
        self.feats = _universal_feats(word)
        self.deprel = word.deprel_universal
        self.span = span
        self.is_multiword = is_multiword
        self.parent: _EvalWord | None = None
        self.functional_children: list[_EvalWord] = []
        self.is_content = self.deprel in CONTENT_DEPRELS
        self.is_functional = self.deprel in FUNCTIONAL_DEPRELS


class _EvalDoc:
    __slots__ = ("characters", "tokens", "words")

    def __init__(self) -> None:
        self.characters: list[str] = []
        self.tokens: list[tuple[int, int]] = []
        self.words: list[_EvalWord] = []


def _strip_spaces(text: str) -> str:
    # The official scorer drops every Unicode Zs character so that gold and
    # system text compare equal even when one side tokenizes a space.
    return "".join(c for c in text if unicodedata.category(c) != "Zs")


def _universal_feats(word: Word) -> str:
    pairs = (k if v is None else f"{k}={v}" for k, v in word.feats)
    return "|".join(sorted(p for p in pairs if p.split("=", 1)[0] in UNIVERSAL_FEATURES))


def _build_doc(tb: Treebank) -> _EvalDoc:
    doc = _EvalDoc()
    index = 0
    for snum, sentence in enumerate(tb.sentences, 1):
        n = len(sentence.words)
        covering = {}
        for mwt in sentence.multiword_tokens:
            for wid in range(mwt.start, mwt.end + 1):
                covering[wid] = mwt
        mwt_spans: dict[int, tuple[int, int]] = {}

        sent_words: list[_EvalWord] = []
        for word in sentence.words:
            mwt = covering.get(word.id)
            if mwt is None:
                stripped = _strip_spaces(word.form)
                if not stripped:
                    raise EvaluationError(
                        f"sentence {snum}: FORM of word {word.id} is empty after space removal")
                span = (index, index + len(stripped))
                doc.characters.append(stripped)
                doc.tokens.append(span)
                index += len(stripped)
                # Non-covered words keep the space-free form for matching.
                ew = _EvalWord(len(doc.words), word, span, False, stripped)
            else:
                if word.id == mwt.start:
                    stripped = _strip_spaces(mwt.form)
                    if not stripped:
                        raise EvaluationError(
                            f"sentence {snum}: FORM of token {mwt.start}-{mwt.end} "
                            "is empty after space removal")
                    span = (index, index + len(stripped))
                    doc.characters.append(stripped)
                    doc.tokens.append(span)
                    index += len(stripped)
                    mwt_spans[mwt.start] = span
                # Covered words share the surface token's span and keep their
                # written form for the in-span subsequence matching.
                ew = _EvalWord(len(doc.words), word, mwt_spans[mwt.start], True, word.form)
            doc.words.append(ew)
            sent_words.append(ew)

        roots = 0
        for word in sentence.words:
            if word.head is None:
                raise EvaluationError(f"sentence {snum}: word {word.id} has no HEAD")
            if word.head > n:
                raise EvaluationError(
                    f"sentence {snum}: HEAD {word.head} of word {word.id} "
                    "points outside the sentence")
            roots += word.head == 0
        if roots != 1:
            raise EvaluationError(f"sentence {snum}: found {roots} roots, expected exactly one")
        for word in sentence.words:
            node, steps = word.id, 0
            while node != 0:
                node = sentence.words[node - 1].head  # type: ignore[assignment]
                steps += 1
                if steps > n:
                    raise EvaluationError(f"sentence {snum}: HEAD cycle through word {word.id}")
        for word, ew in zip(sentence.words, sent_words):
            if word.head:
                ew.parent = sent_words[word.head - 1]
        for ew in sent_words:
            if ew.parent is not None and ew.is_functional:
                ew.parent.functional_children.append(ew)
    return doc


def _check_same_text(gold: _EvalDoc, system: _EvalDoc) -> None:
    gold_text = "".join(gold.characters)
    system_text = "".join(system.characters)
    if gold_text == system_text:
        return
    limit = min(len(gold_text), len(system_text))
    at = 0
    while at < limit and gold_text[at] == system_text[at]:
        at += 1
    raise AlignmentError(
        "gold and system files disagree on the underlying text at character "
        f"{at}: gold {gold_text[at:at + 20]!r} vs system {system_text[at:at + 20]!r}")


def _beyond_end(words: list[_EvalWord], i: int, span_end: int) -> bool:
    if i >= len(words):
        return True
    if words[i].is_multiword:
        return words[i].span[0] >= span_end
    return words[i].span[1] > span_end


def _extend_end(word: _EvalWord, span_end: int) -> int:
    if word.is_multiword and word.span[1] > span_end:
        return word.span[1]
    return span_end


def _find_multiword_span(
    gold_words: list[_EvalWord], system_words: list[_EvalWord], gi: int, si: int
) -> tuple[int, int, int, int]:
    # Called when one side sits on a multiword token; grows the smallest
    # character span every multiword token overlapping it fits into.
    if gold_words[gi].is_multiword:
        span_end = gold_words[gi].span[1]
        if (not system_words[si].is_multiword
                and system_words[si].span[0] < gold_words[gi].span[0]):
            while si > 0 and system_words[si - 1].span[0] >= gold_words[gi].span[0]:
                si -= 1
    else:
        span_end = system_words[si].span[1]
        if gold_words[gi].span[0] < system_words[si].span[0]:
            while gi > 0 and gold_words[gi - 1].span[0] >= system_words[si].span[0]:
                gi -= 1
    gs, ss = gi, si

    while (not _beyond_end(gold_words, gi, span_end)
           or not _beyond_end(system_words, si, span_end)):
        if gi < len(gold_words) and (si >= len(system_words)
                                     or gold_words[gi].span[0] <= system_words[si].span[0]):
            span_end = _extend_end(gold_words[gi], span_end)
            gi += 1
        else:
            span_end = _extend_end(system_words[si], span_end)
            si += 1
    return gs, ss, gi, si


def _lcs_table(gold: list[_EvalWord], system: list[_EvalWord]) -> list[list[int]]:
    g_n, s_n = len(gold), len(system)
    lcs = [[0] * s_n for _ in range(g_n)]
    for g in reversed(range(g_n)):
        for s in reversed(range(s_n)):
            if gold[g].form.lower() == system[s].form.lower():
                lcs[g][s] = 1 + (lcs[g + 1][s + 1] if g + 1 < g_n and s + 1 < s_n else 0)
            lcs[g][s] = max(lcs[g][s], lcs[g + 1][s] if g + 1 < g_n else 0)
            lcs[g][s] = max(lcs[g][s], lcs[g][s + 1] if s + 1 < s_n else 0)
    return lcs


def _align_docs(
    gold: _EvalDoc, system: _EvalDoc
) -> list[tuple[_EvalWord, _EvalWord]]:
    matched: list[tuple[_EvalWord, _EvalWord]] = []
    gold_words, system_words = gold.words, system.words
    gi, si = 0, 0
    while gi < len(gold_words) and si < len(system_words):
        if gold_words[gi].is_multiword or system_words[si].is_multiword:
            gs, ss, gi, si = _find_multiword_span(gold_words, system_words, gi, si)
            if gi > gs and si > ss:
                g_span = gold_words[gs:gi]
                s_span = system_words[ss:si]
                lcs = _lcs_table(g_span, s_span)
                g, s = 0, 0
                while g < len(g_span) and s < len(s_span):
                    if g_span[g].form.lower() == s_span[s].form.lower():
                        matched.append((g_span[g], s_span[s]))
                        g += 1
                        s += 1
                    elif lcs[g][s] == (lcs[g + 1][s] if g + 1 < len(g_span) else 0):
                        g += 1
                    else:
                        s += 1
        elif gold_words[gi].span == system_words[si].span:
            matched.append((gold_words[gi], system_words[si]))
            gi += 1
            si += 1
        elif gold_words[gi].span[0] <= system_words[si].span[0]:
            gi += 1
        else:
            si += 1
    return matched


def _spans_score(gold_spans: list[tuple[int, int]],
                 system_spans: list[tuple[int, int]]) -> MetricScore:
    correct, gi, si = 0, 0, 0
    while gi < len(gold_spans) and si < len(system_spans):
        if system_spans[si][0] < gold_spans[gi][0]:
            si += 1
        elif gold_spans[gi][0] < system_spans[si][0]:
            gi += 1
        else:
            correct += gold_spans[gi][1] == system_spans[si][1]
            gi += 1
            si += 1
    return MetricScore.from_counts(correct, len(gold_spans), len(system_spans))


_NOT_ALIGNED = "NotAligned"  # sentinel distinct from every real key part


def _alignment_score(
    gold: _EvalDoc,
    system: _EvalDoc,
    matched: list[tuple[_EvalWord, _EvalWord]],
    matched_map: dict[_EvalWord, _EvalWord],
    key_fn: Callable | None = None,
    filter_fn: Callable[[_EvalWord], bool] | None = None,
    not_applicable: bool = False,
) -> MetricScore:
    if filter_fn is not None:
        gold_total = sum(1 for w in gold.words if filter_fn(w))
        system_total = sum(1 for w in system.words if filter_fn(w))
        aligned = sum(1 for g, _ in matched if filter_fn(g))
    else:
        gold_total = len(gold.words)
        system_total = len(system.words)
        aligned = len(matched)

    if key_fn is None:
        return MetricScore.from_counts(aligned, gold_total, system_total, aligned,
                                       not_applicable)

    def gold_side(word: _EvalWord | None) -> _EvalWord | None:
        return word

    def system_side(word: _EvalWord | None):
        return matched_map.get(word, _NOT_ALIGNED) if word is not None else None

    correct = 0
    for gold_word, system_word in matched:
        if filter_fn is None or filter_fn(gold_word):
            if key_fn(gold_word, gold_side) == key_fn(system_word, system_side):
                correct += 1
    return MetricScore.from_counts(correct, gold_total, system_total, aligned,
                                   not_applicable)


def align(gold: Treebank, system: Treebank) -> list[AlignedWordPair]:
    """Align gold and system words by the shared task's matching rules.

    The result is monotone and one-to-one; indices count words across the
    whole treebank and the span is the gold word's character range in the
    whitespace-free text.  Raises AlignmentError when the two files do not
    spell out the same text.
    """
    gold_doc = _build_doc(gold)
    system_doc = _build_doc(system)
    _check_same_text(gold_doc, system_doc)
    return [AlignedWordPair(g.index, s.index, g.span)
            for g, s in _align_docs(gold_doc, system_doc)]


def evaluate(gold: Treebank, system: Treebank) -> EvalReport:
    """Score a system treebank against gold, returning all twelve metrics.

    XPOS, UFeats, and Lemmas are flagged not applicable when the gold
    column is entirely "_" (their numbers are still computed).  Lemma
    comparison treats a gold "_" as matching anything, per the official
    scorer's handling of treebanks without lemma annotation.
    """
    gold_doc = _build_doc(gold)
    system_doc = _build_doc(system)
    _check_same_text(gold_doc, system_doc)
    matched = _align_docs(gold_doc, system_doc)
    matched_map = {s: g for g, s in matched}

    gold_words = [w for sent in gold.sentences for w in sent.words]
    xpos_na = all(w.xpos == "_" for w in gold_words)
    feats_na = all(not w.feats for w in gold_words)
    lemmas_na = all(w.lemma == "_" for w in gold_words)

    def score(key_fn=None, filter_fn=None, not_applicable=False) -> MetricScore:
        return _alignment_score(gold_doc, system_doc, matched, matched_map,
                                key_fn, filter_fn, not_applicable)

    def lemma_key(w: _EvalWord, ga) -> str:
        return w.lemma if ga(w).lemma != "_" else "_"

    content = lambda w: w.is_content

    scores = {
        "Tokens": _spans_score(gold_doc.tokens, system_doc.tokens),
        "Words": score(),
        "UPOS": score(lambda w, _: w.upos),
        "XPOS": score(lambda w, _: w.xpos, not_applicable=xpos_na),
        "UFeats": score(lambda w, _: w.feats, not_applicable=feats_na),
        "AllTags": score(lambda w, _: (w.upos, w.xpos, w.feats)),
        "Lemmas": score(lemma_key, not_applicable=lemmas_na),
        "UAS": score(lambda w, ga: ga(w.parent)),
        "LAS": score(lambda w, ga: (ga(w.parent), w.deprel)),
        "CLAS": score(lambda w, ga: (ga(w.parent), w.deprel), filter_fn=content),
        "MLAS": score(
            lambda w, ga: (ga(w.parent), w.deprel, w.upos, w.feats,
                           [(ga(c), c.deprel, c.upos, c.feats)
                            for c in w.functional_children]),
            filter_fn=content),
        "BLEX": score(lambda w, ga: (ga(w.parent), w.deprel, lemma_key(w, ga)),
                      filter_fn=content),
    }
    return EvalReport(scores)


def macro_average(reports: Sequence[EvalReport]) -> EvalReport:
    """Unweighted mean of each metric's F1 across treebanks.

    Metrics flagged not applicable in a report are left out of that metric's
    mean; a metric not applicable everywhere stays not applicable.
    """
    if not reports:
        raise ValueError("cannot macro-average zero reports")
    scores: dict[str, MetricScore] = {}
    for metric in METRICS:
        values = [r[metric].f1 for r in reports if not r[metric].not_applicable]
        if values:
            mean = sum(values) / len(values)
            scores[metric] = MetricScore(mean, mean, mean)
        else:
            scores[metric] = MetricScore(0.0, 0.0, 0.0, not_applicable=True)
    return EvalReport(scores)


def relative_error_reduction(baseline: float, improved: float) -> float:
    """How much of the baseline's error the improved system removes, in %.

    ``100 * (improved - baseline) / (100 - baseline)``; negative when the
    improved system is worse.  A perfect baseline leaves no error to reduce,
    so baseline must be below 100.
    """
    if not 0.0 <= baseline < 100.0:
        raise ValueError(f"baseline must be in [0, 100), got {baseline}")
    return 100.0 * (improved - baseline) / (100.0 - baseline)


def format_score(value: float) -> str:
    """Render a percentage with two decimals, halves rounding up."""
    return str(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))
