"""Reference scorer mirroring the official CoNLL 2018 shared task script.

Behavioral port of conll18_ud_eval.py version 1.2 (the original release, not
later refactors), kept deliberately independent of the package under test:
it reads raw file text with its own loader and computes every metric with
the original algorithms, so parity failures implicate exactly one side.
Scores come back as fractions in [0, 1], the way the original reports them
before percentage formatting.
"""

import unicodedata

ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)

CONTENT_DEPRELS = {
    "nsubj", "obj", "iobj", "csubj", "ccomp", "xcomp", "obl", "vocative",
    "expl", "dislocated", "advcl", "advmod", "discourse", "nmod", "appos",
    "nummod", "acl", "amod", "conj", "fixed", "flat", "compound", "list",
    "parataxis", "orphan", "goeswith", "reparandum", "root", "dep",
}

FUNCTIONAL_DEPRELS = {"aux", "cop", "mark", "det", "clf", "case", "cc"}

UNIVERSAL_FEATURES = {
    "PronType", "NumType", "Poss", "Reflex", "Foreign", "Abbr", "Gender",
    "Animacy", "Number", "Case", "Definite", "Degree", "VerbForm", "Mood",
    "Tense", "Aspect", "Voice", "Evident", "Polarity", "Person", "Polite",
}


class UDError(Exception):
    pass


class UDSpan:
    def __init__(self, start, end):
        self.start = start
        self.end = end


class UDWord:
    def __init__(self, span, columns, is_multiword):
        self.span = span
        self.columns = columns
        self.is_multiword = is_multiword
        self.parent = None
        self.functional_children = []
        columns[FEATS] = "|".join(sorted(
            feat for feat in columns[FEATS].split("|")
            if feat.split("=", 1)[0] in UNIVERSAL_FEATURES))
        columns[DEPREL] = columns[DEPREL].split(":")[0]
        self.is_content_deprel = columns[DEPREL] in CONTENT_DEPRELS
        self.is_functional_deprel = columns[DEPREL] in FUNCTIONAL_DEPRELS


class UDRepresentation:
    def __init__(self):
        self.characters = []
        self.sentences = []
        self.tokens = []
        self.words = []


class Score:
    def __init__(self, gold_total, system_total, correct, aligned_total=None):
        self.correct = correct
        self.gold_total = gold_total
        self.system_total = system_total
        self.aligned_total = aligned_total
        self.precision = correct / system_total if system_total else 0.0
        self.recall = correct / gold_total if gold_total else 0.0
        self.f1 = 2 * correct / (system_total + gold_total) if system_total + gold_total else 0.0
        self.aligned_accuracy = correct / aligned_total if aligned_total else aligned_total


class AlignmentWord:
    def __init__(self, gold_word, system_word):
        self.gold_word = gold_word
        self.system_word = system_word


class Alignment:
    def __init__(self, gold_words, system_words):
        self.gold_words = gold_words
        self.system_words = system_words
        self.matched_words = []
        self.matched_words_map = {}

    def append_aligned_words(self, gold_word, system_word):
        self.matched_words.append(AlignmentWord(gold_word, system_word))
        self.matched_words_map[system_word] = gold_word


def load_conllu(text):
    ud = UDRepresentation()

    raw = text.split("\n")
    if raw and raw[-1] == "":
        raw.pop()
    lines = iter(raw)

    index, sentence_start = 0, None
    for line in lines:
        line = line.rstrip("\r\n")

        if sentence_start is None:
            if line.startswith("#"):
                continue
            ud.sentences.append(UDSpan(index, 0))
            sentence_start = len(ud.words)
        if not line:
            def process_word(word):
                if word.parent == "remapping":
                    raise UDError("There is a cycle in a sentence")
                if word.parent is None:
                    head = int(word.columns[HEAD])
                    if head < 0 or head > len(ud.words) - sentence_start:
                        raise UDError("HEAD '{}' points outside of the sentence".format(
                            word.columns[HEAD]))
                    if head:
                        parent = ud.words[sentence_start + head - 1]
                        word.parent = "remapping"
                        process_word(parent)
                        word.parent = parent

            for word in ud.words[sentence_start:]:
                process_word(word)
            # Functional children are assigned after the recursion settles so
            # no child is appended twice through the remapping path.
            for word in ud.words[sentence_start:]:
                if word.parent and word.is_functional_deprel:
                    word.parent.functional_children.append(word)

            if len([word for word in ud.words[sentence_start:] if word.parent is None]) != 1:
                raise UDError("There are multiple roots in a sentence")

            ud.sentences[-1].end = index
            sentence_start = None
            continue

        columns = line.split("\t")
        if len(columns) != 10:
            raise UDError(
                "The CoNLL-U line does not contain 10 tab-separated columns: '{}'".format(line))

        if "." in columns[ID]:
            continue

        columns[FORM] = "".join(
            c for c in columns[FORM] if unicodedata.category(c) != "Zs")
        if not columns[FORM]:
            raise UDError("There is an empty FORM in the CoNLL-U file")

        ud.characters.extend(columns[FORM])
        ud.tokens.append(UDSpan(index, index + len(columns[FORM])))
        index += len(columns[FORM])

        if "-" in columns[ID]:
            try:
                start, end = map(int, columns[ID].split("-"))
            except ValueError:
                raise UDError("Cannot parse multi-word token ID '{}'".format(columns[ID]))

            for _ in range(start, end + 1):
                word_line = next(lines, "").rstrip("\r\n")
                word_columns = word_line.split("\t")
                if len(word_columns) != 10:
                    raise UDError(
                        "The CoNLL-U line does not contain 10 tab-separated columns: '{}'".format(
                            word_line))
                ud.words.append(UDWord(ud.tokens[-1], word_columns, is_multiword=True))
        else:
            try:
                word_id = int(columns[ID])
            except ValueError:
                raise UDError("Cannot parse word ID '{}'".format(columns[ID]))
            if word_id != len(ud.words) - sentence_start + 1:
                raise UDError("Incorrect word ID '{}' for word '{}', expected '{}'".format(
                    columns[ID], columns[FORM], len(ud.words) - sentence_start + 1))

            try:
                head_id = int(columns[HEAD])
            except ValueError:
                raise UDError("Cannot parse HEAD '{}'".format(columns[HEAD]))
            if head_id < 0:
                raise UDError("HEAD cannot be negative")

            ud.words.append(UDWord(ud.tokens[-1], columns, is_multiword=False))

    if sentence_start is not None:
        raise UDError("The CoNLL-U file does not end with empty line")

    return ud


def spans_score(gold_spans, system_spans):
    correct, gi, si = 0, 0, 0
    while gi < len(gold_spans) and si < len(system_spans):
        if system_spans[si].start < gold_spans[gi].start:
            si += 1
        elif gold_spans[gi].start < system_spans[si].start:
            gi += 1
        else:
            correct += gold_spans[gi].end == system_spans[si].end
            si += 1
            gi += 1

    return Score(len(gold_spans), len(system_spans), correct)


def alignment_score(alignment, key_fn=None, filter_fn=None):
    if filter_fn is not None:
        gold = sum(1 for gold in alignment.gold_words if filter_fn(gold))
        system = sum(1 for system in alignment.system_words if filter_fn(system))
        aligned = sum(1 for word in alignment.matched_words if filter_fn(word.gold_word))
    else:
        gold = len(alignment.gold_words)
        system = len(alignment.system_words)
        aligned = len(alignment.matched_words)

    if key_fn is None:
        return Score(gold, system, aligned, aligned)

    def gold_aligned_gold(word):
        return word

    def gold_aligned_system(word):
        return alignment.matched_words_map.get(word, "NotAligned") if word is not None else None

    correct = 0
    for words in alignment.matched_words:
        if filter_fn is None or filter_fn(words.gold_word):
            if key_fn(words.gold_word, gold_aligned_gold) == key_fn(
                    words.system_word, gold_aligned_system):
                correct += 1

    return Score(gold, system, correct, aligned)


def beyond_end(words, i, multiword_span_end):
    if i >= len(words):
        return True
    if words[i].is_multiword:
        return words[i].span.start >= multiword_span_end
    return words[i].span.end > multiword_span_end


def extend_end(word, multiword_span_end):
    if word.is_multiword and word.span.end > multiword_span_end:
        return word.span.end
    return multiword_span_end


def find_multiword_span(gold_words, system_words, gi, si):
    # We know gold_words[gi].is_multiword or system_words[si].is_multiword.
    if gold_words[gi].is_multiword:
        multiword_span_end = gold_words[gi].span.end
        if (not system_words[si].is_multiword
                and system_words[si].span.start < gold_words[gi].span.start):
            while si > 0 and system_words[si - 1].span.start >= gold_words[gi].span.start:
                si -= 1
    else:
        multiword_span_end = system_words[si].span.end
        if (not gold_words[gi].is_multiword
                and gold_words[gi].span.start < system_words[si].span.start):
            while gi > 0 and gold_words[gi - 1].span.start >= system_words[si].span.start:
                gi -= 1
    gs, ss = gi, si

    while (not beyond_end(gold_words, gi, multiword_span_end)
           or not beyond_end(system_words, si, multiword_span_end)):
        if gi < len(gold_words) and (si >= len(system_words)
                                     or gold_words[gi].span.start <= system_words[si].span.start):
            multiword_span_end = extend_end(gold_words[gi], multiword_span_end)
            gi += 1
        else:
            multiword_span_end = extend_end(system_words[si], multiword_span_end)
            si += 1
    return gs, ss, gi, si


def compute_lcs(gold_words, system_words, gi, si, gs, ss):
    lcs = [[0] * (si - ss) for _ in range(gi - gs)]
    for g in reversed(range(gi - gs)):
        for s in reversed(range(si - ss)):
            if (gold_words[gs + g].columns[FORM].lower()
                    == system_words[ss + s].columns[FORM].lower()):
                lcs[g][s] = 1 + (lcs[g + 1][s + 1] if g + 1 < gi - gs and s + 1 < si - ss else 0)
            lcs[g][s] = max(lcs[g][s], lcs[g + 1][s] if g + 1 < gi - gs else 0)
            lcs[g][s] = max(lcs[g][s], lcs[g][s + 1] if s + 1 < si - ss else 0)
    return lcs


def align_words(gold_words, system_words):
    alignment = Alignment(gold_words, system_words)

    gi, si = 0, 0
    while gi < len(gold_words) and si < len(system_words):
        if gold_words[gi].is_multiword or system_words[si].is_multiword:
            # A: multi-word tokens; align via LCS within the whole span.
            gs, ss, gi, si = find_multiword_span(gold_words, system_words, gi, si)

            if si > ss and gi > gs:
                lcs = compute_lcs(gold_words, system_words, gi, si, gs, ss)

                s, g = 0, 0
                while g < gi - gs and s < si - ss:
                    if (gold_words[gs + g].columns[FORM].lower()
                            == system_words[ss + s].columns[FORM].lower()):
                        alignment.append_aligned_words(gold_words[gs + g], system_words[ss + s])
                        g += 1
                        s += 1
                    elif lcs[g][s] == (lcs[g + 1][s] if g + 1 < gi - gs else 0):
                        g += 1
                    else:
                        s += 1
        else:
            # B: no multi-word token; align according to spans.
            if (gold_words[gi].span.start, gold_words[gi].span.end) \
                    == (system_words[si].span.start, system_words[si].span.end):
                alignment.append_aligned_words(gold_words[gi], system_words[si])
                gi += 1
                si += 1
            elif gold_words[gi].span.start <= system_words[si].span.start:
                gi += 1
            else:
                si += 1

    return alignment


def evaluate(gold_ud, system_ud):
    if gold_ud.characters != system_ud.characters:
        index = 0
        while (index < len(gold_ud.characters) and index < len(system_ud.characters)
               and gold_ud.characters[index] == system_ud.characters[index]):
            index += 1
        raise UDError(
            "The concatenation of tokens in gold file and in system file differ!\n"
            + "First 20 differing characters in gold file: '{}' and system file: '{}'".format(
                "".join(gold_ud.characters[index:index + 20]),
                "".join(system_ud.characters[index:index + 20])))

    alignment = align_words(gold_ud.words, system_ud.words)

    return {
        "Tokens": spans_score(gold_ud.tokens, system_ud.tokens),
        "Sentences": spans_score(gold_ud.sentences, system_ud.sentences),
        "Words": alignment_score(alignment),
        "UPOS": alignment_score(alignment, lambda w, _: w.columns[UPOS]),
        "XPOS": alignment_score(alignment, lambda w, _: w.columns[XPOS]),
        "UFeats": alignment_score(alignment, lambda w, _: w.columns[FEATS]),
        "AllTags": alignment_score(
            alignment, lambda w, _: (w.columns[UPOS], w.columns[XPOS], w.columns[FEATS])),
        "Lemmas": alignment_score(
            alignment, lambda w, ga: w.columns[LEMMA] if ga(w).columns[LEMMA] != "_" else "_"),
        "UAS": alignment_score(alignment, lambda w, ga: ga(w.parent)),
        "LAS": alignment_score(alignment, lambda w, ga: (ga(w.parent), w.columns[DEPREL])),
        "CLAS": alignment_score(
            alignment,
            lambda w, ga: (ga(w.parent), w.columns[DEPREL]),
            filter_fn=lambda w: w.is_content_deprel),
        "MLAS": alignment_score(
            alignment,
            lambda w, ga: (ga(w.parent), w.columns[DEPREL], w.columns[UPOS], w.columns[FEATS],
                           [(ga(c), c.columns[DEPREL], c.columns[UPOS], c.columns[FEATS])
                            for c in w.functional_children]),
            filter_fn=lambda w: w.is_content_deprel),
        "BLEX": alignment_score(
            alignment,
            lambda w, ga: (ga(w.parent), w.columns[DEPREL],
                           w.columns[LEMMA] if ga(w).columns[LEMMA] != "_" else "_"),
            filter_fn=lambda w: w.is_content_deprel),
    }


def evaluate_files(gold_path, system_path):
    with open(gold_path, encoding="utf-8") as handle:
        gold_ud = load_conllu(handle.read())
    with open(system_path, encoding="utf-8") as handle:
        system_ud = load_conllu(handle.read())
    return evaluate(gold_ud, system_ud)
