"""Lemmatization as classification over character edit scripts.

A script maps a word form to its lemma deterministically: the lowercased
form is split around a root (the longest common contiguous substring of
lowercased form and lemma), minimal edit programs rewrite the prefix and
suffix, and a casing directive restores the lemma's capitalization.
Suppletive pairs with no shared character fall back to an absolute
script that stores the lemma verbatim.

Scripts have a printable canonical encoding (used in checkpoints and as
the classifier class key): "A:" + lemma for absolute scripts, otherwise
"C:<casing>|P:<ops>|S:<ops>" where casing is l / f / u / e<p1>,<p2>,...
and each op is one of k (keep), d (delete), i<c> (insert), s<c>
(substitute).  Op payloads are single characters consumed verbatim, so
the encoding is unambiguous even when a payload is "|".
"""

from __future__ import annotations

from dataclasses import dataclass

from udjoint.conllu import Treebank


class ScriptError(ValueError):
    """Malformed script or encoding."""


class OverrunError(ScriptError):
    """Edit program consumes more characters than the form has.

    At inference time callers catch this and leave the form unchanged.
    """


_CONSUMING = frozenset("kds")  # op kinds that consume a form character
_KIND_NAMES = {"k": "keep", "d": "delete", "i": "insert", "s": "substitute"}


@dataclass(frozen=True, slots=True)
class EditOp:
    """One edit: kind in {keep, delete, insert, substitute}.

    ``char`` carries exactly one character for insert/substitute and is
    empty for keep/delete.
    """

    kind: str
    char: str = ""

    def __post_init__(self):
        if self.kind not in _KIND_NAMES.values():
            raise ScriptError(f"unknown op kind {self.kind!r}")
        needs_char = self.kind in ("insert", "substitute")
        if needs_char != (len(self.char) == 1):
            raise ScriptError(f"op {self.kind} with payload {self.char!r}")

    @property
    def code(self) -> str:
        letter = self.kind[0] if self.kind != "substitute" else "s"
        return letter + self.char

    @property
    def consumes(self) -> bool:
        return self.kind != "insert"


@dataclass(frozen=True, slots=True)
class EditScript:
    """A total function from form to lemma.

    When ``absolute`` is set the other fields are ignored and the lemma
    is returned verbatim.  ``upper_positions`` is meaningful only for
    casing "explicit".
    """

    casing: str = "all_lower"
    upper_positions: tuple[int, ...] = ()
    prefix_ops: tuple[EditOp, ...] = ()
    suffix_ops: tuple[EditOp, ...] = ()
    absolute: str | None = None


IDENTITY = EditScript()


def induce_script(form: str, lemma: str) -> EditScript:
    """Induce the minimal edit script turning ``form`` into ``lemma``.

    Root selection: longest common contiguous substring of the lowercased
    strings, ties broken leftmost in form then lemma.  Edit programs are
    minimal under the cost order (non-keep ops, total ops), ties broken
    by the lexicographic order of encoded ops.  Falls back to an absolute
    script when nothing is shared (or when exotic case mapping defeats
    the positional casing directive), so the round trip
    apply_script(induce_script(f, l), f) == l holds unconditionally.
    """
    if not form:
        raise ScriptError("form must be non-empty")
    lower_form, lower_lemma = form.lower(), lemma.lower()
    length, at_form, at_lemma = _longest_common_substring(lower_form, lower_lemma)
    if length == 0:
        return EditScript(absolute=lemma)
    casing = _choose_casing(lemma, lower_lemma)
    if casing is None:
        return EditScript(absolute=lemma)
    script = EditScript(
        casing=casing[0],
        upper_positions=casing[1],
        prefix_ops=_min_edit_program(lower_form[:at_form], lower_lemma[:at_lemma]),
        suffix_ops=_min_edit_program(
            lower_form[at_form + length :], lower_lemma[at_lemma + length :]
        ),
    )
    try:
        if apply_script(script, form) == lemma:
            return script
    except OverrunError:  # pragma: no cover - length bookkeeping prevents this
        pass
    # Unicode case mapping changed string length or is not position-stable.
    return EditScript(absolute=lemma)


def apply_script(script: EditScript, form: str) -> str:
    """Apply a script to a form; total except for OverrunError."""
    if script.absolute is not None:
        return script.absolute
    lowered = form.lower()
    need_prefix = sum(op.consumes for op in script.prefix_ops)
    need_suffix = sum(op.consumes for op in script.suffix_ops)
    if need_prefix + need_suffix > len(lowered):
        raise OverrunError(
            f"script needs {need_prefix}+{need_suffix} characters, form has {len(lowered)}"
        )
    middle_end = len(lowered) - need_suffix
    result = (
        _run_program(script.prefix_ops, lowered[:need_prefix])
        + lowered[need_prefix:middle_end]
        + _run_program(script.suffix_ops, lowered[middle_end:])
    )
    return _apply_casing(script, result)


def _run_program(ops: tuple[EditOp, ...], segment: str) -> str:
    out: list[str] = []
    position = 0
    for op in ops:
        if op.kind == "keep":
            out.append(segment[position])
            position += 1
        elif op.kind == "delete":
            position += 1
        elif op.kind == "substitute":
            out.append(op.char)
            position += 1
        else:  # insert
            out.append(op.char)
    return "".join(out)


def _apply_casing(script: EditScript, text: str) -> str:
    if script.casing == "all_lower":
        return text
    if script.casing == "first_upper":
        return text[:1].upper() + text[1:]
    if script.casing == "all_upper":
        return text.upper()
    chars = list(text)
    for position in script.upper_positions:
        if position < len(chars):
            chars[position] = chars[position].upper()
    return "".join(chars)


def _choose_casing(lemma: str, lower_lemma: str) -> tuple[str, tuple[int, ...]] | None:
    """Smallest directive reproducing ``lemma`` from its lowercase form."""
    if lemma == lower_lemma:
        return ("all_lower", ())
    if lemma == lower_lemma[:1].upper() + lower_lemma[1:]:
        return ("first_upper", ())
    if lemma == lower_lemma.upper():
        return ("all_upper", ())
    if len(lemma) != len(lower_lemma):
        return None  # case mapping is not length-stable; absolute fallback
    positions = tuple(i for i, c in enumerate(lemma) if c != lower_lemma[i])
    candidate = list(lower_lemma)
    for position in positions:
        candidate[position] = candidate[position].upper()
    if "".join(candidate) != lemma:
        return None
    return ("explicit", positions)


def _longest_common_substring(a: str, b: str) -> tuple[int, int, int]:
    """(length, start_a, start_b) of the longest common contiguous substring.

    Ties break on smallest start_a, then smallest start_b.
    """
    best = (0, 0, 0)
    previous = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        current = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                length = previous[j - 1] + 1
                current[j] = length
                candidate = (length, i - length, j - length)
                if length > best[0] or (length == best[0] and candidate[1:] < best[1:]):
                    best = candidate
        previous = current
    return best


def _min_edit_program(src: str, dst: str) -> tuple[EditOp, ...]:
    """Minimal op sequence rewriting src to dst.

    Cost order: (non-keep ops, total ops), remaining ties broken by the
    lexicographic order of the encoded op sequence (d < i<c> < k < s<c>).
    Equal-cost programs have equal length, so elementwise comparison of
    encoded tuples is a total, consistent tie-break.
    """
    rows = len(src) + 1
    cols = len(dst) + 1
    # table[i][j] = (nonkeep, total, encoded op tuple) for src[:i] -> dst[:j]
    table: list[list[tuple[int, int, tuple[str, ...]]]] = [
        [(0, 0, ())] * cols for _ in range(rows)
    ]
    for i in range(1, rows):
        nk, total, ops = table[i - 1][0]
        table[i][0] = (nk + 1, total + 1, ops + ("d",))
    for j in range(1, cols):
        nk, total, ops = table[0][j - 1]
        table[0][j] = (nk + 1, total + 1, ops + ("i" + dst[j - 1],))
    for i in range(1, rows):
        for j in range(1, cols):
            nk, total, ops = table[i - 1][j]
            best = (nk + 1, total + 1, ops + ("d",))
            nk, total, ops = table[i][j - 1]
            candidate = (nk + 1, total + 1, ops + ("i" + dst[j - 1],))
            if candidate < best:
                best = candidate
            nk, total, ops = table[i - 1][j - 1]
            if src[i - 1] == dst[j - 1]:
                candidate = (nk, total + 1, ops + ("k",))
            else:
                candidate = (nk + 1, total + 1, ops + ("s" + dst[j - 1],))
            if candidate < best:
                best = candidate
            table[i][j] = best
    return tuple(_op_from_code(code) for code in table[rows - 1][cols - 1][2])


def _op_from_code(code: str) -> EditOp:
    kind = _KIND_NAMES[code[0]]
    return EditOp(kind, code[1:])


def encode_script(script: EditScript) -> str:
    """Canonical printable encoding; equal encodings = same class."""
    if script.absolute is not None:
        return "A:" + script.absolute
    if script.casing == "explicit":
        casing = "e" + ",".join(str(p) for p in script.upper_positions)
    else:
        casing = {"all_lower": "l", "first_upper": "f", "all_upper": "u"}[script.casing]
    prefix = "".join(op.code for op in script.prefix_ops)
    suffix = "".join(op.code for op in script.suffix_ops)
    return f"C:{casing}|P:{prefix}|S:{suffix}"


def decode_script(encoded: str) -> EditScript:
    """Inverse of encode_script."""
    if encoded.startswith("A:"):
        return EditScript(absolute=encoded[2:])
    if not encoded.startswith("C:"):
        raise ScriptError(f"bad script encoding {encoded!r}")
    bar = encoded.find("|", 2)
    if bar < 0 or not encoded.startswith("P:", bar + 1):
        raise ScriptError(f"bad script encoding {encoded!r}")
    casing_code = encoded[2:bar]
    if casing_code == "l":
        casing, positions = "all_lower", ()
    elif casing_code == "f":
        casing, positions = "first_upper", ()
    elif casing_code == "u":
        casing, positions = "all_upper", ()
    elif casing_code.startswith("e"):
        casing = "explicit"
        body = casing_code[1:]
        try:
            positions = tuple(int(p) for p in body.split(",")) if body else ()
        except ValueError:
            raise ScriptError(f"bad casing positions in {encoded!r}") from None
    else:
        raise ScriptError(f"bad casing code {casing_code!r} in {encoded!r}")
    prefix_ops, position = _parse_ops(encoded, bar + 3)
    if not encoded.startswith("|S:", position):
        raise ScriptError(f"bad script encoding {encoded!r}")
    suffix_ops, position = _parse_ops(encoded, position + 3)
    if position != len(encoded):
        raise ScriptError(f"trailing characters in script encoding {encoded!r}")
    return EditScript(
        casing=casing,
        upper_positions=positions,
        prefix_ops=prefix_ops,
        suffix_ops=suffix_ops,
    )


def _parse_ops(encoded: str, position: int) -> tuple[tuple[EditOp, ...], int]:
    ops: list[EditOp] = []
    while position < len(encoded):
        letter = encoded[position]
        if letter in ("k", "d"):
            ops.append(_op_from_code(letter))
            position += 1
        elif letter in ("i", "s"):
            if position + 1 >= len(encoded):
                raise ScriptError(f"truncated op in script encoding {encoded!r}")
            ops.append(_op_from_code(encoded[position : position + 2]))
            position += 2
        elif letter == "|":
            break  # section delimiter; "|" payloads were consumed above
        else:
            raise ScriptError(f"bad op code {letter!r} in script encoding {encoded!r}")
    return tuple(ops), position


@dataclass(frozen=True)
class ScriptInventory:
    """The closed set of scripts observed in training data.

    Class ids are dense, 0..N-1, and class 0 is always the identity
    script (lowercase the form) even when absent from the data.
    """

    scripts: tuple[EditScript, ...]
    index: dict[str, int]

    def __len__(self) -> int:
        return len(self.scripts)

    def class_id(self, form: str, lemma: str) -> int | None:
        """Class of the script induced for the pair, or None if unseen."""
        return self.index.get(encode_script(induce_script(form, lemma)))

    def predict_lemma(self, class_id: int, form: str) -> str:
        """Apply class ``class_id``; an overrun leaves the form unchanged."""
        try:
            return apply_script(self.scripts[class_id], form)
        except OverrunError:
            return form

    @property
    def encodings(self) -> tuple[str, ...]:
        return tuple(encode_script(s) for s in self.scripts)


def build_inventory(tb: Treebank) -> ScriptInventory:
    """Induce a script for every (form, lemma) pair in the treebank.

    Deduplicates by canonical encoding; ids follow first occurrence,
    after the identity script at class 0.
    """
    scripts = [IDENTITY]
    index = {encode_script(IDENTITY): 0}
    for sentence in tb.sentences:
        for word in sentence.words:
            script = induce_script(word.form, word.lemma)
            encoded = encode_script(script)
            if encoded not in index:
                index[encoded] = len(scripts)
                scripts.append(script)
    return ScriptInventory(tuple(scripts), index)


def inventory_from_encodings(encodings: list[str] | tuple[str, ...]) -> ScriptInventory:
    """Rebuild an inventory from canonical encodings (checkpoint load)."""
    scripts = tuple(decode_script(e) for e in encodings)
    index = {e: i for i, e in enumerate(encodings)}
    if len(index) != len(encodings):
        raise ScriptError("duplicate script encodings in inventory")
    if not scripts or scripts[0] != IDENTITY:
        raise ScriptError("inventory class 0 must be the identity script")
    return ScriptInventory(scripts, index)
