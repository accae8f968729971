"""Assemble a character stream of analysis code into complete top-level statements.

The boundary detector is a lexical scanner, not a parser: it tracks bracket
depth, string and comment state, backslash continuations, and indentation so
it can work on partial text.  Indented blocks (``if``/``for``/``def``/...)
are treated as one opaque statement ending at the first dedented code line.
Blank and comment-only lines produce no statement but stay in the snippet
text, so statement spans always slice the original text exactly.

Emission is prefix-stable: a statement is only ever emitted once a character
event (newline at depth zero, ``;``, dedent, end of stream) closes it, so any
chunking of the same text yields the same statement sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import IncompleteSnippetError, SequenceError
from .spans import LineIndex, Span

_OPEN = "([{"
_CLOSE = ")]}"
_BLOCK_CONTINUATIONS = {"else", "elif", "except", "finally"}


@dataclass(frozen=True)
class CodeChunk:
    snippet_id: str
    text: str
    seq: int


@dataclass(frozen=True)
class StatementUnit:
    snippet_id: str
    index: int
    source: str
    span: Span


class _Cursor:
    """Character walker tracking string/comment/bracket state.

    With ``final`` unset, quote runs or backslashes at the end of the buffer
    yield a "pending" event (the next chunk decides what they are); with
    ``final`` set they are resolved as-is.
    """

    __slots__ = ("text", "n", "i", "final", "depth", "quote", "triple",
                 "escape", "comment", "last_code_end", "last_char")

    def __init__(self, text: str, i: int, final: bool = False):
        self.text = text
        self.n = len(text)
        self.i = i
        self.final = final
        self.depth = 0
        self.quote = None
        self.triple = False
        self.escape = False
        self.comment = False
        self.last_code_end = i
        self.last_char = ""

    @property
    def in_string(self) -> bool:
        return self.quote is not None

    def _mark(self, end: int, ch: str) -> None:
        self.last_code_end = end
        self.last_char = ch

    def step(self) -> str:
        """Consume one char (or quote run); returns an event tag.

        Tags: "" (plain progress), "newline" (newline at depth 0 outside any
        string), "semicolon" (depth 0), "pending" (ran out of text while the
        next char is needed to decide).
        """
        text, i = self.text, self.i
        ch = text[i]

        if self.quote is not None:
            if self.escape:
                self.escape = False
                self.i += 1
                return ""
            if ch == "\\":
                self.escape = True
                self.i += 1
                return ""
            if self.triple:
                if ch == self.quote and text[i : i + 3] == self.quote * 3:
                    self.quote = None
                    self.i += 3
                    self._mark(self.i, ch)
                    return ""
                if ch == self.quote and i + 3 > self.n and not self.final:
                    return "pending"
                self.i += 1
                return ""
            if ch == self.quote:
                self.quote = None
                self.i += 1
                self._mark(self.i, ch)
                return ""
            # A bare newline inside a single-quoted string never closes the
            # statement; unterminated strings surface as residue at finalize.
            self.i += 1
            return ""

        if self.comment:
            if ch == "\n":
                self.comment = False
                return self._newline()
            self.i += 1
            return ""

        if ch == "#":
            self.comment = True
            self.i += 1
            return ""
        if ch in "'\"":
            if text[i : i + 3] == ch * 3:
                self.quote, self.triple = ch, True
                self.i += 3
            elif not self.final and i + 3 > self.n and text[i:] == ch * (self.n - i):
                # Could still become a triple quote; wait for more text.
                return "pending"
            else:
                self.quote, self.triple = ch, False
                self.i += 1
            self._mark(self.i, ch)
            return ""
        if ch in _OPEN:
            self.depth += 1
            self.i += 1
            self._mark(self.i, ch)
            return ""
        if ch in _CLOSE:
            self.depth = max(0, self.depth - 1)
            self.i += 1
            self._mark(self.i, ch)
            return ""
        if ch == "\\":
            if i + 1 < self.n and text[i + 1] == "\n":
                self.i += 2
                return ""
            if i + 1 >= self.n and not self.final:
                return "pending"
            self.i += 1
            self._mark(self.i, ch)
            return ""
        if ch == "\n":
            return self._newline()
        if ch == ";" and self.depth == 0:
            self.i += 1
            return "semicolon"
        self.i += 1
        if not ch.isspace():
            self._mark(self.i, ch)
        return ""

    def _newline(self) -> str:
        self.i += 1
        if self.depth == 0:
            return "newline"
        return ""


def _skip_trivia(text: str, i: int) -> int:
    """Advance past whitespace and comment-only regions."""
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "#":
            j = text.find("\n", i)
            i = n if j < 0 else j + 1
        elif ch.isspace():
            i += 1
        else:
            break
    return i


def _line_start(text: str, i: int) -> int:
    return text.rfind("\n", 0, i) + 1


def _scan_statement(text: str, start: int, final: bool):
    """Scan one statement beginning at ``start`` (a code character).

    Returns ``(end, next_i)`` for a complete statement, or ``None`` while the
    statement cannot be closed yet (or, with ``final``, can never be).
    """
    n = len(text)
    indent = start - _line_start(text, start)
    cur = _Cursor(text, start, final=final)
    decorator = text[start] == "@"
    in_block = False

    def clean() -> bool:
        return cur.depth == 0 and not cur.in_string

    # Phase 1: the opening logical line(s).
    while not in_block:
        if cur.i >= n:
            if final and clean():
                return cur.last_code_end, n
            return None
        event = cur.step()
        if event == "pending":
            if final:
                return (cur.last_code_end, n) if clean() else None
            return None
        if event == "semicolon":
            return cur.last_code_end, cur.i
        if event == "newline":
            if cur.last_char == ":":
                in_block = True
            elif decorator:
                continue
            else:
                return cur.last_code_end, cur.i

    # Phase 2: block body, consumed line by line until dedent.
    while True:
        if cur.i >= n:
            if final and clean():
                return cur.last_code_end, n
            return None
        line_at = cur.i
        j = line_at
        while j < n and text[j] in " \t":
            j += 1
        if j >= n:
            if final and clean():
                return cur.last_code_end, n
            return None
        ch = text[j]
        if ch == "\n":
            cur.i = j + 1
            continue
        if ch == "#":
            k = text.find("\n", j)
            if k < 0:
                if final:
                    return cur.last_code_end, n
                return None
            cur.i = k + 1
            continue
        line_indent = j - line_at
        if line_indent <= indent:
            # Dedent: the block ends here unless the line continues the
            # compound statement (else/elif/except/finally).
            word_end = j
            while word_end < n and (text[word_end].isalpha() or text[word_end] == "_"):
                word_end += 1
            if word_end >= n and not final:
                return None
            word = text[j:word_end]
            if word not in _BLOCK_CONTINUATIONS:
                return cur.last_code_end, line_at
            if word_end < n and (text[word_end].isalnum() or text[word_end] == "_"):
                return cur.last_code_end, line_at
        # The line belongs to the block: consume its logical line.
        cur.i = j
        while True:
            if cur.i >= n:
                if final and clean():
                    return cur.last_code_end, n
                return None
            event = cur.step()
            if event == "pending":
                if final:
                    return (cur.last_code_end, n) if clean() else None
                return None
            if event == "newline":
                break
            # Semicolons inside a block body stay within the statement.


def _scan(text: str, final: bool):
    """Split ``text`` into complete statement offset ranges.

    Returns ``(ranges, pending_start)``; ``pending_start`` is the offset of
    unconsumed code (an unclosed statement) or ``None`` when only trivia
    remains.
    """
    ranges = []
    i = 0
    n = len(text)
    while True:
        i = _skip_trivia(text, i)
        if i >= n:
            return ranges, None
        result = _scan_statement(text, i, final)
        if result is None:
            return ranges, i
        end, next_i = result
        if end > i:
            ranges.append((i, end))
        i = next_i


class SnippetBuffer:
    """Single-writer accumulator for one snippet's chunk stream."""

    def __init__(self, snippet_id: str):
        self.snippet_id = snippet_id
        self.text = ""
        self._next_seq = 0
        self._emitted = 0
        self._finalized = False

    def push_chunk(self, chunk: CodeChunk) -> list[StatementUnit]:
        if self._finalized:
            raise SequenceError(f"snippet {self.snippet_id} already finalized")
        if chunk.snippet_id != self.snippet_id:
            raise SequenceError(
                f"chunk for snippet {chunk.snippet_id!r} pushed into {self.snippet_id!r}"
            )
        if chunk.seq != self._next_seq:
            raise SequenceError(
                f"expected chunk seq {self._next_seq}, got {chunk.seq}"
            )
        self._next_seq += 1
        self.text += chunk.text
        return self._emit(final=False)

    def finalize(self) -> list[StatementUnit]:
        if self._finalized:
            return []
        self._finalized = True
        units = self._emit(final=True)
        _, pending = _scan(self.text, final=True)
        if pending is not None:
            residue = self.text[pending:]
            raise IncompleteSnippetError(
                f"snippet {self.snippet_id} ended with unclosable text", residue
            )
        return units

    def _emit(self, final: bool) -> list[StatementUnit]:
        ranges, _ = _scan(self.text, final=final)
        fresh = ranges[self._emitted :]
        if not fresh:
            return []
        index = LineIndex(self.text)
        units = []
        for k, (a, b) in enumerate(fresh, start=self._emitted):
            units.append(
                StatementUnit(
                    snippet_id=self.snippet_id,
                    index=k,
                    source=self.text[a:b],
                    span=index.span_from_offsets(a, b),
                )
            )
        self._emitted = len(ranges)
        return units


def split_statements(text: str, snippet_id: str = "s0") -> list[StatementUnit]:
    """One-shot split of a whole snippet (the non-streaming path)."""
    buf = SnippetBuffer(snippet_id)
    units = buf.push_chunk(CodeChunk(snippet_id, text, 0))
    units.extend(buf.finalize())
    return units
