"""Source positions shared across the pipeline.

All spans are expressed in snippet coordinates: 1-based lines, 0-based
character columns, end exclusive.  A ``LineIndex`` converts between spans,
character offsets, and UTF-8 byte offsets (the patch wire format uses bytes).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class Span:
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def as_dict(self) -> dict:
        return {
            "start_line": self.start_line,
            "start_col": self.start_col,
            "end_line": self.end_line,
            "end_col": self.end_col,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Span":
        return cls(d["start_line"], d["start_col"], d["end_line"], d["end_col"])


class LineIndex:
    """Offset/position arithmetic over one immutable text."""

    def __init__(self, text: str):
        self.text = text
        starts = [0]
        for i, ch in enumerate(text):
            if ch == "\n":
                starts.append(i + 1)
        self._starts = starts

    def offset(self, line: int, col: int) -> int:
        return self._starts[line - 1] + col

    def position(self, offset: int) -> tuple[int, int]:
        line = bisect.bisect_right(self._starts, offset) - 1
        return line + 1, offset - self._starts[line]

    def span_from_offsets(self, start: int, end: int) -> Span:
        sl, sc = self.position(start)
        el, ec = self.position(end)
        return Span(sl, sc, el, ec)

    def offsets(self, span: Span) -> tuple[int, int]:
        return self.offset(span.start_line, span.start_col), self.offset(
            span.end_line, span.end_col
        )

    def slice(self, span: Span) -> str:
        a, b = self.offsets(span)
        return self.text[a:b]

    def byte_offsets(self, span: Span) -> tuple[int, int]:
        """Span bounds as UTF-8 byte offsets into the text."""
        a, b = self.offsets(span)
        prefix = len(self.text[:a].encode("utf-8"))
        return prefix, prefix + len(self.text[a:b].encode("utf-8"))

    def offset_from_bytes(self, byte_offset: int) -> int:
        return len(self.text.encode("utf-8")[:byte_offset].decode("utf-8"))
