"""Praat long-form TextGrid parsing and writing.

Only interval tiers are supported; short-form files are rejected. Parse
errors carry the offending line number.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import TextGridError


@dataclass(frozen=True)
class Interval:
    xmin: float
    xmax: float
    text: str


@dataclass(frozen=True)
class IntervalTier:
    name: str
    xmin: float
    xmax: float
    intervals: tuple[Interval, ...]


@dataclass(frozen=True)
class TextGridDocument:
    xmin: float
    xmax: float
    tiers: tuple[IntervalTier, ...]

    def tier(self, name: str) -> IntervalTier:
        for t in self.tiers:
            if t.name == name:
                return t
        raise KeyError(f"no tier named {name!r}")


def _fmt(x: float) -> str:
    # repr round-trips exactly through float(); integers stay compact
    return repr(float(x))


def _quote(s: str) -> str:
    return '"' + s.replace('"', '""') + '"'


def write_textgrid(doc: TextGridDocument) -> str:
    lines = [
        'File type = "ooTextFile"',
        'Object class = "TextGrid"',
        "",
        f"xmin = {_fmt(doc.xmin)}",
        f"xmax = {_fmt(doc.xmax)}",
        "tiers? <exists>",
        f"size = {len(doc.tiers)}",
        "item []:",
    ]
    for ti, tier in enumerate(doc.tiers, start=1):
        lines.append(f"    item [{ti}]:")
        lines.append('        class = "IntervalTier"')
        lines.append(f"        name = {_quote(tier.name)}")
        lines.append(f"        xmin = {_fmt(tier.xmin)}")
        lines.append(f"        xmax = {_fmt(tier.xmax)}")
        lines.append(f"        intervals: size = {len(tier.intervals)}")
        for ii, iv in enumerate(tier.intervals, start=1):
            lines.append(f"        intervals [{ii}]:")
            lines.append(f"            xmin = {_fmt(iv.xmin)}")
            lines.append(f"            xmax = {_fmt(iv.xmax)}")
            lines.append(f"            text = {_quote(iv.text)}")
    return "\n".join(lines) + "\n"


class _Cursor:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.i = 0

    def next_content(self) -> tuple[str, int]:
        while self.i < len(self.lines):
            line = self.lines[self.i].strip()
            self.i += 1
            if line:
                return line, self.i
        raise TextGridError("unexpected end of file", line=len(self.lines))

    def expect(self, pattern: str, what: str) -> tuple[re.Match, int]:
        line, no = self.next_content()
        m = re.fullmatch(pattern, line)
        if not m:
            raise TextGridError(f"expected {what}, got {line!r}", line=no)
        return m, no


_NUM = r"(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
_STR = r'"((?:[^"]|"")*)"'


def _unquote(s: str) -> str:
    return s.replace('""', '"')


def parse_textgrid(text: str) -> TextGridDocument:
    """Parse a long-form TextGrid; raises TextGridError with a line number."""
    cur = _Cursor(text)
    m, no = cur.expect(r"File type\s*=\s*" + _STR, "File type header")
    if m.group(1) != "ooTextFile":
        raise TextGridError(f"unsupported file type {m.group(1)!r}", line=no)
    m, no = cur.expect(r"Object class\s*=\s*" + _STR, "Object class header")
    if m.group(1) != "TextGrid":
        raise TextGridError(f"unsupported object class {m.group(1)!r}", line=no)
    m, _ = cur.expect(r"xmin\s*=\s*" + _NUM, "xmin")
    xmin = float(m.group(1))
    m, no = cur.expect(r"xmax\s*=\s*" + _NUM, "xmax")
    xmax = float(m.group(1))
    if xmax < xmin:
        raise TextGridError(f"xmax {xmax} < xmin {xmin}", line=no)
    cur.expect(r"tiers\?\s*<exists>", "tiers? <exists>")
    m, _ = cur.expect(r"size\s*=\s*(\d+)", "tier count")
    n_tiers = int(m.group(1))
    cur.expect(r"item \[\]:", "item []: header")

    tiers = []
    for ti in range(1, n_tiers + 1):
        cur.expect(rf"item \[{ti}\]:", f"item [{ti}]:")
        m, no = cur.expect(r"class\s*=\s*" + _STR, "tier class")
        if m.group(1) != "IntervalTier":
            raise TextGridError(f"unsupported tier class {m.group(1)!r}", line=no)
        m, _ = cur.expect(r"name\s*=\s*" + _STR, "tier name")
        name = _unquote(m.group(1))
        m, _ = cur.expect(r"xmin\s*=\s*" + _NUM, "tier xmin")
        t_xmin = float(m.group(1))
        m, no = cur.expect(r"xmax\s*=\s*" + _NUM, "tier xmax")
        t_xmax = float(m.group(1))
        if t_xmin < xmin or t_xmax > xmax:
            raise TextGridError(
                f"tier range [{t_xmin}, {t_xmax}] outside document range", line=no
            )
        m, _ = cur.expect(r"intervals:\s*size\s*=\s*(\d+)", "interval count")
        n_int = int(m.group(1))
        intervals = []
        prev_end = None
        for ii in range(1, n_int + 1):
            cur.expect(rf"intervals \[{ii}\]:", f"intervals [{ii}]:")
            m, _ = cur.expect(r"xmin\s*=\s*" + _NUM, "interval xmin")
            i_min = float(m.group(1))
            m, no = cur.expect(r"xmax\s*=\s*" + _NUM, "interval xmax")
            i_max = float(m.group(1))
            if i_max < i_min:
                raise TextGridError(f"interval end {i_max} < start {i_min}", line=no)
            if i_min < t_xmin or i_max > t_xmax:
                raise TextGridError("interval outside tier range", line=no)
            if prev_end is not None and i_min < prev_end:
                raise TextGridError(
                    f"interval starts at {i_min} before previous end {prev_end}", line=no
                )
            m, _ = cur.expect(r"text\s*=\s*" + _STR, "interval text")
            intervals.append(Interval(i_min, i_max, _unquote(m.group(1))))
            prev_end = i_max
        tiers.append(IntervalTier(name, t_xmin, t_xmax, tuple(intervals)))
    return TextGridDocument(xmin, xmax, tuple(tiers))
