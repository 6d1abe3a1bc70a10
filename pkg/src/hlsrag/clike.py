"""Just enough lexical analysis of C/C++ to find loops and their extents.

Everything works on a *masked* copy of the source in which comments,
string and character literals, and preprocessor lines are blanked out
(newlines kept), so offsets in the mask are offsets in the original.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ExtractionError

LOOP_RE = re.compile(r"\b(for|while|do)\b")
_IDENT_LABEL_RE = re.compile(r"^\s*(?:[A-Za-z_]\w*\s*:\s*)?$")
_LABEL_LINE_RE = re.compile(r"^\s*[A-Za-z_]\w*\s*:\s*$")


def mask_source(src: str) -> str:
    out = list(src)
    i, n = 0, len(src)
    line_start = True
    while i < n:
        c = src[i]
        if line_start and c == "#":
            # preprocessor directive, honouring backslash continuations
            j = i
            while j < n and not (src[j] == "\n" and src[j - 1] != "\\"):
                j += 1
            for p in range(i, j):
                if out[p] != "\n":
                    out[p] = " "
            i = j
            continue
        if c == "\n":
            line_start = True
            i += 1
            continue
        if not c.isspace():
            line_start = False
        if src.startswith("//", i):
            j = src.find("\n", i)
            j = n if j < 0 else j
            for p in range(i, j):
                out[p] = " "
            i = j
        elif src.startswith("/*", i):
            j = src.find("*/", i + 2)
            j = n if j < 0 else j + 2
            for p in range(i, j):
                if out[p] != "\n":
                    out[p] = " "
            i = j
        elif c in "\"'":
            j = i + 1
            while j < n and src[j] != c and src[j] != "\n":
                j += 2 if src[j] == "\\" else 1
            j = min(j + 1, n)
            for p in range(i + 1, j - 1):
                out[p] = " "
            i = j
        else:
            i += 1
    return "".join(out)


def brace_depths(masked: str) -> list[int]:
    """depth[i] = number of unclosed ``{`` before position i."""
    depths = []
    d = 0
    for c in masked:
        depths.append(d)
        if c == "{":
            d += 1
        elif c == "}":
            d -= 1
    return depths


def check_balanced(masked: str) -> None:
    d = 0
    for i, c in enumerate(masked):
        if c == "{":
            d += 1
        elif c == "}":
            d -= 1
            if d < 0:
                raise ExtractionError(f"unmatched '}}' at offset {i}")
    if d:
        raise ExtractionError(f"{d} unclosed '{{' at end of source")


def match_close(masked: str, pos: int, open_c: str, close_c: str) -> int:
    """Index just past the bracket matching ``masked[pos]``."""
    assert masked[pos] == open_c
    d = 0
    for i in range(pos, len(masked)):
        if masked[i] == open_c:
            d += 1
        elif masked[i] == close_c:
            d -= 1
            if d == 0:
                return i + 1
    raise ExtractionError(f"unmatched {open_c!r} at offset {pos}")


def skip_ws(masked: str, pos: int) -> int:
    while pos < len(masked) and masked[pos].isspace():
        pos += 1
    return pos


def _expect_paren(masked: str, pos: int, what: str) -> int:
    pos = skip_ws(masked, pos)
    if pos >= len(masked) or masked[pos] != "(":
        raise ExtractionError(f"expected '(' after {what} at offset {pos}")
    return match_close(masked, pos, "(", ")")


_KEYWORD_AT = re.compile(r"(for|while|do|if|else)\b")


def statement_end(masked: str, pos: int) -> int:
    pos = skip_ws(masked, pos)
    if pos >= len(masked):
        raise ExtractionError("statement expected before end of source")
    if masked[pos] == "{":
        return match_close(masked, pos, "{", "}")
    m = _KEYWORD_AT.match(masked, pos)
    if m:
        kw = m.group(1)
        if kw in ("for", "while", "do"):
            return loop_at(masked, pos).end
        if kw == "if":
            end = statement_end(masked, _expect_paren(masked, m.end(), "if"))
            nxt = skip_ws(masked, end)
            if masked.startswith("else", nxt) and not masked[nxt + 4:nxt + 5].isalnum():
                end = statement_end(masked, nxt + 4)
            return end
    # plain statement: up to the next ';' outside any brackets
    depth = 0
    for i in range(pos, len(masked)):
        c = masked[i]
        if c in "([{":
            depth += 1
        elif c in ")]}":
            depth -= 1
            if depth < 0:
                break
        elif c == ";" and depth == 0:
            return i + 1
    raise ExtractionError(f"unterminated statement at offset {pos}")


@dataclass(frozen=True)
class Loop:
    keyword: str
    start: int            # offset of the keyword
    header_end: int       # just past ')' of for/while, or past 'do'
    body_open: int | None  # offset of '{' opening the body, if braced
    end: int              # just past the loop's last character
    tail_while: int | None = None  # offset of the trailing 'while' in do/while


def loop_at(masked: str, pos: int) -> Loop:
    m = LOOP_RE.match(masked, pos)
    if not m:
        raise ExtractionError(f"no loop keyword at offset {pos}")
    kw = m.group(1)
    header_end = m.end() if kw == "do" else _expect_paren(masked, m.end(), kw)
    body = skip_ws(masked, header_end)
    body_open = body if body < len(masked) and masked[body] == "{" else None
    end = statement_end(masked, header_end)
    if kw != "do":
        return Loop(kw, pos, header_end, body_open, end)
    w = skip_ws(masked, end)
    if not (masked.startswith("while", w) and not masked[w + 5:w + 6].isalnum()):
        raise ExtractionError(f"'do' at offset {pos} has no matching 'while'")
    close = _expect_paren(masked, w + 5, "while")
    semi = skip_ws(masked, close)
    if semi >= len(masked) or masked[semi] != ";":
        raise ExtractionError(f"missing ';' after do/while at offset {close}")
    return Loop(kw, pos, header_end, body_open, semi + 1, tail_while=w)


def find_loops(masked: str) -> list[Loop]:
    """Every loop in the source, outer loops before the loops nested in them.

    Keywords that cannot be parsed as a loop are skipped.
    """
    loops = []
    tails = set()
    for m in LOOP_RE.finditer(masked):
        if m.start() in tails:
            continue
        try:
            loop = loop_at(masked, m.start())
        except ExtractionError:
            continue
        if loop.tail_while is not None:
            tails.add(loop.tail_while)
        loops.append(loop)
    return loops


def line_start(text: str, pos: int) -> int:
    return text.rfind("\n", 0, pos) + 1


def loop_text_start(src: str, masked: str, pos: int) -> int:
    """Start of a loop including its indentation and an optional ``label:`` prefix."""
    ls = line_start(masked, pos)
    if not _IDENT_LABEL_RE.match(masked[ls:pos]):
        return pos
    # a label alone on the line above belongs to the loop
    if ls > 0:
        prev = line_start(masked, ls - 1)
        if _LABEL_LINE_RE.match(masked[prev:ls - 1]):
            return prev
    return ls
