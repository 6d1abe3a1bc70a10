"""Query-code preparation and prompt assembly.

A prompt has three parts, always rendered in this order: the natural
language instruction, the retrieved reference passages (in rank order),
and the code to optimise.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import clike
from .errors import AnnotationError, ConfigError, ExtractionError, InvalidInputError, PromptTooLongError

logger = logging.getLogger(__name__)

MARKER = "// add pragma lines here"
DEFAULT_NLI = (
    "You are an HLS expert. Insert pragmas to optimize the following code for latency. "
    "Return the complete modified function in one code block."
)
DEFAULT_TEMPLATE = "{NLI}\n\n{REFERENCES}{QUERY}"
PLACEHOLDERS = ("{NLI}", "{REFERENCES}", "{QUERY}")
ANNOTATE_MODES = ("manual-list", "auto-before-loops")


@dataclass(frozen=True)
class BodyExtraction:
    body: str
    status: str  # "extracted" | "no-loop" | "failed" | "disabled"
    start: int = 0
    end: int = 0
    loops: int = 0
    error: str | None = None


def extract_main_body(source: str) -> BodyExtraction:
    """Cut the query down to its loop nest, dropping the set-up code before it.

    The first loop at function-body depth (or at file level, for a bare
    fragment) starts the region; every later sibling loop in the same block
    extends it, and the code between siblings is kept. Without any loop the
    full source comes back with status ``"no-loop"``.

    Raises:
        ExtractionError: braces or loop headers do not balance.
    """
    masked = clike.mask_source(source)
    clike.check_balanced(masked)
    depths = clike.brace_depths(masked)
    keywords = [m.start() for m in clike.LOOP_RE.finditer(masked)]

    for depth in (1, 0):
        firsts = [p for p in keywords if depths[p] == depth]
        if firsts:
            break
    else:
        return BodyExtraction(source, "no-loop", 0, len(source))

    first = clike.loop_at(masked, firsts[0])
    block_end = _enclosing_block_end(masked, depths, first.start)
    start = clike.loop_text_start(source, masked, first.start)
    end = first.end
    count = 1
    for p in firsts[1:]:
        if p < end:
            continue
        if p >= block_end:
            break
        end = clike.loop_at(masked, p).end
        count += 1
    return BodyExtraction(source[start:end], "extracted", start, end, count)


def _enclosing_block_end(masked: str, depths: list[int], pos: int) -> int:
    d = depths[pos]
    if d == 0:
        return len(masked)
    for i in range(pos, len(masked)):
        if masked[i] == "}" and depths[i] == d:
            return i
    return len(masked)


@dataclass(frozen=True)
class AnnotatedCode:
    text: str
    positions: tuple[int, ...]  # 1-based line numbers of the markers in ``text``


def _indent_of(line: str) -> str:
    return line[: len(line) - len(line.lstrip())]


def insert_annotations(code: str, mode: str = "auto-before-loops", lines: Sequence[int] = ()) -> AnnotatedCode:
    """Insert ``// add pragma lines here`` comment lines into ``code``.

    ``auto-before-loops`` marks the two places HLS loop pragmas go: the line
    before each loop header and the first line of each loop body. In
    ``manual-list`` mode each entry of ``lines`` is a 1-based line number of
    the original code; the marker takes that line number and the original
    line moves down (``len + 1`` appends at the end).
    """
    if not code:
        raise InvalidInputError("cannot annotate empty code")
    if mode not in ANNOTATE_MODES:
        raise InvalidInputError(f"unknown annotation mode {mode!r}; expected one of {ANNOTATE_MODES}")
    src_lines = code.split("\n")
    n = len(src_lines)
    # slot s = insert before original line s (0-based); slot n appends
    inserts: list[tuple[int, str]] = []

    if mode == "manual-list":
        if not lines:
            raise AnnotationError("manual-list mode needs at least one line number")
        bad = [ln for ln in lines if not 1 <= ln <= n + 1]
        if bad:
            raise AnnotationError(f"line numbers out of range 1..{n + 1}: {bad}", bad)
        for ln in sorted(lines):
            ref = src_lines[ln - 1] if ln <= n else src_lines[-1]
            inserts.append((ln - 1, _indent_of(ref)))
    else:
        masked = clike.mask_source(code)
        line_of = _line_index(code)
        for loop in clike.find_loops(masked):
            header_line = line_of(loop.start)
            indent = _indent_of(src_lines[header_line])
            inserts.append((header_line, indent))
            body_line = line_of(loop.body_open) if loop.body_open is not None else line_of(loop.header_end - 1)
            nxt = body_line + 1
            inner = indent + "    "
            if nxt < n and len(_indent_of(src_lines[nxt])) > len(indent) and src_lines[nxt].strip():
                inner = _indent_of(src_lines[nxt])
            inserts.append((nxt, inner))

    out: list[str] = []
    positions: list[int] = []
    by_slot: dict[int, list[str]] = {}
    for slot, indent in inserts:
        by_slot.setdefault(slot, []).append(indent)
    for slot in range(n + 1):
        for indent in by_slot.get(slot, []):
            out.append(indent + MARKER)
            positions.append(len(out))
        if slot < n:
            out.append(src_lines[slot])
    return AnnotatedCode("\n".join(out), tuple(positions))


def _line_index(text: str):
    starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def line_of(pos: int) -> int:
        lo, hi = 0, len(starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if starts[mid] <= pos:
                lo = mid
            else:
                hi = mid - 1
        return lo

    return line_of


def parse_annotate_option(value: str | None) -> tuple[str | None, tuple[int, ...]]:
    """Translate the ``--annotate`` option: ``off``, ``auto`` or ``manual:3,7``."""
    if value in (None, "", "off"):
        return None, ()
    if value == "auto":
        return "auto-before-loops", ()
    if value.startswith("manual:"):
        try:
            nums = tuple(int(x) for x in value[len("manual:"):].split(",") if x.strip())
        except ValueError as exc:
            raise ConfigError(f"bad manual annotation list {value!r}") from exc
        if not nums:
            raise ConfigError("manual annotation list is empty")
        return "manual-list", nums
    raise ConfigError(f"--annotate must be off, auto or manual:<lines>, got {value!r}")


@dataclass(frozen=True)
class QueryCode:
    full_source: str
    body: str
    annotations_inserted: bool = False
    annotation_positions: tuple[int, ...] = ()
    extraction: BodyExtraction | None = None

    @property
    def text(self) -> str:
        """What goes into the prompt (body plus any markers)."""
        return self.body


def prepare_query(
    source: str,
    extract_body: bool = True,
    annotate: str | None = None,
    annotate_lines: Sequence[int] = (),
) -> QueryCode:
    """Body extraction then annotation, falling back to the full source when extraction fails."""
    if not source.strip():
        raise InvalidInputError("query source is empty")
    if extract_body:
        try:
            ext = extract_main_body(source)
        except ExtractionError as exc:
            logger.warning("body extraction failed, using full source: %s", exc)
            ext = BodyExtraction(source, "failed", 0, len(source), error=str(exc))
    else:
        ext = BodyExtraction(source, "disabled", 0, len(source))
    body = ext.body
    if annotate is None:
        return QueryCode(source, body, False, (), ext)
    annotated = insert_annotations(body, annotate, annotate_lines)
    return QueryCode(source, annotated.text, True, annotated.positions, ext)


@dataclass(frozen=True)
class PromptSpec:
    nli: str = DEFAULT_NLI
    retrieved: tuple[tuple[str, str], ...] = ()
    query: QueryCode | None = None
    k: int = 4
    template: str = DEFAULT_TEMPLATE
    reference_header: str = "### Reference {i} ({chunk_id})"
    query_header: str = "### Code to optimize"
    query_lang: str = "c"
    max_prompt_chars: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "retrieved", tuple(tuple(r) for r in self.retrieved))
        if len(self.retrieved) > self.k:
            raise InvalidInputError(f"{len(self.retrieved)} references exceed k={self.k}")
        validate_template(self.template)


def validate_template(template: str) -> None:
    where = [template.find(p) for p in PLACEHOLDERS]
    missing = [p for p, w in zip(PLACEHOLDERS, where) if w < 0]
    if missing:
        raise ConfigError(f"prompt template lacks placeholders {missing}")
    if where != sorted(where):
        raise ConfigError("prompt template must place {NLI}, {REFERENCES} and {QUERY} in that order")


def load_template(path: str | Path) -> str:
    template = Path(path).read_text(encoding="utf-8")
    validate_template(template)
    return template


def _fence(content: str) -> str:
    longest = max((len(m) for m in re.findall(r"`+", content)), default=0)
    return "`" * max(3, longest + 1)


def _fenced(content: str, lang: str = "") -> str:
    fence = _fence(content)
    body = content if content.endswith("\n") else content + "\n"
    return f"{fence}{lang}\n{body}{fence}"


def build_prompt(spec: PromptSpec) -> str:
    if not spec.nli.strip():
        raise InvalidInputError("instruction text is empty")
    if spec.query is None:
        raise InvalidInputError("prompt has no query code")
    refs = "".join(
        spec.reference_header.format(i=i, chunk_id=cid) + "\n" + _fenced(text) + "\n\n"
        for i, (cid, text) in enumerate(spec.retrieved, start=1)
    )
    query = spec.query_header + "\n" + _fenced(spec.query.text, spec.query_lang) + "\n"
    # sequential replace: the inserted text may itself contain placeholder-like braces
    head, rest = spec.template.split("{NLI}", 1)
    mid, tail = rest.split("{REFERENCES}", 1)
    before_q, after_q = tail.split("{QUERY}", 1)
    prompt = head + spec.nli.strip() + mid + refs + before_q + query + after_q
    if spec.max_prompt_chars is not None and len(prompt) > spec.max_prompt_chars:
        raise PromptTooLongError(len(prompt), spec.max_prompt_chars)
    logger.debug("rendered prompt: %d chars, %d references", len(prompt), len(spec.retrieved))
    return prompt


def build_prompt_fitting(spec: PromptSpec) -> tuple[str, PromptSpec]:
    """Like :func:`build_prompt`, dropping lowest-ranked references until it fits."""
    while True:
        try:
            return build_prompt(spec), spec
        except PromptTooLongError:
            if not spec.retrieved:
                raise
            dropped = spec.retrieved[-1][0]
            logger.warning("prompt too long, dropping reference %s", dropped)
            spec = PromptSpec(**{**spec.__dict__, "retrieved": spec.retrieved[:-1]})
