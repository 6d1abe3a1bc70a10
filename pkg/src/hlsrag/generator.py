"""k independent generation attempts against a chat-completion endpoint.

Failed attempts stay in the result list (as empty, flagged responses) so a
pass@k denominator is always ``attempts``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import httpx

from . import clike
from ._io import atomic_append_lines
from .errors import ConfigError, GenerationAuthError, TransportError

logger = logging.getLogger(__name__)

DEFAULT_SYSTEM = "You write synthesizable C/C++ for high-level synthesis tools."


@dataclass(frozen=True)
class GenerationConfig:
    model: str = "codellama-13b-instruct"
    endpoint: str | None = None
    temperature: float = 0.7
    max_tokens: int = 2048
    attempts: int = 10
    timeout_s: float = 120.0
    max_retries: int = 2
    max_in_flight: int = 2
    api_key_env: str = "GEN_API_KEY"
    system_prompt: str = DEFAULT_SYSTEM
    provider: str = "chat"  # "chat" | "mock"
    mock_script: str | None = None
    backoff_s: float = 1.0

    def __post_init__(self):
        if self.attempts < 1:
            raise ConfigError(f"attempts must be >= 1, got {self.attempts}")
        if not (self.temperature >= 0 and self.temperature != float("inf")):
            raise ConfigError(f"temperature must be finite and >= 0, got {self.temperature}")
        if self.max_retries < 0 or self.max_in_flight < 1:
            raise ConfigError("max_retries must be >= 0 and max_in_flight >= 1")
        if self.provider not in ("chat", "mock"):
            raise ConfigError(f"unknown generator provider {self.provider!r}")
        if self.provider == "chat" and not self.endpoint:
            raise ConfigError("chat generator requires an endpoint")


@dataclass(frozen=True)
class Attempt:
    attempt_index: int
    response: str
    failed: bool = False
    error: str | None = None


@dataclass(frozen=True)
class CandidateCode:
    attempt_index: int
    raw_response: str
    code: str | None
    extraction_method: str  # "fenced" | "heuristic" | "none"
    failed: bool = False


class ChatClient:
    def __init__(self, cfg: GenerationConfig, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(cfg.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(headers=headers, timeout=cfg.timeout_s, transport=transport)

    def complete(self, prompt: str, attempt_index: int) -> str:
        payload = {
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": self.cfg.system_prompt},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        }
        try:
            resp = self._client.post(self.cfg.endpoint, json=payload)
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise GenerationAuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc!r}") from exc

    def close(self):
        self._client.close()


class MockGenerator:
    """Scripted responses keyed by attempt index.

    Script JSON::

        {"responses": {"1": "text", "3": {"fail": "transport", "times": 1}},
         "default": "text used for unlisted attempts"}

    ``fail`` is ``"transport"``, ``"timeout"`` or ``"auth"``. ``times`` limits
    how many requests fail before the scripted ``response`` (if any) is
    returned; without it the failure is permanent.
    """

    def __init__(self, script: dict):
        self.responses = {int(k): v for k, v in script.get("responses", {}).items()}
        self.default = script.get("default")
        self._calls: dict[int, int] = {}
        self._lock = threading.Lock()
        self.requests: list[tuple[int, str]] = []

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MockGenerator":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def complete(self, prompt: str, attempt_index: int) -> str:
        with self._lock:
            n = self._calls[attempt_index] = self._calls.get(attempt_index, 0) + 1
            self.requests.append((attempt_index, prompt))
        entry = self.responses.get(attempt_index, self.default)
        if entry is None:
            raise TransportError(f"mock has no response for attempt {attempt_index}")
        if isinstance(entry, str):
            return entry
        fail = entry.get("fail")
        if fail and ("times" not in entry or n <= entry["times"]):
            if fail == "auth":
                raise GenerationAuthError("mock: credentials rejected")
            raise TransportError(f"mock: scripted {fail} failure")
        if "response" not in entry:
            raise TransportError(f"mock: no response scripted for attempt {attempt_index}")
        return entry["response"]

    def close(self):
        pass


def make_client(cfg: GenerationConfig, transport: httpx.BaseTransport | None = None):
    if cfg.provider == "mock":
        if not cfg.mock_script:
            raise ConfigError("mock generator needs a mock_script path")
        return MockGenerator.from_file(cfg.mock_script)
    return ChatClient(cfg, transport=transport)


def _run_attempt(client, prompt: str, cfg: GenerationConfig, index: int, abort: threading.Event) -> Attempt:
    last = None
    for retry in range(cfg.max_retries + 1):
        if abort.is_set():
            return Attempt(index, "", True, "aborted after authentication failure")
        try:
            return Attempt(index, client.complete(prompt, index))
        except TransportError as exc:
            last = exc
            logger.warning("attempt %d failed (%s), try %d/%d", index, exc, retry + 1, cfg.max_retries + 1)
            if retry < cfg.max_retries and cfg.backoff_s:
                time.sleep(cfg.backoff_s * (retry + 1))
    return Attempt(index, "", True, str(last))


def generate(prompt: str, cfg: GenerationConfig, client=None) -> list[Attempt]:
    """Issue ``cfg.attempts`` independent single-turn requests.

    Returns one :class:`Attempt` per index, in attempt order; attempts that
    still fail after ``max_retries`` come back with ``failed=True`` and an
    empty response.

    Raises:
        GenerationAuthError: the endpoint refused our credentials.
    """
    own = client is None
    client = client or make_client(cfg)
    abort = threading.Event()

    def run(i: int) -> Attempt:
        try:
            return _run_attempt(client, prompt, cfg, i, abort)
        except GenerationAuthError:
            abort.set()
            raise

    try:
        with ThreadPoolExecutor(max_workers=min(cfg.max_in_flight, cfg.attempts)) as pool:
            futures = [pool.submit(run, i) for i in range(1, cfg.attempts + 1)]
            results = [f.result() for f in futures]
    finally:
        if own:
            client.close()
    return sorted(results, key=lambda a: a.attempt_index)


_FENCE_RE = re.compile(r"^[ \t]*(`{3,})[^\n`]*\n(.*?)^[ \t]*\1`*[ \t]*$", re.DOTALL | re.MULTILINE)
_LOOP_PAT = re.compile(r"\b(for|while)\s*\(")
_LABEL_PAT = re.compile(r"^[A-Za-z_]\w*\s*:$")
_FUNC_PAT = re.compile(r"\b[A-Za-z_][\w:<>,\s\*&]*?\s+\**\s*[A-Za-z_]\w*\s*\([^;{}]*\)\s*\{")


def _code_like(line: str) -> bool:
    s = line.strip()
    if not s:
        return False
    return (
        s.startswith(("#", "//", "/*", "*", "}", "{"))
        or s.endswith((";", "{", "}", ")", "*/", ","))
        or bool(_LOOP_PAT.search(s))
        or bool(_LABEL_PAT.match(s))
    )


def _heuristic_region(text: str) -> str | None:
    lines = text.split("\n")
    offsets = [0]
    for line in lines:
        offsets.append(offsets[-1] + len(line) + 1)
    regions = []
    i = 0
    while i < len(lines):
        if not _code_like(lines[i]):
            i += 1
            continue
        j = last = i
        while j < len(lines) and (_code_like(lines[j]) or not lines[j].strip()):
            if lines[j].strip():
                last = j
            j += 1
        regions.append((offsets[i], offsets[last] + len(lines[last])))
        i = j
    best = None
    for s, e in regions:
        chunk = text[s:e]
        masked = clike.mask_source(chunk)
        if masked.count("{") != masked.count("}") or "{" not in masked:
            continue
        if not (_LOOP_PAT.search(masked) or _FUNC_PAT.search(masked)):
            continue
        if best is None or len(chunk) > len(best):
            best = chunk
    return best


def extract_code(response: str) -> tuple[str | None, str]:
    """Pull candidate code out of a model response.

    Returns ``(code, method)``: the interior of the first fenced block
    (``"fenced"``), else the longest brace-balanced run of code-looking
    lines containing a loop or function definition (``"heuristic"``), else
    ``(None, "none")``. The code is always a verbatim substring of the response.
    """
    m = _FENCE_RE.search(response)
    if m:
        body = m.group(2)
        if body.endswith("\n"):
            body = body[:-1]
        if body.strip():
            return body, "fenced"
    region = _heuristic_region(response)
    if region is not None:
        return region, "heuristic"
    return None, "none"


def to_candidates(attempts: Sequence[Attempt]) -> list[CandidateCode]:
    out = []
    for a in attempts:
        code, method = extract_code(a.response) if not a.failed else (None, "none")
        out.append(CandidateCode(a.attempt_index, a.response, code, method, a.failed))
    return out


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def append_ledger(path: str | os.PathLike, prompt: str, candidates: Sequence[CandidateCode],
                  attempts: Sequence[Attempt], cfg: GenerationConfig, cfg_hash: str) -> None:
    by_index = {a.attempt_index: a for a in attempts}
    settings = {k: v for k, v in asdict(cfg).items() if k in ("model", "temperature", "max_tokens", "system_prompt")}
    lines = []
    for c in candidates:
        rec = {
            "attempt_index": c.attempt_index,
            "config_hash": cfg_hash,
            "settings": settings,
            "prompt": prompt,
            "raw_response": c.raw_response,
            "failed": c.failed,
            "error": by_index[c.attempt_index].error,
            "extraction_method": c.extraction_method,
            "code": c.code,
        }
        lines.append(json.dumps(rec, sort_keys=True, ensure_ascii=False))
    atomic_append_lines(path, lines)
