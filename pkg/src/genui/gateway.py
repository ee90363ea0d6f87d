"""Pluggable model backends and the event stream driving a generation.

Backends are generators yielding (kind, payload) pairs. The gateway assigns
monotone sequence numbers, answers tool calls (search results are fed back
into the backend, model-visible; image URLs stay browser-direct and are
resolved by the asset proxy at render time), enforces a wall-clock deadline,
and guarantees exactly one terminal event.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Generator, Iterator, Optional

from .prompts import PromptBundle

DEFAULT_DEADLINE_S = 180.0
DEFAULT_TOOL_ROUNDS = 8
SEARCH_TIMEOUT_S = 10.0


class BackendUnavailable(Exception):
    pass


class ProviderUnavailable(Exception):
    pass


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    kind: str  # mock | scripted | external
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind == "external" and "endpoint" not in self.params:
            raise ValueError("external backends require an endpoint")


@dataclass(frozen=True)
class GenerationEvent:
    kind: str  # chunk | tool_call | tool_result | done | backend_error
    payload: Any
    seq: int


@dataclass(frozen=True)
class SearchResult:
    query: str
    snippets: tuple[tuple[str, str, str], ...]  # (title, url, text)
    error: bool = False


# A backend is a generator of (kind, payload); tool results are sent back in.
BackendStream = Generator[tuple[str, Any], Any, None]


class Backend:
    name = "backend"
    exclusive = False

    def run(self, bundle: PromptBundle) -> BackendStream:
        raise NotImplementedError


def bundle_key(bundle: PromptBundle) -> str:
    """Stable key for transcript lookup: the latest user message, else a
    hash of the whole bundle."""
    for role, content in reversed(bundle.history):
        if role == "user":
            return content.strip().lower()
    return hashlib.sha256(bundle.system_text.encode()).hexdigest()[:16]


DEFAULT_PAGE_TEMPLATE = (
    "```html<!DOCTYPE html>\n<html>\n<head>\n<title>{title}</title>\n"
    '<script src="https://cdn.tailwindcss.com"></script>\n</head>\n'
    '<body class="bg-slate-50 p-8">\n<h1 class="text-2xl font-bold">{title}'
    "</h1>\n<p>Deterministic mock page for: {title}</p>\n"
    '<img src="/image?query={query}" alt="{title}">\n'
    "</body>\n</html>```"
)


def default_transcript(prompt: str) -> list[tuple[str, Any]]:
    import urllib.parse

    title = (prompt.strip() or "untitled").replace("<", "").replace(">", "")
    page = DEFAULT_PAGE_TEMPLATE.format(
        title=title, query=urllib.parse.quote_plus(title))
    mid = len(page) // 2
    return [("chunk", page[:mid]), ("chunk", page[mid:])]


class MockBackend(Backend):
    """Replays canned transcripts keyed by the latest user message.

    Unknown prompts fall back to a deterministic minimal page so any fixture
    conversation works without pre-registration.
    """

    name = "mock"

    def __init__(self, transcripts: Optional[dict[str, list[tuple[str, Any]]]] = None):
        self.transcripts = dict(transcripts or {})

    def run(self, bundle: PromptBundle) -> BackendStream:
        key = bundle_key(bundle)
        records = self.transcripts.get(key) or default_transcript(key)
        for kind, payload in records:
            sent = yield (kind, payload)
            del sent  # replay ignores tool results

    @classmethod
    def from_transcript_dir(cls, root: Path | str) -> "MockBackend":
        root = Path(root)
        transcripts = {
            p.stem.replace("_", " "): parse_transcript(p.read_text(encoding="utf-8"))
            for p in sorted(root.glob("*.txt"))
        }
        return cls(transcripts)


MALFORMED_OUTPUT = (
    "I'm sorry, I was unable to produce the page you asked for. "
    "Here is a description instead of the HTML document."
)


class ScriptedBackend(Backend):
    """Deterministic synthetic backend for error-rate studies.

    With probability failure_rate (seeded RNG, so the run sequence is exactly
    reproducible) the output lacks valid markers; otherwise it is a minimal
    valid page. A transcript file may be supplied instead for exact replay of
    a fixture conversation.
    """

    name = "scripted"

    def __init__(self, failure_rate: float = 0.0, seed: int = 0,
                 transcript: Optional[list[tuple[str, Any]]] = None):
        if not 0.0 <= failure_rate <= 1.0:
            raise ValueError("failure_rate must be in [0, 1]")
        self.failure_rate = failure_rate
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()
        self.transcript = transcript

    def run(self, bundle: PromptBundle) -> BackendStream:
        if self.transcript is not None:
            for kind, payload in self.transcript:
                yield (kind, payload)
            return
        with self._rng_lock:
            fail = self._rng.random() < self.failure_rate
        if fail:
            yield ("chunk", MALFORMED_OUTPUT)
        else:
            for kind, payload in default_transcript(bundle_key(bundle)):
                yield (kind, payload)

    @classmethod
    def from_file(cls, path: Path | str) -> "ScriptedBackend":
        text = Path(path).read_text(encoding="utf-8")
        return cls(transcript=parse_transcript(text))


def parse_transcript(text: str) -> list[tuple[str, Any]]:
    """Parse the transcript wire format: records separated by a `---` line,
    each with a `#chunk`, `#tool_call <name>`, or `#tool_result` header
    followed by raw payload lines."""
    records: list[tuple[str, Any]] = []
    for block in text.split("\n---\n"):
        if not block.strip():
            continue
        header, _, payload = block.partition("\n")
        header = header.strip()
        if header == "#chunk":
            records.append(("chunk", payload))
        elif header.startswith("#tool_call"):
            name = header[len("#tool_call"):].strip() or "search"
            records.append(("tool_call", {"name": name, "args": payload.strip()}))
        elif header == "#tool_result":
            records.append(("tool_result", payload))
        else:
            raise ValueError(f"unknown transcript record header: {header!r}")
    return records


# --- search ------------------------------------------------------------------

class SearchProvider:
    name = "search"

    def search(self, query: str) -> SearchResult:
        raise NotImplementedError


_MOCK_FIXTURES: dict[str, tuple[tuple[str, str, str], ...]] = {
    "tower of hanoi": (
        ("Tower of Hanoi - mathematical puzzle",
         "https://en.wikipedia.org/wiki/Tower_of_Hanoi",
         "The Tower of Hanoi is a puzzle with three rods and n disks; the "
         "minimal number of moves is 2^n - 1."),
        ("Recursive solutions to the Tower of Hanoi",
         "https://example.org/hanoi-recursive",
         "Move n-1 disks to the spare peg, move the largest disk, then move "
         "the n-1 disks on top of it."),
    ),
    "intercontinental singapore": (
        ("InterContinental Singapore",
         "https://example.org/intercontinental-singapore",
         "Hotel at 80 Middle Road, Singapore 188966, near Bugis and Marina Bay."),
        ("Jogging routes near Bugis",
         "https://example.org/bugis-jogging",
         "Popular loops pass the Singapore River, Marina Bay and Fort Canning."),
    ),
}


class MockSearchProvider(SearchProvider):
    """Hash-derived fixture snippets; deterministic for any query."""

    name = "mock"

    def search(self, query: str) -> SearchResult:
        fixed = _MOCK_FIXTURES.get(query.strip().lower())
        if fixed is not None:
            return SearchResult(query, fixed)
        digest = hashlib.sha256(query.encode()).hexdigest()
        snippets = tuple(
            (f"Result {i + 1} for {query}",
             f"https://search.example/{digest[:12]}/{i}",
             f"Deterministic snippet {digest[i * 8:(i + 1) * 8]} about {query}.")
            for i in range(3)
        )
        return SearchResult(query, snippets)


class SearchRouter:
    """Named providers with a per-session query cache and timeout shielding."""

    def __init__(self, providers: Optional[dict[str, SearchProvider]] = None,
                 timeout_s: float = SEARCH_TIMEOUT_S):
        self.providers = providers or {"mock": MockSearchProvider()}
        self.timeout_s = timeout_s
        self._cache: dict[tuple[str, str], SearchResult] = {}
        self._lock = threading.Lock()

    def search(self, query: str, provider: str = "mock") -> SearchResult:
        if not query.strip():
            raise ValueError("empty search query")
        impl = self.providers.get(provider)
        if impl is None:
            raise ProviderUnavailable(provider)
        key = (provider, query)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        try:
            with concurrent.futures.ThreadPoolExecutor(max_workers=1) as pool:
                result = pool.submit(impl.search, query).result(self.timeout_s)
        except Exception:
            return SearchResult(query, (), error=True)
        with self._lock:
            self._cache[key] = result
        return result


# --- gateway -----------------------------------------------------------------

class Gateway:
    """Drives a backend with a bundle and yields the generation event stream."""

    def __init__(self, search_router: Optional[SearchRouter] = None,
                 deadline_s: float = DEFAULT_DEADLINE_S,
                 max_tool_rounds: int = DEFAULT_TOOL_ROUNDS):
        self.search_router = search_router or SearchRouter()
        self.deadline_s = deadline_s
        self.max_tool_rounds = max_tool_rounds
        self._backends: dict[str, Backend] = {}
        self._exclusive_locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()

    def register_backend(self, name: str, backend: Backend) -> None:
        with self._lock:
            self._backends[name] = backend
            if backend.exclusive:
                self._exclusive_locks[name] = threading.Lock()

    def resolve(self, descriptor: BackendDescriptor) -> Backend:
        backend = self._backends.get(descriptor.name)
        if backend is None:
            raise BackendUnavailable(descriptor.name)
        return backend

    def generate(self, bundle: PromptBundle,
                 descriptor: BackendDescriptor) -> Iterator[GenerationEvent]:
        backend = self.resolve(descriptor)
        lock = self._exclusive_locks.get(descriptor.name)
        if lock is None:
            yield from self._generate(bundle, backend)
        else:
            with lock:
                yield from self._generate(bundle, backend)

    def _generate(self, bundle: PromptBundle,
                  backend: Backend) -> Iterator[GenerationEvent]:
        seq = 0

        def event(kind: str, payload: Any) -> GenerationEvent:
            nonlocal seq
            ev = GenerationEvent(kind, payload, seq)
            seq += 1
            return ev

        deadline = time.monotonic() + self.deadline_s
        stream = backend.run(bundle)
        tool_rounds = 0
        to_send: Any = None
        try:
            while True:
                if time.monotonic() > deadline:
                    yield event("backend_error", "generation deadline exceeded")
                    return
                try:
                    kind, payload = stream.send(to_send) if to_send is not None \
                        else next(stream)
                except StopIteration:
                    break
                to_send = None
                if kind == "chunk":
                    yield event("chunk", payload)
                elif kind == "tool_call":
                    yield event("tool_call", payload)
                    tool_rounds += 1
                    if tool_rounds > self.max_tool_rounds:
                        result: Any = {"error": "tool round limit reached"}
                    else:
                        result = self._answer_tool(payload)
                    yield event("tool_result", result)
                    to_send = result
                elif kind == "tool_result":
                    # transcript replaying its own recorded tool result
                    yield event("tool_result", payload)
                else:
                    yield event("backend_error", f"unknown event kind {kind!r}")
                    return
        except Exception as exc:  # tool failures are handled; this is fatal
            yield event("backend_error", f"{type(exc).__name__}: {exc}")
            return
        yield event("done", None)

    def _answer_tool(self, call: dict[str, Any]) -> dict[str, Any]:
        name = call.get("name")
        args = call.get("args", "")
        if name == "search":
            try:
                result = self.search_router.search(str(args))
            except Exception as exc:
                # surfaced as an error payload; generation continues
                return {"tool": "search", "error": str(exc), "snippets": []}
            return {
                "tool": "search",
                "query": result.query,
                "error": result.error,
                "snippets": [
                    {"title": t, "url": u, "text": x}
                    for t, u, x in result.snippets
                ],
            }
        return {"tool": name, "error": f"unknown tool {name!r}"}


def collect_output(events: Iterator[GenerationEvent]) -> tuple[str, list[GenerationEvent]]:
    """Drain a generation stream; return (raw output text, all events)."""
    chunks: list[str] = []
    all_events: list[GenerationEvent] = []
    for ev in events:
        all_events.append(ev)
        if ev.kind == "chunk":
            chunks.append(ev.payload)
    return "".join(chunks), all_events
