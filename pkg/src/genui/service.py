"""Pipeline orchestration: sessions, generation runs, and event streams.

A run walks assemble -> generate -> extract -> repair chain -> store. Event
streams interleave phase transitions with preview fragments (raw fenced bytes
before post-processing) and end with a swap event naming the final page, so
clients can render early and swap in the repaired document.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Iterator, Optional

from .config import AppConfig
from .extract import ExtractStatus, FenceScanner, extract
from .gateway import (
    BackendDescriptor,
    Gateway,
    MockBackend,
    ScriptedBackend,
    SearchRouter,
)
from .dom import serialize
from .postchain import ChainConfig, ParseFailure, run_chain
from .prompts import PromptRegistry, UnknownProfile, UnknownStyle
from .assets import AssetService
from .store import ArtifactStore, PageArtifact

PHASES = ("queued", "generating", "extracting", "postprocessing",
          "ready", "failed")


class UnknownSession(KeyError):
    pass


class UnknownRun(KeyError):
    pass


class NoReadyPage(ValueError):
    pass


@dataclass
class Session:
    id: str
    style: str
    profile: str
    history: list[tuple[str, str]] = field(default_factory=list)
    pages: list[str] = field(default_factory=list)


class Run:
    def __init__(self, run_id: str, session_id: str) -> None:
        self.id = run_id
        self.session_id = session_id
        self.phase = "queued"
        self.page_id: Optional[str] = None
        self.events: list[dict[str, Any]] = []
        self._cond = threading.Condition()
        self._seq = 0
        self.finished = False

    def emit(self, kind: str, payload: Any) -> None:
        with self._cond:
            self.events.append({"seq": self._seq, "kind": kind,
                                "payload": payload})
            self._seq += 1
            self._cond.notify_all()

    def set_phase(self, phase: str, detail: str = "") -> None:
        assert PHASES.index(phase) > PHASES.index(self.phase) or phase == "failed"
        self.phase = phase
        self.emit("phase", {"phase": phase, "detail": detail})
        if phase in ("ready", "failed"):
            with self._cond:
                self.finished = True
                self._cond.notify_all()

    def stream(self, timeout: float = 300.0) -> Iterator[dict[str, Any]]:
        """Yield events from the beginning, blocking until the run finishes."""
        i = 0
        deadline = time.monotonic() + timeout
        while True:
            with self._cond:
                while i >= len(self.events) and not self.finished:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0 or not self._cond.wait(min(remaining, 1.0)):
                        if time.monotonic() > deadline:
                            return
                batch = self.events[i:]
                finished = self.finished
            for ev in batch:
                yield ev
            i += len(batch)
            if finished and i >= len(self.events):
                return


def build_gateway(config: AppConfig) -> tuple[Gateway, BackendDescriptor]:
    gateway = Gateway(SearchRouter(), deadline_s=config.deadline_s,
                      max_tool_rounds=config.max_tool_rounds)
    params = dict(config.backend_params)
    if config.backend_kind == "mock":
        if config.transcript_dir:
            backend = MockBackend.from_transcript_dir(config.transcript_dir)
        else:
            backend = MockBackend()
        gateway.register_backend("mock", backend)
        descriptor = BackendDescriptor("mock", "mock")
    elif config.backend_kind == "scripted":
        if "transcript_path" in params:
            backend = ScriptedBackend.from_file(params["transcript_path"])
        else:
            backend = ScriptedBackend(
                failure_rate=float(params.get("failure_rate", 0.0)),
                seed=int(params.get("seed", 0)))
        gateway.register_backend("scripted", backend)
        descriptor = BackendDescriptor("scripted", "scripted", params)
    else:
        raise ValueError(
            f"backend kind {config.backend_kind!r} has no bundled adapter; "
            "register one on the gateway explicitly")
    return gateway, descriptor


class GenUIService:
    """Ties prompt assembly, generation, repair, assets, and storage together."""

    def __init__(self, config: Optional[AppConfig] = None) -> None:
        self.config = config or AppConfig()
        if self.config.prompt_dir:
            self.registry = PromptRegistry.from_directory(
                self.config.prompt_dir, history_cap=self.config.history_cap)
        else:
            self.registry = PromptRegistry.bundled(
                history_cap=self.config.history_cap)
        self.gateway, self.backend = build_gateway(self.config)
        store_root = self.config.store_path
        self.store = ArtifactStore(store_root,
                                   client_error_cap=self.config.client_error_cap)
        self.assets = AssetService(
            cache_dir=f"{store_root}/assets",
            max_edge=self.config.thumbnail_max_edge,
            ttl_s=self.config.asset_cache_ttl_s)
        self.sessions: dict[str, Session] = {}
        self.runs: dict[str, Run] = {}
        self._lock = threading.Lock()

    # -- sessions -------------------------------------------------------------

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        return session

    def get_run(self, run_id: str) -> Run:
        run = self.runs.get(run_id)
        if run is None:
            raise UnknownRun(run_id)
        return run

    # -- generation -----------------------------------------------------------

    def start_generation(self, prompt: str, style: str = "default",
                         profile: str = "full",
                         session_id: Optional[str] = None,
                         user_location: Optional[str] = None,
                         arm: str = "") -> Run:
        if not prompt.strip():
            raise ValueError("prompt must be non-empty")
        if session_id is None:
            # fail fast in the caller's thread, not inside the run
            if profile not in self.registry.profiles:
                raise UnknownProfile(profile)
            if style not in self.registry.styles:
                raise UnknownStyle(style)
        with self._lock:
            if session_id is not None:
                session = self.get_session(session_id)
            else:
                session = Session(uuid.uuid4().hex, style, profile)
                self.sessions[session.id] = session
            run = Run(uuid.uuid4().hex, session.id)
            self.runs[run.id] = run
        run.emit("phase", {"phase": "queued", "detail": ""})
        thread = threading.Thread(
            target=self._execute,
            args=(run, session, prompt, user_location, arm),
            daemon=True)
        thread.start()
        return run

    def follow_up(self, session_id: str, instruction: str,
                  user_location: Optional[str] = None) -> Run:
        session = self.get_session(session_id)
        if not session.pages:
            raise NoReadyPage(
                f"session {session_id} has no ready page to follow up on")
        return self.start_generation(instruction, session.style,
                                     session.profile, session_id=session_id,
                                     user_location=user_location)

    # -- pipeline -------------------------------------------------------------

    def chain_config_for(self, page_id: str) -> ChainConfig:
        return ChainConfig(
            disabled=frozenset(self.config.chain_disabled),
            api_key_env=dict(self.config.api_key_env),
            page_id=page_id,
        )

    def _execute(self, run: Run, session: Session, prompt: str,
                 user_location: Optional[str], arm: str) -> None:
        from .prompts import DynamicContext

        page_id = uuid.uuid4().hex
        t0 = time.monotonic()
        try:
            history = list(session.history) + [("user", prompt)]
            ctx = DynamicContext(now=datetime.now(timezone.utc),
                                 user_location=user_location)
            bundle = self.registry.assemble(session.profile, session.style,
                                            ctx, history)
            run.set_phase("generating")
            scanner = FenceScanner()
            chunks: list[str] = []
            backend_error: Optional[str] = None
            for ev in self.gateway.generate(bundle, self.backend):
                if ev.kind == "chunk":
                    chunks.append(ev.payload)
                    fragment = scanner.feed(ev.payload)
                    if fragment:
                        run.emit("preview", fragment)
                elif ev.kind == "backend_error":
                    backend_error = str(ev.payload)
            raw = "".join(chunks)
            generate_ms = (time.monotonic() - t0) * 1000

            run.set_phase("extracting")
            page = extract(raw)

            if backend_error is not None:
                self._store_failure(run, session, page_id, raw, page,
                                    generate_ms, arm)
                run.emit("failed", {"reason": "backend_error",
                                    "detail": backend_error})
                run.set_phase("failed", backend_error)
                return
            if page.status is ExtractStatus.ERROR:
                self._store_failure(run, session, page_id, raw, page,
                                    generate_ms, arm)
                run.emit("failed", {"reason": "output_error",
                                    "error_kind": page.error_kind.value})
                run.set_phase("failed", page.error_kind.value)
                return

            run.set_phase("postprocessing")
            t1 = time.monotonic()
            try:
                doc, report = run_chain(page, self.chain_config_for(page_id))
            except ParseFailure as exc:
                self._store_failure(run, session, page_id, raw, page,
                                    generate_ms, arm)
                run.emit("failed", {"reason": "parse_failure",
                                    "detail": str(exc)})
                run.set_phase("failed", str(exc))
                return
            final_html = serialize(doc)
            postprocess_ms = (time.monotonic() - t1) * 1000

            artifact = PageArtifact(
                id=page_id, session=session.id, raw_output=raw,
                extracted=page, final_html=final_html, report=report, arm=arm,
                timings={"generate_ms": generate_ms,
                         "postprocess_ms": postprocess_ms})
            self.store.save(artifact)
            with self._lock:
                session.history.append(("user", prompt))
                session.history.append(("model", raw))
                session.pages.append(page_id)
            run.page_id = page_id
            run.emit("swap", {"page_id": page_id})
            run.set_phase("ready")
        except Exception as exc:  # defensive: a run must always terminate
            run.emit("failed", {"reason": "internal_error", "detail": str(exc)})
            run.set_phase("failed", str(exc))

    def _store_failure(self, run: Run, session: Session, page_id: str,
                       raw: str, page, generate_ms: float, arm: str) -> None:
        # partial artifacts are still stored for offline analysis
        artifact = PageArtifact(
            id=page_id, session=session.id, raw_output=raw, extracted=page,
            final_html=None, report=None, arm=arm,
            timings={"generate_ms": generate_ms})
        self.store.save(artifact)
        run.page_id = page_id
