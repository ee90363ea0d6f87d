"""/image and /gen asset endpoints: providers, disk cache, single-flight.

Generated pages reference images only through these two endpoints, so a
provider outage must degrade to a neutral fallback image rather than a broken
<img>. The cache is content-addressed on disk with an in-memory index;
concurrent identical cold requests collapse to a single provider call.
"""

from __future__ import annotations

import hashlib
import io
import threading
import time
import urllib.parse
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from PIL import Image

from .dom import Document, iter_elements
from .postchain import Diagnostic

SUPPORTED_ASPECTS = ("1:1", "3:4", "4:3", "9:16", "16:9")
DEFAULT_ASPECT = "1:1"
DEFAULT_MAX_EDGE = 512
CACHE_TTL_S = 7 * 24 * 3600.0


class BadRequest(ValueError):
    pass


class ProviderFailure(Exception):
    pass


@dataclass(frozen=True)
class AssetRequest:
    kind: str  # search_image | generated_image
    text: str  # url-decoded query or prompt
    aspect: str = DEFAULT_ASPECT

    def __post_init__(self) -> None:
        if not self.text:
            raise BadRequest("empty query/prompt")
        if self.aspect not in SUPPORTED_ASPECTS:
            raise BadRequest(f"unsupported aspect {self.aspect!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.kind, self.text, self.aspect)


@dataclass(frozen=True)
class AssetRecord:
    key: tuple[str, str, str]
    bytes: bytes
    media_type: str
    created: float
    provider: str
    failed: bool = False


def aspect_dimensions(aspect: str, max_edge: int) -> tuple[int, int]:
    w_ratio, h_ratio = (int(p) for p in aspect.split(":"))
    if w_ratio >= h_ratio:
        return max_edge, round(max_edge * h_ratio / w_ratio)
    return round(max_edge * w_ratio / h_ratio), max_edge


def _hash_color(text: str, salt: str = "") -> tuple[int, int, int]:
    digest = hashlib.sha256((salt + text).encode()).digest()
    return digest[0], digest[1], digest[2]


def _png(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class ImageProvider:
    name = "provider"

    def fetch(self, request: AssetRequest, max_edge: int) -> tuple[bytes, str]:
        raise NotImplementedError


class MockImageProvider(ImageProvider):
    """Solid-color images derived from the request hash: a pure function of
    (kind, text, aspect), opaque, correct aspect."""

    name = "mock"

    def fetch(self, request: AssetRequest, max_edge: int) -> tuple[bytes, str]:
        w, h = aspect_dimensions(request.aspect, min(max_edge, 256))
        img = Image.new("RGB", (w, h), _hash_color(request.text, request.kind))
        return _png(img), "image/png"


class FallbackImageProvider(ImageProvider):
    """Neutral gray stand-in used when the real provider fails; the query is
    carried in metadata only, never rendered into pixels."""

    name = "fallback"

    def fetch(self, request: AssetRequest, max_edge: int) -> tuple[bytes, str]:
        w, h = aspect_dimensions(request.aspect, min(max_edge, 256))
        img = Image.new("RGB", (w, h), (128, 128, 128))
        png = _png(img)
        return png, "image/png"


class AssetService:
    def __init__(self, provider: Optional[ImageProvider] = None,
                 cache_dir: Optional[Path | str] = None,
                 max_edge: int = DEFAULT_MAX_EDGE,
                 ttl_s: float = CACHE_TTL_S):
        self.provider = provider or MockImageProvider()
        self.fallback = FallbackImageProvider()
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.max_edge = max_edge
        self.ttl_s = ttl_s
        self._index: dict[tuple[str, str, str], AssetRecord] = {}
        self._index_lock = threading.Lock()
        self._inflight: dict[tuple[str, str, str], threading.Lock] = {}
        self.provider_calls = 0  # instrumentation for dedup tests

    # -- request parsing ------------------------------------------------------

    @staticmethod
    def parse_image_request(query: Optional[str]) -> AssetRequest:
        text = _decode(query)
        return AssetRequest("search_image", text)

    @staticmethod
    def parse_gen_request(prompt: Optional[str],
                          aspect: Optional[str] = None) -> AssetRequest:
        text = _decode(prompt)
        if aspect:
            aspect = urllib.parse.unquote_plus(aspect)
        return AssetRequest("generated_image", text, aspect or DEFAULT_ASPECT)

    # -- handlers -------------------------------------------------------------

    def handle_image(self, query: Optional[str]) -> AssetRecord:
        return self._serve(self.parse_image_request(query))

    def handle_gen(self, prompt: Optional[str],
                   aspect: Optional[str] = None) -> AssetRecord:
        return self._serve(self.parse_gen_request(prompt, aspect))

    def _serve(self, request: AssetRequest) -> AssetRecord:
        key = request.key
        record = self._lookup(key)
        if record is not None:
            return record
        with self._index_lock:
            flight = self._inflight.setdefault(key, threading.Lock())
        with flight:
            record = self._lookup(key)
            if record is not None:
                return record  # another request filled it while we waited
            record = self._fetch(request)
            with self._index_lock:
                self._index[key] = record
                self._inflight.pop(key, None)
            self._persist(record)
        return record

    def _fetch(self, request: AssetRequest) -> AssetRecord:
        try:
            self.provider_calls += 1
            data, media_type = self.provider.fetch(request, self.max_edge)
            data, media_type = self._thumbnail(data, media_type)
            return AssetRecord(request.key, data, media_type, time.time(),
                               self.provider.name)
        except Exception:
            data, media_type = self.fallback.fetch(request, self.max_edge)
            return AssetRecord(request.key, data, media_type, time.time(),
                               self.fallback.name, failed=True)

    def _thumbnail(self, data: bytes, media_type: str) -> tuple[bytes, str]:
        img = Image.open(io.BytesIO(data))
        if max(img.size) <= self.max_edge:
            return data, media_type
        img.thumbnail((self.max_edge, self.max_edge))
        return _png(img.convert("RGB")), "image/png"

    # -- cache ----------------------------------------------------------------

    def _lookup(self, key: tuple[str, str, str]) -> Optional[AssetRecord]:
        with self._index_lock:
            record = self._index.get(key)
        if record is None:
            return self._load(key)
        if time.time() - record.created > self.ttl_s:
            with self._index_lock:
                self._index.pop(key, None)
            return None
        return record

    def _cache_path(self, key: tuple[str, str, str]) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256("\x1f".join(key).encode()).hexdigest()
        return self.cache_dir / f"{digest}.png"

    def _persist(self, record: AssetRecord) -> None:
        path = self._cache_path(record.key)
        if path is not None and not record.failed:
            path.write_bytes(record.bytes)

    def _load(self, key: tuple[str, str, str]) -> Optional[AssetRecord]:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        if time.time() - path.stat().st_mtime > self.ttl_s:
            return None
        record = AssetRecord(key, path.read_bytes(), "image/png",
                             path.stat().st_mtime, "disk-cache")
        with self._index_lock:
            self._index[key] = record
        return record


def _decode(raw: Optional[str]) -> str:
    if raw is None:
        raise BadRequest("missing query/prompt parameter")
    try:
        text = urllib.parse.unquote_plus(raw).strip()
    except Exception as exc:  # pragma: no cover - unquote rarely raises
        raise BadRequest(f"undecodable parameter: {exc}")
    if not text:
        raise BadRequest("empty query/prompt")
    return text


# --- src grammar validation (shared with post_chain and eval reporting) ------

def validate_src_grammar(doc: Document) -> list[Diagnostic]:
    from .dom import node_path

    diags: list[Diagnostic] = []
    for el in iter_elements(doc, "img"):
        src = el.attrs.get("src") or ""
        if not src.startswith(("/image", "/gen")):
            continue
        locus = node_path(doc, el) or "(document)"
        parts = urllib.parse.urlsplit(src)
        params = dict(urllib.parse.parse_qsl(parts.query, keep_blank_values=True))
        if parts.path == "/image":
            if not params.get("query", "").strip():
                diags.append(Diagnostic("src_grammar", "flagged", locus, src,
                                        "missing or empty query"))
        elif parts.path == "/gen":
            if not params.get("prompt", "").strip():
                diags.append(Diagnostic("src_grammar", "flagged", locus, src,
                                        "missing or empty prompt"))
            aspect = params.get("aspect")
            if aspect is not None and aspect not in SUPPORTED_ASPECTS:
                diags.append(Diagnostic("src_grammar", "flagged", locus, src,
                                        f"unsupported aspect {aspect!r}"))
        else:
            diags.append(Diagnostic("src_grammar", "flagged", locus, src,
                                    "unknown asset endpoint path"))
    return diags
