"""Locate the fenced HTML document inside raw model output.

The output contract asks for exactly one ```html ... ``` fenced block holding
a complete document. Anything outside the fences is preserved as noise, and
every validation failure is encoded in the result instead of raised, since a
failed extraction is itself a statistic we aggregate.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

OPEN_FENCE = "```html"
CLOSE_FENCE = "```"


class ExtractStatus(str, Enum):
    CLEAN = "clean"
    NOISY_OK = "noisy_ok"
    ERROR = "error"


class ErrorKind(str, Enum):
    MARKER_MISSING = "marker_missing"
    MARKER_UNTERMINATED = "marker_unterminated"
    DOCTYPE_MISSING = "doctype_missing"
    CLOSE_TAG_MISSING = "close_tag_missing"
    EMPTY_BODY = "empty_body"


@dataclass(frozen=True)
class ExtractedPage:
    html: str
    leading_noise: str
    trailing_noise: str
    status: ExtractStatus
    error_kind: Optional[ErrorKind] = None

    def reconstruct(self) -> str:
        """Reassemble the original raw output (valid for non-error pages)."""
        return (
            self.leading_noise + OPEN_FENCE + self.html + CLOSE_FENCE
            + self.trailing_noise
        )


_DOCTYPE_RE = re.compile(r"^﻿?\s*<!doctype\s+html", re.IGNORECASE)
_DOCTYPE_FULL_RE = re.compile(r"^﻿?\s*<!doctype[^>]*>", re.IGNORECASE)
_BODY_RE = re.compile(r"<body[^>]*>(.*?)</body>", re.IGNORECASE | re.DOTALL)
_TAG_RE = re.compile(r"<[^>]*>")


def _error(raw: str, kind: ErrorKind, html: str = "") -> ExtractedPage:
    return ExtractedPage(
        html=html,
        leading_noise="" if html else raw,
        trailing_noise="",
        status=ExtractStatus.ERROR,
        error_kind=kind,
    )


def extract(raw: str) -> ExtractedPage:
    open_at = raw.find(OPEN_FENCE)
    if open_at < 0:
        return _error(raw, ErrorKind.MARKER_MISSING)

    content_start = open_at + len(OPEN_FENCE)
    close_at = raw.find(CLOSE_FENCE, content_start)
    if close_at < 0:
        return _error(raw, ErrorKind.MARKER_UNTERMINATED)

    html = raw[content_start:close_at]
    leading = raw[:open_at]
    trailing = raw[close_at + len(CLOSE_FENCE):]

    kind = _validate_document(html)
    if kind is not None:
        return ExtractedPage(html, leading, trailing, ExtractStatus.ERROR, kind)

    status = (
        ExtractStatus.CLEAN if leading == "" and trailing == ""
        else ExtractStatus.NOISY_OK
    )
    return ExtractedPage(html, leading, trailing, status)


def _validate_document(html: str) -> Optional[ErrorKind]:
    if not _DOCTYPE_RE.match(html):
        return ErrorKind.DOCTYPE_MISSING
    if not html.rstrip().lower().endswith("</html>"):
        return ErrorKind.CLOSE_TAG_MISSING
    if _body_is_empty(html):
        return ErrorKind.EMPTY_BODY
    return None


def _body_is_empty(html: str) -> bool:
    m = _BODY_RE.search(html)
    if m is not None:
        inner = m.group(1)
    else:
        # no explicit body: judge everything between the doctype and </html>
        inner = _DOCTYPE_FULL_RE.sub("", html)
        inner = re.sub(r"</html>\s*$", "", inner.rstrip(), flags=re.IGNORECASE)
        inner = re.sub(r"<head[^>]*>.*?</head>", "", inner,
                       flags=re.IGNORECASE | re.DOTALL)
        inner = re.sub(r"</?(?:html|body)[^>]*>", "", inner, flags=re.IGNORECASE)
    stripped = _TAG_RE.sub("", inner).strip()
    if stripped:
        return False
    # tag-only bodies still count as content when they carry renderable
    # elements (images, canvases, scripted UIs)
    return not re.search(r"<(?:img|canvas|svg|video|audio|iframe|input|script)\b",
                         inner, re.IGNORECASE)


def is_output_error(page: ExtractedPage) -> bool:
    """The per-generation failure statistic the evaluation harness aggregates."""
    return page.status is ExtractStatus.ERROR


class FenceScanner:
    """Incremental fence tracker for streaming previews.

    Feed raw output chunks as they arrive; returns the bytes of the fenced
    HTML region ready to forward, holding back trailing backticks that might
    start the closing fence. The concatenation of all returned fragments is
    exactly the region extract() will report as html.
    """

    def __init__(self) -> None:
        self._raw = ""
        self._content_start: Optional[int] = None
        self._emitted: int = 0
        self._closed = False

    def feed(self, chunk: str) -> str:
        if self._closed:
            return ""
        self._raw += chunk
        if self._content_start is None:
            open_at = self._raw.find(OPEN_FENCE)
            if open_at < 0:
                return ""
            self._content_start = open_at + len(OPEN_FENCE)
            self._emitted = self._content_start
        close_at = self._raw.find(CLOSE_FENCE, self._content_start)
        if close_at >= 0:
            end = close_at
            self._closed = True
        else:
            holdback = 0
            while (holdback < len(CLOSE_FENCE) - 1
                   and self._raw.endswith("`" * (holdback + 1))):
                holdback += 1
            end = len(self._raw) - holdback
        if end <= self._emitted:
            return ""
        fragment = self._raw[self._emitted:end]
        self._emitted = end
        return fragment

    def finalize(self) -> str:
        """Flush anything held back (only relevant when no closing fence
        ever arrived; such runs fail validation anyway)."""
        if self._closed or self._content_start is None:
            return ""
        fragment = self._raw[self._emitted:]
        self._emitted = len(self._raw)
        return fragment
