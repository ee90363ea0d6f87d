"""Ordered repair chain for extracted pages.

Each rule is an idempotent transform over the document tree (one rule also has
a pre-parse text phase, since its job is making the document parseable in the
first place). Rules report everything they do as diagnostics; lints flag but
never rewrite.
"""

from __future__ import annotations

import json
import os
import re
import urllib.parse
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .dom import (
    Document,
    Element,
    ParseFailure,
    Text,
    ensure_head,
    escape_attr,
    iter_elements,
    node_path,
    parse_or_fail,
    serialize,
)
from .extract import ExtractedPage, ExtractStatus

__all__ = [
    "ChainConfig",
    "Diagnostic",
    "ParseFailure",
    "PostReport",
    "RULE_ORDER",
    "lint_sandbox",
    "run_chain",
]

DEFAULT_PLACEHOLDERS = ("YOUR_API_KEY", "GOOGLE_MAPS_API_KEY", "API_KEY_HERE")

DEFAULT_LOADER_RULES = {
    # host/path fragment -> required bare attributes and query params
    "maps.googleapis.com/maps/api/js": {
        "attrs": ("async", "defer"),
        "params": {"callback": "initMap"},
    },
}

DEFAULT_ICON_FAMILIES = frozenset({"fa", "fas", "far", "fab", "bi", "material"})

ERROR_REPORTER_MARKER = "data-genui-error-reporter"

TAILWIND_CDN = "https://cdn.tailwindcss.com"


@dataclass
class Diagnostic:
    rule: str
    severity: str  # "fixed" | "flagged"
    locus: str
    before: str
    after: Optional[str] = None


@dataclass
class PostReport:
    diagnostics: list[Diagnostic]
    rules_run: list[str]
    skipped: list[str]
    changed: bool

    def to_dict(self) -> dict:
        return {
            "diagnostics": [vars(d) for d in self.diagnostics],
            "rules_run": self.rules_run,
            "skipped": self.skipped,
            "changed": self.changed,
        }


@dataclass(frozen=True)
class ChainConfig:
    disabled: frozenset[str] = frozenset()
    api_key_placeholders: tuple[str, ...] = DEFAULT_PLACEHOLDERS
    # placeholder token -> env var holding the secret; secrets never inline
    api_key_env: dict[str, str] = field(default_factory=dict)
    page_id: str = "unknown"
    error_endpoint: str = "/client-errors"
    known_icon_families: frozenset[str] = DEFAULT_ICON_FAMILIES
    citation_pattern: Optional[str] = None
    loader_rules: dict = field(default_factory=lambda: dict(DEFAULT_LOADER_RULES))

    def resolve_secrets(self) -> dict[str, Optional[str]]:
        return {ph: os.environ.get(var) for ph, var in self.api_key_env.items()}


def _locus(doc: Document, node) -> str:
    return node_path(doc, node) or "(document)"


# --- rule 1: api_key_injector -------------------------------------------------

def api_key_injector(doc: Document, cfg: ChainConfig) -> list[Diagnostic]:
    secrets = cfg.resolve_secrets()
    diags: list[Diagnostic] = []

    def fix(value: str, where: str) -> str:
        for placeholder in cfg.api_key_placeholders:
            if placeholder not in value:
                continue
            secret = secrets.get(placeholder)
            if secret:
                diags.append(Diagnostic("api_key_injector", "fixed", where,
                                        placeholder, "<configured secret>"))
                value = value.replace(placeholder, secret)
            else:
                diags.append(Diagnostic("api_key_injector", "flagged", where,
                                        placeholder))
        return value

    for el in iter_elements(doc):
        for name, value in list(el.attrs.items()):
            if value:
                el.attrs[name] = fix(value, _locus(doc, el))
        if el.tag == "script":
            for child in el.children:
                if isinstance(child, Text):
                    child.data = fix(child.data, _locus(doc, el))
    return diags


# --- rule 2: error_reporter_injector -----------------------------------------

def _reporter_js(page_id: str, endpoint: str) -> str:
    return (
        "(function(){"
        f"var PAGE_ID={json.dumps(page_id)};var EP={json.dumps(endpoint)};"
        "function report(message,source,line){try{"
        "fetch(EP,{method:'POST',headers:{'Content-Type':'application/json'},"
        "body:JSON.stringify({page_id:PAGE_ID,message:String(message),"
        "source:String(source||''),line:line||0})});}catch(e){}}"
        "window.addEventListener('error',function(e){"
        "report(e.message,e.filename,e.lineno);});"
        "window.addEventListener('unhandledrejection',function(e){"
        "report(e.reason&&e.reason.message?e.reason.message:String(e.reason),"
        "'unhandledrejection',0);});"
        "})();"
    )


def error_reporter_injector(doc: Document, cfg: ChainConfig) -> list[Diagnostic]:
    for el in iter_elements(doc, "script"):
        if ERROR_REPORTER_MARKER in el.attrs:
            return []
    head = ensure_head(doc)
    script = Element("script", {ERROR_REPORTER_MARKER: "1"},
                     [Text(_reporter_js(cfg.page_id, cfg.error_endpoint))])
    head.children.insert(0, script)
    return [Diagnostic("error_reporter_injector", "fixed", _locus(doc, script),
                       "", "client error reporter installed")]


# --- rule 3: script_parse_fixer ----------------------------------------------

_FENCE_LINE = re.compile(r"^[ \t]*```[\w-]*[ \t]*$")
_SCRIPT_OPEN = re.compile(r"<script\b[^>]*>", re.IGNORECASE)
_CLOSE_TAG = "</script>"


def _quote_state_at(body: str) -> Optional[str]:
    """Walk a JS fragment; return the open string quote char at its end, or
    None when the position is plain code. Understands escapes and comments."""
    state: Optional[str] = None  # None | quote char | "//" | "/*"
    i = 0
    n = len(body)
    while i < n:
        c = body[i]
        if state in ("'", '"', "`"):
            if c == "\\":
                i += 2
                continue
            if c == state:
                state = None
            elif state != "`" and c == "\n":
                state = None  # unterminated single-line string
        elif state == "//":
            if c == "\n":
                state = None
        elif state == "/*":
            if c == "*" and body.startswith("*/", i):
                state = None
                i += 1
        else:
            if c in ("'", '"', "`"):
                state = c
            elif c == "/" and i + 1 < n and body[i + 1] in "/*":
                state = "//" if body[i + 1] == "/" else "/*"
                i += 1
        i += 1
    return state if state in ("'", '"', "`") else None


def split_quoted_script_closers(raw: str) -> tuple[str, list[Diagnostic]]:
    """Pre-parse phase: a literal </script> inside a JS string would terminate
    the element early, so split it into a concatenation before tree-parsing."""
    diags: list[Diagnostic] = []
    out: list[str] = []
    pos = 0
    lower = raw.lower()
    while True:
        m = _SCRIPT_OPEN.search(raw, pos)
        if m is None:
            out.append(raw[pos:])
            break
        out.append(raw[pos:m.end()])
        pos = m.end()
        body_start = pos
        while True:
            close = lower.find(_CLOSE_TAG, pos)
            if close < 0:
                out.append(raw[pos:])
                pos = len(raw)
                break
            quote = _quote_state_at(raw[body_start:close])
            if quote is None:
                out.append(raw[pos:close])
                pos = close
                break
            # the close tag sits inside a JS string: split it so the
            # document parses, preserving the script's runtime value
            split = f"</scr{quote} + {quote}ipt>"
            out.append(raw[pos:close] + split)
            diags.append(Diagnostic("script_parse_fixer", "fixed",
                                    "(document)",
                                    "</script> inside string literal",
                                    "split into concatenation"))
            # account for the rewrite when judging later quote state
            raw = raw[:close] + split + raw[close + len(_CLOSE_TAG):]
            lower = raw.lower()
            pos = close + len(split)
        if pos >= len(raw):
            break
    return "".join(out), diags


def script_parse_fixer(doc: Document, cfg: ChainConfig) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for el in iter_elements(doc, "script"):
        for child in el.children:
            if not isinstance(child, Text):
                continue
            lines = child.data.split("\n")
            kept = [ln for ln in lines if not _FENCE_LINE.match(ln)]
            if len(kept) != len(lines):
                diags.append(Diagnostic("script_parse_fixer", "fixed",
                                        _locus(doc, el),
                                        "markdown fence inside script",
                                        "fence line removed"))
                child.data = "\n".join(kept)
    return diags


# --- rule 4: tailwind_directive_fixer ----------------------------------------

_UTILITY_CLASS = re.compile(
    r"^(?:[a-z]+:)?(?:bg|text|font|flex|grid|p[trblxy]?|m[trblxy]?|w|h|min|max"
    r"|rounded|shadow|border|items|justify|gap|space|inline|absolute|relative"
    r"|container|hidden|block|transition|duration|hover|cursor|overflow|z"
    r"|col|row|place|self|order|leading|tracking|opacity|divide|ring)"
    r"(?:-|$)")


def _uses_utility_classes(doc: Document) -> bool:
    for el in iter_elements(doc):
        classes = el.attrs.get("class") or ""
        for token in classes.split():
            if _UTILITY_CLASS.match(token):
                return True
    for el in iter_elements(doc, "style"):
        for child in el.children:
            if isinstance(child, Text) and "@apply" in child.data:
                return True
    return False


def _has_tailwind_loader(doc: Document) -> bool:
    for el in iter_elements(doc, "script"):
        if TAILWIND_CDN in (el.attrs.get("src") or ""):
            return True
    return False


def tailwind_directive_fixer(doc: Document, cfg: ChainConfig) -> list[Diagnostic]:
    if not _uses_utility_classes(doc) or _has_tailwind_loader(doc):
        return []
    head = ensure_head(doc)
    loader = Element("script", {"src": TAILWIND_CDN})
    head.children.insert(0, loader)
    return [Diagnostic("tailwind_directive_fixer", "fixed", _locus(doc, loader),
                       "utility classes without framework loader",
                       "loader script inserted")]


# --- rule 5: tailwind_cycle_breaker ------------------------------------------

_CSS_BLOCK = re.compile(r"\.([A-Za-z0-9_-]+)\s*\{([^{}]*)\}")
_APPLY = re.compile(r"@apply\s+([^;}]+);?")


def _apply_graph(css: str) -> dict[str, list[str]]:
    graph: dict[str, list[str]] = {}
    for m in _CSS_BLOCK.finditer(css):
        cls, body = m.group(1), m.group(2)
        tokens: list[str] = []
        for a in _APPLY.finditer(body):
            tokens.extend(t.lstrip(".") for t in a.group(1).split())
        if tokens:
            graph.setdefault(cls, []).extend(tokens)
    return graph


def _find_cycle_edge(graph: dict[str, list[str]]) -> Optional[tuple[str, str]]:
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[str, int] = {}

    def dfs(u: str) -> Optional[tuple[str, str]]:
        color[u] = GRAY
        for v in graph.get(u, ()):
            if color.get(v, WHITE) == GRAY:
                return (u, v)
            if color.get(v, WHITE) == WHITE and v in graph:
                hit = dfs(v)
                if hit:
                    return hit
        color[u] = BLACK
        return None

    for node in list(graph):
        if color.get(node, WHITE) == WHITE:
            hit = dfs(node)
            if hit:
                return hit
    return None


def tailwind_cycle_breaker(doc: Document, cfg: ChainConfig) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for el in iter_elements(doc, "style"):
        for child in el.children:
            if not isinstance(child, Text):
                continue
            graph = _apply_graph(child.data)
            removed: set[tuple[str, str]] = set()
            while True:
                edge = _find_cycle_edge(graph)
                if edge is None:
                    break
                u, v = edge
                graph[u] = [t for t in graph[u] if t != v]
                removed.add(edge)
                diags.append(Diagnostic(
                    "tailwind_cycle_breaker", "fixed", _locus(doc, el),
                    f"@apply cycle via .{u} -> .{v}",
                    f"dropped {v} from .{u}"))
            if removed:
                child.data = _strip_apply_edges(child.data, removed)
    return diags


def _strip_apply_edges(css: str, removed: set[tuple[str, str]]) -> str:
    def fix_block(m: re.Match) -> str:
        cls, body = m.group(1), m.group(2)
        drops = {v for (u, v) in removed if u == cls}
        if not drops:
            return m.group(0)

        def fix_apply(a: re.Match) -> str:
            kept = [t for t in a.group(1).split() if t.lstrip(".") not in drops]
            return f"@apply {' '.join(kept)};" if kept else ""

        return f".{cls} {{{_APPLY.sub(fix_apply, body)}}}"

    return _CSS_BLOCK.sub(fix_block, css)


# --- rule 6: attribute_escaper -----------------------------------------------

def attribute_escaper(doc: Document, cfg: ChainConfig) -> list[Diagnostic]:
    # serialization always emits canonical escaped attributes; this rule's job
    # is reporting which source attributes were raw and are being repaired
    diags: list[Diagnostic] = []
    for el in iter_elements(doc):
        if el.raw_start is None:
            continue
        for name, value in el.attrs.items():
            if not value or not any(c in value for c in '&<>"'):
                continue
            escaped = escape_attr(value)
            if escaped not in el.raw_start:
                diags.append(Diagnostic("attribute_escaper", "fixed",
                                        _locus(doc, el), value, escaped))
    return diags


# --- rule 7: citation_stripper -----------------------------------------------

_DEFAULT_CITATION = r"\[\d{1,3}(?:\s*,\s*\d{1,3})*\]"
_IDENTIFIER_TAIL = re.compile(r"[\w\)\]]")


def _strip_citations(text: str, pattern: re.Pattern) -> tuple[str, int]:
    out: list[str] = []
    last = 0
    removed = 0
    for m in pattern.finditer(text):
        before = text[:m.start()].rstrip()
        after = text[m.end():]
        # skip plausible array indexing / array literals: an identifier,
        # call, or index right before, or assignment-ish context
        if before and _IDENTIFIER_TAIL.match(before[-1]):
            continue
        if before and before[-1] in "=([{,:":
            continue
        next_part = after.lstrip(" \t")
        if next_part and next_part[0] not in "\"'`;.,)\n":
            continue
        out.append(text[last:m.start()])
        last = m.end()
        removed += 1
    out.append(text[last:])
    return "".join(out), removed


def citation_stripper(doc: Document, cfg: ChainConfig) -> list[Diagnostic]:
    pattern = re.compile(cfg.citation_pattern or _DEFAULT_CITATION)
    diags: list[Diagnostic] = []
    for el in iter_elements(doc, "script"):
        for child in el.children:
            if not isinstance(child, Text):
                continue
            stripped, n = _strip_citations(child.data, pattern)
            if n:
                diags.append(Diagnostic("citation_stripper", "fixed",
                                        _locus(doc, el),
                                        f"{n} citation token(s) in script",
                                        "removed"))
                child.data = stripped
    return diags


# --- rule 8: api_usage_fixer -------------------------------------------------

def api_usage_fixer(doc: Document, cfg: ChainConfig) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for el in iter_elements(doc, "script"):
        src = el.attrs.get("src")
        if not src:
            continue
        for fragment, rule in cfg.loader_rules.items():
            if fragment not in src:
                continue
            for attr in rule.get("attrs", ()):
                if attr not in el.attrs:
                    el.attrs[attr] = None
                    diags.append(Diagnostic("api_usage_fixer", "fixed",
                                            _locus(doc, el), src,
                                            f"added {attr}"))
            parts = urllib.parse.urlsplit(src)
            query = urllib.parse.parse_qsl(parts.query, keep_blank_values=True)
            present = {k for k, _ in query}
            added = False
            for param, default in rule.get("params", {}).items():
                if param not in present:
                    query.append((param, default))
                    added = True
                    diags.append(Diagnostic("api_usage_fixer", "fixed",
                                            _locus(doc, el), src,
                                            f"added {param}={default}"))
            if added:
                el.attrs["src"] = urllib.parse.urlunsplit(
                    parts._replace(query=urllib.parse.urlencode(query)))
    return diags


# --- rule 9: asset_fallback_rewriter -----------------------------------------

_OK_SRC_PREFIXES = ("http://", "https://", "data:", "/image", "/gen", "//")
_ICON_PREFIX = re.compile(r"^([a-z]+)-")


def _fallback_query(el: Element) -> str:
    alt = (el.attrs.get("alt") or "").strip()
    if alt:
        return alt
    src = el.attrs.get("src") or ""
    stem = src.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return re.sub(r"[-_+]+", " ", stem).strip() or "image"


def asset_fallback_rewriter(doc: Document, cfg: ChainConfig) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for el in iter_elements(doc, "img"):
        src = el.attrs.get("src") or ""
        if not src.startswith(_OK_SRC_PREFIXES):
            new_src = "/image?query=" + urllib.parse.quote_plus(_fallback_query(el))
            diags.append(Diagnostic("asset_fallback_rewriter", "fixed",
                                    _locus(doc, el), src, new_src))
            el.attrs["src"] = new_src
    for el in iter_elements(doc):
        classes = el.attrs.get("class") or ""
        for token in classes.split():
            m = _ICON_PREFIX.match(token)
            if not m:
                continue
            family = m.group(1)
            if (_looks_iconish(token, family)
                    and family not in cfg.known_icon_families):
                diags.append(Diagnostic("asset_fallback_rewriter", "flagged",
                                        _locus(doc, el), token))
    return diags


_ICONISH_FAMILIES = frozenset({"fa", "fas", "far", "fab", "bi", "icon",
                               "glyphicon", "material"})


def _looks_iconish(token: str, family: str) -> bool:
    return family in _ICONISH_FAMILIES or "icon" in token


# --- sandbox lints (flag-only, not part of the repair chain) -----------------

_FORBIDDEN_SCRIPT_APIS = ("window.parent", "window.top",
                          "localStorage", "sessionStorage")


def lint_sandbox(doc: Document) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for el in iter_elements(doc, "script"):
        body = "".join(c.data for c in el.children if isinstance(c, Text))
        for api in _FORBIDDEN_SCRIPT_APIS:
            if api in body:
                diags.append(Diagnostic("sandbox_lint", "flagged",
                                        _locus(doc, el), api))
    for el in iter_elements(doc, "a"):
        href = el.attrs.get("href") or ""
        if href.startswith(("http://", "https://", "//")):
            if el.attrs.get("target") != "_blank":
                diags.append(Diagnostic("external_link_target", "flagged",
                                        _locus(doc, el), href))
    return diags


# --- chain driver ------------------------------------------------------------

Rule = Callable[[Document, ChainConfig], list[Diagnostic]]

RULE_ORDER: list[tuple[str, Rule]] = [
    ("api_key_injector", api_key_injector),
    ("error_reporter_injector", error_reporter_injector),
    ("script_parse_fixer", script_parse_fixer),
    ("tailwind_directive_fixer", tailwind_directive_fixer),
    ("tailwind_cycle_breaker", tailwind_cycle_breaker),
    ("attribute_escaper", attribute_escaper),
    ("citation_stripper", citation_stripper),
    ("api_usage_fixer", api_usage_fixer),
    ("asset_fallback_rewriter", asset_fallback_rewriter),
]


def run_chain(page: ExtractedPage,
              cfg: Optional[ChainConfig] = None) -> tuple[Document, PostReport]:
    if page.status is ExtractStatus.ERROR:
        raise ValueError("cannot post-process a page that failed extraction")
    cfg = cfg or ChainConfig()

    html = page.html
    pre_diags: list[Diagnostic] = []
    if "script_parse_fixer" not in cfg.disabled:
        html, pre_diags = split_quoted_script_closers(html)

    doc = parse_or_fail(html)

    diagnostics: list[Diagnostic] = []
    rules_run: list[str] = []
    skipped: list[str] = []
    for name, rule in RULE_ORDER:
        if name in cfg.disabled:
            skipped.append(name)
            continue
        rules_run.append(name)
        if name == "script_parse_fixer":
            diagnostics.extend(pre_diags)
        diagnostics.extend(rule(doc, cfg))

    changed = any(d.severity == "fixed" for d in diagnostics)
    return doc, PostReport(diagnostics, rules_run, skipped, changed)


def run_chain_on_html(html: str,
                      cfg: Optional[ChainConfig] = None) -> tuple[str, PostReport]:
    """Convenience wrapper: chain a bare HTML string, return serialized output."""
    page = ExtractedPage(html, "", "", ExtractStatus.CLEAN)
    doc, report = run_chain(page, cfg)
    return serialize(doc), report
