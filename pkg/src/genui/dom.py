"""Lenient HTML document tree with a stable serialization.

Model output is imperfect by premise, so parsing never raises on malformed
markup: unclosed tags are closed implicitly, stray end tags are dropped, and
script/style bodies are kept byte-for-byte. Serialization is canonical
(double-quoted, entity-escaped attributes; escaped text outside raw-text
elements), which makes serialize(parse(serialize(t))) a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Iterator, Optional, Union

VOID_ELEMENTS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
})

RAWTEXT_ELEMENTS = frozenset({"script", "style"})


class ParseFailure(Exception):
    """The input could not be parsed into any element at all."""


@dataclass
class Text:
    data: str


@dataclass
class Comment:
    data: str


@dataclass
class Doctype:
    data: str  # decl text without the <! and >, e.g. "DOCTYPE html"


@dataclass
class Element:
    tag: str
    attrs: dict[str, Optional[str]] = field(default_factory=dict)
    children: list["Node"] = field(default_factory=list)
    # raw source of the start tag, kept so serialization-time fixes
    # (attribute escaping) can tell whether the source was already escaped
    raw_start: Optional[str] = None


Node = Union[Text, Comment, Doctype, Element]


@dataclass
class Document:
    children: list[Node] = field(default_factory=list)


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.doc = Document()
        self.stack: list[Element] = []

    def _append(self, node: Node) -> None:
        if self.stack:
            self.stack[-1].children.append(node)
        else:
            self.doc.children.append(node)

    def handle_starttag(self, tag, attrs):
        el = Element(tag, _attr_dict(attrs), raw_start=self.get_starttag_text())
        self._append(el)
        if tag not in VOID_ELEMENTS:
            self.stack.append(el)

    def handle_startendtag(self, tag, attrs):
        el = Element(tag, _attr_dict(attrs), raw_start=self.get_starttag_text())
        self._append(el)

    def handle_endtag(self, tag):
        # pop to the nearest matching open element; ignore strays
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return

    def handle_data(self, data):
        if data:
            self._append(Text(data))

    def handle_comment(self, data):
        self._append(Comment(data))

    def handle_decl(self, decl):
        self._append(Doctype(decl))


def _attr_dict(attrs) -> dict[str, Optional[str]]:
    out: dict[str, Optional[str]] = {}
    for name, value in attrs:
        out.setdefault(name, value)  # first occurrence wins
    return out


def parse(html: str) -> Document:
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    return builder.doc


def parse_or_fail(html: str) -> Document:
    """Parse, raising ParseFailure when no element survives even leniently."""
    doc = parse(html)
    if not any(isinstance(n, Element) for n in walk(doc)):
        raise ParseFailure("no elements recognized in document")
    return doc


def escape_text(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def escape_attr(s: str) -> str:
    return escape_text(s).replace('"', "&quot;")


def _serialize_node(node: Node, out: list[str], raw: bool) -> None:
    if isinstance(node, Doctype):
        out.append(f"<!{node.data}>")
    elif isinstance(node, Comment):
        out.append(f"<!--{node.data}-->")
    elif isinstance(node, Text):
        out.append(node.data if raw else escape_text(node.data))
    else:
        out.append(f"<{node.tag}")
        for name, value in node.attrs.items():
            if value is None:
                out.append(f" {name}")
            else:
                out.append(f' {name}="{escape_attr(value)}"')
        out.append(">")
        if node.tag in VOID_ELEMENTS:
            return
        child_raw = node.tag in RAWTEXT_ELEMENTS
        for child in node.children:
            _serialize_node(child, out, child_raw)
        out.append(f"</{node.tag}>")


def serialize(doc: Document) -> str:
    out: list[str] = []
    for node in doc.children:
        _serialize_node(node, out, raw=False)
    return "".join(out)


def walk(doc: Document) -> Iterator[Node]:
    """Depth-first iteration over every node."""
    stack: list[Node] = list(reversed(doc.children))
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Element):
            stack.extend(reversed(node.children))


def iter_elements(doc: Document, tag: Optional[str] = None) -> Iterator[Element]:
    for node in walk(doc):
        if isinstance(node, Element) and (tag is None or node.tag == tag):
            yield node


def visible_text(doc: Document) -> str:
    """Concatenated rendered text: every text node outside script/style."""
    out: list[str] = []

    def rec(children: list[Node]) -> None:
        for node in children:
            if isinstance(node, Text):
                out.append(node.data)
            elif isinstance(node, Element) and node.tag not in RAWTEXT_ELEMENTS:
                rec(node.children)

    rec(doc.children)
    return "".join(out)


def node_path(doc: Document, target: Node) -> Optional[str]:
    """Locate a node as an element path like /html/body/div[2]."""

    def rec(children: list[Node], prefix: str) -> Optional[str]:
        counts: dict[str, int] = {}
        for node in children:
            if isinstance(node, Element):
                counts[node.tag] = counts.get(node.tag, 0) + 1
                here = f"{prefix}/{node.tag}[{counts[node.tag]}]"
                if node is target:
                    return here
                found = rec(node.children, here)
                if found is not None:
                    return found
            elif node is target:
                return f"{prefix}/#text"
        return None

    return rec(doc.children, "")


def find_parent(doc: Document, target: Node) -> Optional[Element]:
    for node in walk(doc):
        if isinstance(node, Element) and target in node.children:
            return node
    return None


def ensure_head(doc: Document) -> Element:
    """Return the <head> element, creating it (and nesting it under <html>
    when one exists) if the model omitted it."""
    for el in iter_elements(doc, "head"):
        return el
    head = Element("head")
    for el in iter_elements(doc, "html"):
        el.children.insert(0, head)
        return head
    doc.children.insert(0, head)
    return head
