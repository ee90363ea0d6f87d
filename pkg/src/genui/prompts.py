"""Layered system-instruction assembly.

The system prompt is built from five named sections (philosophy, examples,
planning, technical, dynamic) stored as plain-text resource files, so prompt
ablations are data changes rather than code changes. The technical section
carries a {{STYLE}} slot that a registered style variant fills in, and the
dynamic section is rendered from per-request context (time, optional
location).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

SECTION_IDS = ("philosophy", "examples", "planning", "technical", "dynamic")

PROFILES: dict[str, tuple[str, ...]] = {
    "full": SECTION_IDS,
    "minimal": ("technical", "dynamic"),
    "no_philosophy": ("planning", "technical", "dynamic"),
}

STYLE_SLOT = "{{STYLE}}"
STYLE_HEADER = "**Style:**"

DEFAULT_HISTORY_CAP = 20


class UnknownProfile(KeyError):
    pass


class UnknownStyle(KeyError):
    pass


class DuplicateStyle(ValueError):
    pass


@dataclass(frozen=True)
class StyleVariant:
    name: str
    style_text: str

    def __post_init__(self) -> None:
        if not self.style_text.strip():
            raise ValueError("style_text must be non-empty")


@dataclass(frozen=True)
class DynamicContext:
    now: datetime
    user_location: Optional[str] = None

    def __post_init__(self) -> None:
        if self.now.tzinfo is None:
            raise ValueError("DynamicContext.now must be timezone-aware")


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    history: tuple[tuple[str, str], ...]
    style: str
    profile: str


def _render_dynamic(template: str, ctx: DynamicContext) -> str:
    text = template.replace("{{NOW}}", ctx.now.isoformat())
    if ctx.user_location:
        line = f"- The user's estimated location is {ctx.user_location}"
    else:
        line = None
    lines = []
    for raw_line in text.split("\n"):
        if "{{LOCATION_LINE}}" in raw_line:
            if line is not None:
                lines.append(raw_line.replace("{{LOCATION_LINE}}", line))
            continue  # location unknown: the line is omitted entirely
        lines.append(raw_line)
    return "\n".join(lines)


def _validate_history(history: Iterable[tuple[str, str]],
                      cap: int) -> tuple[tuple[str, str], ...]:
    msgs = tuple((role, content) for role, content in history)
    for i, (role, _) in enumerate(msgs):
        expected = "user" if i % 2 == 0 else "model"
        if role != expected:
            raise ValueError(
                f"history must alternate user/model starting with user; "
                f"message {i} has role {role!r}")
    if len(msgs) > cap:
        start = len(msgs) - cap
        if msgs[start][0] != "user":  # keep the alternation anchored on user
            start += 1
        msgs = msgs[start:]
    return msgs


class PromptRegistry:
    """Sections and style variants, keyed by resource file stem.

    Reads are lock-free (plain dict lookups); registration takes the write
    lock. assemble() is a pure function of its arguments and reentrant.
    """

    def __init__(self, sections: dict[str, str], styles: dict[str, str],
                 history_cap: int = DEFAULT_HISTORY_CAP) -> None:
        for sid in SECTION_IDS:
            if not sections.get(sid, "").strip():
                raise ValueError(f"section {sid!r} missing or empty")
        if STYLE_SLOT not in sections["technical"]:
            raise ValueError("technical section must contain the style slot")
        self._sections = dict(sections)
        self._styles = {name: StyleVariant(name, text)
                        for name, text in styles.items()}
        self._lock = threading.Lock()
        self.history_cap = history_cap

    @classmethod
    def from_directory(cls, root: Path | str, **kwargs) -> "PromptRegistry":
        root = Path(root)
        sections = {p.stem: p.read_text(encoding="utf-8")
                    for p in sorted((root / "sections").glob("*.md"))}
        styles = {p.stem: p.read_text(encoding="utf-8")
                  for p in sorted((root / "styles").glob("*.md"))}
        return cls(sections, styles, **kwargs)

    @classmethod
    def bundled(cls, **kwargs) -> "PromptRegistry":
        root = resources.files("genui") / "resources" / "prompts"
        with resources.as_file(root) as path:
            return cls.from_directory(path, **kwargs)

    @property
    def styles(self) -> tuple[str, ...]:
        return tuple(self._styles)

    @property
    def profiles(self) -> tuple[str, ...]:
        return tuple(PROFILES)

    def register_style(self, variant: StyleVariant,
                       overwrite: bool = False) -> None:
        with self._lock:
            if variant.name in self._styles and not overwrite:
                raise DuplicateStyle(variant.name)
            self._styles[variant.name] = variant

    def assemble(self, profile: str, style: str, ctx: DynamicContext,
                 history: Iterable[tuple[str, str]] = ()) -> PromptBundle:
        if profile not in PROFILES:
            raise UnknownProfile(profile)
        variant = self._styles.get(style)
        if variant is None:
            raise UnknownStyle(style)

        parts = []
        for sid in PROFILES[profile]:
            body = self._sections[sid]
            if sid == "technical":
                body = body.replace(STYLE_SLOT, variant.style_text.rstrip("\n"))
            elif sid == "dynamic":
                body = _render_dynamic(body, ctx)
            parts.append(body.rstrip("\n"))
        system_text = "\n\n".join(parts)
        assert system_text.count(STYLE_HEADER) == 1

        return PromptBundle(
            system_text=system_text,
            history=_validate_history(history, self.history_cap),
            style=style,
            profile=profile,
        )
