from datetime import datetime, timezone

import pytest

from genui.prompts import (
    DuplicateStyle,
    DynamicContext,
    PromptRegistry,
    StyleVariant,
    UnknownProfile,
    UnknownStyle,
)


@pytest.fixture(scope="module")
def registry():
    return PromptRegistry.bundled()


@pytest.fixture
def ctx():
    return DynamicContext(now=datetime(2025, 1, 1, tzinfo=timezone.utc))


def test_full_profile_renders_timestamp_without_location(registry, ctx):
    bundle = registry.assemble("full", "default", ctx)
    assert "It is now: 2025-01-01" in bundle.system_text
    assert "estimated location" not in bundle.system_text


def test_location_line_present_when_shared(registry):
    ctx = DynamicContext(now=datetime(2025, 1, 1, tzinfo=timezone.utc),
                         user_location="Zurich, Switzerland")
    bundle = registry.assemble("full", "default", ctx)
    assert "The user's estimated location is Zurich, Switzerland" \
        in bundle.system_text


def test_styles_differ_only_in_style_section(registry, ctx):
    base = registry.assemble("full", "default", ctx).system_text
    green = registry.assemble("full", "wizard_green", ctx).system_text
    # strip each text to a common prefix/suffix; the differing middle must be
    # exactly the two style bodies
    prefix = 0
    while base[prefix] == green[prefix]:
        prefix += 1
    suffix = 0
    while base[-1 - suffix] == green[-1 - suffix]:
        suffix += 1
    assert "**Style:**" in base[max(0, prefix - 200):prefix + 10]
    assert base[:prefix - 10].count("**Style:**") <= 1
    assert base[len(base) - suffix:] == green[len(green) - suffix:]


def test_exactly_one_style_section(registry, ctx):
    for profile in registry.profiles:
        for style in registry.styles:
            text = registry.assemble(profile, style, ctx).system_text
            assert text.count("**Style:**") == 1


def test_minimal_excludes_philosophy_keeps_technical(registry, ctx):
    text = registry.assemble("minimal", "default", ctx).system_text
    assert "Core Philosophy" not in text
    assert "Application Examples" not in text
    assert "Image Handling Strategy" in text


def test_no_philosophy_drops_philosophy_and_examples(registry, ctx):
    text = registry.assemble("no_philosophy", "default", ctx).system_text
    assert "Core Philosophy" not in text
    assert "Application Examples" not in text
    assert "Mandatory Internal Thought Process" in text


def test_profile_section_subset_chain(registry, ctx):
    def sections_of(profile):
        text = registry.assemble(profile, "default", ctx).system_text
        markers = {
            "philosophy": "Core Philosophy",
            "examples": "Application Examples",
            "planning": "Mandatory Internal Thought Process",
            "technical": "Output Requirements & Format",
            "dynamic": "It is now:",
        }
        return {sid for sid, m in markers.items() if m in text}

    minimal = sections_of("minimal")
    no_phil = sections_of("no_philosophy")
    full = sections_of("full")
    assert minimal < no_phil < full
    assert full == {"philosophy", "examples", "planning", "technical", "dynamic"}


def test_assemble_is_pure(registry, ctx):
    a = registry.assemble("full", "classic", ctx, [("user", "hi")])
    b = registry.assemble("full", "classic", ctx, [("user", "hi")])
    assert a == b


def test_unknown_profile_and_style(registry, ctx):
    with pytest.raises(UnknownProfile):
        registry.assemble("gigantic", "default", ctx)
    with pytest.raises(UnknownStyle):
        registry.assemble("full", "neon", ctx)


class TestStyleRegistration:
    def test_register_roundtrip(self, ctx):
        reg = PromptRegistry.bundled()
        reg.register_style(StyleVariant("mono", "**Style:**\nmonochrome only"))
        text = reg.assemble("full", "mono", ctx).system_text
        assert "monochrome only" in text

    def test_duplicate_requires_overwrite(self, ctx):
        reg = PromptRegistry.bundled()
        with pytest.raises(DuplicateStyle):
            reg.register_style(StyleVariant("classic", "**Style:** other"))
        reg.register_style(StyleVariant("classic", "**Style:** other"),
                           overwrite=True)
        assert "other" in reg.assemble("full", "classic", ctx).system_text

    def test_empty_style_text_rejected(self):
        with pytest.raises(ValueError):
            StyleVariant("empty", "   ")


class TestHistory:
    def test_roles_must_alternate_starting_with_user(self, registry, ctx):
        with pytest.raises(ValueError):
            registry.assemble("full", "default", ctx, [("model", "hi")])
        with pytest.raises(ValueError):
            registry.assemble("full", "default", ctx,
                              [("user", "a"), ("user", "b")])

    def test_cap_keeps_suffix_anchored_on_user(self, ctx):
        reg = PromptRegistry.bundled(history_cap=4)
        history = []
        for i in range(5):
            history += [("user", f"u{i}"), ("model", f"m{i}")]
        bundle = reg.assemble("full", "default", ctx, history)
        assert len(bundle.history) == 4
        assert bundle.history[0] == ("user", "u3")
        assert bundle.history[-1] == ("model", "m4")

    def test_naive_datetime_rejected(self):
        with pytest.raises(ValueError):
            DynamicContext(now=datetime(2025, 1, 1))
