import pytest
from hypothesis import given, strategies as st

from genui.dom import (
    Element,
    ParseFailure,
    Text,
    ensure_head,
    iter_elements,
    node_path,
    parse,
    parse_or_fail,
    serialize,
    visible_text,
)


def roundtrip(html: str) -> str:
    return serialize(parse(html))


class TestSerializationFixedPoint:
    @pytest.mark.parametrize("html", [
        "<!DOCTYPE html><html><head><title>t</title></head><body>hi</body></html>",
        "<div class=\"a\"><p>one<p>two</div>",          # unclosed <p>
        "<ul><li>a<li>b</ul>",
        "<body>stray</b> end tag</body>",
        "<script>if (a < b && c > d) { x(); }</script>",
        "<style>.a { color: red } .b::before { content: '<' }</style>",
        "<img src=\"x.png\" alt=\"a &amp; b\">",
        "<p>5 &lt; 6 &amp;&amp; 7 &gt; 2</p>",
        "<input disabled value=\"v\">",
        "<!-- comment --><div>x</div>",
        "<div data-x=\"quote &quot;inside&quot;\">y</div>",
    ])
    def test_fixed_point(self, html):
        once = roundtrip(html)
        assert roundtrip(once) == once

    @given(st.text(alphabet="<>&\"'abc /=\n", max_size=60))
    def test_fixed_point_fuzz(self, html):
        once = roundtrip(html)
        assert roundtrip(once) == once


class TestLeniency:
    def test_unclosed_tags_close_implicitly(self):
        doc = parse("<div><span>hi")
        out = serialize(doc)
        assert out == "<div><span>hi</span></div>"

    def test_stray_end_tag_dropped(self):
        assert roundtrip("a</div>b") == "ab"

    def test_script_body_preserved_raw(self):
        src = "<script>var s = 'a < b';</script>"
        assert roundtrip(src) == src

    def test_parse_or_fail_rejects_elementless_input(self):
        with pytest.raises(ParseFailure):
            parse_or_fail("just some text, no tags")
        parse_or_fail("<html></html>")  # does not raise


class TestQueries:
    def test_visible_text_skips_script_and_style(self):
        doc = parse("<body><p>hello</p><script>var x;</script>"
                    "<style>.a{}</style><p>world</p></body>")
        assert visible_text(doc) == "helloworld"

    def test_node_path(self):
        doc = parse("<html><body><div></div><div><img src=\"x\"></div></body></html>")
        img = next(iter_elements(doc, "img"))
        assert node_path(doc, img) == "/html[1]/body[1]/div[2]/img[1]"

    def test_ensure_head_creates_under_html(self):
        doc = parse("<html><body>x</body></html>")
        head = ensure_head(doc)
        assert serialize(doc).startswith("<html><head></head>")
        assert ensure_head(doc) is head  # second call finds the same element

    def test_duplicate_attrs_first_wins(self):
        doc = parse('<div id="a" id="b"></div>')
        el = next(iter_elements(doc, "div"))
        assert el.attrs["id"] == "a"
