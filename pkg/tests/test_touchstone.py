import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfbar.io import OptionLine, TouchstoneDocument, TouchstoneError, parse_touchstone, write_touchstone


def test_minimal_ri_one_port():
    d = parse_touchstone("# HZ S RI R 50\n1e9 0 0\n")
    assert d.ports == 1
    assert d.frequencies.tolist() == [1e9]
    assert d.s[0, 0, 0] == 0
    again = parse_touchstone(write_touchstone(d))
    assert again.allclose(d)
    assert again.options == OptionLine("Hz", "S", "RI", 50.0)


def test_ma_degrees():
    d = parse_touchstone("# GHZ S MA R 50\n1 0.5 90\n")
    assert d.frequencies[0] == 1e9
    assert d.s[0, 0, 0] == pytest.approx(0.5j, abs=1e-15)


def test_db_format():
    d = parse_touchstone("# MHZ S DB R 75\n100 -6.0205999132796239 180\n")
    assert d.options.z0 == 75.0
    assert d.frequencies[0] == 1e8
    assert d.s[0, 0, 0] == pytest.approx(-0.5, abs=1e-12)


def test_defaults_without_option_line():
    d = parse_touchstone("! no header\n2 1 0\n")
    assert d.options == OptionLine()
    assert d.frequencies[0] == 2e9
    assert d.comments == (" no header",)


def test_two_port_order_is_s11_s21_s12_s22():
    d = parse_touchstone("# HZ S RI R 50\n1 11 0 21 0 12 0 22 0\n")
    assert d.ports == 2
    assert d.s[0].real.tolist() == [[11, 12], [21, 22]]


def test_comments_and_blank_lines():
    text = "! first\n\n# HZ S RI R 50\n1 0.1 0 ! trailing\n  \n2 0.2 0\n"
    d = parse_touchstone(text)
    assert len(d) == 2
    assert d.comments == (" first", " trailing")
    assert parse_touchstone(write_touchstone(d)).comments == d.comments


@pytest.mark.parametrize(
    "text, line, match",
    [
        ("# HZ S RI R 50\n1 0 0 0 0 0 0 0 0\n2 0 0\n", 3, "expected 9"),
        ("# HZ S RI R 50\n1 0 0\n2 0 0 0\n", 3, "expected 3"),
        ("# HZ S RI R 50\n2 0 0\n1 0 0\n", 3, "increasing"),
        ("# HZ S RI R 50\n1 0 0\n1 0 0\n", 3, "increasing"),
        ("# HZ S RI R 50\n-1 0 0\n", 2, "negative"),
        ("# HZ S RI R 50\n1 0 x\n", 2, "not a number"),
        ("# HZ S RI R 50\n1 0 nan\n", 2, "non-finite"),
        ("# HZ Y RI R 50\n1 0 0\n", 1, "only S"),
        ("# HZ S XY R 50\n", 1, "malformed option"),
        ("# HZ S RI R\n", 1, "R needs a value"),
        ("# HZ S RI R -5\n", 1, "positive"),
        ("[Version] 2.0\n", 1, "v1 only"),
        ("1 0 0\n# HZ S RI R 50\n", 2, "precede"),
        ("# HZ S RI R 50\n1 0 0 0 0\n", 2, "3 .1-port. or 9"),
    ],
)
def test_errors_name_the_line(text, line, match):
    with pytest.raises(TouchstoneError, match=match) as exc:
        parse_touchstone(text)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_explicit_port_count():
    with pytest.raises(TouchstoneError, match="expected 9"):
        parse_touchstone("# HZ S RI R 50\n1 0 0\n", ports=2)
    with pytest.raises(TouchstoneError):
        parse_touchstone("", ports=4)


def test_later_option_lines_ignored():
    d = parse_touchstone("# HZ S RI R 50\n# GHZ S MA R 75\n1 0.5 0\n")
    assert d.options.freq_unit == "Hz"


def test_empty_document_round_trip():
    empty = TouchstoneDocument(2, [], [], OptionLine("GHz", "S", "RI", 50.0))
    text = write_touchstone(empty)
    assert text == "# GHZ S RI R 50.0\n"
    again = parse_touchstone(text, ports=2)
    assert len(again) == 0 and again.ports == 2
    assert again.allclose(empty)


def test_document_validation():
    with pytest.raises(ValueError):
        TouchstoneDocument(3, [1.0], np.zeros((1, 3, 3)))
    with pytest.raises(ValueError):
        TouchstoneDocument(1, [2.0, 1.0], np.zeros((2, 1, 1)))
    with pytest.raises(ValueError):
        TouchstoneDocument(1, [1.0], np.zeros((1, 1, 1)), comments=("a\nb",))


def _random_passive(rng, n, ports):
    s = rng.normal(size=(n, ports, ports)) + 1j * rng.normal(size=(n, ports, ports))
    s *= rng.uniform(0.01, 0.999, n)[:, None, None] / np.linalg.norm(s, 2, axis=(1, 2))[:, None, None]
    return s


@pytest.mark.parametrize("fmt", ["RI", "MA", "DB"])
def test_201_point_two_port_round_trip(fmt):
    rng = np.random.default_rng(5)
    f = np.linspace(1e9, 67e9, 201)
    doc = TouchstoneDocument(2, f, _random_passive(rng, 201, 2), OptionLine("GHz", "S", fmt, 50.0), ("VNA",))
    again = parse_touchstone(write_touchstone(doc))
    assert again.allclose(doc, rtol=1e-12)
    assert np.max(np.abs(again.s - doc.s)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(0, 30),
    ports=st.sampled_from([1, 2]),
    unit=st.sampled_from(["Hz", "kHz", "MHz", "GHz"]),
    fmt=st.sampled_from(["RI", "MA", "DB"]),
    z0=st.floats(1.0, 1000.0),
    comments=st.lists(st.text(st.characters(blacklist_categories=["Cs", "Cc", "Zl", "Zp"])), max_size=3),
)
def test_round_trip_property(seed, n, ports, unit, fmt, z0, comments):
    rng = np.random.default_rng(seed)
    f = np.cumsum(rng.uniform(1e6, 1e9, n))
    doc = TouchstoneDocument(ports, f, _random_passive(rng, n, ports), OptionLine(unit, "S", fmt, z0), tuple(comments))
    text = write_touchstone(doc)
    again = parse_touchstone(text, ports=ports)
    assert again.allclose(doc, rtol=1e-12)
    assert parse_touchstone(write_touchstone(again), ports=ports).allclose(doc, rtol=1e-12)


def test_fuzz_random_bytes_never_crash():
    rng = np.random.default_rng(2024)
    alphabet = np.frombuffer(b"0123456789 .eE+-#!\n\tHZGMKSRIMADB[]xnaif", dtype=np.uint8)
    outcomes = {"doc": 0, "error": 0}
    for k in range(10_000):
        n = int(rng.integers(0, 200))
        if k % 2:
            data = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
        else:  # biased toward plausible text so the parser gets past line one
            data = rng.choice(alphabet, n).tobytes()
        try:
            doc = parse_touchstone(data)
        except TouchstoneError:
            outcomes["error"] += 1
        else:
            assert isinstance(doc, TouchstoneDocument)
            outcomes["doc"] += 1
    assert outcomes["doc"] + outcomes["error"] == 10_000
    assert outcomes["doc"] > 0 and outcomes["error"] > 0
