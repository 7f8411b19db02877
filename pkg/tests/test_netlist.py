from importlib import resources

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ferrosim.netlist import (DC, PWL, SUFFIXES, Capacitor, Ftj, Mosfet, Netlist,
                              NetlistParseError, Pulse, Resistor, Triangle, VSource,
                              eval_stimulus, parse_netlist, parse_value, serialize_netlist,
                              structurally_equal, validate_netlist)

FIXTURES = ["2t1c", "diffpair", "nvsram", "rc", "divider", "ftj_pulse"]


def fixture_text(name: str) -> str:
    return resources.files("ferrosim").joinpath(f"data/{name}.cir").read_text(encoding="utf-8")


# --- numbers ---------------------------------------------------------------

SUFFIX_TABLE = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3, "k": 1e3,
                "meg": 1e6, "g": 1e9}


@pytest.mark.parametrize("suffix", sorted(SUFFIX_TABLE))
def test_suffix_table(suffix):
    scale = SUFFIX_TABLE[suffix]
    assert SUFFIXES[suffix] == scale
    for spelled in (suffix, suffix.upper(), suffix.capitalize()):
        assert parse_value(f"1{spelled}") == pytest.approx(scale, rel=1e-15)
        assert parse_value(f"2.5{spelled}") == pytest.approx(2.5 * scale, rel=1e-15)
    # trailing unit letters are ignored after the suffix
    assert parse_value(f"3{suffix}s") == pytest.approx(3 * scale, rel=1e-15)


def test_meg_versus_milli():
    assert parse_value("1meg") == 1e6
    assert parse_value("1MEG") == 1e6
    assert parse_value("1m") == 1e-3
    assert parse_value("1M") == 1e-3
    assert parse_value("1e3") == 1e3
    assert parse_value("-2.5e-3") == -2.5e-3


@pytest.mark.parametrize("bad", ["", "abc", "1..2", "1e", "k1", "1.2.3", "--1"])
def test_bad_numbers(bad):
    with pytest.raises(ValueError):
        parse_value(bad)


# --- parsing ---------------------------------------------------------------

def test_resistor_card():
    net = parse_netlist("t\nR1 n1 0 1k\n.end\n")
    assert net.elements == [Resistor("r1", "n1", "0", 1000.0)]


def test_capacitor_suffix():
    net = parse_netlist("t\nC1 a b 2.5p\n")
    assert net.elements[0].farads == pytest.approx(2.5e-12)


def test_programming_pulse_card():
    net = parse_netlist("t\nVPL pl 0 PULSE(0 4.5 0 10n 10u 10n 100u)\n")
    assert net.elements[0].stimulus == Pulse(0.0, 4.5, 0.0, 10e-9, 10e-6, 10e-9, 100e-6)


def test_continuation_and_comments():
    net = parse_netlist("t\n* comment\nR1 a 0\n+ 1k ; trailing\n")
    assert net.elements[0].ohms == 1000.0


def test_ftj_card_and_overrides():
    net = parse_netlist("t\nF1 a 0 VARIANT=c P0=0.5 AREA=1e-8\n")
    e = net.elements[0]
    assert isinstance(e, Ftj) and e.variant == "C" and e.p0 == 0.5
    assert dict(e.overrides) == {"area": 1e-8}


def test_mosfet_polarity_from_model():
    net = parse_netlist("t\nM1 d g s b pch W=2u L=1u\n.model pch pmos (vt=0.4 kp=1e-4)\n")
    m = net.elements[0]
    assert isinstance(m, Mosfet) and m.polarity == "p" and m.w == pytest.approx(2e-6)


def test_directives():
    net = parse_netlist("t\nV1 a 0 1\nR1 a 0 1k\n.tran 1n 1u\n.dc v1 0 1 0.1\n")
    assert len(net.analyses) == 2


MALFORMED = [
    ("t\nR1 a 0 1k\nR1 b 0 2k\n", 3),                 # duplicate name
    ("t\nQ1 a b c\n", 2),                              # unknown element letter
    ("t\nR1 a 0\n", 2),                                # missing value
    ("t\nR1 a 0 1..5\n", 2),                           # bad number
    ("t\nM1 d g s b nomodel\n", 2),                    # unresolved model
    ("t\nV1 a 0 PWL(0 0 1u 1 0.5u 2)\n", 2),           # non-monotone PWL
    ("t\nF1 a 0 VARIANT=Z\n", 2),                      # unknown variant
    ("t\nF1 a 0 P0=2\n", 2),                           # P0 outside [-1, 1]
    ("t\nR1 a 0 1k extra\n", 2),                       # trailing token
    ("t\nC1 a 0 1p IC\n", 2),                          # dangling keyword
    ("t\nV1 a 0 PULSE(0 1\n", 2),                      # unclosed parenthesis
    ("t\nR1 a 0 -5\n", 2),                             # non-positive resistance
]


@pytest.mark.parametrize("text,line", MALFORMED)
def test_positioned_errors(text, line):
    with pytest.raises(NetlistParseError) as exc:
        parse_netlist(text)
    assert exc.value.line == line
    assert exc.value.col >= 1
    assert f"line {line}" in str(exc.value)


# --- serialization ---------------------------------------------------------

@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_round_trip(name):
    net = parse_netlist(fixture_text(name))
    again = parse_netlist(serialize_netlist(net))
    assert structurally_equal(net, again)
    assert serialize_netlist(again) == serialize_netlist(net)


@pytest.mark.parametrize("name", FIXTURES)
def test_fixtures_validate_clean(name):
    assert validate_netlist(parse_netlist(fixture_text(name))) == []


def test_empty_netlist():
    assert serialize_netlist(Netlist("title")) == "title\n.end\n"


def test_numbers_in_scientific_notation():
    text = serialize_netlist(parse_netlist("t\nR1 a 0 1234.56789012\n"))
    assert "1.23456789e+03" in text


names = st.from_regex(r"[a-z][a-z0-9]{0,4}", fullmatch=True)
values = st.floats(1e-15, 1e9, allow_nan=False)


@st.composite
def netlists(draw):
    nodes = draw(st.lists(names, min_size=1, max_size=4, unique=True)) + ["0"]
    els = []
    for k in range(draw(st.integers(1, 6))):
        kind = draw(st.sampled_from("vrcf"))
        a, b = draw(st.sampled_from(nodes)), draw(st.sampled_from(nodes))
        if kind == "v":
            ts = sorted(set(draw(st.lists(st.floats(0, 1e-3), min_size=1, max_size=4))))
            stim = draw(st.sampled_from([DC(draw(values)), PWL(tuple((t, draw(st.floats(-5, 5)))
                                                                    for t in ts))]))
            els.append(VSource(f"v{k}", a, b, stim))
        elif kind == "r":
            els.append(Resistor(f"r{k}", a, b, draw(values)))
        elif kind == "c":
            ic = draw(st.none() | st.floats(-5, 5))
            els.append(Capacitor(f"c{k}", a, b, draw(values), ic))
        else:
            els.append(Ftj(f"f{k}", a, b, draw(st.sampled_from("ABC")), draw(st.floats(-1, 1))))
    return Netlist("random", els)


@given(netlists())
def test_round_trip_property(net):
    assert structurally_equal(parse_netlist(serialize_netlist(net)), net)


# --- validation ------------------------------------------------------------

def test_no_ground_and_dangling():
    codes = [d.code for d in validate_netlist(parse_netlist("t\nR1 n1 n2 1k\n"))]
    assert codes.count("no-ground") == 1
    assert codes.count("dangling") == 2


def test_ftj_without_dc_path():
    net = parse_netlist("t\nV1 a 0 1\nC1 a b 1p\nF1 b c\nC2 c 0 1p\n")
    assert any(d.code == "ftj-no-dc-path" for d in validate_netlist(net))


# --- stimuli ---------------------------------------------------------------

def test_pwl_examples():
    s = PWL(((0.0, 0.0), (1e-6, 1.0)))
    assert eval_stimulus(s, 0.5e-6) == pytest.approx(0.5)
    assert eval_stimulus(s, 5e-6) == 1.0
    assert eval_stimulus(s, 0.0) == 0.0


def test_triangle_peak():
    s = Triangle(5.5, 1e3, 1, True)
    assert eval_stimulus(s, 0.25e-3) == pytest.approx(5.5)
    assert eval_stimulus(s, 0.75e-3) == pytest.approx(-5.5)


def test_pulse_shape():
    s = Pulse(0, 4.5, 1e-6, 10e-9, 10e-6, 10e-9, 0.0)
    assert eval_stimulus(s, 0.5e-6) == 0.0
    assert eval_stimulus(s, 1e-6 + 5e-9) == pytest.approx(2.25)
    assert eval_stimulus(s, 5e-6) == 4.5
    assert eval_stimulus(s, 20e-6) == 0.0


@given(pts=st.lists(st.tuples(st.floats(0, 1), st.floats(-5, 5)), min_size=2, max_size=8,
                    unique_by=lambda p: p[0]),
       t=st.floats(0, 1))
def test_pwl_continuous(pts, t):
    s = PWL(tuple(sorted(pts)))
    lo, hi = eval_stimulus(s, max(t - 1e-12, 0)), eval_stimulus(s, t + 1e-12)
    slope = max(abs((b[1] - a[1]) / (b[0] - a[0])) for a, b in zip(s.points, s.points[1:]))
    assert abs(hi - lo) <= slope * 2.1e-12 + 1e-12


@given(t=st.floats(0, 2e-3))
def test_triangle_continuous(t):
    s = Triangle(5.5, 1e3, 2, True)
    d = abs(eval_stimulus(s, t + 1e-9) - eval_stimulus(s, t))
    assert d <= s.slew * 1e-9 * 1.001 + 1e-12 or abs(t - 2e-3) < 2e-9


def test_stimulus_array_input():
    v = eval_stimulus(DC(1.5), np.zeros(3))
    assert np.array_equal(v, [1.5, 1.5, 1.5])
