"""SPICE-like netlist dialect: data model, parser, serializer and checks.

Supported cards::

    Vname n+ n- [DC] value | PWL(t1 v1 ...) | PULSE(v0 v1 td tr pw tf per)
                | TRIANGLE(amp freq cycles [BIPOLAR|UNIPOLAR])
    Rname a b ohms
    Cname a b farads [IC=v]
    Mname d g s b model [W=w] [L=l] [DVT=dv]
    Fname a b [VARIANT=A] [P0=p] [field=value ...]
    .model name nmos|pmos (vt=.. kp=.. n=..)
    .tran tstep tstop
    .dc src start stop step
    .end

The first line is the title, ``*`` starts a comment line, ``;`` an inline
comment and ``+`` continues the previous card.  Identifiers are
case-insensitive and stored lowercase.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .ftj import FLAT_KEYS

# ---------------------------------------------------------------------------
# numbers

SUFFIXES = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3,
            "k": 1e3, "meg": 1e6, "g": 1e9}

_SUFFIX_EXP = {"f": -15, "p": -12, "n": -9, "u": -6, "m": -3, "k": 3, "meg": 6, "g": 9}
_NUM_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:e[+-]?\d+)?)(meg|[fpnumkg])?([a-z]*)$")


def parse_value(token: str) -> float:
    """Parse a number with an optional engineering suffix (``1meg``, ``2.5p``, ``10us``)."""
    m = _NUM_RE.match(token.strip().lower())
    if not m:
        raise ValueError(f"not a number: {token!r}")
    mant, suffix, unit = m.groups()
    if unit and not suffix and unit[0] == "e":
        raise ValueError(f"malformed exponent: {token!r}")
    value = float(mant)
    if suffix:
        # shift the decimal exponent so "10u" is exactly 1e-05
        base, _, exp = mant.partition("e")
        value = float(f"{base}e{int(exp or 0) + _SUFFIX_EXP[suffix]}")
    if not math.isfinite(value):
        raise ValueError(f"non-finite number: {token!r}")
    return value


def format_value(x: float) -> str:
    return f"{x:.8e}"


# ---------------------------------------------------------------------------
# stimuli

@dataclass(frozen=True)
class DC:
    value: float


@dataclass(frozen=True)
class PWL:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.points)
        if not pts:
            raise ValueError("PWL needs at least one point")
        ts = [t for t, _ in pts]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("PWL times must be strictly increasing")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class Pulse:
    v0: float
    v1: float
    delay: float = 0.0
    rise: float = 0.0
    width: float = 0.0
    fall: float = 0.0
    period: float = 0.0

    def __post_init__(self):
        if min(self.delay, self.rise, self.width, self.fall, self.period) < 0:
            raise ValueError("PULSE times must be >= 0")


@dataclass(frozen=True)
class Triangle:
    amplitude: float
    frequency: float
    cycles: float = 1.0
    bipolar: bool = True

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("TRIANGLE frequency must be > 0")
        if not self.cycles > 0:
            raise ValueError("TRIANGLE cycles must be > 0")

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    @property
    def slew(self) -> float:
        return (4.0 if self.bipolar else 2.0) * abs(self.amplitude) * self.frequency


Stimulus = Union[DC, PWL, Pulse, Triangle]


def eval_stimulus(stim: Stimulus, t):
    """Source value at time ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if isinstance(stim, DC):
        out = np.full(t_arr.shape, stim.value)
    elif isinstance(stim, PWL):
        ts = np.array([p[0] for p in stim.points])
        vs = np.array([p[1] for p in stim.points])
        out = np.interp(t_arr, ts, vs)
    elif isinstance(stim, Pulse):
        out = _eval_pulse(stim, t_arr)
    elif isinstance(stim, Triangle):
        out = _eval_triangle(stim, t_arr)
    else:
        raise TypeError(f"unknown stimulus {stim!r}")
    return float(out) if out.ndim == 0 else out


def _eval_pulse(s: Pulse, t: np.ndarray) -> np.ndarray:
    tt = t - s.delay
    if s.period > 0:
        tt = np.where(tt >= 0, np.mod(tt, s.period), tt)
    out = np.full(t.shape, s.v0, dtype=float)
    dv = s.v1 - s.v0
    t_r, t_w, t_f = s.rise, s.rise + s.width, s.rise + s.width + s.fall
    with np.errstate(divide="ignore", invalid="ignore"):
        rising = (tt >= 0) & (tt < t_r)
        out = np.where(rising, s.v0 + dv * tt / (s.rise if s.rise > 0 else 1.0), out)
        out = np.where((tt >= t_r) & (tt <= t_w), s.v1, out)
        falling = (tt > t_w) & (tt < t_f)
        out = np.where(falling, s.v1 - dv * (tt - t_w) / (s.fall if s.fall > 0 else 1.0), out)
    return out


def _eval_triangle(s: Triangle, t: np.ndarray) -> np.ndarray:
    x = t * s.frequency
    done = x >= s.cycles
    frac = np.mod(x, 1.0)
    a = s.amplitude
    if s.bipolar:
        v = np.where(frac < 0.25, 4 * frac, np.where(frac < 0.75, 2 - 4 * frac, 4 * frac - 4)) * a
    else:
        v = np.where(frac < 0.5, 2 * frac, 2 - 2 * frac) * a
    v = np.where(done, 0.0, v)
    return np.where(t < 0, 0.0, v)


def stimulus_breakpoints(stim: Stimulus, tstop: float) -> list[float]:
    """Times in ``(0, tstop]`` where the stimulus has a corner."""
    pts: list[float] = []
    if isinstance(stim, PWL):
        pts = [t for t, _ in stim.points]
    elif isinstance(stim, Pulse):
        edges = [0.0, stim.rise, stim.rise + stim.width, stim.rise + stim.width + stim.fall]
        base = stim.delay
        while base <= tstop:
            pts.extend(base + e for e in edges)
            if stim.period <= 0:
                break
            base += stim.period
    elif isinstance(stim, Triangle):
        q = (0.25 if stim.bipolar else 0.5) / stim.frequency
        n = int(math.ceil(stim.cycles / stim.frequency / q))
        pts = [k * q for k in range(1, n + 1)]
    return sorted({t for t in pts if 0 < t <= tstop})


# ---------------------------------------------------------------------------
# elements and netlist

@dataclass(frozen=True)
class VSource:
    name: str
    n_plus: str
    n_minus: str
    stimulus: Stimulus

    @property
    def nodes(self):
        return (self.n_plus, self.n_minus)


@dataclass(frozen=True)
class Resistor:
    name: str
    a: str
    b: str
    ohms: float

    @property
    def nodes(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Capacitor:
    name: str
    a: str
    b: str
    farads: float
    ic: float | None = None

    @property
    def nodes(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Mosfet:
    name: str
    d: str
    g: str
    s: str
    b: str
    model: str
    w: float = 1e-6
    l: float = 1e-6
    dvt: float = 0.0
    polarity: str = "n"

    @property
    def nodes(self):
        return (self.d, self.g, self.s, self.b)


@dataclass(frozen=True)
class Ftj:
    name: str
    a: str
    b: str
    variant: str = "A"
    p0: float = -1.0
    overrides: tuple[tuple[str, float], ...] = ()

    @property
    def nodes(self):
        return (self.a, self.b)


Element = Union[VSource, Resistor, Capacitor, Mosfet, Ftj]


@dataclass(frozen=True)
class ModelCard:
    name: str
    kind: str
    params: tuple[tuple[str, float], ...] = ()

    def get(self, key: str, default: float) -> float:
        return dict(self.params).get(key, default)


@dataclass(frozen=True)
class Tran:
    tstep: float
    tstop: float


@dataclass(frozen=True)
class DcSweep:
    source: str
    start: float
    stop: float
    step: float


AnalysisDirective = Union[Tran, DcSweep]


@dataclass
class Netlist:
    title: str = ""
    elements: list = field(default_factory=list)
    models: dict = field(default_factory=dict)
    analyses: list = field(default_factory=list)

    def element(self, name: str) -> Element:
        name = name.lower()
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    def nodes(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.elements:
            for n in e.nodes:
                seen.setdefault(n, None)
        return list(seen)

    def replace_element(self, new: Element) -> "Netlist":
        els = [new if e.name == new.name else e for e in self.elements]
        return Netlist(self.title, els, dict(self.models), list(self.analyses))


# ---------------------------------------------------------------------------
# parser

class NetlistParseError(ValueError):
    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col
        self.reason = message


@dataclass
class _Tok:
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"\(|\)|=|,|[^\s(),=]+")


def _tokenize_line(raw: str, lineno: int) -> list[_Tok]:
    cut = raw.find(";")
    if cut >= 0:
        raw = raw[:cut]
    return [_Tok(m.group(0), lineno, m.start() + 1) for m in _TOKEN_RE.finditer(raw)]


def _logical_cards(text: str):
    lines = text.splitlines()
    title = lines[0].strip() if lines else ""
    cards: list[list[_Tok]] = []
    for i, raw in enumerate(lines[1:], start=2):
        s = raw.strip()
        if not s or s.startswith("*"):
            continue
        if s.startswith("+"):
            if not cards:
                raise NetlistParseError("continuation line without a preceding card", i, raw.index("+") + 1)
            off = raw.index("+")
            toks = _tokenize_line(raw[:off] + " " + raw[off + 1:], i)
            cards[-1].extend(toks)
            continue
        toks = _tokenize_line(raw, i)
        if toks:
            cards.append(toks)
    return title, cards


class _Cursor:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1]
            raise NetlistParseError(f"expected {what}", last.line, last.col + len(last.text))
        self.i += 1
        return tok

    def number(self, what: str) -> float:
        tok = self.next(what)
        try:
            return parse_value(tok.text)
        except ValueError:
            raise NetlistParseError(f"expected {what}, got {tok.text!r}", tok.line, tok.col) from None

    def node(self, what: str) -> str:
        tok = self.next(what)
        if tok.text in "()=,":
            raise NetlistParseError(f"expected {what}, got {tok.text!r}", tok.line, tok.col)
        return tok.text.lower()

    def expect(self, text: str) -> _Tok:
        tok = self.next(repr(text))
        if tok.text != text:
            raise NetlistParseError(f"expected {text!r}, got {tok.text!r}", tok.line, tok.col)
        return tok

    def group(self) -> list[_Tok]:
        """Tokens inside a parenthesised group, commas dropped."""
        self.expect("(")
        out = []
        while True:
            tok = self.next("')'")
            if tok.text == ")":
                return out
            if tok.text != ",":
                out.append(tok)

    def keywords(self) -> list[tuple[_Tok, _Tok]]:
        """Remaining ``key=value`` pairs."""
        out = []
        while self.peek() is not None:
            key = self.next("key")
            if key.text in "()=,":
                raise NetlistParseError(f"unexpected {key.text!r}", key.line, key.col)
            self.expect("=")
            out.append((key, self.next("value")))
        return out

    def done(self):
        tok = self.peek()
        if tok is not None:
            raise NetlistParseError(f"unexpected token {tok.text!r}", tok.line, tok.col)


def _num(tok: _Tok, what: str) -> float:
    try:
        return parse_value(tok.text)
    except ValueError:
        raise NetlistParseError(f"expected {what}, got {tok.text!r}", tok.line, tok.col) from None


def _parse_stimulus(cur: _Cursor) -> Stimulus:
    tok = cur.peek()
    if tok is None:
        cur.next("source value")
    kw = tok.text.lower()
    if kw == "dc":
        cur.next("dc")
        return DC(cur.number("DC value"))
    if kw in ("pwl", "pulse", "triangle", "tri"):
        cur.next(kw)
        args = cur.group()
        try:
            if kw == "pwl":
                vals = [_num(a, "PWL value") for a in args]
                if len(vals) < 2 or len(vals) % 2:
                    raise NetlistParseError("PWL needs time/value pairs", tok.line, tok.col)
                return PWL(tuple(zip(vals[::2], vals[1::2])))
            if kw == "pulse":
                vals = [_num(a, "PULSE value") for a in args]
                if not 2 <= len(vals) <= 7:
                    raise NetlistParseError("PULSE takes 2 to 7 values", tok.line, tok.col)
                return Pulse(*vals)
            bipolar = True
            if args and args[-1].text.lower() in ("bipolar", "unipolar"):
                bipolar = args.pop().text.lower() == "bipolar"
            vals = [_num(a, "TRIANGLE value") for a in args]
            if not 2 <= len(vals) <= 3:
                raise NetlistParseError("TRIANGLE takes amplitude, frequency[, cycles]", tok.line, tok.col)
            return Triangle(*vals, bipolar=bipolar)
        except ValueError as exc:
            if isinstance(exc, NetlistParseError):
                raise
            raise NetlistParseError(str(exc), tok.line, tok.col) from None
    return DC(cur.number("source value"))


def parse_netlist(text: str) -> Netlist:
    """Parse netlist text.  Raises :class:`NetlistParseError` with a 1-based position."""
    title, cards = _logical_cards(text)
    net = Netlist(title=title)
    names: dict[str, _Tok] = {}
    model_refs: list[tuple[str, _Tok]] = []
    for toks in cards:
        head = toks[0]
        key = head.text.lower()
        cur = _Cursor(toks)
        cur.next("card")
        if key.startswith("."):
            if key == ".end":
                break
            _parse_directive(key, head, cur, net)
            continue
        kind = key[0]
        if kind not in "vrcmf":
            raise NetlistParseError(f"unknown element type {head.text!r}", head.line, head.col)
        if key in names:
            raise NetlistParseError(f"duplicate element name {head.text!r}", head.line, head.col)
        names[key] = head
        try:
            if kind == "v":
                a, b = cur.node("node"), cur.node("node")
                el = VSource(key, a, b, _parse_stimulus(cur))
            elif kind == "r":
                a, b = cur.node("node"), cur.node("node")
                ohms = cur.number("resistance")
                if not ohms > 0:
                    raise NetlistParseError("resistance must be > 0", head.line, head.col)
                el = Resistor(key, a, b, ohms)
            elif kind == "c":
                a, b = cur.node("node"), cur.node("node")
                farads = cur.number("capacitance")
                if not farads > 0:
                    raise NetlistParseError("capacitance must be > 0", head.line, head.col)
                ic = None
                for k, v in cur.keywords():
                    if k.text.lower() != "ic":
                        raise NetlistParseError(f"unknown capacitor parameter {k.text!r}", k.line, k.col)
                    ic = _num(v, "IC value")
                el = Capacitor(key, a, b, farads, ic)
            elif kind == "m":
                d, g, s, bb = (cur.node("node") for _ in range(4))
                mtok = cur.next("model name")
                params = {"w": 1e-6, "l": 1e-6, "dvt": 0.0}
                for k, v in cur.keywords():
                    kk = k.text.lower()
                    if kk not in params:
                        raise NetlistParseError(f"unknown MOSFET parameter {k.text!r}", k.line, k.col)
                    params[kk] = _num(v, kk)
                if not (params["w"] > 0 and params["l"] > 0):
                    raise NetlistParseError("W and L must be > 0", head.line, head.col)
                model_refs.append((mtok.text.lower(), mtok))
                el = Mosfet(key, d, g, s, bb, mtok.text.lower(), params["w"], params["l"], params["dvt"])
            else:
                a, b = cur.node("node"), cur.node("node")
                variant, p0, over = "A", -1.0, {}
                for k, v in cur.keywords():
                    kk = k.text.lower()
                    if kk == "variant":
                        variant = v.text.upper()
                        if variant not in ("A", "B", "C"):
                            raise NetlistParseError(f"unknown FTJ variant {v.text!r}", v.line, v.col)
                    elif kk == "p0":
                        p0 = _num(v, "P0")
                        if not -1.0 <= p0 <= 1.0:
                            raise NetlistParseError("P0 must lie in [-1, 1]", v.line, v.col)
                    elif kk in FLAT_KEYS:
                        over[kk] = _num(v, kk)
                    else:
                        raise NetlistParseError(f"unknown FTJ parameter {k.text!r}", k.line, k.col)
                el = Ftj(key, a, b, variant, p0, tuple(sorted(over.items())))
        except NetlistParseError:
            raise
        except ValueError as exc:
            raise NetlistParseError(str(exc), head.line, head.col) from None
        cur.done()
        net.elements.append(el)
    for ref, tok in model_refs:
        if ref not in net.models:
            raise NetlistParseError(f"unresolved model {tok.text!r}", tok.line, tok.col)
    net.elements = [
        _with_polarity(e, net.models) if isinstance(e, Mosfet) else e for e in net.elements
    ]
    return net


def _with_polarity(m: Mosfet, models: dict) -> Mosfet:
    pol = "p" if models[m.model].kind == "pmos" else "n"
    return Mosfet(m.name, m.d, m.g, m.s, m.b, m.model, m.w, m.l, m.dvt, pol)


def _parse_directive(key: str, head: _Tok, cur: _Cursor, net: Netlist) -> None:
    if key == ".model":
        name = cur.node("model name")
        kind_tok = cur.next("model type")
        kind = kind_tok.text.lower()
        if kind not in ("nmos", "pmos"):
            raise NetlistParseError(f"unsupported model type {kind_tok.text!r}", kind_tok.line, kind_tok.col)
        rest = cur.toks[cur.i:]
        if rest and rest[0].text == "(":
            inner = _Cursor(cur.group())
            cur.done()
        else:
            inner = cur
        params = {}
        for k, v in inner.keywords():
            params[k.text.lower()] = _num(v, k.text)
        if name in net.models:
            raise NetlistParseError(f"duplicate model {name!r}", head.line, head.col)
        net.models[name] = ModelCard(name, kind, tuple(sorted(params.items())))
    elif key == ".tran":
        tstep, tstop = cur.number("tstep"), cur.number("tstop")
        cur.done()
        if not (tstep > 0 and tstop > 0):
            raise NetlistParseError(".tran times must be > 0", head.line, head.col)
        net.analyses.append(Tran(tstep, tstop))
    elif key == ".dc":
        src = cur.node("source name")
        start, stop, step = cur.number("start"), cur.number("stop"), cur.number("step")
        cur.done()
        net.analyses.append(DcSweep(src, start, stop, step))
    else:
        raise NetlistParseError(f"unknown directive {head.text!r}", head.line, head.col)


# ---------------------------------------------------------------------------
# serializer

def _fmt_stim(s: Stimulus) -> str:
    f = format_value
    if isinstance(s, DC):
        return f"DC {f(s.value)}"
    if isinstance(s, PWL):
        return "PWL(" + " ".join(f"{f(t)} {f(v)}" for t, v in s.points) + ")"
    if isinstance(s, Pulse):
        vals = (s.v0, s.v1, s.delay, s.rise, s.width, s.fall, s.period)
        return "PULSE(" + " ".join(f(v) for v in vals) + ")"
    return (f"TRIANGLE({f(s.amplitude)} {f(s.frequency)} {f(s.cycles)} "
            f"{'BIPOLAR' if s.bipolar else 'UNIPOLAR'})")


def _fmt_element(e: Element) -> str:
    f = format_value
    if isinstance(e, VSource):
        return f"{e.name} {e.n_plus} {e.n_minus} {_fmt_stim(e.stimulus)}"
    if isinstance(e, Resistor):
        return f"{e.name} {e.a} {e.b} {f(e.ohms)}"
    if isinstance(e, Capacitor):
        ic = f" IC={f(e.ic)}" if e.ic is not None else ""
        return f"{e.name} {e.a} {e.b} {f(e.farads)}{ic}"
    if isinstance(e, Mosfet):
        dvt = f" DVT={f(e.dvt)}" if e.dvt else ""
        return f"{e.name} {e.d} {e.g} {e.s} {e.b} {e.model} W={f(e.w)} L={f(e.l)}{dvt}"
    over = "".join(f" {k.upper()}={f(v)}" for k, v in e.overrides)
    return f"{e.name} {e.a} {e.b} VARIANT={e.variant} P0={f(e.p0)}{over}"


def serialize_netlist(net: Netlist) -> str:
    """Canonical text; numbers in scientific notation with 9 significant digits."""
    lines = [net.title]
    lines += [_fmt_element(e) for e in net.elements]
    for m in net.models.values():
        params = " ".join(f"{k}={format_value(v)}" for k, v in m.params)
        lines.append(f".model {m.name} {m.kind} ({params})")
    for a in net.analyses:
        if isinstance(a, Tran):
            lines.append(f".tran {format_value(a.tstep)} {format_value(a.tstop)}")
        else:
            lines.append(f".dc {a.source} {format_value(a.start)} {format_value(a.stop)} {format_value(a.step)}")
    lines.append(".end")
    return "\n".join(lines) + "\n"


def canonical(net: Netlist) -> Netlist:
    """Netlist with every number rounded to the 9 significant digits the serializer keeps."""
    return parse_netlist(serialize_netlist(net))


def structurally_equal(a: Netlist, b: Netlist) -> bool:
    return canonical(a) == canonical(b)


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Diagnostic:
    code: str
    subject: str
    message: str


def _union_find(pairs: Iterable[tuple[str, str]], nodes: Iterable[str]) -> dict[str, str]:
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return {n: find(n) for n in parent}


def dc_path_groups(net: Netlist) -> dict[str, str]:
    """Group nodes joined by conducting paths (R, V, MOSFET channel)."""
    pairs = []
    for e in net.elements:
        if isinstance(e, (Resistor, VSource)):
            pairs.append(e.nodes)
        elif isinstance(e, Mosfet):
            pairs.append((e.d, e.s))
    nodes = set(net.nodes()) | {"0"}
    return _union_find(pairs, nodes)


def validate_netlist(net: Netlist) -> list[Diagnostic]:
    """Structural diagnostics; an empty list means the netlist is clean."""
    diags: list[Diagnostic] = []
    nodes = net.nodes()
    if "0" not in nodes:
        diags.append(Diagnostic("no-ground", "0", "no ground reference (node 0)"))
    counts: dict[str, int] = {}
    for e in net.elements:
        for n in e.nodes:
            counts[n] = counts.get(n, 0) + 1
    for n in nodes:
        if counts[n] == 1 and n != "0":
            diags.append(Diagnostic("dangling", n, f"node {n} is touched by a single terminal"))
    groups = dc_path_groups(net)
    ground = groups["0"]
    for e in net.elements:
        if isinstance(e, Ftj):
            for n in e.nodes:
                if groups[n] != ground:
                    diags.append(Diagnostic("ftj-no-dc-path", e.name,
                                            f"{e.name}: node {n} has no DC path for programming"))
    return diags
