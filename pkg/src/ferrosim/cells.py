"""Cell benches: 2T1C read cell, differential synaptic pair and NV-SRAM.

Each bench is a flat netlist plus a :class:`PhaseSchedule` that turns named
operation phases into piecewise-linear source waveforms.  Cell FTJs are the
chosen device variant shrunk to ``CellConfig.area`` with the read current
density rescaled (see :func:`cell_ftj_overrides`).
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .characterization import drive
from .engine import MosfetModel, SolverConfig, mosfet_current, transient
from .ftj import FtjState
from .netlist import DC, PWL, Netlist, VSource, format_value, parse_netlist
from .presets import get_variant
from .trace import Trace

PHASE_NAMES = ("write", "erase", "pre-charge", "read", "store", "restore", "sram-read", "idle")

# Reference read density of device A used to express the cell current scale:
# 1 pA/um^2 = 1e-4 A/cm^2 at the 2 V read point.
REF_DENSITY = 1e-4
REF_V = 2.0


# ---------------------------------------------------------------------------
# schedules

@dataclass(frozen=True)
class Edge:
    """Ramp ``source`` to ``value`` starting ``at`` seconds into a phase, over ``ramp`` seconds."""
    source: str
    at: float
    value: float
    ramp: float = 10e-9


@dataclass(frozen=True)
class Phase:
    name: str
    duration: float
    edges: tuple[Edge, ...] = ()


class ScheduleError(ValueError):
    pass


@dataclass
class PhaseSchedule:
    """Ordered operation phases compiled into one PWL waveform per source."""
    initial: dict[str, float]
    phases: list[Phase] = field(default_factory=list)

    def add(self, name: str, duration: float, *edges: Edge) -> "PhaseSchedule":
        if name not in PHASE_NAMES:
            raise ScheduleError(f"unknown phase {name!r}")
        if not duration > 0:
            raise ScheduleError(f"phase {name!r}: duration must be > 0")
        for e in edges:
            if e.source not in self.initial:
                raise ScheduleError(f"phase {name!r}: unknown source {e.source!r}")
            if e.at < 0 or not e.ramp > 0 or e.at + e.ramp > duration * (1 + 1e-12):
                raise ScheduleError(f"phase {name!r}: edge on {e.source} outside the phase")
        self.phases.append(Phase(name, float(duration), tuple(edges)))
        return self

    @property
    def duration(self) -> float:
        return float(sum(p.duration for p in self.phases))

    def windows(self, name: str) -> list[tuple[float, float]]:
        out, t = [], 0.0
        for p in self.phases:
            if p.name == name:
                out.append((t, t + p.duration))
            t += p.duration
        return out

    def window(self, name: str, occurrence: int = 0) -> tuple[float, float]:
        return self.windows(name)[occurrence]

    def stimuli(self) -> dict[str, PWL]:
        pts = {s: [(0.0, v)] for s, v in self.initial.items()}
        cur = dict(self.initial)
        t0 = 0.0
        for p in self.phases:
            for e in sorted(p.edges, key=lambda e: e.at):
                ta, tb = t0 + e.at, t0 + e.at + e.ramp
                last_t = pts[e.source][-1][0]
                if ta < last_t - 1e-18:
                    raise ScheduleError(f"overlapping edges on {e.source} at t={ta:.3e}")
                if ta > last_t:
                    pts[e.source].append((ta, cur[e.source]))
                pts[e.source].append((tb, e.value))
                cur[e.source] = e.value
            t0 += p.duration
        for s in pts:
            if pts[s][-1][0] < t0:
                pts[s].append((t0, cur[s]))
        return {s: PWL(tuple(v)) for s, v in pts.items()}

    def apply(self, net: Netlist) -> Netlist:
        """Copy of ``net`` with every scheduled source driven by its waveform."""
        names = {e.name for e in net.elements}
        missing = [s for s in self.initial if s not in names]
        if missing:
            raise ScheduleError(f"sources not in netlist: {missing}")
        stims = self.stimuli()
        out = net
        for s, pwl in stims.items():
            el = out.element(s)
            if not isinstance(el, VSource):
                raise ScheduleError(f"{s} is not a voltage source")
            out = out.replace_element(dataclasses.replace(el, stimulus=pwl))
        return out

    def to_dict(self) -> dict:
        return {"initial": dict(self.initial),
                "phase": [{"name": p.name, "duration": p.duration,
                           "edges": [[e.source, e.at, e.value, e.ramp] for e in p.edges]}
                          for p in self.phases]}

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseSchedule":
        s = cls({k: float(v) for k, v in d["initial"].items()})
        for p in d.get("phase", []):
            s.add(p["name"], p["duration"],
                  *(Edge(str(a), float(b), float(c), float(r)) for a, b, c, r in p.get("edges", [])))
        return s


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class CellConfig:
    """Cell-level parameters; defaults are the calibrated bench values."""
    variant: str = "A"
    area: float = 1e-8  # cm^2 (1 um^2)
    current_scale: float = 10.0  # read density at 2 V in units of 1 pA/um^2
    c_n: float = 2e-15
    c_top: float = 0.5e-15
    c_bl: float = 50e-15
    nmos_vt: float = 0.5
    nmos_kp: float = 2e-4
    pmos_vt: float = 0.5
    pmos_kp: float = 1e-4
    n_slope: float = 1.3
    w_access: float = 5.0  # W/L ratios
    w_read: float = 100.0
    w_tail: float = 1.0
    w_pd: float = 2.0
    w_pu: float = 0.5
    w_pass: float = 0.5
    i_b: float = 500e-9
    v_dd: float = 5.0
    v_wl: float = 8.0
    edge: float = 10e-9
    wl_edge: float = 1e-9
    # differential pair
    v_pc: float = 1.0
    v_read: float = 1.55
    precharge: float = 2e-6
    develop_time: float = 100e-6
    gap: float = 10e-6
    v_prog_full: float = 4.5
    t_prog_full: float = 2e-6
    v_prog_part: float = 3.5
    t_prog_part: float = 100e-9
    wl_delay: float = 10e-9
    max_pulses: int = 64
    # NV-SRAM
    v_pl_restore: float = 1.5
    restore_develop: float = 100e-6
    vup_ramp: float = 1e-6
    t_store: float = 10e-6
    mismatch_sigma: float = 5e-3
    resolve_threshold: float = 1e-3

    def __post_init__(self):
        for name in ("area", "current_scale", "c_n", "c_top", "c_bl", "i_b", "v_dd", "edge",
                     "develop_time", "restore_develop", "t_store", "vup_ramp", "precharge"):
            if not getattr(self, name) > 0:
                raise ValueError(f"CellConfig.{name} must be > 0")
        if self.variant.upper() not in ("A", "B", "C"):
            raise ValueError("variant must be A, B or C")

    def nmos(self, ratio: float) -> MosfetModel:
        return MosfetModel("n", self.nmos_vt, self.nmos_kp * ratio, self.n_slope)

    def pmos(self, ratio: float) -> MosfetModel:
        return MosfetModel("p", self.pmos_vt, self.pmos_kp * ratio, self.n_slope)


CELL_SOLVER = SolverConfig(abstol_i=1e-16, abstol_v=1e-7, gmin=1e-18, dt_init=1e-9,
                           dt_max=1e-6, dt_min=1e-16)


@dataclass
class CellMetrics:
    dv_n1n2_at_t: float = 0.0
    t_eval: float = 0.0
    di_pair: float = 0.0
    i_sum_error: float = 0.0
    restore_correct: bool = False
    q_qn_swing: float = 0.0
    metastable: bool = False
    develop_dv: float = 0.0
    bl_diff: float = 0.0
    read_delay: float = math.inf
    ramp_rate: float = 0.0
    destructive: bool = False
    diagnostics: list[str] = field(default_factory=list)
    trace: Trace | None = field(default=None, repr=False, compare=False)


def cell_ftj_overrides(cfg: CellConfig) -> dict[str, float]:
    """Area and rescaled tunneling prefactors of a cell FTJ."""
    tun = get_variant(cfg.variant.upper()).stack.tun
    j_on = cfg.current_scale * REF_DENSITY / math.expm1(REF_V / tun.v_shape_pos)
    return {"area": cfg.area, "j_on_amp": j_on, "j_off_amp": j_on / tun.ter}


def _ftj_card(name: str, a: str, b: str, cfg: CellConfig, p0: float) -> str:
    over = " ".join(f"{k.upper()}={format_value(v)}" for k, v in cell_ftj_overrides(cfg).items())
    return f"{name} {a} {b} VARIANT={cfg.variant.upper()} P0={format_value(p0)} {over}"


def _models(cfg: CellConfig) -> str:
    return (f".model nch nmos (vt={format_value(cfg.nmos_vt)} kp={format_value(cfg.nmos_kp)} "
            f"n={format_value(cfg.n_slope)})\n"
            f".model pch pmos (vt={format_value(cfg.pmos_vt)} kp={format_value(cfg.pmos_kp)} "
            f"n={format_value(cfg.n_slope)})\n")


def _m(name, d, g, s, b, model, ratio, dvt=0.0) -> str:
    extra = f" DVT={format_value(dvt)}" if dvt else ""
    return f"{name} {d} {g} {s} {b} {model} W={format_value(ratio * 1e-6)} L=1e-6{extra}"


def tail_bias(cfg: CellConfig) -> float:
    """Gate voltage that makes the saturated tail device sink ``i_b``."""
    model = cfg.nmos(cfg.w_tail)
    return optimize.brentq(lambda vg: mosfet_current(model, vg, 1.0) - cfg.i_b, -1.0, 5.0, xtol=1e-12)


# ---------------------------------------------------------------------------
# 2T1C

def build_2t1c(cfg: CellConfig = CellConfig(), state: str = "lrs", v_read: float | None = None,
               develop: float | None = None):
    """2T1C read cell and its write/pre-charge/read schedule.

    The FTJ sits between the plate line and the internal node ``n``.  The
    access transistor ties ``n`` to the bit line during the write (a PL pulse
    sets the LRS, a BL pulse the HRS) and the pre-charge; it is switched off
    for the read so ``n`` integrates the FTJ current.  The read transistor
    senses ``n``.  The FTJ starts in the opposite state so the write switches it.
    """
    if state not in ("lrs", "hrs"):
        raise ValueError("state must be 'lrs' or 'hrs'")
    v_read = cfg.v_read if v_read is None else v_read
    develop = cfg.develop_time if develop is None else develop
    p0 = -1.0 if state == "lrs" else 1.0
    text = (
        "2t1c cell\n"
        "VBL bl 0 0\nVPL pl 0 0\nVWL wl 0 0\n"
        f"VDD vdd 0 {format_value(cfg.v_dd)}\n"
        + _ftj_card("F1", "pl", "n", cfg, p0) + "\n"
        + _m("MA", "bl", "wl", "n", "0", "nch", cfg.w_access) + "\n"
        + _m("MR", "vdd", "n", "0", "0", "nch", cfg.w_access) + "\n"
        f"CN n 0 {format_value(cfg.c_n)}\n"
        + _models(cfg) + ".end\n")
    net = parse_netlist(text)
    e = cfg.edge
    line = "vpl" if state == "lrs" else "vbl"
    sch = PhaseSchedule({"vbl": 0.0, "vpl": 0.0, "vwl": 0.0})
    sch.add("write", cfg.t_prog_full + 4 * e, Edge("vwl", 0, cfg.v_wl, e),
            Edge(line, 2 * e, cfg.v_prog_full, e), Edge(line, cfg.t_prog_full + 2 * e, 0.0, e))
    sch.add("pre-charge", cfg.precharge, Edge("vpl", 0, v_read, 100e-9))
    sch.add("read", develop, Edge("vwl", 0, 0.0, e))
    return net, sch


def run_2t1c_read(cfg: CellConfig = CellConfig(), state: str = "lrs", develop: float | None = None,
                  solver: SolverConfig = CELL_SOLVER) -> CellMetrics:
    """Write the 2T1C cell, then report the charge-up of ``n`` during the read.

    ``develop_dv`` is the rise of ``n`` over the read phase and ``ramp_rate``
    its initial slope (V/s), fitted over the first tenth of the phase.
    """
    net, sch = build_2t1c(cfg, state, develop=develop)
    t0, t1 = sch.window("read")
    t0 += cfg.edge
    sched_solver = dataclasses.replace(
        solver, dt_max_schedule=((t0, min(solver.dt_max, (t1 - t0) / 200)),))
    tr = transient(sch.apply(net), sch.duration, sched_solver)
    tr.meta["schedule"] = sch.to_dict()
    win = tr.window(t0, t1)
    m = CellMetrics()
    m.t_eval = t1 - t0
    m.develop_dv = float(win["v(n)"][-1] - win["v(n)"][0])
    head = win.time <= t0 + 0.1 * (t1 - t0)
    m.ramp_rate = float(np.polyfit(win.time[head], win["v(n)"][head], 1)[0])
    m.dv_n1n2_at_t = m.develop_dv
    m.trace = tr
    return m


# ---------------------------------------------------------------------------
# differential pair

def build_diff_pair(cfg: CellConfig = CellConfig(), p1: float = -1.0, p2: float = 1.0) -> Netlist:
    """Two FTJ branches feeding a subthreshold differential pair with a tail device."""
    vb = tail_bias(cfg)
    lines = ["differential ftj pair",
             "VBL bl 0 0", "VPL pl 0 0", "VWL1 wl1 0 0", "VWL2 wl2 0 0", "VPC pc 0 0",
             f"VDD vdd 0 {format_value(cfg.v_dd)}", f"VB vb 0 {format_value(vb)}"]
    for k, p in ((1, p1), (2, p2)):
        lines += [_m(f"M{k}P", "bl", f"wl{k}", f"t{k}", "0", "nch", cfg.w_access),
                  _ftj_card(f"F{k}", f"t{k}", f"n{k}", cfg, p),
                  _m(f"M{k}N", f"n{k}", "pc", "pl", "0", "nch", cfg.w_access),
                  f"CT{k} t{k} 0 {format_value(cfg.c_top)}",
                  f"CN{k} n{k} 0 {format_value(cfg.c_n)}"]
    lines += [_m("M3", "vdd", "n1", "tail", "0", "nch", cfg.w_read),
              _m("M4", "vdd", "n2", "tail", "0", "nch", cfg.w_read),
              _m("MB", "tail", "vb", "0", "0", "nch", cfg.w_tail)]
    return parse_netlist("\n".join(lines) + "\n" + _models(cfg) + ".end\n")


DP_SOURCES = ("vbl", "vpl", "vwl1", "vwl2", "vpc")


def _dp_schedule(cfg: CellConfig, idle: float = 1e-6) -> PhaseSchedule:
    sch = PhaseSchedule({s: 0.0 for s in DP_SOURCES})
    sch.add("idle", idle, Edge("vpc", 0, cfg.v_wl, cfg.edge))
    return sch


def add_program_event(sch: PhaseSchedule, cfg: CellConfig, direction: int, v_p: float,
                      window: float, wl_delay: float | None = None) -> PhaseSchedule:
    """Append one BL/PL programming event.

    ``direction=+1`` (write) opens WL1 while BL leads PL, so C1 sees ``+v_p``,
    then WL2 while BL trails PL, so C2 sees ``-v_p``.  ``direction=-1``
    (erase) swaps the word lines.  Each FTJ is biased from its word-line
    edge to the following PL edge, i.e. for ``window - wl_delay``.
    """
    e, we = cfg.edge, cfg.wl_edge
    d = cfg.wl_delay if wl_delay is None else wl_delay
    if not e <= d < window:
        raise ScheduleError("wl_delay must lie in [edge, window)")
    first, second = ("vwl1", "vwl2") if direction > 0 else ("vwl2", "vwl1")
    name = "write" if direction > 0 else "erase"
    settle = 5 * e
    dur = window + e + settle
    for wl, level in ((first, v_p), (second, 0.0)):
        # BL moves, the word line opens after the delay, PL follows after the window
        sch.add(name, dur,
                Edge("vbl", 0, level, e), Edge(wl, d, cfg.v_wl, we),
                Edge("vpl", window, level, e), Edge(wl, window + e + settle / 2, 0.0, we))
    return sch


def event_waveform(cfg: CellConfig, v_p: float, window: float, wl_delay: float | None = None):
    """Ideal FTJ bias ``(t, v)`` of one event, as seen by the selected FTJ."""
    e, we = cfg.edge, cfg.wl_edge
    d = cfg.wl_delay if wl_delay is None else wl_delay
    t = np.array([0.0, d, d + we, window, window + e, window + 2 * e])
    v = np.array([0.0, 0.0, v_p, v_p, 0.0, 0.0])
    return t, v


@dataclass
class ProgramResult:
    p1: float
    p2: float
    weight: float
    target: float
    n_pulses: int
    reached: bool
    trace: Trace | None = field(default=None, repr=False)
    states: tuple = field(default=(), repr=False)

    @property
    def achieved_weight(self) -> float:
        return self.weight


def _ideal_pulse_p(cfg: CellConfig, n_pulses: int, v_p: float, window: float,
                   wl_delay: float | None = None) -> np.ndarray:
    """Standalone-model polarization after each of ``n_pulses`` events from p = -1."""
    stack = get_variant(cfg.variant.upper()).stack
    t_knots, v_knots = event_waveform(cfg, v_p, window, wl_delay)
    # resample the ramps so the field follows the edges
    t = np.unique(np.concatenate([t_knots, np.linspace(t_knots[1], t_knots[2], 9),
                                  np.linspace(t_knots[3], t_knots[4], 9)]))
    v = np.interp(t, t_knots, v_knots)
    state = FtjState.from_p(-1.0, stack.nls)
    out = [state.p]
    for _ in range(n_pulses):
        _, _, state = drive(stack, t, v, state)
        out.append(state.p)
    return np.array(out)


@lru_cache(maxsize=16)
def weight_table(cfg: CellConfig) -> np.ndarray:
    """Polarization of the set FTJ after k partial events (k = 0..max_pulses), monotone."""
    table = _ideal_pulse_p(cfg, cfg.max_pulses, cfg.v_prog_part, cfg.t_prog_part)
    return np.maximum.accumulate(table)


def pulses_for_weight(cfg: CellConfig, w: float) -> tuple[int, float]:
    """Pulse count whose tabulated weight is closest to ``w``, and that weight."""
    table = weight_table(cfg)
    weights = 0.5 * (table + 1.0)
    k = int(np.argmin(np.abs(weights - w)))
    return k, float(weights[k])


def run_diff_pair_pulses(cfg: CellConfig, n_pulses: int, direction: int = 1,
                         v_p: float | None = None, window: float | None = None,
                         wl_delay: float | None = None, p_init: tuple[float, float] = (-1.0, 1.0),
                         states=None, solver: SolverConfig = CELL_SOLVER):
    """Apply ``n_pulses`` programming events and return ``(trace, (state1, state2))``."""
    v_p = cfg.v_prog_part if v_p is None else v_p
    window = cfg.t_prog_part if window is None else window
    net = build_diff_pair(cfg, *p_init)
    sch = _dp_schedule(cfg)
    for _ in range(n_pulses):
        add_program_event(sch, cfg, direction, v_p, window, wl_delay)
    sch.add("idle", 1e-6)
    init = None
    if states is not None:
        init = {"f1": states[0], "f2": states[1]}
    tr, solver_obj = transient(sch.apply(net), sch.duration, solver, initial_states=init,
                               return_solver=True)
    tr.meta["schedule"] = sch.to_dict()
    return tr, tuple(solver_obj.states)


def run_diff_pair_program(cfg: CellConfig, w: float, solver: SolverConfig = CELL_SOLVER,
                          tol: float = 0.05) -> ProgramResult:
    """Program the pair to weight ``w`` (p1 = 2w - 1, p2 = 1 - 2w).

    A full erase comes first.  ``w = 1`` then gets one full write event;
    intermediate weights get the partial-pulse count from :func:`weight_table`.
    ``reached`` is False when the achieved weight misses ``w`` by more than
    ``tol``.
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    net = build_diff_pair(cfg, 1.0, -1.0)
    sch = _dp_schedule(cfg)
    add_program_event(sch, cfg, -1, cfg.v_prog_full, cfg.t_prog_full)
    n = 0
    if w >= 1.0 - 1e-12:
        add_program_event(sch, cfg, +1, cfg.v_prog_full, cfg.t_prog_full)
        n = 1
    elif w > 0.0:
        n, _ = pulses_for_weight(cfg, w)
        for _ in range(n):
            add_program_event(sch, cfg, +1, cfg.v_prog_part, cfg.t_prog_part)
    sch.add("idle", 1e-6)
    tr, s = transient(sch.apply(net), sch.duration, solver, return_solver=True)
    tr.meta["schedule"] = sch.to_dict()
    p1, p2 = s.states[0].p, s.states[1].p
    achieved = 0.25 * (p1 - p2) + 0.5
    return ProgramResult(p1, p2, achieved, w, n, abs(achieved - w) <= tol, tr, tuple(s.states))


def run_diff_pair_read(cfg: CellConfig = CellConfig(), develop_time: float | None = None,
                       p: tuple[float, float] = (1.0, -1.0), states=None,
                       solver: SolverConfig = CELL_SOLVER) -> CellMetrics:
    """Pre-charge, float ``n1``/``n2`` and let the FTJ currents develop a split.

    The schedule is: idle gap, pre-charge (PC on, PL = ``v_pc``, BL =
    ``v_pc + v_read`` through both word lines), then PC off for
    ``develop_time``.  Metrics are taken at the end of the develop phase;
    ``i_sum_error`` is the worst relative deviation of ``I1 + I2`` from the
    target tail current over the develop phase.
    """
    develop = cfg.develop_time if develop_time is None else develop_time
    net = build_diff_pair(cfg, *p)
    e = cfg.edge
    sch = PhaseSchedule({s: 0.0 for s in DP_SOURCES})
    sch.add("idle", cfg.gap, Edge("vpc", 0, cfg.v_wl, e))
    sch.add("pre-charge", cfg.precharge,
            Edge("vpl", 0, cfg.v_pc, 100e-9), Edge("vbl", 0, cfg.v_pc, 100e-9),
            Edge("vwl1", 0, cfg.v_wl, e), Edge("vwl2", 0, cfg.v_wl, e),
            Edge("vbl", 200e-9, cfg.v_pc + cfg.v_read, 100e-9))
    sch.add("read", develop + e, Edge("vpc", 0, 0.0, e))
    sched_solver = dataclasses.replace(
        solver, dt_max_schedule=((0.0, solver.dt_max), (cfg.gap + cfg.precharge,
                                                          min(solver.dt_max, develop / 100))))
    init = {"f1": states[0], "f2": states[1]} if states is not None else None
    tr = transient(sch.apply(net), sch.duration, sched_solver, initial_states=init)
    tr.meta["schedule"] = sch.to_dict()
    t0 = cfg.gap + cfg.precharge + e
    t1 = sch.duration
    win = tr.window(t0, t1)
    i_sum = win["i(m3)"] + win["i(m4)"]
    m = CellMetrics()
    m.t_eval = develop
    m.dv_n1n2_at_t = float(tr["v(n1)"][-1] - tr["v(n2)"][-1])
    m.di_pair = float(tr["i(m3)"][-1] - tr["i(m4)"][-1])
    m.i_sum_error = float(np.max(np.abs(i_sum - cfg.i_b)) / cfg.i_b)
    m.develop_dv = m.dv_n1n2_at_t - float(win["v(n1)"][0] - win["v(n2)"][0])
    dps = [abs(tr[f"p(f{k})"][-1] - tr[f"p(f{k})"][0]) for k in (1, 2)]
    if max(dps) > 0.02:
        m.diagnostics.append(f"read disturb: |dp| up to {max(dps):.3f}")
    m.trace = tr
    return m


def pair_current_oracle(i_b: float, dv: float, n_slope: float = 1.3, u_t: float = 0.02585) -> float:
    """Weak-inversion differential pair: ``i_b * tanh(dv / (2 n u_t))``."""
    return i_b * math.tanh(dv / (2.0 * n_slope * u_t))


# ---------------------------------------------------------------------------
# NV-SRAM

NV_SOURCES = ("vup", "vpl", "vwl", "vpre", "vbld")
NV_MOSFETS = ("mp1", "mn1", "mp2", "mn2", "ma1", "ma2")


def build_nvsram(cfg: CellConfig = CellConfig(), p1: float = 1.0, p2: float = -1.0,
                 q_ic: float | None = None, bl_ic: float | None = None,
                 dvt: dict[str, float] | None = None) -> Netlist:
    """6T latch on supply ``vup`` with one FTJ from each storage node to the shared plate line."""
    dvt = dvt or {}
    ic_q = ic_qn = ""
    if q_ic is not None:
        ic_q = f" IC={format_value(q_ic)}"
        ic_qn = f" IC={format_value(cfg.v_dd - q_ic)}"
    ic_bl = "" if bl_ic is None else f" IC={format_value(bl_ic)}"
    lines = ["nv-sram cell",
             "VUP vup 0 0", "VPL pl 0 0", "VWL wl 0 0", "VPRE pre 0 0", "VBLD bld 0 0",
             _m("MP1", "q", "qn", "vup", "vup", "pch", cfg.w_pu, dvt.get("mp1", 0.0)),
             _m("MN1", "q", "qn", "0", "0", "nch", cfg.w_pd, dvt.get("mn1", 0.0)),
             _m("MP2", "qn", "q", "vup", "vup", "pch", cfg.w_pu, dvt.get("mp2", 0.0)),
             _m("MN2", "qn", "q", "0", "0", "nch", cfg.w_pd, dvt.get("mn2", 0.0)),
             _m("MA1", "bl", "wl", "q", "0", "nch", cfg.w_pass, dvt.get("ma1", 0.0)),
             _m("MA2", "bln", "wl", "qn", "0", "nch", cfg.w_pass, dvt.get("ma2", 0.0)),
             _m("MPR1", "bl", "pre", "bld", "0", "nch", cfg.w_access),
             _m("MPR2", "bln", "pre", "bld", "0", "nch", cfg.w_access),
             _ftj_card("F1", "q", "pl", cfg, p1),
             _ftj_card("F2", "qn", "pl", cfg, p2),
             f"CQ q 0 {format_value(cfg.c_n)}{ic_q}",
             f"CQN qn 0 {format_value(cfg.c_n)}{ic_qn}",
             f"CBL bl 0 {format_value(cfg.c_bl)}{ic_bl}",
             f"CBLN bln 0 {format_value(cfg.c_bl)}{ic_bl}"]
    return parse_netlist("\n".join(lines) + "\n" + _models(cfg) + ".end\n")


def nvsram_restore_schedule(cfg: CellConfig, develop: float | None = None) -> PhaseSchedule:
    develop = cfg.restore_develop if develop is None else develop
    e = cfg.edge
    sch = PhaseSchedule({s: 0.0 for s in NV_SOURCES})
    # storage nodes held at 0 through the bit lines while the plate line biases the FTJs
    sch.add("restore", 3e-6, Edge("vpre", 0, cfg.v_wl, e), Edge("vwl", 0, cfg.v_wl, e),
            Edge("vpl", 20 * e, cfg.v_pl_restore, 1e-6))
    sch.add("restore", develop + e, Edge("vwl", 0, 0.0, e))
    sch.add("restore", cfg.vup_ramp + 4e-6, Edge("vup", 0, cfg.v_dd, cfg.vup_ramp))
    return sch


def _latch_metrics(cfg: CellConfig, tr: Trace, expected: int | None, t_dev: tuple[float, float]):
    m = CellMetrics()
    q, qn = float(tr["v(q)"][-1]), float(tr["v(qn)"][-1])
    m.q_qn_swing = abs(q - qn)
    dv0 = tr.at("v(q)", t_dev[1]) - tr.at("v(qn)", t_dev[1])
    m.develop_dv = float(dv0)
    m.dv_n1n2_at_t = float(dv0)
    m.t_eval = t_dev[1] - t_dev[0]
    m.metastable = m.q_qn_swing < 0.9 * cfg.v_dd or abs(dv0) < cfg.resolve_threshold
    latched = 1 if q > qn else 0
    m.restore_correct = (not m.metastable) and (expected is None or latched == expected)
    if m.metastable:
        m.diagnostics.append("metastable restore: develop split or final swing too small")
    m.trace = tr
    return m


def run_nvsram_restore(cfg: CellConfig = CellConfig(), stored: int | None = 1, states=None,
                       p: tuple[float, float] | None = None, dvt: dict[str, float] | None = None,
                       develop: float | None = None, solver: SolverConfig = CELL_SOLVER,
                       keep_trace: bool = True) -> CellMetrics:
    """Power-up restore: develop a split with ``V_up = 0``, then ramp ``V_up`` to ``v_dd``.

    The FTJ pattern comes from ``states`` or ``p``; by default it encodes
    ``stored`` (logic 1 is ``(+1, -1)``).  ``stored=None`` with explicit
    ``p``/``states`` skips the polarity check.
    """
    if p is None and states is None:
        if stored not in (0, 1):
            raise ValueError("stored must be 0 or 1")
        p = (1.0, -1.0) if stored == 1 else (-1.0, 1.0)
    if states is not None:
        p = (states[0].p, states[1].p)
    net = build_nvsram(cfg, p[0], p[1], dvt=dvt)
    sch = nvsram_restore_schedule(cfg, develop)
    dev = sch.phases[1].duration - cfg.edge
    t_dev = (sch.phases[0].duration + cfg.edge, sch.phases[0].duration + sch.phases[1].duration)
    # large implicit steps would damp the unstable latch mode, so the
    # amplification window is resolved finely
    t_amp = t_dev[1] + cfg.vup_ramp
    sched_solver = dataclasses.replace(
        solver, dt_max_schedule=((t_dev[0], min(solver.dt_max, dev / 50)), (t_dev[1], 2e-9),
                                 (t_amp, 50e-9)))
    init = {"f1": states[0], "f2": states[1]} if states is not None else None
    tr = transient(sch.apply(net), sch.duration, sched_solver, initial_states=init)
    tr.meta["schedule"] = sch.to_dict()
    m = _latch_metrics(cfg, tr, stored, t_dev)
    if not keep_trace:
        m.trace = None
    return m


def _mc_trial(args):
    cfg, stored, trial, seed, sigma = args
    rng = np.random.default_rng([seed, trial])
    dvt = dict(zip(NV_MOSFETS, rng.normal(0.0, sigma, len(NV_MOSFETS)).tolist()))
    return run_nvsram_restore(cfg, stored, dvt=dvt, keep_trace=False)


@dataclass
class MonteCarloResult:
    stored: int
    n_trials: int
    n_correct: int
    develop_dv: np.ndarray
    swings: np.ndarray


def default_workers() -> int:
    env = os.environ.get("FERROSIM_THREADS", "0")
    try:
        n = int(env)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def run_nvsram_monte_carlo(cfg: CellConfig = CellConfig(), stored: int = 1, n_trials: int = 100,
                           sigma: float | None = None, seed: int = 0,
                           workers: int | None = None) -> MonteCarloResult:
    """Restores with per-trial threshold mismatch drawn from ``N(0, sigma)``.

    Trial ``k`` uses ``default_rng([seed, k])`` so results do not depend on
    the worker count.
    """
    sigma = cfg.mismatch_sigma if sigma is None else sigma
    jobs = [(cfg, stored, k, seed, sigma) for k in range(n_trials)]
    workers = default_workers() if workers is None else max(1, workers)
    if workers > 1 and n_trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_mc_trial, jobs))
    else:
        out = [_mc_trial(j) for j in jobs]
    return MonteCarloResult(stored, n_trials, sum(m.restore_correct for m in out),
                            np.array([m.develop_dv for m in out]),
                            np.array([m.q_qn_swing for m in out]))


def run_nvsram_store(cfg: CellConfig = CellConfig(), logic_state: int = 1,
                     p_init: tuple[float, float] | None = None,
                     solver: SolverConfig = CELL_SOLVER):
    """Power-down store of a latched value into the FTJ pair.

    With the latch powered, PL = 0 sets the FTJ on the high node, then
    PL = ``v_dd`` resets the FTJ on the low node.  Returns
    ``(p1, p2, states, diagnostics, trace)``; the initial FTJ pattern is the
    opposite of the stored value unless ``p_init`` is given.
    """
    if logic_state not in (0, 1):
        raise ValueError("logic_state must be 0 or 1")
    if p_init is None:
        p_init = (-1.0, 1.0) if logic_state == 1 else (1.0, -1.0)
    q0 = cfg.v_dd if logic_state == 1 else 0.0
    net = build_nvsram(cfg, *p_init, q_ic=q0, bl_ic=0.0)
    e = cfg.edge
    sch = PhaseSchedule({"vup": cfg.v_dd, "vpl": 0.0, "vwl": 0.0, "vpre": 0.0, "vbld": 0.0})
    sch.add("store", cfg.t_store)
    sch.add("store", cfg.t_store + 10 * e, Edge("vpl", 0, cfg.v_dd, 10 * e))
    sch.add("store", 1e-6, Edge("vpl", 0, 0.0, 10 * e))
    tr, s = transient(sch.apply(net), sch.duration, solver, return_solver=True)
    tr.meta["schedule"] = sch.to_dict()
    p1, p2 = s.states[0].p, s.states[1].p
    diags = []
    if min(abs(p1), abs(p2)) < 0.5:
        diags.append(f"insufficient programming: p1={p1:.3f}, p2={p2:.3f}")
    return p1, p2, tuple(s.states), diags, tr


def run_sram_read(cfg: CellConfig = CellConfig(), logic_state: int = 1,
                  solver: SolverConfig = CELL_SOLVER, split: float = 0.1) -> CellMetrics:
    """Bit-line read of a powered latch; reports the split and checks the state survives."""
    if logic_state not in (0, 1):
        raise ValueError("logic_state must be 0 or 1")
    q0 = cfg.v_dd if logic_state == 1 else 0.0
    p = (1.0, -1.0) if logic_state == 1 else (-1.0, 1.0)
    net = build_nvsram(cfg, *p, q_ic=q0, bl_ic=cfg.v_dd)
    e = 1e-9
    sch = PhaseSchedule({"vup": cfg.v_dd, "vpl": 0.0, "vwl": 0.0, "vpre": cfg.v_wl, "vbld": cfg.v_dd})
    sch.add("sram-read", 5e-9, Edge("vpre", 2e-9, 0.0, e))
    sch.add("sram-read", 40e-9, Edge("vwl", 0, cfg.v_dd, e), Edge("vwl", 30e-9, 0.0, e))
    sch.add("idle", 20e-9)
    fast = dataclasses.replace(solver, dt_max=1e-9, dt_init=1e-11)
    tr = transient(sch.apply(net), sch.duration, fast)
    tr.meta["schedule"] = sch.to_dict()
    m = CellMetrics()
    t_wl = sch.window("sram-read", 1)[0]
    diff = tr["v(bl)"] - tr["v(bln)"]
    m.bl_diff = float(diff[np.searchsorted(tr.time, t_wl + 30e-9)])
    hit = np.nonzero((tr.time >= t_wl) & (np.abs(diff) >= split))[0]
    m.read_delay = float(tr.time[hit[0]] - t_wl) if hit.size else math.inf
    q, qn = float(tr["v(q)"][-1]), float(tr["v(qn)"][-1])
    m.q_qn_swing = abs(q - qn)
    m.destructive = (1 if q > qn else 0) != logic_state or m.q_qn_swing < 0.9 * cfg.v_dd
    if m.destructive:
        m.diagnostics.append("destructive read: latch state changed")
    m.restore_correct = not m.destructive
    m.trace = tr
    return m
