"""Modified nodal analysis with Newton-Raphson and implicit integration.

Unknowns are the non-ground node voltages followed by one branch current
per voltage source (current flowing from the + terminal through the source
to the - terminal, the usual SPICE sign).  The residual of a node row is the
sum of currents leaving the node.  Ground is carried as an extra index so
every stamp is branch free; its row and column are dropped before solving.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import expit

from .ftj import (FtjStack, FtjState, apply_switching, partition_fields, replace_flat,
                  switching_candidates, tunneling_current_density)
from .netlist import (Capacitor, Ftj, Mosfet, Netlist, Resistor, VSource, eval_stimulus,
                      stimulus_breakpoints)
from .presets import DeviceVariant, get_variant
from .trace import Trace

U_T = 0.02585
INTEGRATORS = ("backward-euler", "trapezoidal")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, time: float | None = None, worst: str | None = None):
        where = "" if time is None else f" at t={time:.6e} s"
        who = "" if worst is None else f" (worst: {worst})"
        super().__init__(f"{message}{where}{who}")
        self.time = time
        self.worst = worst


@dataclass(frozen=True)
class SolverConfig:
    reltol: float = 1e-3
    abstol_v: float = 1e-6
    abstol_i: float = 1e-12
    max_newton_iters: int = 50
    dt_init: float = 1e-9
    dt_min: float = 1e-15
    dt_max: float = 1e-6
    dp_max_per_step: float | None = None  # C/cm^2; None means pr/20 per device
    integration: str = "backward-euler"
    gmin: float = 1e-12
    dv_max_per_step: float = 0.25  # node-voltage change limiter (V)
    v_limit: float = 1.0  # Newton damping: largest node update per iteration (V)
    dt_max_schedule: tuple[tuple[float, float], ...] = ()  # (t_from, dt_max) overrides

    def __post_init__(self):
        for name in ("reltol", "abstol_v", "abstol_i", "dt_init", "dt_min", "dt_max", "gmin",
                     "dv_max_per_step", "v_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need dt_min <= dt_init <= dt_max")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if self.integration not in INTEGRATORS:
            raise ValueError(f"integration must be one of {INTEGRATORS}")
        if self.dp_max_per_step is not None and not self.dp_max_per_step > 0:
            raise ValueError("dp_max_per_step must be > 0")
        sched = tuple(sorted((float(a), float(b)) for a, b in self.dt_max_schedule))
        if any(b <= 0 for _, b in sched):
            raise ValueError("scheduled dt_max must be > 0")
        object.__setattr__(self, "dt_max_schedule", sched)

    def dt_max_at(self, t: float) -> float:
        out = self.dt_max
        for t0, dtm in self.dt_max_schedule:
            if t >= t0:
                out = dtm
        return out


# ---------------------------------------------------------------------------
# MOSFET

@dataclass(frozen=True)
class MosfetModel:
    polarity: str = "n"
    v_t: float = 0.5  # magnitude for both polarities
    beta: float = 1e-4
    n_slope: float = 1.3
    u_t: float = U_T

    def __post_init__(self):
        if self.polarity not in ("n", "p"):
            raise ValueError("polarity must be 'n' or 'p'")
        if not self.beta > 0 or not self.u_t > 0 or self.n_slope < 1:
            raise ValueError("need beta > 0, u_t > 0, n_slope >= 1")

    @property
    def i_spec(self) -> float:
        return 2.0 * self.n_slope * self.beta * self.u_t ** 2


def _softplus(x):
    return np.logaddexp(0.0, x)


def _ekv(vt, beta, n, ut, vg, vd, vs, vb):
    """Bulk-referenced EKV drain current of an n-channel device and its terminal derivatives."""
    ispec = 2.0 * n * beta * ut ** 2
    k = 1.0 / (2.0 * n * ut)
    xf = (vg - vb - vt - n * (vs - vb)) * k
    xr = (vg - vb - vt - n * (vd - vb)) * k
    lf, lr = _softplus(xf), _softplus(xr)
    i = ispec * (lf * lf - lr * lr)
    df = 2.0 * lf * expit(xf)
    dr = 2.0 * lr * expit(xr)
    gd = ispec * dr * n * k
    gs = -ispec * df * n * k
    gg = ispec * (df - dr) * k
    gb = -(gd + gs + gg)
    return i, gd, gg, gs, gb


def mosfet_current(model: MosfetModel, v_gs, v_ds, v_bs=0.0):
    """Drain current (A, into the drain) of the continuous EKV interpolation.

    With the bulk tied to the source this is
    ``I_spec * [F((v_gs - v_t)/(2 n u_t)) - F((v_gs - v_t - n v_ds)/(2 n u_t))]``
    with ``F(x) = ln^2(1 + e^x)``.  P-channel devices follow by sign symmetry.
    """
    sgn = 1.0 if model.polarity == "n" else -1.0
    vg, vd, vb = sgn * np.asarray(v_gs, float), sgn * np.asarray(v_ds, float), sgn * np.asarray(v_bs, float)
    i = _ekv(model.v_t, model.beta, model.n_slope, model.u_t, vg, vd, 0.0, vb)[0]
    out = sgn * i
    return float(out) if np.ndim(out) == 0 else out


def mosfet_model_for(m: Mosfet, net: Netlist) -> MosfetModel:
    card = net.models[m.model]
    kp = card.get("kp", 2e-4)
    return MosfetModel(polarity=m.polarity, v_t=card.get("vt", 0.5) + m.dvt, beta=kp * m.w / m.l,
                       n_slope=card.get("n", 1.3), u_t=card.get("ut", U_T))


# ---------------------------------------------------------------------------
# FTJ companion

def _ftj_current(stack: FtjStack, state: FtjState, v: float, v_prev: float, dt: float,
                 flips: np.ndarray, sign: float) -> float:
    if flips.any():
        dp = 2.0 * sign * np.count_nonzero(flips) / state.s.size
    else:
        dp = 0.0
    p_new = min(1.0, max(-1.0, state.p + dp))
    j = stack.c0 * (v - v_prev) / dt + stack.pr * dp / dt + tunneling_current_density(stack, v, p_new)
    return stack.area * j


def ftj_companion(stack: FtjStack, state: FtjState, v_guess: float, dt: float,
                  v_prev: float = 0.0, flips: np.ndarray | None = None, sign: float | None = None):
    """Linearized ``(G, I_eq)`` of the FTJ step current around ``v_guess``.

    The flip set is evaluated once at ``v_guess`` (or taken from ``flips``)
    and held fixed while differencing, so ``G`` is the slope of a continuous
    branch.  The entering state is not modified.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if flips is None:
        e_fe, _ = partition_fields(stack, v_guess, stack.p_coupling * stack.pr * state.p)
        _, flips, sign = switching_candidates(state, e_fe, dt, stack)
    elif sign is None:
        e_fe, _ = partition_fields(stack, v_guess, stack.p_coupling * stack.pr * state.p)
        sign = 1.0 if e_fe >= 0 else -1.0
    h = max(1e-6, 1e-6 * abs(v_guess))
    i0 = _ftj_current(stack, state, v_guess, v_prev, dt, flips, sign)
    ip = _ftj_current(stack, state, v_guess + h, v_prev, dt, flips, sign)
    im = _ftj_current(stack, state, v_guess - h, v_prev, dt, flips, sign)
    g = (ip - im) / (2.0 * h)
    return g, i0 - g * v_guess


# ---------------------------------------------------------------------------
# compiled circuit

def _stack_for(e: Ftj, variants: Mapping[str, DeviceVariant] | None) -> FtjStack:
    key = e.variant.upper()
    if variants is not None and key in variants:
        base = variants[key].stack
    else:
        base = get_variant(key).stack
    return replace_flat(base, dict(e.overrides)) if e.overrides else base


@dataclass
class OperatingPoint:
    voltages: dict[str, float]
    currents: dict[str, float]
    diagnostics: list[str] = field(default_factory=list)
    gmin_stages: int = 0
    residual: float = 0.0


class Circuit:
    """Index tables and stamping for one netlist."""

    def __init__(self, net: Netlist, config: SolverConfig,
                 variants: Mapping[str, DeviceVariant] | None = None):
        self.net = net
        self.config = config
        nodes = [n for n in net.nodes() if n != "0"]
        self.node_names = nodes
        self.n_nodes = len(nodes)
        idx = {n: i for i, n in enumerate(nodes)}
        self.vsrc = [e for e in net.elements if isinstance(e, VSource)]
        self.res = [e for e in net.elements if isinstance(e, Resistor)]
        self.caps = [e for e in net.elements if isinstance(e, Capacitor)]
        self.mos = [e for e in net.elements if isinstance(e, Mosfet)]
        self.ftjs = [e for e in net.elements if isinstance(e, Ftj)]
        self.n_unknowns = self.n_nodes + len(self.vsrc)
        self.ground = self.n_unknowns  # extra index, dropped on solve
        idx["0"] = self.ground
        self.idx = idx
        N1 = self.n_unknowns + 1

        g = np.zeros((N1, N1))
        for r in self.res:
            a, b, y = idx[r.a], idx[r.b], 1.0 / r.ohms
            g[a, a] += y; g[b, b] += y; g[a, b] -= y; g[b, a] -= y
        self.g_res = g
        # voltage-source incidence
        self.src_rows = np.arange(self.n_nodes, self.n_unknowns)
        self.src_p = np.array([idx[s.n_plus] for s in self.vsrc], dtype=int)
        self.src_m = np.array([idx[s.n_minus] for s in self.vsrc], dtype=int)
        b = np.zeros((N1, N1))
        for k, row in enumerate(self.src_rows):
            b[self.src_p[k], row] += 1.0; b[self.src_m[k], row] -= 1.0
            b[row, self.src_p[k]] += 1.0; b[row, self.src_m[k]] -= 1.0
        self.g_src = b
        # capacitors
        self.cap_a = np.array([idx[c.a] for c in self.caps], dtype=int)
        self.cap_b = np.array([idx[c.b] for c in self.caps], dtype=int)
        self.cap_c = np.array([c.farads for c in self.caps], dtype=float)
        inc = np.zeros((N1, len(self.caps)))
        inc[self.cap_a, np.arange(len(self.caps))] += 1.0
        inc[self.cap_b, np.arange(len(self.caps))] -= 1.0
        self.cap_inc = inc
        self.g_cap_unit = inc @ np.diag(self.cap_c) @ inc.T
        # MOSFETs
        self.mos_models = [mosfet_model_for(m, net) for m in self.mos]
        self.m_d = np.array([idx[m.d] for m in self.mos], dtype=int)
        self.m_g = np.array([idx[m.g] for m in self.mos], dtype=int)
        self.m_s = np.array([idx[m.s] for m in self.mos], dtype=int)
        self.m_b = np.array([idx[m.b] for m in self.mos], dtype=int)
        self.m_sign = np.array([1.0 if mm.polarity == "n" else -1.0 for mm in self.mos_models])
        self.m_vt = np.array([mm.v_t for mm in self.mos_models])
        self.m_beta = np.array([mm.beta for mm in self.mos_models])
        self.m_n = np.array([mm.n_slope for mm in self.mos_models])
        self.m_ut = np.array([mm.u_t for mm in self.mos_models])
        # FTJs
        self.ftj_stacks = [_stack_for(f, variants) for f in self.ftjs]
        self.f_a = [idx[f.a] for f in self.ftjs]
        self.f_b = [idx[f.b] for f in self.ftjs]
        self.dp_limits = [config.dp_max_per_step if config.dp_max_per_step is not None
                          else st.pr / 20.0 for st in self.ftj_stacks]
        diag = np.zeros(N1)
        diag[:self.n_nodes] = config.gmin
        self.g_min = np.diag(diag)
        # nodes pinned by a grounded source are exempt from the dv limiter
        pinned = {s.n_plus for s in self.vsrc if s.n_minus == "0"} | {
            s.n_minus for s in self.vsrc if s.n_plus == "0"}
        self.free_nodes = np.array([i for i, n in enumerate(nodes) if n not in pinned], dtype=int)

    # -- helpers ------------------------------------------------------------
    def source_values(self, t: float) -> np.ndarray:
        return np.array([eval_stimulus(s.stimulus, t) for s in self.vsrc], dtype=float)

    def breakpoints(self, tstop: float) -> list[float]:
        pts: set[float] = set()
        for s in self.vsrc:
            pts.update(stimulus_breakpoints(s.stimulus, tstop))
        pts.add(tstop)
        return sorted(pts)

    def mos_eval(self, xg: np.ndarray):
        sg = self.m_sign
        vg, vd, vs, vb = (sg * xg[self.m_g], sg * xg[self.m_d], sg * xg[self.m_s], sg * xg[self.m_b])
        i, gd, gg, gs, gb = _ekv(self.m_vt, self.m_beta, self.m_n, self.m_ut, vg, vd, vs, vb)
        # derivatives are invariant under the double sign flip
        return sg * i, gd, gg, gs, gb

    def stamp_static(self, xg: np.ndarray, f: np.ndarray, J: np.ndarray, src: np.ndarray,
                     gmin_extra: float = 0.0):
        G = self.g_res + self.g_src + self.g_min
        if gmin_extra:
            G = G.copy()
            G[np.arange(self.n_nodes), np.arange(self.n_nodes)] += gmin_extra
        J += G
        f += G @ xg
        f[self.src_rows] -= src
        if self.mos:
            i, gd, gg, gs, gb = self.mos_eval(xg)
            np.add.at(f, self.m_d, i)
            np.add.at(f, self.m_s, -i)
            for col, gt in ((self.m_d, gd), (self.m_g, gg), (self.m_s, gs), (self.m_b, gb)):
                np.add.at(J, (self.m_d, col), gt)
                np.add.at(J, (self.m_s, col), -gt)
            return i
        return np.zeros(0)

    def worst_node(self, f: np.ndarray) -> str:
        names = self.node_names + [f"i({s.name})" for s in self.vsrc]
        k = int(np.argmax(np.abs(f[:self.n_unknowns])))
        return names[k]


def _solve(J: np.ndarray, f: np.ndarray, n: int) -> np.ndarray:
    return np.linalg.solve(J[:n, :n], -f[:n])


def _converged(x: np.ndarray, dx: np.ndarray, ckt: Circuit, cfg: SolverConfig) -> bool:
    nn = ckt.n_nodes
    ok_v = np.all(np.abs(dx[:nn]) <= cfg.reltol * np.abs(x[:nn]) + cfg.abstol_v)
    ok_i = np.all(np.abs(dx[nn:]) <= cfg.reltol * np.abs(x[nn:]) + cfg.abstol_i)
    return bool(ok_v and ok_i)


def _damp(dx: np.ndarray, nn: int, limit: float) -> np.ndarray:
    big = np.max(np.abs(dx[:nn])) if nn else 0.0
    if big > limit:
        dx = dx * (limit / big)
    return dx


# ---------------------------------------------------------------------------
# DC operating point

def _dc_newton(ckt: Circuit, x0: np.ndarray, src: np.ndarray, states, ic_branches, gmin_extra,
               cfg: SolverConfig):
    # layout: [circuit unknowns (n), ground, ic branch currents (m)]
    n = ckt.n_unknowns
    m = len(ic_branches)
    keep = np.r_[np.arange(n), np.arange(n + 1, n + 1 + m)]
    x = np.zeros(n + 1 + m)
    x[keep] = x0 if x0.size == n + m else np.r_[x0, np.zeros(m)]
    small = False
    res = math.inf
    for it in range(cfg.max_newton_iters):
        x[n] = 0.0
        f = np.zeros(n + 1 + m)
        J = np.zeros((n + 1 + m, n + 1 + m))
        ckt.stamp_static(x[:n + 1], f[:n + 1], J[:n + 1, :n + 1], src, gmin_extra)
        for k, st in enumerate(ckt.ftj_stacks):
            a, b = ckt.f_a[k], ckt.f_b[k]
            v = x[a] - x[b]
            p = states[k].p
            i = st.area * tunneling_current_density(st, v, p)
            h = max(1e-6, 1e-6 * abs(v))
            gk = st.area * (tunneling_current_density(st, v + h, p)
                            - tunneling_current_density(st, v - h, p)) / (2 * h)
            f[a] += i; f[b] -= i
            J[a, a] += gk; J[b, b] += gk; J[a, b] -= gk; J[b, a] -= gk
        for j, (a, b, vic) in enumerate(ic_branches):
            row = n + 1 + j
            J[a, row] += 1.0; J[b, row] -= 1.0
            J[row, a] += 1.0; J[row, b] -= 1.0
            f[a] += x[row]; f[b] -= x[row]
            f[row] = x[a] - x[b] - vic
        nn = ckt.n_nodes
        res = float(np.max(np.abs(f[:nn]))) if nn else 0.0
        if it > 0 and small and res < cfg.abstol_i:
            return x[keep], res, True
        try:
            dx = np.linalg.solve(J[np.ix_(keep, keep)], -f[keep])
        except np.linalg.LinAlgError:
            return x[keep], res, False
        if not np.all(np.isfinite(dx)):
            return x[keep], res, False
        dx = _damp(dx, nn, cfg.v_limit)
        x[keep] += dx
        xk = x[keep]
        small = bool(np.all(np.abs(dx[:nn]) <= cfg.reltol * np.abs(xk[:nn]) + cfg.abstol_v)
                     and np.all(np.abs(dx[nn:]) <= cfg.reltol * np.abs(xk[nn:]) + cfg.abstol_i))
    return x[keep], res, False


def _floating_nodes(ckt: Circuit) -> list[str]:
    from .netlist import _union_find
    pairs = [e.nodes for e in ckt.res + ckt.vsrc + ckt.ftjs] + [(m.d, m.s) for m in ckt.mos]
    groups = _union_find(pairs, set(ckt.node_names) | {"0"})
    return [n for n in ckt.node_names if groups[n] != groups["0"]]


def _operating_point(ckt: Circuit, t: float, states, use_ic: bool):
    cfg = ckt.config
    src = ckt.source_values(t)
    ic = []
    if use_ic:
        ic = [(ckt.cap_a[k], ckt.cap_b[k], c.ic) for k, c in enumerate(ckt.caps) if c.ic is not None]
    x0 = np.zeros(ckt.n_unknowns)
    diags = [f"floating-node {n}: no DC path to ground, held by gmin" for n in _floating_nodes(ckt)]
    x, res, ok = _dc_newton(ckt, x0, src, states, ic, 0.0, cfg)
    stages = 0
    if not ok:
        x = np.concatenate([x0, np.zeros(len(ic))])
        for k in range(10, -1, -1):
            extra = cfg.gmin * (10.0 ** k) if k > 0 else 0.0
            x, res, ok = _dc_newton(ckt, x, src, states, ic, extra, cfg)
            stages += 1
            if not ok:
                break
        if not ok:
            raise ConvergenceError("DC operating point failed after gmin stepping", t, None)
        diags.append(f"gmin stepping used ({stages} stages)")
    return x[:ckt.n_unknowns], res, diags, stages


def dc_operating_point(net: Netlist, config: SolverConfig | None = None,
                       variants: Mapping[str, DeviceVariant] | None = None,
                       t: float = 0.0, use_ic: bool = False) -> OperatingPoint:
    """Solve the static circuit at time ``t``.

    Capacitors are open, FTJs conduct their tunneling current at their
    initial polarization.  Falls back to gmin stepping when plain Newton
    fails.
    """
    cfg = config or SolverConfig()
    ckt = Circuit(net, cfg, variants)
    states = [FtjState.from_p(f.p0, st.nls) for f, st in zip(ckt.ftjs, ckt.ftj_stacks)]
    x, res, diags, stages = _operating_point(ckt, t, states, use_ic)
    volts = {n: float(x[i]) for i, n in enumerate(ckt.node_names)}
    volts["0"] = 0.0
    cur = {s.name: float(x[ckt.n_nodes + k]) for k, s in enumerate(ckt.vsrc)}
    return OperatingPoint(volts, cur, diags, stages, res)


def dc_sweep(net: Netlist, source: str, values, config: SolverConfig | None = None,
             variants: Mapping[str, DeviceVariant] | None = None) -> Trace:
    """Repeated operating points with one source stepped; ``time`` holds the sweep values."""
    from .netlist import DC
    values = np.asarray(values, dtype=float)
    rows: dict[str, list[float]] = {}
    for v in values:
        sub = net.replace_element(dataclasses.replace(net.element(source), stimulus=DC(float(v))))
        op = dc_operating_point(sub, config, variants)
        for n, val in op.voltages.items():
            if n != "0":
                rows.setdefault(f"v({n})", []).append(val)
        for n, val in op.currents.items():
            rows.setdefault(f"i({n})", []).append(val)
    return Trace(values, {k: np.array(v) for k, v in rows.items()}, {"analysis": "dc", "source": source})


# ---------------------------------------------------------------------------
# transient

@dataclass
class StepResult:
    x: np.ndarray
    ftj_states: list
    ftj_currents: np.ndarray
    mos_currents: np.ndarray
    cap_currents: np.ndarray
    residual: float
    iterations: int


class TransientSolver:
    """Steps one circuit in time; device states change only in :meth:`accept`."""

    FREEZE_AFTER = 4

    def __init__(self, net: Netlist, config: SolverConfig | None = None,
                 variants: Mapping[str, DeviceVariant] | None = None):
        self.config = config or SolverConfig()
        self.ckt = Circuit(net, self.config, variants)
        self.states = [FtjState.from_p(f.p0, st.nls)
                       for f, st in zip(self.ckt.ftjs, self.ckt.ftj_stacks)]
        self.t = 0.0
        self.x = np.zeros(self.ckt.n_unknowns)
        self.cap_i = np.zeros(len(self.ckt.caps))
        self.diagnostics: list[str] = []

    def initialize(self):
        x, res, diags, _ = _operating_point(self.ckt, 0.0, self.states, use_ic=True)
        self.x = x
        self.diagnostics.extend(diags)
        self.cap_i = np.zeros(len(self.ckt.caps))
        return res

    def state_digest(self) -> bytes:
        return b"".join(s.digest() for s in self.states)

    def try_step(self, dt: float, trapezoidal: bool) -> StepResult | None:
        """Newton solve for ``t + dt``; returns None on failure without side effects."""
        ckt, cfg = self.ckt, self.config
        n, nn = ckt.n_unknowns, ckt.n_nodes
        t1 = self.t + dt
        src = ckt.source_values(t1)
        xg_prev = np.append(self.x, 0.0)
        vc_prev = xg_prev[ckt.cap_a] - xg_prev[ckt.cap_b]
        alpha = (2.0 if trapezoidal else 1.0) / dt
        g_cap = alpha * ckt.g_cap_unit
        v_ftj_prev = [xg_prev[a] - xg_prev[b] for a, b in zip(ckt.f_a, ckt.f_b)]
        nf = len(ckt.ftjs)
        prev_masks = [None] * nf
        frozen = [None] * nf
        x = self.x.copy()
        small = False
        for it in range(cfg.max_newton_iters):
            xg = np.append(x, 0.0)
            f = np.zeros(n + 1)
            J = np.zeros((n + 1, n + 1))
            i_mos = ckt.stamp_static(xg, f, J, src)
            vc = xg[ckt.cap_a] - xg[ckt.cap_b]
            i_cap = alpha * ckt.cap_c * (vc - vc_prev) - (self.cap_i if trapezoidal else 0.0)
            J += g_cap
            f += ckt.cap_inc @ i_cap
            i_ftj = np.zeros(nf)
            flip_info = []
            for k in range(nf):
                st, state = ckt.ftj_stacks[k], self.states[k]
                a, b = ckt.f_a[k], ckt.f_b[k]
                v = xg[a] - xg[b]
                e_fe, _ = partition_fields(st, v, st.p_coupling * st.pr * state.p)
                u, flips, sign = switching_candidates(state, e_fe, dt, st)
                if frozen[k] is not None and frozen[k][1] == sign:
                    flips = frozen[k][0]
                elif prev_masks[k] is not None and it >= self.FREEZE_AFTER:
                    pm, ps = prev_masks[k]
                    if ps == sign and not np.array_equal(pm, flips):
                        flips = pm | flips
                        frozen[k] = (flips, sign)
                prev_masks[k] = (flips, sign)
                g, ieq = ftj_companion(st, state, v, dt, v_ftj_prev[k], flips, sign)
                i = g * v + ieq
                i_ftj[k] = i
                f[a] += i; f[b] -= i
                J[a, a] += g; J[b, b] += g; J[a, b] -= g; J[b, a] -= g
                flip_info.append((u, flips, sign))
            res = float(np.max(np.abs(f[:nn]))) if nn else 0.0
            vres = float(np.max(np.abs(f[nn:n]))) if n > nn else 0.0
            if it > 0 and small and res < cfg.abstol_i and vres < cfg.abstol_v:
                new_states = [apply_switching(s, u, fl, sg)
                              for s, (u, fl, sg) in zip(self.states, flip_info)]
                return StepResult(x, new_states, i_ftj, i_mos, i_cap, res, it)
            try:
                dx = _solve(J, f, n)
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.isfinite(dx)):
                return None
            dx = _damp(dx, nn, cfg.v_limit)
            x = x + dx
            small = _converged(x, dx, ckt, cfg)
        return None

    def accept(self, dt: float, step: StepResult):
        self.t += dt
        self.x = step.x
        self.states = step.ftj_states
        self.cap_i = step.cap_currents

    def signals_now(self, step: StepResult | None) -> dict[str, float]:
        ckt = self.ckt
        out = {f"v({name})": float(self.x[i]) for i, name in enumerate(ckt.node_names)}
        for k, s in enumerate(ckt.vsrc):
            out[f"i({s.name})"] = float(self.x[ckt.n_nodes + k])
        for k, fe in enumerate(ckt.ftjs):
            out[f"i({fe.name})"] = float(step.ftj_currents[k]) if step is not None else 0.0
            out[f"p({fe.name})"] = float(self.states[k].p)
        if step is not None:
            im = step.mos_currents
        else:
            xg = np.append(self.x, 0.0)
            im = ckt.mos_eval(xg)[0] if ckt.mos else np.zeros(0)
        for k, m in enumerate(ckt.mos):
            out[f"i({m.name})"] = float(im[k])
        return out


def transient(net: Netlist, tstop: float, config: SolverConfig | None = None,
              variants: Mapping[str, DeviceVariant] | None = None,
              initial_states: Mapping[str, FtjState] | None = None,
              return_solver: bool = False):
    """Adaptive implicit transient from the t = 0 operating point to ``tstop``.

    A step is rejected and halved when Newton fails, when an FTJ would change
    its polarization by more than ``dp_max_per_step`` or when a node moves by
    more than ``dv_max_per_step``.  The two accuracy limiters are waived at
    ``dt_min``; a Newton failure at ``dt_min`` raises :class:`ConvergenceError`.
    """
    if not tstop > 0:
        raise ValueError("tstop must be > 0")
    cfg = config or SolverConfig()
    solver = TransientSolver(net, cfg, variants)
    ckt = solver.ckt
    if initial_states:
        for k, fe in enumerate(ckt.ftjs):
            if fe.name in initial_states:
                solver.states[k] = initial_states[fe.name].copy()
    res0 = solver.initialize()
    times = [0.0]
    rows = [solver.signals_now(None)]
    residuals = [res0]
    bps = [b for b in ckt.breakpoints(tstop)]
    bp_i = 0
    dt = cfg.dt_init
    after_bp = True
    rejected_since = False
    n_rej = 0
    eps_t = 1e-12 * tstop
    while solver.t < tstop - eps_t:
        t = solver.t
        while bp_i < len(bps) and bps[bp_i] <= t + eps_t:
            bp_i += 1
        next_bp = bps[bp_i] if bp_i < len(bps) else tstop
        dt = min(dt, cfg.dt_max_at(t), next_bp - t)
        if next_bp - (t + dt) < cfg.dt_min:
            dt = next_bp - t
        trap = cfg.integration == "trapezoidal" and not after_bp
        step = solver.try_step(dt, trap)
        reason = None
        if step is None:
            reason = "newton"
        else:
            dps = [abs(ns.p - os.p) * st.pr for ns, os, st in
                   zip(step.ftj_states, solver.states, ckt.ftj_stacks)]
            over = [d > lim for d, lim in zip(dps, ckt.dp_limits)]
            fn = ckt.free_nodes
            dv = float(np.max(np.abs(step.x[fn] - solver.x[fn]))) if fn.size else 0.0
            if (any(over) or dv > cfg.dv_max_per_step) and dt > cfg.dt_min * 2:
                reason = "accuracy"
        if reason is not None:
            n_rej += 1
            rejected_since = True
            if dt <= cfg.dt_min * (1 + 1e-9):
                worst = None
                if reason == "newton":
                    worst = _worst_device(solver, dt)
                raise ConvergenceError("time step underflow", t, worst)
            dt = max(dt / 2.0, cfg.dt_min)
            continue
        solver.accept(dt, step)
        times.append(solver.t)
        rows.append(solver.signals_now(step))
        residuals.append(step.residual)
        landed = bp_i < len(bps) and abs(solver.t - bps[bp_i]) <= eps_t
        if landed:
            solver.t = bps[bp_i]
            times[-1] = solver.t
            dt = cfg.dt_init
            after_bp = True
        else:
            after_bp = False
            if not rejected_since and step.iterations <= 6:
                dt = dt * 2.0
        rejected_since = False
    names = list(rows[0].keys())
    sig = {k: np.array([r[k] for r in rows]) for k in names}
    meta = {"analysis": "tran", "tstop": tstop, "rejected": n_rej,
            "kcl_residual": np.array(residuals), "diagnostics": list(solver.diagnostics),
            "integration": cfg.integration}
    tr = Trace(np.array(times), sig, meta)
    if return_solver:
        return tr, solver
    return tr


def _worst_device(solver: TransientSolver, dt: float) -> str:
    ckt = solver.ckt
    xg = np.append(solver.x, 0.0)
    f = np.zeros(ckt.n_unknowns + 1)
    J = np.zeros((ckt.n_unknowns + 1, ckt.n_unknowns + 1))
    ckt.stamp_static(xg, f, J, ckt.source_values(solver.t + dt))
    return ckt.worst_node(f)
