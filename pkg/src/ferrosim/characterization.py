"""Virtual-instrument protocols and figure-of-merit extraction.

The protocols drive a single FTJ from an ideal voltage source, so the
device voltage is known at every instant and the compact model can be
stepped directly (no circuit solve).  The extractors operate on plain
:class:`~ferrosim.trace.Trace` objects and therefore also accept measured
data loaded from CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .ftj import (
    FtjStack,
    FtjState,
    apply_switching,
    partition_fields,
    switching_candidates,
    tunneling_current_density,
)
from .netlist import Triangle, eval_stimulus
from .presets import get_variant, resolve_stack
from .trace import Trace

V_KEY, I_KEY, P_KEY = "v(top)", "i(ftj)", "p(ftj)"


class ExtractionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# direct drive

def drive(stack: FtjStack, t: np.ndarray, v: np.ndarray, state: FtjState | None = None,
          p0: float = -1.0):
    """Step the compact model along an imposed voltage waveform.

    Uses the same backward-difference convention as
    :func:`~ferrosim.ftj.terminal_current_step`: the sample at ``t[k]`` is the
    end of the step ``(t[k-1], t[k]]``.  Returns ``(i, p, final_state)``.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if state is None:
        state = FtjState.from_p(p0, stack.nls)
    n = t.size
    p = np.empty(n)
    dP = np.zeros(n)
    p[0] = state.p
    coupled = stack.p_coupling != 0.0
    if not coupled:
        e_all, _ = partition_fields(stack, v, 0.0)
    for k in range(1, n):
        dt = t[k] - t[k - 1]
        if coupled:
            e, _ = partition_fields(stack, v[k], stack.p_coupling * stack.pr * state.p)
        else:
            e = e_all[k]
        if e != 0.0:
            u, flips, sign = switching_candidates(state, e, dt, stack)
            p_old = state.p
            state = apply_switching(state, u, flips, sign)
            dP[k] = stack.pr * (state.p - p_old)
        p[k] = state.p
    dt = np.diff(t, prepend=t[0] - 1.0)
    dv_dt = np.zeros(n)
    dv_dt[1:] = np.diff(v) / dt[1:]
    rate = np.zeros(n)
    rate[1:] = dP[1:] / dt[1:]
    i = stack.area * (stack.c0 * dv_dt + rate + tunneling_current_density(stack, v, p))
    return i, p, state


def _as_trace(t, v, i, p, **meta) -> Trace:
    return Trace(t, {V_KEY: v, I_KEY: i, P_KEY: p}, meta)


def run_triangle_sweep(variant, amplitude: float, slew: float, cycles: int = 2,
                       dv_step: float = 5e-3, p0: float = -1.0) -> Trace:
    """Bipolar triangle sweep ``0 -> +A -> -A -> 0`` repeated ``cycles`` times.

    The sample spacing is ``dv_step / slew`` so every cycle has the same
    voltage grid.  The first cycle initializes the device; extractors use
    the last one.
    """
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    if not (amplitude > 0 and slew > 0 and dv_step > 0):
        raise ValueError("amplitude, slew and dv_step must be > 0")
    stack = resolve_stack(variant)
    tri = Triangle(amplitude, slew / (4.0 * amplitude), cycles, True)
    n_quarter = max(1, int(round(amplitude / dv_step)))
    n = 4 * n_quarter * cycles
    t = np.arange(n + 1) * (tri.period / (4 * n_quarter))
    v = eval_stimulus(tri, t)
    i, p, _ = drive(stack, t, v, p0=p0)
    return _as_trace(t, v, i, p, protocol="triangle", period=tri.period, amplitude=amplitude,
                     slew=slew, cycles=cycles, dv_step=dv_step)


def last_cycle(trace: Trace) -> Trace:
    period = trace.meta.get("period")
    if not period:
        return trace
    t_end = trace.time[-1]
    k = int(round(t_end / period))
    return trace.window((k - 1) * period - 1e-9 * period, t_end)


# ---------------------------------------------------------------------------
# switching peaks

@dataclass
class PeakReport:
    polarity: int
    voltage: float
    fwhm: float
    current: float


def _backward_derivative(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = np.zeros_like(y)
    d[1:] = np.diff(y) / np.diff(t)
    d[0] = d[1] if y.size > 1 else 0.0
    return d


def _baseline(trace: Trace, stack: FtjStack | None, v_key: str, i_key: str,
              fit_window: float = 1.0) -> np.ndarray:
    """Displacement current estimate: model C0 if the stack is known, else a fit."""
    v, i = trace[v_key], trace[i_key]
    dv_dt = _backward_derivative(trace.time, v)
    if stack is not None:
        return stack.area * stack.c0 * dv_dt
    # external data: least-squares capacitance in a sub-coercive window
    m = (np.abs(v) < fit_window) & (dv_dt != 0)
    if m.sum() < 2:
        raise ExtractionError("no sub-coercive samples to fit the background capacitance")
    c = float(np.dot(i[m], dv_dt[m]) / np.dot(dv_dt[m], dv_dt[m]))
    return c * dv_dt


def _segments(v: np.ndarray) -> list[tuple[int, int, int]]:
    """Monotone runs ``(start, stop, direction)`` with inclusive start, exclusive stop."""
    d = np.sign(np.diff(v))
    out = []
    start = 0
    for k in range(1, d.size + 1):
        if k == d.size or (d[k] != d[start] and d[k] != 0):
            if d[start] != 0:
                out.append((start, k + 1, int(d[start])))
            start = k
    return out


def _smooth(y: np.ndarray, sigma_pts: float) -> np.ndarray:
    if sigma_pts <= 0:
        return y
    return gaussian_filter1d(y, sigma_pts, mode="nearest")


def switching_residual(trace: Trace, stack: FtjStack | None = None, v_key: str = V_KEY,
                       i_key: str = I_KEY) -> np.ndarray:
    return trace[i_key] - _baseline(trace, stack, v_key, i_key)


def extract_switching_peaks(trace: Trace, stack: FtjStack | None = None, smooth_v: float = 0.02,
                            v_key: str = V_KEY, i_key: str = I_KEY) -> list[PeakReport]:
    """Per-polarity switching peaks of one full cycle.

    The displacement baseline is removed, the residual is Gaussian-smoothed
    over ``smooth_v`` volts and the extremum of each monotone segment is
    reported with its full width at half maximum.  Segments whose extremum
    sits at an end point or does not exceed three times the median residual
    magnitude yield no peak.
    """
    tr = last_cycle(trace)
    v = tr[v_key]
    res = switching_residual(tr, stack, v_key, i_key)
    reports: dict[int, PeakReport] = {}
    for a, b, direction in _segments(v):
        vs, rs = v[a:b], res[a:b]
        if vs.size < 5:
            continue
        step = float(np.median(np.abs(np.diff(vs))))
        sm = _smooth(rs, smooth_v / step if step > 0 else 0.0)
        signed = sm * direction
        k = int(np.argmax(signed))
        peak = signed[k]
        noise = float(np.median(np.abs(sm)))
        if peak <= 0 or peak <= 3.0 * noise or k in (0, signed.size - 1):
            continue
        v_peak = float(vs[k])
        if 0 < k < signed.size - 1:
            y0, y1, y2 = signed[k - 1], signed[k], signed[k + 1]
            den = y0 - 2 * y1 + y2
            if den < 0:
                v_peak += 0.5 * (y0 - y2) / den * (vs[k + 1] - vs[k])
        width = _fwhm(vs, signed, k)
        rep = PeakReport(direction, v_peak, width, float(sm[k]))
        prev = reports.get(direction)
        if prev is None or abs(rep.current) > abs(prev.current):
            reports[direction] = rep
    return [reports[d] for d in sorted(reports, reverse=True)]


def _fwhm(v: np.ndarray, y: np.ndarray, k: int) -> float:
    half = 0.5 * y[k]
    lo = k
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = k
    while hi < y.size - 1 and y[hi] > half:
        hi += 1

    def cross(i0, i1):
        if y[i1] == y[i0]:
            return v[i0]
        return v[i0] + (half - y[i0]) * (v[i1] - v[i0]) / (y[i1] - y[i0])

    v_lo = cross(lo, lo + 1) if y[lo] <= half else v[lo]
    v_hi = cross(hi - 1, hi) if y[hi] <= half else v[hi]
    return float(abs(v_hi - v_lo))


def peak_voltage(trace: Trace, polarity: int = 1, stack: FtjStack | None = None) -> float:
    for rep in extract_switching_peaks(trace, stack):
        if rep.polarity == polarity:
            return rep.voltage
    raise ExtractionError(f"no {'positive' if polarity > 0 else 'negative'} switching peak found")


# ---------------------------------------------------------------------------
# PV extraction

@dataclass
class PvCurve:
    v: np.ndarray
    p: np.ndarray
    pr_plus: float
    pr_minus: float
    vc_plus: float
    vc_minus: float
    closed: bool = True
    diagnostics: list[str] = field(default_factory=list)


def _integrate(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _zero_crossings(v: np.ndarray, y: np.ndarray, direction: int) -> list[float]:
    out = []
    for k in range(v.size - 1):
        a, b = v[k], v[k + 1]
        if direction > 0 and a < 0 <= b or direction < 0 and a > 0 >= b:
            w = -a / (b - a) if b != a else 0.0
            out.append(float(y[k] + w * (y[k + 1] - y[k])))
        elif a == 0 and k == 0 and np.sign(v[1] - v[0]) == direction:
            out.append(float(y[0]))
    return out


def extract_pv(trace: Trace, stack: FtjStack, v_key: str = V_KEY, i_key: str = I_KEY,
               smooth_v: float = 0.02) -> PvCurve:
    """Integrate the switching current of the last cycle into a P(V) loop.

    ``P(t) = (1/area) * integral(i - area*C0*dv/dt - i_tunnel) dt`` with the
    trapezoid rule.  The tunneling estimate is refined once using the
    polarization obtained from a first pass.
    """
    tr = last_cycle(trace)
    t, v, i = tr.time, tr[v_key], tr[i_key]
    q_disp = stack.area * stack.c0 * (v - v[0])
    q_tot = _integrate(t, i)
    p_norm = np.zeros_like(v)
    for _ in range(2):
        j_t = tunneling_current_density(stack, v, np.clip(p_norm, -1.0, 1.0))
        P = (q_tot - q_disp - _integrate(t, stack.area * j_t)) / stack.area
        P = P - 0.5 * (P.max() + P.min())
        p_norm = P / stack.pr
    diags = []
    closed = abs(P[-1] - P[0]) <= 0.05 * 2 * stack.pr
    if not closed:
        diags.append("non-closed loop: start/end polarization differ by more than 5% of 2*Pr")
    up = _zero_crossings(v, P, -1)     # falling through 0 V: positive remanence
    down = _zero_crossings(v, P, +1)   # rising through 0 V: negative remanence
    pr_plus = float(np.mean(up)) if up else float("nan")
    pr_minus = float(np.mean(down)) if down else float("nan")
    peaks = {r.polarity: r.voltage for r in extract_switching_peaks(tr, stack, smooth_v, v_key, i_key)}
    return PvCurve(v, P, pr_plus, pr_minus, peaks.get(1, float("nan")), peaks.get(-1, float("nan")),
                   closed, diags)


# ---------------------------------------------------------------------------
# read protocol

@dataclass
class ReadCurve:
    v: np.ndarray
    i: np.ndarray
    state: str
    p_before: float
    p_after: float
    disturb: float
    disturbed: bool
    trace: Trace | None = None


def _pwl_samples(points: list[tuple[float, float]], dt_of) -> tuple[np.ndarray, np.ndarray]:
    """Sample a piecewise-linear waveform with a per-segment step size."""
    ts, vs = [points[0][0]], [points[0][1]]
    for (t0, v0), (t1, v1) in zip(points, points[1:]):
        n = max(1, int(np.ceil((t1 - t0) / dt_of(t0, t1, v0, v1))))
        tt = t0 + (t1 - t0) * np.arange(1, n + 1) / n
        ts.extend(tt)
        vs.extend(v0 + (v1 - v0) * (tt - t0) / (t1 - t0))
    return np.array(ts), np.array(vs)


def run_staircase_read(variant, v_max: float | None = None, step: float = 0.05, settle: float = 1e-6,
                       state: str = "lrs", rise: float = 10e-9, program_v: float = 4.5,
                       program_width: float = 10e-6, program_edge: float = 100e-9) -> ReadCurve:
    """Set/reset pulse followed by a 0 -> ``v_max`` voltage staircase.

    Each step ramps in ``rise``, holds for ``settle`` and the current is
    sampled at the end of the hold, after the displacement current has died.
    """
    state = state.lower()
    if state not in ("lrs", "hrs"):
        raise ValueError("state must be 'lrs' or 'hrs'")
    if isinstance(variant, str):
        dv = get_variant(variant)
        stack = dv.stack
        if v_max is None:
            v_max = dv.read_vmax
    else:
        stack = resolve_stack(variant)
        if v_max is None:
            v_max = getattr(variant, "read_vmax", 2.0)
    if not (step > 0 and settle > 0 and v_max > 0):
        raise ValueError("step, settle and v_max must be > 0")
    vp = program_v if state == "lrs" else -program_v
    t0 = 0.0
    pts = [(t0, 0.0), (program_edge, vp), (program_edge + program_width, vp),
           (2 * program_edge + program_width, 0.0), (2 * program_edge + program_width + settle, 0.0)]
    t_read0 = pts[-1][0]
    levels = np.round(np.arange(1, int(round(v_max / step)) + 1) * step, 12)
    sample_times = []
    t = t_read0
    prev = 0.0
    for lv in levels:
        pts.append((t + rise, lv))
        pts.append((t + rise + settle, lv))
        t += rise + settle
        sample_times.append(t)
        prev = lv
    del prev

    def dt_of(ta, tb, va, vb):
        if va == vb:
            return (tb - ta) / 20.0
        return min((tb - ta) / 10.0, 5e-9) if abs(vb - va) > 1.0 else (tb - ta) / 10.0

    ts, vs = _pwl_samples(pts, dt_of)
    i, p, _ = drive(stack, ts, vs, p0=-1.0 if state == "lrs" else 1.0)
    idx = np.searchsorted(ts, np.array(sample_times) - 1e-15)
    k_read = int(np.searchsorted(ts, t_read0 - 1e-15))
    p_before, p_after = float(p[k_read]), float(p[-1])
    disturb = abs(p_after - p_before) / 2.0
    tr = _as_trace(ts, vs, i, p, protocol="staircase", state=state, level_period=rise + settle)
    return ReadCurve(levels.copy(), i[idx], state, p_before, p_after, disturb, disturb > 0.01, tr)


def current_at(curve: ReadCurve, v_read: float) -> float:
    k = np.flatnonzero(np.isclose(curve.v, v_read, atol=1e-9))
    if k.size == 0:
        raise ExtractionError(f"read curve not sampled at {v_read} V")
    return float(curve.i[k[0]])


def extract_ter(lrs: ReadCurve, hrs: ReadCurve, v_read: float) -> float:
    i_on, i_off = current_at(lrs, v_read), current_at(hrs, v_read)
    if i_off == 0:
        raise ExtractionError("HRS current is zero; TER undefined")
    return i_on / i_off


def read_window(variant, step: float = 0.05, settle: float = 1e-6, v_limit: float = 5.0,
                tol: float = 0.01) -> float:
    """Highest staircase level an HRS device survives with disturb below ``tol``.

    The HRS state is the one a positive read can flip, so this is the upper
    edge of the non-destructive read range.
    """
    curve = run_staircase_read(variant, v_limit, step, settle, state="hrs")
    tr = curve.trace
    idx = np.searchsorted(tr.time, _level_end_times(curve, settle), side="right") - 1
    drift = np.abs(tr[P_KEY][idx] - curve.p_before) / 2.0
    bad = np.flatnonzero(drift >= tol)
    if bad.size == 0:
        return float(curve.v[-1])
    if bad[0] == 0:
        raise ExtractionError("state disturbed at the first read level")
    return float(curve.v[bad[0] - 1])


def _level_end_times(curve: ReadCurve, settle: float) -> np.ndarray:
    t_end = curve.trace.time[-1]
    n = curve.v.size
    rise_settle = curve.trace.meta["level_period"]
    return t_end - rise_settle * np.arange(n - 1, -1, -1)


def continuous_ramp_current(variant, v_max: float, slew: float, state: str = "lrs",
                            dv_step: float = 5e-3) -> tuple[np.ndarray, np.ndarray]:
    """Current during a continuous 0 -> ``v_max`` ramp (no programming pulse).

    Starts from a saturated state; used to contrast displacement pickup
    with the staircase protocol.
    """
    stack = resolve_stack(variant)
    n = max(2, int(round(v_max / dv_step)))
    v = np.linspace(0.0, v_max, n + 1)
    t = v / slew
    i, _, _ = drive(stack, t, v, p0=1.0 if state == "lrs" else -1.0)
    return v, i


# ---------------------------------------------------------------------------
# frequency scaling and energy

@dataclass
class ScalingRow:
    slew: float
    plateau: float
    vc_plus: float


@dataclass
class ScalingReport:
    rows: list[ScalingRow]
    fit_slope: float
    fit_residual: float

    @property
    def plateau_ratio(self) -> float:
        return self.rows[-1].plateau / self.rows[0].plateau


def plateau_current(trace: Trace, stack: FtjStack, window: float = 1.0) -> float:
    """Mean current on the rising branch where the effective bias is within ``window`` V of 0."""
    tr = last_cycle(trace)
    v, i = tr[V_KEY], tr[I_KEY]
    rising = _backward_derivative(tr.time, v) > 0
    m = rising & (np.abs(v - stack.v_bi) < window)
    if not m.any():
        raise ExtractionError("no switching-free samples on the rising branch")
    return float(np.mean(i[m]))


def frequency_scaling_report(variant, slews, amplitude: float = 5.5, cycles: int = 2,
                             dv_step: float = 5e-3) -> ScalingReport:
    slews = [float(s) for s in slews]
    if len(slews) < 2:
        raise ValueError("need at least two slews")
    stack = resolve_stack(variant)
    rows = []
    for s in slews:
        tr = run_triangle_sweep(stack, amplitude, s, cycles, dv_step)
        try:
            vc = peak_voltage(tr, 1, stack)
        except ExtractionError:
            vc = float("nan")
        rows.append(ScalingRow(s, plateau_current(tr, stack), vc))
    x = np.array([r.slew for r in rows])
    y = np.array([r.plateau for r in rows])
    k = float(np.dot(x, y) / np.dot(x, x))
    resid = float(np.max(np.abs(y - k * x) / np.abs(k * x)))
    return ScalingReport(rows, k, resid)


def program_energy(trace: Trace, window: tuple[float, float] | None = None,
                   v_key: str = V_KEY, i_key: str = I_KEY) -> float:
    """Energy delivered to the device, ``integral(v*i dt)`` over ``window``."""
    tr = trace.window(*window) if window else trace
    if len(tr) < 2:
        return 0.0
    return float(np.trapezoid(tr[v_key] * tr[i_key], tr.time))
