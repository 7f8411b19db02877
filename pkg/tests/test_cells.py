import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ferrosim.cells import (
    CellConfig, Edge, PhaseSchedule, ScheduleError, build_2t1c, build_diff_pair, build_nvsram,
    cell_ftj_overrides, pair_current_oracle, pulses_for_weight, run_2t1c_read,
    run_diff_pair_program, run_diff_pair_pulses, run_diff_pair_read, run_nvsram_monte_carlo,
    run_nvsram_restore, run_nvsram_store, run_sram_read, tail_bias, weight_table)
from ferrosim.engine import mosfet_current
from ferrosim.ftj import replace_flat, tunneling_current_density
from ferrosim.netlist import validate_netlist
from ferrosim.presets import get_variant

CFG = CellConfig()


def cell_stack(cfg=CFG):
    return replace_flat(get_variant(cfg.variant).stack, cell_ftj_overrides(cfg))


# --- schedules and config --------------------------------------------------

def test_schedule_rejects_bad_phases():
    sch = PhaseSchedule({"vbl": 0.0})
    with pytest.raises(ScheduleError):
        sch.add("dance", 1e-6)
    with pytest.raises(ScheduleError):
        sch.add("read", 0.0)
    with pytest.raises(ScheduleError):
        sch.add("read", 1e-6, Edge("vxx", 0, 1.0))
    with pytest.raises(ScheduleError):
        sch.add("read", 1e-6, Edge("vbl", 0.95e-6, 1.0, 0.1e-6))


def test_schedule_missing_source_in_netlist():
    net, _ = build_2t1c(CFG)
    with pytest.raises(ScheduleError):
        PhaseSchedule({"vzz": 0.0}).add("idle", 1e-6).apply(net)


@given(durs=st.lists(st.floats(1e-9, 1e-5), min_size=1, max_size=6),
       levels=st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_schedule_waveforms(durs, levels):
    sch = PhaseSchedule({"va": 0.0, "vb": 1.0})
    for d, lv in zip(durs, levels):
        sch.add("idle", d, Edge("va", 0.0, lv, d / 2))
    stims = sch.stimuli()
    for pwl in stims.values():
        t = [p[0] for p in pwl.points]
        assert all(b >= a for a, b in zip(t, t[1:]))
        assert t[-1] == pytest.approx(sch.duration)
    assert stims["va"].points[-1][1] == levels[len(durs) - 1]
    assert stims["vb"].points[-1][1] == 1.0
    assert PhaseSchedule.from_dict(sch.to_dict()).stimuli() == stims


def test_cell_config_validation():
    with pytest.raises(ValueError):
        CellConfig(c_n=0.0)
    with pytest.raises(ValueError):
        CellConfig(variant="Z")


def test_cell_ftj_density():
    s = cell_stack()
    # 10x the 1 pA/um^2 reference at 2 V
    assert s.area * tunneling_current_density(s, 2.0, 1.0) == pytest.approx(10e-12, rel=1e-9)


def test_tail_bias_sinks_ib():
    vb = tail_bias(CFG)
    assert mosfet_current(CFG.nmos(CFG.w_tail), vb, 1.0) == pytest.approx(CFG.i_b, rel=1e-9)


def test_bench_netlists_validate():
    for net in (build_2t1c(CFG)[0], build_diff_pair(CFG), build_nvsram(CFG)):
        assert validate_netlist(net) == []


# --- 2T1C --------------------------------------------------------------------

@pytest.fixture(scope="module")
def t2t1c():
    return {s: run_2t1c_read(CFG, s) for s in ("lrs", "hrs")}


def test_2t1c_charging_law(t2t1c):
    s = cell_stack()
    c_total = CFG.c_n + s.area * s.c0  # the FTJ background capacitance loads n too
    for state, p in (("lrs", 1.0), ("hrs", -1.0)):
        i_ftj = s.area * tunneling_current_density(s, CFG.v_read, p)
        assert t2t1c[state].ramp_rate == pytest.approx(i_ftj / c_total, rel=0.05)


def test_2t1c_slope_ratio_is_ter(t2t1c):
    ratio = t2t1c["lrs"].ramp_rate / t2t1c["hrs"].ramp_rate
    assert ratio == pytest.approx(get_variant("A").stack.tun.ter, rel=0.2)


def test_2t1c_write_sets_state(t2t1c):
    assert t2t1c["lrs"].trace["p(f1)"][-1] == 1.0
    assert t2t1c["hrs"].trace["p(f1)"][-1] == -1.0


# --- differential pair -----------------------------------------------------

@pytest.fixture(scope="module")
def programmed():
    return {w: run_diff_pair_program(CFG, w) for w in (1.0, 0.5)}


def test_program_full_weight(programmed):
    r = programmed[1.0]
    assert (r.p1, r.p2) == (1.0, -1.0)
    assert r.reached


def test_program_half_weight(programmed):
    r = programmed[0.5]
    assert abs(r.p1) < 0.1 and abs(r.p2) < 0.1
    assert r.weight == pytest.approx(0.5, abs=0.05)


def test_programmed_pair_complementary(programmed):
    for r in programmed.values():
        assert abs(r.p1 + r.p2) <= 0.1


def test_program_bad_weight():
    with pytest.raises(ValueError):
        run_diff_pair_program(CFG, 1.5)


def test_weight_table_monotone_and_invertible():
    table = weight_table(CFG)
    assert np.all(np.diff(table) >= 0)
    assert table[0] == -1.0
    for w in (0.0, 0.25, 0.5, 0.75):
        n, achieved = pulses_for_weight(CFG, w)
        assert abs(achieved - w) < 0.05
        assert 0.5 * (table[n] + 1) == achieved


@pytest.fixture(scope="module")
def mid_states():
    # 20 partial pulses put the pair in the steep part of the NLS response
    _, states = run_diff_pair_pulses(CFG, 20)
    return states


def _update(states, **kw):
    _, s = run_diff_pair_pulses(CFG, 3, states=states, **kw)
    return s[0].p - states[0].p


def test_update_strength_amplitude(mid_states):
    assert 0 < _update(mid_states, v_p=3.3) < _update(mid_states)


def test_update_strength_wl_delay(mid_states):
    assert 0 < _update(mid_states, wl_delay=40e-9) < _update(mid_states)


def test_circuit_follows_weight_table(mid_states):
    assert mid_states[0].p == pytest.approx(weight_table(CFG)[20], abs=2 / 64)


@pytest.fixture(scope="module")
def reads(programmed):
    out = {}
    for w, r in programmed.items():
        out[w] = run_diff_pair_read(CFG, states=r.states)
    out["swapped"] = run_diff_pair_read(CFG, p=(-1.0, 1.0))
    out["nominal"] = run_diff_pair_read(CFG, p=(1.0, -1.0))
    out["balanced"] = run_diff_pair_read(CFG, p=(0.0, 0.0))
    return out


def test_read_anchor(reads):
    m = reads[1.0]
    assert 15e-3 <= m.dv_n1n2_at_t <= 45e-3
    assert 100e-9 <= m.di_pair <= 400e-9
    assert m.dv_n1n2_at_t == pytest.approx(30e-3, rel=0.5)
    assert m.di_pair == pytest.approx(200e-9, rel=1.0)


def test_tail_normalization(reads):
    for m in reads.values():
        assert 0 <= m.i_sum_error < 0.01


def test_pair_follows_tanh_law(reads):
    m = reads[1.0]
    assert pair_current_oracle(500e-9, 30e-3) == pytest.approx(209e-9, rel=0.01)
    assert m.di_pair == pytest.approx(pair_current_oracle(CFG.i_b, m.dv_n1n2_at_t), rel=0.05)


def test_balanced_pair_reads_zero(reads):
    m = reads["balanced"]
    assert abs(m.dv_n1n2_at_t) < 1e-6
    assert abs(m.di_pair) < 1e-9


def test_half_weight_read_until_disturb(reads):
    # the partially set FTJ carries nucleation progress that the read bias can
    # complete; before any flip the split stays near zero
    m = reads[0.5]
    tr = m.trace
    t0 = CFG.gap + CFG.precharge + CFG.edge
    changed = np.flatnonzero(tr["p(f1)"] != tr["p(f1)"][0])
    t_flip = tr.time[changed[0]] if changed.size else tr.time[-1]
    ok = (tr.time >= t0) & (tr.time < t_flip)
    dv = tr["v(n1)"][ok] - tr["v(n2)"][ok]
    assert np.max(np.abs(dv)) < 3e-3
    if changed.size:
        assert any("read disturb" in d for d in m.diagnostics)


def test_mirror_symmetry(reads):
    a, b = reads["nominal"], reads["swapped"]
    assert b.dv_n1n2_at_t == pytest.approx(-a.dv_n1n2_at_t, rel=1e-3)
    assert b.di_pair == pytest.approx(-a.di_pair, rel=1e-3)


def test_develop_split_monotone(reads):
    m = reads["nominal"]
    tr = m.trace
    t0 = CFG.gap + CFG.precharge + CFG.edge
    win = tr.window(t0, tr.time[-1])
    dv = win["v(n1)"] - win["v(n2)"]
    assert np.all(np.diff(dv) >= -1e-9)
    assert not m.diagnostics


# --- NV-SRAM -------------------------------------------------------------------

@pytest.fixture(scope="module")
def restores():
    return {s: run_nvsram_restore(CFG, s) for s in (0, 1)}


def test_restore_nominal(restores):
    for stored, m in restores.items():
        assert m.restore_correct and not m.metastable
        assert m.q_qn_swing > 0.9 * CFG.v_dd
        q = m.trace["v(q)"][-1]
        assert (q > CFG.v_dd / 2) == (stored == 1)


def test_restore_symmetric_input_is_metastable():
    m = run_nvsram_restore(CFG, stored=None, p=(1.0, 1.0))
    assert m.metastable and not m.restore_correct
    assert m.diagnostics


def test_restore_develop_monotone(restores):
    short = restores[1].develop_dv
    long = run_nvsram_restore(CFG, 1, develop=4 * CFG.restore_develop).develop_dv
    assert long > short > 0


def test_restore_bad_state():
    with pytest.raises(ValueError):
        run_nvsram_restore(CFG, 2)


@pytest.mark.parametrize("logic", [0, 1])
def test_store_restore_round_trip(logic):
    p1, p2, states, diags, _ = run_nvsram_store(CFG, logic)
    assert not diags
    assert p1 * p2 < 0
    assert (p1 > 0) == (logic == 1)
    m = run_nvsram_restore(CFG, logic, states=states)
    assert m.restore_correct


def test_monte_carlo_small_sample():
    mc = run_nvsram_monte_carlo(CFG, 1, n_trials=4, seed=3, workers=1)
    assert mc.n_correct == 4
    again = run_nvsram_monte_carlo(CFG, 1, n_trials=4, seed=3, workers=1)
    assert np.array_equal(mc.develop_dv, again.develop_dv)


@pytest.mark.parametrize("logic", [0, 1])
def test_sram_read(logic):
    m = run_sram_read(CFG, logic)
    assert not m.destructive
    assert (m.bl_diff > 0) == (logic == 1)
    assert m.read_delay < 1e-3 * CFG.restore_develop
