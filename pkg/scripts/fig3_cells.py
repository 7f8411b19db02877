"""Circuit-level benches: 2T1C read, differential pair and NV-SRAM.

Writes the cell traces as CSV and prints the read and restore metrics.
``--mc N`` adds an N-trial mismatch Monte Carlo per stored state.
"""

import argparse
from pathlib import Path

from ferrosim.cells import (CellConfig, run_2t1c_read, run_diff_pair_program, run_diff_pair_read,
                            run_nvsram_monte_carlo, run_nvsram_restore, run_nvsram_store,
                            run_sram_read)
from ferrosim.trace import write_trace_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, default=Path("results/fig3"))
    ap.add_argument("--weights", default="1.0,0.75,0.5,0.25,0.0")
    ap.add_argument("--mc", type=int, default=0)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    cfg = CellConfig()

    for state in ("lrs", "hrs"):
        m = run_2t1c_read(cfg, state)
        write_trace_csv(m.trace, args.out_dir / f"2t1c_{state}.csv")
        print(f"2T1C {state}: ramp {m.ramp_rate:.1f} V/s, develop {m.develop_dv * 1e3:.2f} mV")

    for w in (float(x) for x in args.weights.split(",")):
        prog = run_diff_pair_program(cfg, w)
        m = run_diff_pair_read(cfg, states=prog.states)
        write_trace_csv(m.trace, args.out_dir / f"diffpair_w{w:.2f}.csv")
        note = f"  [{'; '.join(m.diagnostics)}]" if m.diagnostics else ""
        print(f"pair w={w:.2f}: {prog.n_pulses} pulses, p1 {prog.p1:+.3f}, p2 {prog.p2:+.3f}, "
              f"dv {m.dv_n1n2_at_t * 1e3:+.2f} mV, dI {m.di_pair * 1e9:+.1f} nA, "
              f"tail error {m.i_sum_error:.1e}{note}")

    for stored in (1, 0):
        _, _, states, _, store_tr = run_nvsram_store(cfg, stored)
        write_trace_csv(store_tr, args.out_dir / f"nvsram_store_{stored}.csv")
        m = run_nvsram_restore(cfg, stored, states=states)
        write_trace_csv(m.trace, args.out_dir / f"nvsram_restore_{stored}.csv")
        print(f"NV-SRAM stored {stored}: develop {m.develop_dv * 1e3:+.2f} mV, "
              f"swing {m.q_qn_swing:.2f} V, correct {m.restore_correct}")
        if args.mc:
            mc = run_nvsram_monte_carlo(cfg, stored, args.mc)
            print(f"  Monte Carlo: {mc.n_correct}/{mc.n_trials} correct")
        r = run_sram_read(cfg, stored)
        print(f"  SRAM read: delay {r.read_delay * 1e9:.2f} ns, BL split {r.bl_diff:+.2f} V, "
              f"non-destructive {not r.destructive}")


if __name__ == "__main__":
    main()
