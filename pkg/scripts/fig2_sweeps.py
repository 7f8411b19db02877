"""Device-level characterization of presets A, B and C.

Writes CSV traces for the triangle sweeps at both anchor slews, the
staircase reads, the P(V) loops and a frequency-scaling table, and prints
the extracted figures of merit.
"""

import argparse
from pathlib import Path

import numpy as np

from ferrosim.characterization import (current_at, extract_pv, extract_switching_peaks,
                                       extract_ter, frequency_scaling_report, read_window,
                                       run_staircase_read, run_triangle_sweep)
from ferrosim.presets import get_variant
from ferrosim.trace import Trace, write_trace_csv

SLEWS = {"slow": 11e3, "fast": 5.5e5}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, default=Path("results/fig2"))
    ap.add_argument("--devices", default="ABC")
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    for name in args.devices:
        dv = get_variant(name)
        s = dv.stack
        print(f"device {name}")
        for label, slew in SLEWS.items():
            tr = run_triangle_sweep(s, 5.5, slew, 2)
            write_trace_csv(tr, args.out_dir / f"sweep_{name}_{label}.csv")
            for r in extract_switching_peaks(tr, s):
                print(f"  {label:4s} peak {r.polarity:+d}: {r.voltage:+.3f} V, "
                      f"FWHM {r.fwhm:.3f} V, {r.current * 1e3:.3f} mA")
            if label == "slow":
                pv = extract_pv(tr, s)
                write_trace_csv(Trace(np.arange(pv.v.size, dtype=float), {"v": pv.v, "p": pv.p}),
                                args.out_dir / f"pv_{name}.csv")
                print(f"  Pr+ {pv.pr_plus * 1e6:.2f} uC/cm2, Pr- {pv.pr_minus * 1e6:.2f} uC/cm2")
        curves = {st: run_staircase_read(name, state=st) for st in ("lrs", "hrs")}
        for st, c in curves.items():
            write_trace_csv(Trace(c.v, {"i": c.i}), args.out_dir / f"read_{name}_{st}.csv")
        v = dv.read_vmax
        print(f"  read at {v:.2f} V: LRS {current_at(curves['lrs'], v) * 1e9:.3f} nA, "
              f"TER {extract_ter(curves['lrs'], curves['hrs'], v):.2f}, "
              f"non-destructive window {read_window(name):.2f} V")

    rep = frequency_scaling_report("A", [11e3, 5.5e4, 1.1e5, 5.5e5])
    write_trace_csv(Trace(np.array([r.slew for r in rep.rows]),
                          {"plateau": np.array([r.plateau for r in rep.rows]),
                           "vc_plus": np.array([r.vc_plus for r in rep.rows])}),
                    args.out_dir / "freqscale_A.csv")
    print(f"plateau ratio 0.55 V/us : 11 mV/us = {rep.plateau_ratio:.2f}, "
          f"linear-fit residual {rep.fit_residual:.2e}")


if __name__ == "__main__":
    main()
