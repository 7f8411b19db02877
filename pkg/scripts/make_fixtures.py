"""Regenerate the bundled benchmark netlists in ``src/ferrosim/data``."""

from pathlib import Path

from ferrosim.cells import (CellConfig, add_program_event, build_2t1c, build_diff_pair,
                            build_nvsram, nvsram_restore_schedule, _dp_schedule)
from ferrosim.netlist import Tran, parse_netlist, serialize_netlist

DATA = Path(__file__).resolve().parents[1] / "src" / "ferrosim" / "data"

RC = """rc step
VIN in 0 PULSE(0 1 0 1n 1 1n 2)
R1 in out 1k
C1 out 0 1n
.tran 10n 10u
.end
"""

DIVIDER = """resistive divider
V1 a 0 3
R1 a b 1k
R2 b 0 2k
.tran 1n 10n
.end
"""

FTJ_PULSE = """ftj program pulse
VPL pl 0 PULSE(0 4.5 0 100n 10u 100n 100u)
F1 pl 0 VARIANT=A P0=-1
.tran 10n 12u
.end
"""


def with_tran(net, sch):
    net = sch.apply(net)
    net.analyses = [Tran(sch.duration / 1000, sch.duration)]
    return net


def main():
    cfg = CellConfig()
    benches = {}
    net, sch = build_2t1c(cfg)
    benches["2t1c.cir"] = with_tran(net, sch)
    sch = _dp_schedule(cfg)
    add_program_event(sch, cfg, +1, cfg.v_prog_part, cfg.t_prog_part)
    benches["diffpair.cir"] = with_tran(build_diff_pair(cfg), sch)
    benches["nvsram.cir"] = with_tran(build_nvsram(cfg), nvsram_restore_schedule(cfg))
    for name, text in (("rc.cir", RC), ("divider.cir", DIVIDER), ("ftj_pulse.cir", FTJ_PULSE)):
        benches[name] = parse_netlist(text)
    for name, net in benches.items():
        (DATA / name).write_text(serialize_netlist(net), encoding="utf-8")
        print(f"wrote {DATA / name}")


if __name__ == "__main__":
    main()
