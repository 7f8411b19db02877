"""Command-line front end.

Every subcommand prints ``key=value`` summary lines and, when an output
path is given, writes a CSV trace plus a ``<out>.manifest.toml`` run record
that ``ferrosim rerun`` replays.  Exit codes: 0 ok, 1 usage, 2 parse or
configuration error, 3 solver non-convergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .calibration import CalibrationError, calibrate_nls
from .cells import (run_diff_pair_program, run_diff_pair_read, run_nvsram_monte_carlo,
                    run_nvsram_restore)
from .characterization import (ExtractionError, current_at, extract_pv, frequency_scaling_report,
                               peak_voltage, plateau_current, run_staircase_read,
                               run_triangle_sweep)
from .config import ConfigError, ResolvedConfig, activate, deactivate, load_config
from .engine import ConvergenceError, dc_sweep, transient
from .ftj import DomainError, read_time
from .netlist import DcSweep, NetlistParseError, Tran, parse_netlist
from .presets import PresetError
from .trace import Trace, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def fmt(x) -> str:
    """Shortest round-tripping scientific form used in summaries."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return np.format_float_scientific(float(x), trim="-", exp_digits=2)
    return str(x)


def emit(out, **kv) -> None:
    for k, v in kv.items():
        print(f"{k}={fmt(v)}", file=out)


def _floats(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", action="append", default=[], metavar="FILE",
                        help="TOML overlay (repeatable, applied left to right)")
    common.add_argument("--manifest", metavar="FILE", help="run-record path (default: <out>.manifest.toml)")

    p = _Parser(prog="ferrosim", description="FTJ compact model and circuit simulator")
    p.add_argument("--version", action="version", version=f"ferrosim {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("sweep", parents=[common], help="triangle IV sweep")
    s.add_argument("--device", default="A", choices=["A", "B", "C"])
    s.add_argument("--amplitude", type=float, default=5.5)
    s.add_argument("--slew", type=float, default=1.1e4, help="V/s")
    s.add_argument("--cycles", type=int, default=2)
    s.add_argument("--dv-step", type=float, default=5e-3)
    s.add_argument("--out")

    s = sub.add_parser("read", parents=[common], help="staircase read")
    s.add_argument("--device", default="A", choices=["A", "B", "C"])
    s.add_argument("--state", default="lrs", choices=["lrs", "hrs"])
    s.add_argument("--vmax", type=float)
    s.add_argument("--step", type=float, default=0.05)
    s.add_argument("--settle", type=float, default=1e-6)
    s.add_argument("--out")

    s = sub.add_parser("calibrate", parents=[common], help="fit NLS kinetics to (slew, vc) targets")
    s.add_argument("--targets", required=True, metavar="FILE",
                   help="TOML with targets = [[slew, vc], ...]")
    s.add_argument("--device", default="A", choices=["A", "B", "C"])
    s.add_argument("--out", help="TOML overlay with the fitted parameters")

    s = sub.add_parser("sim", parents=[common], help="simulate a netlist file")
    s.add_argument("file")
    s.add_argument("--tstop", type=float)
    s.add_argument("--out")

    s = sub.add_parser("cell", help="cell benches")
    cell = s.add_subparsers(dest="cell", parser_class=_Parser)
    c = cell.add_parser("diffpair", parents=[common], help="program then read the synaptic pair")
    c.add_argument("--weight", type=float, default=1.0)
    c.add_argument("--develop", type=float)
    c.add_argument("--out")
    c = cell.add_parser("nvsram", parents=[common], help="NV-SRAM restore (optionally Monte Carlo)")
    c.add_argument("--stored", type=int, default=1, choices=[0, 1])
    c.add_argument("--mc", type=int, default=0, metavar="N")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")

    s = sub.add_parser("readtime", parents=[common], help="t = dv * c0 / j")
    s.add_argument("--dv", type=float, required=True, help="V")
    s.add_argument("--c0", type=float, required=True, help="F/cm^2")
    s.add_argument("--j", type=float, required=True, help="A/cm^2")

    s = sub.add_parser("freqscale", parents=[common], help="plateau current and vc vs slew")
    s.add_argument("--device", default="A", choices=["A", "B", "C"])
    s.add_argument("--slews", type=_floats, required=True, help="comma-separated V/s")
    s.add_argument("--amplitude", type=float, default=5.5)
    s.add_argument("--out", help="CSV table")

    s = sub.add_parser("rerun", help="replay a run manifest")
    s.add_argument("manifest")
    s.add_argument("--out-dir", help="write outputs here instead of the recorded paths")
    return p


# ---------------------------------------------------------------------------
# subcommands

def _flag_overrides(args) -> list[dict]:
    """Flags that map onto config keys, as an overlay applied after the files."""
    cell = {}
    if getattr(args, "command", None) == "cell" and getattr(args, "develop", None) is not None:
        cell["develop_time"] = args.develop
    return [{"cell": cell}] if cell else []


def _write_trace(tr: Trace, path) -> None:
    write_trace_csv(tr, path)


def cmd_sweep(args, cfg: ResolvedConfig, out) -> list[str]:
    stack = cfg.devices[args.device].stack
    tr = run_triangle_sweep(stack, args.amplitude, args.slew, args.cycles, args.dv_step)
    summary = {"device": args.device, "samples": len(tr)}
    try:
        summary["vc_plus"] = peak_voltage(tr, 1, stack)
        summary["vc_minus"] = peak_voltage(tr, -1, stack)
    except ExtractionError as exc:
        summary["peaks"] = f"none ({exc})"
    pv = extract_pv(tr, stack)
    summary.update(pr_plus=pv.pr_plus, pr_minus=pv.pr_minus, plateau=plateau_current(tr, stack))
    emit(out, **summary)
    if args.out:
        _write_trace(tr, args.out)
        return [args.out]
    return []


def cmd_read(args, cfg: ResolvedConfig, out) -> list[str]:
    dv = cfg.devices[args.device]
    vmax = dv.read_vmax if args.vmax is None else args.vmax
    curve = run_staircase_read(dv, vmax, args.step, args.settle, args.state)
    emit(out, device=args.device, state=args.state, v_read=vmax, i_read=current_at(curve, vmax),
         disturb=curve.disturb, disturbed=curve.disturbed)
    if args.out:
        _write_trace(curve.trace, args.out)
        return [args.out]
    return []


def cmd_calibrate(args, cfg: ResolvedConfig, out) -> list[str]:
    doc = tomllib.loads(Path(args.targets).read_text(encoding="utf-8"))
    try:
        targets = [(float(s), float(v)) for s, v in doc["targets"]]
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"{args.targets}: expected targets = [[slew, vc], ...]", "targets") from None
    res = calibrate_nls(targets, cfg.devices[args.device].stack)
    emit(out, tau0=res.nls.tau0, ea_mean=res.nls.ea_mean, evaluations=res.evaluations)
    for (s, vc), got in zip(res.targets, res.achieved):
        emit(out, **{f"vc_at_{fmt(s)}": got})
    if args.out:
        table = {"device": {args.device: {"tau0": res.nls.tau0, "ea_mean": res.nls.ea_mean}}}
        Path(args.out).write_text(tomli_w.dumps(table), encoding="utf-8")
        return [args.out]
    return []


def cmd_sim(args, cfg: ResolvedConfig, out) -> list[str]:
    net = parse_netlist(Path(args.file).read_text(encoding="utf-8"))
    tran = [a for a in net.analyses if isinstance(a, Tran)]
    dcs = [a for a in net.analyses if isinstance(a, DcSweep)]
    if args.tstop is not None or tran:
        tstop = args.tstop if args.tstop is not None else tran[0].tstop
        tr = transient(net, tstop, cfg.solver, cfg.devices)
        kcl = tr.meta["kcl_residual"]
        emit(out, analysis="tran", steps=len(tr) - 1, rejected=tr.meta["rejected"],
             kcl_max=float(np.max(np.abs(kcl))) if kcl.size else 0.0)
    elif dcs:
        d = dcs[0]
        n = int(round((d.stop - d.start) / d.step)) + 1
        tr = dc_sweep(net, d.source, d.start + d.step * np.arange(n), cfg.solver, cfg.devices)
        emit(out, analysis="dc", points=len(tr))
    else:
        raise UsageError("netlist has no .tran or .dc card; pass --tstop")
    for k, v in tr.signals.items():
        if k.startswith("v("):
            emit(out, **{f"final_{k}": v[-1]})
    for d in tr.meta.get("diagnostics", []):
        print(f"# {d}", file=out)
    if args.out:
        _write_trace(tr, args.out)
        return [args.out]
    return []


def cmd_diffpair(args, cfg: ResolvedConfig, out) -> list[str]:
    if not 0.0 <= args.weight <= 1.0:
        raise UsageError("--weight must lie in [0, 1]")
    prog = run_diff_pair_program(cfg.cell, args.weight, cfg.solver_cell)
    m = run_diff_pair_read(cfg.cell, states=prog.states, solver=cfg.solver_cell)
    emit(out, p1=prog.p1, p2=prog.p2, weight=prog.weight, pulses=prog.n_pulses,
         reached=prog.reached, dv_n1n2=m.dv_n1n2_at_t, di_pair=m.di_pair,
         i_sum_error=m.i_sum_error, develop=m.t_eval)
    for d in m.diagnostics:
        print(f"# {d}", file=out)
    if args.out:
        _write_trace(m.trace, args.out)
        return [args.out]
    return []


def cmd_nvsram(args, cfg: ResolvedConfig, out) -> list[str]:
    m = run_nvsram_restore(cfg.cell, args.stored, solver=cfg.solver_cell)
    emit(out, stored=args.stored, restore_correct=m.restore_correct, swing=m.q_qn_swing,
         develop_dv=m.develop_dv, metastable=m.metastable)
    if args.mc > 0:
        mc = run_nvsram_monte_carlo(cfg.cell, args.stored, args.mc, seed=args.seed)
        emit(out, mc_trials=mc.n_trials, mc_correct=mc.n_correct,
             mc_min_swing=float(mc.swings.min()), mc_min_develop_dv=float(np.abs(mc.develop_dv).min()))
    if args.out:
        _write_trace(m.trace, args.out)
        return [args.out]
    return []


def cmd_readtime(args, cfg: ResolvedConfig, out) -> list[str]:
    emit(out, read_time=read_time(args.dv, args.c0, args.j))
    return []


def cmd_freqscale(args, cfg: ResolvedConfig, out) -> list[str]:
    stack = cfg.devices[args.device].stack
    rep = frequency_scaling_report(stack, args.slews, args.amplitude)
    for r in rep.rows:
        emit(out, **{f"plateau_at_{fmt(r.slew)}": r.plateau, f"vc_at_{fmt(r.slew)}": r.vc_plus})
    emit(out, fit_slope=rep.fit_slope, fit_residual=rep.fit_residual, plateau_ratio=rep.plateau_ratio)
    if args.out:
        slews = np.array([r.slew for r in rep.rows])
        _write_trace(Trace(slews, {"plateau": np.array([r.plateau for r in rep.rows]),
                                   "vc_plus": np.array([r.vc_plus for r in rep.rows])}),
                     args.out)
        return [args.out]
    return []


COMMANDS = {"sweep": cmd_sweep, "read": cmd_read, "calibrate": cmd_calibrate, "sim": cmd_sim,
            "diffpair": cmd_diffpair, "nvsram": cmd_nvsram, "readtime": cmd_readtime,
            "freqscale": cmd_freqscale}
INPUT_ARGS = ("file", "targets")


# ---------------------------------------------------------------------------
# manifests

def _manifest(argv, args, cfg: ResolvedConfig, name: str, outputs) -> dict:
    return {
        "tool": {"name": "ferrosim", "version": __version__},
        "run": {"subcommand": name, "argv": list(argv)},
        "inputs": {k: str(getattr(args, k)) for k in INPUT_ARGS if getattr(args, k, None)}
        | {"config": [str(c) for c in args.config]},
        "outputs": {"paths": [str(o) for o in outputs]},
        "config": cfg.to_dict(),
    }


def _remap(argv: list[str], out_dir: Path) -> list[str]:
    argv = list(argv)
    for flag in ("--out", "--manifest"):
        if flag in argv:
            i = argv.index(flag) + 1
            argv[i] = str(out_dir / Path(argv[i]).name)
    return argv


def _strip_config(argv: list[str]) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--config":
            skip = True
            continue
        if a.startswith("--config="):
            continue
        out.append(a)
    return out


def rerun(args, out) -> int:
    doc = tomllib.loads(Path(args.manifest).read_text(encoding="utf-8"))
    try:
        argv = list(doc["run"]["argv"])
        config = doc["config"]
    except (KeyError, TypeError):
        raise ConfigError(f"{args.manifest}: not a run manifest") from None
    argv = _strip_config(argv)
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        argv = _remap(argv, Path(args.out_dir))
    return dispatch(argv, out, base_config=config)


# ---------------------------------------------------------------------------
# entry points

def _run(argv, out, base_config) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().rstrip())
    if args.command == "rerun":
        return rerun(args, out)
    if args.command == "cell" and args.cell is None:
        raise UsageError("usage: ferrosim cell {diffpair,nvsram} ...")
    name = args.cell if args.command == "cell" else args.command
    overlays = ([base_config] if base_config is not None else []) + _flag_overrides(args)
    cfg = load_config(args.config, overlays)
    activate(cfg)
    outputs = COMMANDS[name](args, cfg, out)
    man_path = args.manifest or (f"{args.out}.manifest.toml" if getattr(args, "out", None) else None)
    if man_path:
        label = f"cell {name}" if args.command == "cell" else name
        man = _manifest(argv, args, cfg, label, outputs)
        Path(man_path).write_text(tomli_w.dumps(man), encoding="utf-8")
        print(f"manifest={man_path}", file=out)
    return EXIT_OK


def dispatch(argv=None, out=None, base_config: dict | None = None) -> int:
    """Run one command line and return its exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    out = out or sys.stdout
    try:
        return _run(argv, out, base_config)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ConfigError, PresetError, NetlistParseError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        deactivate()


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
