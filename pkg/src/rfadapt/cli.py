"""Command-line entry point: ``rfadapt {run,sweep,figs,validate,loop}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .characterization import BUNDLED_FILES, data_dir, validate_file
from .errors import RfAdaptError
from .looptheory import LoopParams, adaptation_time, closed_loop_tf, loop_settling_time

EXIT_ERROR = 2


class CliError(Exception):
    pass


def named_scenarios():
    from .sim import fig17_scenario, fig20_scenario, staircase_scenario
    return {
        "fig17a": lambda: fig17_scenario("incremental"),
        "fig17b": lambda: fig17_scenario("lut"),
        "fig17c": lambda: fig17_scenario("one_shot"),
        "fig20": fig20_scenario,
        "staircase": staircase_scenario,
    }


def _check_data():
    d = data_dir()
    missing = [str(d / f) for f in BUNDLED_FILES.values() if not (d / f).is_file()]
    if missing:
        raise CliError(f"missing characterization file(s): {', '.join(missing)}")


def _load_scenario(ref):
    from .sim import Scenario
    p = Path(ref)
    if p.is_file():
        return Scenario.load(p)
    named = named_scenarios()
    key = p.stem if p.suffix == ".json" else ref
    if key in named:
        return named[key]()
    raise CliError(f"scenario {ref!r} not found")


def _override(sc, args):
    from .sim import FEEDBACK_ONLY, FFFB
    kw = {}
    if args.seed is not None:
        kw["rng_seed"] = args.seed
    if args.freq_ghz is not None:
        kw["frequency_ghz"] = args.freq_ghz
    if args.method is not None:
        kw["controller"] = replace(sc.controller, method=args.method)
        if args.board is None:
            kw["board"] = FFFB if args.method.lower() in ("fffb", "ff+fb", "ff-fb") else FEEDBACK_ONLY
    if args.board is not None:
        kw["board"] = args.board
    return replace(sc, **kw).validate() if kw else sc


def cmd_run(args):
    from .sim import run, summary, write_outputs
    _check_data()
    sc = _override(_load_scenario(args.scenario), args)
    tr = run(sc)
    trace_path, summary_path = write_outputs(tr, args.out)
    s = summary(tr)
    print(json.dumps({"trace": str(trace_path), "summary": str(summary_path),
                      "mean_adaptation_time_us": s["mean_adaptation_time_us"], "halted": s["halted"]}))
    return 1 if tr.halted else 0


def cmd_sweep(args):
    from .sim import SWEEP_POWERS_DBM, settled_vg_sweep
    _check_data()
    powers = args.powers or list(SWEEP_POWERS_DBM)
    pts = settled_vg_sweep(args.method or "lut", args.freq_ghz or 3.0, powers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"sweep_{args.method or 'lut'}_{args.freq_ghz or 3.0:g}ghz.csv"
    manifest = {"tool": "rfadapt", "version": __version__, "method": args.method or "lut",
                "freq_ghz": args.freq_ghz or 3.0, "seed": args.seed or 0}
    lines = ["# manifest " + json.dumps(manifest, sort_keys=True), "pin_dbm,settled_vg,expected_vg"]
    lines += [f"{p.pin_dbm:.6f},{p.settled_vg:.6f},{p.expected_vg:.6f}" for p in pts]
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)
    print(json.dumps({"sweep": str(path), "points": len(pts)}))
    return 0


def cmd_figs(args):
    from .figures import FIGURES, build, write_figure
    _check_data()
    ids = [f for f in sorted(FIGURES) if f not in ("fig11", "fig12")] if args.figure == "all" else [args.figure]
    written = {}
    for fid in ids:
        try:
            fig = build(fid)
        except KeyError as exc:
            raise CliError(str(exc.args[0])) from None
        written[fid] = {"path": str(write_figure(fig, args.out, args.seed or 0)), **fig.meta}
    print(json.dumps(written, indent=2, default=str))
    return 0


def _guess_kind(path):
    name = Path(path).name.lower()
    for kind in ("lna", "coupler"):
        if kind in name:
            return kind
    return "ed"


def cmd_validate(args):
    d = data_dir()
    targets = [(p, args.kind or _guess_kind(p)) for p in args.paths] or \
              [(d / f, "ed" if k.startswith("ed") else k) for k, f in BUNDLED_FILES.items()]
    all_ok = True
    for path, kind in targets:
        for r in validate_file(path, kind):
            all_ok &= r.ok
            line = f"{'PASS' if r.ok else 'FAIL'}  {Path(path).name}  {r.rule}"
            print(line + ("" if r.ok else f"  ({r.detail})"))
    return 0 if all_ok else 1


def cmd_loop(args):
    p = LoopParams(k_vg_kg=args.k, f_load_khz=args.f_load_khz, t_s_us=args.ts_us, t_process_us=args.tp_us)
    poles = closed_loop_tf(p).poles()
    out = {
        "params": asdict(p),
        "closed_loop_poles": [[float(z.real), float(z.imag)] for z in poles],
        "settling_us": loop_settling_time(p),
        "settling_sample_us": loop_settling_time(p, interpolate=False),
        "adaptation_time_n1_us": adaptation_time(1, p),
        "feasible": p.feasible,
    }
    print(json.dumps(out, indent=2))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="rfadapt", description="Adaptive LNA bias simulator")
    ap.add_argument("--version", action="version", version=f"rfadapt {__version__}")
    ap.add_argument("--data", help="characterization directory (overrides RFADAPT_DATA)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--out", default="out")
        p.add_argument("--seed", type=int)
        p.add_argument("--method")
        p.add_argument("--board")
        p.add_argument("--freq-ghz", type=float)

    p = sub.add_parser("run", help="simulate a scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON path or built-in name")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="settled V_G against input power")
    common(p)
    p.add_argument("--powers", type=float, nargs="+")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("figs", help="emit figure datasets as CSV")
    p.add_argument("figure", help="figure id (fig14, fig15, fig17a..f, fig18, fig19, fig20) or 'all'")
    common(p)
    p.set_defaults(func=cmd_figs)

    p = sub.add_parser("validate", help="check characterization files")
    p.add_argument("paths", nargs="*")
    p.add_argument("--kind", choices=("lna", "ed", "coupler"))
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("loop", help="loop-theory analysis")
    p.add_argument("--k", type=float, default=0.6)
    p.add_argument("--f-load-khz", type=float, default=100.0)
    p.add_argument("--ts-us", type=float, default=50.0)
    p.add_argument("--tp-us", type=float, default=0.0)
    p.set_defaults(func=cmd_loop)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.data:
        os.environ["RFADAPT_DATA"] = args.data
    try:
        return args.func(args)
    except (CliError, RfAdaptError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
