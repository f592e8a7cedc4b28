#!/usr/bin/env python3
"""Rebuild every figure dataset and scenario run, then print the headline numbers.

    python scripts/reproduce_all.py [--out out] [--scenarios scenarios]

Writes figure CSVs to OUT/figs, scenario traces and summaries to OUT/runs,
and the built-in scenarios as JSON to SCENARIOS so they can be edited and
replayed with ``rfadapt run --scenario FILE``.
"""

import argparse
import json
import time
from pathlib import Path

from rfadapt.cli import named_scenarios
from rfadapt.figures import FIGURES, build, write_figure
from rfadapt.sim import run, summary, write_outputs

REFERENCE_US = {
    "fig17_incremental": {"appearance": 580, "disappearance": 170},
    "fig17_lut": {"appearance": 180, "disappearance": 170},
    "fig17_one_shot": {"appearance": 450, "disappearance": 170},
    "fig20_fffb": {"appearance": 770, "increase": 140, "disappearance": 250},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out")
    ap.add_argument("--scenarios", default="scenarios")
    args = ap.parse_args()
    out, scen_dir = Path(args.out), Path(args.scenarios)
    scen_dir.mkdir(parents=True, exist_ok=True)

    for name, make in named_scenarios().items():
        sc = make()
        sc.dump(scen_dir / f"{name}.json")
        t0 = time.perf_counter()
        tr = run(sc)
        write_outputs(tr, out / "runs", stem=name)
        means = summary(tr)["mean_adaptation_time_us"]
        ref = REFERENCE_US.get(sc.name, {})
        cells = [f"{k} {v:.0f} us" + (f" (ref {ref[k]})" if k in ref else "")
                 for k, v in means.items() if v is not None]
        print(f"{name:10s} {time.perf_counter() - t0:5.2f} s  " + ", ".join(cells))

    for fid in sorted(FIGURES):
        if fid in ("fig11", "fig12"):
            continue
        fig = build(fid)
        path = write_figure(fig, out / "figs")
        keys = {k: v for k, v in fig.meta.items() if k not in ("tolerance", "method")}
        print(f"{fid:10s} {path}  " + json.dumps(keys, default=str)[:160])


if __name__ == "__main__":
    main()
