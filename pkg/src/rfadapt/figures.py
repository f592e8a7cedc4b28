"""Figure datasets as CSV tables.

Each builder returns a ``FigureData`` with a header, rows and a metadata
dict; ``write_figure`` prefixes the CSV with a manifest comment line.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .looptheory import FIG15_TS_US, LoopParams, fig14_cases, linear_fit, sweep_adaptation_vs_ts
from .sim import (SWEEP_POWERS_DBM, compare_adaptive_vs_nominal, fig17_scenario, fig20_scenario, run,
                  settled_vg_sweep, summary)


@dataclass
class FigureData:
    figure: str
    header: tuple
    rows: list
    meta: dict = field(default_factory=dict)


def _manifest(fig: FigureData, seed=0):
    cfg = json.dumps({"figure": fig.figure, "meta": fig.meta}, sort_keys=True, default=str)
    return {"tool": "rfadapt", "version": __version__, "figure": fig.figure,
            "config_sha256": hashlib.sha256(cfg.encode()).hexdigest(), "seed": seed, **fig.meta}


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6f}"
    return str(x)


def figure_csv(fig: FigureData, seed=0) -> str:
    buf = io.StringIO()
    buf.write("# manifest " + json.dumps(_manifest(fig, seed), sort_keys=True, default=str) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fig.header)
    for r in fig.rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def write_figure(fig: FigureData, out_dir, seed=0):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{fig.figure}.csv"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(figure_csv(fig, seed), encoding="utf-8")
    tmp.replace(path)
    return path


def fig14():
    cases = fig14_cases()
    ks = sorted(cases)
    t = cases[ks[0]]["t_us"]
    rows = [[float(ti)] + [float(cases[k]["value"][i]) for k in ks] for i, ti in enumerate(t)]
    meta = {"tolerance": "settling 2 %, check +-20 %",
            **{f"settling_us_k{k}": round(float(cases[k]["settling_us"]), 3) for k in ks},
            **{f"settling_sample_us_k{k}": float(cases[k]["settling_sample_us"]) for k in ks}}
    return FigureData("fig14", ("t_us", *[f"y_k{k}" for k in ks]), rows, meta)


def fig15():
    pts = sweep_adaptation_vs_ts(LoopParams(), FIG15_TS_US)
    ok = [p for p in pts if p.feasible]
    slope, icpt, r2 = linear_fit([p.ts_us for p in ok], [p.t_adapt_us for p in ok])
    best = min(ok, key=lambda p: p.t_adapt_us)
    meta = {"slope": round(slope, 6), "intercept_us": round(icpt, 6), "r2": round(r2, 9),
            "min_t_adapt_us": round(best.t_adapt_us, 3), "min_at_ts_us": best.ts_us, "min_n_steps": best.n_steps,
            "tolerance": "R2 > 0.99; minimum +-25 %"}
    rows = [[p.ts_us, p.t_adapt_us, p.n_steps, p.feasible] for p in pts]
    return FigureData("fig15", ("ts_us", "t_adapt_us", "n_steps", "feasible"), rows, meta)


_FIG17_METHODS = {"a": "incremental", "b": "lut", "c": "one_shot"}


def fig17_trace(letter):
    method = _FIG17_METHODS[letter]
    tr = run(fig17_scenario(method))
    c = tr.columns
    keep = ~c["sampled"]
    cols = ("t_us", "pin_dbm", "vg_cmd_v", "pout_dbm", "ed2_v", "marker")
    rows = [list(r) for r in zip(*(c[k][keep] for k in cols))]
    s = summary(tr)
    meta = {"method": method, "mean_adaptation_time_us": s["mean_adaptation_time_us"],
            "tolerance": "appearance 580/180/450 us, disappearance 170 us, +-25 %"}
    return FigureData(f"fig17{letter}", cols, rows, meta)


def fig17_episodes(letter):
    method = _FIG17_METHODS[{"d": "a", "e": "b", "f": "c"}[letter]]
    tr = run(fig17_scenario(method), record_grid=False)
    rows = [[e.t_us, e.kind, e.to_dbm, e.adaptation_time_us if e.adaptation_time_us is not None else "",
             e.settled_vg, e.n_steps] for e in tr.episodes]
    return FigureData(f"fig17{letter}", ("t_us", "kind", "power_dbm", "adaptation_time_us", "settled_vg", "n_steps"),
                      rows, {"method": method})


def fig18():
    rows = []
    for f in (3.0, 2.5):
        for method in ("incremental", "lut", "one_shot"):
            for p in settled_vg_sweep(method, f, SWEEP_POWERS_DBM):
                rows.append([f, method, p.pin_dbm, p.settled_vg, p.expected_vg])
    return FigureData("fig18", ("freq_ghz", "method", "pin_dbm", "settled_vg", "expected_vg"), rows,
                      {"lut_calibration_freq_ghz": 3.0})


def fig19():
    rep = compare_adaptive_vs_nominal()
    header = tuple(rep[0].keys())
    return FigureData("fig19", header, [[r[k] for k in header] for r in rep],
                      {"nominal_vg": -2.4, "adaptive_method": "lut", "tone_offset_db": 3.0})


def fig20():
    tr = run(fig20_scenario())
    c = tr.columns
    keep = ~c["sampled"]
    cols = ("t_us", "pin_dbm", "vg_cmd_v", "pout_dbm", "ed1_v", "ed2_v", "marker")
    rows = [list(r) for r in zip(*(c[k][keep] for k in cols))]
    s = summary(tr)
    meta = {"mean_adaptation_time_us": s["mean_adaptation_time_us"],
            "max_overshoot_v": max(e.overshoot_v for e in tr.episodes),
            "tolerance": "770/140/250 us +-25 %, zero overshoot"}
    return FigureData("fig20", cols, rows, meta)


FIGURES = {
    "fig14": fig14,
    "fig15": fig15,
    **{f"fig17{k}": (lambda k=k: fig17_trace(k)) for k in "abc"},
    **{f"fig17{k}": (lambda k=k: fig17_episodes(k)) for k in "def"},
    "fig18": fig18,
    "fig11": fig18,
    "fig19": fig19,
    "fig12": fig19,
    "fig20": fig20,
}


def build(figure_id) -> FigureData:
    key = figure_id.lower().replace("/", "").strip()
    if key in ("fig1811", "fig18/11"):
        key = "fig18"
    if key in ("fig1912",):
        key = "fig19"
    try:
        return FIGURES[key]()
    except KeyError:
        raise KeyError(f"unknown figure id {figure_id!r}; choose from {sorted(FIGURES)}") from None
