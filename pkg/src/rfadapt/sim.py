"""Event-driven simulation of the adaptive receive chain.

The ADC ticks are the simulation events. Between ticks the detectors
follow first-order closed forms driven by piecewise-constant targets, so
every value in a trace is evaluated analytically.
"""

from __future__ import annotations

import bisect
import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .characterization import data_dir, load_bundled
from .control import (FeedbackController, FfFbController, LutTable, Method,
                      TripleSetPointThresholds, build_lut, choose_linearity_threshold, load_lut)
from .devices import AdcSample
from .errors import ModelError, NoAdaptation, OutOfRange, ScenarioError
from .frontend import BOARDS, FEEDBACK_ONLY, FFFB, LATTICE, VG_MIN, Frontend

SCHEMA_VERSION = 1
OFF_DBM = -100.0  # "no interference"
MAX_PIN_DBM = 30.0


# ---------------------------------------------------------------- scenario


@dataclass(frozen=True)
class Event:
    t_us: float
    power_dbm: float


@dataclass(frozen=True)
class ControllerConfig:
    method: str = "incremental"
    thresholds: object = "auto"
    lut_path: str | None = None
    dead_band_lsb: int = 8
    interference_threshold_dbm: float = -12.5
    threshold_freqs_ghz: tuple = (2.5, 2.75, 3.0)
    neg_ratio: float = 0.5
    negneg_ratio: float = 1.5
    calibration_freq_ghz: float = 3.0
    tol_db: float = 1.0
    near_floor_dbm: float = -23.0


@dataclass(frozen=True)
class TimingConfig:
    """ADC and firmware timing.

    These are calibration constants chosen to reproduce the bench adaptation
    times; the firmware internals they stand in for are not published.
    """

    ts_us: float = 42.0
    tp_us: float = 1.0
    window_samples: int = 2
    fffb_ts_us: float = 44.0
    fffb_near_floor_window: int = 4
    lut_tp_us: float = 1.0
    one_shot_tp_us: float = 1.0
    grid_step_us: float = 1.0


@dataclass(frozen=True)
class Scenario:
    frequency_ghz: float
    duration_us: float
    events: tuple
    board: str = FEEDBACK_ONLY
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    devices: dict = field(default_factory=dict)
    timing: TimingConfig = field(default_factory=TimingConfig)
    rng_seed: int = 0
    noise_sigma_lsb: float = 0.0
    name: str = "scenario"

    def validate(self):
        if self.board not in BOARDS:
            raise ScenarioError(f"unknown board {self.board!r}")
        try:
            method = Method.parse(self.controller.method)
        except ValueError as exc:
            raise ScenarioError(f"unknown method {self.controller.method!r}") from exc
        if (method is Method.FFFB) != (self.board == FFFB):
            raise ScenarioError("the fffb method needs the fffb board and vice versa")
        if not self.events:
            raise ScenarioError("scenario has no events")
        times = [e.t_us for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError("event times must be strictly increasing")
        if times[0] < 0 or times[-1] > self.duration_us:
            raise ScenarioError("events must lie inside [0, duration]")
        if any(e.power_dbm > MAX_PIN_DBM for e in self.events):
            raise ScenarioError(f"event power above the {MAX_PIN_DBM} dBm LNA rating")
        if self.duration_us <= 0 or self.timing.ts_us <= 0:
            raise ScenarioError("duration and sample period must be positive")
        if self.noise_sigma_lsb < 0:
            raise ScenarioError("noise sigma must be non-negative")
        return self

    @property
    def method(self):
        return Method.parse(self.controller.method)

    def to_dict(self):
        d = asdict(self)
        d["events"] = [{"t_us": e.t_us, "power_dbm": None if e.power_dbm <= OFF_DBM else e.power_dbm}
                       for e in self.events]
        d["controller"]["threshold_freqs_ghz"] = list(self.controller.threshold_freqs_ghz)
        return {"schema_version": SCHEMA_VERSION, **d}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported schema_version {version}")
        try:
            events = tuple(Event(float(e["t_us"]), OFF_DBM if e.get("power_dbm") is None else float(e["power_dbm"]))
                           for e in d.pop("events"))
            ctrl = dict(d.pop("controller", {}))
            if "threshold_freqs_ghz" in ctrl:
                ctrl["threshold_freqs_ghz"] = tuple(ctrl["threshold_freqs_ghz"])
            sc = cls(events=events, controller=ControllerConfig(**ctrl),
                     timing=TimingConfig(**d.pop("timing", {})), **d)
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        return sc.validate()

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def config_sha256(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def manifest(self):
        return {"tool": "rfadapt", "version": __version__, "config_sha256": self.config_sha256(),
                "seed": self.rng_seed}


def scenario(events, method="incremental", frequency_ghz=3.0, duration_us=None, board=None,
             name="scenario", **kw):
    """Shorthand: ``events`` is a list of (t_us, power_dbm or None)."""
    ev = tuple(Event(float(t), OFF_DBM if p is None else float(p)) for t, p in events)
    method = Method.parse(method)
    board = board or (FFFB if method is Method.FFFB else FEEDBACK_ONLY)
    ctrl = kw.pop("controller", ControllerConfig())
    ctrl = replace(ctrl, method=method.value)
    if duration_us is None:
        duration_us = ev[-1].t_us + 2000.0
    return Scenario(float(frequency_ghz), float(duration_us), ev, board, ctrl, name=name, **kw).validate()


# ---------------------------------------------------------------- wiring


@lru_cache(maxsize=32)
def _frontend(data, devices_json, board):
    dev = json.loads(devices_json)
    cs = load_bundled(data)
    return Frontend.from_characterization(cs, board, lna=dev.get("lna"), adc=dev.get("adc"),
                                          gate=dev.get("gate"), bias=dev.get("bias"))


@lru_cache(maxsize=32)
def _auto_thresholds(data, devices_json, freqs, neg_ratio, negneg_ratio):
    fe = _frontend(data, devices_json, FEEDBACK_ONLY)
    return choose_linearity_threshold(fe, freqs, neg_ratio=neg_ratio, negneg_ratio=negneg_ratio)


@lru_cache(maxsize=32)
def _auto_lut(data, devices_json, freq):
    return build_lut(_frontend(data, devices_json, FEEDBACK_ONLY), freq)


def build_system(sc: Scenario):
    """Frontend and controller for a scenario."""
    data = str(data_dir())
    dev = json.dumps(sc.devices, sort_keys=True)
    fe = _frontend(data, dev, sc.board)
    c = sc.controller
    if sc.method is Method.FFFB:
        ctrl = FfFbController(fe, c.tol_db, c.calibration_freq_ghz, c.interference_threshold_dbm,
                              c.near_floor_dbm, window_samples=sc.timing.window_samples,
                              near_floor_window_samples=sc.timing.fffb_near_floor_window)
        return fe, ctrl
    if c.thresholds == "auto":
        th = _auto_thresholds(data, dev, tuple(c.threshold_freqs_ghz), c.neg_ratio, c.negneg_ratio)
    else:
        th = TripleSetPointThresholds(**c.thresholds)
    lut: LutTable | None = None
    if sc.method in (Method.LUT, Method.ONE_SHOT):
        lut = load_lut(c.lut_path) if c.lut_path else _auto_lut(data, dev, c.calibration_freq_ghz)
    gate = fe.ed2_code(c.interference_threshold_dbm, VG_MIN, c.calibration_freq_ghz)
    ctrl = FeedbackController(sc.method, th, gate, lut, c.dead_band_lsb)
    ctrl.window_samples = sc.timing.window_samples
    return fe, ctrl


# ------------------------------------------------------- first-order track


class FirstOrderTrack:
    """Response of a first-order lag to a piecewise-constant target."""

    def __init__(self, tau_us, v0):
        self.tau = float(tau_us)
        self.times = [-math.inf]
        self.starts = [float(v0)]
        self.targets = [float(v0)]

    def value(self, t):
        i = bisect.bisect_right(self.times, t) - 1
        t0, v0, tgt = self.times[i], self.starts[i], self.targets[i]
        if t0 == -math.inf:
            return tgt
        return tgt + (v0 - tgt) * math.exp(-(t - t0) / self.tau)

    def step(self, t, target):
        if t < self.times[-1]:
            raise ValueError("steps must be applied in time order")
        v = self.value(t)
        self.times.append(float(t))
        self.starts.append(v)
        self.targets.append(float(target))

    def values(self, times):
        times = np.asarray(times, dtype=float)
        idx = np.searchsorted(np.asarray(self.times), times, side="right") - 1
        t0 = np.asarray(self.times)[idx]
        v0 = np.asarray(self.starts)[idx]
        tgt = np.asarray(self.targets)[idx]
        dt = np.where(np.isinf(t0), np.inf, times - np.where(np.isinf(t0), 0.0, t0))
        return tgt + (v0 - tgt) * np.exp(-dt / self.tau)


class Piecewise:
    """Right-continuous step function of time."""

    def __init__(self, v0):
        self.times = [-math.inf]
        self.values_ = [v0]

    def set(self, t, v):
        if self.values_[-1] != v:
            self.times.append(float(t))
            self.values_.append(v)

    def __call__(self, t):
        return self.values_[bisect.bisect_right(self.times, t) - 1]

    def at(self, times):
        idx = np.searchsorted(np.asarray(self.times), np.asarray(times, dtype=float), side="right") - 1
        return np.asarray(self.values_)[idx]


# ------------------------------------------------------------------ trace


@dataclass
class SampleRecord:
    t_us: float
    ed1_v: float | None
    ed2_v: float
    ed1_code: int | None
    ed2_code: int
    contaminated: bool
    action: str = ""
    settled: bool = False
    vg_cmd: float = VG_MIN


@dataclass
class Episode:
    t_us: float
    kind: str
    from_dbm: float
    to_dbm: float
    adaptation_time_us: float | None
    settled_vg: float
    n_steps: int
    overshoot_v: float
    start_vg: float


@dataclass
class SimulationTrace:
    scenario: Scenario
    columns: dict
    samples: list
    commands: list
    episodes: list
    thresholds: TripleSetPointThresholds | None
    halted: str | None = None

    @property
    def settle_times(self):
        return [s.t_us for s in self.samples if s.settled]

    def final_vg(self):
        return self.commands[-1][1] if self.commands else VG_MIN

    def vg_at(self, t):
        vg = VG_MIN
        for tc, v in self.commands:
            if tc <= t:
                vg = v
        return vg

    def energy_j(self):
        t = self.columns["t_us"]
        grid = ~self.columns["sampled"]
        if grid.sum() < 2:
            return float("nan")
        return float(np.trapezoid(self.columns["lna_power_w"][grid], t[grid]) * 1e-6)


TRACE_COLUMNS = ("t_us", "pin_dbm", "vg_cmd_v", "vg_effective_v", "ed1_v", "ed2_v", "ed1_code", "ed2_code",
                 "contaminated", "sampled", "action", "marker", "lna_gain_db", "pout_dbm", "id_ma",
                 "lna_power_w", "ig_ma")


# ------------------------------------------------------------------ engine


class _Engine:
    def __init__(self, sc: Scenario, record_grid=True):
        self.sc = sc.validate()
        self.record_grid = record_grid
        self.fe, self.ctrl = build_system(sc)
        self.f = sc.frequency_ghz
        self.fffb = sc.board == FFFB
        t = sc.timing
        self.ts = t.fffb_ts_us if self.fffb else t.ts_us
        self.tp = {Method.LUT: t.lut_tp_us, Method.ONE_SHOT: t.one_shot_tp_us}.get(sc.method, t.tp_us)
        self.t_lna = self.fe.lna.response_delay_us
        self.t_vg = self.fe.bias.settle_time_us
        self.t_ed2 = self.fe.ed2.characterization.rise_time_us
        self.t_ed1 = self.fe.ed1.characterization.rise_time_us
        self.rng = np.random.default_rng(sc.rng_seed)

        ev = sc.events
        self.pin = Piecewise(OFF_DBM if ev[0].t_us > 0 else ev[0].power_dbm)
        for e in ev:
            self.pin.set(e.t_us, e.power_dbm)
        self.vg_cmd = Piecewise(VG_MIN)  # command as issued
        self.vg_lna = Piecewise(VG_MIN)  # bias reaching the device (after T_VG)
        self.intervals2 = []  # ED2 transient windows
        self.intervals1 = []
        self.commands = [(0.0, VG_MIN)]
        self.ed2 = FirstOrderTrack(self.fe.ed2.tau_us, self._ed2_target(0.0))
        self.ed1 = FirstOrderTrack(self.fe.ed1.tau_us, self._ed1_target(0.0)) if self.fffb else None
        self.pending = []  # (time, kind) detector retargets, kept sorted
        for e in ev:
            if e.t_us > 0:
                bisect.insort(self.pending, (e.t_us + self.t_lna, 2))
                self.intervals2.append((e.t_us, e.t_us + self.t_lna + self.t_ed2))
                if self.fffb:
                    bisect.insort(self.pending, (e.t_us, 1))
                    self.intervals1.append((e.t_us, e.t_us + self.t_ed1))
        self.samples: list[SampleRecord] = []

    # static chain

    def _pin_lna_out(self, t):
        """(input power, bias) seen at the LNA output at time t."""
        return self.pin(t - self.t_lna), self.vg_lna(t - self.t_lna)

    def _ed2_target(self, t):
        p, vg = self._pin_lna_out(t)
        try:
            return float(self.fe.ed2_volts(p, vg, self.f))
        except OutOfRange as exc:
            raise ModelError(f"t={t:.3f} us: {exc}") from exc

    def _ed1_target(self, t):
        try:
            return float(self.fe.ed1_volts(self.pin(t), self.f))
        except OutOfRange as exc:
            raise ModelError(f"t={t:.3f} us: {exc}") from exc

    def _advance(self, t):
        while self.pending and self.pending[0][0] <= t:
            tt, kind = self.pending.pop(0)
            if kind == 2:
                self.ed2.step(tt, self._ed2_target(tt))
            else:
                self.ed1.step(tt, self._ed1_target(tt))

    @staticmethod
    def _active(intervals, t):
        return any(a <= t < b for a, b in intervals)

    def _code(self, v):
        code = self.fe.adc.code(v)
        if self.sc.noise_sigma_lsb > 0:
            code = int(min(max(round(code + self.rng.normal(0.0, self.sc.noise_sigma_lsb)), 0),
                           self.fe.adc.full_scale))
        return code

    def _command(self, t_c, vg):
        self.vg_cmd.set(t_c, vg)
        self.vg_lna.set(t_c + self.t_vg, vg)
        self.commands.append((t_c, vg))
        bisect.insort(self.pending, (t_c + self.t_vg + self.t_lna, 2))
        self.intervals2.append((t_c, t_c + self.t_vg + self.t_lna + self.t_ed2))

    def run(self):
        halted = None
        restart, n = 0.0, 0
        cur_vg = VG_MIN
        try:
            while True:
                ts = restart + (n + 1) * self.ts
                if ts > self.sc.duration_us + 1e-9:
                    break
                self._advance(ts)
                n += 1
                v2 = self.ed2.value(ts)
                c2 = self._code(v2)
                dirty = self._active(self.intervals2, ts)
                s1 = v1 = c1 = None
                if self.fffb:
                    v1 = self.ed1.value(ts)
                    c1 = self._code(v1)
                    dirty = dirty or self._active(self.intervals1, ts)
                    s1 = AdcSample(c1, dirty, ts)
                s2 = AdcSample(c2, dirty, ts)
                rec = SampleRecord(ts, v1, v2, c1, c2, dirty, vg_cmd=cur_vg)
                self.samples.append(rec)
                if dirty or n < self.ctrl.window(s1):
                    continue
                d = self.ctrl.decide(s1, s2) if self.fffb else self.ctrl.decide(s2)
                rec.action, rec.settled = d.action, d.settled
                restart, n = ts + self.tp, 0
                if d.vg_cmd != cur_vg:
                    if d.vg_cmd not in LATTICE:
                        raise ModelError(f"controller emitted off-lattice V_G {d.vg_cmd}")
                    self._command(restart, d.vg_cmd)
                    cur_vg = d.vg_cmd
                rec.vg_cmd = cur_vg
        except ModelError as exc:
            halted = str(exc)
        end = self.samples[-1].t_us if halted and self.samples else self.sc.duration_us
        cols = self._columns(end)
        th = getattr(self.ctrl, "th", None)
        tr = SimulationTrace(self.sc, cols, self.samples, self.commands, [], th, halted)
        tr.episodes = find_episodes(tr)
        return tr

    # trace columns

    def _columns(self, end):
        step = self.sc.timing.grid_step_us
        grid = np.arange(0.0, end + 1e-9, step) if self.record_grid else np.zeros(0)
        st = np.array([s.t_us for s in self.samples])
        t = np.concatenate([grid, st])
        sampled = np.concatenate([np.zeros(grid.size, bool), np.ones(st.size, bool)])
        order = np.argsort(t, kind="stable")
        t, sampled = t[order], sampled[order]
        g = ~sampled
        fe, f = self.fe, self.f

        pin = self.pin.at(t).astype(float)
        vg_cmd = self.vg_cmd.at(t).astype(float)
        p_dev, vg_dev = self.pin.at(t - self.t_lna).astype(float), self.vg_lna.at(t - self.t_lna).astype(float)
        lna_in = fe.lna_input(p_dev, f)
        gain = np.empty(t.size)
        pout = np.empty(t.size)
        for vg in np.unique(vg_dev):
            m = vg_dev == vg
            gain[m] = fe.lna.gain_db(vg, f)
            pout[m] = fe.lna.output(lna_in[m], vg, f)
        id_ma = np.asarray(fe.lna.drain_current_ma(vg_dev), dtype=float)
        power = fe.lna.vd * id_ma * 1e-3
        vc = self._gate_command(t)
        ig, vg_eff = self._gate(fe.lna_input(pin, f), vc)

        ed2_v = np.empty(t.size)
        ed2_v[g] = self.ed2.values(t[g]) if g.any() else []
        ed2_v[sampled] = [s.ed2_v for s in self.samples]
        ed2_code = np.empty(t.size, dtype=np.int64)
        ed2_code[g] = [fe.adc.code(v) for v in ed2_v[g]]
        ed2_code[sampled] = [s.ed2_code for s in self.samples]
        contaminated = np.array([self._active(self.intervals2, x) or
                                 (self.fffb and self._active(self.intervals1, x)) for x in t])
        contaminated[sampled] = [s.contaminated for s in self.samples]
        if self.fffb:
            ed1_v = np.empty(t.size)
            ed1_v[g] = self.ed1.values(t[g]) if g.any() else []
            ed1_v[sampled] = [s.ed1_v for s in self.samples]
            ed1_code = np.empty(t.size, dtype=np.int64)
            ed1_code[g] = [fe.adc.code(v) for v in ed1_v[g]]
            ed1_code[sampled] = [s.ed1_code for s in self.samples]
        else:
            ed1_v = np.full(t.size, np.nan)
            ed1_code = np.full(t.size, -1, dtype=np.int64)
        action = np.full(t.size, "", dtype=object)
        marker = np.full(t.size, "", dtype=object)
        action[sampled] = [s.action for s in self.samples]
        marker[sampled] = ["settle" if s.settled else "" for s in self.samples]
        for e in self.sc.events:
            i = np.searchsorted(t, e.t_us)
            if i < t.size and t[i] == e.t_us and not sampled[i]:
                marker[i] = "edge"
        vg_cmd[sampled] = [s.vg_cmd for s in self.samples]
        return dict(t_us=t, pin_dbm=pin, vg_cmd_v=vg_cmd, vg_effective_v=vg_eff, ed1_v=ed1_v, ed2_v=ed2_v,
                    ed1_code=ed1_code, ed2_code=ed2_code, contaminated=contaminated, sampled=sampled,
                    action=action, marker=marker, lna_gain_db=gain, pout_dbm=pout, id_ma=id_ma,
                    lna_power_w=power, ig_ma=ig)

    def _gate_command(self, t):
        """DPP output filtered by the bias network (quantized, first-order)."""
        bias = self.fe.bias
        out = np.full(t.size, bias.quantize(VG_MIN)[1])
        v_prev = out[0]
        for (tc, vg), nxt in zip(self.commands[1:], self.commands[2:] + [(math.inf, None)]):
            q = bias.quantize(vg)[1]
            m = (t >= tc) & (t < nxt[0])
            out[m] = q + (v_prev - q) * np.exp(-(t[m] - tc) / bias.tau_us)
            v_prev = q + (v_prev - q) * math.exp(-(nxt[0] - tc) / bias.tau_us) if nxt[0] < math.inf else q
        return out

    def _gate(self, pin, vc):
        rs = self.fe.bias.r_effective_ohm
        gate = self.fe.gate
        vg = vc.copy()
        for _ in range(60):
            nxt = vc - gate.ig_amps(pin, vg) * rs
            if np.all(np.abs(nxt - vg) < 1e-12):
                vg = nxt
                break
            vg = nxt
        bad = np.abs(vg - (vc - gate.ig_amps(pin, vg) * rs)) > 1e-9
        for i in np.flatnonzero(bad):
            vg[i] = gate.solve(pin[i], vc[i], rs)[1]
        return gate.ig_amps(pin, vg) * 1e3, vg


def run(sc: Scenario, record_grid=True) -> SimulationTrace:
    return _Engine(sc, record_grid).run()


# ---------------------------------------------------------------- episodes


def _present(sc: Scenario, p):
    return p > sc.controller.interference_threshold_dbm


def find_episodes(tr: SimulationTrace):
    sc = tr.scenario
    events = list(sc.events)
    out = []
    prev = OFF_DBM if events[0].t_us > 0 else None
    for i, e in enumerate(events):
        end = events[i + 1].t_us if i + 1 < len(events) else sc.duration_us
        if prev is None:
            prev = e.power_dbm
            if not _present(sc, e.power_dbm):
                continue
            kind = "appearance"
            prev = OFF_DBM
        else:
            a, b = _present(sc, prev), _present(sc, e.power_dbm)
            if not a and not b:
                prev = e.power_dbm
                continue
            kind = ("appearance" if b and not a else "disappearance" if a and not b
                    else "increase" if e.power_dbm > prev else "decrease")
        marks = [s for s in tr.samples if e.t_us <= s.t_us < end and s.settled]
        start_vg = tr.vg_at(e.t_us)
        cmds = [v for t, v in tr.commands if e.t_us <= t < end]
        settled_vg = tr.vg_at(end - 1e-9)
        t_adapt = marks[-1].t_us - e.t_us if marks else None
        over = max([start_vg] + cmds) - settled_vg if kind in ("appearance", "increase") else 0.0
        out.append(Episode(e.t_us, kind, prev, e.power_dbm, t_adapt, settled_vg, len(cmds),
                           round(max(over, 0.0), 6) if cmds else 0.0, start_vg))
        prev = e.power_dbm
    return out


def measure_adaptation_time(tr: SimulationTrace, event_time):
    for ep in tr.episodes:
        if ep.t_us == event_time:
            if ep.adaptation_time_us is None:
                raise NoAdaptation(f"no settled adaptation after t={event_time} us")
            return ep.adaptation_time_us
    raise NoAdaptation(f"no adaptation episode starts at t={event_time} us")


def mean_time(tr: SimulationTrace, kind):
    xs = [e.adaptation_time_us for e in tr.episodes if e.kind == kind and e.adaptation_time_us is not None]
    return float(np.mean(xs)) if xs else None


# ------------------------------------------------------------------- output


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return "" if x < 0 else str(int(x))
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else f"{x:.6f}"
    return str(x)


def trace_csv(tr: SimulationTrace) -> str:
    buf = io.StringIO()
    buf.write("# manifest " + json.dumps(tr.scenario.manifest(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    cols = [tr.columns[c] for c in TRACE_COLUMNS]
    for row in zip(*cols):
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def summary(tr: SimulationTrace) -> dict:
    sc = tr.scenario
    eps = [asdict(e) for e in tr.episodes]
    for e in eps:
        for k in ("from_dbm", "to_dbm"):
            e[k] = None if e[k] <= OFF_DBM else e[k]
    times = {k: mean_time(tr, k) for k in ("appearance", "increase", "decrease", "disappearance")}
    return {
        "manifest": sc.manifest(),
        "scenario": sc.name,
        "method": sc.method.value,
        "board": sc.board,
        "frequency_ghz": sc.frequency_ghz,
        "thresholds": asdict(tr.thresholds) if tr.thresholds else None,
        "mean_adaptation_time_us": times,
        "episodes": eps,
        "final_vg": tr.final_vg(),
        "energy_j": tr.energy_j() if tr.columns["t_us"].size else None,
        "n_samples": len(tr.samples),
        "n_decisions": sum(1 for s in tr.samples if s.action),
        "halted": tr.halted,
    }


def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def write_outputs(tr: SimulationTrace, out_dir, stem=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or tr.scenario.name
    _atomic_write(out / f"{stem}_trace.csv", trace_csv(tr))
    s = summary(tr)
    _atomic_write(out / f"{stem}_summary.json", json.dumps(_jsonable(s), indent=2, sort_keys=True) + "\n")
    return out / f"{stem}_trace.csv", out / f"{stem}_summary.json"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) else round(x, 9)
    if isinstance(x, np.integer):
        return int(x)
    return x


# ---------------------------------------------------------------- scenarios


FIG17_SEQUENCE_DBM = (-9.5, -22.5, -6.5, -22.5, -4.5, -22.5, -2.5, -22.5, -1.0, -22.5, 0.0, -22.5)


def fig17_scenario(method, frequency_ghz=3.0, dwell_us=2000.0, **kw):
    events = [(0.0, -22.5)] + [((i + 1) * dwell_us, p) for i, p in enumerate(FIG17_SEQUENCE_DBM)]
    return scenario(events, method, frequency_ghz, duration_us=(len(events)) * dwell_us,
                    name=f"fig17_{Method.parse(method).value}", **kw)


def fig20_scenario(frequency_ghz=3.0, **kw):
    events = [(0.0, -22.5), (2000.0, -5.5), (4000.0, -2.5), (6000.0, None)]
    return scenario(events, "fffb", frequency_ghz, duration_us=8000.0, name="fig20_fffb", **kw)


def staircase_scenario(method="lut", frequency_ghz=3.0, lo=-12.5, hi=-0.5, dwell_us=1000.0, **kw):
    up = [lo + i for i in range(int(round(hi - lo)) + 1)]
    levels = [-22.5] + up + up[-2::-1]
    events = [(i * dwell_us, p) for i, p in enumerate(levels)]
    return scenario(events, method, frequency_ghz, duration_us=len(levels) * dwell_us,
                    name=f"staircase_{Method.parse(method).value}", **kw)


def single_step_scenario(power_dbm, method, frequency_ghz=3.0, t_on_us=500.0, hold_us=2500.0, **kw):
    return scenario([(0.0, -22.5), (t_on_us, power_dbm)], method, frequency_ghz,
                    duration_us=t_on_us + hold_us, name=f"step_{Method.parse(method).value}", **kw)


# ------------------------------------------------------------------ sweeps


@dataclass(frozen=True)
class SettledPoint:
    pin_dbm: float
    settled_vg: float
    expected_vg: float


SWEEP_POWERS_DBM = tuple(round(-12.5 + i, 1) for i in range(14))


def settled_vg_sweep(method, frequency_ghz=3.0, powers=SWEEP_POWERS_DBM, **kw):
    """Settled V_G after a single floor -> P_in step, against the lowest linear lattice V_G."""
    out = []
    for p in powers:
        sc = single_step_scenario(p, method, frequency_ghz, **kw)
        tr = run(sc, record_grid=False)
        fe, _ = build_system(sc)
        out.append(SettledPoint(float(p), tr.final_vg(), fe.expected_vg(p, frequency_ghz)))
    return out


def compare_adaptive_vs_nominal(levels=SWEEP_POWERS_DBM, frequency_ghz=3.0, method="lut", nominal_vg=-2.4,
                                tone_offset_db=3.0, **kw):
    """Power, IM3 compression and gain compression with adaptive vs fixed nominal bias.

    Each level is the total two-tone power; each tone sits ``tone_offset_db`` below it.
    """
    rows = []
    for level, pt in zip(levels, settled_vg_sweep(method, frequency_ghz, levels, **kw)):
        sc = single_step_scenario(level, method, frequency_ghz, **kw)
        fe, _ = build_system(sc)
        lna = fe.lna
        tone = level - tone_offset_db
        row = {"level_dbm": float(level)}
        for tag, vg in (("adaptive", pt.settled_vg), ("nominal", nominal_vg)):
            row[f"{tag}_vg"] = vg
            row[f"{tag}_power_w"] = float(lna.power_w(vg))
            row[f"{tag}_im3_compression_dbc"] = float(lna.im3_compression_dbc(tone, vg, frequency_ghz))
            row[f"{tag}_gain_compression_db"] = float(lna.compression_db(level, vg, frequency_ghz))
        rows.append(row)
    return rows
