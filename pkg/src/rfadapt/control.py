"""Bias adaptation controllers.

The step functions (``incremental_step``, ``lut_step``, ``one_shot_step``,
``fffb_step``) are pure: they map a state, a sample and tables to an
action. The controller classes wrap them with the bookkeeping a receiver
needs across decisions (reference samples, settle markers, the
interference gate).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .devices import AdcSample
from .errors import (AtBound, ContaminatedSample, InvariantViolation, LutMiss,
                     ParseError, SensitivityFloor)
from .frontend import FEEDBACK_ONLY, LATTICE, VG_MAX, VG_MIN, VG_STEP, Frontend, snap

log = logging.getLogger(__name__)


class Mode(str, Enum):
    IDLE = "Idle"
    INCREMENTING = "Incrementing"
    DECREMENTING = "Decrementing"
    SETTLED = "Settled"


class Method(str, Enum):
    INCREMENTAL = "incremental"
    LUT = "lut"
    ONE_SHOT = "one_shot"
    FFFB = "fffb"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("-", "_").replace("+", "_")
        aliases = {"oneshot": "one_shot", "one_shot_incremental": "one_shot", "ff_fb": "fffb"}
        return cls(aliases.get(key, key))


class Action(str, Enum):
    INC = "IncVg"
    DEC = "DecVg"
    HOLD = "Hold"
    REVERT = "RevertToPrev"


@dataclass(frozen=True)
class TripleSetPointThresholds:
    th_pos: float
    th_neg: float
    th_negneg: float

    def __post_init__(self):
        if not self.th_negneg < self.th_neg < 0 < self.th_pos:
            raise ValueError(f"need --Th < -Th < 0 < +Th, got {self.th_negneg}, {self.th_neg}, {self.th_pos}")

    @classmethod
    def from_positive(cls, th_pos, neg_ratio=0.5, negneg_ratio=1.5):
        return cls(float(th_pos), -neg_ratio * th_pos, -negneg_ratio * th_pos)


@dataclass(frozen=True)
class ControllerState:
    mode: Mode = Mode.IDLE
    vg_cmd: float = VG_MIN
    vg_prev: float = VG_MIN
    ref_sample: int | None = None
    cur_sample: int | None = None
    err: int = 0
    method: Method = Method.INCREMENTAL

    def __post_init__(self):
        for v in (self.vg_cmd, self.vg_prev):
            if v not in LATTICE:
                raise InvariantViolation(f"V_G {v} is not on the 0.1 V lattice")


@dataclass(frozen=True)
class StepResult:
    action: Action
    vg_next: float
    err: int
    at_bound: bool = False


def _clamped(vg, delta):
    nxt = round(vg + delta, 1)
    if nxt > VG_MAX or nxt < VG_MIN:
        return snap(vg), True
    return nxt, False


def incremental_step(state: ControllerState, sample: AdcSample, th: TripleSetPointThresholds,
                     strict=False) -> StepResult:
    """Triple set-point decision for one uncontaminated sample."""
    if sample.contaminated:
        raise ContaminatedSample(f"sample at t={sample.t_us} us is contaminated")
    if state.ref_sample is None:
        raise ValueError("no reference sample")
    err = int(sample.code) - int(state.ref_sample)
    d = round(state.vg_cmd - state.vg_prev, 1)
    if d == 0:
        action = Action.INC if err > th.th_pos else Action.DEC if err < th.th_neg else Action.HOLD
    elif d > 0:
        # no relief beyond +Th: the last increment removed the compression
        action = Action.INC if err > th.th_pos else Action.HOLD
    else:
        if err < th.th_negneg:
            action = Action.REVERT
        elif err < th.th_neg:
            action = Action.DEC
        else:
            action = Action.HOLD  # unspecified band between -Th and 0
    if action is Action.INC:
        nxt, bound = _clamped(state.vg_cmd, VG_STEP)
    elif action is Action.DEC:
        nxt, bound = _clamped(state.vg_cmd, -VG_STEP)
    elif action is Action.REVERT:
        nxt, bound = state.vg_prev, False
    else:
        nxt, bound = state.vg_cmd, False
    if bound and strict:
        raise AtBound(f"{action.value} at {state.vg_cmd} V")
    return StepResult(action, nxt, err, bound)


# ------------------------------------------------------------------ LUT


@dataclass(frozen=True)
class LutBin:
    code_lo: int
    code_hi: int
    vg_target: float
    p1db_in: float


@dataclass(frozen=True)
class LutTable:
    rows: dict
    calibration_freq_ghz: float = 3.0

    def __post_init__(self):
        for vg, bins in self.rows.items():
            if vg not in LATTICE:
                raise InvariantViolation(f"LUT row {vg} V is not on the lattice")
            for a, b in zip(bins, bins[1:]):
                if b.code_lo != a.code_hi + 1:
                    raise InvariantViolation(f"LUT row {vg} V: bins {a} and {b} overlap or leave a gap")
                if b.vg_target < a.vg_target:
                    raise InvariantViolation(f"LUT row {vg} V: target decreases with code")
            for b in bins:
                if b.code_hi < b.code_lo or b.vg_target not in LATTICE:
                    raise InvariantViolation(f"LUT row {vg} V: bad bin {b}")

    def lookup(self, vg, code) -> LutBin:
        bins = self.rows.get(snap(vg))
        if not bins:
            raise LutMiss(f"no LUT row for V_G={vg}")
        idx = np.searchsorted([b.code_hi for b in bins], code)
        if code < bins[0].code_lo or idx >= len(bins):
            raise LutMiss(f"code {code} outside LUT row {vg} V")
        return bins[idx]

    def self_bin(self, vg):
        for b in self.rows.get(snap(vg), ()):
            if b.vg_target == snap(vg):
                return b
        return None

    def underestimating(self, steps=1):
        """Copy with every target lowered by ``steps`` lattice steps (merging equal neighbours)."""
        rows = {}
        for vg, bins in self.rows.items():
            out = []
            for b in bins:
                t = max(round(b.vg_target - steps * VG_STEP, 1), VG_MIN)
                if out and out[-1].vg_target == t:
                    out[-1] = replace(out[-1], code_hi=b.code_hi)
                else:
                    p1 = next((x.p1db_in for x in bins if x.vg_target == t), b.p1db_in)
                    out.append(LutBin(b.code_lo, b.code_hi, t, p1))
            rows[vg] = tuple(out)
        return LutTable(rows, self.calibration_freq_ghz)


def build_lut(frontend: Frontend, freq_ghz=3.0) -> LutTable:
    """Map (current V_G, ED2 code) to the lowest V_G whose P1dB,IN covers the input.

    Bin edges are the ED2 codes produced, at the current bias, by inputs
    sitting exactly at each lattice point's P1dB,IN.
    """
    fe = frontend.with_board(FEEDBACK_ONLY)
    top = fe.adc.full_scale
    rows = {}
    for vg in LATTICE:
        bins, lo = [], 0
        for i, t in enumerate(LATTICE):
            p1 = float(fe.lna.p1db_in(t, freq_ghz))
            hi = top if i == len(LATTICE) - 1 else fe.ed2_code(p1, vg, freq_ghz)
            if hi < lo:
                continue
            bins.append(LutBin(lo, int(hi), t, p1))
            lo = int(hi) + 1
        rows[vg] = tuple(bins)
    return LutTable(rows, float(freq_ghz))


LUT_COLUMNS = ("vg_current_v", "code_lo", "code_hi", "vg_target_v", "p1db_in_dbm")


def write_lut(lut: LutTable, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# calibration_freq_ghz={lut.calibration_freq_ghz!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LUT_COLUMNS)
        for vg in sorted(lut.rows):
            for b in lut.rows[vg]:
                w.writerow([repr(vg), b.code_lo, b.code_hi, repr(b.vg_target), repr(b.p1db_in)])


def load_lut(path) -> LutTable:
    path = Path(path)
    freq = 3.0
    rows: dict = {}
    lines = path.read_text(encoding="utf-8").splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "calibration_freq_ghz":
                freq = float(val)
        elif line.strip():
            body.append(line)
    if not body:
        raise ParseError(f"{path}: empty LUT")
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != LUT_COLUMNS:
        raise ParseError(f"{path}: expected columns {LUT_COLUMNS}")
    try:
        for r in reader:
            vg = snap(float(r["vg_current_v"]))
            rows.setdefault(vg, []).append(LutBin(int(r["code_lo"]), int(r["code_hi"]),
                                                  snap(float(r["vg_target_v"])), float(r["p1db_in_dbm"])))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return LutTable({k: tuple(sorted(v, key=lambda b: b.code_lo)) for k, v in rows.items()}, freq)


def lut_step(state: ControllerState, sample: AdcSample, lut: LutTable) -> float:
    if sample.contaminated:
        raise ContaminatedSample(f"sample at t={sample.t_us} us is contaminated")
    try:
        return lut.lookup(state.vg_cmd, sample.code).vg_target
    except LutMiss as exc:
        log.warning("%s; falling back to %.1f V", exc, VG_MAX)
        return VG_MAX


def one_shot_step(state: ControllerState, sample: AdcSample, one_shot_table: LutTable,
                  th: TripleSetPointThresholds) -> StepResult:
    """Rough jump from an idle or freshly triggered state, else triple set-point refinement."""
    if state.mode in (Mode.IDLE,) or state.ref_sample is None:
        rough = lut_step(state, sample, one_shot_table)
        if rough != state.vg_cmd:
            err = 0 if state.ref_sample is None else int(sample.code) - int(state.ref_sample)
            return StepResult(Action.INC if rough > state.vg_cmd else Action.DEC, rough, err)
    return incremental_step(state, sample, th)


# --------------------------------------------------------------- FF + FB


def measured_gain_db(frontend: Frontend, ed1_code, ed2_code, freq_ghz):
    return frontend.output_power_from_code(ed2_code, freq_ghz) - frontend.input_power_from_code(ed1_code, freq_ghz)


def fffb_step(ed1_sample: AdcSample, ed2_sample: AdcSample, expected_gain, tol,
              frontend: Frontend, vg, freq_ghz=3.0, probe=False) -> Action:
    """Spatial linearity check: compare measured gain with the expected small-signal gain."""
    if ed1_sample.contaminated or ed2_sample.contaminated:
        raise ContaminatedSample("ED1/ED2 sample pair is contaminated")
    if ed1_sample.code <= frontend.ed1_floor_code(freq_ghz):
        raise SensitivityFloor("input below the ED1 sensitivity floor")
    gain = measured_gain_db(frontend, ed1_sample.code, ed2_sample.code, freq_ghz)
    if expected_gain - gain > tol:
        return Action.INC
    if probe and vg > VG_MIN:
        return Action.DEC
    return Action.HOLD


# ------------------------------------------------------------ thresholds


@dataclass(frozen=True)
class DeterminingStep:
    freq_ghz: float
    pin_dbm: float
    vg: float
    step: int


SWEEP_POWERS_DBM = tuple(round(-12.5 + i, 1) for i in range(14))


def determining_steps(frontend: Frontend, freqs=(2.5, 2.75, 3.0), powers=SWEEP_POWERS_DBM):
    """ED2 code change across the V_G step that crosses P1dB,IN, per (frequency, power)."""
    fe = frontend.with_board(FEEDBACK_ONLY)
    out = []
    for f in freqs:
        for p in powers:
            vg = fe.expected_vg(p, f)
            if vg == VG_MIN or fe.lna.p1db_in(vg, f) < p:
                continue
            step = fe.ed2_code(p, vg, f) - fe.ed2_code(p, round(vg - VG_STEP, 1), f)
            out.append(DeterminingStep(float(f), float(p), vg, int(step)))
    return out


def choose_linearity_threshold(frontend: Frontend, freqs=(2.5, 2.75, 3.0), powers=SWEEP_POWERS_DBM,
                               neg_ratio=0.5, negneg_ratio=1.5) -> TripleSetPointThresholds:
    steps = [s.step for s in determining_steps(frontend, freqs, powers) if s.step > 0]
    if not steps:
        raise ValueError("no determining step in the requested range")
    return TripleSetPointThresholds.from_positive(min(steps), neg_ratio, negneg_ratio)


# ------------------------------------------------------------ controllers


@dataclass(frozen=True)
class Decision:
    action: str
    vg_cmd: float
    settled: bool = False
    err: int | None = None


class FeedbackController:
    """Output-only (temporal) controller: incremental, LUT or one-shot + incremental."""

    window_samples = 2

    def __init__(self, method, thresholds: TripleSetPointThresholds | None = None, gate_code=0,
                 lut: LutTable | None = None, dead_band_lsb=8):
        self.method = Method.parse(method)
        if self.method is Method.FFFB:
            raise ValueError("use FfFbController for the feedforward + feedback board")
        if self.method in (Method.INCREMENTAL, Method.ONE_SHOT) and thresholds is None:
            raise ValueError("thresholds required")
        if self.method in (Method.LUT, Method.ONE_SHOT) and lut is None:
            raise ValueError("LUT required")
        self.th = thresholds
        self.gate_code = int(gate_code)
        self.lut = lut
        self.one_shot = lut.underestimating(1) if lut is not None else None
        self.dead_band = int(dead_band_lsb)
        self.reset()

    def reset(self, vg=VG_MIN):
        self.state = ControllerState(vg_cmd=vg, vg_prev=vg, method=self.method)
        self._needs_ref = False
        self._reversal_pending = False

    def window(self, *_):
        return self.window_samples

    def _set(self, **kw):
        self.state = replace(self.state, **kw)

    def decide(self, sample: AdcSample) -> Decision:
        if sample.contaminated:
            raise ContaminatedSample(f"sample at t={sample.t_us} us is contaminated")
        self._set(cur_sample=int(sample.code))
        if sample.code <= self.gate_code:
            return self._idle(sample)
        if self._needs_ref:
            self._needs_ref = False
            self._set(ref_sample=int(sample.code), vg_prev=self.state.vg_cmd, mode=Mode.SETTLED)
            return Decision(Action.HOLD.value, self.state.vg_cmd, settled=True)
        if self.method is Method.LUT:
            return self._lut(sample)
        if self.method is Method.ONE_SHOT:
            return self._one_shot(sample)
        return self._incremental(sample)

    def _idle(self, sample):
        st = self.state
        if st.vg_cmd != VG_MIN:
            self._set(vg_prev=st.vg_cmd, vg_cmd=VG_MIN, mode=Mode.DECREMENTING, ref_sample=int(sample.code))
            return Decision("LowPower", VG_MIN)
        settled = st.mode is not Mode.IDLE
        self._set(vg_prev=VG_MIN, mode=Mode.IDLE, ref_sample=int(sample.code), err=0)
        return Decision(Action.HOLD.value if settled else "Idle", VG_MIN, settled=settled)

    def _probe(self, sample):
        st = self.state
        nxt, bound = _clamped(st.vg_cmd, VG_STEP)
        self._set(vg_prev=st.vg_cmd, vg_cmd=nxt, ref_sample=int(sample.code), mode=Mode.INCREMENTING)
        return Decision(Action.HOLD.value if bound else Action.INC.value, nxt)

    def _apply(self, r: StepResult, sample):
        st = self.state
        code = int(sample.code)
        same = st.vg_cmd == st.vg_prev
        if r.action is Action.REVERT:
            self._set(vg_prev=r.vg_next, vg_cmd=r.vg_next, ref_sample=None, err=r.err, mode=Mode.DECREMENTING)
            self._needs_ref = True
            return Decision(r.action.value, r.vg_next, err=r.err)
        if r.action is Action.HOLD or r.at_bound:
            if same and st.mode is not Mode.IDLE:
                settled = st.mode is not Mode.SETTLED
                self._set(ref_sample=code, err=r.err, mode=Mode.SETTLED)
                return Decision(Action.HOLD.value, st.vg_cmd, settled=settled, err=r.err)
            mode = st.mode if st.mode is not Mode.IDLE else Mode.INCREMENTING
            self._set(vg_prev=st.vg_cmd, ref_sample=code, err=r.err, mode=mode)
            return Decision(Action.HOLD.value, st.vg_cmd, err=r.err)
        mode = Mode.INCREMENTING if r.action is Action.INC else Mode.DECREMENTING
        self._set(vg_prev=st.vg_cmd, vg_cmd=r.vg_next, ref_sample=code, err=r.err, mode=mode)
        return Decision(r.action.value, r.vg_next, err=r.err)

    def _incremental(self, sample):
        if self.state.ref_sample is None:
            return self._probe(sample)
        return self._apply(incremental_step(self.state, sample, self.th), sample)

    def _lut(self, sample):
        st = self.state
        code = int(sample.code)
        if st.mode is Mode.SETTLED and st.ref_sample is not None and abs(code - st.ref_sample) <= self.dead_band:
            # within ADC variation of the reading the bias settled on
            return Decision(Action.HOLD.value, st.vg_cmd, err=code - st.ref_sample)
        target = lut_step(st, sample, self.lut)
        if target == st.vg_prev != st.vg_cmd and st.mode is not Mode.SETTLED:
            # undoing the last jump: the first clean sample can still carry detector
            # residue, so wait for a second reading and require it to clear the edge
            if not self._reversal_pending:
                self._reversal_pending = True
                return Decision(Action.HOLD.value, st.vg_cmd)
            own = self.lut.self_bin(st.vg_cmd)
            if own is not None and own.code_lo - self.dead_band <= code <= own.code_hi + self.dead_band:
                target = st.vg_cmd
        self._reversal_pending = False
        if target == st.vg_cmd:
            settled = st.mode is not Mode.SETTLED
            if settled:
                self._set(vg_prev=st.vg_cmd, ref_sample=code, mode=Mode.SETTLED)
            return Decision(Action.HOLD.value, st.vg_cmd, settled=settled)
        mode = Mode.INCREMENTING if target > st.vg_cmd else Mode.DECREMENTING
        self._set(vg_prev=st.vg_cmd, vg_cmd=target, ref_sample=code, mode=mode)
        return Decision("Jump", target)

    def _rough(self, sample):
        st = self.state
        rough = lut_step(st, sample, self.one_shot)
        if rough > st.vg_cmd:
            self._set(vg_prev=st.vg_cmd, vg_cmd=rough, ref_sample=int(sample.code), mode=Mode.INCREMENTING)
            return Decision("OneShot", rough)
        if rough < st.vg_cmd:
            # land below, then probe upward from a fresh reference
            self._set(vg_prev=rough, vg_cmd=rough, ref_sample=None, mode=Mode.DECREMENTING)
            return Decision("OneShot", rough)
        return self._incremental(sample)

    def _one_shot(self, sample):
        st = self.state
        if st.mode is Mode.IDLE:
            return self._rough(sample)
        if st.ref_sample is None:
            return self._probe(sample)
        if st.mode is Mode.SETTLED:
            r = incremental_step(st, sample, self.th)
            if r.action is Action.INC and not r.at_bound:
                return self._rough(sample)
            if r.action is Action.DEC and not r.at_bound:
                rough = lut_step(st, sample, self.one_shot)
                if rough < st.vg_cmd:
                    return self._rough(sample)
                self._set(ref_sample=int(sample.code))
                return Decision(Action.HOLD.value, st.vg_cmd, err=r.err)
            return self._apply(r, sample)
        return self._incremental(sample)


class FfFbController:
    """Feedforward + feedback (spatial) controller: measured vs expected gain."""

    method = Method.FFFB

    def __init__(self, frontend: Frontend, tol_db=1.0, calibration_freq_ghz=3.0,
                 interference_threshold_dbm=-12.5, near_floor_dbm=-23.0, probe_db=0.5,
                 window_samples=2, near_floor_window_samples=4):
        self.fe = frontend
        self.tol = float(tol_db)
        self.fcal = float(calibration_freq_ghz)
        self.threshold = float(interference_threshold_dbm)
        self.near_floor_dbm = float(near_floor_dbm)
        self.probe_db = float(probe_db)
        self.window_samples = int(window_samples)
        self.near_floor_window_samples = int(near_floor_window_samples)
        self.floor_code = frontend.ed1_floor_code(self.fcal)
        self.reset()

    def reset(self, vg=VG_MIN):
        self.state = ControllerState(vg_cmd=vg, vg_prev=vg, method=Method.FFFB)
        self.settled_pin = None
        self.probing = False

    def input_dbm(self, ed1_code):
        if ed1_code <= self.floor_code:
            return None
        return float(self.fe.input_power_from_code(ed1_code, self.fcal))

    def ed1_input_dbm(self, ed1_code):
        """Power at the ED1 port implied by a code, or None at the floor."""
        if ed1_code <= self.floor_code:
            return None
        return float(self.fe.ed1.pin_for(self.fe.adc.volts(ed1_code), self.fcal))

    def window(self, ed1_sample: AdcSample | None = None, *_):
        """ADC samples per decision; doubled while ED1 sits near its floor."""
        if ed1_sample is None:
            return self.window_samples
        p = self.ed1_input_dbm(ed1_sample.code)
        if p is None or p < self.near_floor_dbm:
            return self.near_floor_window_samples
        return self.window_samples

    def _set(self, **kw):
        self.state = replace(self.state, **kw)

    def decide(self, ed1: AdcSample, ed2: AdcSample) -> Decision:
        if ed1.contaminated or ed2.contaminated:
            raise ContaminatedSample("ED1/ED2 sample pair is contaminated")
        st = self.state
        pin = self.input_dbm(ed1.code)
        self._set(cur_sample=int(ed2.code))
        if pin is None or pin <= self.threshold:
            self.probing = False
            if st.vg_cmd != VG_MIN:
                self._set(vg_prev=st.vg_cmd, vg_cmd=VG_MIN, mode=Mode.DECREMENTING)
                return Decision("LowPower", VG_MIN)
            settled = st.mode is not Mode.IDLE
            self._set(vg_prev=VG_MIN, mode=Mode.IDLE)
            self.settled_pin = None
            return Decision(Action.HOLD.value if settled else "Idle", VG_MIN, settled=settled)
        if st.mode is Mode.SETTLED and self.settled_pin is not None and pin < self.settled_pin - self.probe_db:
            self.probing = True
        expected = float(self.fe.lna.gain_db(st.vg_cmd, self.fcal))
        action = fffb_step(ed1, ed2, expected, self.tol, self.fe, st.vg_cmd, self.fcal, probe=self.probing)
        if action is Action.INC:
            nxt, bound = _clamped(st.vg_cmd, VG_STEP)
            if self.probing:
                self.probing = False  # the probe went one step too far: step back and stay
            if not bound:
                self._set(vg_prev=st.vg_cmd, vg_cmd=nxt, mode=Mode.INCREMENTING)
                return Decision(Action.INC.value, nxt)
        elif action is Action.DEC:
            nxt = round(st.vg_cmd - VG_STEP, 1)
            self._set(vg_prev=st.vg_cmd, vg_cmd=nxt, mode=Mode.DECREMENTING)
            self.settled_pin = pin
            return Decision(Action.DEC.value, nxt)
        settled = st.mode is not Mode.SETTLED
        self._set(vg_prev=st.vg_cmd, mode=Mode.SETTLED)
        if settled or self.settled_pin is None or pin > self.settled_pin:
            self.settled_pin = pin
        return Decision(Action.HOLD.value, st.vg_cmd, settled=settled)
