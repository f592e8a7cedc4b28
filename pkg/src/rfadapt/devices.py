"""Behavioral models of the receive chain and its bias circuitry.

All models are frozen dataclasses over immutable parameters; time-dependent
behavior is expressed through explicit closed-form trajectories so that a
caller can evaluate any instant without integrating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .characterization import (CouplerCharacterization, EdCharacterization,
                               LnaCharacterization)
from .errors import NonConvergence, OutOfRange, SaturationError

LN10 = math.log(10.0)
DB_PER_NEPER_POWER = 10.0 / LN10


def _db_softplus(u_db):
    """10*log10(1 + 10**(u/10)) without overflow."""
    return DB_PER_NEPER_POWER * np.logaddexp(0.0, np.asarray(u_db, dtype=float) / DB_PER_NEPER_POWER)


def knee_offset_db(sharpness, slope):
    """Distance from the knee to the 1 dB point so compression is exactly 1 dB there."""
    return (10.0 / sharpness) * math.log10(10.0 ** (sharpness / (10.0 * (1.0 - slope))) - 1.0)


def compression_db(pin, p1db_in, sharpness=4.0, slope=0.25):
    """Gain compression (dB) of the soft-knee law at input ``pin``.

    ``sharpness`` plays the role of Rapp's 2p; ``slope`` is the residual
    large-signal dB/dB output slope (0 gives a hard-saturating Rapp curve).
    Compression is exactly 1 dB at ``pin == p1db_in``.
    """
    knee = np.asarray(p1db_in) - knee_offset_db(sharpness, slope)
    comp = (1.0 - slope) / sharpness * _db_softplus(sharpness * (np.asarray(pin) - knee))
    return float(comp) if np.ndim(comp) == 0 else comp


@dataclass(frozen=True)
class LnaModel:
    characterization: LnaCharacterization
    vd: float = 10.0
    compression_knee_sharpness: float = 4.0
    large_signal_slope: float = 0.25
    oip3_dbm: float = 30.0  # at the nominal bias point below
    nominal_vg: float = -2.4
    nominal_freq_ghz: float = 3.0
    response_delay_us: float = 1.0
    max_pin_dbm: float = 30.0

    def _check_pin(self, pin):
        if np.any(np.asarray(pin) > self.max_pin_dbm):
            raise OutOfRange(f"input power {pin} dBm exceeds the {self.max_pin_dbm} dBm rating")

    def gain_db(self, vg, f):
        return self.characterization.gain(f, vg, self.vd)

    def p1db_in(self, vg, f):
        return self.characterization.p1db_in(f, vg)

    def compression_db(self, pin, vg, f):
        self._check_pin(pin)
        return compression_db(pin, self.p1db_in(vg, f), self.compression_knee_sharpness,
                              self.large_signal_slope)

    def output(self, pin, vg, f):
        """Output power (dBm) for input ``pin`` at bias ``vg`` and frequency ``f``."""
        return pin + self.gain_db(vg, f) - self.compression_db(pin, vg, f)

    def drain_current_ma(self, vg):
        return self.characterization.id_ma(vg, self.vd)

    def power_w(self, vg):
        return self.vd * self.drain_current_ma(vg) * 1e-3

    # -- two-tone ---------------------------------------------------------

    @property
    def oip3_offset_db(self):
        """OIP3 minus output P1dB, held fixed across bias points."""
        p1_out = (self.p1db_in(self.nominal_vg, self.nominal_freq_ghz)
                  + self.gain_db(self.nominal_vg, self.nominal_freq_ghz) - 1.0)
        return self.oip3_dbm - p1_out

    def oip3(self, vg, f):
        return self.p1db_in(vg, f) + self.gain_db(vg, f) - 1.0 + self.oip3_offset_db

    def iip3(self, vg, f):
        return self.oip3(vg, f) - self.gain_db(vg, f)

    def two_tone(self, pin_per_tone, vg, f, tone_spacing_mhz=1.0):
        """Return (fundamental per tone, IM3 product) output levels in dBm.

        Memoryless cubic y = a1*x + a3*x**3 with a3 set by OIP3: the IM3
        product is 3*P_ss - 2*OIP3 where P_ss is the linear tone output. The
        fundamental carries the large-signal compression evaluated at the
        two-tone total input power. ``tone_spacing_mhz`` is accepted for
        interface completeness; the model is memoryless.
        """
        del tone_spacing_mhz
        iip3 = self.iip3(vg, f)
        if np.any(np.asarray(pin_per_tone) >= iip3):
            raise OutOfRange(f"tone power {pin_per_tone} dBm at or above IIP3 {iip3:.2f} dBm")
        g = self.gain_db(vg, f)
        p_ss = pin_per_tone + g
        total = pin_per_tone + 10.0 * math.log10(2.0)
        fund = p_ss - self.compression_db(total, vg, f)
        im3 = 3.0 * p_ss - 2.0 * self.oip3(vg, f)
        return fund, im3

    def im3_two_tone(self, pin_per_tone, vg, f, tone_spacing_mhz=1.0):
        return self.two_tone(pin_per_tone, vg, f, tone_spacing_mhz)[1]

    def im3_compression_dbc(self, pin_per_tone, vg, f):
        fund, im3 = self.two_tone(pin_per_tone, vg, f)
        return fund - im3


def lna_output(model: LnaModel, pin, vg, f):
    return model.output(pin, vg, f)


def lna_im3_two_tone(model: LnaModel, pin_per_tone, vg, f, tone_spacing_mhz=1.0):
    return model.im3_two_tone(pin_per_tone, vg, f, tone_spacing_mhz)


# ------------------------------------------------------------- gate current


def rf_peak_volts(pin_dbm, impedance_ohm=50.0):
    return np.sqrt(2.0 * impedance_ohm * 1e-3 * 10.0 ** (np.asarray(pin_dbm) / 10.0))


@dataclass(frozen=True)
class GateCurrentModel:
    """Schottky gate diode driven by the rectified RF swing.

    Below ``turn_on_pin`` the gate sources a small leakage (negative I_G);
    above it the diode conducts and I_G rises exponentially.
    """

    leakage_ua: float = -20.0
    saturation_current_a: float = 20e-6
    ideality: float = 23.0
    turn_on_pin_dbm: float = 20.0
    vg_ref: float = -2.5
    thermal_voltage: float = 0.025852
    impedance_ohm: float = 50.0
    vg_floor: float = -20.0

    def ig_amps(self, pin, vg):
        drive = (rf_peak_volts(pin, self.impedance_ohm) - rf_peak_volts(self.turn_on_pin_dbm, self.impedance_ohm)
                 + (vg - self.vg_ref))
        x = np.minimum(drive / (self.ideality * self.thermal_voltage), 700.0)
        return self.leakage_ua * 1e-6 + self.saturation_current_a * np.exp(x)

    def solve(self, pin, vc, rs):
        """Self-consistent (I_G in mA, effective V_G) for control voltage ``vc``."""
        if rs < 0:
            raise ValueError("series resistance must be non-negative")
        if rs == 0:
            return float(self.ig_amps(pin, vc)) * 1e3, float(vc)

        def resid(v):
            return v - (vc - float(self.ig_amps(pin, v)) * rs)

        lo = self.vg_floor
        hi = vc - self.leakage_ua * 1e-6 * rs + 1e-3
        if resid(lo) > 0:
            raise NonConvergence(f"effective V_G below {self.vg_floor} V at pin={pin} dBm, rs={rs} ohm")
        try:
            v = brentq(resid, lo, hi, xtol=1e-13, rtol=1e-15, maxiter=500)
        except (ValueError, RuntimeError) as exc:
            raise NonConvergence(str(exc)) from None
        if abs(resid(v)) >= 1e-6:
            raise NonConvergence(f"residual {resid(v):.3g} V after solve")
        return float(self.ig_amps(pin, v)) * 1e3, float(v)


def gate_current(pin, vc, rs, model: GateCurrentModel | None = None):
    return (model or GateCurrentModel()).solve(pin, vc, rs)


# ------------------------------------------------------------- bias network


@dataclass(frozen=True)
class VgTrajectory:
    start_v: float
    target_v: float
    dpp_v: float
    t0_us: float
    tau_us: float
    settle_time_us: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        dt = np.maximum(t - self.t0_us, 0.0)
        v = self.target_v + (self.start_v - self.target_v) * np.exp(-dt / self.tau_us)
        return float(v) if v.ndim == 0 else v

    @property
    def settled_at_us(self):
        return self.t0_us + self.settle_time_us


@dataclass(frozen=True)
class BiasNetwork:
    """DPP followed by a buffer and a parallel resistor/switch pair."""

    dpp_levels: int = 256
    dpp_range_v: tuple = (-5.0, 0.0)
    dpp_settle_us: float = 5.0
    switch_closed: bool = True
    t_on_us: float = 0.080
    t_off_us: float = 0.045
    r_series_ohm: float = 5030.0
    r_switch_ohm: float = 2.5
    c_gate_nf: float = 10.0
    settle_fraction: float = 0.01

    @property
    def tap_step_v(self):
        lo, hi = self.dpp_range_v
        return (hi - lo) / (self.dpp_levels - 1)

    def quantize(self, v):
        lo, hi = self.dpp_range_v
        tap = int(round((min(max(v, lo), hi) - lo) / self.tap_step_v))
        return tap, lo + tap * self.tap_step_v

    @property
    def r_effective_ohm(self):
        if not self.switch_closed:
            return self.r_series_ohm
        return self.r_series_ohm * self.r_switch_ohm / (self.r_series_ohm + self.r_switch_ohm)

    @property
    def tau_us(self):
        # Ohm * nF = 1e-3 us
        return self.dpp_settle_us / math.log(1.0 / self.settle_fraction) + self.r_effective_ohm * self.c_gate_nf * 1e-3

    @property
    def settle_time_us(self):
        """T_VG: time to come within ``settle_fraction`` of a step."""
        return self.tau_us * math.log(1.0 / self.settle_fraction)

    def set_vg(self, target, current, t):
        lo, hi = self.dpp_range_v
        if not lo <= target <= hi:
            raise OutOfRange(f"target {target} V outside DPP range {self.dpp_range_v}")
        _, dpp_v = self.quantize(target)
        settle = 0.0 if target == current else self.settle_time_us
        return VgTrajectory(float(current), float(target), dpp_v, float(t), self.tau_us, settle)


def set_vg(target, network: BiasNetwork, t, current):
    return network.set_vg(target, current, t)


# ------------------------------------------------------- detectors, coupler


@dataclass(frozen=True)
class EnvelopeDetector:
    characterization: EdCharacterization

    @property
    def tau_us(self):
        # 90 % of a step is reached exactly at the rated rise time
        return self.characterization.rise_time_us / LN10

    @property
    def input_range(self):
        return self.characterization.input_range

    def below_floor(self, pin):
        return np.asarray(pin) < self.input_range[0]

    def static(self, pin, f):
        """Settled output voltage; clamps to the floor below sensitivity."""
        lo, hi = self.input_range
        if np.any(np.asarray(pin) > hi):
            raise SaturationError(f"detector input {pin} dBm above {hi} dBm")
        return self.characterization.vout(f, np.maximum(pin, lo))

    def step_response(self, v_from, v_to, t_since_step):
        t = np.maximum(np.asarray(t_since_step, dtype=float), 0.0)
        with np.errstate(over="ignore"):
            v = v_to + (v_from - v_to) * np.exp(-t / self.tau_us)
        return float(v) if np.ndim(v) == 0 else v

    def output(self, pin, f, t_since_step=math.inf, pin_before=None):
        """Output ``t_since_step`` after the input stepped from ``pin_before``.

        With no ``pin_before`` the step starts from the no-signal floor.
        """
        v_to = self.static(pin, f)
        v_from = self.characterization.output_range[0] if pin_before is None else self.static(pin_before, f)
        if math.isinf(t_since_step):
            return v_to
        return self.step_response(v_from, v_to, t_since_step)

    def pin_for(self, v, f):
        return self.characterization.pin_for(f, v)


def ed_output(detector: EnvelopeDetector, pin_at_ed, f, t_since_step=math.inf, pin_before=None):
    return detector.output(pin_at_ed, f, t_since_step, pin_before)


@dataclass(frozen=True)
class Coupler:
    characterization: CouplerCharacterization

    def through(self, pin, f):
        return pin - self.characterization.insertion_loss(f)

    def coupled(self, pin, f):
        return pin - self.characterization.coupling(f)

    def coupling(self, f):
        return self.characterization.coupling(f)

    def insertion_loss(self, f):
        return self.characterization.insertion_loss(f)


# --------------------------------------------------------------------- ADC


@dataclass(frozen=True)
class AdcSample:
    code: int
    contaminated: bool
    t_us: float = 0.0
    clipped: bool = False


@dataclass(frozen=True)
class AdcModel:
    resolution_bits: int = 16
    reference_v: float = 3.0
    sample_period_us: float = 42.0

    @property
    def full_scale(self):
        return (1 << self.resolution_bits) - 1

    @property
    def lsb_v(self):
        return self.reference_v / self.full_scale

    def code(self, v):
        raw = int(round(v / self.reference_v * self.full_scale))
        return min(max(raw, 0), self.full_scale)

    def sample(self, v, t=0.0, transient_active=False):
        raw = int(round(v / self.reference_v * self.full_scale))
        code = min(max(raw, 0), self.full_scale)
        return AdcSample(code, bool(transient_active), float(t), clipped=code != raw)

    def volts(self, code):
        return code * self.lsb_v


def adc_sample(v, t, transient_active, adc: AdcModel | None = None):
    return (adc or AdcModel()).sample(v, t, transient_active)


def display_reading(volts):
    """Reading in the 0.1 mV-per-count convention used on the bench (743.8 mV -> 7438)."""
    return int(round(volts * 1e4))
