"""Discrete-time model of the bias adaptation loop.

The loop is a proportional controller feeding an integrator z/(z-1), a
zero-order hold, and a first-order plant whose pole comes from the gate
bias settling (F_Load). One loop update consumes two ADC samples, so the
update period is 2*T_s.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .errors import NoConvergence, Unstable


class TimingWarning(UserWarning):
    """ADC sampling period too short to cover the settling of every stage."""


@dataclass(frozen=True)
class LoopParams:
    k_vg_kg: float = 0.6
    f_load_khz: float = 100.0
    t_s_us: float = 50.0
    t_process_us: float = 0.0
    t_vg_us: float = 10.0
    t_lna_us: float = 1.0
    t_ed_us: float = 0.025  # ~40 MHz detector video bandwidth

    @property
    def pole(self):
        return math.exp(-self.f_load_khz * 1e-3 * self.t_s_us)

    @property
    def update_period_us(self):
        return 2.0 * self.t_s_us

    @property
    def propagation_us(self):
        return self.t_vg_us + self.t_lna_us + self.t_ed_us

    @property
    def feasible(self):
        return self.t_s_us > self.propagation_us

    def with_ts(self, t_s_us):
        return replace(self, t_s_us=float(t_s_us))


@dataclass(frozen=True)
class DiscreteTransferFunction:
    """Ratio of polynomials in z (highest power first), monic denominator."""

    numerator: tuple
    denominator: tuple
    sample_period_us: float

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.numerator, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(self.denominator, dtype=float)), "f")
        if den.size == 0:
            raise ValueError("zero denominator")
        num = num / den[0] if num.size else np.zeros(1)
        den = den / den[0]
        if num.size > den.size:
            raise ValueError("improper transfer function")
        object.__setattr__(self, "numerator", tuple(num))
        object.__setattr__(self, "denominator", tuple(den))

    def poles(self):
        return np.roots(self.denominator)

    def feedback(self):
        """Unity negative feedback: G / (1 + G)."""
        num = np.asarray(self.numerator)
        den = np.asarray(self.denominator)
        pad = np.concatenate([np.zeros(den.size - num.size), num])
        return DiscreteTransferFunction(tuple(num), tuple(den + pad), self.sample_period_us)

    def __call__(self, z):
        return np.polyval(self.numerator, z) / np.polyval(self.denominator, z)

    def step(self, n_samples):
        num = np.asarray(self.numerator)
        den = np.asarray(self.denominator)
        b = np.concatenate([np.zeros(den.size - num.size), num])  # same length as den, z^-1 form
        return lfilter(b, den, np.ones(n_samples))


def open_loop_tf(p: LoopParams) -> DiscreteTransferFunction:
    a = p.pole
    gain = p.k_vg_kg * (1.0 - a)
    # K(1-a)/(z-a) * z/(z-1)
    return DiscreteTransferFunction((gain, 0.0), (1.0, -(1.0 + a), a), p.update_period_us)


def closed_loop_tf(p: LoopParams) -> DiscreteTransferFunction:
    return open_loop_tf(p).feedback()


def closed_loop_step(p: LoopParams, n_samples=200):
    """Unit-step response of the closed loop, one value per loop update."""
    cl = closed_loop_tf(p)
    poles = cl.poles()
    if np.any(np.abs(poles) >= 1.0):
        raise Unstable(f"closed-loop poles {poles} not inside the unit circle", poles)
    return cl.step(n_samples)


def settling_time(response, period_us, tolerance=0.02, final=None, interpolate=False):
    """Time after which ``response`` stays within ``tolerance`` of its final value.

    Sample k is at k*period. Without interpolation the result is the first
    sample time from which the response stays in the band. With
    ``interpolate=True`` the band crossing is located by linear
    interpolation of the error between the last outside sample and the next.
    """
    y = np.asarray(response, dtype=float)
    if final is None:
        final = y[-1]
    band = tolerance * abs(final) if final != 0 else tolerance
    err = np.abs(y - final)
    if err[-1] > band:
        raise NoConvergence("response has not entered the tolerance band")
    outside = np.flatnonzero(err > band)
    if outside.size == 0:
        return 0.0
    k = int(outside[-1])
    if k == y.size - 1:
        raise NoConvergence("response leaves the band at its last sample")
    if not interpolate:
        return (k + 1) * period_us
    frac = (err[k] - band) / (err[k] - err[k + 1])
    return (k + frac) * period_us


def loop_settling_time(p: LoopParams, tolerance=0.02, interpolate=True, n_samples=None):
    if n_samples is None:
        # enough updates for the slowest stable pole to decay well past the band
        rmax = float(np.max(np.abs(closed_loop_tf(p).poles())))
        n_samples = 50 if rmax <= 0 else max(50, int(math.log(tolerance / 100) / math.log(rmax)) + 20)
    y = closed_loop_step(p, n_samples)
    return settling_time(y, p.update_period_us, tolerance, final=1.0, interpolate=interpolate)


def adaptation_time(n_steps, p: LoopParams):
    """Adaptation time for ``n_steps`` loop updates: N * (2*T_s + T_process)."""
    if not p.feasible:
        warnings.warn(
            f"T_s={p.t_s_us} us does not exceed T_VG+T_LNA+T_ED={p.propagation_us} us; "
            "the second sample of each update is not transient-free", TimingWarning, stacklevel=2)
    return n_steps * (2.0 * p.t_s_us + p.t_process_us)


@dataclass(frozen=True)
class SweepPoint:
    ts_us: float
    t_adapt_us: float
    n_steps: int
    feasible: bool


def sweep_adaptation_vs_ts(p: LoopParams, ts_values, tolerance=0.02, min_window_us=25.0):
    """Adaptation time against ADC sampling period.

    A point is feasible when T_s covers the stage settling and the two-sample
    measurement window is longer than ``min_window_us``.
    """
    out = []
    for ts in ts_values:
        q = p.with_ts(ts)
        t = loop_settling_time(q, tolerance, interpolate=True)
        n = int(round(loop_settling_time(q, tolerance, interpolate=False) / q.update_period_us))
        t += n * q.t_process_us
        ok = q.feasible and 2.0 * q.t_s_us > min_window_us
        out.append(SweepPoint(float(ts), float(t), n, bool(ok)))
    return out


def linear_fit(x, y):
    """Least-squares line; returns (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


FIG15_TS_US = tuple(float(x) for x in range(2, 1001, 2))


def fig14_cases(gains=(0.4, 0.6), f_load_khz=100.0, t_s_us=50.0, n_samples=15):
    """Step responses and 2 % settling times for the two proportional gains."""
    cases = {}
    for k in gains:
        p = LoopParams(k_vg_kg=k, f_load_khz=f_load_khz, t_s_us=t_s_us)
        y = closed_loop_step(p, n_samples)
        t = np.arange(n_samples) * p.update_period_us
        cases[k] = dict(t_us=t, value=y, settling_us=loop_settling_time(p),
                        settling_sample_us=loop_settling_time(p, interpolate=False))
    return cases
