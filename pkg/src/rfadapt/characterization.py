"""Measured device characterization: CSV tables, validation and interpolation.

Three kinds of file are understood (UTF-8, LF line endings, header row,
``#`` metadata lines of the form ``# key=value``):

* ``lna``     -- ``freq_ghz,vg_v,vd_v,gain_db,id_ma,p1db_in_dbm,nf_db``
* ``ed``      -- ``freq_ghz,pin_dbm,vout_v`` plus ``# rise_time_us=<x>``
* ``coupler`` -- ``freq_ghz,s21_db,s31_db,s11_db``

Every table is a rectangular grid and is interpolated piecewise-linearly,
which keeps monotone tables monotone along each axis.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import InvariantViolation, OutOfRange, ParseError, RangeError

LNA_COLUMNS = ("freq_ghz", "vg_v", "vd_v", "gain_db", "id_ma", "p1db_in_dbm", "nf_db")
ED_COLUMNS = ("freq_ghz", "pin_dbm", "vout_v")
COUPLER_COLUMNS = ("freq_ghz", "s21_db", "s31_db", "s11_db")

# Bias window the LNA may be tuned over; -2.8 V is excluded for poor S11.
VG_WINDOW = (-2.7, -2.1)
BAND_GHZ = (2.0, 6.0)
_HULL_EPS = 1e-9

BUNDLED_FILES = {
    "lna": "lna_3ghz.csv",
    "ed1": "ed1.csv",
    "ed2": "ed2.csv",
    "coupler": "coupler.csv",
}


class Table:
    """A value sampled on a rectangular grid, interpolated multilinearly.

    Queries outside the grid's bounding box raise :class:`OutOfRange`; there
    is no extrapolation.
    """

    def __init__(self, axes, values, names):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.values = np.asarray(values, dtype=float)
        self.names = tuple(names)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ParseError(f"table shape {self.values.shape} does not match axes")
        for name, ax in zip(self.names, self.axes):
            if len(ax) < 2:
                raise ParseError(f"axis {name!r} needs at least two grid points")
            if np.any(np.diff(ax) <= 0):
                raise ParseError(f"axis {name!r} is not strictly increasing")
        self._rgi = RegularGridInterpolator(self.axes, self.values, method="linear",
                                            bounds_error=False, fill_value=np.nan)

    @property
    def ndim(self):
        return len(self.axes)

    def bounds(self, axis):
        ax = self.axes[axis]
        return float(ax[0]), float(ax[-1])

    def _clip_to_hull(self, coords):
        out = []
        for name, ax, c in zip(self.names, self.axes, coords):
            c = np.asarray(c, dtype=float)
            lo, hi = ax[0], ax[-1]
            if np.any(c < lo - _HULL_EPS) or np.any(c > hi + _HULL_EPS) or np.any(np.isnan(c)):
                raise OutOfRange(f"{name}={c} outside characterized range [{lo}, {hi}]")
            out.append(np.clip(c, lo, hi))
        return out

    def __call__(self, *coords):
        if len(coords) != self.ndim:
            raise TypeError(f"expected {self.ndim} coordinates, got {len(coords)}")
        coords = self._clip_to_hull(coords)
        shape = np.broadcast(*coords).shape
        pts = np.stack([np.broadcast_to(c, shape).ravel() for c in coords], axis=-1)
        res = self._rgi(pts).reshape(shape)
        return float(res) if res.ndim == 0 else res


def interp(table: Table, *point):
    """Piecewise-linear lookup of ``table`` at ``point``."""
    return table(*point)


@dataclass(frozen=True)
class LnaCharacterization:
    gain_table: Table  # (freq, vg, vd) -> dB
    id_table: Table  # (vg, vd) -> mA
    p1db_in_table: Table  # (freq, vg) -> dBm
    nf_table: Table  # (freq, vg) -> dB
    vg_range: tuple = VG_WINDOW
    vd_nominal: float = 10.0
    meta: dict = field(default_factory=dict)

    @property
    def vg_lattice(self):
        return self.p1db_in_table.axes[1]

    @property
    def freqs(self):
        return self.p1db_in_table.axes[0]

    def gain(self, f, vg, vd=None):
        return self.gain_table(f, vg, self.vd_nominal if vd is None else vd)

    def id_ma(self, vg, vd=None):
        return self.id_table(vg, self.vd_nominal if vd is None else vd)

    def p1db_in(self, f, vg):
        return self.p1db_in_table(f, vg)

    def nf(self, f, vg):
        return self.nf_table(f, vg)


@dataclass(frozen=True)
class EdCharacterization:
    curve: Table  # (freq, pin) -> volts
    rise_time_us: float
    output_range: tuple
    meta: dict = field(default_factory=dict)

    @property
    def input_range(self):
        return self.curve.bounds(1)

    def vout(self, f, pin):
        return self.curve(f, pin)

    def pin_for(self, f, vout):
        """Invert the (strictly increasing) curve at frequency ``f``."""
        pins = self.curve.axes[1]
        volts = self.curve(np.full_like(pins, f), pins)
        v = np.clip(vout, volts[0], volts[-1])
        return float(np.interp(v, volts, pins)) if np.ndim(v) == 0 else np.interp(v, volts, pins)


@dataclass(frozen=True)
class CouplerCharacterization:
    s21: Table
    s31: Table
    s11: Table
    meta: dict = field(default_factory=dict)

    def insertion_loss(self, f):
        return -self.s21(f)

    def coupling(self, f):
        return -self.s31(f)

    def return_loss(self, f):
        return self.s11(f)


@dataclass(frozen=True)
class CharacterizationSet:
    lna: LnaCharacterization
    ed1: EdCharacterization
    ed2: EdCharacterization
    coupler: CouplerCharacterization


# --------------------------------------------------------------------------- io


def _read_rows(path, columns):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    meta = {}
    body = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        body.append(line)
    if not body:
        raise ParseError(f"{path}: no header row")
    reader = csv.reader(body)
    header = tuple(h.strip() for h in next(reader))
    if header != tuple(columns):
        raise ParseError(f"{path}: expected columns {','.join(columns)}, got {','.join(header)}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(columns):
            raise ParseError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(columns)}")
        try:
            rows.append(tuple(float(x) for x in rec))
        except ValueError as exc:
            raise ParseError(f"{path}: row {lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{path}: non-finite value")
    return arr, meta


def _grid(arr, key_cols, path):
    """Map rows keyed by ``key_cols`` onto a rectangular grid; return axes and index."""
    axes = [np.unique(arr[:, c]) for c in key_cols]
    expected = int(np.prod([len(a) for a in axes]))
    idx = tuple(np.searchsorted(ax, arr[:, c]) for ax, c in zip(axes, key_cols))
    flat = np.ravel_multi_index(idx, [len(a) for a in axes])
    if len(np.unique(flat)) != len(flat):
        raise ParseError(f"{path}: duplicate grid point")
    if len(flat) != expected:
        raise ParseError(f"{path}: grid is not rectangular ({len(flat)} rows, {expected} expected)")
    return axes, idx


def _fill(axes, idx, column):
    out = np.empty([len(a) for a in axes])
    out[idx] = column
    return out


def _pair(text):
    lo, hi = (float(x) for x in text.split(","))
    return lo, hi


def load_lna(path, validate=True):
    arr, meta = _read_rows(path, LNA_COLUMNS)
    (f, vg, vd), idx = _grid(arr, (0, 1, 2), path)
    gain = _fill((f, vg, vd), idx, arr[:, 3])
    id3 = _fill((f, vg, vd), idx, arr[:, 4])
    p1 = _fill((f, vg, vd), idx, arr[:, 5])
    nf = _fill((f, vg, vd), idx, arr[:, 6])
    if np.ptp(id3, axis=0).max() > 1e-9:
        raise InvariantViolation(f"{path}: id_ma must not depend on freq_ghz")
    if np.ptp(p1, axis=2).max() > 1e-9 or np.ptp(nf, axis=2).max() > 1e-9:
        raise InvariantViolation(f"{path}: p1db_in_dbm and nf_db must not depend on vd_v")
    vg_range = _pair(meta["vg_range_v"]) if "vg_range_v" in meta else (float(vg[0]), float(vg[-1]))
    vd_nom = float(meta.get("vd_nominal_v", 10.0))
    lna = LnaCharacterization(
        gain_table=Table((f, vg, vd), gain, ("freq_ghz", "vg_v", "vd_v")),
        id_table=Table((vg, vd), id3[0], ("vg_v", "vd_v")),
        p1db_in_table=Table((f, vg), p1[:, :, 0], ("freq_ghz", "vg_v")),
        nf_table=Table((f, vg), nf[:, :, 0], ("freq_ghz", "vg_v")),
        vg_range=vg_range,
        vd_nominal=vd_nom,
        meta=meta,
    )
    if validate:
        _raise_first(check_lna(lna))
    return lna


def load_ed(path, validate=True):
    arr, meta = _read_rows(path, ED_COLUMNS)
    if "rise_time_us" not in meta:
        raise ParseError(f"{path}: missing '# rise_time_us=' metadata line")
    (f, pin), idx = _grid(arr, (0, 1), path)
    v = _fill((f, pin), idx, arr[:, 2])
    out_range = _pair(meta["output_range_v"]) if "output_range_v" in meta else (float(v.min()), float(v.max()))
    ed = EdCharacterization(
        curve=Table((f, pin), v, ("freq_ghz", "pin_dbm")),
        rise_time_us=float(meta["rise_time_us"]),
        output_range=out_range,
        meta=meta,
    )
    if validate:
        _raise_first(check_ed(ed))
    return ed


def load_coupler(path, validate=True):
    arr, meta = _read_rows(path, COUPLER_COLUMNS)
    (f,), idx = _grid(arr, (0,), path)
    tabs = [Table((f,), _fill((f,), idx, arr[:, c]), ("freq_ghz",)) for c in (1, 2, 3)]
    cpl = CouplerCharacterization(*tabs, meta=meta)
    if validate:
        _raise_first(check_coupler(cpl))
    return cpl


_LOADERS = {"lna": load_lna, "ed": load_ed, "coupler": load_coupler}


def load_characterization(path, kind, validate=True):
    """Load and validate one characterization file of the given ``kind``."""
    try:
        loader = _LOADERS[kind]
    except KeyError:
        raise ValueError(f"unknown characterization kind {kind!r}") from None
    return loader(path, validate=validate)


def data_dir(override=None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get("RFADAPT_DATA")
    if env:
        return Path(env)
    return Path(__file__).parent / "data"


def load_bundled(directory=None) -> CharacterizationSet:
    d = data_dir(directory)
    return CharacterizationSet(
        lna=load_lna(d / BUNDLED_FILES["lna"]),
        ed1=load_ed(d / BUNDLED_FILES["ed1"]),
        ed2=load_ed(d / BUNDLED_FILES["ed2"]),
        coupler=load_coupler(d / BUNDLED_FILES["coupler"]),
    )


def _fmt(x):
    return repr(float(x))


def _write(path, columns, rows, meta):
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(x) for x in r) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def write_characterization(obj, path):
    """Write ``obj`` back in the schema it was loaded from."""
    if isinstance(obj, LnaCharacterization):
        f, vg, vd = obj.gain_table.axes
        rows = []
        for i, fi in enumerate(f):
            for j, vgj in enumerate(vg):
                for k, vdk in enumerate(vd):
                    rows.append((fi, vgj, vdk, obj.gain_table.values[i, j, k],
                                 obj.id_table.values[j, k], obj.p1db_in_table.values[i, j],
                                 obj.nf_table.values[i, j]))
        _write(path, LNA_COLUMNS, rows, obj.meta)
    elif isinstance(obj, EdCharacterization):
        f, pin = obj.curve.axes
        rows = [(fi, pj, obj.curve.values[i, j]) for i, fi in enumerate(f) for j, pj in enumerate(pin)]
        meta = dict(obj.meta)
        meta.setdefault("rise_time_us", repr(obj.rise_time_us))
        _write(path, ED_COLUMNS, rows, meta)
    elif isinstance(obj, CouplerCharacterization):
        (f,) = obj.s21.axes
        rows = zip(f, obj.s21.values, obj.s31.values, obj.s11.values)
        _write(path, COUPLER_COLUMNS, rows, obj.meta)
    else:
        raise TypeError(f"cannot write {type(obj).__name__}")


# ------------------------------------------------------------------ invariants


@dataclass(frozen=True)
class RuleResult:
    rule: str
    ok: bool
    detail: str = ""
    error: type = InvariantViolation


def _raise_first(results):
    for r in results:
        if not r.ok:
            raise r.error(f"{r.rule}: {r.detail}")


def check_lna(lna: LnaCharacterization):
    res = []
    lo, hi = lna.vg_range
    ok = VG_WINDOW[0] - 1e-9 <= lo < hi <= VG_WINDOW[1] + 1e-9
    res.append(RuleResult("vg_range_within_window", ok, f"vg_range={lna.vg_range} not within {VG_WINDOW}"))
    g_lo, g_hi = lna.p1db_in_table.bounds(1)
    ok = g_lo <= lo + 1e-9 and g_hi >= hi - 1e-9
    res.append(RuleResult("grid_covers_vg_range", ok, f"grid [{g_lo}, {g_hi}] vs {lna.vg_range}", RangeError))

    d = np.diff(lna.p1db_in_table.values, axis=1)
    bad = np.argwhere(d < 0)
    res.append(RuleResult("p1db_monotone_in_vg", bad.size == 0,
                          f"P1dB decreases with V_G at freq index/vg index {bad[:1].tolist()}"))
    d = np.diff(lna.id_table.values, axis=0)
    res.append(RuleResult("id_increasing_in_vg", bool(np.all(d > 0)), "I_D not strictly increasing in V_G"))

    vg = lna.gain_table.axes[1]
    sel = (vg >= VG_WINDOW[0] - 1e-9) & (vg <= VG_WINDOW[1] + 1e-9)
    span = np.ptp(lna.gain_table.values[:, sel, :], axis=1).max()
    res.append(RuleResult("gain_span_below_4db", span < 4.0, f"gain varies by {span:.3f} dB over V_G"))
    return res


def check_ed(ed: EdCharacterization):
    v = ed.curve.values
    inc = bool(np.all(np.diff(v, axis=1) > 0))
    lo, hi = ed.output_range
    within = bool(np.all(v >= lo - 1e-12) and np.all(v <= hi + 1e-12))
    return [
        RuleResult("curve_strictly_increasing", inc, "output not strictly increasing in input power"),
        RuleResult("output_within_range", within, f"output outside [{lo}, {hi}] V"),
        RuleResult("rise_time_positive", ed.rise_time_us > 0, f"rise_time_us={ed.rise_time_us}"),
    ]


def check_coupler(c: CouplerCharacterization, tol=0.05):
    (f,) = c.s21.axes
    band = (f >= BAND_GHZ[0]) & (f <= BAND_GHZ[1])
    il = -c.s21.values[band]
    cp = -c.s31.values[band]
    rl = c.s11.values[band]
    return [
        RuleResult("insertion_loss_range", bool(np.all((il >= 0.18 - tol) & (il <= 0.42 + tol))),
                   f"insertion loss {il.min():.3f}..{il.max():.3f} dB"),
        RuleResult("coupling_range", bool(np.all((cp >= 16 - tol) & (cp <= 20.5 + tol))),
                   f"coupling {cp.min():.3f}..{cp.max():.3f} dB"),
        RuleResult("return_loss_below_-19db", bool(np.all(rl <= -19 + tol)), f"worst S11 {rl.max():.3f} dB"),
    ]


def validate_file(path, kind):
    """Run every rule for one file; never raises, returns (rule, ok, detail) tuples."""
    try:
        obj = load_characterization(path, kind, validate=False)
    except (ParseError, InvariantViolation, OSError) as exc:
        return [RuleResult("parse", False, f"{type(exc).__name__}: {exc}")]
    checks = {"lna": check_lna, "ed": check_ed, "coupler": check_coupler}[kind]
    return [RuleResult("parse", True)] + checks(obj)
