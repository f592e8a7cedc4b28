"""Static signal path of the two board variants.

Feedback-only: input -> LNA -> coupler 2 (coupled port -> ED2).
Feedforward + feedback: input -> coupler 1 (coupled port -> ED1) -> LNA -> coupler 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .characterization import CharacterizationSet, load_bundled
from .devices import (AdcModel, BiasNetwork, Coupler, EnvelopeDetector,
                      GateCurrentModel, LnaModel)

FEEDBACK_ONLY = "feedback_only"
FFFB = "fffb"
BOARDS = (FEEDBACK_ONLY, FFFB)

LATTICE = tuple(round(-2.7 + 0.1 * i, 1) for i in range(7))
VG_MIN, VG_MAX, VG_STEP = LATTICE[0], LATTICE[-1], 0.1


def snap(vg):
    """Nearest lattice voltage (rounded to 0.1 V)."""
    return min(max(round(round(vg / VG_STEP) * VG_STEP, 1), VG_MIN), VG_MAX)


@dataclass(frozen=True)
class Frontend:
    lna: LnaModel
    ed1: EnvelopeDetector
    ed2: EnvelopeDetector
    coupler: Coupler
    adc: AdcModel = field(default_factory=AdcModel)
    gate: GateCurrentModel = field(default_factory=GateCurrentModel)
    bias: BiasNetwork = field(default_factory=BiasNetwork)
    board: str = FEEDBACK_ONLY

    @classmethod
    def from_characterization(cls, cs: CharacterizationSet | None = None, board=FEEDBACK_ONLY,
                              lna=None, adc=None, gate=None, bias=None):
        cs = cs or load_bundled()
        if board not in BOARDS:
            raise ValueError(f"unknown board {board!r}")
        return cls(
            lna=LnaModel(cs.lna, **(lna or {})),
            ed1=EnvelopeDetector(cs.ed1),
            ed2=EnvelopeDetector(cs.ed2),
            coupler=Coupler(cs.coupler),
            adc=AdcModel(**(adc or {})),
            gate=GateCurrentModel(**(gate or {})),
            bias=BiasNetwork(**(bias or {})),
            board=board,
        )

    def with_board(self, board):
        return replace(self, board=board)

    @property
    def has_ed1(self):
        return self.board == FFFB

    def lna_input(self, p, f):
        return self.coupler.through(p, f) if self.has_ed1 else p

    def output(self, p, vg, f):
        return self.lna.output(self.lna_input(p, f), vg, f)

    def ed2_input(self, p, vg, f):
        return self.coupler.coupled(self.output(p, vg, f), f)

    def ed1_input(self, p, f):
        return self.coupler.coupled(p, f)

    def ed2_volts(self, p, vg, f):
        return self.ed2.static(self.ed2_input(p, vg, f), f)

    def ed1_volts(self, p, f):
        return self.ed1.static(self.ed1_input(p, f), f)

    def ed2_code(self, p, vg, f):
        return self.adc.code(self.ed2_volts(p, vg, f))

    def expected_vg(self, p, f):
        """Lowest lattice bias whose input P1dB is at or above the LNA input power."""
        pin = self.lna_input(p, f)
        for vg in LATTICE:
            if self.lna.p1db_in(vg, f) >= pin:
                return vg
        return VG_MAX

    # FF+FB measurement chain, inverted from ADC codes

    def input_power_from_code(self, code, f):
        """LNA input power implied by an ED1 code (coupler-corrected)."""
        v = self.adc.volts(code)
        return self.ed1.pin_for(v, f) + self.coupler.coupling(f) - self.coupler.insertion_loss(f)

    def output_power_from_code(self, code, f):
        v = self.adc.volts(code)
        return self.ed2.pin_for(v, f) + self.coupler.coupling(f)

    def ed1_floor_code(self, f):
        lo = self.ed1.input_range[0]
        return self.adc.code(float(self.ed1.characterization.vout(f, lo)))


def lattice_array():
    return np.array(LATTICE)
