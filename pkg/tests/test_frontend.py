import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfadapt.frontend import LATTICE, Frontend, snap


def test_lattice():
    assert LATTICE == (-2.7, -2.6, -2.5, -2.4, -2.3, -2.2, -2.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5.0, 1.0))
def test_snap_lands_on_lattice(v):
    assert snap(v) in LATTICE


def test_unknown_board():
    with pytest.raises(ValueError):
        Frontend.from_characterization(board="triple")


def test_expected_vg_boundaries(fe):
    assert fe.expected_vg(-10.5, 3.0) == -2.7
    assert fe.expected_vg(-10.4, 3.0) == -2.6
    assert fe.expected_vg(0.5, 3.0) == -2.1
    assert fe.expected_vg(5.0, 3.0) == -2.1


def test_fffb_loses_coupler_through_path(fe, fe_fffb):
    assert fe_fffb.lna_input(-5.0, 3.0) < fe.lna_input(-5.0, 3.0) == -5.0
    assert fe_fffb.has_ed1 and not fe.has_ed1


@pytest.mark.parametrize("p", [-20.0, -12.0, -6.0, 0.0])
def test_ed1_inversion(fe_fffb, p):
    code = fe_fffb.adc.code(fe_fffb.ed1_volts(p, 3.0))
    assert fe_fffb.input_power_from_code(code, 3.0) == pytest.approx(fe_fffb.lna_input(p, 3.0), abs=0.02)


@pytest.mark.parametrize("vg", [-2.7, -2.4, -2.1])
def test_ed2_inversion(fe, vg):
    code = fe.ed2_code(-8.0, vg, 3.0)
    assert fe.output_power_from_code(code, 3.0) == pytest.approx(fe.output(-8.0, vg, 3.0), abs=0.02)
