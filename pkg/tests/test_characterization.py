import numpy as np
import pytest

from rfadapt.characterization import (BUNDLED_FILES, check_coupler, check_ed, check_lna, data_dir, load_bundled,
                                      load_characterization, load_ed, load_lna, validate_file,
                                      write_characterization)
from rfadapt.errors import InvariantViolation, ParseError


@pytest.fixture(scope="module")
def cs():
    return load_bundled()


def test_bundled_files_present():
    for name in BUNDLED_FILES.values():
        assert (data_dir() / name).is_file()


def test_bundled_rules_pass(cs):
    for results in (check_lna(cs.lna), check_ed(cs.ed1), check_ed(cs.ed2), check_coupler(cs.coupler)):
        assert all(r.ok for r in results), [r for r in results if not r.ok]


def test_lattice_p1db_values(cs):
    got = [cs.lna.p1db_in(3.0, -2.7 + 0.1 * i) for i in range(7)]
    np.testing.assert_allclose(got, [-10.5, -8.5, -6.0, -4.0, -2.2, -0.8, 0.5], atol=1e-9)


def test_lna_interpolates_between_grid_points(cs):
    a, b = cs.lna.p1db_in(3.0, -2.7), cs.lna.p1db_in(3.0, -2.6)
    assert a < cs.lna.p1db_in(3.0, -2.65) < b


@pytest.mark.parametrize("kind,key", [("lna", "lna"), ("ed", "ed1"), ("ed", "ed2"), ("coupler", "coupler")])
def test_round_trip(tmp_path, cs, kind, key):
    src = data_dir() / BUNDLED_FILES[key]
    obj = load_characterization(src, kind)
    out = tmp_path / "copy.csv"
    write_characterization(obj, out)
    again = load_characterization(out, kind)
    write_characterization(again, tmp_path / "copy2.csv")
    assert out.read_bytes() == (tmp_path / "copy2.csv").read_bytes()


def test_ed_inverse(cs):
    for pin in (-30.0, -15.0, -5.0):
        v = cs.ed2.vout(3.0, pin)
        assert cs.ed2.pin_for(3.0, v) == pytest.approx(pin, abs=1e-6)


def test_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("freq_ghz,pin,vout_v\n3,0,1\n")
    with pytest.raises(ParseError):
        load_ed(p)


def test_ragged_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("freq_ghz,pin_dbm,vout_v\n3,0\n")
    with pytest.raises(ParseError):
        load_ed(p)


def test_non_monotone_detector_rejected(tmp_path):
    p = tmp_path / "ed.csv"
    p.write_text("# rise_time_us=47\nfreq_ghz,pin_dbm,vout_v\n"
                 "2,-10,0.5\n2,0,0.4\n4,-10,0.5\n4,0,0.6\n")
    with pytest.raises(InvariantViolation):
        load_ed(p)
    assert not all(r.ok for r in validate_file(p, "ed"))


def test_non_rectangular_lna_grid(tmp_path):
    src = (data_dir() / BUNDLED_FILES["lna"]).read_text().splitlines()
    p = tmp_path / "lna.csv"
    p.write_text("\n".join(src[:-1]) + "\n")
    with pytest.raises(ParseError):
        load_lna(p)


def test_validate_file_never_raises(tmp_path):
    res = validate_file(tmp_path / "missing.csv", "lna")
    assert len(res) == 1 and not res[0].ok


def test_data_dir_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv("RFADAPT_DATA", str(tmp_path))
    assert data_dir() == tmp_path
