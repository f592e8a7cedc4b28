import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfadapt.control import (Action, ControllerState, FeedbackController, FfFbController, LutBin, LutTable,
                             Method, Mode, TripleSetPointThresholds, determining_steps, fffb_step,
                             incremental_step, load_lut, lut_step, one_shot_step, write_lut)
from rfadapt.devices import AdcSample
from rfadapt.errors import AtBound, ContaminatedSample, InvariantViolation, LutMiss, ParseError, SensitivityFloor
from rfadapt.frontend import LATTICE

TH = TripleSetPointThresholds(1000, -500, -1500)


def sample(code, contaminated=False):
    return AdcSample(int(code), contaminated)


def state(vg_cmd, vg_prev, ref=10000, mode=Mode.INCREMENTING):
    return ControllerState(mode=mode, vg_cmd=vg_cmd, vg_prev=vg_prev, ref_sample=ref)


class TestTripleSetPoint:
    @pytest.mark.parametrize("err,expected", [(1001, Action.INC), (1000, Action.HOLD), (-499, Action.HOLD),
                                              (-501, Action.DEC)])
    def test_no_previous_move(self, err, expected):
        r = incremental_step(state(-2.5, -2.5), sample(10000 + err), TH)
        assert r.action is expected

    @pytest.mark.parametrize("err,expected", [(1500, Action.INC), (200, Action.HOLD), (-900, Action.HOLD)])
    def test_after_increment(self, err, expected):
        assert incremental_step(state(-2.4, -2.5), sample(10000 + err), TH).action is expected

    @pytest.mark.parametrize("err,expected", [(-1501, Action.REVERT), (-1000, Action.DEC), (-100, Action.HOLD),
                                              (300, Action.HOLD)])
    def test_after_decrement(self, err, expected):
        r = incremental_step(state(-2.5, -2.4), sample(10000 + err), TH)
        assert r.action is expected
        if expected is Action.REVERT:
            assert r.vg_next == -2.4

    def test_steps_stay_on_lattice(self):
        r = incremental_step(state(-2.5, -2.5), sample(12000), TH)
        assert r.vg_next == -2.4 and r.vg_next in LATTICE

    def test_bound(self):
        r = incremental_step(state(-2.1, -2.1), sample(20000), TH)
        assert r.at_bound and r.vg_next == -2.1
        with pytest.raises(AtBound):
            incremental_step(state(-2.1, -2.1), sample(20000), TH, strict=True)

    def test_contaminated(self):
        with pytest.raises(ContaminatedSample):
            incremental_step(state(-2.5, -2.5), sample(1, contaminated=True), TH)

    def test_threshold_ordering(self):
        with pytest.raises(ValueError):
            TripleSetPointThresholds(100, -200, -150)

    def test_state_lattice(self):
        with pytest.raises(InvariantViolation):
            ControllerState(vg_cmd=-2.45)


def test_auto_thresholds(thresholds, fe):
    assert (thresholds.th_pos, thresholds.th_neg, thresholds.th_negneg) == (1068, -534, -1602)
    assert min(s.step for s in determining_steps(fe) if s.step > 0) == 1068


def test_interference_gate_code(fe):
    assert fe.ed2_code(-12.5, -2.7, 3.0) == 12261
    assert fe.ed2_code(-22.5, -2.7, 3.0) == 3567


class TestLut:
    def test_row_bins(self, lut):
        row = lut.rows[-2.7]
        assert [(b.code_lo, b.code_hi, b.vg_target) for b in row] == [
            (0, 14233, -2.7), (14234, 15493, -2.6), (15494, 16743, -2.5), (16744, 17736, -2.4),
            (17737, 18664, -2.3), (18665, 19410, -2.2), (19411, 65535, -2.1)]

    def test_bench_lookup(self, lut):
        assert lut.lookup(-2.7, 16249).vg_target == -2.5

    @settings(max_examples=200, deadline=None)
    @given(st.sampled_from(LATTICE), st.integers(0, 65535))
    def test_lookup_total(self, lut, vg, code):
        b = lut.lookup(vg, code)
        assert b.code_lo <= code <= b.code_hi

    @pytest.mark.parametrize("p", [-12.0, -9.0, -6.5, -3.0, 0.0])
    def test_one_jump_reaches_expected(self, lut, fe, p):
        assert lut.lookup(-2.7, fe.ed2_code(p, -2.7, 3.0)).vg_target == fe.expected_vg(p, 3.0)

    def test_round_trip(self, lut, tmp_path):
        path = tmp_path / "lut.csv"
        write_lut(lut, path)
        assert load_lut(path) == lut

    def test_bad_file(self, tmp_path):
        p = tmp_path / "lut.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ParseError):
            load_lut(p)

    def test_overlap_rejected(self):
        with pytest.raises(InvariantViolation):
            LutTable({-2.7: (LutBin(0, 100, -2.7, 0.0), LutBin(50, 200, -2.6, 0.0))})

    def test_miss_falls_back_to_max(self):
        t = LutTable({-2.7: (LutBin(0, 100, -2.7, 0.0),)})
        with pytest.raises(LutMiss):
            t.lookup(-2.7, 500)
        assert lut_step(ControllerState(), sample(500), t) == -2.1

    def test_underestimating_is_one_step_low(self, lut):
        low = lut.underestimating(1)
        for code in (15000, 16249, 18000, 30000):
            hi = lut.lookup(-2.7, code).vg_target
            assert low.lookup(-2.7, code).vg_target == max(round(hi - 0.1, 1), -2.7)


def test_one_shot_jumps_from_idle(lut, thresholds):
    st0 = ControllerState(mode=Mode.IDLE)
    r = one_shot_step(st0, sample(16249), lut.underestimating(1), thresholds)
    assert r.action is Action.INC and r.vg_next == -2.6


class TestFeedbackController:
    def test_method_parse(self):
        assert Method.parse("one-shot") is Method.ONE_SHOT
        assert Method.parse(Method.LUT) is Method.LUT
        with pytest.raises(ValueError):
            Method.parse("bogus")

    def test_needs_inputs(self, thresholds):
        with pytest.raises(ValueError):
            FeedbackController("lut", thresholds)
        with pytest.raises(ValueError):
            FeedbackController("fffb", thresholds)

    def test_below_gate_idles(self, thresholds, lut):
        c = FeedbackController("lut", thresholds, 12261, lut)
        d = c.decide(sample(3567))
        assert d.vg_cmd == -2.7 and c.state.mode is Mode.IDLE

    def test_lut_jump_then_settle(self, thresholds, lut, fe):
        c = FeedbackController("lut", thresholds, 12261, lut)
        d = c.decide(sample(fe.ed2_code(-6.5, -2.7, 3.0)))
        assert d.action == "Jump" and d.vg_cmd == -2.5
        d = c.decide(sample(fe.ed2_code(-6.5, -2.5, 3.0)))
        assert d.settled and d.vg_cmd == -2.5

    def test_lut_reversal_needs_confirmation(self, thresholds, lut):
        c = FeedbackController("lut", thresholds, 0, lut)
        edge = lut.self_bin(-2.6).code_lo
        assert c.decide(sample(15000)).vg_cmd == -2.6
        # just under the bin edge: first reading holds, second settles within the dead band
        d = c.decide(sample(edge - 60))
        assert d.action == Action.HOLD.value and not d.settled
        d = c.decide(sample(edge - 1))
        assert d.settled and d.vg_cmd == -2.6

    def test_lut_genuine_reversal(self, thresholds, lut):
        c = FeedbackController("lut", thresholds, 0, lut)
        c.decide(sample(15000))
        assert c.decide(sample(15000)).vg_cmd == -2.6
        assert c.decide(sample(15000)).vg_cmd == -2.7

    def test_incremental_climbs_one_step_at_a_time(self, thresholds, fe):
        c = FeedbackController("incremental", thresholds, 12261)
        vg, seen = -2.7, []
        for _ in range(20):
            d = c.decide(sample(fe.ed2_code(-4.5, vg, 3.0)))
            if d.vg_cmd != vg:
                assert abs(round(d.vg_cmd - vg, 1)) == 0.1
            vg = d.vg_cmd
            seen.append(vg)
            if d.settled:
                break
        assert vg >= fe.expected_vg(-4.5, 3.0)


class TestFfFb:
    def test_linear_holds(self, fe_fffb):
        vg = -2.4
        ed1 = sample(fe_fffb.adc.code(fe_fffb.ed1_volts(-10.0, 3.0)))
        ed2 = sample(fe_fffb.adc.code(fe_fffb.ed2_volts(-10.0, vg, 3.0)))
        g = fe_fffb.lna.gain_db(vg, 3.0)
        assert fffb_step(ed1, ed2, g, 1.0, fe_fffb, vg) is Action.HOLD

    def test_compressed_increments(self, fe_fffb):
        vg = -2.7
        ed1 = sample(fe_fffb.adc.code(fe_fffb.ed1_volts(-2.0, 3.0)))
        ed2 = sample(fe_fffb.adc.code(fe_fffb.ed2_volts(-2.0, vg, 3.0)))
        assert fffb_step(ed1, ed2, fe_fffb.lna.gain_db(vg, 3.0), 1.0, fe_fffb, vg) is Action.INC

    def test_floor(self, fe_fffb):
        floor = fe_fffb.ed1_floor_code(3.0)
        with pytest.raises(SensitivityFloor):
            fffb_step(sample(floor), sample(5000), 15.0, 1.0, fe_fffb, -2.4)

    def test_controller_never_overshoots(self, fe_fffb):
        c = FfFbController(fe_fffb)
        vg, top = -2.7, -2.7
        for _ in range(20):
            ed1 = sample(fe_fffb.adc.code(fe_fffb.ed1_volts(-3.0, 3.0)))
            ed2 = sample(fe_fffb.adc.code(fe_fffb.ed2_volts(-3.0, vg, 3.0)))
            d = c.decide(ed1, ed2)
            vg = d.vg_cmd
            top = max(top, vg)
            if d.settled:
                break
        assert top == vg
        assert fe_fffb.lna.compression_db(fe_fffb.lna_input(-3.0, 3.0), vg, 3.0) <= 1.0
