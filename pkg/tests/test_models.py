import math

import pytest
from hypothesis import given, strategies as st

from avsafety.models import (
    BehaviorModel,
    LinearCfParams,
    MobilParams,
    ModelError,
    as_generalized,
    cf_accel,
    linear_cf_accel,
    load_fixture,
    load_model,
    milanes_accel,
    milanes_to_generalized,
    mobil_decide,
    save_model,
)


class TestCfAccel:
    def test_zero_gains(self):
        p = LinearCfParams(form="generalized")
        assert linear_cf_accel(p, 13.0, 7.0, 42.0) == 0.0

    def test_constant_term(self):
        p = LinearCfParams(form="generalized", k4=1.0)
        assert linear_cf_accel(p, 3.0, 4.0, 5.0) == 1.0

    def test_equilibrium(self):
        # generalized gains equivalent to the ACC law with t_hw = 1.5:
        # at gap = t_hw * v and equal speeds the commanded accel vanishes
        p = LinearCfParams(form="generalized", k1=-0.415, k2=0.07, k3=0.23, k4=0.0)
        assert linear_cf_accel(p, 10.0, 10.0, 15.0) == pytest.approx(0.0, abs=1e-12)

    def test_milanes_equilibrium(self):
        p = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        assert milanes_accel(p, 10.0, 10.0, 15.0) == pytest.approx(0.0, abs=1e-12)

    def test_milanes_gap_error(self):
        p = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        # +1 m position error at matched speeds engages only the k1 term
        assert milanes_accel(p, 10.0, 10.0, 16.0) == pytest.approx(0.23)

    def test_milanes_speed_error(self):
        p = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        assert milanes_accel(p, 10.0, 12.0, 15.0) == pytest.approx(0.14)

    def test_form_mismatch_raises(self):
        gen = LinearCfParams(form="generalized")
        mil = LinearCfParams(form="milanes", k1=0.1, t_hw=1.0)
        with pytest.raises(ModelError):
            linear_cf_accel(mil, 0, 0, 0)
        with pytest.raises(ModelError):
            milanes_accel(gen, 0, 0, 0)


class TestConversion:
    def test_default_gains(self):
        g = milanes_to_generalized(LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5))
        assert g.k1 == pytest.approx(-0.415)
        assert g.k2 == pytest.approx(0.07)
        assert g.k3 == pytest.approx(0.23)
        assert g.k4 == 0.0

    def test_zero_gains(self):
        g = milanes_to_generalized(LinearCfParams(form="milanes", k1=0.0, k2=0.0, t_hw=2.0))
        assert (g.k1, g.k2, g.k3, g.k4) == (0.0, 0.0, 0.0, 0.0)

    def test_unit_substitution(self):
        g = milanes_to_generalized(LinearCfParams(form="milanes", k1=1.0, k2=0.0, t_hw=1.0))
        assert (g.k1, g.k2, g.k3, g.k4) == (-1.0, 0.0, 1.0, 0.0)

    @given(
        k1=st.floats(0.001, 1.0),
        k2=st.floats(0.0, 1.0),
        t_hw=st.floats(0.1, 5.0),
        v_f=st.floats(0.0, 40.0),
        v_l=st.floats(0.0, 40.0),
        d=st.floats(0.0, 100.0),
    )
    def test_forms_agree_everywhere(self, k1, k2, t_hw, v_f, v_l, d):
        p = LinearCfParams(form="milanes", k1=k1, k2=k2, t_hw=t_hw)
        a = milanes_accel(p, v_f, v_l, d)
        b = linear_cf_accel(milanes_to_generalized(p), v_f, v_l, d)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)

    def test_as_generalized_identity(self):
        g = LinearCfParams(form="generalized", k1=-0.4, k3=0.2)
        assert as_generalized(g) is g

    def test_cf_accel_dispatch(self):
        p = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        assert cf_accel(p, 5.0, 6.0, 20.0) == milanes_accel(p, 5.0, 6.0, 20.0)


class TestMobil:
    def test_zero_politeness_gain_wins(self):
        assert mobil_decide(0.2, -5.0, -5.0, 0.0, MobilParams()) is True

    def test_threshold_is_strict(self):
        assert mobil_decide(0.1, 0.0, 0.0, 0.0, MobilParams()) is False

    def test_safety_veto(self):
        assert mobil_decide(3.0, 0.0, 0.0, 4.5, MobilParams()) is False

    def test_politeness_term(self):
        p = MobilParams(politeness_f=0.5)
        # incentive = 0.3 + 0.5 * (-0.5) = 0.05 < 0.1
        assert mobil_decide(0.3, -0.3, -0.2, 0.0, p) is False


class TestValidation:
    def test_unknown_form(self):
        with pytest.raises(ModelError):
            LinearCfParams(form="idm")

    def test_milanes_needs_positive_thw(self):
        with pytest.raises(ModelError):
            LinearCfParams(form="milanes", k1=0.1, t_hw=0.0)

    def test_politeness_bounds(self):
        with pytest.raises(ModelError):
            MobilParams(politeness_f=1.5)


class TestModelFiles:
    def test_fixture_values(self):
        expected = {
            "veh_a": (0.018, 0.156, 1.378),
            "veh_b": (0.004, 0.241, 2.379),
            "veh_c": (0.001, 0.308, 0.467),
            "veh_d": (0.006, 0.249, 2.002),
            "veh_e": (0.003, 0.257, 2.225),
            "veh_f": (0.012, 0.168, 2.424),
        }
        for name, (k1, k2, t_hw) in expected.items():
            m = load_fixture(name)
            assert m.cf.form == "milanes"
            assert m.cf.k1 == pytest.approx(k1)
            assert m.cf.k2 == pytest.approx(k2)
            assert m.cf.t_hw == pytest.approx(t_hw)

    def test_default_fixture(self):
        m = load_fixture("milanes_default")
        assert (m.cf.k1, m.cf.k2, m.cf.t_hw) == (0.23, 0.07, 1.5)

    def test_round_trip(self, tmp_path):
        m = BehaviorModel(
            cf=LinearCfParams(form="milanes", k1=0.11, k2=0.05, t_hw=1.25),
            mobil=MobilParams(politeness_f=0.3, incentive_threshold=0.2),
            name="round_trip",
        )
        path = tmp_path / "m.toml"
        save_model(m, path)
        back = load_model(path)
        assert back == m

    def test_missing_form_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("k1 = 0.1\n")
        with pytest.raises(ModelError):
            load_model(path)

    def test_malformed_toml_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("form = [unterminated\n")
        with pytest.raises(ModelError):
            load_model(path)
