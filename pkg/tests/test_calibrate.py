import io

import numpy as np
import pytest

from avsafety.calibrate import (
    CalibrationResult,
    TrajectoryError,
    TrajectoryRecord,
    fit_linear,
    ingest_trajectory,
)
from avsafety.models import LinearCfParams, ModelError, milanes_accel


def synth_records(params, n=200, seed=0, noise=0.0, form="milanes"):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        vf = rng.uniform(0.0, 40.0)
        vl = rng.uniform(0.0, 40.0)
        d = rng.uniform(5.0, 100.0)
        if form == "milanes":
            a = milanes_accel(params, vf, vl, d)
        else:
            a = params.k1 * vf + params.k2 * vl + params.k3 * d + params.k4
        recs.append(TrajectoryRecord(time=0.2 * i, leader_speed=vl,
                                     follower_speed=vf, gap=d,
                                     follower_accel=a + noise * rng.normal()))
    return recs


class TestIngest:
    def test_basic_csv(self):
        text = (
            "time,v_leader,v_follower,gap,a_follower\n"
            "0.0,10.0,8.0,20.0,0.5\n"
            "0.2,10.0,8.1,20.4,0.4\n"
            "0.4,10.0,8.2,20.7,0.3\n"
        )
        recs = ingest_trajectory(text)
        assert len(recs) == 3
        assert recs[0].leader_speed == 10.0
        assert recs[2].follower_accel == 0.3

    def test_accel_derived_from_constant_speed(self):
        text = "time,v_leader,v_follower,gap\n" + "".join(
            f"{0.2 * i},10.0,8.0,{20.0 + i}\n" for i in range(5)
        )
        recs = ingest_trajectory(text)
        for r in recs:
            assert r.follower_accel == pytest.approx(0.0, abs=1e-12)

    def test_accel_derived_from_linear_ramp(self):
        # v_f = 8 + 0.5 t  ->  a_f = 0.5 everywhere, including boundaries
        text = "time,v_leader,v_follower,gap\n" + "".join(
            f"{0.2 * i},10.0,{8.0 + 0.1 * i},{20.0 + i}\n" for i in range(6)
        )
        recs = ingest_trajectory(text)
        for r in recs:
            assert r.follower_accel == pytest.approx(0.5, rel=1e-9)

    def test_non_monotone_time_reports_line(self):
        text = (
            "time,v_leader,v_follower,gap\n"
            "0.0,10,8,20\n"
            "0.2,10,8,20\n"
            "0.1,10,8,20\n"
        )
        with pytest.raises(TrajectoryError) as exc:
            ingest_trajectory(text)
        assert exc.value.line == 4

    def test_nonpositive_gap_rejected(self):
        text = "time,v_leader,v_follower,gap\n0.0,10,8,0.0\n"
        with pytest.raises(TrajectoryError) as exc:
            ingest_trajectory(text)
        assert exc.value.line == 2

    def test_missing_column(self):
        with pytest.raises(TrajectoryError):
            ingest_trajectory("time,v_leader,gap\n0.0,10,20\n")

    def test_empty_file(self):
        with pytest.raises(TrajectoryError):
            ingest_trajectory("")

    def test_header_only(self):
        with pytest.raises(TrajectoryError):
            ingest_trajectory("time,v_leader,v_follower,gap\n")

    def test_unparseable_cell(self):
        text = "time,v_leader,v_follower,gap\n0.0,ten,8,20\n"
        with pytest.raises(TrajectoryError) as exc:
            ingest_trajectory(text)
        assert exc.value.line == 2

    def test_custom_column_names_and_delimiter(self):
        text = "t;vl;vf;s\n0.0;10;8;20\n0.2;10;8;20\n"
        recs = ingest_trajectory(
            io.StringIO(text),
            columns={"time": "t", "leader_speed": "vl",
                     "follower_speed": "vf", "gap": "s"},
            delimiter=";",
        )
        assert len(recs) == 2

    def test_blank_lines_skipped(self):
        text = "time,v_leader,v_follower,gap,a_follower\n\n0.0,10,8,20,0\n\n0.2,10,8,20,0\n"
        assert len(ingest_trajectory(text)) == 2


class TestFitLinear:
    def test_milanes_round_trip(self):
        truth = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        res = fit_linear(synth_records(truth), form="milanes")
        assert res.params.k1 == pytest.approx(0.23, rel=1e-6)
        assert res.params.k2 == pytest.approx(0.07, rel=1e-6)
        assert res.params.t_hw == pytest.approx(1.5, rel=1e-6)
        assert res.rmse == pytest.approx(0.0, abs=1e-9)
        assert not res.negative_t_hw

    def test_generalized_round_trip(self):
        truth = LinearCfParams(form="generalized", k1=-0.415, k2=0.07, k3=0.23, k4=0.5)
        res = fit_linear(synth_records(truth, form="generalized"), form="generalized")
        assert res.params.k1 == pytest.approx(-0.415, rel=1e-6)
        assert res.params.k2 == pytest.approx(0.07, rel=1e-6)
        assert res.params.k3 == pytest.approx(0.23, rel=1e-6)
        assert res.params.k4 == pytest.approx(0.5, rel=1e-6)

    def test_reorder_invariance(self):
        truth = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        recs = synth_records(truth, noise=0.1, seed=4)
        res1 = fit_linear(recs, form="milanes")
        res2 = fit_linear(list(reversed(recs)), form="milanes")
        assert res2.params.k1 == pytest.approx(res1.params.k1, rel=1e-12)
        assert res2.rmse == pytest.approx(res1.rmse, rel=1e-12)

    def test_noise_rmse_matches_sigma(self):
        truth = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        res = fit_linear(synth_records(truth, n=10_000, noise=0.3, seed=7),
                         form="milanes")
        assert res.rmse == pytest.approx(0.3, rel=0.05)
        assert res.residual_mean == pytest.approx(0.0, abs=0.02)
        assert res.residual_min < 0 < res.residual_max

    def test_too_few_points(self):
        truth = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        with pytest.raises(ModelError):
            fit_linear(synth_records(truth, n=9), form="milanes")

    def test_rank_deficiency(self):
        # follower speed frozen: the -v_f regressor is collinear with d and vl-vf?
        # no -- freeze everything except time so all regressors are constant
        recs = [TrajectoryRecord(time=0.2 * i, leader_speed=10.0,
                                 follower_speed=10.0, gap=20.0, follower_accel=0.0)
                for i in range(20)]
        with pytest.raises(ModelError):
            fit_linear(recs, form="milanes")

    def test_unknown_form(self):
        truth = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        with pytest.raises(ModelError):
            fit_linear(synth_records(truth), form="idm")

    def test_negative_t_hw_flagged(self):
        # a repulsive gap law recovers a negative headway ratio
        rng = np.random.default_rng(3)
        recs = []
        for i in range(100):
            vf = rng.uniform(0, 40)
            vl = rng.uniform(0, 40)
            d = rng.uniform(5, 100)
            a = 0.2 * (d + 1.5 * vf) + 0.05 * (vl - vf)
            recs.append(TrajectoryRecord(time=0.2 * i, leader_speed=vl,
                                         follower_speed=vf, gap=d, follower_accel=a))
        res = fit_linear(recs, form="milanes")
        assert res.negative_t_hw
        assert res.params.t_hw > 0  # stored value is made usable

    def test_result_counts(self):
        truth = LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)
        res = fit_linear(synth_records(truth, n=123), form="milanes")
        assert isinstance(res, CalibrationResult)
        assert res.n_points == 123
