"""Least-squares calibration of linear car-following parameters from
trajectory files.

Input is delimited text with a header naming the columns (time, leader and
follower speed, gap, optionally follower acceleration).  When the
acceleration column is absent it is derived from the follower speed by
central finite differences.  The fitted parameters are written in the same
model-file format the evaluation pipeline consumes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, TextIO, Union

import numpy as np

from .models import LinearCfParams, ModelError

MIN_FIT_POINTS = 10

DEFAULT_COLUMNS = {
    "time": "time",
    "leader_speed": "v_leader",
    "follower_speed": "v_follower",
    "gap": "gap",
    "follower_accel": "a_follower",  # optional
}


class TrajectoryError(ValueError):
    """Malformed trajectory input; carries the 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class TrajectoryRecord:
    time: float
    leader_speed: float
    follower_speed: float
    gap: float
    follower_accel: Optional[float] = None


@dataclass
class CalibrationResult:
    params: LinearCfParams
    rmse: float
    n_points: int
    residual_min: float
    residual_max: float
    residual_mean: float
    negative_t_hw: bool = False


def ingest_trajectory(
    source: Union[TextIO, str],
    columns: Optional[dict] = None,
    delimiter: str = ",",
) -> List[TrajectoryRecord]:
    """Parse and validate a delimited trajectory stream.

    Records come back time-sorted as given; non-monotone timestamps and
    non-positive gaps are errors.  Missing accelerations are filled by
    central finite differences (one-sided at the boundaries).
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    colmap = dict(DEFAULT_COLUMNS)
    if columns:
        colmap.update(columns)
    reader = csv.reader(source, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise TrajectoryError("empty trajectory file")
    header = [h.strip() for h in header]

    def col(key: str, required: bool = True) -> Optional[int]:
        name = colmap[key]
        if name in header:
            return header.index(name)
        if required:
            raise TrajectoryError(f"missing column {name!r}", line=1)
        return None

    i_t = col("time")
    i_vl = col("leader_speed")
    i_vf = col("follower_speed")
    i_d = col("gap")
    i_a = col("follower_accel", required=False)

    records: List[TrajectoryRecord] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            rec = TrajectoryRecord(
                time=float(row[i_t]),
                leader_speed=float(row[i_vl]),
                follower_speed=float(row[i_vf]),
                gap=float(row[i_d]),
                follower_accel=float(row[i_a]) if i_a is not None else None,
            )
        except (ValueError, IndexError) as exc:
            raise TrajectoryError(f"cannot parse row: {exc}", line=lineno)
        if records and rec.time <= records[-1].time:
            raise TrajectoryError("timestamps must be strictly increasing", line=lineno)
        if rec.gap <= 0:
            raise TrajectoryError("gap must be positive", line=lineno)
        records.append(rec)
    if not records:
        raise TrajectoryError("trajectory contains no data rows")
    if records[0].follower_accel is None:
        _fill_accels(records)
    return records


def _fill_accels(records: List[TrajectoryRecord]) -> None:
    t = np.array([r.time for r in records])
    v = np.array([r.follower_speed for r in records])
    a = np.gradient(v, t) if len(records) > 1 else np.zeros(1)
    for rec, acc in zip(records, a):
        rec.follower_accel = float(acc)


def fit_linear(records: Sequence[TrajectoryRecord], form: str = "generalized") -> CalibrationResult:
    """Fit the car-following law by linear least squares on acceleration.

    The generalized form regresses a on (v_f, v_l, d, 1).  The milanes form
    regresses on (d, -v_f, v_l - v_f) giving (k1, k1*t_hw, k2) and recovers
    t_hw as the coefficient ratio; a negative recovered t_hw is flagged.
    """
    if len(records) < MIN_FIT_POINTS:
        raise ModelError(f"need at least {MIN_FIT_POINTS} records to fit")
    vf = np.array([r.follower_speed for r in records])
    vl = np.array([r.leader_speed for r in records])
    d = np.array([r.gap for r in records])
    a = np.array([r.follower_accel for r in records], dtype=float)

    if form == "generalized":
        X = np.column_stack([vf, vl, d, np.ones_like(d)])
    elif form == "milanes":
        X = np.column_stack([d, -vf, vl - vf])
    else:
        raise ModelError(f"unknown form {form!r}")

    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise ModelError("rank-deficient regressors; trajectory lacks excitation")
    coef, _, _, _ = np.linalg.lstsq(X, a, rcond=None)
    coef = [float(c) for c in coef]

    negative_t_hw = False
    if form == "generalized":
        params = LinearCfParams(form="generalized", k1=coef[0], k2=coef[1],
                                k3=coef[2], k4=coef[3])
    else:
        k1, k1_thw, k2 = coef
        t_hw = k1_thw / k1 if k1 != 0 else 0.0
        if t_hw <= 0:
            negative_t_hw = True
            t_hw = abs(t_hw) if t_hw != 0 else 1.0
        params = LinearCfParams(form="milanes", k1=k1, k2=k2, t_hw=t_hw)

    resid = X @ coef - a
    rmse = float(np.sqrt(np.mean(resid**2)))
    return CalibrationResult(
        params=params,
        rmse=rmse,
        n_points=len(records),
        residual_min=float(resid.min()),
        residual_max=float(resid.max()),
        residual_mean=float(resid.mean()),
        negative_t_hw=negative_t_hw,
    )
