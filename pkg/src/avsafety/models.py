"""Behavior models for the tested AV.

Longitudinal control is a linear car-following law in one of two
parametrizations:

* ``generalized``: a = k1*v_f + k2*v_l + k3*d + k4
* ``milanes``:     a = k1*(d - t_hw*v_f) + k2*(v_l - v_f)

where ``d`` is the position difference between leader and follower (measured
front bumper to front bumper, so a bumper-to-bumper gap of zero corresponds to
``d == vehicle_length``).  Both forms describe the same model family; the
milanes form is the usual ACC controller with an explicit desired time
headway.  Lateral behavior is a MOBIL-style incentive/safety rule.

Model parameter files are TOML with the fields ``form``, ``k1``, ``k2``,
``k3``, ``k4``, ``t_hw`` and an optional ``[mobil]`` table.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ModelError(ValueError):
    """Invalid model parameters or malformed model file."""


@dataclass(frozen=True)
class LinearCfParams:
    """Parameters of the linear car-following law.

    Exactly the fields of the declared ``form`` are meaningful:
    ``generalized`` uses k1..k4, ``milanes`` uses k1, k2 and t_hw.
    """

    form: str  # "generalized" | "milanes"
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0
    t_hw: float = 0.0

    def __post_init__(self) -> None:
        if self.form not in ("generalized", "milanes"):
            raise ModelError(f"unknown car-following form {self.form!r}")
        if self.form == "milanes" and self.t_hw <= 0:
            raise ModelError("milanes form requires t_hw > 0")


@dataclass(frozen=True)
class MobilParams:
    politeness_f: float = 0.0
    incentive_threshold: float = 0.1  # m/s^2
    safe_braking_limit: float = 4.0   # m/s^2, max imposed deceleration

    def __post_init__(self) -> None:
        if not 0.0 <= self.politeness_f <= 1.0:
            raise ModelError("politeness factor must lie in [0, 1]")
        if self.safe_braking_limit <= 0:
            raise ModelError("safe_braking_limit must be positive")


@dataclass(frozen=True)
class BehaviorModel:
    """The tested AV: a longitudinal CF law plus an optional lateral rule."""

    cf: LinearCfParams
    mobil: Optional[MobilParams] = None
    name: str = ""


def linear_cf_accel(params: LinearCfParams, v_f: float, v_l: float, gap_d: float) -> float:
    """Generalized-form acceleration k1*v_f + k2*v_l + k3*d + k4, unclamped."""
    if params.form != "generalized":
        raise ModelError("linear_cf_accel requires generalized-form params")
    return params.k1 * v_f + params.k2 * v_l + params.k3 * gap_d + params.k4


def milanes_accel(params: LinearCfParams, v_f: float, v_l: float, gap_d: float) -> float:
    """Milanes-form acceleration k1*(d - t_hw*v_f) + k2*(v_l - v_f), unclamped."""
    if params.form != "milanes":
        raise ModelError("milanes_accel requires milanes-form params")
    return params.k1 * (gap_d - params.t_hw * v_f) + params.k2 * (v_l - v_f)


def milanes_to_generalized(params: LinearCfParams) -> LinearCfParams:
    """Rearrange the milanes form into the generalized form.

    k1*(d - t_hw*v_f) + k2*(v_l - v_f)
        == (-(k1*t_hw + k2))*v_f + k2*v_l + k1*d, so the two forms agree for
    every input.
    """
    if params.form != "milanes":
        raise ModelError("expected milanes-form params")
    return LinearCfParams(
        form="generalized",
        k1=-(params.k1 * params.t_hw + params.k2),
        k2=params.k2,
        k3=params.k1,
        k4=0.0,
    )


def as_generalized(params: LinearCfParams) -> LinearCfParams:
    return params if params.form == "generalized" else milanes_to_generalized(params)


def cf_accel(params: LinearCfParams, v_f: float, v_l: float, gap_d: float) -> float:
    """Acceleration under either form."""
    if params.form == "milanes":
        return milanes_accel(params, v_f, v_l, gap_d)
    return linear_cf_accel(params, v_f, v_l, gap_d)


def mobil_decide(
    ego_gain: float,
    new_follower_delta: float,
    old_follower_delta: float,
    new_follower_required_decel: float,
    params: MobilParams,
) -> bool:
    """True iff a lane change should be performed.

    The incentive criterion is strict (> threshold); the safety criterion
    caps the deceleration imposed on the new follower.
    """
    if new_follower_required_decel > params.safe_braking_limit:
        return False
    incentive = ego_gain + params.politeness_f * (new_follower_delta + old_follower_delta)
    return incentive > params.incentive_threshold


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def load_model(path: Union[str, Path]) -> BehaviorModel:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ModelError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(data, default_name=path.stem)


def model_from_dict(data: dict, default_name: str = "") -> BehaviorModel:
    if "form" not in data:
        raise ModelError("model file missing required field 'form'")
    cf = LinearCfParams(
        form=data["form"],
        k1=float(data.get("k1", 0.0)),
        k2=float(data.get("k2", 0.0)),
        k3=float(data.get("k3", 0.0)),
        k4=float(data.get("k4", 0.0)),
        t_hw=float(data.get("t_hw", 0.0)),
    )
    mobil = None
    if "mobil" in data:
        mb = data["mobil"]
        mobil = MobilParams(
            politeness_f=float(mb.get("politeness_f", 0.0)),
            incentive_threshold=float(mb.get("incentive_threshold", 0.1)),
            safe_braking_limit=float(mb.get("safe_braking_limit", 4.0)),
        )
    return BehaviorModel(cf=cf, mobil=mobil, name=str(data.get("name", default_name)))


def save_model(model: BehaviorModel, path: Union[str, Path]) -> None:
    lines = []
    if model.name:
        lines.append(f'name = "{model.name}"')
    cf = model.cf
    lines.append(f'form = "{cf.form}"')
    lines.append(f"k1 = {cf.k1!r}")
    lines.append(f"k2 = {cf.k2!r}")
    if cf.form == "generalized":
        lines.append(f"k3 = {cf.k3!r}")
        lines.append(f"k4 = {cf.k4!r}")
    else:
        lines.append(f"t_hw = {cf.t_hw!r}")
    if model.mobil is not None:
        lines.append("")
        lines.append("[mobil]")
        lines.append(f"politeness_f = {model.mobil.politeness_f!r}")
        lines.append(f"incentive_threshold = {model.mobil.incentive_threshold!r}")
        lines.append(f"safe_braking_limit = {model.mobil.safe_braking_limit!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def fixture_path(name: str) -> Path:
    """Path to a bundled model file, e.g. fixture_path('veh_a')."""
    return Path(__file__).parent / "fixtures" / f"{name.lower()}.toml"


def load_fixture(name: str) -> BehaviorModel:
    return load_model(fixture_path(name))
