import numpy as np
import pytest

from avsafety.models import BehaviorModel, LinearCfParams, MobilParams
from avsafety.scenario import ScenarioBounds


@pytest.fixture
def milanes_params():
    return LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5)


@pytest.fixture
def milanes_model(milanes_params):
    return BehaviorModel(cf=milanes_params, mobil=MobilParams(), name="milanes_default")


@pytest.fixture
def bounds_factory():
    def make(T, **kw):
        return ScenarioBounds(horizon_T=T, **kw)

    return make


def unit_cube(p):
    """[0,1]^p as an inequality-only polytope."""
    A = np.vstack([np.eye(p), -np.eye(p)])
    b = np.concatenate([np.ones(p), np.zeros(p)])
    return A, b
