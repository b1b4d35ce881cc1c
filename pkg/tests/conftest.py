import numpy as np
import pytest

from housing_prodfn.dgp import generate_panel
from housing_prodfn.model_core import CD_CRS, ScenarioSpec


def small_spec(**kw) -> ScenarioSpec:
    base = dict(tech=CD_CRS, N=20, J=20, T=6, replications=4, seed=7)
    base.update(kw)
    return ScenarioSpec(**base)


@pytest.fixture
def cd_panel():
    return generate_panel(small_spec(), 0)


def rel_err(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))
