import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from housing_prodfn.dgp import generate_panel
from housing_prodfn.model_core import CES_DRS, VisibilityMask
from housing_prodfn.proposed import estimate
from housing_prodfn.recovery import RecoveryError, apply_mask, hide, recover, recover_capital, recover_value

from conftest import rel_err, small_spec

positive = st.floats(1e-3, 1e6, allow_nan=False)


def test_arithmetic():
    assert recover_capital(150.0, 60.0) == 90.0
    assert recover_value(90.0, 60.0) == 150.0


@given(positive, positive)
def test_round_trip(K, R):
    v = recover_value(K, R)
    # exact up to one rounding of the sum
    assert abs(recover_capital(v, R) - K) <= 4e-16 * v


@pytest.mark.parametrize("value,R", [(60.0, 60.0), (50.0, 60.0), (np.nan, 1.0)])
def test_capital_precondition(value, R):
    with pytest.raises(RecoveryError):
        recover_capital(value, R)


def test_value_precondition():
    with pytest.raises(RecoveryError):
        recover_value(0.0, 10.0)
    with pytest.raises(RecoveryError):
        recover_value(5.0, -10.0)


def test_recover_exact_on_generated(cd_panel):
    K = recover_capital(cd_panel.value, cd_panel.value - cd_panel.K)
    assert rel_err(K, cd_panel.K) <= 1e-12


@pytest.mark.parametrize("mask", ["hide-capital", "hide-value"])
def test_mask_recovers_panel(cd_panel, mask):
    m = VisibilityMask.parse(mask)
    hidden = hide(cd_panel, m)
    col = "K" if mask == "hide-capital" else "value"
    assert np.isnan(getattr(hidden, col)).all()
    back = recover(hidden)
    assert back.mask == VisibilityMask()
    for name in ("K", "value", "R"):
        assert rel_err(getattr(back, name), getattr(cd_panel, name)) <= 1e-12


def test_all_observed_identity(cd_panel):
    assert apply_mask(cd_panel, VisibilityMask()) is cd_panel


@pytest.mark.parametrize("mask", ["hide-capital", "hide-value"])
def test_estimates_unchanged(mask):
    p = generate_panel(small_spec(tech=CES_DRS), 1)
    full = estimate(p)
    rec = estimate(apply_mask(p, VisibilityMask.parse(mask)))
    assert rel_err(rec.eps_k_mean, full.eps_k_mean) <= 1e-12
    assert rel_err(rec.eps_l_mean, full.eps_l_mean) <= 1e-12
