import numpy as np
import pytest

from housing_prodfn.baselines import PerLandVars, cdg_estimate, egs_estimate, loglinear_ols, ols_estimate
from housing_prodfn.dgp import generate_panel
from housing_prodfn.model_core import CD_DRS, ScenarioSpec
from housing_prodfn.proposed import EstimationError

from conftest import small_spec

NOISE_FREE = dict(eps_sd=0.0, productivity_on=False, price_range=(1.0, 1.0))


def test_per_land_zero_profit(cd_panel):
    v = PerLandVars.from_panel(cd_panel)
    assert np.max(np.abs(v.v - v.m - v.pl) / v.v) <= 1e-12


def test_egs_noise_free_crs():
    p = generate_panel(small_spec(eps_sd=0.0), 0)
    r = egs_estimate(p)
    assert np.max(np.abs(r.eps_l - 0.4)) <= 1e-8
    assert r.eps_k_mean == pytest.approx(0.6, abs=1e-8)


def test_cdg_noise_free_constant_share():
    p = generate_panel(small_spec(eps_sd=0.0), 0)
    r = cdg_estimate(p)
    assert np.max(np.abs(r.eps_k - 0.6)) <= 1e-6
    assert r.eps_l_mean is None


def test_ols_noise_free():
    p = generate_panel(small_spec(**NOISE_FREE), 0)
    r = ols_estimate(p)
    assert r.eps_k_mean == pytest.approx(0.6, abs=1e-12)
    assert r.eps_l_mean == pytest.approx(0.4, abs=1e-12)


def test_loglinear_rank_deficient():
    # k is an exact linear function of l here
    p = generate_panel(small_spec(**NOISE_FREE), 0)
    with pytest.raises(EstimationError, match="rank"):
        loglinear_ols(p)


def test_loglinear_puts_weight_on_capital(cd_panel):
    # log value = k - log 0.6 + eps exactly, so OLS returns (-log 0.6, 1, 0) plus eps projected on (1, k, l)
    r = loglinear_ols(cd_panel)
    X = np.stack([np.ones(cd_panel.n_obs), cd_panel.k.ravel(), cd_panel.l.ravel()], axis=1)
    b = np.linalg.lstsq(X, cd_panel.eps.ravel(), rcond=None)[0]
    assert r.diagnostics["intercept"] == pytest.approx(-np.log(0.6) + b[0], abs=1e-9)
    assert r.eps_k_mean == pytest.approx(1.0 + b[1], abs=1e-9)
    assert r.eps_l_mean == pytest.approx(b[2], abs=1e-9)


@pytest.fixture(scope="module")
def drs_panel():
    return generate_panel(ScenarioSpec(tech=CD_DRS), 0)


def test_egs_drs_upward_bias(drs_panel):
    # the constant-returns assumption loads all residual value onto land
    r = egs_estimate(drs_panel)
    assert r.eps_l_mean > 0.35 + 0.05
    assert r.eps_l_mean == pytest.approx(0.458, abs=0.02)


def test_ols_drs(drs_panel):
    assert ols_estimate(drs_panel).eps_l_mean == pytest.approx(0.446, abs=0.05)


def test_cdg_cd(drs_panel):
    assert cdg_estimate(drs_panel).eps_k_mean == pytest.approx(0.548, abs=0.02)
