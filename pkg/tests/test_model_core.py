import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from housing_prodfn.model_core import (
    CD_CRS,
    CD_DRS,
    CES_CRS,
    CES_DRS,
    DomainError,
    Family,
    Panel,
    ScenarioSpec,
    TechnologyParams,
    VisibilityMask,
    cd_elasticities,
    ces_elasticities,
    elasticities,
    log_technology,
    marginal_product_k,
    preset,
    production_output,
)


def fd_elasticity(params, K, L, h=1e-5):
    """Central differences of log H in log K and log L."""
    k, l = math.log(K), math.log(L)
    f = lambda a, b: float(log_technology(params, math.exp(a), math.exp(b)))
    ek = (f(k + h, l) - f(k - h, l)) / (2 * h)
    el = (f(k, l + h) - f(k, l - h)) / (2 * h)
    return ek, el


class TestTechnology:
    def test_presets_returns(self):
        assert CD_CRS.is_crs and CES_CRS.is_crs
        assert not CD_DRS.is_crs and not CES_DRS.is_crs
        assert CD_DRS.returns_to_scale == pytest.approx(0.9)
        assert CES_DRS.returns_to_scale == pytest.approx(0.9)
        assert preset("ces", "drs") is CES_DRS

    @pytest.mark.parametrize(
        "kw",
        [
            dict(family="cd", beta_k=0.0, beta_l=0.4),
            dict(family="cd", beta_k=0.7, beta_l=0.4),
            dict(family="ces", beta_k=0.5, beta_l=0.5, rho=1.0),
            dict(family="ces", beta_k=0.5, beta_l=0.5, alpha_scale=1.2),
        ],
    )
    def test_invalid_params(self, kw):
        with pytest.raises(DomainError):
            TechnologyParams(**kw)

    def test_unknown_preset(self):
        with pytest.raises(DomainError):
            preset("translog", "crs")


class TestElasticities:
    def test_cd_constant(self):
        e = cd_elasticities(CD_DRS, np.array([1.0, 50.0]), np.array([3.0, 70.0]))
        np.testing.assert_array_equal(e.eps_k, [0.55, 0.55])
        np.testing.assert_array_equal(e.eps_l, [0.35, 0.35])

    def test_ces_symmetry(self):
        p = TechnologyParams(Family.CES, 0.5, 0.5, rho=0.5, alpha_scale=1.0)
        e = ces_elasticities(p, 7.0, 7.0)
        assert e.eps_k == pytest.approx(0.5, abs=1e-15)
        assert e.eps_l == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("params", [CD_CRS, CD_DRS, CES_CRS, CES_DRS,
                                        TechnologyParams(Family.CES, 0.6, 0.4, 0.5, 1.0)])
    def test_matches_finite_differences(self, params):
        for K, L in [(1.07, 50.0), (300.0, 80.0), (2.0e4, 55.0)]:
            e = elasticities(params, K, L)
            ek, el = fd_elasticity(params, K, L)
            assert abs(e.eps_k - ek) < 1e-6
            assert abs(e.eps_l - el) < 1e-6

    @given(st.floats(0.01, 1e5), st.floats(0.01, 1e5))
    @settings(max_examples=200)
    def test_ces_elasticities_sum_to_scale(self, K, L):
        e = ces_elasticities(CES_DRS, K, L)
        assert e.eps_k + e.eps_l == pytest.approx(0.9, abs=1e-12)
        assert 0 < e.eps_k < 0.9

    def test_domain(self):
        with pytest.raises(DomainError):
            elasticities(CES_CRS, -1.0, 2.0)


class TestProduction:
    def test_unit_inputs(self):
        assert production_output(CD_CRS, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
        p = TechnologyParams(Family.CES, 0.6, 0.4, rho=0.5, alpha_scale=1.0)
        assert production_output(p, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("params", [CD_DRS, CES_CRS])
    def test_hicks_neutral(self, params):
        a = 1.37
        d = math.log(production_output(params, 40.0, 60.0, omega=a)) - math.log(production_output(params, 40.0, 60.0))
        assert d == pytest.approx(a, abs=1e-12)

    @pytest.mark.parametrize("params", [CD_CRS, CES_DRS])
    def test_marginal_product_fd(self, params):
        K, L, h = 120.0, 70.0, 1e-4
        fd = (production_output(params, K + h, L) - production_output(params, K - h, L)) / (2 * h)
        assert marginal_product_k(params, K, L) == pytest.approx(fd, rel=1e-8)


class TestScenarioSpec:
    def test_defaults(self):
        s = ScenarioSpec()
        assert s.shape == (100, 100, 6)
        assert s.replications == 100

    @pytest.mark.parametrize("kw", [dict(T=1), dict(N=0), dict(eps_sd=-1), dict(price_range=(2, 1)),
                                    dict(seed=-3), dict(land_range=(0, 5))])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            ScenarioSpec(**kw)

    def test_unknown_key_rejected(self):
        with pytest.raises(DomainError, match="unknown"):
            ScenarioSpec.from_dict({"N": 3, "colour": "red"})

    @given(
        st.sampled_from([CD_CRS, CD_DRS, CES_CRS, CES_DRS]),
        st.booleans(),
        st.integers(1, 50),
        st.integers(2, 10),
        st.floats(0, 1, allow_nan=False),
        st.integers(0, 2**64 - 1),
    )
    def test_round_trip(self, tech, prod, N, T, eps_sd, seed):
        s = ScenarioSpec(tech=tech, productivity_on=prod, N=N, T=T, eps_sd=eps_sd, seed=seed)
        assert ScenarioSpec.from_dict(s.to_dict()) == s


class TestMaskAndPanel:
    def test_mask_needs_two_observed(self):
        with pytest.raises(DomainError):
            VisibilityMask(capital_observed=False, value_observed=False)
        assert VisibilityMask.parse("hide-value").name == "hide-value"
        with pytest.raises(DomainError):
            VisibilityMask.parse("hide-everything")

    def test_panel_read_only_and_logs(self):
        L = np.full((2, 2, 2), 60.0)
        K = np.full((2, 2, 2), 90.0)
        p = Panel(L=L, K=K, value=K + 30.0, R=np.full((2, 2, 2), 30.0))
        with pytest.raises(ValueError):
            p.K[0, 0, 0] = 1.0
        assert p.n_obs == 8
        np.testing.assert_allclose(p.k, np.log(90.0))
        assert np.all(p.zero_profit_gap() == 0.0)
        obs = p.observation(1, 0, 1)
        assert obs.K == 90.0 and obs.l == pytest.approx(math.log(60.0))
        assert len(list(p)) == 8
