import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from housing_prodfn.model_core import CES_CRS, DomainError, ScenarioSpec, VisibilityMask
from housing_prodfn.montecarlo import (
    ConfigError,
    ReplicationRow,
    render_markdown,
    rows_to_csv,
    run_replication,
    run_study,
    scenario_grid,
    summarize,
    summary_to_csv,
    quantile,
)

from conftest import small_spec


def brute_quantile(values, p):
    xs = sorted(values)
    h = (len(xs) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


class TestQuantile:
    def test_midpoint(self):
        assert quantile([1, 2, 3, 4], 0.5) == 2.5

    @given(st.floats(-1e6, 1e6), st.integers(1, 30), st.floats(0, 1))
    def test_constant(self, c, n, p):
        assert quantile([c] * n, p) == pytest.approx(c, rel=1e-12, abs=1e-300)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            v = rng.normal(size=rng.integers(1, 200)).tolist()
            p = float(rng.uniform())
            assert quantile(v, p) == pytest.approx(brute_quantile(v, p), rel=1e-12, abs=1e-12)

    def test_empty(self):
        with pytest.raises(DomainError):
            quantile([], 0.5)


class TestReplication:
    def test_deterministic(self):
        spec = small_spec()
        assert run_replication(spec, rep_id=1) == run_replication(spec, rep_id=1)

    def test_one_row_per_method(self):
        rows = run_replication(small_spec(), ("egs", "proposed"), rep_id=0)
        assert [r.method for r in rows] == ["egs", "proposed"]
        assert all(r.ok for r in rows)

    def test_masked_equals_full(self):
        spec = small_spec()
        full = run_replication(spec, ("proposed",), rep_id=2)[0]
        hid = run_replication(spec, ("proposed",), VisibilityMask(capital_observed=False), rep_id=2)[0]
        assert hid.eps_k == pytest.approx(full.eps_k, rel=1e-12)
        assert hid.eps_l == pytest.approx(full.eps_l, rel=1e-12)

    def test_rep_out_of_range(self):
        with pytest.raises(ConfigError):
            run_replication(small_spec(replications=2), rep_id=2)

    def test_generation_failure_recorded(self):
        spec = ScenarioSpec(tech=CES_CRS, replications=2)  # negative land cost not allowed
        rows = run_replication(spec, ("proposed", "egs"), rep_id=0)
        assert [r.ok for r in rows] == [False, False]
        assert "generate" in rows[0].error


class TestStudy:
    def test_parallel_equals_serial(self):
        spec = small_spec(replications=4)
        a = run_study(spec, ("egs", "proposed"), workers=1)
        b = run_study(spec, ("egs", "proposed"), workers=2)
        assert summary_to_csv(a) == summary_to_csv(b)
        assert rows_to_csv(a.replications) == rows_to_csv(b.replications)

    def test_needs_two(self):
        with pytest.raises(ConfigError):
            run_study(small_spec(replications=1))

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            run_study(small_spec(), ("magic",))

    def test_zero_variance_without_noise(self):
        spec = small_spec(eta_sd=0.0, eps_sd=0.0, replications=3)
        s = run_study(spec, ("proposed",))
        r = s.get("custom", "proposed", "eps_k")
        assert r.sd ** 2 <= 1e-10 and r.q025 <= r.q975

    def test_failure_warning(self):
        s = run_study(ScenarioSpec(tech=CES_CRS, replications=2), ("proposed",))
        assert s.warnings and "2 of 2" in s.warnings[0]
        r = s.get("custom", "proposed", "eps_k")
        assert r.failures == 2 and r.n == 0 and math.isnan(r.mean)

    def test_failures_excluded_from_quantiles(self):
        ok = ReplicationRow("x", 0, "proposed", 0.5, 0.4, 0.5, 0.4)
        ok2 = ReplicationRow("x", 1, "proposed", 0.7, 0.2, 0.5, 0.4)
        bad = ReplicationRow("x", 2, "proposed", math.nan, math.nan, 0.5, 0.4, ok=False, error="boom")
        s = summarize([ok, ok2, bad], ("proposed",), "x")
        r = s.get("x", "proposed", "eps_k")
        assert (r.n, r.failures) == (2, 1)
        assert r.mean == pytest.approx(0.6)
        assert s.warnings


class TestGrid:
    def test_table1(self):
        cells = scenario_grid(1)
        assert len(cells) == 4
        assert all(c.spec.tech.family.value == "cd" and c.methods == ("egs", "cdg", "proposed") for c in cells)
        assert sorted((c.spec.tech.is_crs, c.spec.productivity_on) for c in cells) == [
            (False, False), (False, True), (True, False), (True, True)]

    def test_table2(self):
        cells = scenario_grid(2)
        assert len(cells) == 4 and all(c.spec.tech.family.value == "ces" for c in cells)

    def test_table3(self):
        cells = scenario_grid(3)
        assert len(cells) == 20
        dims = {(c.spec.N, c.spec.J) for c in cells}
        assert dims == {(100, 100), (100, 10), (10, 100), (50, 50), (10, 10)}
        assert all(c.methods == ("proposed",) and c.spec.productivity_on for c in cells)

    @pytest.mark.parametrize("tid,hidden", [(4, "capital_observed"), (5, "value_observed")])
    def test_masked_tables(self, tid, hidden):
        cells = scenario_grid(tid)
        assert len(cells) == 8
        assert all(not getattr(c.mask, hidden) and c.methods == ("proposed",) for c in cells)

    def test_unknown(self):
        with pytest.raises(ConfigError):
            scenario_grid(6)


class TestRender:
    def test_table1_dashes(self):
        base = small_spec(replications=2)
        from housing_prodfn.montecarlo import run_table

        s = run_table(1, base)
        md = render_markdown(1, s, base)
        assert "| True | EGS | CDG | Proposed |" in md
        assert md.count("--") >= 8
        assert "Constant Returns to Scale with Productivity" in md

    def test_table4_layout(self):
        base = small_spec(replications=2)
        from housing_prodfn.montecarlo import run_table

        md = render_markdown(4, run_table(4, base), base)
        assert "Est. β_k (SE)" in md
        # header plus eight cells
        assert md.count("\n| ") == 9
