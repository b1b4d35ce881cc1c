"""Seeded Monte Carlo replications, aggregation and table layouts."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines, proposed
from .dgp import GenerationError, RngStream, SolverError, generate_panel, true_elasticity_summary
from .model_core import (
    CD_CRS,
    CD_DRS,
    CES_CRS,
    CES_DRS,
    DomainError,
    Family,
    ScenarioSpec,
    TechnologyParams,
    VisibilityMask,
)
from .recovery import RecoveryError, apply_mask

log = logging.getLogger(__name__)

METHODS: Dict[str, Callable] = {
    "ols": baselines.ols_estimate,
    "egs": baselines.egs_estimate,
    "cdg": baselines.cdg_estimate,
    "proposed": proposed.estimate,
}
ALL_METHODS = ("ols", "egs", "cdg", "proposed")
PARAMS = ("eps_k", "eps_l")

FAILURE_WARN_SHARE = 0.10


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ReplicationRow:
    scenario: str
    replication: int
    method: str
    eps_k: float
    eps_l: float
    true_eps_k: float
    true_eps_l: float
    ok: bool = True
    error: str = ""
    objective: float = math.nan
    iterations: int = 0


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    method: str
    param: str
    true_mean: float
    mean: float
    q025: float
    q975: float
    sd: float
    n: int
    failures: int


@dataclass
class McSummary:
    rows: List[SummaryRow]
    replications: List[ReplicationRow] = field(default_factory=list, repr=False)
    warnings: List[str] = field(default_factory=list)

    def get(self, scenario: str, method: str, param: str) -> SummaryRow:
        for r in self.rows:
            if (r.scenario, r.method, r.param) == (scenario, method, param):
                return r
        raise KeyError((scenario, method, param))

    def extend(self, other: "McSummary") -> None:
        self.rows.extend(other.rows)
        self.replications.extend(other.replications)
        self.warnings.extend(other.warnings)


def quantile(values: Sequence[float], p: float) -> float:
    """Order-statistic quantile, linear interpolation between closest ranks."""
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise DomainError("quantile of an empty sample")
    if not 0.0 <= p <= 1.0:
        raise DomainError("p must lie in [0, 1]")
    return float(np.quantile(a, p, method="linear"))


# ---------------------------------------------------------------------------
# replications


def _diag(report) -> Tuple[float, int]:
    d = report.diagnostics
    obj = d.get("step1_objective", d.get("rent_fit_sse", math.nan))
    its = int(d.get("step1_iterations", 0)) + int(d.get("step2_iterations", 0))
    return float(obj), its


def run_replication(
    spec: ScenarioSpec,
    methods: Sequence[str] = ALL_METHODS,
    mask: VisibilityMask = VisibilityMask(),
    rep_id: int = 0,
    scenario: str = "custom",
) -> List[ReplicationRow]:
    """Generate, mask and recover, then estimate with each method.

    Failures are recorded in the returned rows; nothing is raised.
    """
    if not 0 <= rep_id < spec.replications:
        raise ConfigError(f"replication {rep_id} outside 0..{spec.replications - 1}")
    nan = math.nan
    try:
        full = generate_panel(spec, RngStream(spec.seed, rep_id))
        truth = true_elasticity_summary(full, spec.tech)
        panel = apply_mask(full, mask, spec.capital_price)
    except (GenerationError, SolverError, RecoveryError, DomainError) as exc:
        return [
            ReplicationRow(scenario, rep_id, m, nan, nan, nan, nan, ok=False, error=f"generate: {exc}")
            for m in methods
        ]
    rows = []
    for m in methods:
        try:
            rep = METHODS[m](panel)
        except (proposed.EstimationError, DomainError, np.linalg.LinAlgError, FloatingPointError) as exc:
            rows.append(ReplicationRow(scenario, rep_id, m, nan, nan, truth.eps_k, truth.eps_l, ok=False, error=str(exc)))
            continue
        obj, its = _diag(rep)
        rows.append(
            ReplicationRow(
                scenario, rep_id, m,
                nan if rep.eps_k_mean is None else rep.eps_k_mean,
                nan if rep.eps_l_mean is None else rep.eps_l_mean,
                truth.eps_k, truth.eps_l, objective=obj, iterations=its,
            )
        )
    return rows


def _run_one(args) -> List[ReplicationRow]:
    return run_replication(*args)


def summarize(rows: Sequence[ReplicationRow], methods: Sequence[str], scenario: str) -> McSummary:
    out: List[SummaryRow] = []
    warnings: List[str] = []
    for m in methods:
        mine = [r for r in rows if r.method == m]
        good = [r for r in mine if r.ok]
        failures = len(mine) - len(good)
        if mine and failures > FAILURE_WARN_SHARE * len(mine):
            msg = f"{scenario}/{m}: {failures} of {len(mine)} replications failed"
            log.warning(msg)
            warnings.append(msg)
        for prm in PARAMS:
            vals = np.array([getattr(r, prm) for r in good])
            truth = np.array([getattr(r, "true_" + prm) for r in mine if not math.isnan(getattr(r, "true_" + prm))])
            tm = float(truth.mean()) if truth.size else math.nan
            if vals.size == 0 or np.all(np.isnan(vals)):
                out.append(SummaryRow(scenario, m, prm, tm, math.nan, math.nan, math.nan, math.nan, 0, failures))
                continue
            out.append(
                SummaryRow(
                    scenario, m, prm, tm,
                    mean=float(vals.mean()),
                    q025=quantile(vals, 0.025),
                    q975=quantile(vals, 0.975),
                    sd=float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                    n=int(vals.size),
                    failures=failures,
                )
            )
    return McSummary(out, list(rows), warnings)


def run_study(
    spec: ScenarioSpec,
    methods: Sequence[str] = ALL_METHODS,
    mask: VisibilityMask = VisibilityMask(),
    scenario: str = "custom",
    workers: int = 1,
) -> McSummary:
    """All replications of one cell, aggregated in replication order."""
    if spec.replications < 2:
        raise ConfigError("a study needs at least two replications")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown methods: {unknown}")
    jobs = [(spec, tuple(methods), mask, r, scenario) for r in range(spec.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_one, jobs))
    else:
        chunks = [_run_one(j) for j in jobs]
    rows = [row for chunk in chunks for row in chunk]
    return summarize(rows, methods, scenario)


# ---------------------------------------------------------------------------
# table layouts


@dataclass(frozen=True)
class Cell:
    scenario: str
    label: str
    block: str
    spec: ScenarioSpec
    mask: VisibilityMask
    methods: Tuple[str, ...]


TECH_BLOCKS: List[Tuple[str, str, TechnologyParams]] = [
    ("cd-crs", "Cobb-Douglas, constant returns to scale", CD_CRS),
    ("cd-drs", "Cobb-Douglas, decreasing returns to scale", CD_DRS),
    ("ces-crs", "CES, constant returns to scale", CES_CRS),
    ("ces-drs", "CES, decreasing returns to scale", CES_DRS),
]
TABLE3_DIMS = [(100, 100), (100, 10), (10, 100), (50, 50), (10, 10)]
TABLE_IDS = (1, 2, 3, 4, 5)


def _cell_spec(base: ScenarioSpec, tech: TechnologyParams, prod: bool, **kw) -> ScenarioSpec:
    # land cost is a residual; the CES constant-returns design and rare large
    # negative eps draws make it negative without affecting any estimator
    return base.replace(tech=tech, productivity_on=prod, allow_negative_rent=True, **kw)


def _returns_cells(table: int, base: ScenarioSpec, family: Optional[Family], mask, methods):
    cells = []
    for key, _, tech in TECH_BLOCKS:
        if family is not None and tech.family is not family:
            continue
        ret = "Constant" if tech.is_crs else "Decreasing"
        for prod in (True, False):
            label = f"{ret} Returns to Scale {'with' if prod else 'without'} Productivity"
            if family is None:
                fam = "Cobb-Douglas" if tech.family is Family.COBB_DOUGLAS else "CES"
                label = f"{fam}: {'CRS' if tech.is_crs else 'DRS'} {'with' if prod else 'without'} Productivity"
            cells.append(
                Cell(
                    scenario=f"t{table}-{key}-{'prod' if prod else 'noprod'}",
                    label=label,
                    block=key,
                    spec=_cell_spec(base, tech, prod),
                    mask=mask,
                    methods=methods,
                )
            )
    return cells


def scenario_grid(table_id: int, base: Optional[ScenarioSpec] = None) -> List[Cell]:
    """Cells of one published table; ``base`` supplies dimensions, seed and replications."""
    base = base or ScenarioSpec()
    if table_id == 1:
        return _returns_cells(1, base, Family.COBB_DOUGLAS, VisibilityMask(), ("egs", "cdg", "proposed"))
    if table_id == 2:
        return _returns_cells(2, base, Family.CES, VisibilityMask(), ("egs", "cdg", "proposed"))
    if table_id == 3:
        cells = []
        for key, title, tech in TECH_BLOCKS:
            for N, J in TABLE3_DIMS:
                cells.append(
                    Cell(
                        scenario=f"t3-{key}-N{N}-J{J}",
                        label=f"N={N}, J={J}",
                        block=title,
                        spec=_cell_spec(base, tech, True, N=N, J=J),
                        mask=VisibilityMask(),
                        methods=("proposed",),
                    )
                )
        return cells
    if table_id == 4:
        return _returns_cells(4, base, None, VisibilityMask(capital_observed=False), ("proposed",))
    if table_id == 5:
        return _returns_cells(5, base, None, VisibilityMask(value_observed=False), ("proposed",))
    raise ConfigError(f"unknown table id {table_id!r}; expected one of {TABLE_IDS}")


def run_table(table_id: int, base: Optional[ScenarioSpec] = None, workers: int = 1) -> McSummary:
    total = McSummary([])
    for cell in scenario_grid(table_id, base):
        log.info("running %s (%d replications)", cell.scenario, cell.spec.replications)
        total.extend(run_study(cell.spec, cell.methods, cell.mask, cell.scenario, workers))
    return total


# ---------------------------------------------------------------------------
# output


def _num(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def rows_to_csv(rows: Sequence[ReplicationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "replication", "method", "eps_k", "eps_l", "true_eps_k", "true_eps_l",
                "ok", "error", "objective", "iterations"])
    for r in rows:
        w.writerow([r.scenario, r.replication, r.method, _num(r.eps_k), _num(r.eps_l), _num(r.true_eps_k),
                    _num(r.true_eps_l), int(r.ok), r.error, _num(r.objective), r.iterations])
    return buf.getvalue()


def summary_to_csv(summary: McSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "method", "param", "true_mean", "mean", "q025", "q975", "sd", "n", "failures"])
    for r in summary.rows:
        w.writerow([r.scenario, r.method, r.param, _num(r.true_mean), _num(r.mean), _num(r.q025),
                    _num(r.q975), _num(r.sd), r.n, r.failures])
    return buf.getvalue()


def _f3(v: float) -> str:
    return "--" if v is None or math.isnan(v) else f"{v:.3f}"


def _ci(r: Optional[SummaryRow]) -> str:
    if r is None or math.isnan(r.mean):
        return "--"
    return f"({r.q025:.3f}–{r.q975:.3f})"


def _lookup(summary: McSummary, scenario: str, method: str, param: str) -> Optional[SummaryRow]:
    try:
        r = summary.get(scenario, method, param)
    except KeyError:
        return None
    return None if math.isnan(r.mean) else r


# methods whose column is blank for a parameter, as in the published layout
_BLANK = {("egs", "eps_k"), ("cdg", "eps_l")}


def render_markdown(table_id: int, summary: McSummary, base: Optional[ScenarioSpec] = None) -> str:
    cells = scenario_grid(table_id, base)
    out: List[str] = []
    if table_id in (1, 2):
        title = "Cobb-Douglas" if table_id == 1 else "CES"
        out.append(f"### Table {table_id}: Monte Carlo simulation results, {title}\n")
        out.append("| | True | EGS | CDG | Proposed |")
        out.append("|---|---|---|---|---|")
        for cell in cells:
            out.append(f"| **{cell.label}** | | | | |")
            for prm, name in (("eps_l", "Land"), ("eps_k", "Capital")):
                rows = {m: None if (m, prm) in _BLANK else _lookup(summary, cell.scenario, m, prm)
                        for m in ("egs", "cdg", "proposed")}
                truth = next((r.true_mean for r in rows.values() if r is not None), math.nan)
                out.append(f"| *{name}:* average elasticity | {_f3(truth)} | "
                           + " | ".join(_f3(None if r is None else r.mean) for r in rows.values()) + " |")
                out.append("| 95% CI | | " + " | ".join(_ci(r) for r in rows.values()) + " |")
    elif table_id == 3:
        out.append("### Table 3: Monte Carlo simulation results, small sample size\n")
        out.append("| | capital Est. | capital 95% CI | land Est. | land 95% CI |")
        out.append("|---|---|---|---|---|")
        block = None
        for cell in cells:
            if cell.block != block:
                block = cell.block
                rk = _lookup(summary, cell.scenario, "proposed", "eps_k")
                rl = _lookup(summary, cell.scenario, "proposed", "eps_l")
                out.append(f"| **{block}** | | | | |")
                out.append(f"| True parameters | {_f3(rk.true_mean if rk else math.nan)} | -- | "
                           f"{_f3(rl.true_mean if rl else math.nan)} | -- |")
            rk = _lookup(summary, cell.scenario, "proposed", "eps_k")
            rl = _lookup(summary, cell.scenario, "proposed", "eps_l")
            out.append(f"| {cell.label} | {_f3(rk.mean if rk else math.nan)} | {_ci(rk)} | "
                       f"{_f3(rl.mean if rl else math.nan)} | {_ci(rl)} |")
    else:
        what = "capital input" if table_id == 4 else "housing value"
        out.append(f"### Table {table_id}: Monte Carlo simulation results, {what} is unobserved\n")
        out.append("| | Est. β_k (SE) | True β_k | Est. β_l (SE) | True β_l |")
        out.append("|---|---|---|---|---|")
        for cell in cells:
            rk = _lookup(summary, cell.scenario, "proposed", "eps_k")
            rl = _lookup(summary, cell.scenario, "proposed", "eps_l")

            def est(r):
                return "--" if r is None else f"{r.mean:.3f} ({r.sd:.3f})"

            out.append(f"| {cell.label} | {est(rk)} | {_f3(rk.true_mean if rk else math.nan)} | "
                       f"{est(rl)} | {_f3(rl.true_mean if rl else math.nan)} |")
    reps = cells[0].spec.replications if cells else 0
    out.append("")
    out.append(f"Means and 2.5%/97.5% quantiles over {reps} replications.")
    if summary.warnings:
        out.append("")
        out.extend(f"Warning: {w}" for w in summary.warnings)
    return "\n".join(out) + "\n"
