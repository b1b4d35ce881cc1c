"""Synthetic panel generation.

Builders take price, land and productivity as given, choose capital from the
first-order condition (evaluated at ``eps = 0``) and pay the residual profit
as land cost, so ``R = value - K`` by construction.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model_core import (
    DomainError,
    ElasticityPair,
    Family,
    Panel,
    ScenarioSpec,
    TechnologyParams,
    VisibilityMask,
    elasticities,
    marginal_product_k,
    production_output,
)

PURPOSES = {"prices": 0, "land": 1, "eps": 2, "omega": 3}

CSV_HEADER = ("i", "j", "t", "L", "K", "P_h", "Y", "value", "R", "omega", "eps")


class GenerationError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class RngStream:
    """Counter-based derivation of independent generators.

    The generator for ``(purpose, city)`` within a replication depends only on
    ``(seed, replication, purpose, city)``, never on how many draws other
    streams consumed, so serial and parallel runs agree bit for bit.
    """

    seed: int
    replication: int = 0

    def generator(self, purpose: str, city: Optional[int] = None) -> np.random.Generator:
        key = (int(self.replication), PURPOSES[purpose], -1 if city is None else int(city))
        # spawn_key entries must be non-negative
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(key[0], key[1], key[2] + 1))
        return np.random.Generator(np.random.PCG64(ss))


def draw_productivity_paths(spec: ScenarioSpec, rng: RngStream) -> np.ndarray:
    """City productivity ``omega[j, t]``; all zero when productivity is off."""
    omega = np.zeros((spec.J, spec.T))
    if not spec.productivity_on:
        return omega
    lo, hi = spec.omega0_range
    for j in range(spec.J):
        g = rng.generator("omega", city=j)
        omega[j, 0] = g.uniform(lo, hi)
        innov = g.normal(0.0, 1.0, size=spec.T - 1) * spec.eta_sd
        for t in range(1, spec.T):
            omega[j, t] = spec.ar_coef * omega[j, t - 1] + innov[t - 1]
    return omega


def solve_capital_cd(params: TechnologyParams, P_h, L, omega, capital_price: float = 1.0):
    if params.family is not Family.COBB_DOUGLAS:
        raise DomainError("solve_capital_cd needs a Cobb-Douglas technology")
    if params.beta_k >= 1:
        raise DomainError("beta_k >= 1 has no interior optimum")
    base = np.asarray(P_h, float) * params.beta_k * np.asarray(L, float) ** params.beta_l
    base = base * np.exp(np.asarray(omega, float)) / capital_price
    K = base ** (1.0 / (1.0 - params.beta_k))
    return float(K) if np.ndim(K) == 0 else K


def _ces_foc(params: TechnologyParams, x, log_rhs, lL):
    """Log first-order condition and its derivative in ``x = log K``.

    ``log_rhs`` is ``log(P_h * exp(omega) / capital_price)``.
    """
    rho, a = params.rho, params.alpha_scale
    u = np.log(params.beta_k) + rho * x
    v = np.log(params.beta_l) + rho * lL
    log_s = np.logaddexp(u, v)
    theta = np.exp(u - log_s)
    f = log_rhs + np.log(a) + (a / rho - 1.0) * log_s + np.log(params.beta_k) + (rho - 1.0) * x
    df = -(1.0 - theta) * (1.0 - rho) - theta * (1.0 - a)
    return f, df


def solve_capital_ces(
    params: TechnologyParams,
    P_h,
    L,
    omega,
    tol: float = 1e-12,
    capital_price: float = 1.0,
    max_iter: int = 200,
):
    """Profit-maximising capital for CES technology.

    Bracketed Newton on ``log K``: the bracket is grown by doubling around a
    Cobb-Douglas-style start, and any Newton step leaving it is replaced by
    bisection.  Strict concavity in ``K`` makes the root unique.
    """
    if params.family is not Family.CES:
        raise DomainError("solve_capital_ces needs a CES technology")
    P_h, L, omega = np.broadcast_arrays(
        np.asarray(P_h, float), np.asarray(L, float), np.asarray(omega, float)
    )
    if np.any(~(P_h > 0)) or np.any(~(L > 0)):
        raise DomainError("P_h and L must be positive")
    scalar = P_h.ndim == 0
    shape = P_h.shape
    P_h, L, omega = (np.atleast_1d(a).ravel() for a in (P_h, L, omega))
    log_rhs = np.log(P_h) + omega - np.log(capital_price)
    lL = np.log(L)

    # start: capital share equal to the CES weight share at K = L
    w = params.alpha_scale * params.beta_k / (params.beta_k + params.beta_l)
    w = min(w, 0.95)
    x0 = (log_rhs + np.log(w) + (params.alpha_scale - w) * lL) / (1.0 - w)
    lo = x0 - 1.0
    hi = x0 + 1.0
    width = np.full_like(x0, 1.0)
    for _ in range(60):
        f_lo, _ = _ces_foc(params, lo, log_rhs, lL)
        f_hi, _ = _ces_foc(params, hi, log_rhs, lL)
        bad_lo = f_lo <= 0
        bad_hi = f_hi >= 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = np.where(bad_lo | bad_hi, 2 * width, width)
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
    else:
        idx = int(np.flatnonzero(bad_lo | bad_hi)[0])
        raise SolverError(
            "could not bracket the capital FOC root at "
            f"P_h={P_h[idx]:.6g}, L={L[idx]:.6g}, omega={omega[idx]:.6g}; "
            "the marginal value of capital never falls below its price"
        )

    x = np.clip(x0, lo, hi)
    for _ in range(max_iter):
        f, df = _ces_foc(params, x, log_rhs, lL)
        lo = np.where(f > 0, x, lo)
        hi = np.where(f < 0, x, hi)
        step = -f / df
        x_new = x + step
        outside = ~((x_new > lo) & (x_new < hi))
        x_new = np.where(outside, 0.5 * (lo + hi), x_new)
        done = (np.abs(x_new - x) <= tol * np.maximum(1.0, np.abs(x))) | (f == 0)
        x = np.where(f == 0, x, x_new)
        if done.all():
            break
    else:
        raise SolverError("capital FOC iteration did not converge")
    K = np.exp(x)
    return float(K[0]) if scalar else K.reshape(shape)


def solve_capital(params: TechnologyParams, P_h, L, omega, capital_price: float = 1.0):
    if params.family is Family.COBB_DOUGLAS:
        return solve_capital_cd(params, P_h, L, omega, capital_price)
    return solve_capital_ces(params, P_h, L, omega, capital_price=capital_price)


def foc_residual(params: TechnologyParams, K, P_h, L, omega, capital_price: float = 1.0):
    """Relative residual ``P_h * dH/dK * exp(omega) / P_k - 1``."""
    mv = np.asarray(P_h) * marginal_product_k(params, K, L) * np.exp(np.asarray(omega))
    return mv / capital_price - 1.0


def generate_panel(spec: ScenarioSpec, rng: Union[RngStream, int]) -> Panel:
    if isinstance(rng, (int, np.integer)):
        rng = RngStream(spec.seed, int(rng))
    shape = spec.shape
    n = spec.N * spec.J * spec.T
    P_h = rng.generator("prices").uniform(*spec.price_range, size=n).reshape(shape)
    L = rng.generator("land").uniform(*spec.land_range, size=n).reshape(shape)
    eps = (rng.generator("eps").normal(0.0, 1.0, size=n) * spec.eps_sd).reshape(shape)
    omega = np.broadcast_to(draw_productivity_paths(spec, rng), shape).copy()

    K = solve_capital(spec.tech, P_h, L, omega, spec.capital_price)
    Y = production_output(spec.tech, K, L, omega, eps)
    value = P_h * Y
    R = value - spec.capital_price * K
    if not spec.allow_negative_rent and np.any(~(R > 0)):
        i, j, t = (int(v) for v in np.argwhere(~(R > 0))[0])
        raise GenerationError(
            f"non-positive land cost at builder {i}, city {j}, period {t}: "
            f"R={R[i, j, t]:.6g}, value={value[i, j, t]:.6g}, K={K[i, j, t]:.6g}"
        )
    return Panel(L=L, K=K, value=value, R=R, P_h=P_h, Y=Y, omega=omega, eps=eps)


def true_elasticity_summary(panel: Panel, params: TechnologyParams) -> ElasticityPair:
    e = elasticities(params, panel.K, panel.L)
    return ElasticityPair(float(np.mean(e.eps_k)), float(np.mean(e.eps_l)))


# ---------------------------------------------------------------------------
# CSV round trip


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def panel_to_csv(panel: Panel) -> str:
    N, J, T = panel.shape
    cols = []
    for name in CSV_HEADER[3:]:
        a = getattr(panel, name)
        cols.append(None if a is None else a.ravel())
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    idx = 0
    for i in range(N):
        for j in range(J):
            for t in range(T):
                vals = ["" if c is None else _fmt(c[idx]) for c in cols]
                buf.write(f"{i + 1},{j + 1},{t + 1}," + ",".join(vals) + "\n")
                idx += 1
    return buf.getvalue()


def write_panel_csv(panel: Panel, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(panel_to_csv(panel))


def read_panel_csv(path: Union[str, os.PathLike], mask: VisibilityMask = VisibilityMask()) -> Panel:
    """Load a panel dump; columns hidden by ``mask`` may be absent or empty.

    Hidden columns are left as NaN; pass the result through
    :func:`housing_prodfn.recovery.apply_mask` before estimating.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        rows = list(reader)
    required = ["i", "j", "t", "L"]
    if mask.capital_observed:
        required.append("K")
    if mask.value_observed:
        required.append("value")
    if mask.rent_observed:
        required.append("R")
    missing = [c for c in required if c not in fields]
    if missing:
        raise DomainError(f"panel file lacks required columns for mask {mask.name}: {missing}")
    if not rows:
        raise DomainError("panel file has no rows")
    ijt = np.array([[int(r["i"]), int(r["j"]), int(r["t"])] for r in rows]) - 1
    N, J, T = (int(v) + 1 for v in ijt.max(axis=0))
    if len(rows) != N * J * T or ijt.min() < 0:
        raise DomainError("panel file is not a balanced (i, j, t) grid")

    def column(name: str) -> Optional[np.ndarray]:
        if name not in fields:
            return None
        raw = [r[name] for r in rows]
        if all(v == "" for v in raw):
            return None
        out = np.full((N, J, T), np.nan)
        out[ijt[:, 0], ijt[:, 1], ijt[:, 2]] = [float(v) if v != "" else np.nan for v in raw]
        return out

    data = {name: column(name) for name in CSV_HEADER[3:]}
    for name, observed in (("K", mask.capital_observed), ("value", mask.value_observed), ("R", mask.rent_observed)):
        if not observed or data[name] is None:
            data[name] = np.full((N, J, T), np.nan)
        elif np.isnan(data[name]).any():
            raise DomainError(f"column {name} has missing entries")
    if np.isnan(data["L"]).any():
        raise DomainError("column L has missing entries")
    return Panel(
        L=data["L"], K=data["K"], value=data["value"], R=data["R"],
        P_h=data["P_h"], Y=data["Y"], omega=data["omega"], eps=data["eps"], mask=mask,
    )
