"""Domain types and closed-form technology formulas.

Everything here is pure and immutable.  Panels store their columns as
read-only numpy arrays of shape ``(N, J, T)`` indexed ``[i, j, t]``; flattening
in C order therefore walks observations in ``(i, j, t)`` lexicographic order.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, Optional, Tuple

import numpy as np


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a model formula."""


class Family(str, enum.Enum):
    COBB_DOUGLAS = "cd"
    CES = "ces"


@dataclass(frozen=True)
class TechnologyParams:
    """Production technology ``H(K, L)``.

    ``alpha_scale`` is the CES returns-to-scale exponent; it is ignored for
    Cobb-Douglas, whose returns are ``beta_k + beta_l``.
    """

    family: Family
    beta_k: float
    beta_l: float
    rho: float = 0.5
    alpha_scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if not (self.beta_k > 0 and self.beta_l > 0):
            raise DomainError("beta_k and beta_l must be positive")
        if self.family is Family.COBB_DOUGLAS:
            if self.beta_k + self.beta_l > 1 + 1e-12:
                raise DomainError("Cobb-Douglas requires beta_k + beta_l <= 1")
        else:
            if not 0 < self.rho < 1:
                raise DomainError("CES requires 0 < rho < 1")
            if not 0 < self.alpha_scale <= 1:
                raise DomainError("CES requires 0 < alpha_scale <= 1")

    @property
    def returns_to_scale(self) -> float:
        if self.family is Family.COBB_DOUGLAS:
            return self.beta_k + self.beta_l
        return self.alpha_scale

    @property
    def is_crs(self) -> bool:
        return abs(self.returns_to_scale - 1.0) < 1e-12


# Parameter configurations used by the simulation tables.  The CES weights put
# 0.4 (0.35) on capital: this is the assignment that reproduces the published
# true average elasticities of the CES design (0.566/0.434, 0.160/0.840,
# 0.240/0.660, 0.071/0.829).
CD_CRS = TechnologyParams(Family.COBB_DOUGLAS, 0.6, 0.4)
CD_DRS = TechnologyParams(Family.COBB_DOUGLAS, 0.55, 0.35)
CES_CRS = TechnologyParams(Family.CES, 0.4, 0.6, rho=0.5, alpha_scale=1.0)
CES_DRS = TechnologyParams(Family.CES, 0.35, 0.55, rho=0.5, alpha_scale=0.9)

PRESETS: Dict[Tuple[str, str], TechnologyParams] = {
    ("cd", "crs"): CD_CRS,
    ("cd", "drs"): CD_DRS,
    ("ces", "crs"): CES_CRS,
    ("ces", "drs"): CES_DRS,
}


def preset(tech: str, returns: str) -> TechnologyParams:
    try:
        return PRESETS[(tech, returns)]
    except KeyError:
        raise DomainError(f"unknown technology preset {tech}/{returns}") from None


def _ordered(name: str, rng: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = (float(v) for v in rng)
    if not lo <= hi:
        raise DomainError(f"{name} bounds out of order: {rng}")
    return lo, hi


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation cell.

    ``ar_coef`` multiplies lagged productivity in the law of motion; the
    default of 1 is the random walk used in the simulation design.
    ``allow_negative_rent`` accepts draws whose residual land cost is not
    positive instead of failing; the CES constant-returns design with
    productivity produces a few of these.
    """

    tech: TechnologyParams = CD_CRS
    productivity_on: bool = True
    N: int = 100
    J: int = 100
    T: int = 6
    price_range: Tuple[float, float] = (0.7, 1.3)
    land_range: Tuple[float, float] = (50.0, 100.0)
    eps_sd: float = 0.1
    eta_sd: float = 0.01
    omega0_range: Tuple[float, float] = (1.0, 1.5)
    ar_coef: float = 1.0
    capital_price: float = 1.0
    allow_negative_rent: bool = False
    replications: int = 100
    seed: int = 42

    def __post_init__(self) -> None:
        for name in ("N", "J", "replications"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"{name} must be >= 1")
        if int(self.T) < 2:
            raise DomainError("T must be >= 2 (lags are needed)")
        for name in ("price_range", "land_range", "omega0_range"):
            object.__setattr__(self, name, _ordered(name, getattr(self, name)))
        if self.price_range[0] <= 0 or self.land_range[0] <= 0:
            raise DomainError("prices and land must be positive")
        if self.eps_sd < 0 or self.eta_sd < 0:
            raise DomainError("standard deviations must be non-negative")
        if self.capital_price <= 0:
            raise DomainError("capital_price must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.N, self.J, self.T)

    def replace(self, **changes: Any) -> "ScenarioSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["tech"]["family"] = self.tech.family.value
        for name in ("price_range", "land_range", "omega0_range"):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ScenarioSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown scenario keys: {sorted(unknown)}")
        d = dict(d)
        if "tech" in d and not isinstance(d["tech"], TechnologyParams):
            d["tech"] = TechnologyParams(**d["tech"])
        for name in ("price_range", "land_range", "omega0_range"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)


@dataclass(frozen=True)
class ElasticityPair:
    eps_k: float
    eps_l: float

    def __iter__(self) -> Iterator[float]:
        return iter((self.eps_k, self.eps_l))


@dataclass(frozen=True)
class Observation:
    i: int
    j: int
    t: int
    L: float
    K: float
    P_h: float
    Y: float
    value: float
    R: float
    omega: float
    eps: float

    @property
    def k(self) -> float:
        return math.log(self.K)

    @property
    def l(self) -> float:
        return math.log(self.L)

    @property
    def y(self) -> float:
        return math.log(self.Y)


@dataclass(frozen=True)
class VisibilityMask:
    """Which of capital, housing value and land cost are observed."""

    capital_observed: bool = True
    value_observed: bool = True
    rent_observed: bool = True

    def __post_init__(self) -> None:
        if sum((self.capital_observed, self.value_observed, self.rent_observed)) < 2:
            raise DomainError("at least two of capital, value and rent must be observed")

    @classmethod
    def parse(cls, name: str) -> "VisibilityMask":
        table = {
            "none": cls(),
            "hide-capital": cls(capital_observed=False),
            "hide-value": cls(value_observed=False),
        }
        try:
            return table[name]
        except KeyError:
            raise DomainError(f"unknown mask {name!r}") from None

    @property
    def name(self) -> str:
        if not self.capital_observed:
            return "hide-capital"
        if not self.value_observed:
            return "hide-value"
        if not self.rent_observed:
            return "hide-rent"
        return "none"


PANEL_COLUMNS = ("L", "K", "P_h", "Y", "value", "R", "omega", "eps")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Panel:
    """Balanced builder-city-period panel.

    Each builder is paired with itself in the previous period, so the lag of an
    array is simply ``a[..., :-1]`` aligned with ``a[..., 1:]``.  ``P_h``,
    ``Y``, ``omega`` and ``eps`` are simulation truth and may be ``None`` for
    panels read from disk; estimators only use ``K``, ``L``, ``value`` and ``R``.
    """

    L: np.ndarray
    K: np.ndarray
    value: np.ndarray
    R: np.ndarray
    P_h: Optional[np.ndarray] = None
    Y: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    eps: Optional[np.ndarray] = None
    mask: VisibilityMask = field(default_factory=VisibilityMask)
    k: np.ndarray = field(init=False, repr=False)
    l: np.ndarray = field(init=False, repr=False)
    y: Optional[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        shape = np.shape(self.L)
        if len(shape) != 3:
            raise DomainError("panel arrays must have shape (N, J, T)")
        for name in PANEL_COLUMNS:
            a = getattr(self, name)
            if a is None:
                continue
            if np.shape(a) != shape:
                raise DomainError(f"column {name} has shape {np.shape(a)}, expected {shape}")
            object.__setattr__(self, name, _frozen(a))
        if shape[2] < 2:
            raise DomainError("panel needs at least two periods")
        object.__setattr__(self, "k", _frozen(np.log(self.K)))
        object.__setattr__(self, "l", _frozen(np.log(self.L)))
        y = None if self.Y is None else _frozen(np.log(self.Y))
        object.__setattr__(self, "y", y)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.L.shape  # type: ignore[return-value]

    @property
    def n_obs(self) -> int:
        return int(self.L.size)

    def observation(self, i: int, j: int, t: int) -> Observation:
        def get(a: Optional[np.ndarray]) -> float:
            return float("nan") if a is None else float(a[i, j, t])

        return Observation(
            i, j, t, get(self.L), get(self.K), get(self.P_h), get(self.Y),
            get(self.value), get(self.R), get(self.omega), get(self.eps),
        )

    def __iter__(self) -> Iterator[Observation]:
        N, J, T = self.shape
        for i in range(N):
            for j in range(J):
                for t in range(T):
                    yield self.observation(i, j, t)

    def replace(self, **changes: Any) -> "Panel":
        kw = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.init}
        kw.update(changes)
        return Panel(**kw)

    def zero_profit_gap(self, capital_price: float = 1.0) -> np.ndarray:
        """Relative violation of ``value - K - R = 0``."""
        return (self.value - capital_price * self.K - self.R) / self.value


# ---------------------------------------------------------------------------
# Technology formulas


def _check_inputs(K: Any, L: Any) -> Tuple[np.ndarray, np.ndarray]:
    K = np.asarray(K, dtype=float)
    L = np.asarray(L, dtype=float)
    if np.any(~(K > 0)) or np.any(~(L > 0)):
        raise DomainError("inputs K and L must be strictly positive")
    return K, L


def _maybe_scalar(a: np.ndarray) -> Any:
    return float(a) if np.ndim(a) == 0 else a


def cd_elasticities(params: TechnologyParams, K: Any = 1.0, L: Any = 1.0) -> ElasticityPair:
    if params.family is not Family.COBB_DOUGLAS:
        raise DomainError("cd_elasticities needs a Cobb-Douglas technology")
    K, L = _check_inputs(K, L)
    ones = np.ones(np.broadcast(K, L).shape)
    return ElasticityPair(_maybe_scalar(params.beta_k * ones), _maybe_scalar(params.beta_l * ones))


def ces_elasticities(params: TechnologyParams, K: Any, L: Any) -> ElasticityPair:
    if params.family is not Family.CES:
        raise DomainError("ces_elasticities needs a CES technology")
    K, L = _check_inputs(K, L)
    a = params.beta_k * K**params.rho
    b = params.beta_l * L**params.rho
    # eps_l computed as the complement keeps eps_k + eps_l == alpha exactly.
    eps_k = params.alpha_scale * a / (a + b)
    eps_l = params.alpha_scale - eps_k
    return ElasticityPair(_maybe_scalar(eps_k), _maybe_scalar(eps_l))


def elasticities(params: TechnologyParams, K: Any, L: Any) -> ElasticityPair:
    if params.family is Family.COBB_DOUGLAS:
        return cd_elasticities(params, K, L)
    return ces_elasticities(params, K, L)


def log_technology(params: TechnologyParams, K: Any, L: Any) -> Any:
    """``log H(K, L)``."""
    K, L = _check_inputs(K, L)
    if params.family is Family.COBB_DOUGLAS:
        out = params.beta_k * np.log(K) + params.beta_l * np.log(L)
    else:
        rho = params.rho
        inner = params.beta_k * K**rho + params.beta_l * L**rho
        out = params.alpha_scale / rho * np.log(inner)
    return _maybe_scalar(out)


def production_output(params: TechnologyParams, K: Any, L: Any, omega: Any = 0.0, eps: Any = 0.0) -> Any:
    """Housing quantity ``Y = H(K, L) * exp(omega + eps)``."""
    logh = log_technology(params, K, L)
    return _maybe_scalar(np.exp(logh + np.asarray(omega, dtype=float) + np.asarray(eps, dtype=float)))


def marginal_product_k(params: TechnologyParams, K: Any, L: Any) -> Any:
    """``dH/dK`` evaluated without the productivity factor."""
    K, L = _check_inputs(K, L)
    eps_k = elasticities(params, K, L).eps_k
    return _maybe_scalar(np.asarray(eps_k) * np.exp(log_technology(params, K, L)) / K)
