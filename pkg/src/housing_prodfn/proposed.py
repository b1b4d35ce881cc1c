"""Two-step share-equation estimator with a Markov productivity process.

Step 1 fits the log capital-revenue share with the log of a complete
polynomial in ``(k, l)`` by nonlinear least squares; the polynomial is the
capital elasticity surface.  Integrating it in ``k`` strips the capital part
out of log housing value, leaving ``log P_h + C(l) + omega``.  Step 2 recovers
``C(l)`` and the productivity transition ``g`` from moment conditions on the
productivity innovation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .model_core import DomainError, Panel

log = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    """Estimation failed; ``stage`` names the step that failed."""

    def __init__(self, message: str, stage: str = "") -> None:
        super().__init__(f"[{stage}] {message}" if stage else message)
        self.stage = stage


@dataclass
class EstimateReport:
    method: str
    eps_k_mean: Optional[float]
    eps_l_mean: Optional[float]
    eps_k: Optional[np.ndarray] = field(default=None, repr=False)
    eps_l: Optional[np.ndarray] = field(default=None, repr=False)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "eps_k_mean": self.eps_k_mean,
            "eps_l_mean": self.eps_l_mean,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# polynomial helpers


def monomials(degree: int) -> List[Tuple[int, int]]:
    """Exponents ``(r_k, r_l)`` of the complete polynomial, by total degree."""
    return [(d - b, b) for d in range(degree + 1) for b in range(d + 1)]


def design(k: np.ndarray, l: np.ndarray, powers: List[Tuple[int, int]]) -> np.ndarray:
    return np.stack([k**a * l**b for a, b in powers], axis=-1)


def _shift_scale(coef: Dict[Tuple[int, int], float], mk: float, sk: float, ml: float, sl: float):
    """Rewrite ``sum c * ((k-mk)/sk)^a ((l-ml)/sl)^b`` as a polynomial in raw ``(k, l)``."""
    out: Dict[Tuple[int, int], float] = {}
    for (a, b), c in coef.items():
        for i in range(a + 1):
            ck = comb(a, i) * (-mk) ** (a - i) / sk**a
            for j in range(b + 1):
                cl = comb(b, j) * (-ml) ** (b - j) / sl**b
                out[(i, j)] = out.get((i, j), 0.0) + c * ck * cl
    return out


# ---------------------------------------------------------------------------
# Step 1


def log_share(K, value):
    """Log capital share of housing value, ``log K - log value``."""
    K = np.asarray(K, dtype=float)
    value = np.asarray(value, dtype=float)
    if np.any(~(K > 0)) or np.any(~(value > 0)):
        raise DomainError("capital and housing value must be positive")
    s = np.log(K) - np.log(value)
    return float(s) if np.ndim(s) == 0 else s


@dataclass(frozen=True)
class ShareFit:
    degree: int
    powers: Tuple[Tuple[int, int], ...]
    gamma: np.ndarray
    residuals: np.ndarray
    objective: float
    gradient_norm: float
    iterations: int

    def coef(self) -> Dict[Tuple[int, int], float]:
        return dict(zip(self.powers, self.gamma.tolist()))

    def elasticity(self, k, l):
        """Capital elasticity surface ``D(k, l)``."""
        return design(np.asarray(k, float), np.asarray(l, float), list(self.powers)) @ self.gamma

    def integrated(self, k, l):
        """Antiderivative of the surface in ``k``, zero at ``k = 0``."""
        k = np.asarray(k, float)
        l = np.asarray(l, float)
        return sum(g / (a + 1) * k ** (a + 1) * l**b for (a, b), g in zip(self.powers, self.gamma))

    def integrated_coef(self) -> Dict[Tuple[int, int], float]:
        return {(a + 1, b): g / (a + 1) for (a, b), g in zip(self.powers, self.gamma)}

    def integrated_dl(self, k, l):
        """``d/dl`` of :meth:`integrated`."""
        k = np.asarray(k, float)
        l = np.asarray(l, float)
        out = np.zeros(np.broadcast(k, l).shape)
        for (a, b), g in zip(self.powers, self.gamma):
            if b:
                out = out + g * b / (a + 1) * k ** (a + 1) * l ** (b - 1)
        return out


def fit_share_regression(
    panel: Panel,
    degree: int = 2,
    max_iter: int = 200,
    gtol: float = 1e-8,
) -> ShareFit:
    """Nonlinear least squares of the log share on ``log(poly(k, l))``.

    Damped Gauss-Newton in a standardised monomial basis; steps that would
    make the polynomial non-positive at any sample point are halved.  The
    stored residuals follow ``eps_hat = log D(k, l) - s``.
    """
    if degree < 0:
        raise DomainError("degree must be >= 0")
    s = log_share(panel.K, panel.value).ravel()
    k = panel.k.ravel()
    l = panel.l.ravel()
    if not (np.all(np.isfinite(k)) and np.all(np.isfinite(s))):
        raise EstimationError("panel has missing capital or value; recover it first", "step1")
    powers = monomials(degree)

    mk, ml = float(k.mean()), float(l.mean())
    sk, sl = float(k.std()), float(l.std())
    if degree > 0 and (sk == 0 or sl == 0):
        raise EstimationError("k or l has no variation", "step1")
    sk = sk or 1.0
    sl = sl or 1.0
    X = design((k - mk) / sk, (l - ml) / sl, powers)

    c = np.zeros(len(powers))
    c[0] = np.exp(s.mean())

    def resid(c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        p = X @ c
        return p, s - np.log(p)

    p, r = resid(c)
    obj = float(r @ r)
    n_iter = 0
    converged = False
    polished = 0
    for n_iter in range(1, max_iter + 1):
        Jac = -X / p[:, None]
        grad = 2.0 * Jac.T @ r
        if float(np.linalg.norm(grad)) <= gtol * (1.0 + obj):
            converged = True
        step = np.linalg.lstsq(Jac, -r, rcond=None)[0]
        if converged and np.max(np.abs(step)) <= 1e-14 * max(1.0, np.max(np.abs(c))):
            break
        # increases at round-off level are accepted; anything larger is damped
        slack = 1e-13 * (1.0 + obj)
        t = 1.0
        for _ in range(60):
            c_new = c + t * step
            p_new = X @ c_new
            if np.all(p_new > 0):
                r_new = s - np.log(p_new)
                obj_new = float(r_new @ r_new)
                if obj_new <= obj + slack:
                    break
            t *= 0.5
        else:
            if converged:
                break
            raise EstimationError("no descent step keeps the elasticity surface positive", "step1")
        c, p, r, obj = c_new, p_new, r_new, obj_new
        # a few polishing steps past the gradient test make the optimum a
        # smooth function of the data rather than of the stopping rule
        if converged:
            polished += 1
            if polished >= 3:
                break
    if not converged:
        raise EstimationError(f"Gauss-Newton did not converge in {max_iter} iterations", "step1")

    raw = _shift_scale(dict(zip(powers, c.tolist())), mk, sk, ml, sl)
    gamma = np.array([raw.get(pw, 0.0) for pw in powers])
    Jac = -X / p[:, None]
    gnorm = float(np.linalg.norm(2.0 * Jac.T @ r))
    return ShareFit(
        degree=degree,
        powers=tuple(powers),
        gamma=gamma,
        residuals=(-r).reshape(panel.shape),
        objective=obj,
        gradient_norm=gnorm,
        iterations=n_iter,
    )


def elasticity_surface(fit: ShareFit, k, l):
    return fit.elasticity(k, l)


def integrate_surface(fit: ShareFit, k, l):
    return fit.integrated(k, l)


def build_H_hat(panel: Panel, fit: ShareFit) -> np.ndarray:
    """Log housing value net of the ex post shock and the capital part of output."""
    return np.log(panel.value) - fit.residuals - fit.integrated(panel.k, panel.l)


# ---------------------------------------------------------------------------
# Step 2


@dataclass(frozen=True)
class Step2Fit:
    alpha: np.ndarray
    c0: float
    delta: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    moments: np.ndarray
    objective: float
    A_used: int
    degree_reduced: bool
    iterations: int

    @property
    def city_eta(self) -> np.ndarray:
        """City-period innovations, shape ``(J, T-1)``."""
        return self.eta.mean(axis=0)

    def g(self, w):
        return np.polynomial.polynomial.polyval(w, self.delta)

    def integration_constant(self, l):
        l = np.asarray(l, float)
        return sum(a * l ** (tau + 1) for tau, a in enumerate(self.alpha))

    def integration_constant_dl(self, l):
        l = np.asarray(l, float)
        return sum((tau + 1) * a * l**tau for tau, a in enumerate(self.alpha))


def _lag_basis(w_lag: np.ndarray, A: int) -> np.ndarray:
    return np.stack([w_lag**a for a in range(A + 1)], axis=-1)


def _usable_degree(w_lag: np.ndarray, A: int, tol: float = 1e-9) -> int:
    """Largest degree ``<= A`` whose lag design has full column rank."""
    z = w_lag.ravel()
    sd = z.std()
    if sd <= tol * max(1.0, np.abs(z).max()):
        return 0
    zs = (z - z.mean()) / sd
    for a in range(A, 0, -1):
        B = np.stack([zs**p for p in range(a + 1)], axis=-1)
        sv = np.linalg.svd(B, compute_uv=False)
        if sv[-1] > tol * sv[0] and np.unique(z).size > a:
            return a
    return 0


class _Step2Problem:
    def __init__(self, H: np.ndarray, l: np.ndarray, tau: int):
        self.H = H
        self.L = np.stack([l ** (p + 1) for p in range(tau)], axis=0)  # (tau, N, J, T)
        self.tau = tau

    def evaluate(self, alpha: np.ndarray, A: int):
        phi = self.H - np.tensordot(alpha, self.L, axes=1)
        c0 = float(phi.mean())
        w = phi.mean(axis=0) - c0  # (J, T)
        Z = _lag_basis(w[:, :-1], A).reshape(-1, A + 1)
        delta = np.linalg.lstsq(Z, w[:, 1:].ravel(), rcond=None)[0]
        g = (Z @ delta).reshape(w[:, 1:].shape)
        eta = phi[:, :, 1:] - c0 - g[None, :, :]
        m = np.array([np.mean(eta * self.L[p][:, :, 1:]) for p in range(self.tau)])
        return m, c0, w, delta, eta


def fit_step2(
    H: np.ndarray,
    panel: Panel,
    tau: int = 2,
    A: int = 3,
    max_iter: int = 50,
) -> Step2Fit:
    """Solve the innovation moment conditions for the integration constant.

    For trial coefficients ``alpha`` city-period productivity is the mean of
    ``H - sum alpha_tau l^tau`` (net of the overall constant), ``g`` is the
    least-squares polynomial of degree ``A`` in lagged productivity, and the
    builder-level innovation is ``H - c0 - C(l) - g(omega_lag)``.  The lag
    polynomial makes the innovation orthogonal to ``omega_lag^a``; ``alpha``
    solves the remaining ``E[eta * l^tau] = 0`` by Newton's method.
    """
    if panel.shape[2] < 2:
        raise EstimationError("need at least two periods", "step2")
    H = np.asarray(H, float)
    if not np.all(np.isfinite(H)):
        raise EstimationError("H contains non-finite values", "step2")
    l = panel.l
    prob = _Step2Problem(H, l, tau)

    # start: within city-period regression, consistent because omega is city level
    Hd = H - H.mean(axis=0, keepdims=True)
    Ld = prob.L - prob.L.mean(axis=1, keepdims=True)
    Xw = Ld.reshape(tau, -1).T
    alpha = np.linalg.lstsq(Xw, Hd.ravel(), rcond=None)[0]

    _, _, w0, _, _ = prob.evaluate(alpha, 0)
    A_used = _usable_degree(w0[:, :-1], A)
    reduced = A_used < A
    if reduced:
        log.info("lag polynomial degree reduced from %d to %d", A, A_used)

    scale = np.array([max(1.0, float(np.abs(prob.L[p]).mean())) for p in range(tau)])
    m, *_ = prob.evaluate(alpha, A_used)
    best = float(np.linalg.norm(m))
    it = 0
    for it in range(1, max_iter + 1):
        Jm = np.empty((tau, tau))
        for q in range(tau):
            h = 1e-6 / scale[q]
            e = np.zeros(tau)
            e[q] = h
            mp, *_ = prob.evaluate(alpha + e, A_used)
            mm, *_ = prob.evaluate(alpha - e, A_used)
            Jm[:, q] = (mp - mm) / (2 * h)
        try:
            step = np.linalg.solve(Jm, -m)
        except np.linalg.LinAlgError:
            raise EstimationError("singular moment Jacobian", "step2") from None
        t = 1.0
        for _ in range(30):
            m_new, *_ = prob.evaluate(alpha + t * step, A_used)
            if np.linalg.norm(m_new) < best:
                break
            t *= 0.5
        else:
            break
        alpha = alpha + t * step
        m = m_new
        best = float(np.linalg.norm(m))
        if best == 0.0:
            break

    m, c0, w, delta, eta = prob.evaluate(alpha, A_used)
    scale_m = 1.0 + np.abs(prob.L[:, :, :, 1:]).mean()
    if np.linalg.norm(m) > 1e-8 * scale_m:
        raise EstimationError(f"moment conditions not solved (|m|={np.linalg.norm(m):.3g})", "step2")
    full_delta = np.zeros(A + 1)
    full_delta[: A_used + 1] = delta
    return Step2Fit(
        alpha=alpha,
        c0=c0,
        delta=full_delta,
        omega=w,
        eta=eta,
        moments=m,
        objective=float(np.mean(eta**2)),
        A_used=A_used,
        degree_reduced=reduced,
        iterations=it,
    )


def land_elasticity(fit: ShareFit, step2: Step2Fit, k, l):
    return fit.integrated_dl(k, l) + step2.integration_constant_dl(l)


def estimate(panel: Panel, degree: int = 2, tau: int = 2, A: int = 3) -> EstimateReport:
    """Run both steps and report mean elasticities over all observations."""
    try:
        fit = fit_share_regression(panel, degree)
    except EstimationError:
        raise
    except (DomainError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise EstimationError(str(exc), "step1") from exc
    H = build_H_hat(panel, fit)
    try:
        s2 = fit_step2(H, panel, tau=tau, A=A)
    except EstimationError:
        raise
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        raise EstimationError(str(exc), "step2") from exc
    ek = fit.elasticity(panel.k, panel.l)
    el = land_elasticity(fit, s2, panel.k, panel.l)
    return EstimateReport(
        method="proposed",
        eps_k_mean=float(np.mean(ek)),
        eps_l_mean=float(np.mean(el)),
        eps_k=ek,
        eps_l=el,
        diagnostics={
            "gamma": fit.gamma.tolist(),
            "step1_objective": fit.objective,
            "step1_gradient_norm": fit.gradient_norm,
            "step1_iterations": fit.iterations,
            "alpha": s2.alpha.tolist(),
            "c0": s2.c0,
            "delta": s2.delta.tolist(),
            "A_used": s2.A_used,
            "degree_reduced": s2.degree_reduced,
            "step2_objective": s2.objective,
            "step2_iterations": s2.iterations,
            "moments": s2.moments.tolist(),
        },
    )
