"""Estimates of the inverse Hessian used for bias correction.

Linear model: a CLIME-type programme pooled over both half samples.
Logistic model: node-wise Lasso on a Hessian-weighted design, per half.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._kernels import cd_gram
from .exceptions import InputError, SolverError
from .models import logistic_link
from .solvers import SolverOptions, l1_box_lp, penalized_kkt_residual


@dataclass
class PrecisionEstimate:
    """Row ``j`` of ``theta`` is the estimate for column/row ``j``.

    ``feasibility_residuals`` holds the largest constraint violation per
    column (CLIME) or the KKT residual of the node-wise regression.
    """

    theta: np.ndarray
    feasibility_residuals: np.ndarray
    relaxation_rounds: np.ndarray
    eta_used: np.ndarray
    mu_used: Optional[np.ndarray] = None
    iterations: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    def summary(self):
        out = {
            "max_feasibility_residual": float(np.max(self.feasibility_residuals)),
            "relaxed_columns": int(np.count_nonzero(self.relaxation_rounds)),
            "max_relaxation_rounds": int(np.max(self.relaxation_rounds)),
            "eta_min": float(np.min(self.eta_used)),
            "eta_max": float(np.max(self.eta_used)),
        }
        if self.mu_used is not None:
            out["mu_max"] = float(np.max(self.mu_used))
        return out


@dataclass(frozen=True)
class ClimeConfig:
    """Tuning for the pooled CLIME programme.

    When ``eta``/``mu`` are None they default to
    ``eta_const * sqrt(log p / n)`` and ``mu_const * sqrt(log max(p, n))``.
    ``max_pivots`` caps simplex pivots per attempt; a column that hits the cap
    is treated like an infeasible one and relaxed.
    """

    eta: Optional[float] = None
    mu: Optional[float] = None
    eta_const: float = 2.0
    mu_const: float = 2.0
    max_relaxations: int = 5
    max_pivots: Optional[int] = None

    def __post_init__(self):
        for name in ("eta", "mu"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise InputError(f"{name} must be positive")
        if not (self.eta_const > 0 and self.mu_const > 0):
            raise InputError("rate constants must be positive")
        if self.max_relaxations < 0:
            raise InputError("max_relaxations must be nonnegative")

    def resolve(self, n, p):
        eta = self.eta if self.eta is not None else self.eta_const * np.sqrt(np.log(p) / n)
        mu = self.mu if self.mu is not None else self.mu_const * np.sqrt(np.log(max(p, n)))
        return float(eta), float(mu)


def _check_halves(X_A, X_B):
    X_A = np.asarray(X_A, dtype=float)
    X_B = np.asarray(X_B, dtype=float)
    if X_A.ndim != 2 or X_B.ndim != 2 or X_A.shape[1] != X_B.shape[1]:
        raise InputError("half samples must be 2-d with the same number of columns")
    if not (np.all(np.isfinite(X_A)) and np.all(np.isfinite(X_B))):
        raise InputError("design contains non-finite entries")
    return X_A, X_B


def clime_constraints(X_A, X_B):
    """Stacked constraint matrix ``[S_A; S_B; X]`` of the pooled programme."""
    X_A, X_B = _check_halves(X_A, X_B)
    S_A = X_A.T @ X_A / X_A.shape[0]
    S_B = X_B.T @ X_B / X_B.shape[0]
    return np.ascontiguousarray(np.vstack([S_A, S_B, X_A, X_B]))


def clime_violation(M, theta_j, j, eta, mu, p):
    """Largest violation of the three box constraints for column ``j``."""
    r = M @ theta_j
    r[j] -= 1.0
    r[p + j] -= 1.0
    v = np.concatenate([np.abs(r[: 2 * p]) - eta, np.abs(r[2 * p :]) - mu])
    return float(max(v.max(), 0.0))


def clime_pooled(X_A, X_B, cfg=None):
    """Column-wise ``min |theta|_1`` under the pooled CLIME constraints.

    For column ``j`` the constraints are ``|S_A theta - e_j|_inf <= eta``,
    ``|S_B theta - e_j|_inf <= eta`` and ``|X theta|_inf <= mu`` with ``X``
    the stacked sample. Infeasible (or over-budget) columns are retried
    with ``eta`` and ``mu`` doubled, up to ``cfg.max_relaxations`` times.
    """
    cfg = cfg or ClimeConfig()
    X_A, X_B = _check_halves(X_A, X_B)
    p = X_A.shape[1]
    n = X_A.shape[0] + X_B.shape[0]
    eta0, mu0 = cfg.resolve(n, p)
    M = clime_constraints(X_A, X_B)
    R = M.shape[0]
    budget = cfg.max_pivots if cfg.max_pivots is not None else 20 * (p + R)
    theta = np.zeros((p, p))
    resid = np.zeros(p)
    rounds = np.zeros(p, dtype=np.int64)
    etas = np.zeros(p)
    mus = np.zeros(p)
    iters = np.zeros(p, dtype=np.int64)
    for j in range(p):
        centre = np.zeros(R)
        centre[j] = 1.0
        centre[p + j] = 1.0
        eta, mu = eta0, mu0
        status = -1
        for k in range(cfg.max_relaxations + 1):
            half = np.concatenate([np.full(2 * p, eta), np.full(R - 2 * p, mu)])
            th, status, it, _ = l1_box_lp(M, centre - half, centre + half, budget)
            iters[j] += it
            if status == 0:
                break
            eta *= 2.0
            mu *= 2.0
        if status != 0:
            raise SolverError(
                f"column {j} infeasible after {cfg.max_relaxations} relaxations",
                stage="clime",
                diagnostics={"column": j, "eta": eta, "mu": mu, "status": status},
            )
        theta[j] = th
        rounds[j] = k
        etas[j] = eta
        mus[j] = mu
        resid[j] = clime_violation(M, th, j, eta, mu, p)
    return PrecisionEstimate(theta, resid, rounds, etas, mus, iters)


def weighted_design(X, beta):
    """Rows of ``X`` scaled by ``sqrt(b''(x_i' beta))``."""
    X = np.asarray(X, dtype=float)
    w = logistic_link(X @ np.asarray(beta, dtype=float))[2]
    return X * np.sqrt(np.atleast_1d(w))[:, None]


def default_nodewise_eta(n, p, const=0.5, exponent=0.5):
    """``const * (log p)^exponent / sqrt(n)``."""
    return float(const * np.log(p) ** exponent / np.sqrt(n))


def nodewise_precision(U, eta, opts=None):
    """Node-wise Lasso inverse of ``U'U / m``.

    Regress each column on the others with penalty ``eta`` and assemble
    ``Theta_jj = 1 / (G_jj - G_{j,-j} gamma_j)``, ``Theta_{j,-j} = -Theta_jj gamma_j``.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise InputError("U must be 2-d")
    if not eta > 0:
        raise InputError("eta must be positive")
    opts = opts or SolverOptions()
    m, p = U.shape
    G = np.ascontiguousarray(U.T @ U / m)
    theta = np.zeros((p, p))
    resid = np.zeros(p)
    iters = np.zeros(p, dtype=np.int64)
    gammas = np.zeros((p, p))
    for j in range(p):
        c = np.ascontiguousarray(G[:, j])
        lam = np.full(p, float(eta))
        lam[j] = np.inf  # pins coordinate j at zero
        gam, it, _ = cd_gram(G, c, lam, np.zeros(p), opts.max_iterations, opts.tolerance)
        others = np.arange(p) != j
        resid[j] = penalized_kkt_residual((G @ gam - c)[others], gam[others], eta)
        iters[j] = it
        denom = G[j, j] - G[j] @ gam
        if not denom > 1e-10:
            raise SolverError(
                f"node-wise denominator {denom:.3g} for column {j}",
                stage="nodewise",
                diagnostics={"column": j, "denominator": float(denom)},
            )
        tjj = 1.0 / denom
        theta[j] = -tjj * gam
        theta[j, j] = tjj
        gammas[j] = gam
    return PrecisionEstimate(
        theta,
        resid,
        np.zeros(p, dtype=np.int64),
        np.full(p, float(eta)),
        None,
        iters,
        {"gamma": gammas},
    )
