"""Sparse l1-regularised regression solvers.

All Lasso-type problems are reduced to the Gram form
``0.5 * b' G b - c' b + sum(lam * |b|)`` and handed to a compiled coordinate
descent kernel. The Dantzig selector and the CLIME columns are linear
programmes of the shape ``min |theta|_1  s.t.  lower <= M theta <= upper``
and are solved exactly by a bounded dual simplex.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import cd_gram, l1_box_simplex, logistic_prox_newton
from .exceptions import InputError, SolverError
from .models import logistic_link


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls shared by the iterative solvers.

    ``tolerance`` bounds the sup-norm coordinate change in a full sweep.
    """

    max_iterations: int = 10_000
    tolerance: float = 1e-10
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InputError("max_iterations must be at least 1")
        if not self.tolerance > 0:
            raise InputError("tolerance must be positive")


@dataclass
class SolverResult:
    """Coefficients plus convergence diagnostics.

    ``residual`` is the KKT residual for penalised problems and the largest
    constraint violation for linear programmes.
    """

    coef: np.ndarray
    n_iter: int
    converged: bool
    residual: float


@dataclass
class LassoPath:
    grid: np.ndarray
    solutions: np.ndarray  # shape (len(grid), p)
    converged: np.ndarray


@dataclass
class ScaledLassoResult:
    coef: np.ndarray
    sigma: float
    lambda0: float
    n_iter: int
    converged: bool
    degenerate: bool


def _as_design(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty 2-d array")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains non-finite entries")
    return X


def _as_response(y, n, name="y"):
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != n:
        raise InputError(f"{name} has length {y.shape[0]}, expected {n}")
    if not np.all(np.isfinite(y)):
        raise InputError(f"{name} contains non-finite entries")
    return y


def soft_threshold(x, t):
    """Proximal map of ``t * |.|``: ``sign(x) * max(|x| - t, 0)``."""
    if np.any(np.asarray(t) < 0):
        raise InputError("threshold must be nonnegative")
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def penalized_kkt_residual(grad, coef, lam):
    """Sup-norm violation of the subgradient optimality conditions.

    ``grad`` is the gradient of the smooth part at ``coef``.
    """
    lam = np.broadcast_to(lam, coef.shape)
    active = coef != 0
    viol = np.where(
        active,
        np.abs(grad + lam * np.sign(coef)),
        np.maximum(np.abs(grad) - lam, 0.0),
    )
    return float(viol.max()) if viol.size else 0.0


def gram_lasso(G, c, lam, opts=None):
    """Minimise ``0.5 b'Gb - c'b + sum(lam*|b|)`` by coordinate descent."""
    opts = opts or SolverOptions()
    G = np.ascontiguousarray(G, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    p = c.shape[0]
    lam = np.ascontiguousarray(np.broadcast_to(np.asarray(lam, dtype=float), (p,)))
    if opts.warm_start is None:
        beta = np.zeros(p)
    else:
        beta = np.array(opts.warm_start, dtype=float)
        if beta.shape != (p,):
            raise InputError("warm start has the wrong length")
    beta, n_iter, converged = cd_gram(G, c, lam, beta, opts.max_iterations, opts.tolerance)
    resid = penalized_kkt_residual(G @ beta - c, beta, lam)
    return SolverResult(beta, int(n_iter), bool(converged), resid)


def lasso_coordinate_descent(X, y, lam, opts=None):
    """Lasso ``(2n)^{-1} |y - X b|^2 + lam |b|_1`` via coordinate descent.

    Returns a :class:`SolverResult`; ``converged`` is False when the sweep
    budget ran out, in which case the last iterate is still returned.
    """
    X = _as_design(X)
    n = X.shape[0]
    y = _as_response(y, n)
    if not lam > 0:
        raise InputError("lambda must be positive")
    return gram_lasso(X.T @ X / n, X.T @ y / n, lam, opts)


def lasso_path(response, design, grid, opts=None):
    """Solutions of ``min_a |response + design a|^2 + t |a|_1`` along ``grid``.

    The grid must be strictly decreasing; each point is warm-started from the
    previous one.
    """
    design = _as_design(design, "design")
    response = _as_response(response, design.shape[0], "response")
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise InputError("grid is empty")
    if np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise InputError("grid must be positive and strictly decreasing")
    opts = opts or SolverOptions()
    G = 2.0 * design.T @ design
    c = -2.0 * design.T @ response
    return _gram_path(G, c, grid, opts)


def _gram_path(G, c, grid, opts):
    p = c.shape[0]
    sols = np.zeros((grid.size, p))
    conv = np.zeros(grid.size, dtype=bool)
    beta = np.zeros(p)
    G = np.ascontiguousarray(G)
    c = np.ascontiguousarray(c)
    for k, t in enumerate(grid):
        lam = np.full(p, t)
        beta, _, ok = cd_gram(G, c, lam, beta.copy(), opts.max_iterations, opts.tolerance)
        sols[k] = beta
        conv[k] = ok
    return LassoPath(grid, sols, conv)


def default_lambda0(n, p):
    """Universal penalty level ``sqrt(2 log p / n)``."""
    return float(np.sqrt(2.0 * np.log(p) / n))


def scaled_lasso(X, y, lambda0=None, opts=None, max_outer=100, sigma_tol=1e-8):
    """Jointly estimate coefficients and noise level.

    Alternates a Lasso at penalty ``sigma * lambda0`` with the update
    ``sigma = |y - X b| / sqrt(n)``. The noise level is floored at
    ``max(1e-4 |y| / sqrt(n), 1e-12)``; hitting the floor sets ``degenerate``.
    """
    X = _as_design(X)
    n, p = X.shape
    if n < 2:
        raise InputError("scaled lasso needs at least two observations")
    y = _as_response(y, n)
    if lambda0 is None:
        lambda0 = default_lambda0(n, max(p, 2))
    if not lambda0 > 0:
        raise InputError("lambda0 must be positive")
    opts = opts or SolverOptions()
    G = np.ascontiguousarray(X.T @ X / n)
    c = X.T @ y / n
    ynorm = float(np.linalg.norm(y))
    floor = max(1e-4 * ynorm / np.sqrt(n), 1e-12)
    sigma = max(ynorm / np.sqrt(n), floor)
    beta = np.zeros(p) if opts.warm_start is None else np.array(opts.warm_start, float)
    converged = False
    degenerate = False
    it = 0
    for it in range(1, max_outer + 1):
        lam = np.full(p, sigma * lambda0)
        beta, _, ok = cd_gram(G, c, lam, beta, opts.max_iterations, opts.tolerance)
        new_sigma = float(np.linalg.norm(y - X @ beta)) / np.sqrt(n)
        if new_sigma <= floor:
            new_sigma = floor
            degenerate = True
        else:
            degenerate = False
        change = abs(new_sigma - sigma)
        sigma = new_sigma
        if change < sigma_tol * max(1.0, sigma):
            converged = bool(ok)
            break
    if degenerate:
        lam = np.full(p, sigma * lambda0)
        beta, _, _ = cd_gram(G, c, lam, beta, opts.max_iterations, opts.tolerance)
    return ScaledLassoResult(beta, sigma, float(lambda0), it, converged, degenerate)


def l1_box_lp(M, lower, upper, max_iter=None, refactor_every=50, feas_tol=1e-10):
    """Solve ``min |theta|_1`` subject to ``lower <= M theta <= upper``.

    Returns ``(theta, status, n_iter, max_violation)`` with status 0 for
    optimal, 1 for infeasible and 2 when ``max_iter`` pivots were spent.
    """
    M = np.ascontiguousarray(M, dtype=float)
    lower = np.ascontiguousarray(lower, dtype=float)
    upper = np.ascontiguousarray(upper, dtype=float)
    if np.any(lower > upper):
        return np.zeros(M.shape[1]), 1, 0, float(np.max(lower - upper))
    if max_iter is None:
        max_iter = 50 * (M.shape[0] + M.shape[1])
    theta, status, n_iter, viol = l1_box_simplex(
        M, lower, upper, int(max_iter), feas_tol, int(refactor_every)
    )
    return theta, int(status), int(n_iter), float(viol)


def dantzig_selector(X, y, lam, max_iter=None):
    """Dantzig selector ``min |b|_1  s.t.  |X'(y - Xb)/n|_inf <= lam``.

    Solved exactly as a linear programme. Raises :class:`SolverError` if
    the programme is reported infeasible or the pivot budget runs out.
    """
    X = _as_design(X)
    n = X.shape[0]
    y = _as_response(y, n)
    if not lam > 0:
        raise InputError("lambda must be positive")
    G = X.T @ X / n
    c = X.T @ y / n
    theta, status, n_iter, viol = l1_box_lp(G, c - lam, c + lam, max_iter)
    if status != 0:
        raise SolverError(
            "dantzig selector did not reach an optimal vertex",
            stage="dantzig",
            diagnostics={"status": status, "iterations": n_iter},
        )
    return SolverResult(theta, n_iter, True, max(viol, 0.0))


def logistic_loss(X, y, beta):
    """Mean negative log-likelihood ``n^{-1} sum b(x'beta) - y x'beta``."""
    eta = X @ beta
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def logistic_gradient(X, y, beta):
    eta = X @ beta
    return X.T @ (logistic_link(eta)[1] - y) / X.shape[0]


def _check_binary(y):
    if not np.all((y == 0) | (y == 1)):
        raise InputError("logistic responses must be 0 or 1")


def logistic_lasso(X, y, lam, opts=None, max_inner=1000):
    """l1-penalised logistic regression with every coordinate penalised.

    Proximal Newton with a coordinate-descent inner solver. If the Newton
    budget runs out (e.g. near-separable data with tiny ``lam``) the last
    iterate is returned with ``converged=False``.
    """
    X = _as_design(X)
    n, p = X.shape
    y = _as_response(y, n)
    _check_binary(y)
    if not lam > 0:
        raise InputError("lambda must be positive")
    opts = opts or SolverOptions(max_iterations=200)
    lam_vec = np.full(p, float(lam))
    beta0 = np.zeros(p) if opts.warm_start is None else np.array(opts.warm_start, float)
    Xf = np.asfortranarray(X)
    beta, n_iter, converged = logistic_prox_newton(
        Xf, y, lam_vec, beta0, opts.max_iterations, max_inner, opts.tolerance
    )
    resid = penalized_kkt_residual(logistic_gradient(X, y, beta), beta, lam_vec)
    return SolverResult(beta, int(n_iter), bool(converged), resid)


def logistic_lambda_max(X, y):
    """Smallest penalty at which the zero vector is optimal."""
    X = np.asarray(X, float)
    return float(np.max(np.abs(X.T @ (0.5 - np.asarray(y, float)))) / X.shape[0])


def default_logistic_grid(X, y, size=20, ratio=0.01):
    lmax = logistic_lambda_max(X, y)
    if lmax <= 0:
        lmax = 1.0
    return np.geomspace(lmax, ratio * lmax, size)


def kfold_assignment(n, k, rng_seed):
    """Fold label for each observation, a deterministic function of the seed."""
    perm = np.random.default_rng(rng_seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return folds


def cross_validate_logistic(X, y, lambda_grid, k=10, rng_seed=0, opts=None):
    """Pick the penalty minimising pooled held-out negative log-likelihood.

    Exact ties go to the larger penalty.
    """
    X = _as_design(X)
    n, p = X.shape
    y = _as_response(y, n)
    _check_binary(y)
    grid = np.asarray(lambda_grid, dtype=float).ravel()
    if grid.size == 0:
        raise InputError("lambda grid is empty")
    if k < 2 or k > n:
        raise InputError("fold count must lie in [2, n]")
    if grid.size == 1:
        return float(grid[0])
    order = np.argsort(-grid, kind="stable")
    folds = kfold_assignment(n, k, rng_seed)
    base = opts or SolverOptions(max_iterations=200)
    deviance = np.zeros(grid.size)
    for f in range(k):
        test = folds == f
        Xtr, ytr = X[~test], y[~test]
        Xte, yte = X[test], y[test]
        warm = None
        for idx in order:
            o = SolverOptions(base.max_iterations, base.tolerance, warm)
            fit = logistic_lasso(Xtr, ytr, grid[idx], o)
            warm = fit.coef
            eta = Xte @ fit.coef
            deviance[idx] += float(np.sum(np.logaddexp(0.0, eta) - yte * eta))
    deviance /= n
    best = order[0]
    for idx in order[1:]:
        if deviance[idx] < deviance[best]:
            best = idx
    return float(grid[best])
