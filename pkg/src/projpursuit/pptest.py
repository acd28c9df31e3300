"""The projection pursuit test: split, estimate, project, correct, bootstrap."""

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .exceptions import InputError, PPTestError, SolverError
from .models import ModelAdapter, get_model
from .precision import (
    ClimeConfig,
    clime_pooled,
    default_nodewise_eta,
    nodewise_precision,
    weighted_design,
)
from .projection import describe, project
from .solvers import (
    cross_validate_logistic,
    default_logistic_grid,
    logistic_lasso,
    scaled_lasso,
)


@dataclass
class Dataset:
    """Response ``y`` (length n) and design ``X`` (n x p)."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.ndim != 2:
            raise InputError("design must be a 2-d array")
        if self.X.shape[0] != self.y.shape[0]:
            raise InputError(f"{self.y.shape[0]} responses but {self.X.shape[0]} design rows")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise InputError("data contain non-finite values")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass
class SplitData:
    half_A: Dataset
    half_B: Dataset
    m_A: int
    m_B: int


@dataclass(frozen=True)
class TestConfig:
    """Settings for one run of the test.

    ``nodewise_eta=None`` uses ``nodewise_const * (log p)^nodewise_exponent / sqrt(n)``.
    ``logistic_lambda=None`` selects the penalty by cross-validation.
    """

    __test__ = False  # not a pytest class

    alpha: float = 0.05
    bootstrap: int = 1000
    seed: int = 0
    lambda0: Optional[float] = None
    clime: ClimeConfig = field(default_factory=ClimeConfig)
    nodewise_eta: Optional[float] = None
    nodewise_const: float = 0.5
    nodewise_exponent: float = 0.5
    logistic_lambda: Optional[float] = None
    cv_folds: int = 10
    cv_grid_size: int = 20
    cv_grid_ratio: float = 0.01

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        if int(self.bootstrap) != self.bootstrap or self.bootstrap < 100:
            raise InputError("bootstrap draws must be an integer >= 100")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InputError("seed must be an integer in [0, 2^64)")
        if self.cv_folds < 2:
            raise InputError("cv_folds must be at least 2")

    def to_dict(self):
        return asdict(self)


@dataclass
class TestResult:
    __test__ = False

    t_n: float
    critical_value: float
    p_value: float
    alpha: float
    reject: bool
    b: int
    seed: int
    delta_sp: np.ndarray
    delta_thresholded: bool
    beta_u: np.ndarray
    beta_d: np.ndarray
    null_set: str
    model: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, config=None):
        out = {
            "t_n": self.t_n,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "b": self.b,
            "seed": self.seed,
            "delta_thresholded": self.delta_thresholded,
            "null_set": self.null_set,
            "model": self.model,
            "diagnostics": self.diagnostics,
            "beta_u": self.beta_u.tolist(),
            "beta_d": self.beta_d.tolist(),
            "delta_sp": self.delta_sp.tolist(),
        }
        if config is not None:
            out["config"] = config
        return out


def split_sample(dataset):
    """First ``floor(n/2)`` rows form half A, the rest half B."""
    n = dataset.n
    if n < 4:
        raise InputError("need at least 4 observations to split")
    m_A = n // 2
    A = Dataset(dataset.y[:m_A], dataset.X[:m_A])
    B = Dataset(dataset.y[m_A:], dataset.X[m_A:])
    return SplitData(A, B, m_A, n - m_A)


def delta_sp(theta_A, theta_B, scores_A, scores_B):
    """``Theta_A mean(scores_A) - Theta_B mean(scores_B)``.

    ``scores_A`` are half-A scores at the initial estimate and ``scores_B``
    half-B scores at the projected estimate, one row per observation.
    """
    scores_A = np.atleast_2d(scores_A)
    scores_B = np.atleast_2d(scores_B)
    return theta_A @ scores_A.mean(axis=0) - theta_B @ scores_B.mean(axis=0)


def threshold_delta(delta, n):
    """Keep ``delta`` if ``|delta|_inf <= n^{-1/4}``, else return zeros."""
    delta = np.asarray(delta, dtype=float)
    if n < 1:
        raise InputError("n must be positive")
    if np.max(np.abs(delta), initial=0.0) <= 1.0 / n**0.25:
        return delta.copy()
    return np.zeros_like(delta)


def compute_r_hat(theta_A, theta_B, split, beta_u, model):
    """Influence vectors for the bootstrap and their mean.

    Row ``i`` is ``2 Theta_A s(z_i, beta_u)`` on half A and
    ``-2 Theta_B s(z_i, beta_u)`` on half B. The mean is taken relative to
    the first row so that identical rows centre to exact zeros.
    """
    model = get_model(model)
    sA = model.scores(split.half_A.X, split.half_A.y, beta_u)
    sB = model.scores(split.half_B.X, split.half_B.y, beta_u)
    r_hat = np.vstack([2.0 * sA @ theta_A.T, -2.0 * sB @ theta_B.T])
    return r_hat, row_mean(r_hat)


def row_mean(r_hat):
    base = r_hat[0]
    return base + (r_hat - base).mean(axis=0)


def test_statistic(beta_u, beta_d, delta_hat, n):
    """``sqrt(n) * max_j |beta_u - beta_d - delta_hat|``."""
    diff = np.asarray(beta_u) - np.asarray(beta_d) - np.asarray(delta_hat)
    return float(math.sqrt(n) * np.max(np.abs(diff), initial=0.0))


test_statistic.__test__ = False


def multiplier_matrix(n, B, seed):
    """Gaussian multipliers; row ``b`` comes from its own ``(seed, b)`` stream."""
    xi = np.empty((B, n))
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), b]))
        xi[b] = rng.standard_normal(n)
    return xi


def bootstrap_statistics(r_hat, r_star, B, seed, xi=None):
    """Multiplier bootstrap draws ``n^{-1/2} max_j |sum_i (R_ij - R*_j) xi_i|``."""
    r_hat = np.atleast_2d(np.asarray(r_hat, dtype=float))
    n = r_hat.shape[0]
    if B < 1:
        raise InputError("B must be positive")
    if xi is None:
        xi = multiplier_matrix(n, B, seed)
    centred = r_hat - np.asarray(r_star, dtype=float)
    return np.abs(xi @ centred).max(axis=1) / math.sqrt(n)


def bootstrap_quantile(draws, alpha):
    """The ``ceil((1 - alpha) B)``-th smallest draw, index clamped to [1, B]."""
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    draws = np.sort(np.asarray(draws, dtype=float))
    B = draws.size
    # the small offset stops (1 - alpha) * B from rounding just above an integer
    k = math.ceil((1.0 - alpha) * B - 1e-9)
    k = min(max(k, 1), B)
    return float(draws[k - 1])


def p_value(draws, t_n):
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        raise InputError("no bootstrap draws")
    return float((1 + np.count_nonzero(draws >= t_n)) / (draws.size + 1))


# -- orchestration ---------------------------------------------------------


@dataclass
class FittedComponents:
    """Everything in the test that does not depend on the null set."""

    dataset: Dataset
    split: SplitData
    model: ModelAdapter
    beta_u: np.ndarray
    theta_A: np.ndarray
    theta_B: np.ndarray
    precision: dict
    draws: np.ndarray
    diagnostics: dict


def _initial_estimate(dataset, model, cfg):
    if model.kind == "linear":
        fit = scaled_lasso(dataset.X, dataset.y, cfg.lambda0)
        diag = {
            "estimator": "scaled_lasso",
            "sigma": fit.sigma,
            "lambda0": fit.lambda0,
            "converged": fit.converged,
            "degenerate": fit.degenerate,
        }
        return fit.coef, diag
    if not np.all((dataset.y == 0) | (dataset.y == 1)):
        raise InputError("logistic responses must be 0 or 1")
    lam = cfg.logistic_lambda
    selected = lam is None
    if selected:
        grid = default_logistic_grid(dataset.X, dataset.y, cfg.cv_grid_size, cfg.cv_grid_ratio)
        lam = cross_validate_logistic(dataset.X, dataset.y, grid, cfg.cv_folds, cfg.seed)
    fit = logistic_lasso(dataset.X, dataset.y, lam)
    diag = {
        "estimator": "logistic_lasso",
        "lambda": float(lam),
        "cv_selected": selected,
        "converged": fit.converged,
        "kkt_residual": fit.residual,
    }
    return fit.coef, diag


def _precision(split, model, beta_u, cfg, n):
    p = split.half_A.p
    if model.kind == "linear":
        est = clime_pooled(split.half_A.X, split.half_B.X, cfg.clime)
        eta0, mu0 = cfg.clime.resolve(n, p)
        diag = {"method": "clime", "eta": eta0, "mu": mu0, **est.summary()}
        return est.theta, est.theta, diag
    eta = cfg.nodewise_eta
    if eta is None:
        eta = default_nodewise_eta(n, p, cfg.nodewise_const, cfg.nodewise_exponent)
    est_A = nodewise_precision(weighted_design(split.half_A.X, beta_u), eta)
    est_B = nodewise_precision(weighted_design(split.half_B.X, beta_u), eta)
    diag = {
        "method": "nodewise",
        "eta": float(eta),
        "max_kkt_residual": float(max(est_A.feasibility_residuals.max(), est_B.feasibility_residuals.max())),
    }
    return est_A.theta, est_B.theta, diag


def fit_components(dataset, model, cfg):
    """Run every null-independent stage of the test.

    The returned object can be evaluated against several null sets with
    :func:`evaluate_null`; each evaluation equals a separate :func:`run_pptest`.
    """
    model = get_model(model)
    split = split_sample(dataset)
    n = dataset.n
    try:
        beta_u, diag_u = _initial_estimate(dataset, model, cfg)
    except PPTestError:
        raise
    except Exception as exc:  # pragma: no cover - defensive labelling
        raise SolverError(str(exc), stage="initial_estimate") from exc
    try:
        theta_A, theta_B, diag_p = _precision(split, model, beta_u, cfg, n)
    except SolverError:
        raise
    except np.linalg.LinAlgError as exc:
        raise SolverError(str(exc), stage="precision") from exc
    r_hat, r_star = compute_r_hat(theta_A, theta_B, split, beta_u, model)
    draws = bootstrap_statistics(r_hat, r_star, cfg.bootstrap, cfg.seed)
    return FittedComponents(
        dataset, split, model, beta_u, theta_A, theta_B, diag_p, draws, {"initial": diag_u}
    )


def evaluate_null(fitted, null_set, cfg):
    """Finish the test for one null set using precomputed components."""
    split = fitted.split
    model = fitted.model
    n = fitted.dataset.n
    proj = project(fitted.beta_u, null_set)
    beta_d = proj.point
    sA = model.scores(split.half_A.X, split.half_A.y, fitted.beta_u)
    sB = model.scores(split.half_B.X, split.half_B.y, beta_d)
    d_sp = delta_sp(fitted.theta_A, fitted.theta_B, sA, sB)
    d_hat = threshold_delta(d_sp, n)
    thresholded = bool(np.any(d_sp != 0) and not np.any(d_hat != 0))
    t_n = test_statistic(fitted.beta_u, beta_d, d_hat, n)
    crit = bootstrap_quantile(fitted.draws, cfg.alpha)
    diagnostics = {
        **fitted.diagnostics,
        "precision": fitted.precision,
        "projection_distance": proj.distance,
        "delta_sp_sup": float(np.max(np.abs(d_sp), initial=0.0)),
        "delta_threshold": 1.0 / n**0.25,
    }
    return TestResult(
        t_n=t_n,
        critical_value=crit,
        p_value=p_value(fitted.draws, t_n),
        alpha=cfg.alpha,
        reject=bool(t_n > crit),
        b=int(cfg.bootstrap),
        seed=int(cfg.seed),
        delta_sp=d_sp,
        delta_thresholded=thresholded,
        beta_u=fitted.beta_u,
        beta_d=beta_d,
        null_set=describe(null_set),
        model=model.kind,
        diagnostics=diagnostics,
    )


def run_pptest(dataset, model, null_set, cfg=None):
    """Test ``H0: beta* in null_set`` at level ``cfg.alpha``.

    Rejects exactly when the statistic exceeds the bootstrap critical value.
    """
    cfg = cfg or TestConfig()
    fitted = fit_components(dataset, model, cfg)
    return evaluate_null(fitted, null_set, cfg)
