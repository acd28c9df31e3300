"""Synthetic data and Monte Carlo rejection-rate studies."""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .exceptions import InputError, SolverError
from .models import logistic_link
from .pptest import Dataset, TestConfig, evaluate_null, fit_components
from .projection import BetaMin, L0Ball, QuadraticBall

CSV_HEADER = ["p", "rho", "hypothesis", "model", "param", "rejection_rate", "reps", "B", "seed"]

TABLE1_P = (200, 350, 500)
TABLE1_RHO = (0.0, 0.25, 0.5, 0.75)
TABLE2_P = (500,)
TABLE2_RHO = (0.5,)
TABLE1_NULLS = {"l0": (4,), "betamin": (1.0,), "l2ball": (2.0,)}
TABLE2_NULLS = {
    "l0": (4, 3, 2, 1),
    "betamin": (1.0, 1.2, 1.4, 1.6),
    "l2ball": (2.0, 1.2, 1.0, 0.9),
}
MAX_FAILURE_FRACTION = 0.05


def toeplitz_covariance(p, rho):
    """``Sigma[i, j] = rho^|i - j|``."""
    if not abs(rho) < 1:
        raise InputError("rho must satisfy |rho| < 1")
    idx = np.arange(p)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


def cholesky_factor(sigma):
    """Lower-triangular ``L`` with ``L L' = sigma``; raises if not positive definite."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InputError("covariance must be square")
    if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12):
        raise InputError("covariance must be symmetric")
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise InputError("covariance is not positive definite") from exc


def make_null(family, param):
    if family == "l0":
        return L0Ball(int(param))
    if family == "betamin":
        return BetaMin(float(param))
    if family == "l2ball":
        return QuadraticBall(float(param))
    raise InputError(f"unknown hypothesis family {family!r}")


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell. ``beta_star`` has ones on its first ``k`` entries."""

    model: str = "linear"
    n: int = 200
    p: int = 200
    rho: float = 0.0
    k: int = 4
    null_set: object = field(default_factory=lambda: L0Ball(4))
    reps: int = 100
    test: TestConfig = field(default_factory=TestConfig)
    master_seed: int = 0
    intercept: bool = False

    def __post_init__(self):
        if self.model not in ("linear", "logistic"):
            raise InputError(f"unknown model {self.model!r}")
        if self.p < self.k:
            raise InputError("p must be at least k")
        if not 0 <= self.rho < 1:
            raise InputError("rho must lie in [0, 1)")
        if self.reps < 1:
            raise InputError("reps must be positive")

    def beta_star(self):
        beta = np.zeros(self.p)
        beta[: self.k] = 1.0
        return beta


@dataclass
class RepRecord:
    rep: int
    seed: int
    t_n: float
    critical_value: float
    reject: bool
    failed: bool = False
    error: Optional[str] = None


@dataclass
class SimResult:
    rejection_rate: float
    per_rep: list
    wall_time: float
    n_failed: int = 0


def rep_seed(master_seed, rep):
    """Per-replication seed mixed from ``(master_seed, rep)``."""
    ss = np.random.SeedSequence([int(master_seed), int(rep)])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_dataset(cfg, seed, chol=None):
    """Gaussian Toeplitz design with a linear or logistic response."""
    rng = np.random.default_rng(seed)
    if chol is None:
        chol = cholesky_factor(toeplitz_covariance(cfg.p, cfg.rho))
    Z = rng.standard_normal((cfg.n, cfg.p))
    X = Z @ chol.T
    eta = X @ cfg.beta_star()
    if cfg.model == "linear":
        y = eta + rng.standard_normal(cfg.n)
    else:
        u = rng.uniform(size=cfg.n)
        y = (u <= logistic_link(eta)[1]).astype(float)
    if cfg.intercept:
        X = np.hstack([np.ones((cfg.n, 1)), X])
    return Dataset(y, X)


def _one_rep(args):
    cfg, nulls, r, chol = args
    seed = rep_seed(cfg.master_seed, r)
    data = generate_dataset(cfg, seed, chol)
    test_cfg = replace(cfg.test, seed=seed)
    try:
        fitted = fit_components(data, cfg.model, test_cfg)
        out = []
        for ns in nulls:
            res = evaluate_null(fitted, ns, test_cfg)
            out.append(RepRecord(r, seed, res.t_n, res.critical_value, res.reject))
        return out
    except SolverError as exc:
        return [RepRecord(r, seed, float("nan"), float("nan"), False, True, str(exc)) for _ in nulls]


def monte_carlo_multi(cfg, nulls, workers=1, progress=None):
    """Rejection rates for several null sets on shared replications.

    Each replication's data, initial estimate, precision estimate and
    bootstrap draws are shared by all null sets; results match running
    :func:`monte_carlo` separately per null set.
    """
    nulls = list(nulls)
    t0 = time.perf_counter()
    chol = cholesky_factor(toeplitz_covariance(cfg.p, cfg.rho))
    jobs = [(cfg, nulls, r, chol) for r in range(cfg.reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_one_rep, jobs))
    else:
        rows = []
        for job in jobs:
            rows.append(_one_rep(job))
            if progress is not None:
                progress(job[2] + 1, cfg.reps)
    elapsed = time.perf_counter() - t0
    n_failed = sum(1 for row in rows if row[0].failed)
    if n_failed > MAX_FAILURE_FRACTION * cfg.reps:
        first = next(row[0].error for row in rows if row[0].failed)
        raise SolverError(
            f"{n_failed} of {cfg.reps} replications failed; first error: {first}",
            stage="simulate",
        )
    results = []
    for i in range(len(nulls)):
        recs = [row[i] for row in rows]
        ok = [rec.reject for rec in recs if not rec.failed]
        rate = float(np.mean(ok)) if ok else float("nan")
        results.append(SimResult(rate, recs, elapsed, n_failed))
    return results


def monte_carlo(cfg, workers=1, progress=None):
    return monte_carlo_multi(cfg, [cfg.null_set], workers, progress)[0]


def study_grid(study, p_list=None, rho_list=None):
    if study == "table1":
        return (tuple(p_list or TABLE1_P), tuple(rho_list or TABLE1_RHO), TABLE1_NULLS)
    if study == "table2":
        return (tuple(p_list or TABLE2_P), tuple(rho_list or TABLE2_RHO), TABLE2_NULLS)
    raise InputError(f"unknown study {study!r}")


def run_study(
    study,
    p_list: Optional[Sequence[int]] = None,
    rho_list: Optional[Sequence[float]] = None,
    reps=100,
    bootstrap=1000,
    seed=0,
    models=("linear", "logistic"),
    n=200,
    workers=1,
    test=None,
    log=None,
):
    """Rows of a size (``table1``) or power (``table2``) study.

    One row per (p, rho, hypothesis, model, parameter) cell, in that nesting
    order with hypothesis before model.
    """
    ps, rhos, nulls = study_grid(study, p_list, rho_list)
    base_test = test or TestConfig()
    base_test = replace(base_test, bootstrap=int(bootstrap))
    cells = {}
    for p in ps:
        for rho in rhos:
            for model in models:
                flat = [(fam, par) for fam, pars in nulls.items() for par in pars]
                cfg = SimConfig(
                    model=model, n=n, p=p, rho=rho, reps=reps, test=base_test, master_seed=seed
                )
                t0 = time.perf_counter()
                res = monte_carlo_multi(cfg, [make_null(f, v) for f, v in flat], workers)
                if log is not None:
                    log(f"p={p} rho={rho} model={model} done in {time.perf_counter() - t0:.1f}s")
                for (fam, par), r in zip(flat, res):
                    cells[(p, rho, fam, model, par)] = r
    rows = []
    for p in ps:
        for rho in rhos:
            for fam, pars in nulls.items():
                for model in models:
                    for par in pars:
                        r = cells[(p, rho, fam, model, par)]
                        rows.append(
                            {
                                "p": p,
                                "rho": rho,
                                "hypothesis": fam,
                                "model": model,
                                "param": par,
                                "rejection_rate": r.rejection_rate,
                                "reps": reps,
                                "B": int(bootstrap),
                                "seed": seed,
                            }
                        )
    return rows


def write_csv(rows, fh):
    writer = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


__all__ = [
    "SimConfig",
    "SimResult",
    "RepRecord",
    "toeplitz_covariance",
    "cholesky_factor",
    "generate_dataset",
    "monte_carlo",
    "monte_carlo_multi",
    "run_study",
    "rep_seed",
]
