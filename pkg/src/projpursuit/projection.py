"""l1 projections onto the supported null sets.

Each routine returns the point of the set closest to ``v`` in l1 distance
together with that distance.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._kernels import cd_gram
from .exceptions import ContractError, InputError


@dataclass(frozen=True)
class L0Ball:
    """Vectors with at most ``s0`` nonzero entries."""

    s0: int

    def __post_init__(self):
        if int(self.s0) != self.s0 or self.s0 < 0:
            raise InputError("s0 must be a nonnegative integer")


@dataclass(frozen=True)
class BetaMin:
    """Vectors whose nonzero entries all have magnitude at least ``c``."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise InputError("beta-min level must be positive")


@dataclass(frozen=True, eq=False)
class QuadraticBall:
    """Vectors with ``|Q beta|_2 <= c``. ``Q=None`` means the identity."""

    c: float
    Q: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.c > 0:
            raise InputError("radius must be positive")
        if self.Q is not None:
            Q = np.asarray(self.Q, dtype=float)
            if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
                raise InputError("Q must be a square matrix")
            if not np.all(np.isfinite(Q)):
                raise InputError("Q contains non-finite entries")
            object.__setattr__(self, "Q", Q)

    def matrix(self, p):
        if self.Q is None:
            return np.eye(p)
        if self.Q.shape[0] != p:
            raise InputError(f"Q is {self.Q.shape[0]}x{self.Q.shape[0]} but the vector has length {p}")
        return self.Q


@dataclass(frozen=True, eq=False)
class Custom:
    """User-supplied projection.

    ``oracle(v)`` must return ``(point, distance)``. When ``contains`` is
    given it is used to check membership of the returned point.
    """

    oracle: Callable
    contains: Optional[Callable] = None
    name: str = "custom"


@dataclass
class Projection:
    point: np.ndarray
    distance: float
    diagnostics: dict = field(default_factory=dict)


def describe(null_set):
    """Short text form, e.g. ``l0:4`` or ``betamin:1.0``."""
    if isinstance(null_set, L0Ball):
        return f"l0:{null_set.s0}"
    if isinstance(null_set, BetaMin):
        return f"betamin:{null_set.c:g}"
    if isinstance(null_set, QuadraticBall):
        tag = "" if null_set.Q is None else "(Q)"
        return f"l2ball:{null_set.c:g}{tag}"
    if isinstance(null_set, Custom):
        return null_set.name
    raise InputError(f"unknown null set {null_set!r}")


def parse_null(spec, Q=None):
    """Parse ``l0:<s0>``, ``betamin:<c>`` or ``l2ball:<c>``."""
    try:
        kind, value = spec.split(":", 1)
        kind = kind.strip().lower()
        if kind == "l0":
            s0 = float(value)
            if s0 != int(s0):
                raise ValueError
            return L0Ball(int(s0))
        if kind == "betamin":
            return BetaMin(float(value))
        if kind in ("l2ball", "quadratic"):
            return QuadraticBall(float(value), Q)
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"cannot parse null set {spec!r}") from None
    raise InputError(f"unknown null family in {spec!r}")


def _vector(v):
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise InputError("vector contains non-finite entries")
    return v


def _l1(a, b):
    return float(np.abs(a - b).sum())


def project_l0(v, s0):
    """Keep the ``s0`` largest magnitudes; ties favour the lower index."""
    v = _vector(v)
    if s0 < 0:
        raise InputError("s0 must be nonnegative")
    if s0 >= v.size:
        return Projection(v.copy(), 0.0, {"kept": v.size})
    point = np.zeros_like(v)
    keep = np.argsort(-np.abs(v), kind="stable")[: int(s0)]
    point[keep] = v[keep]
    return Projection(point, _l1(point, v), {"kept": int(s0)})


def rho_threshold(a, c):
    """Closest point of ``{0} U {|x| >= c}`` to ``a`` (ties at ``c/2`` snap to ``c``)."""
    if not c > 0:
        raise InputError("c must be positive")
    a = np.asarray(a, dtype=float)
    mag = np.abs(a)
    out = np.where(mag >= c, a, np.where(mag >= c / 2.0, np.sign(a) * c, 0.0))
    if out.ndim == 0:
        return float(out)
    return out


def project_betamin(v, c):
    v = _vector(v)
    point = rho_threshold(v, c)
    point = np.atleast_1d(point)
    return Projection(point, _l1(point, v), {})


def project_quadratic(v, Q, c, n_grid=100, n_bisect=40, tol=1e-13, max_refine=5):
    """l1 projection onto ``{b : |Q b|_2 <= c}``.

    The displacement ``a`` solves ``min |Qv + Qa|^2 + t |a|_1`` for the largest
    ``t`` that lands inside the ball. ``t`` is located on a log grid and then
    refined by bisection; feasibility of the returned point is checked
    directly.
    """
    v = _vector(v)
    p = v.size
    Q = np.eye(p) if Q is None else np.asarray(Q, dtype=float)
    if Q.shape != (p, p):
        raise InputError("Q and v have incompatible shapes")
    if not c > 0:
        raise InputError("radius must be positive")
    Qv = Q @ v
    if np.linalg.norm(Qv) <= c:
        return Projection(v.copy(), 0.0, {"t": None, "inside": True})
    QtQ = Q.T @ Q
    G = np.ascontiguousarray(2.0 * QtQ)
    cvec = np.ascontiguousarray(-2.0 * (QtQ @ v))
    limit = c * (1.0 + 1e-8)

    def solve(t, warm):
        a, _, _ = cd_gram(G, cvec, np.full(p, t), warm.copy(), 200_000, tol)
        return a, float(np.linalg.norm(Q @ (v + a)))

    t_hi = 2.0 * np.abs(QtQ @ v).max() * 2.0
    t_lo = 1e-6
    a = np.zeros(p)
    prev_t = None
    found = None
    for _ in range(max_refine + 1):
        grid = np.geomspace(t_hi, t_lo, n_grid)
        for t in grid:
            a, r = solve(t, a)
            if r <= limit:
                found = (t, a)
                break
            prev_t = t
        if found is not None:
            break
        t_hi, t_lo = t_lo, t_lo * 1e-4
    if found is None:
        raise InputError("no feasible point found on the penalty grid")
    t_feas, a_feas = found
    if prev_t is not None:
        t_inf = prev_t
        for _ in range(n_bisect):
            t_mid = np.sqrt(t_feas * t_inf)
            a_mid, r = solve(t_mid, a_feas)
            if r <= limit:
                t_feas, a_feas = t_mid, a_mid
            else:
                t_inf = t_mid
    point = v + a_feas
    return Projection(point, _l1(point, v), {"t": float(t_feas), "inside": False})


def contains(null_set, beta, tol=1e-8):
    """Membership test with a relative tolerance for the quadratic ball."""
    beta = _vector(beta)
    if isinstance(null_set, L0Ball):
        return int(np.count_nonzero(beta)) <= null_set.s0
    if isinstance(null_set, BetaMin):
        nz = beta[beta != 0]
        return bool(nz.size == 0 or np.abs(nz).min() >= null_set.c)
    if isinstance(null_set, QuadraticBall):
        Q = null_set.matrix(beta.size)
        return bool(np.linalg.norm(Q @ beta) <= null_set.c * (1.0 + tol))
    if isinstance(null_set, Custom):
        if null_set.contains is None:
            return True
        return bool(null_set.contains(beta))
    raise InputError(f"unknown null set {null_set!r}")


def project(v, null_set):
    """Dispatch to the family-specific projection."""
    v = _vector(v)
    if isinstance(null_set, L0Ball):
        return project_l0(v, null_set.s0)
    if isinstance(null_set, BetaMin):
        return project_betamin(v, null_set.c)
    if isinstance(null_set, QuadraticBall):
        return project_quadratic(v, null_set.matrix(v.size), null_set.c)
    if isinstance(null_set, Custom):
        point, dist = null_set.oracle(v)
        point = _vector(point)
        if point.shape != v.shape:
            raise ContractError("custom oracle returned a point of the wrong length")
        actual = _l1(point, v)
        if abs(actual - float(dist)) > 1e-8 * max(1.0, actual):
            raise ContractError(f"custom oracle distance {dist} differs from |point - v|_1 = {actual}")
        if null_set.contains is not None and not null_set.contains(point):
            raise ContractError("custom oracle returned a point outside the null set")
        return Projection(point, actual, {"oracle": null_set.name})
    raise InputError(f"unknown null set {null_set!r}")


def l1_distance_to_null(v, null_set):
    return project(v, null_set).distance
