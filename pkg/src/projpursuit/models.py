"""Per-observation scores and link functions for the supported models."""

from dataclasses import dataclass

import numpy as np


def logistic_link(u):
    """Return ``(b, b', b'')`` for ``b(u) = log(1 + e^u)``, overflow-safe.

    Works elementwise on arrays; scalars give floats.
    """
    u = np.asarray(u, dtype=float)
    e = np.exp(-np.abs(u))
    b = np.maximum(u, 0.0) + np.log1p(e)
    b1 = np.where(u >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    b2 = e / (1.0 + e) ** 2
    if b.ndim == 0:
        return float(b), float(b1), float(b2)
    return b, b1, b2


def linear_score(x, y, beta):
    """Gradient of ``(y - x'beta)^2 / 2``: ``x (x'beta - y)``."""
    x = np.asarray(x, dtype=float)
    return x * (x @ beta - y)


def logistic_score(x, y, beta):
    """Gradient of ``-y x'beta + b(x'beta)``: ``x (b'(x'beta) - y)``."""
    x = np.asarray(x, dtype=float)
    return x * (logistic_link(x @ beta)[1] - y)


@dataclass(frozen=True)
class ModelAdapter:
    """Loss-specific pieces needed by the test.

    ``kind`` is ``"linear"`` or ``"logistic"``.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("linear", "logistic"):
            raise ValueError(f"unknown model kind {self.kind!r}")

    def residuals(self, X, y, beta):
        """Scalar factor r_i with score s(z_i, beta) = x_i * r_i."""
        eta = X @ beta
        if self.kind == "linear":
            return eta - y
        return logistic_link(eta)[1] - y

    def scores(self, X, y, beta):
        """Stacked scores, one row per observation."""
        return X * self.residuals(X, y, beta)[:, None]

    def score(self, x, y, beta):
        if self.kind == "linear":
            return linear_score(x, y, beta)
        return logistic_score(x, y, beta)

    def loss(self, x, y, beta):
        """Per-observation loss whose gradient is :meth:`score`."""
        u = float(np.dot(x, beta))
        if self.kind == "linear":
            return 0.5 * (y - u) ** 2
        return logistic_link(u)[0] - y * u

    def hessian_weights(self, X, beta):
        eta = X @ beta
        if self.kind == "linear":
            return np.ones_like(eta)
        return logistic_link(eta)[2]


LINEAR = ModelAdapter("linear")
LOGISTIC = ModelAdapter("logistic")


def get_model(kind):
    if isinstance(kind, ModelAdapter):
        return kind
    return ModelAdapter(str(kind))
