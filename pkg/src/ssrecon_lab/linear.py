"""Closed-form risk, optimal estimator and gradients of the linear denoiser ``W y``.

All gradients are gradients of squared norms without a factor 1/2, e.g. the
per-sample noise2noise gradient is ``2 (W y - y') y^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset, SamplePair, SubspaceModel

__all__ = [
    "LinearEstimator",
    "RiskBreakdown",
    "as_matrix",
    "risk_closed_form",
    "optimal_risk",
    "optimal_shrinkage",
    "optimal_estimator",
    "risk_breakdown",
    "risk_gradient",
    "n2n_sample_gradient",
    "supervised_sample_gradient",
    "empirical_risk",
    "noisier2noise_population_estimator",
]


@dataclass(frozen=True, eq=False)
class LinearEstimator:
    """The linear denoiser ``f(y) = W y``."""

    W: np.ndarray

    def __post_init__(self):
        W = np.array(self.W)
        if not np.iscomplexobj(W):
            W = W.astype(float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"W must be a square matrix, got shape {W.shape}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @classmethod
    def zeros(cls, n: int) -> "LinearEstimator":
        return cls(np.zeros((n, n)))

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def __call__(self, y: np.ndarray) -> np.ndarray:
        # rows of a 2-d input are samples
        y = np.asarray(y)
        return y @ self.W.T if y.ndim == 2 else self.W @ y

    def risk(self, model: SubspaceModel) -> float:
        return risk_closed_form(self, model)

    def gradient(self, model: SubspaceModel) -> np.ndarray:
        return risk_gradient(self, model)


@dataclass(frozen=True)
class RiskBreakdown:
    risk: float
    optimal_risk: float

    @property
    def excess(self) -> float:
        return self.risk - self.optimal_risk


def as_matrix(W) -> np.ndarray:
    return W.W if isinstance(W, LinearEstimator) else np.asarray(W)


def _check_dims(W: np.ndarray, n: int):
    if W.shape != (n, n):
        raise ValueError(f"dimension mismatch: W has shape {W.shape}, model has n={n}")


def risk_closed_form(W, model: SubspaceModel) -> float:
    """Population risk ``E||W y - x||^2 = ||(W - I) U||_F^2 / d + sigma_z^2/n ||W||_F^2``."""
    W = as_matrix(W)
    n, d = model.n, model.d
    _check_dims(W, n)
    WU = W @ model.U
    bias = np.sum((WU - model.U) ** 2) / d
    var = model.sigma_z**2 / n * np.sum(W**2)
    return float(bias + var)


def optimal_shrinkage(model: SubspaceModel) -> float:
    return 1.0 / (1.0 + model.sigma_z**2 * model.d / model.n)


def optimal_risk(model: SubspaceModel) -> float:
    """``R(W*) = s / (1 + s)`` with ``s = sigma_z^2 d / n``."""
    s = model.sigma_z**2 * model.d / model.n
    return s / (1.0 + s)


def optimal_estimator(model: SubspaceModel) -> LinearEstimator:
    """Projection onto the subspace followed by shrinkage ``1/(1 + sigma_z^2 d/n)``."""
    return LinearEstimator(optimal_shrinkage(model) * model.projector)


def risk_breakdown(W, model: SubspaceModel) -> RiskBreakdown:
    return RiskBreakdown(risk_closed_form(W, model), optimal_risk(model))


def risk_gradient(W, model: SubspaceModel) -> np.ndarray:
    """``2/d (W - I) U U^T + 2 sigma_z^2/n W``."""
    W = as_matrix(W)
    n, d = model.n, model.d
    _check_dims(W, n)
    U = model.U
    return (2.0 / d) * ((W @ U - U) @ U.T) + (2.0 * model.sigma_z**2 / n) * W


def n2n_sample_gradient(W, pair: SamplePair) -> np.ndarray:
    """Gradient of ``||W y - y'||^2`` in ``W``: ``2 (W y - y') y^T``."""
    W = as_matrix(W)
    return 2.0 * np.outer(W @ pair.y - pair.y_prime, pair.y)


def supervised_sample_gradient(W, pair: SamplePair) -> np.ndarray:
    """Gradient of ``||W y - x||^2`` in ``W``."""
    W = as_matrix(W)
    return 2.0 * np.outer(W @ pair.y - pair.x, pair.y)


def _targets(dataset: Dataset, target: str) -> np.ndarray:
    if target == "clean":
        return dataset.X
    if target == "noisy":
        return dataset.Yp
    raise ValueError(f"target must be 'clean' or 'noisy', got {target!r}")


def empirical_risk(W, dataset: Dataset, target: str = "noisy") -> float:
    """Mean of ``||W y_i - t_i||^2`` with ``t_i = x_i`` (clean) or ``y'_i`` (noisy)."""
    if len(dataset) == 0:
        raise ValueError("empirical risk of an empty dataset")
    W = as_matrix(W)
    _check_dims(W, dataset.n)
    R = dataset.Y @ W.T - _targets(dataset, target)
    return float(np.mean(np.sum(R**2, axis=1)))


def noisier2noise_population_estimator(model: SubspaceModel, extra_sigma: float) -> LinearEstimator:
    """Population minimizer of ``E||W (y + z') - y||^2`` with ``z' ~ N(0, extra_sigma^2/n I)``.

    The minimizer is ``(UU^T/d + sigma_z^2/n I)(UU^T/d + (sigma_z^2 + extra_sigma^2)/n I)^+``.
    Both factors share the eigenbasis of ``UU^T``, so the result is
    ``a P + b (I - P)`` with ``a = (1/d + s)/(1/d + s + t)``, ``b = s/(s + t)``,
    ``s = sigma_z^2/n``, ``t = extra_sigma^2/n``. The pseudo-inverse convention
    sets ``b = 0`` when ``s + t = 0``.
    """
    if extra_sigma < 0:
        raise ValueError("extra_sigma must be nonnegative")
    n, d = model.n, model.d
    s = model.sigma_z**2 / n
    t = extra_sigma**2 / n
    on = (1.0 / d + s) / (1.0 / d + s + t)
    off = s / (s + t) if s + t > 0 else 0.0
    P = model.projector
    return LinearEstimator(on * P + off * (np.eye(n) - P))
