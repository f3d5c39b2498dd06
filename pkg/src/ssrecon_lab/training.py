"""Training of the linear denoiser and the single-pass SGM risk bound.

Two trainers are provided:

* :func:`sgm_single_pass` runs one pass of the stochastic gradient method on
  the noise2noise loss, one pair per step, with stepsize ``a / (c + k)``.
* :func:`gd_early_stopped` runs full-batch gradient descent on the empirical
  noise2noise loss and keeps the iterate with the best self-supervised
  validation loss.

Full-batch GD only needs second moments of the data, so each epoch costs
``O(n^3)`` regardless of the number of training pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .linear import (
    LinearEstimator,
    as_matrix,
    optimal_estimator,
    optimal_risk,
    risk_closed_form,
)
from .model import Dataset, SubspaceModel, sample_arrays

__all__ = [
    "DivergenceError",
    "BoundConstants",
    "SgmSchedule",
    "TrainReport",
    "Moments",
    "lemma1_stepsize",
    "sgm_single_pass",
    "gd_early_stopped",
    "gd_on_moments",
    "default_learning_rate",
    "theorem1_bound",
    "second_moment_check",
    "SecondMomentReport",
    "train_noisier2noise",
]

log = logging.getLogger(__name__)


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}; learning rate too large")


@dataclass(frozen=True)
class BoundConstants:
    """Strong-convexity constant ``m`` and second-moment constants ``(M, B)``.

    The stochastic gradient satisfies ``E||G(W)||^2 <= M^2 ||W - W*||_F^2 + B^2``.
    """

    m: float
    M: float
    B: float

    def __post_init__(self):
        if min(self.m, self.M, self.B) < 0:
            raise ValueError("bound constants must be nonnegative")

    @classmethod
    def from_model(cls, model: SubspaceModel, reading: str = "M_squared") -> "BoundConstants":
        """Constants for the subspace model.

        ``reading`` selects how the slope constant ``10/d`` is interpreted:
        ``"M_squared"`` takes ``M^2 = 10/d`` and ``"M"`` takes ``M = 10/d``.
        """
        n, d = model.n, model.d
        m = model.sigma_z**2 / n
        B = 12 * model.sigma_z**2 * d / n + model.sigma_e**2 * (1 + model.sigma_z**2)
        if reading == "M_squared":
            M = np.sqrt(10.0 / d)
        elif reading == "M":
            M = 10.0 / d
        else:
            raise ValueError(f"reading must be 'M_squared' or 'M', got {reading!r}")
        return cls(m=m, M=float(M), B=float(B))


def lemma1_stepsize(k: int, constants: BoundConstants) -> float:
    """``eta_k = (2/m) / (2 M^2/m^2 + k)``."""
    if k < 1:
        raise ValueError("step index k starts at 1")
    m, M = constants.m, constants.M
    if m <= 0:
        raise ValueError("degenerate schedule: m = 0 (noiseless input, risk not strongly convex)")
    return (2.0 / m) / (2.0 * M**2 / m**2 + k)


@dataclass(frozen=True)
class SgmSchedule:
    """Stepsize ``eta_k = a / (c + k)`` for ``k = 1, 2, ...``."""

    a: float
    c: float

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("numerator a must be nonnegative")
        if self.c + 1 <= 0:
            raise ValueError("offset c must satisfy c + 1 > 0")

    @classmethod
    def lemma1(cls, constants: BoundConstants) -> "SgmSchedule":
        if constants.m <= 0:
            raise ValueError("degenerate schedule: m = 0 (noiseless input, risk not strongly convex)")
        m, M = constants.m, constants.M
        return cls(a=2.0 / m, c=2.0 * M**2 / m**2)

    def __call__(self, k: int) -> float:
        return self.a / (self.c + k)

    def steps(self, count: int) -> np.ndarray:
        return self.a / (self.c + np.arange(1, count + 1))


@dataclass
class TrainReport:
    final_W: LinearEstimator
    iterations: int
    stop_reason: str
    risk_trajectory: list[tuple[int, float]] | None = None
    validation_trajectory: list[tuple[int, float]] | None = field(default=None, repr=False)
    best_epoch: int | None = None


def sgm_single_pass(
    dataset: Dataset,
    schedule: SgmSchedule,
    init=None,
    model: SubspaceModel | None = None,
    trace_every: int | None = None,
) -> TrainReport:
    """One pass of ``W_{k+1} = W_k - eta_k 2 (W_k y_k - y'_k) y_k^T`` over ``dataset``.

    When ``trace_every`` is set, the closed-form risk is recorded every
    ``trace_every`` steps and after the last step; this requires a model,
    taken from ``dataset.model`` unless given.
    """
    N = len(dataset)
    if N == 0:
        raise ValueError("SGM needs a nonempty dataset")
    W = np.zeros((dataset.n, dataset.n)) if init is None else np.array(as_matrix(init), dtype=float)
    model = model or dataset.model
    trace = None
    if trace_every:
        if model is None:
            raise ValueError("tracing the risk needs a model")
        trace = [(0, risk_closed_form(W, model))]
    Y, Yp = dataset.Y, dataset.Yp
    etas = schedule.steps(N)
    for k in range(N):
        y = Y[k]
        with np.errstate(over="ignore", invalid="ignore"):
            r = W @ y - Yp[k]
            W -= (2.0 * etas[k]) * np.outer(r, y)
        if not np.isfinite(r).all():
            raise DivergenceError(k + 1, "SGM iterate became non-finite")
        if trace is not None and ((k + 1) % trace_every == 0 or k + 1 == N):
            trace.append((k + 1, risk_closed_form(W, model)))
    if not np.all(np.isfinite(W)):
        raise DivergenceError(N, "SGM iterate became non-finite")
    return TrainReport(LinearEstimator(W), N, "dataset-exhausted", trace)


@dataclass(frozen=True)
class Moments:
    """Second moments defining the quadratic loss ``mean ||W u_i - t_i||^2``.

    ``uu = mean u u^H``, ``tu = mean t u^H``, ``tt = mean ||t||^2``. Complex
    inputs are supported; the gradient is then taken with respect to the
    real and imaginary parts of ``W`` jointly.
    """

    uu: np.ndarray
    tu: np.ndarray
    tt: float

    @classmethod
    def from_arrays(cls, inputs: np.ndarray, targets: np.ndarray) -> "Moments":
        N = inputs.shape[0]
        if N == 0:
            raise ValueError("moments of an empty dataset")
        return cls(
            inputs.T @ inputs.conj() / N,
            targets.T @ inputs.conj() / N,
            float(np.sum(np.abs(targets) ** 2) / N),
        )

    @classmethod
    def noise2noise(cls, dataset: Dataset) -> "Moments":
        return cls.from_arrays(dataset.Y, dataset.Yp)

    @classmethod
    def supervised(cls, dataset: Dataset) -> "Moments":
        return cls.from_arrays(dataset.Y, dataset.X)

    @property
    def n(self) -> int:
        return self.uu.shape[0]

    @property
    def dtype(self):
        return self.uu.dtype

    def loss(self, W: np.ndarray) -> float:
        quad = np.sum((W @ self.uu) * W.conj())
        return float(quad.real - 2.0 * np.sum(W * self.tu.conj()).real + self.tt)

    def gradient(self, W: np.ndarray) -> np.ndarray:
        return 2.0 * (W @ self.uu - self.tu)

    def max_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.uu)[-1])


def default_learning_rate(moments) -> float:
    """Half the stability limit ``1/lambda_max`` of full-batch GD."""
    lam = moments.max_eigenvalue()
    if lam <= 0:
        raise ValueError("input second-moment matrix is zero")
    return 0.5 / lam


def gd_on_moments(
    train,
    validation,
    learning_rate: float | None = None,
    patience: int = 10,
    max_epochs: int = 5000,
    init=None,
    model: SubspaceModel | None = None,
    trace: bool = False,
    min_rel_improvement: float = 1e-6,
) -> TrainReport:
    """Full-batch GD with early stopping on a validation loss.

    ``train`` and ``validation`` are quadratic losses in the style of
    :class:`Moments`: they provide ``loss``, ``gradient``, ``max_eigenvalue``,
    ``n`` and ``dtype``.

    Returns the iterate with the lowest validation loss. ``patience`` counts
    consecutive epochs in which the validation loss does not drop below
    ``best * (1 - min_rel_improvement)``.
    """
    if patience < 1:
        raise ValueError("patience must be >= 1")
    if max_epochs < 0:
        raise ValueError("max_epochs must be >= 0")
    lr = default_learning_rate(train) if learning_rate is None else float(learning_rate)
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    n = train.n
    W = np.zeros((n, n), dtype=train.dtype) if init is None else np.array(as_matrix(init), dtype=train.dtype)

    best_W, best_val, best_epoch = W.copy(), validation.loss(W), 0
    risks = [(0, risk_closed_form(W, model))] if trace and model is not None else None
    vals = [(0, best_val)] if trace else None
    if lr == 0:
        # the iterate cannot move, so every epoch would reproduce W_0
        return TrainReport(LinearEstimator(W), max_epochs, "max-epochs", risks, vals, 0)

    since_best = 0
    stop_reason = "max-epochs"
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            W = W - lr * train.gradient(W)
            val = validation.loss(W)
        if not np.isfinite(val) or not np.all(np.isfinite(W)):
            raise DivergenceError(epoch)
        if vals is not None:
            vals.append((epoch, val))
        if risks is not None:
            risks.append((epoch, risk_closed_form(W, model)))
        if val < best_val:
            improved = val < best_val - min_rel_improvement * abs(best_val)
            best_W, best_val, best_epoch = W.copy(), val, epoch
            since_best = 0 if improved else since_best + 1
        else:
            since_best += 1
        if since_best >= patience:
            stop_reason = "early-stopped"
            break
    return TrainReport(LinearEstimator(best_W), epoch, stop_reason, risks, vals, best_epoch)


def gd_early_stopped(
    train: Dataset,
    validation: Dataset,
    learning_rate: float | None = None,
    patience: int = 10,
    max_epochs: int = 5000,
    init=None,
    trace: bool = False,
) -> TrainReport:
    """Early-stopped full-batch GD on the noise2noise loss ``mean ||W y_i - y'_i||^2``.

    The validation loss is the same self-supervised loss on ``validation``.
    ``learning_rate=None`` uses :func:`default_learning_rate`.
    """
    if len(train) == 0 or len(validation) == 0:
        raise ValueError("train and validation datasets must be nonempty")
    return gd_on_moments(
        Moments.noise2noise(train),
        Moments.noise2noise(validation),
        learning_rate=learning_rate,
        patience=patience,
        max_epochs=max_epochs,
        init=init,
        model=train.model,
        trace=trace,
    )


def train_noisier2noise(
    train: Dataset,
    validation: Dataset,
    extra_sigma: float,
    learning_rate: float | None = None,
    patience: int = 10,
    max_epochs: int = 20000,
) -> TrainReport:
    """Early-stopped GD on ``mean ||W (y_i + z'_i) - y_i||^2`` with fresh ``z'``.

    The injected noise ``z' ~ N(0, extra_sigma^2/n I)`` is averaged out
    analytically, which is the limit of resampling it every epoch: the input
    second moment gains ``extra_sigma^2/n I`` and the cross moment is ``mean y y^T``.
    Only ``y`` is used; ``y'`` and ``x`` are ignored.
    """
    n = train.n

    def moments(ds: Dataset) -> Moments:
        base = Moments.from_arrays(ds.Y, ds.Y)
        return Moments(base.uu + (extra_sigma**2 / n) * np.eye(n), base.tu, base.tt)

    return gd_on_moments(
        moments(train),
        moments(validation),
        learning_rate=learning_rate,
        patience=patience,
        max_epochs=max_epochs,
        model=train.model,
    )


def theorem1_bound(model: SubspaceModel, N: int) -> float:
    """Upper bound on the expected risk after ``N`` single-pass SGM steps.

    ``R(W*) + (1/d + s)/s^2 * (2 + B^2)/(N - 2)`` with ``s = sigma_z^2/n`` and
    ``B = 12 sigma_z^2 d/n + sigma_e^2 (1 + sigma_z^2)``.
    """
    if N <= 2:
        raise ValueError(f"bound requires N >= 3, got N={N}")
    n, d = model.n, model.d
    s = model.sigma_z**2 / n
    if s <= 0:
        raise ValueError("bound requires sigma_z > 0")
    B = 12 * model.sigma_z**2 * d / n + model.sigma_e**2 * (1 + model.sigma_z**2)
    return optimal_risk(model) + (1.0 / d + s) / s**2 * (2.0 + B**2) / (N - 2)


@dataclass(frozen=True)
class SecondMomentReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    holds: bool


def second_moment_check(
    W, model: SubspaceModel, constants: BoundConstants, samples: int = 100_000, seed=0
) -> SecondMomentReport:
    """Monte Carlo test of ``E||G(W)||_F^2 <= M^2 ||W - W*||_F^2 + B^2``.

    ``G(W) = 2 (W y - y') y^T``, so ``||G||_F^2 = 4 ||W y - y'||^2 ||y||^2``.
    ``holds`` allows three standard errors of slack on the estimate.
    """
    if samples < 10_000:
        raise ValueError("second_moment_check needs at least 10^4 samples")
    W = as_matrix(W)
    _, Y, Yp = sample_arrays(model, samples, seed)
    r2 = np.sum((Y @ W.T - Yp) ** 2, axis=1)
    g2 = 4.0 * r2 * np.sum(Y**2, axis=1)
    lhs = float(g2.mean())
    se = float(g2.std(ddof=1) / np.sqrt(samples))
    dist2 = float(np.sum((W - optimal_estimator(model).W) ** 2))
    rhs = constants.M**2 * dist2 + constants.B**2
    return SecondMomentReport(lhs, se, rhs, lhs - 3 * se <= rhs)
