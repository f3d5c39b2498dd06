"""Normalized variance of per-sample gradients around the empirical risk gradient.

For each training sample the statistic is

    ||grad loss_i - grad R_hat||^2 / ||grad R_hat||^2

where ``grad R_hat`` is the mean supervised gradient over the same samples.
All per-sample gradients of the linear model are rank one, ``2 r_i u_i^H``,
so the statistic is computed from ``r_i`` and ``u_i`` without forming the
``n x n`` gradients.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cs_linear import CsData, _to_kspace
from .linear import as_matrix
from .model import Dataset
from .training import Moments

__all__ = [
    "GradVarReport",
    "DegenerateNormalizationError",
    "empirical_risk_gradient",
    "one_epoch_supervised",
    "normalized_gradient_variances",
    "log_histogram",
    "compare_means",
    "write_variances_csv",
    "write_histogram_csv",
]

LOSSES = ("supervised", "noise2noise", "cs-self-supervised")


class DegenerateNormalizationError(ZeroDivisionError):
    """The empirical risk gradient is zero; use ``normalize=False``."""


@dataclass
class GradVarReport:
    per_sample: np.ndarray
    histogram: list[tuple[float, float, int]]
    loss_label: str
    normalized: bool = True

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_sample))

    @property
    def stderr(self) -> float:
        return float(np.std(self.per_sample, ddof=1) / np.sqrt(self.per_sample.size))


def empirical_risk_gradient(W, dataset: Dataset) -> np.ndarray:
    """Mean supervised gradient ``(1/N) sum_i 2 (W y_i - x_i) y_i^T``."""
    if len(dataset) == 0:
        raise ValueError("empirical risk gradient of an empty dataset")
    W = as_matrix(W)
    R = dataset.Y @ W.T - dataset.X
    return 2.0 * (R.T @ dataset.Y) / len(dataset)


def one_epoch_supervised(dataset: Dataset, learning_rate: float | None = None) -> np.ndarray:
    """``W`` after one full-batch supervised GD step from zero.

    The default step is half the stability limit, as in training.
    """
    m = Moments.supervised(dataset)
    lr = 0.5 / m.max_eigenvalue() if learning_rate is None else learning_rate
    W0 = np.zeros((dataset.n, dataset.n))
    return W0 - lr * m.gradient(W0)


def _distances(R: np.ndarray, U: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``||2 r_i u_i^H - G||_F^2`` for every row ``i``."""
    rr = np.sum(np.abs(R) ** 2, axis=1)
    uu = np.sum(np.abs(U) ** 2, axis=1)
    cross = np.einsum("ij,jk,ik->i", R.conj(), G, U).real
    return np.maximum(4.0 * rr * uu - 4.0 * cross + np.sum(np.abs(G) ** 2), 0.0)


def normalized_gradient_variances(
    W,
    dataset,
    loss: str = "noise2noise",
    bins: int = 50,
    normalize: bool = True,
) -> GradVarReport:
    """Per-sample normalized gradient variances.

    ``dataset`` is a :class:`Dataset` for ``supervised`` and ``noise2noise``
    and a :class:`CsData` for ``cs-self-supervised``; in the latter case ``W``
    is the image-domain reconstructor and gradients are taken in k-space.
    """
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {LOSSES}, got {loss!r}")
    W = as_matrix(W)
    if loss == "cs-self-supervised":
        if not isinstance(dataset, CsData):
            raise TypeError("cs-self-supervised needs CsData")
        V = _to_kspace(W)
        U = dataset.inputs
        R_sup = U @ V.T - dataset.K
        R = R_sup * dataset.split.m_target * dataset.split.weights**2
    else:
        if not isinstance(dataset, Dataset):
            raise TypeError(f"{loss} needs a Dataset")
        U = dataset.Y
        R_sup = U @ W.T - dataset.X
        R = R_sup if loss == "supervised" else U @ W.T - dataset.Yp
    N = U.shape[0]
    if N < 100:
        raise ValueError(f"need at least 100 samples for a stable normalization, got {N}")
    G = 2.0 * (R_sup.T @ U.conj()) / N
    values = _distances(R, U, G)
    if normalize:
        g2 = float(np.sum(np.abs(G) ** 2))
        if g2 == 0.0:
            raise DegenerateNormalizationError("empirical risk gradient is zero; report unnormalized values instead")
        values = values / g2
    return GradVarReport(values, log_histogram(values, bins), loss, normalize)


def log_histogram(values: np.ndarray, bins: int = 50) -> list[tuple[float, float, int]]:
    """Counts in ``bins`` log-spaced bins spanning the positive values.

    Zeros, if any, are counted in the first bin so the counts always sum to
    ``len(values)``.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    pos = values[values > 0]
    if pos.size == 0:
        return [(0.0, 0.0, int(values.size))]
    lo, hi = float(pos.min()), float(pos.max())
    if lo == hi:
        return [(lo, hi, int(values.size))]
    edges = np.logspace(math.log10(lo), math.log10(hi), bins + 1)
    counts, _ = np.histogram(np.clip(values, lo, hi), bins=edges)
    return [(float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)]


def compare_means(a: GradVarReport, b: GradVarReport, k: float = 3.0) -> str:
    """``"less"``/``"greater"`` if the means differ by at least ``k`` combined standard errors."""
    diff = a.mean - b.mean
    se = math.hypot(a.stderr, b.stderr)
    if diff <= -k * se:
        return "less"
    if diff >= k * se:
        return "greater"
    return "inconclusive"


def write_variances_csv(reports: Sequence[GradVarReport], path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["loss_label", "sample_index", "normalized_variance"])
            for rep in reports:
                for i, v in enumerate(rep.per_sample):
                    w.writerow([rep.loss_label, i, repr(float(v))])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_histogram_csv(report: GradVarReport, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count"])
            for left, right, count in report.histogram:
                w.writerow([repr(left), repr(right), count])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
