"""Linear compressive-sensing reconstruction trained on split k-space masks.

Signals are complex subspace signals ``x = U c`` with ``c`` circular complex
Gaussian, ``E||x||^2 = 1``. The reconstructor maps the zero-filled image
``a = F^H M F x`` to ``W a``. Training happens in k-space with the operator
``V = F W F^H``, which acts on the masked measurement ``M F x``; because ``F``
is unitary, losses and Frobenius norms are unchanged by this substitution.

Supervised training minimizes ``mean ||W a_i - x_i||^2``. Self-supervised
training minimizes the weighted masked loss
``mean ||diag(w) (M'_i F W a_i - M'_i F x_i)||^2``, which splits into one
weighted least-squares problem per output frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linear import LinearEstimator, as_matrix
from .masks import CsScheme, MaskSplit, build_splits, dft_matrix, unitary_dft
from .model import SubspaceModel, random_orthonormal_basis, seed_sequence
from .training import Moments, TrainReport, gd_on_moments

__all__ = [
    "RowWeightedMoments",
    "CsData",
    "complex_subspace_model",
    "sample_complex_signals",
    "generate_cs_data",
    "cs_population_moments",
    "cs_risk",
    "cs_optimal_risk",
    "cs_empirical_risk",
    "cs_self_supervised_gradients",
    "train_cs_linear",
]


def complex_subspace_model(n: int, d: int, seed=0) -> SubspaceModel:
    """Noiseless model with a Haar-random complex orthonormal basis."""
    return SubspaceModel(random_orthonormal_basis(n, d, seed, complex_valued=True), 0.0, 0.0)


def sample_complex_signals(model: SubspaceModel, size: int, seed) -> np.ndarray:
    """``size`` signals as rows; row ``i`` depends only on ``(seed, i)``."""
    d = model.d
    g = np.random.default_rng(seed_sequence(seed, 0)).standard_normal((size, 2 * d))
    C = (g[:, 0::2] + 1j * g[:, 1::2]) / np.sqrt(2 * d)
    return C @ model.U.T


@dataclass(frozen=True, eq=False)
class CsData:
    """Signals in k-space with their mask splits."""

    K: np.ndarray
    split: MaskSplit

    def __len__(self) -> int:
        return self.K.shape[0]

    @property
    def inputs(self) -> np.ndarray:
        """Masked k-space inputs ``M_i F x_i`` (rows)."""
        return np.where(self.split.m_input, self.K, 0)

    @property
    def targets(self) -> np.ndarray:
        """Masked k-space targets ``M'_i F x_i`` (rows)."""
        return np.where(self.split.m_target, self.K, 0)


def generate_cs_data(scheme: CsScheme, model: SubspaceModel, size: int, seed) -> CsData:
    """Signals and splits from independent sub-streams of ``seed``.

    The split stream does not depend on ``mu``, so schemes that differ only
    in ``mu`` see the same signals and input masks.
    """
    if model.n != scheme.n_freq:
        raise ValueError(f"model dimension {model.n} does not match n_freq={scheme.n_freq}")
    X = sample_complex_signals(model, size, seed_sequence(seed, 0))
    split = build_splits(scheme, np.random.default_rng(seed_sequence(seed, 1)), size)
    return CsData(unitary_dft(X, axis=1), split)


@dataclass(frozen=True)
class RowWeightedMoments:
    """Quadratic loss ``mean_i sum_j D_ij |V_j u_i - t_ij|^2`` for a matrix ``V``.

    ``uu[j] = mean_i D_ij u_i u_i^H``, ``tu[j] = mean_i D_ij t_ij u_i^H`` and
    ``tt = mean_i sum_j D_ij |t_ij|^2``.
    """

    uu: np.ndarray
    tu: np.ndarray
    tt: float

    @classmethod
    def from_arrays(cls, inputs: np.ndarray, targets: np.ndarray, D: np.ndarray) -> "RowWeightedMoments":
        N, n = inputs.shape
        if N == 0:
            raise ValueError("moments of an empty dataset")
        uu = np.empty((n, n, n), dtype=inputs.dtype)
        tu = np.empty((n, n), dtype=np.result_type(inputs, targets))
        for j in range(n):
            sel = np.flatnonzero(D[:, j])
            A = inputs[sel] * np.sqrt(D[sel, j])[:, np.newaxis]
            uu[j] = A.T @ A.conj() / N
            tu[j] = (D[sel, j] * targets[sel, j]) @ inputs[sel].conj() / N
        tt = float(np.sum(D * np.abs(targets) ** 2) / N)
        return cls(uu, tu, tt)

    @property
    def n(self) -> int:
        return self.tu.shape[0]

    @property
    def dtype(self):
        return self.uu.dtype

    def _apply(self, V: np.ndarray) -> np.ndarray:
        # row j of the result is V_j @ uu[j]
        return np.matmul(V[:, np.newaxis, :], self.uu)[:, 0, :]

    def loss(self, V: np.ndarray) -> float:
        quad = np.sum(self._apply(V) * V.conj())
        return float(quad.real - 2.0 * np.sum(V * self.tu.conj()).real + self.tt)

    def gradient(self, V: np.ndarray) -> np.ndarray:
        return 2.0 * (self._apply(V) - self.tu)

    def max_eigenvalue(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.uu)[:, -1]))


def _moments(data: CsData, mode: str):
    if mode == "supervised":
        return Moments.from_arrays(data.inputs, data.K)
    if mode == "self-supervised":
        D = (data.split.weights**2)[np.newaxis, :] * data.split.m_target
        return RowWeightedMoments.from_arrays(data.inputs, data.targets, D)
    raise ValueError(f"mode must be 'supervised' or 'self-supervised', got {mode!r}")


def cs_population_moments(scheme: CsScheme, model: SubspaceModel) -> tuple[np.ndarray, np.ndarray, float]:
    """``(E[a a^H], E[k a^H], E||k||^2)`` for ``k = F x`` and ``a = M k``.

    The input mask keeps the center and a uniform subset of
    ``n_input_extra`` non-center columns.
    """
    F = dft_matrix(model.n)
    Fu = F @ model.U
    Sk = Fu @ Fu.conj().T / model.d
    center = scheme.center
    nc = scheme.n_noncenter
    k = scheme.n_input_extra if nc else 0
    p1 = np.where(center, 1.0, k / nc if nc else 1.0)
    joint = np.outer(p1, p1)
    if nc > 1:
        both_nc = np.outer(~center, ~center)
        joint[both_nc] = k * (k - 1) / (nc * (nc - 1))
    np.fill_diagonal(joint, p1)
    return joint * Sk, Sk * p1[np.newaxis, :], float(np.trace(Sk).real)


def _to_kspace(W: np.ndarray) -> np.ndarray:
    F = dft_matrix(W.shape[0])
    return F @ W @ F.conj().T


def _to_image(V: np.ndarray) -> np.ndarray:
    F = dft_matrix(V.shape[0])
    return F.conj().T @ V @ F


def cs_risk(W, scheme: CsScheme, model: SubspaceModel) -> float:
    """Population risk ``E||W a - x||^2`` over signals and input masks."""
    V = _to_kspace(as_matrix(W))
    S, C, tr = cs_population_moments(scheme, model)
    return Moments(S, C, tr).loss(V)


def cs_optimal_risk(scheme: CsScheme, model: SubspaceModel) -> float:
    """Risk of the best linear reconstructor, ``tr Sk - tr(C S^+ C^H)``."""
    S, C, tr = cs_population_moments(scheme, model)
    V = C @ np.linalg.pinv(S, rcond=1e-12, hermitian=True)
    return Moments(S, C, tr).loss(V)


def cs_empirical_risk(W, data: CsData) -> float:
    """Mean ``||W a_i - x_i||^2`` on held-out data."""
    V = _to_kspace(as_matrix(W))
    R = data.inputs @ V.T - data.K
    return float(np.mean(np.sum(np.abs(R) ** 2, axis=1)))


def cs_self_supervised_gradients(W, data: CsData) -> np.ndarray:
    """Per-sample gradients of the weighted masked loss in k-space, shape ``(N, n, n)``."""
    V = _to_kspace(as_matrix(W))
    A = data.inputs
    R = (A @ V.T - data.K) * data.split.m_target * data.split.weights**2
    return 2.0 * R[:, :, np.newaxis] * A.conj()[:, np.newaxis, :]


def train_cs_linear(
    scheme: CsScheme,
    model: SubspaceModel,
    N: int,
    mode: str = "self-supervised",
    seed=0,
    validation_size: int | None = None,
    patience: int = 10,
    max_epochs: int = 5000,
    learning_rate: float | None = None,
) -> TrainReport:
    """Early-stopped GD for the linear reconstructor; ``final_W`` is image-domain.

    Validation uses the same loss as training on ``max(50, N // 5)`` held-out
    signals, so self-supervised runs never see clean signals.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    nv = validation_size or max(50, N // 5)
    train = generate_cs_data(scheme, model, N, seed_sequence(seed, 0))
    val = generate_cs_data(scheme, model, nv, seed_sequence(seed, 1))
    report = gd_on_moments(
        _moments(train, mode),
        _moments(val, mode),
        learning_rate=learning_rate,
        patience=patience,
        max_epochs=max_epochs,
    )
    report.final_W = LinearEstimator(_to_image(report.final_W.W))
    return report
