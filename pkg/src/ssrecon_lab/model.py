"""Linear subspace signal model and paired noisy measurements.

A clean signal is ``x = U c`` with ``c ~ N(0, I/d)``, so ``E||x||^2 = 1``.
Measurements are ``y = x + z`` and ``y' = x + e`` with
``z ~ N(0, sigma_z^2/n I)`` and ``e ~ N(0, sigma_e^2/n I)``.

Randomness is managed with :class:`numpy.random.SeedSequence`. Each dataset
owns three child streams (coefficients, input noise, target noise) that are
filled row by row, so a dataset of size ``N1`` is exactly the prefix of the
dataset of size ``N2 > N1`` drawn from the same seed. Because the target
noise is stored as a standard-normal draw scaled by ``sigma_e``, datasets that
differ only in ``sigma_e`` share every other random number.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "SubspaceModel",
    "SamplePair",
    "Dataset",
    "random_orthonormal_basis",
    "make_model",
    "sample_pair",
    "sample_arrays",
    "generate_dataset",
    "generate_nested_datasets",
    "seed_sequence",
]

_ORTHO_TOL = 1e-10


def random_orthonormal_basis(n: int, d: int, seed, complex_valued: bool = False) -> np.ndarray:
    """Orthonormalize a seeded Gaussian ``n x d`` matrix.

    The sign of each column is fixed by making the diagonal of the QR factor
    positive, which makes the result Haar distributed.
    """
    if d < 1 or n < 1 or d > n:
        raise ValueError(f"invalid dimensions: need 1 <= d <= n, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, d))
    if complex_valued:
        g = g + 1j * rng.standard_normal((n, d))
    q, r = np.linalg.qr(g)
    phase = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * phase[np.newaxis, :]


@dataclass(frozen=True)
class SubspaceModel:
    """Generative model for the subspace denoising problem.

    Parameters
    ----------
    U : (n, d) ndarray
        Orthonormal basis of the signal subspace.
    sigma_z : float
        Input noise level. The per-coordinate variance is ``sigma_z**2 / n``.
    sigma_e : float
        Target noise level, same scaling.
    """

    U: np.ndarray = field(repr=False)
    sigma_z: float
    sigma_e: float = 0.0

    def __post_init__(self):
        U = np.asarray(self.U)
        if U.ndim != 2:
            raise ValueError("U must be a 2-d array")
        n, d = U.shape
        if d < 1 or d > n:
            raise ValueError(f"invalid dimensions: need 1 <= d <= n, got n={n}, d={d}")
        gram = U.conj().T @ U
        if np.max(np.abs(gram - np.eye(d))) > _ORTHO_TOL:
            raise ValueError("columns of U are not orthonormal")
        if self.sigma_z < 0 or self.sigma_e < 0:
            raise ValueError("noise levels must be nonnegative")
        object.__setattr__(self, "U", U)

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    @property
    def projector(self) -> np.ndarray:
        """``U U^T``, the orthogonal projector onto the signal subspace."""
        return self.U @ self.U.conj().T

    def with_sigma_e(self, sigma_e: float) -> "SubspaceModel":
        return replace(self, sigma_e=float(sigma_e))


def make_model(n: int, d: int, sigma_z: float, sigma_e: float = 0.0, seed=0) -> SubspaceModel:
    """Build a :class:`SubspaceModel` with a random basis drawn from ``seed``."""
    return SubspaceModel(random_orthonormal_basis(n, d, seed), float(sigma_z), float(sigma_e))


@dataclass(frozen=True)
class SamplePair:
    """One training triple. ``y - x`` and ``y_prime - x`` are the noise draws."""

    x: np.ndarray
    y: np.ndarray
    y_prime: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return self.y - self.x

    @property
    def e(self) -> np.ndarray:
        return self.y_prime - self.x


def sample_pair(model: SubspaceModel, rng: np.random.Generator) -> SamplePair:
    """Draw a single ``(x, y, y')`` triple from ``model``."""
    n, d = model.n, model.d
    c = rng.standard_normal(d) / np.sqrt(d)
    x = model.U @ c
    y = x + rng.standard_normal(n) * (model.sigma_z / np.sqrt(n))
    y_prime = x + rng.standard_normal(n) * (model.sigma_e / np.sqrt(n))
    return SamplePair(x, y, y_prime)


def seed_sequence(seed, *key: int) -> np.random.SeedSequence:
    """Seed sequence for the sub-stream identified by ``key``.

    ``seed_sequence(s, 3, 1)`` is independent of ``seed_sequence(s, 3, 2)``
    and of ``seed_sequence(s, 4)``, and is reproducible across processes.
    """
    if isinstance(seed, np.random.SeedSequence):
        entropy = seed.entropy
        key = tuple(seed.spawn_key) + tuple(key)
    else:
        entropy = int(seed)
    return np.random.SeedSequence(entropy, spawn_key=tuple(int(k) for k in key))


def sample_arrays(model: SubspaceModel, size: int, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``size`` triples as ``(X, Y, Yp)`` arrays of shape ``(size, n)``.

    Row ``i`` depends only on ``(seed, i)``, never on ``size``.
    """
    if size < 0:
        raise ValueError("size must be nonnegative")
    n, d = model.n, model.d
    s_c, s_z, s_e = (seed_sequence(seed, k) for k in range(3))
    C = np.random.default_rng(s_c).standard_normal((size, d)) / np.sqrt(d)
    X = C @ model.U.T
    Y = X + np.random.default_rng(s_z).standard_normal((size, n)) * (model.sigma_z / np.sqrt(n))
    Yp = X + np.random.default_rng(s_e).standard_normal((size, n)) * (model.sigma_e / np.sqrt(n))
    return X, Y, Yp


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered, immutable collection of training triples.

    The triples are stored row-wise in ``X``, ``Y`` and ``Yp``; ``pairs`` and
    iteration give :class:`SamplePair` views.
    """

    X: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    Yp: np.ndarray = field(repr=False)
    seed: object = None
    model: SubspaceModel | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.X.shape == self.Y.shape == self.Yp.shape) or self.X.ndim != 2:
            raise ValueError("X, Y and Yp must be 2-d arrays of equal shape")
        for a in (self.X, self.Y, self.Yp):
            a.setflags(write=False)

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> SamplePair:
        return SamplePair(self.X[i], self.Y[i], self.Yp[i])

    def __iter__(self) -> Iterator[SamplePair]:
        for i in range(len(self)):
            yield self[i]

    @property
    def pairs(self) -> list[SamplePair]:
        return list(self)

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def head(self, size: int) -> "Dataset":
        """The first ``size`` triples, as a new dataset."""
        if size > len(self):
            raise ValueError(f"cannot take {size} pairs from a dataset of {len(self)}")
        return Dataset(self.X[:size], self.Y[:size], self.Yp[:size], self.seed, self.model)

    @classmethod
    def from_pairs(cls, pairs: Sequence[SamplePair], seed=None, model=None) -> "Dataset":
        X = np.array([p.x for p in pairs])
        Y = np.array([p.y for p in pairs])
        Yp = np.array([p.y_prime for p in pairs])
        return cls(X, Y, Yp, seed, model)


def generate_dataset(model: SubspaceModel, size: int, seed) -> Dataset:
    X, Y, Yp = sample_arrays(model, size, seed)
    return Dataset(X, Y, Yp, seed, model)


def generate_nested_datasets(model: SubspaceModel, sizes: Sequence[int], seed) -> list[Dataset]:
    """Datasets of the given sizes where each is a prefix of the next."""
    sizes = list(sizes)
    if not sizes:
        raise ValueError("sizes must be a nonempty list")
    if any(s < 1 for s in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"sizes must be positive and strictly increasing, got {sizes}")
    full = generate_dataset(model, sizes[-1], seed)
    return [full.head(s) for s in sizes]
