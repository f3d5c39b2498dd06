"""Column-wise k-space splitting and the weighted masked-Fourier loss.

One acquired measurement with a fraction ``mu`` of the frequency columns is
split into an input mask ``M`` (fraction ``p``) and a target mask ``M'``:

* a centered block of ``round(nu * n_freq)`` columns goes to both masks;
* ``M`` gets ``round((p - nu) * n_freq)`` of the acquired non-center columns;
* ``M'`` gets every acquired column not in ``M`` plus an overlap: each
  non-center column of ``M`` is kept in ``M'`` with probability ``q``, so the
  expected overlap is a fraction ``p' q`` of all non-center columns.

With ``p' = (p - nu)/(1 - nu)`` and ``q = (mu - p)/(1 - p)`` every non-center
column enters ``M'`` with probability ``q`` whether or not it is in ``M``,
which is what the weights ``E[M']^{-1/2}`` (1 at the center, ``1/sqrt(q)``
elsewhere) assume.

Frequencies are indexed in centered order: index ``n_freq // 2`` is DC.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "CsScheme",
    "MaskSplit",
    "unitary_dft",
    "unitary_idft",
    "dft_matrix",
    "derived_fractions",
    "build_split",
    "build_splits",
    "weight_vector",
    "ss_cs_loss",
    "prop2_exact_check",
    "split_to_dict",
    "write_split_json",
]


def unitary_dft(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Orthonormal DFT with the zero frequency moved to the center."""
    v = np.asarray(v)
    return np.fft.fftshift(np.fft.fft(np.fft.ifftshift(v, axes=axis), axis=axis, norm="ortho"), axes=axis)


def unitary_idft(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v)
    return np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(v, axes=axis), axis=axis, norm="ortho"), axes=axis)


def dft_matrix(n: int) -> np.ndarray:
    """Matrix ``F`` with ``F @ v == unitary_dft(v)``."""
    return unitary_dft(np.eye(n), axis=0)


def derived_fractions(nu: float, p: float, mu: float) -> tuple[float, float]:
    """``p' = (p - nu)/(1 - nu)`` and ``q = (mu - p)/(1 - p)``."""
    if not (0 < nu < p < mu <= 1):
        raise ValueError(f"invalid scheme: need 0 < nu < p < mu <= 1, got nu={nu}, p={p}, mu={mu}")
    return (p - nu) / (1 - nu), (mu - p) / (1 - p)


@dataclass(frozen=True)
class CsScheme:
    n_freq: int
    nu: float
    p: float
    mu: float

    def __post_init__(self):
        derived_fractions(self.nu, self.p, self.mu)
        if self.n_freq < 1:
            raise ValueError("n_freq must be positive")
        if self.n_center < 1:
            raise ValueError(f"invalid scheme: nu * n_freq = {self.nu * self.n_freq:g} leaves no center columns")
        if self.n_center >= self.n_freq:
            return
        if self.n_input_extra < 1:
            raise ValueError("invalid scheme: rounding leaves the input mask without non-center columns")
        if self.n_target_extra < 1:
            raise ValueError("invalid scheme: rounding leaves no acquired columns for the target only")
        if self.n_acquired_extra > self.n_noncenter:
            raise ValueError("invalid scheme: more acquired columns than exist")

    @property
    def p_prime(self) -> float:
        return derived_fractions(self.nu, self.p, self.mu)[0]

    @property
    def q(self) -> float:
        return derived_fractions(self.nu, self.p, self.mu)[1]

    @property
    def n_center(self) -> int:
        return min(self.n_freq, int(round(self.nu * self.n_freq)))

    @property
    def n_noncenter(self) -> int:
        return self.n_freq - self.n_center

    @property
    def n_input_extra(self) -> int:
        """Non-center columns in the input mask."""
        return int(round((self.p - self.nu) * self.n_freq))

    @property
    def n_acquired_extra(self) -> int:
        """Non-center columns in the acquired measurement."""
        return min(self.n_noncenter, int(round((self.mu - self.nu) * self.n_freq)))

    @property
    def n_target_extra(self) -> int:
        """Acquired non-center columns that go to the target only."""
        return self.n_acquired_extra - self.n_input_extra

    @property
    def center(self) -> np.ndarray:
        c = np.zeros(self.n_freq, dtype=bool)
        start = self.n_freq // 2 - self.n_center // 2
        c[start : start + self.n_center] = True
        return c

    @property
    def inclusion_prob(self) -> np.ndarray:
        """Probability that each frequency is in the target mask."""
        return np.where(self.center, 1.0, self.q)


@dataclass(frozen=True, eq=False)
class MaskSplit:
    """Boolean masks of one split, or of a batch of splits (leading axis).

    ``inclusion_prob`` and ``weights`` are per frequency and shared by the batch.
    """

    m_tilde: np.ndarray
    m_input: np.ndarray
    m_target: np.ndarray
    inclusion_prob: np.ndarray
    weights: np.ndarray

    @property
    def overlap(self) -> np.ndarray:
        return self.m_input & self.m_target


def build_splits(scheme: CsScheme, rng: np.random.Generator, count: int) -> MaskSplit:
    """Draw ``count`` independent splits, stacked along axis 0.

    One random permutation orders the non-center columns: the first
    ``n_input_extra`` go to the input and the next ``n_target_extra`` to the
    target only. This is the same distribution as drawing the acquired set
    first and the input subset from it, and it couples schemes that differ
    only in ``mu`` when they share a random stream.
    """
    center = scheme.center
    n = scheme.n_freq
    if scheme.n_center >= n:
        full = np.ones((count, n), dtype=bool)
        return MaskSplit(full, full.copy(), full.copy(), np.ones(n), np.ones(n))
    nc_idx = np.flatnonzero(~center)
    keys = rng.random((count, nc_idx.size))
    keep = rng.random((count, nc_idx.size))
    rank = np.argsort(np.argsort(keys, axis=1), axis=1)

    k_in, k_acq = scheme.n_input_extra, scheme.n_acquired_extra
    in_nc = rank < k_in
    acq_nc = rank < k_acq
    tgt_nc = (acq_nc & ~in_nc) | (in_nc & (keep < scheme.q))

    def embed(nc_mask):
        out = np.repeat(center[np.newaxis, :], count, axis=0)
        out[:, nc_idx] = nc_mask
        return out

    incl = scheme.inclusion_prob
    return MaskSplit(embed(acq_nc), embed(in_nc), embed(tgt_nc), incl, weight_vector(incl))


def build_split(scheme: CsScheme, rng: np.random.Generator) -> MaskSplit:
    """Draw a single split."""
    b = build_splits(scheme, rng, 1)
    return MaskSplit(b.m_tilde[0], b.m_input[0], b.m_target[0], b.inclusion_prob, b.weights)


def weight_vector(inclusion_prob) -> np.ndarray:
    """``E[M']^{-1/2}`` per frequency; frequencies never selected get weight 0.

    A :class:`CsScheme` or :class:`MaskSplit` may be passed in place of the
    probabilities.
    """
    if isinstance(inclusion_prob, (CsScheme, MaskSplit)):
        inclusion_prob = inclusion_prob.inclusion_prob
    p = np.asarray(inclusion_prob, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("inclusion probabilities must lie in [0, 1]")
    if not np.any(p > 0):
        raise ValueError("infinite weights: every inclusion probability is 0")
    w = np.zeros_like(p)
    pos = p > 0
    w[pos] = 1.0 / np.sqrt(p[pos])
    return w


def ss_cs_loss(
    reconstruction: np.ndarray,
    target: np.ndarray,
    m_target: np.ndarray,
    weights: np.ndarray,
    dft: Callable[[np.ndarray], np.ndarray] = unitary_dft,
) -> float:
    """``||W (M' F f - y')||^2`` for one reconstruction ``f`` and k-space target ``y'``."""
    f = np.asarray(reconstruction)
    t = np.asarray(target)
    if not (f.shape == t.shape == np.shape(m_target) == np.shape(weights)):
        raise ValueError("reconstruction, target, mask and weights must have equal lengths")
    m = np.asarray(m_target, dtype=bool)
    r = dft(f) - t
    w = np.asarray(weights)
    return float(np.sum((w[m] ** 2) * np.abs(r[m]) ** 2))


def prop2_exact_check(
    a: np.ndarray,
    x: np.ndarray,
    inclusion_prob: np.ndarray,
    dft: Callable[[np.ndarray], np.ndarray] = unitary_dft,
) -> float:
    """``|E_M' ||W (M' F a - M' F x)||^2 - ||a - x||^2|`` with the expectation in closed form.

    For independent Bernoulli columns with probabilities ``p_j`` the
    expectation is ``sum_j w_j^2 p_j |[F(a - x)]_j|^2``.
    """
    p = np.asarray(inclusion_prob, dtype=float)
    if np.any(p <= 0):
        raise ValueError("undefined weight: an inclusion probability is 0")
    diff = np.asarray(a) - np.asarray(x)
    w2 = 1.0 / p
    expected = float(np.sum(w2 * p * np.abs(dft(diff)) ** 2))
    return abs(expected - float(np.sum(np.abs(diff) ** 2)))


def split_to_dict(split: MaskSplit, scheme: CsScheme) -> dict:
    as_int = lambda m: np.asarray(m, dtype=int).tolist()
    return {
        "n_freq": scheme.n_freq,
        "nu": scheme.nu,
        "p": scheme.p,
        "mu": scheme.mu,
        "p_prime": scheme.p_prime,
        "q": scheme.q,
        "m_tilde": as_int(split.m_tilde),
        "m_input": as_int(split.m_input),
        "m_target": as_int(split.m_target),
        "inclusion_prob": np.asarray(split.inclusion_prob).tolist(),
        "weights": np.asarray(split.weights).tolist(),
    }


def write_split_json(split: MaskSplit, scheme: CsScheme, path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(split_to_dict(split, scheme), indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write mask split to {path}: {exc}") from exc
