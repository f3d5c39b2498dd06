"""Numerical property checks shared by ``ssrecon-lab verify`` and the test suite.

Each check returns a :class:`CheckResult`; none of them raise on failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linear import n2n_sample_gradient, optimal_estimator, optimal_risk, risk_closed_form, risk_gradient
from .masks import CsScheme, build_splits, prop2_exact_check, ss_cs_loss, unitary_dft
from .model import SamplePair, SubspaceModel, generate_dataset, make_model, seed_sequence
from .training import BoundConstants, SgmSchedule, sgm_single_pass, theorem1_bound

__all__ = [
    "CheckResult",
    "check_noise2noise_unbiased",
    "check_masked_loss_exact",
    "check_masked_loss_monte_carlo",
    "check_gradients",
    "check_risk_decomposition",
    "check_splitter",
    "check_bound_domination",
    "run_all",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    flagged: bool = False
    data: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.passed and self.flagged:
            status = "PASS (flagged)"
        return f"[{status}] {self.name}: {self.detail}"


def _reference_model(sigma_e: float = 0.0, seed=0) -> SubspaceModel:
    return make_model(100, 10, 0.1, sigma_e, seed=seed_sequence(seed, 0))


def check_noise2noise_unbiased(
    n_matrices: int = 10,
    sigma_es=(0.1, 0.2),
    pairs: int = 1_000_000,
    seed: int = 0,
    chunk: int = 100_000,
) -> CheckResult:
    """Noise2noise risk minus supervised risk equals ``sigma_e^2`` for random ``W``.

    Per pair the difference is ``||e||^2 - 2 (W y - x).e``; its sample mean is
    compared with ``sigma_e^2`` in units of its standard error. The same
    signals and input noise are reused for every ``W`` and ``sigma_e``.
    """
    model = _reference_model()
    n = model.n
    rng = np.random.default_rng(seed_sequence(seed, 1))
    Ws = rng.standard_normal((n_matrices, n, n)) / np.sqrt(n)
    sums = np.zeros((n_matrices, len(sigma_es)))
    sq = np.zeros_like(sums)
    done = 0
    block = 0
    while done < pairs:
        size = min(chunk, pairs - done)
        g = np.random.default_rng(seed_sequence(seed, 2, block))
        X = (g.standard_normal((size, model.d)) / np.sqrt(model.d)) @ model.U.T
        Y = X + g.standard_normal((size, n)) * (model.sigma_z / np.sqrt(n))
        E0 = g.standard_normal((size, n)) / np.sqrt(n)
        e2 = np.sum(E0**2, axis=1)
        for i, W in enumerate(Ws):
            cross = np.sum((Y @ W.T - X) * E0, axis=1)
            for j, se in enumerate(sigma_es):
                diff = se**2 * e2 - 2.0 * se * cross
                sums[i, j] += diff.sum()
                sq[i, j] += np.sum(diff**2)
        done += size
        block += 1
    mean = sums / pairs
    var = (sq - pairs * mean**2) / (pairs - 1)
    se = np.sqrt(var / pairs)
    target = np.asarray(sigma_es)[np.newaxis, :] ** 2
    z = np.abs(mean - target) / se
    worst = float(z.max())
    return CheckResult(
        "noise2noise-unbiasedness",
        bool(worst < 3.0),
        f"{n_matrices} W x {len(sigma_es)} sigma_e at {pairs} pairs, max |gap - sigma_e^2|/SE = {worst:.2f} (< 3)",
        data={"z": z, "mean": mean, "se": se},
    )


def _center_probs(n: int, n_center: int, q: float) -> np.ndarray:
    p = np.full(n, q)
    start = n // 2 - n_center // 2
    p[start : start + n_center] = 1.0
    return p


def check_masked_loss_exact(n: int = 64, pairs: int = 100, qs=(0.1, 0.3, 0.5), n_center: int = 8, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed_sequence(seed, 3))
    worst = 0.0
    for q in qs:
        probs = _center_probs(n, n_center, q)
        for _ in range(pairs):
            a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            worst = max(worst, prop2_exact_check(a, x, probs))
    return CheckResult(
        "masked-loss-exact",
        bool(worst < 1e-10),
        f"{pairs} complex pairs of length {n}, q in {tuple(qs)}: max residual {worst:.2e} (< 1e-10)",
        data={"residual": worst},
    )


def check_masked_loss_monte_carlo(n: int = 64, draws: int = 100_000, qs=(0.1, 0.3, 0.5), n_center: int = 8, seed: int = 0) -> CheckResult:
    """Mean weighted masked loss over random target masks versus ``||f - x||^2``.

    Masks are independent Bernoulli columns with probability ``q`` outside a
    fully sampled center, and, separately, target masks drawn by the
    splitter at a scheme whose column counts are exact.
    """
    rng = np.random.default_rng(seed_sequence(seed, 4))
    zs = []

    def mc(f, x, masks, w):
        k = unitary_dft(f - x)
        losses = np.sum(masks * (w**2 * np.abs(k) ** 2), axis=1)
        # spot-check the vectorized form against the scalar loss
        y = np.where(masks[0], unitary_dft(x), 0)
        assert abs(losses[0] - ss_cs_loss(f, y, masks[0], w)) <= 1e-9 * max(1.0, losses[0])
        ref = float(np.sum(np.abs(f - x) ** 2))
        return abs(losses.mean() - ref) / (losses.std(ddof=1) / np.sqrt(draws))

    for q in qs:
        probs = _center_probs(n, n_center, q)
        f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        masks = rng.random((draws, n)) < probs
        zs.append(mc(f, x, masks, 1.0 / np.sqrt(probs)))

    scheme = CsScheme(100, 0.08, 0.25, 0.33)
    split = build_splits(scheme, rng, draws)
    f = rng.standard_normal(100) + 1j * rng.standard_normal(100)
    x = rng.standard_normal(100) + 1j * rng.standard_normal(100)
    zs.append(mc(f, x, split.m_target, split.weights))
    worst = float(max(zs))
    return CheckResult(
        "masked-loss-monte-carlo",
        bool(worst < 3.0),
        f"{draws} mask draws per setting, max |mean loss - ||f-x||^2|/SE = {worst:.2f} (< 3)",
        data={"z": zs},
    )


def _central_difference(fun, W: np.ndarray, idx, h: float) -> float:
    E = np.zeros_like(W)
    E[idx] = h
    return (fun(W + E) - fun(W - E)) / (2 * h)


def check_gradients(coords: int = 50, seed: int = 0) -> CheckResult:
    """Analytic gradients versus central differences at random coordinates.

    Both objectives are quadratic in ``W``, so the central difference is exact
    up to rounding and a moderate step keeps cancellation error small.
    """
    model = _reference_model(0.1)
    n = model.n
    rng = np.random.default_rng(seed_sequence(seed, 5))
    W = rng.standard_normal((n, n)) / np.sqrt(n)
    x = model.U @ (rng.standard_normal(model.d) / np.sqrt(model.d))
    pair = SamplePair(x, x + 0.01 * rng.standard_normal(n), x + 0.02 * rng.standard_normal(n))
    cases = [
        ("risk", lambda V: risk_closed_form(V, model), risk_gradient(W, model)),
        ("n2n", lambda V: float(np.sum((V @ pair.y - pair.y_prime) ** 2)), n2n_sample_gradient(W, pair)),
    ]
    worst = 0.0
    for _, fun, grad in cases:
        flat = rng.choice(n * n, size=coords, replace=False)
        scale = np.max(np.abs(grad))
        for f in flat:
            idx = np.unravel_index(f, W.shape)
            num = _central_difference(fun, W, idx, 1e-3)
            worst = max(worst, abs(num - grad[idx]) / max(abs(grad[idx]), 1e-3 * scale))
    return CheckResult(
        "gradient-finite-differences",
        bool(worst < 1e-6),
        f"{coords} coordinates each for the risk and noise2noise gradients, max rel error {worst:.2e} (< 1e-6)",
        data={"rel_error": worst},
    )


def check_risk_decomposition(matrices: int = 100, seed: int = 0) -> CheckResult:
    model = _reference_model()
    n, d = model.n, model.d
    Wstar = optimal_estimator(model).W
    rng = np.random.default_rng(seed_sequence(seed, 6))
    worst = 0.0
    for _ in range(matrices):
        W = rng.standard_normal((n, n)) / np.sqrt(n)
        D = W - Wstar
        R = risk_closed_form(W, model)
        resid = R - optimal_risk(model) - np.sum((D @ model.U) ** 2) / d - model.sigma_z**2 / n * np.sum(D**2)
        worst = max(worst, abs(resid) / R)
    return CheckResult(
        "risk-decomposition",
        bool(worst < 1e-9),
        f"{matrices} random W, max |residual|/R(W) = {worst:.2e} (< 1e-9)",
        data={"relative_residual": worst},
    )


def check_splitter(draws: int = 10_000, seed: int = 0) -> CheckResult:
    scheme = CsScheme(1000, 0.08, 0.25, 0.33)
    split = build_splits(scheme, np.random.default_rng(seed_sequence(seed, 7)), draws)
    nc = ~scheme.center
    frac = split.overlap[:, nc].mean(axis=1)
    expected = scheme.p_prime * scheme.q
    z = abs(frac.mean() - expected) / (frac.std(ddof=1) / np.sqrt(draws))
    w = split.weights
    weights_ok = bool(np.all(w[scheme.center] == 1.0) and np.all(w[nc] == 1.0 / np.sqrt(scheme.q)))
    return CheckResult(
        "splitter-statistics",
        bool(z < 3.0 and weights_ok),
        f"overlap fraction {frac.mean():.5f} vs p'q = {expected:.5f} ({z:.2f} SE), weights exact: {weights_ok}",
        data={"z": z, "overlap": float(frac.mean()), "expected": expected},
    )


def check_bound_domination(
    sizes=(3, 10, 30, 100, 300, 1000, 3000, 5000),
    sigma_es=(0.0, 0.1, 0.2),
    trials: int = 5,
    seed: int = 0,
) -> CheckResult:
    """Trial-mean risk of single-pass SGM with the decaying strongly convex stepsizes against the bound.

    Datasets are nested, so one pass over the largest set is traced at every
    tested size. Means within three standard errors above the bound are
    flagged rather than failed.
    """
    rows = []
    failed = flagged = False
    for se in sigma_es:
        model = _reference_model(se, seed)
        schedule = SgmSchedule.lemma1(BoundConstants.from_model(model))
        risks = np.empty((trials, len(sizes)))
        for t in range(trials):
            ds = generate_dataset(model, max(sizes), seed_sequence(seed, 1, t, 0))
            for j, N in enumerate(sizes):
                risks[t, j] = risk_closed_form(sgm_single_pass(ds.head(N), schedule).final_W, model)
        for j, N in enumerate(sizes):
            mean = risks[:, j].mean()
            sem = risks[:, j].std(ddof=1) / np.sqrt(trials) if trials > 1 else 0.0
            bound = theorem1_bound(model, N)
            if mean > bound:
                if mean - 3 * sem <= bound:
                    flagged = True
                else:
                    failed = True
            rows.append((se, N, mean, bound))
    worst = max(r[2] / r[3] for r in rows)
    return CheckResult(
        "theorem1-domination",
        not failed,
        f"{len(rows)} (sigma_e, N) cells, max mean risk / bound = {worst:.2e}",
        flagged=flagged,
        data={"rows": rows},
    )


def run_all(fast: bool = False, seed: int = 0) -> list[CheckResult]:
    if fast:
        return [
            check_noise2noise_unbiased(n_matrices=3, pairs=100_000, seed=seed),
            check_masked_loss_exact(pairs=20, seed=seed),
            check_masked_loss_monte_carlo(draws=20_000, seed=seed),
            check_gradients(seed=seed),
            check_risk_decomposition(matrices=20, seed=seed),
            check_splitter(draws=2_000, seed=seed),
            check_bound_domination(sizes=(3, 10, 100, 1000), trials=2, seed=seed),
        ]
    return [
        check_noise2noise_unbiased(seed=seed),
        check_masked_loss_exact(seed=seed),
        check_masked_loss_monte_carlo(seed=seed),
        check_gradients(seed=seed),
        check_risk_decomposition(seed=seed),
        check_splitter(seed=seed),
        check_bound_domination(seed=seed),
    ]
