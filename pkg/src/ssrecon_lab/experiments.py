"""Sweep configuration, orchestration, CSV emission and rate fitting.

Every sweep cell ``(param, N, trial)`` draws its data from sub-streams keyed
by ``(seed, trial)``. The noise level or target fraction is not part of the
key, so curves for different settings share signals and noise directions
(common random numbers), and datasets for increasing ``N`` are nested.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cs_linear import complex_subspace_model, cs_optimal_risk, cs_risk, train_cs_linear
from .gradvar import GradVarReport, normalized_gradient_variances, one_epoch_supervised
from .linear import optimal_risk, risk_closed_form
from .masks import CsScheme
from .model import SubspaceModel, generate_dataset, random_orthonormal_basis, seed_sequence
from .training import (
    BoundConstants,
    DivergenceError,
    SgmSchedule,
    gd_early_stopped,
    sgm_single_pass,
    theorem1_bound,
)

__all__ = [
    "ConfigError",
    "SweepConfig",
    "SweepRow",
    "SweepResult",
    "RateFit",
    "DEFAULT_TRAIN_SIZES",
    "CSV_HEADER",
    "parse_config",
    "run_sweep",
    "run_grad_var",
    "fit_rate",
    "emit_csv",
    "read_csv",
    "build_model",
]

log = logging.getLogger(__name__)

EXPERIMENTS = ("denoise-sgm", "denoise-gd", "cs-linear", "grad-var")
DEFAULT_TRAIN_SIZES = (1, 3, 10, 30, 100, 300, 1000, 3000, 5000)
CSV_HEADER = ("experiment", "N", "trial", "param", "risk", "optimal_risk", "excess", "bound", "wall_time_s")

# sub-stream keys below the user seed
_BASIS_KEY = 0
_DATA_KEY = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    experiment: str = "denoise-gd"
    n: int = 100
    d: int = 10
    sigma_z: float = 0.1
    sigma_e: tuple[float, ...] = (0.0,)
    mu: tuple[float, ...] = (0.28, 0.33, 1.0)
    nu: float = 0.08
    p: float = 0.25
    train_sizes: tuple[int, ...] = DEFAULT_TRAIN_SIZES
    trials: int = 5
    seed: int = 0
    output: str | None = None
    workers: int = 1
    patience: int = 10
    max_epochs: int = 5000
    timing: bool = False
    bins: int = 50

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.n < 1 or self.d < 1 or self.d > self.n:
            raise ConfigError(f"invalid dimension: need 1 <= d <= n, got n={self.n}, d={self.d}")
        if self.sigma_z < 0 or any(s < 0 for s in self.sigma_e):
            raise ConfigError("noise levels must be nonnegative")
        if not self.train_sizes or any(s < 1 for s in self.train_sizes):
            raise ConfigError("train_sizes must be a nonempty list of positive integers")
        if any(b <= a for a, b in zip(self.train_sizes, self.train_sizes[1:])):
            raise ConfigError("train_sizes must be strictly increasing")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.experiment == "cs-linear":
            for mu in self.mu:
                try:
                    CsScheme(self.n, self.nu, self.p, mu)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None

    @property
    def params(self) -> tuple[float, ...]:
        return self.mu if self.experiment == "cs-linear" else self.sigma_e


_LIST_FIELDS = {"sigma_e": float, "mu": float, "train_sizes": int}
_SCALAR_FIELDS = {
    "experiment": str,
    "n": int,
    "d": int,
    "sigma_z": float,
    "nu": float,
    "p": float,
    "trials": int,
    "seed": int,
    "output": str,
    "workers": int,
    "patience": int,
    "max_epochs": int,
    "timing": bool,
    "bins": int,
}


def _coerce(key: str, value):
    if key in _LIST_FIELDS:
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        elif not isinstance(value, (list, tuple)):
            value = [value]
        try:
            return tuple(_LIST_FIELDS[key](v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a list of numbers, got {value!r}") from None
    conv = _SCALAR_FIELDS[key]
    if conv is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    try:
        return conv(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} has an invalid value {value!r}") from None


def parse_config(path=None, overrides: dict | None = None) -> SweepConfig:
    """Build a validated config from a JSON file and/or explicit overrides.

    Overrides win over file values. The seed falls back to ``SSRECON_SEED``
    and then to 0. ``n`` must be given somewhere.
    """
    values: dict = {}
    if path is not None:
        try:
            values = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: top level must be an object")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = set(_LIST_FIELDS) | set(_SCALAR_FIELDS)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "n" not in values:
        raise ConfigError("n is required")
    if "seed" not in values and os.environ.get("SSRECON_SEED"):
        values["seed"] = os.environ["SSRECON_SEED"]
    kwargs = {k: _coerce(k, v) for k, v in values.items()}
    return SweepConfig(**kwargs)


@dataclass
class SweepRow:
    experiment: str
    N: int
    trial: int
    param: float
    risk: float
    optimal_risk: float
    excess: float
    bound: float = math.nan
    wall_time_s: float = math.nan
    failure: str | None = None

    def values(self) -> tuple:
        return tuple(getattr(self, k) for k in CSV_HEADER)


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def failed(self) -> list[SweepRow]:
        return [r for r in self.rows if r.failure]

    def sorted(self) -> "SweepResult":
        return SweepResult(sorted(self.rows, key=lambda r: (r.param, r.N, r.trial)))

    def select(self, experiment: str | None = None, param: float | None = None) -> list[SweepRow]:
        return [
            r
            for r in self.rows
            if (experiment is None or r.experiment == experiment) and (param is None or r.param == param)
        ]

    def aggregate(
        self, param: float, field_name: str = "risk", how: str = "mean", experiment: str | None = None
    ) -> dict[int, float]:
        """Per-``N`` trial aggregate of ``field_name``, ignoring failed rows.

        ``how="min"`` gives the best run out of the trials.
        """
        reducers = {"mean": np.mean, "min": np.min, "max": np.max}
        if how not in reducers:
            raise ValueError(f"how must be one of {sorted(reducers)}, got {how!r}")
        acc: dict[int, list[float]] = {}
        for r in self.select(experiment, param):
            if not r.failure:
                acc.setdefault(r.N, []).append(getattr(r, field_name))
        return {N: float(reducers[how](v)) for N, v in sorted(acc.items())}

    def mean_curve(self, param: float, field_name: str = "risk", experiment: str | None = None) -> dict[int, float]:
        return self.aggregate(param, field_name, "mean", experiment)


def build_model(config: SweepConfig) -> SubspaceModel:
    """The real denoising model of the sweep; ``sigma_e`` is set per cell."""
    U = random_orthonormal_basis(config.n, config.d, seed_sequence(config.seed, _BASIS_KEY))
    return SubspaceModel(U, config.sigma_z, 0.0)


def _denoise_cell(config: SweepConfig, sigma_e: float, N: int, trial: int) -> SweepRow:
    model = build_model(config).with_sigma_e(sigma_e)
    data_seed = seed_sequence(config.seed, _DATA_KEY, trial)
    train = generate_dataset(model, N, seed_sequence(data_seed, 0))
    r_opt = optimal_risk(model)
    if config.experiment == "denoise-sgm":
        schedule = SgmSchedule.lemma1(BoundConstants.from_model(model))
        W = sgm_single_pass(train, schedule).final_W
        bound = theorem1_bound(model, N) if N >= 3 else math.nan
    else:
        val = generate_dataset(model, max(50, N // 5), seed_sequence(data_seed, 1))
        W = gd_early_stopped(train, val, patience=config.patience, max_epochs=config.max_epochs).final_W
        bound = math.nan
    risk = risk_closed_form(W, model)
    return SweepRow(config.experiment, N, trial, sigma_e, risk, r_opt, risk - r_opt, bound)


def _cs_cell(config: SweepConfig, mu: float, N: int, trial: int) -> SweepRow:
    model = complex_subspace_model(config.n, config.d, seed_sequence(config.seed, _BASIS_KEY))
    scheme = CsScheme(config.n, config.nu, config.p, mu)
    mode = "supervised" if mu == 1.0 else "self-supervised"
    report = train_cs_linear(
        scheme,
        model,
        N,
        mode,
        seed=seed_sequence(config.seed, _DATA_KEY, trial),
        patience=config.patience,
        max_epochs=config.max_epochs,
    )
    risk = cs_risk(report.final_W, scheme, model)
    r_opt = cs_optimal_risk(scheme, model)
    return SweepRow(config.experiment, N, trial, mu, risk, r_opt, risk - r_opt)


def _run_cell(args) -> SweepRow:
    config, param, N, trial = args
    start = time.perf_counter()
    try:
        if config.experiment == "cs-linear":
            row = _cs_cell(config, param, N, trial)
        else:
            row = _denoise_cell(config, param, N, trial)
    except DivergenceError as exc:
        nan = math.nan
        row = SweepRow(config.experiment, N, trial, param, nan, nan, nan, nan, failure=str(exc))
    if config.timing:
        row.wall_time_s = time.perf_counter() - start
    return row


def _cells(config: SweepConfig) -> list[tuple]:
    return [(config, float(p), N, t) for p in config.params for N in config.train_sizes for t in range(config.trials)]


def run_sweep(config: SweepConfig) -> SweepResult:
    """Run every ``(param, N, trial)`` cell and return rows sorted by that key.

    Diverged cells are kept as failed rows with NaN values.
    """
    if config.experiment == "grad-var":
        raise ConfigError("grad-var is not a sweep; use run_grad_var")
    cells = _cells(config)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_cell, cells, chunksize=max(1, len(cells) // (4 * config.workers))))
    else:
        rows = [_run_cell(c) for c in cells]
    for r in rows:
        if r.failure:
            log.warning("cell param=%g N=%d trial=%d failed: %s", r.param, r.N, r.trial, r.failure)
    return SweepResult(rows).sorted()


def run_grad_var(config: SweepConfig, size: int | None = None) -> list[GradVarReport]:
    """Normalized gradient variances at ``W`` after one supervised epoch.

    One supervised report plus one noise2noise report per ``sigma_e``, all on
    the same signals and input noise. ``size`` defaults to the largest
    training size.
    """
    size = size or config.train_sizes[-1]
    model = build_model(config)
    data_seed = seed_sequence(config.seed, _DATA_KEY, 0, 0)
    base = generate_dataset(model, size, data_seed)
    W = one_epoch_supervised(base)
    reports = [normalized_gradient_variances(W, base, "supervised", bins=config.bins)]
    for se in config.sigma_e:
        ds = generate_dataset(model.with_sigma_e(se), size, data_seed)
        rep = normalized_gradient_variances(W, ds, "noise2noise", bins=config.bins)
        rep.loss_label = f"noise2noise(sigma_e={se:g})"
        reports.append(rep)
    return reports


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    sizes: tuple[int, ...]


def fit_rate(
    results: SweepResult | Iterable[SweepRow],
    group_key: str = "param",
    n_min: int | None = None,
    n_max: int | None = None,
    experiment: str | None = None,
) -> dict:
    """Least-squares fit of ``log(mean excess)`` against ``log(N)`` per group.

    Sizes whose trial-mean excess is not positive are dropped with a warning.
    Groups with fewer than three usable sizes raise :class:`ValueError`.
    """
    rows = results.rows if isinstance(results, SweepResult) else list(results)
    groups: dict = {}
    for r in rows:
        if r.failure or (experiment and r.experiment != experiment):
            continue
        if (n_min is not None and r.N < n_min) or (n_max is not None and r.N > n_max):
            continue
        groups.setdefault(getattr(r, group_key), {}).setdefault(r.N, []).append(r.excess)
    fits = {}
    for key, by_n in sorted(groups.items()):
        sizes, means = [], []
        for N, vals in sorted(by_n.items()):
            m = float(np.mean(vals))
            if m > 0:
                sizes.append(N)
                means.append(m)
            else:
                log.warning("group %s: excluding N=%d with nonpositive mean excess %g", key, N, m)
        if len(sizes) < 3:
            raise ValueError(f"group {key}: need at least 3 sizes with positive excess, got {len(sizes)}")
        lx, ly = np.log(sizes), np.log(means)
        slope, intercept = np.polyfit(lx, ly, 1)
        resid = ly - (slope * lx + intercept)
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
        fits[key] = RateFit(float(slope), float(intercept), r2, tuple(sizes))
    return fits


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def emit_csv(results: SweepResult | Sequence[SweepRow], path) -> None:
    """Write rows sorted by ``(param, N, trial)`` with 17 significant digits."""
    rows = results.rows if isinstance(results, SweepResult) else list(results)
    rows = sorted(rows, key=lambda r: (r.param, r.N, r.trial))
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in rows:
                w.writerow([_fmt(v) for v in r.values()])
    except OSError as exc:
        raise OSError(f"cannot write sweep results to {path}: {exc}") from exc


def read_csv(path) -> SweepResult:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = []
        for rec in reader:
            vals = {k: float(rec[k]) for k in CSV_HEADER[3:]}
            rows.append(SweepRow(rec["experiment"], int(rec["N"]), int(rec["trial"]), **vals))
    return SweepResult(rows)


def config_to_dict(config: SweepConfig) -> dict:
    d = dataclasses.asdict(config)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
