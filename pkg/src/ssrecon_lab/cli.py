"""Command-line entry point ``ssrecon-lab``.

Exit codes: 0 success, 1 invalid input or failed check, 2 numerical
divergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks
from .experiments import ConfigError, emit_csv, fit_rate, parse_config, read_csv, run_grad_var, run_sweep
from .gradvar import compare_means, write_histogram_csv, write_variances_csv
from .masks import CsScheme, build_split, write_split_json
from .model import seed_sequence
from .training import DivergenceError

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("ssrecon_lab")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--experiment", choices=["denoise-sgm", "denoise-gd", "cs-linear", "grad-var"])
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--sigma-z", type=float)
    p.add_argument("--sigma-e", help="comma-separated target noise levels")
    p.add_argument("--mu", help="comma-separated acquired fractions (cs-linear)")
    p.add_argument("--nu", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--train-sizes", help="comma-separated, strictly increasing")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--timing", action="store_true", default=None, help="record wall time per cell")


def _overrides(args) -> dict:
    keys = ["experiment", "n", "d", "sigma_z", "sigma_e", "mu", "nu", "p", "train_sizes", "trials", "seed", "timing"]
    out = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "workers", None) is not None:
        out["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        out["output"] = args.out
    return out


def _cmd_sweep(args) -> int:
    config = parse_config(args.config, _overrides(args))
    result = run_sweep(config)
    out = config.output or "sweep.csv"
    emit_csv(result, out)
    print(f"wrote {len(result)} rows to {out}" + (f" ({len(result.failed)} failed)" if result.failed else ""))
    return EXIT_DIVERGED if result.failed else EXIT_OK


def _cmd_fit_rate(args) -> int:
    results = read_csv(args.input)
    fits = fit_rate(results, args.group, n_min=args.n_min, n_max=args.n_max)
    print(f"{args.group},slope,intercept,r_squared,sizes")
    for key, fit in fits.items():
        sizes = " ".join(str(s) for s in fit.sizes)
        print(f"{key:g},{fit.slope:.6f},{fit.intercept:.6f},{fit.r_squared:.6f},{sizes}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = checks.run_all(fast=args.fast, seed=args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVALID


def _cmd_grad_var(args) -> int:
    overrides = _overrides(args)
    overrides.setdefault("experiment", None)
    overrides["experiment"] = overrides["experiment"] or "grad-var"
    config = parse_config(args.config, overrides)
    reports = run_grad_var(config, size=args.size)
    for rep in reports:
        print(f"{rep.loss_label}: mean {rep.mean:.6g} (SE {rep.stderr:.3g})")
    for a, b in zip(reports, reports[1:]):
        print(f"{a.loss_label} vs {b.loss_label}: {compare_means(a, b)}")
    if args.out:
        out = Path(args.out)
        write_variances_csv(reports, out)
        for i, rep in enumerate(reports):
            write_histogram_csv(rep, out.with_name(f"{out.stem}_hist{i}{out.suffix or '.csv'}"))
    return EXIT_OK


def _cmd_mask_split(args) -> int:
    scheme = CsScheme(args.n_freq, args.nu, args.p, args.mu)
    split = build_split(scheme, np.random.default_rng(seed_sequence(args.seed)))
    write_split_json(split, scheme, args.out)
    print(
        f"input {int(split.m_input.sum())}, target {int(split.m_target.sum())}, "
        f"overlap {int(split.overlap.sum())} of {scheme.n_freq} columns; wrote {args.out}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssrecon-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a sample-complexity sweep and write CSV")
    _add_config_flags(p)
    p.add_argument("--out", help="output CSV path (default: config output or sweep.csv)")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit-rate", help="fit log excess risk against log N")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--group", default="param")
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    p.set_defaults(func=_cmd_fit_rate)

    p = sub.add_parser("verify", help="run the numerical property checks")
    p.add_argument("--fast", action="store_true", help="smaller sample sizes")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("grad-var", help="normalized per-sample gradient variances")
    _add_config_flags(p)
    p.add_argument("--size", type=int, help="number of samples (default: largest train size)")
    p.add_argument("--out", help="per-sample CSV; histograms go next to it")
    p.set_defaults(func=_cmd_grad_var)

    p = sub.add_parser("mask-split", help="draw one k-space mask split and write JSON")
    p.add_argument("--n-freq", type=int, required=True)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mask_split)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
