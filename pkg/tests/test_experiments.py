import json
import math

import numpy as np
import pytest

from ssrecon_lab import experiments
from ssrecon_lab.experiments import (
    CSV_HEADER,
    ConfigError,
    SweepConfig,
    SweepResult,
    SweepRow,
    emit_csv,
    fit_rate,
    parse_config,
    read_csv,
    run_grad_var,
    run_sweep,
)
from ssrecon_lab.training import DivergenceError


def synthetic_rows(fn, sizes=(10, 30, 100, 300, 1000), trials=3, param=0.0):
    return [SweepRow("denoise-gd", N, t, param, 1.0 + fn(N), 1.0, fn(N)) for N in sizes for t in range(trials)]


def test_parse_config_reference_flags():
    cfg = parse_config(None, {"d": 10, "n": 100, "sigma_z": 0.1, "sigma_e": "0,0.1,0.2"})
    assert (cfg.n, cfg.d, cfg.sigma_z) == (100, 10, 0.1)
    assert cfg.sigma_e == (0.0, 0.1, 0.2)
    assert cfg.trials == 5 and cfg.seed == 0
    assert cfg.train_sizes == (1, 3, 10, 30, 100, 300, 1000, 3000, 5000)


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="n is required"):
        parse_config(None, {"d": 3})
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"n": 5, "d": 10}))
    with pytest.raises(ConfigError, match="invalid dimension"):
        parse_config(bad)
    bad.write_text(json.dumps({"n": 5, "colour": 1, "zeta": 2}))
    with pytest.raises(ConfigError, match="colour, zeta"):
        parse_config(bad)
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config(bad)
    with pytest.raises(ConfigError, match="strictly increasing"):
        parse_config(None, {"n": 10, "d": 2, "train_sizes": [5, 5]})
    with pytest.raises(ConfigError, match="trials"):
        parse_config(None, {"n": 10, "d": 2, "trials": 0})
    with pytest.raises(ConfigError, match="experiment"):
        parse_config(None, {"n": 10, "d": 2, "experiment": "other"})
    with pytest.raises(ConfigError, match="invalid scheme"):
        parse_config(None, {"n": 100, "experiment": "cs-linear", "mu": [0.2]})


def test_flags_override_file_and_env_seed(tmp_path, monkeypatch):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"n": 50, "d": 5, "trials": 2, "seed": 4}))
    assert parse_config(f, {"trials": 7}).trials == 7
    assert parse_config(f).seed == 4
    monkeypatch.setenv("SSRECON_SEED", "11")
    assert parse_config(None, {"n": 10, "d": 1}).seed == 11
    assert parse_config(f).seed == 4


def test_single_cell_sweep():
    cfg = SweepConfig(n=100, d=10, sigma_e=(0.0,), train_sizes=(10,), trials=1)
    res = run_sweep(cfg)
    assert len(res) == 1
    r = res.rows[0]
    assert r.risk >= r.optimal_risk
    assert abs(r.excess - (r.risk - r.optimal_risk)) < 1e-12
    assert math.isnan(r.wall_time_s) and math.isnan(r.bound)


def test_sweep_is_deterministic_across_workers(tmp_path):
    cfg = SweepConfig(n=30, d=3, sigma_e=(0.0, 0.2), train_sizes=(5, 20), trials=2)
    emit_csv(run_sweep(cfg), tmp_path / "a.csv")
    emit_csv(run_sweep(cfg), tmp_path / "b.csv")
    emit_csv(run_sweep(SweepConfig(**{**cfg.__dict__, "workers": 2})), tmp_path / "c.csv")
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()


def test_sgm_rows_carry_bound():
    cfg = SweepConfig(experiment="denoise-sgm", n=100, d=10, sigma_e=(0.1,), train_sizes=(1, 3, 30), trials=1, timing=True)
    rows = run_sweep(cfg).rows
    assert math.isnan(rows[0].bound)
    assert all(r.risk <= r.bound for r in rows[1:])
    assert all(r.wall_time_s >= 0 for r in rows)


def test_cs_sweep_rows():
    cfg = SweepConfig(experiment="cs-linear", n=100, d=10, mu=(0.33, 1.0), train_sizes=(100,), trials=1)
    rows = run_sweep(cfg).rows
    assert [r.param for r in rows] == [0.33, 1.0]
    assert all(r.excess >= -1e-12 for r in rows)


def test_divergent_cells_are_marked_failed(monkeypatch, caplog):
    def boom(*a, **k):
        raise DivergenceError(3)

    monkeypatch.setattr(experiments, "gd_early_stopped", boom)
    res = run_sweep(SweepConfig(n=20, d=2, train_sizes=(5, 10), trials=1))
    assert len(res.failed) == 2
    assert all(math.isnan(r.risk) for r in res.rows)
    assert "failed" in caplog.text


def test_grad_var_reports_ordered():
    cfg = SweepConfig(experiment="grad-var", n=100, d=10, sigma_e=(0.1, 0.2), train_sizes=(2000,))
    reps = run_grad_var(cfg)
    assert [r.loss_label for r in reps] == ["supervised", "noise2noise(sigma_e=0.1)", "noise2noise(sigma_e=0.2)"]
    assert reps[0].mean < reps[1].mean < reps[2].mean
    with pytest.raises(ConfigError):
        run_sweep(cfg)


@pytest.mark.parametrize("power,const", [(1.0, 3.0), (0.5, 2.0)])
def test_fit_rate_on_constructed_power_laws(power, const):
    fits = fit_rate(synthetic_rows(lambda N: const / N**power))
    fit = fits[0.0]
    assert fit.slope == pytest.approx(-power, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(const), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_rate_excludes_nonpositive_and_ranges(caplog):
    rows = synthetic_rows(lambda N: 3.0 / N)
    rows += [SweepRow("denoise-gd", 5, 0, 0.0, 1.0, 1.0, 0.0)]
    fit = fit_rate(rows)[0.0]
    assert 5 not in fit.sizes and "excluding N=5" in caplog.text
    assert fit_rate(rows, n_min=30, n_max=300)[0.0].sizes == (30, 100, 300)
    with pytest.raises(ValueError, match="at least 3"):
        fit_rate(rows, n_min=300)


def test_csv_round_trip(tmp_path):
    rows = synthetic_rows(lambda N: 1 / 3 / N, sizes=(1, 7), trials=2, param=0.1)
    rows[0].bound = 12345.678901234567
    path = tmp_path / "r.csv"
    emit_csv(SweepResult(list(reversed(rows))), path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    back = read_csv(path)
    for a, b in zip(back.rows, rows):
        for k in CSV_HEADER:
            va, vb = getattr(a, k), getattr(b, k)
            assert (isinstance(va, float) and math.isnan(va) and math.isnan(vb)) or va == vb


def test_csv_empty_and_single(tmp_path):
    emit_csv(SweepResult(), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(CSV_HEADER) + "\n"
    emit_csv(synthetic_rows(lambda N: 1.0, sizes=(2,), trials=1), tmp_path / "o.csv")
    assert len((tmp_path / "o.csv").read_text().splitlines()) == 2
    with pytest.raises(OSError, match="cannot write"):
        emit_csv(SweepResult(), tmp_path / "no" / "x.csv")


def test_aggregates():
    res = SweepResult([SweepRow("denoise-gd", 10, t, 0.0, v, 0.0, v) for t, v in enumerate([3.0, 1.0, 2.0])])
    assert res.aggregate(0.0) == {10: 2.0}
    assert res.aggregate(0.0, how="min") == {10: 1.0}
    with pytest.raises(ValueError):
        res.aggregate(0.0, how="median")
