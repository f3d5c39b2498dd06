import numpy as np
import pytest

from ssrecon_lab.linear import n2n_sample_gradient, optimal_estimator, optimal_risk, risk_closed_form
from ssrecon_lab.model import generate_dataset, make_model, sample_arrays
from ssrecon_lab.training import (
    BoundConstants,
    DivergenceError,
    Moments,
    SgmSchedule,
    default_learning_rate,
    gd_early_stopped,
    gd_on_moments,
    lemma1_stepsize,
    second_moment_check,
    sgm_single_pass,
    theorem1_bound,
    train_noisier2noise,
)


def test_bound_constants_for_reference_model(ref_model):
    c = BoundConstants.from_model(ref_model.with_sigma_e(0.0))
    assert c.m == pytest.approx(1e-4)
    assert c.M == pytest.approx(1.0)
    assert c.B == pytest.approx(0.012)
    # both readings of the slope constant agree when d = 10
    assert BoundConstants.from_model(ref_model, "M").M == pytest.approx(c.M)
    with pytest.raises(ValueError):
        BoundConstants.from_model(ref_model, "other")


def test_lemma1_schedule_values(ref_model):
    c = BoundConstants.from_model(ref_model)
    sched = SgmSchedule.lemma1(c)
    # a = 2/m = 2e4, c = 2 M^2 / m^2 = 2e8
    assert sched.a == pytest.approx(2e4)
    assert sched.c == pytest.approx(2e8)
    assert lemma1_stepsize(1, c) == pytest.approx(2e4 / (2e8 + 1))
    assert np.allclose(sched.steps(3), [sched(k) for k in (1, 2, 3)])


def test_schedule_rejects_degenerate_inputs():
    with pytest.raises(ValueError, match="degenerate"):
        lemma1_stepsize(1, BoundConstants(0.0, 1.0, 0.0))
    with pytest.raises(ValueError):
        lemma1_stepsize(0, BoundConstants(1.0, 1.0, 0.0))
    with pytest.raises(ValueError):
        SgmSchedule(1.0, -2.0)
    with pytest.raises(ValueError):
        SgmSchedule.lemma1(BoundConstants(0.0, 1.0, 0.0))


def test_sgm_first_step_by_hand(ref_model):
    ds = generate_dataset(ref_model, 2, 0)
    sched = SgmSchedule(a=0.3, c=0.0)
    W1 = sgm_single_pass(ds.head(1), sched).final_W.W
    # from W0 = 0 the residual is -y'
    assert np.allclose(W1, 0.3 * 2 * np.outer(ds.Yp[0], ds.Y[0]))
    W2 = sgm_single_pass(ds, sched).final_W.W
    expected = W1 - 0.15 * n2n_sample_gradient(W1, ds[1])
    assert np.allclose(W2, expected)


def test_sgm_trace_and_errors(ref_model):
    ds = generate_dataset(ref_model, 10, 0)
    rep = sgm_single_pass(ds, SgmSchedule(1.0, 10.0), trace_every=4)
    assert [k for k, _ in rep.risk_trajectory] == [0, 4, 8, 10]
    assert rep.stop_reason == "dataset-exhausted"
    with pytest.raises(ValueError):
        sgm_single_pass(ds.head(0), SgmSchedule(1.0, 1.0))
    with pytest.raises(DivergenceError):
        sgm_single_pass(generate_dataset(ref_model, 200, 0), SgmSchedule(1e6, 0.0))


def test_moments_loss_and_gradient(ref_model, rng):
    ds = generate_dataset(ref_model, 30, 1)
    mom = Moments.noise2noise(ds)
    W = rng.standard_normal((100, 100)) / 10
    direct = np.mean(np.sum((ds.Y @ W.T - ds.Yp) ** 2, axis=1))
    assert mom.loss(W) == pytest.approx(direct, rel=1e-12)
    E = np.zeros_like(W)
    E[3, 7] = 1e-4
    fd = (mom.loss(W + E) - mom.loss(W - E)) / 2e-4
    assert fd == pytest.approx(mom.gradient(W)[3, 7], rel=1e-6)


def test_gd_converges_to_least_squares_solution(ref_model):
    ds = generate_dataset(ref_model, 400, 2)
    mom = Moments.noise2noise(ds)
    rep = gd_on_moments(mom, mom, patience=50, max_epochs=100000, min_rel_improvement=0.0)
    W_ls = np.linalg.solve(mom.uu, mom.tu.T).T
    assert mom.loss(rep.final_W.W) == pytest.approx(mom.loss(W_ls), rel=1e-6)


def test_gd_early_stopping_keeps_best_iterate(ref_model):
    train = generate_dataset(ref_model, 100, 3)
    val = generate_dataset(ref_model, 50, 4)
    rep = gd_early_stopped(train, val, trace=True)
    best = min(v for _, v in rep.validation_trajectory)
    assert rep.stop_reason in ("early-stopped", "max-epochs")
    assert Moments.noise2noise(val).loss(rep.final_W.W) == pytest.approx(best)
    assert rep.risk_trajectory[rep.best_epoch][1] == pytest.approx(risk_closed_form(rep.final_W, ref_model))


def test_gd_learning_rate_edge_cases(ref_model):
    ds = generate_dataset(ref_model, 20, 0)
    mom = Moments.noise2noise(ds)
    rep = gd_on_moments(mom, mom, learning_rate=0.0, max_epochs=7)
    assert rep.stop_reason == "max-epochs" and np.all(rep.final_W.W == 0)
    with pytest.raises(DivergenceError):
        gd_on_moments(mom, mom, learning_rate=50.0 / mom.max_eigenvalue(), patience=10**6, max_epochs=10000)
    assert default_learning_rate(mom) == pytest.approx(0.5 / mom.max_eigenvalue())
    with pytest.raises(ValueError):
        gd_on_moments(mom, mom, patience=0)


def test_noisier2noise_training_approaches_population_minimizer(ref_model):
    train = generate_dataset(ref_model, 3000, 5)
    val = generate_dataset(ref_model, 600, 6)
    rep = train_noisier2noise(train, val, extra_sigma=0.1)
    risk = risk_closed_form(rep.final_W, ref_model)
    assert risk == pytest.approx(3.249e-3, rel=0.1)


def test_theorem1_bound_values(ref_model):
    m0 = ref_model.with_sigma_e(0.0)
    # R* + (1/d + s)/s^2 (2 + B^2)/(N - 2) with s = 1e-4, B = 0.012
    assert theorem1_bound(m0, 5000) == pytest.approx(4005.8916432587, rel=1e-10)
    assert theorem1_bound(m0, 5000) > optimal_risk(m0)
    with pytest.raises(ValueError):
        theorem1_bound(m0, 2)
    with pytest.raises(ValueError):
        theorem1_bound(make_model(10, 2, 0.0), 10)


def test_second_moment_check_matches_explicit_gradients(ref_model):
    c = BoundConstants.from_model(ref_model)
    W = optimal_estimator(ref_model)
    rep = second_moment_check(W, ref_model, c, samples=10_000, seed=1)
    _, Y, Yp = sample_arrays(ref_model, 10_000, 1)
    from ssrecon_lab.model import SamplePair

    explicit = np.mean([np.sum(n2n_sample_gradient(W, SamplePair(y, y, yp)) ** 2) for y, yp in zip(Y, Yp)])
    assert rep.lhs == pytest.approx(explicit, rel=1e-10)
    assert rep.rhs == pytest.approx(c.B**2)
    # at the optimum the gradient noise is about 4 (R* + sigma_e^2), far above B^2
    assert not rep.holds
    with pytest.raises(ValueError):
        second_moment_check(W, ref_model, c, samples=100)
