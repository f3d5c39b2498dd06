import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssrecon_lab.masks import (
    CsScheme,
    build_split,
    build_splits,
    derived_fractions,
    dft_matrix,
    prop2_exact_check,
    split_to_dict,
    ss_cs_loss,
    unitary_dft,
    unitary_idft,
    weight_vector,
    write_split_json,
)

SCHEME = CsScheme(100, 0.08, 0.25, 0.33)


@pytest.mark.parametrize("n", [1, 7, 64, 100])
def test_unitary_dft_parseval_and_inverse(n, rng):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    k = unitary_dft(v)
    assert np.linalg.norm(k) == pytest.approx(np.linalg.norm(v))
    assert np.allclose(unitary_idft(k), v)
    F = dft_matrix(n)
    assert np.allclose(F @ v, k)
    assert np.allclose(F.conj().T @ F, np.eye(n))


def test_dc_is_centered():
    k = unitary_dft(np.ones(16))
    assert np.argmax(np.abs(k)) == 8
    assert abs(k[8]) == pytest.approx(4.0)


def test_derived_fractions():
    p_prime, q = derived_fractions(0.08, 0.25, 0.33)
    assert p_prime == pytest.approx(0.17 / 0.92)
    assert q == pytest.approx(0.08 / 0.75)
    assert derived_fractions(0.08, 0.25, 1.0)[1] == pytest.approx(1.0)


@pytest.mark.parametrize("nu,p,mu", [(0.3, 0.25, 0.33), (0.08, 0.4, 0.33), (0.0, 0.2, 0.3), (0.1, 0.2, 1.2)])
def test_invalid_schemes(nu, p, mu):
    with pytest.raises(ValueError, match="invalid scheme"):
        CsScheme(100, nu, p, mu)


def test_scheme_rounding_that_empties_a_mask_is_rejected():
    with pytest.raises(ValueError, match="invalid scheme"):
        CsScheme(10, 0.08, 0.25, 0.33)


def test_column_counts():
    assert (SCHEME.n_center, SCHEME.n_input_extra, SCHEME.n_acquired_extra, SCHEME.n_target_extra) == (8, 17, 25, 8)
    assert SCHEME.center.sum() == 8 and SCHEME.center[50]


@settings(max_examples=25, deadline=None)
@given(
    n_freq=st.sampled_from([100, 200, 500, 1000]),
    mu=st.sampled_from([0.28, 0.33, 0.5, 1.0]),
    seed=st.integers(0, 10**6),
)
def test_split_structure(n_freq, mu, seed):
    scheme = CsScheme(n_freq, 0.08, 0.25, mu)
    s = build_splits(scheme, np.random.default_rng(seed), 20)
    c = scheme.center
    assert np.all(s.m_input[:, c] & s.m_target[:, c] & s.m_tilde[:, c])
    assert np.all(s.m_input <= s.m_tilde) and np.all(s.m_target <= s.m_tilde)
    # every acquired column outside the input is a target column
    assert np.all((s.m_tilde & ~s.m_input) <= s.m_target)
    assert np.all(s.m_input.sum(1) == scheme.n_center + scheme.n_input_extra)
    assert np.all(s.m_tilde.sum(1) == scheme.n_center + scheme.n_acquired_extra)


def test_target_inclusion_is_q_and_independent_of_input():
    draws = 40_000
    s = build_splits(SCHEME, np.random.default_rng(1), draws)
    nc = ~SCHEME.center
    q = SCHEME.q
    tgt, inp = s.m_target[:, nc], s.m_input[:, nc]
    for sel in (np.ones_like(inp), inp, ~inp):
        hits = tgt[sel]
        se = np.sqrt(q * (1 - q) / hits.size)
        assert abs(hits.mean() - q) < 4 * se


def test_weights_exact():
    w = weight_vector(SCHEME)
    assert np.all(w[SCHEME.center] == 1.0)
    assert np.all(w[~SCHEME.center] == 1 / np.sqrt(SCHEME.q))
    assert np.array_equal(weight_vector(build_split(SCHEME, np.random.default_rng(0))), w)


def test_weight_vector_zero_probabilities():
    assert np.array_equal(weight_vector([1.0, 0.0, 0.25]), [1.0, 0.0, 2.0])
    with pytest.raises(ValueError, match="infinite"):
        weight_vector([0.0, 0.0])
    with pytest.raises(ValueError):
        weight_vector([1.5])


def test_full_acquisition_keeps_every_column_in_target():
    s = build_split(CsScheme(100, 0.08, 0.25, 1.0), np.random.default_rng(0))
    assert s.m_target.all()


def test_ss_cs_loss_by_hand():
    f = np.array([1.0, 2.0, 3.0, 4.0])
    x = np.zeros(4)
    m = np.array([True, False, True, True])
    w = np.array([1.0, 5.0, 2.0, 1.0])
    k = unitary_dft(f)
    expected = abs(k[0]) ** 2 + 4 * abs(k[2]) ** 2 + abs(k[3]) ** 2
    assert ss_cs_loss(f, np.where(m, unitary_dft(x), 0), m, w) == pytest.approx(expected)
    with pytest.raises(ValueError):
        ss_cs_loss(f, x[:3], m, w)


def test_prop2_exact_check(rng):
    a = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    x = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    probs = np.full(32, 0.3)
    assert prop2_exact_check(a, x, probs) < 1e-12
    probs[0] = 0.0
    with pytest.raises(ValueError, match="undefined weight"):
        prop2_exact_check(a, x, probs)


def test_split_json_round_trip(tmp_path):
    s = build_split(SCHEME, np.random.default_rng(3))
    path = tmp_path / "split.json"
    write_split_json(s, SCHEME, path)
    data = json.loads(path.read_text())
    assert data == split_to_dict(s, SCHEME)
    assert np.array_equal(np.array(data["m_input"], dtype=bool), s.m_input)
    with pytest.raises(OSError, match="cannot write"):
        write_split_json(s, SCHEME, tmp_path / "missing" / "x.json")
