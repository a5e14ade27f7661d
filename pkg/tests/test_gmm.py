import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tabshift.gmm import GaussianMixtureModel, fit_em, log_likelihood, prune, responsibilities, sigma_floor

mp.mp.dps = 50


def _mp_pdf(x, mu, sd):
    x, mu, sd = mp.mpf(x), mp.mpf(mu), mp.mpf(sd)
    return mp.exp(-((x - mu) ** 2) / (2 * sd**2)) / (sd * mp.sqrt(2 * mp.pi))


def _two_mode(n, seed):
    rng = np.random.default_rng(seed)
    mode = rng.integers(2, size=n)
    return rng.normal(np.where(mode == 0, -3.0, 3.0), 0.5)


def test_constant_values_give_single_floored_component():
    g = fit_em(np.full(50, 5.0), m_max=3)
    assert g.n_modes == 1
    assert g.means[0] == 5.0 and g.weights[0] == 1.0
    assert g.stds[0] == sigma_floor(np.full(50, 5.0)) > 0


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        fit_em([1.0, np.inf, 2.0])


@pytest.mark.parametrize("seed", range(3))
def test_two_mode_recovery(seed):
    g = fit_em(_two_mode(5000, seed), m_max=10, seed=seed)
    assert g.n_modes == 2
    order = np.argsort(g.means)
    np.testing.assert_allclose(g.means[order], [-3, 3], atol=0.1)
    np.testing.assert_allclose(g.weights[order], [0.5, 0.5], atol=0.05)


def test_fixed_mode_count_without_selection():
    g = fit_em(_two_mode(2000, 0), m_max=5, prune_weight=0.0, select="none")
    assert g.n_modes == 5


@pytest.mark.parametrize("seed", range(10))
def test_em_trace_non_decreasing(seed):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(rng.normal(0, 5), rng.uniform(0.2, 2), rng.integers(5, 200)) for _ in range(3)])
    g = fit_em(x, m_max=6, seed=seed)
    assert np.all(np.diff(g.trace) >= -1e-9)


def test_responsibilities_single_mode():
    g = GaussianMixtureModel([1.0], [2.0], [0.3])
    assert responsibilities(g, 17.0).tolist() == [1.0]


def test_responsibilities_symmetric():
    g = GaussianMixtureModel([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
    np.testing.assert_allclose(responsibilities(g, 0.0), [0.5, 0.5], atol=1e-15)


def test_responsibilities_against_extended_precision():
    g = GaussianMixtureModel([0.5, 0.5], [0.0, 4.0], [1.0, 1.0])
    a, b = 0.5 * _mp_pdf(1, 0, 1), 0.5 * _mp_pdf(1, 4, 1)
    expect = [float(a / (a + b)), float(b / (a + b))]
    np.testing.assert_allclose(responsibilities(g, 1.0), expect, rtol=1e-13)


def test_responsibilities_far_tail_no_underflow():
    g = GaussianMixtureModel([0.5, 0.5], [0.0, 4.0], [0.01, 0.01])
    r = responsibilities(g, 1e3)
    assert np.all(np.isfinite(r)) and r.tolist() == [0.0, 1.0]


@given(
    st.lists(st.floats(0.05, 1.0), min_size=1, max_size=5),
    st.floats(-50, 50),
    st.integers(0, 1000),
)
def test_responsibilities_probability_vector(ws, c, seed):
    rng = np.random.default_rng(seed)
    w = np.array(ws) / np.sum(ws)
    g = GaussianMixtureModel(w, rng.normal(0, 10, len(w)), rng.uniform(0.01, 5, len(w)))
    r = responsibilities(g, c)
    assert np.all(r >= 0) and abs(r.sum() - 1) <= 1e-9


def test_log_likelihood_closed_form():
    g = GaussianMixtureModel([1.0], [3.0], [1.0])
    assert log_likelihood(g, [3.0]) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)
    assert log_likelihood(g, []) == 0.0


def test_log_likelihood_against_extended_precision():
    rng = np.random.default_rng(5)
    w = rng.dirichlet(np.ones(3))
    g = GaussianMixtureModel(w, rng.normal(0, 3, 3), rng.uniform(0.5, 2, 3))
    x = rng.normal(0, 4, 10)
    exact = mp.fsum(
        mp.log(mp.fsum(mp.mpf(wk) * _mp_pdf(v, m, s) for wk, m, s in zip(g.weights, g.means, g.stds))) for v in x
    )
    assert abs(log_likelihood(g, x) - float(exact)) <= 1e-10


def test_prune_renormalises_and_never_grows():
    g = GaussianMixtureModel([0.6, 0.398, 0.002], [0, 1, 2], [1, 1, 1])
    p = prune(g, 0.005)
    assert p.n_modes == 2 and abs(p.weights.sum() - 1) <= 1e-12
    assert prune(g, 0.0).n_modes == 3


def test_model_validation():
    with pytest.raises(ValueError):
        GaussianMixtureModel([0.5, 0.6], [0, 1], [1, 1])
    with pytest.raises(ValueError):
        GaussianMixtureModel([1.0], [0], [0.0])
