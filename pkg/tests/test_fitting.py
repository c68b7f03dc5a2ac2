"""Replay likelihood, maximum-likelihood fitting, BIC comparison."""

import numpy as np
import pytest

from rsrl.fitting import (FittingError, RiskSensitiveQModel, StandardQModel,
                          SubjectData, bic, compare_models,
                          empirical_subjective_mean, fit, nested_start,
                          normalized_subjective_probability,
                          replay_log_likelihood)
from rsrl.learner import Constant, LearnerConfig, run
from rsrl.mdp import InvestmentGameConfig, Transition, build_investment_game
from rsrl.mdp import _default_components
from rsrl.utility import ExponentialUtility, Linear, LinearizedNearZero, \
    PolynomialMixed

LN_COSH_1 = float(np.log(np.cosh(1.0)))


def _tr(t, s, a, r, ns):
    return Transition(t=t, state=s, action=a, reward=r, next_state=ns)


def _subject(transitions):
    return SubjectData("test", transitions)


def scaled_game_config(scale, component_std=None):
    comps = tuple(tuple((m * scale, p) for m, p in comp)
                  for comp in _default_components())
    return InvestmentGameConfig(components=comps,
                                component_std=2.0 * scale
                                if component_std is None else component_std)


def generate_subject(seed, utility, beta, scale, trials=240):
    game = build_investment_game(scaled_game_config(scale))
    result = run(game, LearnerConfig("rsql", trials, seed=seed,
                                     utility=utility, schedule=Constant(1.0),
                                     beta=beta))
    return SubjectData(f"s{seed}",
                       result.trace.to_transitions(steps_per_round=3))


# -- replay likelihood -------------------------------------------------------

def test_beta_zero_uniform_likelihood():
    data = _subject([_tr(t, 0, t % 4, 1.0, 1) for t in range(12)])
    theta = {"alpha": 0.1, "beta": 0.0, "gamma": 0.5}
    assert replay_log_likelihood(data, "standard", theta) == pytest.approx(
        12 * np.log(0.25), abs=1e-12)


def test_single_trial_quarter_probability():
    data = _subject([_tr(0, 0, 2, 5.0, 1)])
    theta = {"alpha": 0.5, "beta": 7.0, "gamma": 0.9}
    assert replay_log_likelihood(data, "standard", theta) == pytest.approx(
        np.log(0.25), abs=1e-12)


def test_two_trial_hand_computed_oracle():
    # Trial 1: all Q equal, prob 1/4; update Q(0, 1) by alpha * r = 0.6.
    # Trial 2 at state 0: softmax over (0, 0.6, 0, 0) with beta = 2.
    data = _subject([_tr(0, 0, 1, 3.0, 3), _tr(1, 0, 1, 0.0, 3)])
    theta = {"alpha": 0.2, "beta": 2.0, "gamma": 0.5}
    w = np.exp(2.0 * np.array([0.0, 0.6, 0.0, 0.0]))
    expected = np.log(0.25) + np.log(w[1] / w.sum())
    L, probs = replay_log_likelihood(data, "standard", theta,
                                     return_probabilities=True)
    assert L == pytest.approx(expected, abs=1e-12)
    assert probs[0] == pytest.approx(0.25)


def test_replay_is_pure():
    data = generate_subject(0, LinearizedNearZero(
        PolynomialMixed(0.3, 0.5, 0.3, 0.5), 1e-4), 3.0, 0.01)
    theta = {"beta": 2.0, "gamma": 0.5, "k_plus": 0.3, "l_plus": 0.5,
             "k_minus": 0.3, "l_minus": 0.5}
    assert replay_log_likelihood(data, "rsql", theta) == \
        replay_log_likelihood(data, "rsql", theta)


def test_replay_rejects_out_of_space_transitions():
    with pytest.raises(FittingError):
        SubjectData("bad", [_tr(0, 9, 0, 0.0, 0)])


# -- BIC ---------------------------------------------------------------------

def test_bic_formula():
    assert bic(-100.0, 6, 240) == pytest.approx(200.0 + 6 * np.log(240.0))
    assert bic(-100.0, 6, 240) == pytest.approx(232.8838, abs=1e-4)
    assert bic(-50.0, 0, 10) == 100.0
    with pytest.raises(FittingError):
        bic(-1.0, 3, 0)


# -- nesting -----------------------------------------------------------------

def test_exact_nesting_of_standard_in_rsql():
    data = generate_subject(1, LinearizedNearZero(
        PolynomialMixed(0.3, 0.5, 0.3, 0.5), 1e-4), 3.0, 0.01)
    theta_std = {"alpha": 0.17, "beta": 1.3, "gamma": 0.6}
    L_std = replay_log_likelihood(data, "standard", theta_std)
    L_rsql = replay_log_likelihood(data, "rsql",
                                   nested_start("rsql", theta_std))
    assert abs(L_rsql - L_std) < 1e-9
    L_eu = replay_log_likelihood(data, "eu", nested_start("eu", theta_std))
    assert abs(L_eu - L_std) < 1e-9


def test_nesting_inequality_after_fit():
    data = generate_subject(2, LinearizedNearZero(
        PolynomialMixed(0.3, 0.5, 0.3, 0.5), 1e-4), 3.0, 0.01)
    results = compare_models(data, models=("standard", "rsql"), n_starts=4)
    assert results["rsql"].log_likelihood >= \
        results["standard"].log_likelihood - 1e-9
    assert results["standard"].delta_bic == 0.0


# -- fitting -----------------------------------------------------------------

def test_fit_recovers_standard_q_roughly():
    game = build_investment_game(scaled_game_config(0.05))
    betas, gammas = [], []
    for seed in range(5):
        res = run(game, LearnerConfig("standard", 240, seed=seed,
                                      schedule=Constant(0.1), beta=2.0,
                                      discount=0.9))
        data = SubjectData(f"s{seed}",
                           res.trace.to_transitions(steps_per_round=3))
        fitres = fit(data, "standard", n_starts=8, seed=0)
        betas.append(fitres.params["beta"])
        gammas.append(fitres.params["gamma"])
    # beta is a temperature: judge it on a log scale (within an e-fold).
    assert abs(np.log(np.median(betas) / 2.0)) < 1.0
    assert abs(np.median(gammas) - 0.9) < 0.3


def test_fit_single_trial_no_crash():
    data = _subject([_tr(0, 0, 1, 1.0, 1)])
    res = fit(data, "standard", n_starts=4, seed=0)
    assert res.n_trials == 1
    assert np.isfinite(res.log_likelihood)
    assert res.bic == pytest.approx(bic(res.log_likelihood, 3, 1))


def test_fit_result_identities():
    data = generate_subject(3, LinearizedNearZero(
        PolynomialMixed(0.3, 0.5, 0.3, 0.5), 1e-4), 3.0, 0.01)
    res = fit(data, "rsql", n_starts=4, seed=1)
    assert res.bic == pytest.approx(
        -2.0 * res.log_likelihood + 6 * np.log(data.n_trials))
    assert res.trial_probabilities.shape == (data.n_trials,)
    assert np.all(res.trial_probabilities > 0)
    assert res.log_likelihood == pytest.approx(
        np.log(res.trial_probabilities).sum(), abs=1e-9)


def test_fit_respects_bounds():
    data = generate_subject(4, LinearizedNearZero(
        PolynomialMixed(0.3, 0.5, 0.3, 0.5), 1e-4), 3.0, 0.01)
    res = fit(data, "eu", n_starts=4, seed=2)
    p = res.params
    assert 1e-3 <= p["alpha"] <= 1.0
    assert 0.0 <= p["beta"] <= 50.0
    assert 0.0 <= p["gamma"] <= 0.99
    for k in ("k_plus", "k_minus"):
        assert 1e-3 <= p[k] <= 10.0
    for k in ("l_plus", "l_minus"):
        assert 0.05 <= p[k] <= 5.0


def test_gradient_stationarity_in_beta():
    # At an interior optimum the finite-difference derivative of L with
    # respect to beta is small relative to the curvature scale.
    data = generate_subject(5, LinearizedNearZero(
        PolynomialMixed(0.3, 0.5, 0.3, 0.5), 1e-4), 3.0, 0.01)
    res = fit(data, "standard", n_starts=8, seed=0)
    theta = dict(res.params)
    if 0.5 < theta["beta"] < 49.0:   # interior only
        h = 1e-4
        up = dict(theta, beta=theta["beta"] + h)
        dn = dict(theta, beta=theta["beta"] - h)
        grad = (replay_log_likelihood(data, "standard", up)
                - replay_log_likelihood(data, "standard", dn)) / (2 * h)
        assert abs(grad) < 0.5


# -- subjective means --------------------------------------------------------

def test_empirical_subjective_mean_linear():
    assert empirical_subjective_mean([1.0, -1.0], Linear()) == pytest.approx(
        0.0, abs=1e-10)


def test_empirical_subjective_mean_closed_form():
    m = empirical_subjective_mean([1.0, -1.0], ExponentialUtility(-1.0))
    assert m == pytest.approx(-LN_COSH_1, abs=1e-9)


def test_empirical_subjective_mean_single_reward():
    m = empirical_subjective_mean([2.5], ExponentialUtility(-1.0))
    assert m == pytest.approx(2.5, abs=1e-10)


def test_delta_p_signs():
    assert normalized_subjective_probability([1.0, -1.0], Linear()) == \
        pytest.approx(0.0, abs=1e-10)
    ra = normalized_subjective_probability([1.0, -1.0],
                                           ExponentialUtility(-1.0))
    rs = normalized_subjective_probability([1.0, -1.0],
                                           ExponentialUtility(1.0))
    assert ra == pytest.approx(-LN_COSH_1 / 2.0, abs=1e-9)
    assert rs == pytest.approx(LN_COSH_1 / 2.0, abs=1e-9)


def test_delta_p_rejects_constant_rewards():
    with pytest.raises(FittingError):
        normalized_subjective_probability([2.0, 2.0], Linear())


# -- estimator front-end -----------------------------------------------------

def test_estimator_api():
    data = generate_subject(6, LinearizedNearZero(
        PolynomialMixed(0.3, 0.5, 0.3, 0.5), 1e-4), 3.0, 0.01)
    model = StandardQModel(n_starts=4, seed=0)
    assert model.get_params() == {"n_starts": 4, "seed": 0, "max_iter": None}
    model.set_params(n_starts=6)
    fitted = model.fit(data)
    assert fitted is model
    assert set(model.params_) == {"alpha", "beta", "gamma"}
    probs = model.predict_proba(data)
    assert probs.shape == (data.n_trials,)
    assert model.score(data) == pytest.approx(
        model.log_likelihood_ / data.n_trials)


def test_estimator_clone_compatible():
    from sklearn.base import clone
    model = RiskSensitiveQModel(n_starts=2, seed=5)
    cloned = clone(model)
    assert cloned.get_params() == model.get_params()
