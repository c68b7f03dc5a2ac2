"""Behavioral model fitting by trajectory replay.

Each candidate model (standard Q, risk-sensitive Q, expected-utility Q)
is scored by replaying a subject's recorded transitions through its
update rule and accumulating the log softmax probability of every taken
action before that trial's update. Maximum likelihood is found by
multi-start Nelder-Mead over transformed parameters, and models are
compared by BIC relative to standard Q-learning.

In the risk-sensitive model the learning rate is absorbed by the utility
coefficients k+-, so theta = (beta, gamma, k+, l+, k-, l-); the
expected-utility model keeps an explicit alpha. The acceptance level is
fixed at 0 and polynomial utilities are linearized near zero (phi = 1e-4)
so the slope condition holds for every candidate theta.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from scipy.stats import qmc
from sklearn.base import BaseEstimator

from . import _kernels
from .mdp import load_trajectory
from .shortfall import FiniteDistribution, Shortfall
from .utility import Linear, LinearizedNearZero, PolynomialMixed

LINEARIZATION_PHI = 1e-4
ACCEPTANCE_LEVEL = 0.0

MODELS = ("standard", "rsql", "eu")
PARAM_NAMES = {
    "standard": ("alpha", "beta", "gamma"),
    "rsql": ("beta", "gamma", "k_plus", "l_plus", "k_minus", "l_minus"),
    "eu": ("alpha", "beta", "gamma", "k_plus", "l_plus", "k_minus", "l_minus"),
}
# (lower, upper, scale); log-scaled parameters are searched in log space.
PARAM_BOUNDS = {
    "alpha": (1e-3, 1.0, "log"),
    "beta": (0.0, 50.0, "linear"),
    "gamma": (0.0, 0.99, "linear"),
    "k_plus": (1e-3, 10.0, "log"),
    "l_plus": (0.05, 5.0, "log"),
    "k_minus": (1e-3, 10.0, "log"),
    "l_minus": (0.05, 5.0, "log"),
}


class FittingError(RuntimeError):
    """Replay or optimization failure."""


@dataclass(frozen=True)
class SubjectData:
    """One subject's ordered transitions on a task with known shape."""

    subject_id: str
    transitions: tuple
    n_states: int = 7
    n_actions: int = 4

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(self.transitions))
        for tr in self.transitions:
            if not (0 <= tr.state < self.n_states
                    and 0 <= tr.next_state < self.n_states
                    and 0 <= tr.action < self.n_actions):
                raise FittingError(
                    f"transition at t={tr.t} outside the task's state/action "
                    "space")

    @property
    def n_trials(self):
        return len(self.transitions)

    def arrays(self):
        st = np.array([tr.state for tr in self.transitions], dtype=np.int64)
        ac = np.array([tr.action for tr in self.transitions], dtype=np.int64)
        rw = np.array([tr.reward for tr in self.transitions])
        ns = np.array([tr.next_state for tr in self.transitions], dtype=np.int64)
        return st, ac, rw, ns

    @property
    def rewards(self):
        return np.array([tr.reward for tr in self.transitions])

    @classmethod
    def from_trajectory(cls, path, subject_id=None, n_states=7, n_actions=4):
        return cls(subject_id=subject_id or str(path),
                   transitions=load_trajectory(path),
                   n_states=n_states, n_actions=n_actions)


def _model_utility(model, theta):
    if model == "standard":
        return Linear()
    poly = PolynomialMixed(theta["k_plus"], theta["l_plus"],
                           theta["k_minus"], theta["l_minus"])
    return LinearizedNearZero(poly, LINEARIZATION_PHI)


def _replay(data, model, theta):
    if model not in MODELS:
        raise FittingError(f"unknown model {model!r}; expected one of {MODELS}")
    uparams = _kernels.flatten_utility(_model_utility(model, theta))
    algo = {"standard": _kernels.ALGO_STANDARD,
            "rsql": _kernels.ALGO_RSQL,
            "eu": _kernels.ALGO_EU}[model]
    adm = np.ones((data.n_states, data.n_actions), dtype=np.int8)
    st, ac, rw, ns = data.arrays()
    return _kernels.replay_kernel(
        st, ac, rw, ns, adm, algo, uparams, ACCEPTANCE_LEVEL,
        theta.get("alpha", 1.0), theta["beta"], theta["gamma"])


def replay_log_likelihood(data, model, theta, return_probabilities=False):
    """L(theta) = sum_t log p(a_t | s_t, theta) along the subject's own
    transitions; pure in (data, theta)."""
    log_lik, probs, status, trial = _replay(data, model, theta)
    if status != 0:
        raise FittingError(f"non-finite likelihood at trial {trial}")
    if return_probabilities:
        return float(log_lik), probs
    return float(log_lik)


def bic(log_lik, n_params, n_trials):
    """Bayesian information criterion -2 L + k ln(n); lower is better."""
    if n_trials < 1:
        raise FittingError("BIC requires n >= 1 trials")
    return -2.0 * log_lik + n_params * np.log(n_trials)


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict
    log_likelihood: float
    bic: float
    trial_probabilities: np.ndarray
    n_trials: int
    n_starts: int
    n_iterations: int
    converged: bool
    delta_bic: float = None


def _to_internal(theta, names):
    z = np.empty(len(names))
    for i, name in enumerate(names):
        lo, hi, scale = PARAM_BOUNDS[name]
        v = theta[name]
        if scale == "log":
            frac = (np.log(v) - np.log(lo)) / (np.log(hi) - np.log(lo))
        else:
            frac = (v - lo) / (hi - lo)
        frac = min(max(frac, 1e-9), 1.0 - 1e-9)
        z[i] = np.log(frac / (1.0 - frac))
    return z


def _from_internal(z, names):
    theta = {}
    for i, name in enumerate(names):
        lo, hi, scale = PARAM_BOUNDS[name]
        frac = expit(z[i])
        if scale == "log":
            theta[name] = float(np.exp(np.log(lo)
                                       + frac * (np.log(hi) - np.log(lo))))
        else:
            theta[name] = float(lo + frac * (hi - lo))
    return theta


_BAD_OBJECTIVE = 1e12


def fit(data, model, n_starts=16, seed=0, extra_starts=(), max_iter=None):
    """Maximum-likelihood fit by Nelder-Mead from quasi-random starts.

    extra_starts are parameter dicts injected as additional start points
    (compare_models uses this to seed the nested standard-Q optimum, which
    guarantees the nesting inequality L_rsql >= L_standard).
    """
    if data.n_trials < 1:
        raise FittingError("fit requires at least one trial")
    names = PARAM_NAMES[model]
    dim = len(names)

    def objective(z):
        theta = _from_internal(z, names)
        log_lik, _, status, _ = _replay(data, model, theta)
        if status != 0 or not np.isfinite(log_lik):
            return _BAD_OBJECTIVE
        return -log_lik

    starts = []
    if n_starts > 0:
        # draw a power-of-two block (Sobol balance) and keep the first n
        n_pow2 = 1 << (n_starts - 1).bit_length()
        sob = qmc.Sobol(d=dim, scramble=True, seed=seed).random(n_pow2)
        sob = sob[:n_starts]
        frac = np.clip(sob, 1e-6, 1.0 - 1e-6)
        starts.extend(np.log(frac / (1.0 - frac)))
    starts.extend(_to_internal(theta, names) for theta in extra_starts)
    if not starts:
        raise FittingError("no start points")

    best = None
    total_iter = 0
    any_converged = False
    for z0 in starts:
        res = minimize(objective, z0, method="Nelder-Mead",
                       options={"maxiter": max_iter or 400 * dim,
                                "xatol": 1e-6, "fatol": 1e-9})
        total_iter += res.nit
        any_converged = any_converged or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun >= _BAD_OBJECTIVE:
        raise FittingError("all optimizer starts failed numerically")

    theta_hat = _from_internal(best.x, names)
    log_lik, probs = replay_log_likelihood(data, model, theta_hat,
                                           return_probabilities=True)
    return FitResult(model=model, params=theta_hat,
                     log_likelihood=log_lik,
                     bic=bic(log_lik, dim, data.n_trials),
                     trial_probabilities=probs, n_trials=data.n_trials,
                     n_starts=len(starts), n_iterations=total_iter,
                     converged=any_converged)


def nested_start(model, standard_params):
    """The RSQL/EU parameter point that reproduces a standard-Q fit exactly:
    l+- = 1 and k+- = alpha (the learning rate absorbed by the slopes)."""
    theta = {"beta": standard_params["beta"], "gamma": standard_params["gamma"]}
    if model == "rsql":
        theta.update(k_plus=standard_params["alpha"],
                     k_minus=standard_params["alpha"],
                     l_plus=1.0, l_minus=1.0)
    elif model == "eu":
        theta.update(alpha=standard_params["alpha"],
                     k_plus=1.0, k_minus=1.0, l_plus=1.0, l_minus=1.0)
    else:
        raise FittingError(f"no nesting for model {model!r}")
    return theta


def compare_models(data, models=MODELS, n_starts=16, seed=0):
    """Fit every model and report BIC differences against standard Q.

    The standard fit's optimum is injected as a nested start into the
    richer models, so their likelihoods cannot fall below it.
    """
    results = {}
    base = fit(data, "standard", n_starts=n_starts, seed=seed)
    results["standard"] = replace(base, delta_bic=0.0)
    for model in models:
        if model == "standard":
            continue
        res = fit(data, model, n_starts=n_starts, seed=seed,
                  extra_starts=(nested_start(model, base.params),))
        results[model] = replace(res, delta_bic=res.bic - base.bic)
    return results


def empirical_subjective_mean(rewards, utility, tol=1e-12):
    """Root m_sub of (1/N) sum_i u(r_i - m_sub) = 0: the subjective mean of
    the empirical reward distribution at acceptance level 0."""
    rewards = np.atleast_1d(np.asarray(rewards, dtype=float))
    if rewards.size < 1:
        raise FittingError("needs at least one reward")
    dist = FiniteDistribution(rewards, np.full(rewards.size, 1.0 / rewards.size))
    shortfall = Shortfall(utility, ACCEPTANCE_LEVEL)
    return shortfall.centralized_value(dist, tol=tol)


def normalized_subjective_probability(rewards, utility, tol=1e-12):
    """Delta p = (m_sub - m_emp) / (max r - min r); positive means reward
    probabilities are overestimated (risk-seeking)."""
    rewards = np.atleast_1d(np.asarray(rewards, dtype=float))
    span = rewards.max() - rewards.min()
    if span == 0.0:
        raise FittingError("Delta p undefined: all rewards are equal")
    m_sub = empirical_subjective_mean(rewards, utility, tol=tol)
    return (m_sub - rewards.mean()) / span


# ---------------------------------------------------------------------------
# Estimator front-end
# ---------------------------------------------------------------------------

class _QModel(BaseEstimator):
    """Shared scikit-learn-style wrapper over fit()/replay()."""

    _model = None

    def __init__(self, n_starts=16, seed=0, max_iter=None):
        self.n_starts = n_starts
        self.seed = seed
        self.max_iter = max_iter

    def fit(self, X, y=None):
        result = fit(X, self._model, n_starts=self.n_starts, seed=self.seed,
                     max_iter=self.max_iter)
        self.result_ = result
        self.params_ = result.params
        self.log_likelihood_ = result.log_likelihood
        self.bic_ = result.bic
        return self

    def predict_proba(self, X):
        _, probs = replay_log_likelihood(X, self._model, self.params_,
                                         return_probabilities=True)
        return probs

    def score(self, X, y=None):
        """Mean per-trial log-likelihood at the fitted parameters."""
        return replay_log_likelihood(X, self._model, self.params_) / X.n_trials


class StandardQModel(_QModel):
    _model = "standard"


class RiskSensitiveQModel(_QModel):
    _model = "rsql"


class ExpectedUtilityQModel(_QModel):
    _model = "eu"
