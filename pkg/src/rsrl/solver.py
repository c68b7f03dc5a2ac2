"""Model-based ground truth for risk-sensitive MDPs.

Value iteration on the risk-sensitive Bellman operator
(TV)(s) = max_a U_{s,a}(R + gamma V), where U_{s,a} is the shortfall of
the joint finite distribution over (next state, reward outcome). Q values
are the raw shortfall roots, so U_{s,a}(0) = -y0 and the Lemma bounds
(-R - y0)/(1 - gamma) <= Q* <= (R - y0)/(1 - gamma) apply.
"""

from dataclasses import dataclass

import numpy as np

from .mdp import DiscreteReward, MdpError
from .shortfall import FiniteDistribution


class SolverError(RuntimeError):
    """Non-convergence or unsupported model."""


def _pair_distribution(mdp, s, a, v):
    """Joint finite distribution of r + gamma * V(s') over (s', reward atom)."""
    model = mdp.rewards[(s, a)]
    if not isinstance(model, DiscreteReward):
        raise SolverError(
            f"solver requires finite-support rewards; (s={s}, a={a}) is "
            "sampler-backed — discretize the MDP first")
    row = mdp.transitions[(s, a)]
    support = np.nonzero(row > 0)[0]
    r_vals = model.distribution.values
    r_probs = model.distribution.probabilities
    outcomes = (r_vals[None, :] + mdp.discount * v[support, None]).ravel()
    probs = (row[support, None] * r_probs[None, :]).ravel()
    return FiniteDistribution(outcomes, probs)


def q_backup(mdp, v, shortfall, tol=1e-12):
    """One shortfall evaluation per admissible pair: Q(s,a) = U_{s,a}(R + gV)."""
    q = {}
    for (s, a) in mdp.admissible_pairs():
        dist = _pair_distribution(mdp, s, a, v)
        q[(s, a)] = shortfall.value(dist, tol=tol)
    return q


def bellman_backup(mdp, v, shortfall, tol=1e-12):
    """Apply the risk-sensitive Bellman operator T once."""
    q = q_backup(mdp, v, shortfall, tol=tol)
    out = np.empty(mdp.n_states)
    for s in range(mdp.n_states):
        out[s] = max(q[(s, a)] for a in mdp.admissible[s])
    return out


@dataclass(frozen=True)
class SolveResult:
    v: np.ndarray
    q: dict
    iterations: int
    residual: float


def value_iteration(mdp, shortfall, tol=1e-8, max_iter=100000):
    """Iterate T from V = 0 until the sup-norm step guarantees
    ||V - V*|| <= tol via the gamma-contraction bound; then one final
    backup yields Q* and V*(s) = max_a Q*(s,a)."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    gamma = mdp.discount
    # A step of size d bounds the distance to the fixed point by
    # d * gamma / (1 - gamma); stop when that is <= tol.
    threshold = tol * (1.0 - gamma) / gamma if gamma > 0 else np.inf
    inner_tol = min(1e-13, threshold / 10.0) if np.isfinite(threshold) else 1e-13
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for it in range(1, max_iter + 1):
        v_next = bellman_backup(mdp, v, shortfall, tol=inner_tol)
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        if residual <= threshold:
            break
    else:
        raise SolverError(
            f"value iteration did not converge in {max_iter} sweeps "
            f"(last residual {residual:.3e})")
    q = q_backup(mdp, v, shortfall, tol=inner_tol)
    v_star = np.array([max(q[(s, a)] for a in mdp.admissible[s])
                       for s in range(mdp.n_states)])
    return SolveResult(v=v_star, q=q, iterations=it, residual=residual)


def q_bounds(mdp, shortfall):
    """Lemma bounds on Q*: ((-R - y0)/(1-g), (R - y0)/(1-g)).

    Returns (lo, hi, exact); exact is False when the reward bound is the
    approximate 6-sigma envelope of a Gaussian mixture.
    """
    r_bar, exact = mdp.reward_bound()
    y0 = shortfall.y0
    denom = 1.0 - mdp.discount
    return (-r_bar - y0) / denom, (r_bar - y0) / denom, exact


def greedy_policy(mdp, q):
    """Per-state argmax of Q with the lowest-action-id tie rule."""
    policy = np.empty(mdp.n_states, dtype=np.int64)
    for s in range(mdp.n_states):
        best_a, best_q = None, -np.inf
        for a in mdp.admissible[s]:
            if q[(s, a)] > best_q:
                best_a, best_q = a, q[(s, a)]
        policy[s] = best_a
    return policy


def finite_horizon_values(mdp, shortfall, horizon):
    """Backward recursion of the nested T-horizon objective.

    Returns [V_0, ..., V_T] with V_T = 0; V_0 is the optimal T-horizon
    risk-sensitive value from each state (T + 1 backups for horizon T).
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    values = [np.zeros(mdp.n_states)]
    for _ in range(horizon + 1):
        values.append(bellman_backup(mdp, values[-1], shortfall))
    values.reverse()
    return values
