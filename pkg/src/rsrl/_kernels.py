"""Compiled inner loops for simulation-scale learning and likelihood replay.

Utilities are flattened to a small parameter vector so a single njit
evaluator covers every supported family, optionally wrapped by a
near-zero linearization and/or a truncation layer. Rewards are packed
uniformly as Gaussian mixtures (discrete atoms become zero-std
components); one standard-normal draw happens per step regardless of
component std so the random stream is identical across reward models and
algorithms.
"""

import numpy as np
from numba import njit

from .mdp import DiscreteReward, GaussianMixtureReward
from .utility import (Entropic, ExponentialUtility, Linear, LinearizedNearZero,
                      PiecewiseLinear, PolynomialMixed, Truncated, UtilityError)

# Flattened utility layout:
#   [0] leaf code: 0 linear, 1 entropic e^{lx}, 2 centered (e^{rx}-1)/r,
#       3 piecewise, 4 polynomial mixed
#   [1..4] leaf parameters
#   [5] linearize flag, [6] phi, [7] u(0), [8] slope on [0,phi), [9] on (-phi,0)
#   [10] truncate flag, [11] lower, [12] upper, [13] slope,
#   [14] u(lower), [15] u(upper)
_PARAMS_LEN = 16

ALGO_STANDARD = 0
ALGO_RSQL = 1
ALGO_EU = 2

ALPHA_INVERSE_VISIT = 0
ALPHA_CONSTANT = 1


def flatten_utility(u):
    """Encode a (possibly wrapped) utility as the kernel parameter vector."""
    params = np.zeros(_PARAMS_LEN)
    if isinstance(u, Truncated):
        params[10] = 1.0
        params[11] = u.lower
        params[12] = u.upper
        params[13] = u.slope
        params[14] = u.u_lower
        params[15] = u.u_upper
        u = u.inner
    if isinstance(u, LinearizedNearZero):
        params[5] = 1.0
        params[6] = u.phi
        params[7] = u.u_zero
        params[8] = u.slope_pos
        params[9] = u.slope_neg
        u = u.inner
    if isinstance(u, Linear):
        params[0] = 0.0
    elif isinstance(u, Entropic):
        params[0] = 1.0
        params[1] = u.lam
    elif isinstance(u, ExponentialUtility):
        params[0] = 2.0
        params[1] = u.rate
    elif isinstance(u, PiecewiseLinear):
        params[0] = 3.0
        params[1] = u.kappa
    elif isinstance(u, PolynomialMixed):
        params[0] = 4.0
        params[1] = u.k_plus
        params[2] = u.l_plus
        params[3] = u.k_minus
        params[4] = u.l_minus
    else:
        raise UtilityError(
            f"utility {type(u).__name__} cannot be flattened for the "
            "compiled learner (supported: Linear, Entropic, "
            "ExponentialUtility, PiecewiseLinear, PolynomialMixed, "
            "optionally wrapped in LinearizedNearZero and/or Truncated)")
    return params


@njit(cache=True)
def _u_eval(params, x):
    if params[10] != 0.0:
        lo = params[11]
        hi = params[12]
        if x < lo:
            return params[14] + params[13] * (x - lo)
        if x > hi:
            return params[15] + params[13] * (x - hi)
    if params[5] != 0.0:
        phi = params[6]
        if 0.0 <= x < phi:
            return params[7] + params[8] * x
        if -phi < x < 0.0:
            return params[7] + params[9] * x
    code = int(params[0])
    if code == 0:
        return x
    if code == 1:
        return np.exp(params[1] * x)
    if code == 2:
        return np.expm1(params[1] * x) / params[1]
    if code == 3:
        if x > 0.0:
            return (1.0 - params[1]) * x
        return (1.0 + params[1]) * x
    if x >= 0.0:
        return params[1] * x ** params[2]
    return -params[3] * (-x) ** params[4]


def pack_mdp(mdp, n_actions=None):
    """Dense arrays for the run kernel: admissibility mask, cumulative
    transition rows, and flattened reward mixtures."""
    n_states = mdp.n_states
    if n_actions is None:
        n_actions = mdp.n_actions
    adm = np.zeros((n_states, n_actions), dtype=np.int8)
    pcum = np.zeros((n_states, n_actions, n_states))
    comp_off = np.zeros((n_states, n_actions), dtype=np.int64)
    comp_cnt = np.zeros((n_states, n_actions), dtype=np.int64)
    means, stds, cums = [], [], []
    offset = 0
    for s in range(n_states):
        for a in mdp.admissible[s]:
            adm[s, a] = 1
            pcum[s, a] = np.cumsum(mdp.transitions[(s, a)])
            model = mdp.rewards[(s, a)]
            if isinstance(model, DiscreteReward):
                m = model.distribution.values
                sd = np.zeros_like(m)
                w = model.distribution.probabilities
            elif isinstance(model, GaussianMixtureReward):
                m, sd, w = model.means, model.stds, model.weights
            else:
                raise TypeError(f"unsupported reward model at (s={s}, a={a})")
            comp_off[s, a] = offset
            comp_cnt[s, a] = m.size
            offset += m.size
            means.append(m)
            stds.append(sd)
            cums.append(np.cumsum(w))
    return (adm, pcum, comp_off, comp_cnt,
            np.concatenate(means), np.concatenate(stds), np.concatenate(cums))


@njit(cache=True)
def run_kernel(seed, steps, start_state, adm, pcum,
               comp_off, comp_cnt, comp_mean, comp_std, comp_cum,
               algo, uparams, x0, alpha_mode, alpha_const, beta, gamma,
               clamp, clamp_lo, clamp_hi, q_init):
    """Simulate `steps` softmax-exploration updates. Returns the Q table,
    visit counts, the full trace, and (status, step): status 0 ok,
    1 non-finite update at `step`."""
    np.random.seed(seed)
    n_states, n_actions = adm.shape
    q = np.full((n_states, n_actions), q_init)
    counts = np.zeros((n_states, n_actions), dtype=np.int64)
    t_state = np.empty(steps, dtype=np.int64)
    t_action = np.empty(steps, dtype=np.int64)
    t_reward = np.empty(steps)
    t_next = np.empty(steps, dtype=np.int64)
    t_td = np.empty(steps)
    t_update = np.empty(steps)
    weights = np.empty(n_actions)

    s = start_state
    for t in range(steps):
        # Softmax over admissible actions, max-subtracted.
        mx = -np.inf
        for a in range(n_actions):
            if adm[s, a] == 1 and q[s, a] > mx:
                mx = q[s, a]
        total = 0.0
        for a in range(n_actions):
            if adm[s, a] == 1:
                weights[a] = np.exp(beta * (q[s, a] - mx))
                total += weights[a]
            else:
                weights[a] = 0.0
        draw = np.random.random() * total
        act = -1
        acc = 0.0
        for a in range(n_actions):
            if adm[s, a] == 1:
                acc += weights[a]
                act = a
                if draw <= acc:
                    break

        # Reward: pick a mixture component, then always one normal draw.
        off = comp_off[s, act]
        cnt = comp_cnt[s, act]
        u2 = np.random.random()
        ci = off + cnt - 1
        for c in range(cnt):
            if u2 <= comp_cum[off + c]:
                ci = off + c
                break
        z = np.random.standard_normal()
        r = comp_mean[ci] + comp_std[ci] * z

        # Next state from the cumulative transition row.
        u3 = np.random.random()
        ns = n_states - 1
        for j in range(n_states):
            if u3 <= pcum[s, act, j]:
                ns = j
                break

        mx_next = -np.inf
        for a in range(n_actions):
            if adm[ns, a] == 1 and q[ns, a] > mx_next:
                mx_next = q[ns, a]
        td = r + gamma * mx_next - q[s, act]

        counts[s, act] += 1
        if alpha_mode == 0:
            alpha = 1.0 / counts[s, act]
        else:
            alpha = alpha_const

        if algo == 0:
            update = alpha * td
        elif algo == 1:
            update = alpha * (_u_eval(uparams, td) - x0)
        else:
            update = alpha * (_u_eval(uparams, r) - x0
                              + gamma * mx_next - q[s, act])
        if not np.isfinite(update):
            return (q, counts, t_state, t_action, t_reward, t_next,
                    t_td, t_update, 1, t)
        q[s, act] += update
        if clamp == 1:
            if q[s, act] < clamp_lo:
                q[s, act] = clamp_lo
            elif q[s, act] > clamp_hi:
                q[s, act] = clamp_hi

        t_state[t] = s
        t_action[t] = act
        t_reward[t] = r
        t_next[t] = ns
        t_td[t] = td
        t_update[t] = update
        s = ns
    return (q, counts, t_state, t_action, t_reward, t_next,
            t_td, t_update, 0, steps)


@njit(cache=True)
def replay_kernel(states, actions, rewards, next_states, adm,
                  algo, uparams, x0, alpha, beta, gamma):
    """Off-policy replay of recorded transitions through one model's update
    rule, accumulating the log softmax probability of each taken action
    before that trial's update. Returns (L, per-trial probs, status,
    trial); status 1 flags a non-positive probability or non-finite Q."""
    n_states, n_actions = adm.shape
    q = np.zeros((n_states, n_actions))
    n = states.shape[0]
    probs = np.empty(n)
    log_lik = 0.0
    for t in range(n):
        s = states[t]
        a = actions[t]
        r = rewards[t]
        ns = next_states[t]
        mx = -np.inf
        for b in range(n_actions):
            if adm[s, b] == 1 and q[s, b] > mx:
                mx = q[s, b]
        total = 0.0
        for b in range(n_actions):
            if adm[s, b] == 1:
                total += np.exp(beta * (q[s, b] - mx))
        p = np.exp(beta * (q[s, a] - mx)) / total
        probs[t] = p
        if not p > 0.0:
            return log_lik, probs, 1, t
        log_lik += np.log(p)

        mx_next = -np.inf
        for b in range(n_actions):
            if adm[ns, b] == 1 and q[ns, b] > mx_next:
                mx_next = q[ns, b]
        if algo == 0:
            update = alpha * (r + gamma * mx_next - q[s, a])
        elif algo == 1:
            td = r + gamma * mx_next - q[s, a]
            update = _u_eval(uparams, td) - x0
        else:
            update = alpha * (_u_eval(uparams, r) - x0
                              + gamma * mx_next - q[s, a])
        q[s, a] += update
        if not np.isfinite(q[s, a]):
            return log_lik, probs, 1, t
    return log_lik, probs, 0, n
